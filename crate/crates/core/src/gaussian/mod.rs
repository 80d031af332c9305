//! Planar Gaussian fields f = q ⋆ W on a mesh, their box decomposition and
//! excursion-set events. Only d = 2 is simulated.

pub mod events;
pub mod field;
pub mod kernel;
pub mod odecom;

pub use events::{ball_window, crossing_in, crossing_window, dual_crossing_in, field_crossing_event, field_one_arm, field_two_arm};
pub use field::{box_component, excursion_set, moving_average_sample, resample_boxes, white_noise_grid, BoxPartition, CellMask, FieldSample, FieldWorld, NoiseGrid, Window};
pub use kernel::Kernel;
pub use odecom::orthogonal_decomposition_check;
