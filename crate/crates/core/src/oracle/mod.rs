//! Exact values by brute-force enumeration over small edge sets, and direct
//! evaluation of the entropy, Pinsker and isoperimetric inequalities.

mod analytic;
mod enumerate;

pub use analytic::{isoperimetry_halfspace_check, isoperimetry_sweep, kl_bernoulli, kl_stopped, pinsker_slack, pinsker_sweep, standard_normal_pdf, IsoReport, KlStoppedReport, PinskerReport, ISO_C};
pub use enumerate::{
    check_genlb, check_genrevbound, check_genub, check_osss, enumerate_conditional_variance, enumerate_influence, enumerate_pivotal_derivative, enumerate_probability,
    enumerate_revealment, CondVariance, EventFn, ExactRevealment, GenlbReport, GenrevReport, GenubReport, Instance, OsssReport, TruthTable, MAX_INFLUENCE_EDGES,
    MAX_PROBABILITY_EDGES, MAX_REVEALMENT_EDGES,
};

/// Compensated (Neumaier) summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

impl std::iter::FromIterator<f64> for Neumaier {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Neumaier::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s: Neumaier = [1.0, 1e100, 1.0, -1e100].into_iter().collect();
        assert_eq!(s.value(), 2.0);
    }
}
