use criterion::{black_box, criterion_group, criterion_main, Criterion};
use perclab::estimators::{KernelSpec, ModelSpec};
use perclab::events::{crossing_event, one_arm_radius};
use perclab::explorer::{BondAlgorithm, FieldAlgorithm};
use perclab::oracle::{enumerate_probability, Instance};
use perclab::rng::lane;
use perclab::{LatticeBox, LazyBonds, ReplicaStream};

fn bond(c: &mut Criterion) {
    let lat = LatticeBox::cube(2, 128).unwrap();
    let mut i = 0u64;
    c.bench_function("one-arm radius search R=128 p=1/2", |b| {
        b.iter(|| {
            i += 1;
            let s = LazyBonds::new(&lat, 0.5, ReplicaStream::new(1, i)).unwrap();
            black_box(one_arm_radius(&s, 128).unwrap())
        })
    });
    let cross = LatticeBox::crossing(2, 1.0, 32).unwrap();
    c.bench_function("crossing R=32 p=1/2", |b| {
        b.iter(|| {
            i += 1;
            let s = LazyBonds::new(&cross, 0.5, ReplicaStream::new(2, i)).unwrap();
            black_box(crossing_event(&s, 1.0, 32).unwrap())
        })
    });
    let alg = BondAlgorithm::interface(1.0, 32);
    c.bench_function("interface algorithm R=32", |b| {
        b.iter(|| {
            i += 1;
            let s = LazyBonds::new(&cross, 0.5, ReplicaStream::new(3, i)).unwrap();
            black_box(alg.run(&s, 0).unwrap().len())
        })
    });
}

fn oracle(c: &mut Criterion) {
    let inst = Instance::crossing_rect(4, 3).unwrap();
    c.bench_function("enumerate 4x3 crossing (17 edges)", |b| b.iter(|| black_box(enumerate_probability(&inst, 0.5).unwrap())));
}

fn field(c: &mut Criterion) {
    let m = ModelSpec::Gaussian { kernel: KernelSpec::bargmann_fock(0.25, Some(2.0)), level: 0.0, scale: None };
    let w = m.world(16.0, 16.0).unwrap();
    let mut i = 0u64;
    c.bench_function("field sample 16x16 mesh 0.25", |b| {
        b.iter(|| {
            i += 1;
            let noise = w.sample_noise(&ReplicaStream::new(4, i)).unwrap();
            black_box(w.mask(&noise, 0.0).unwrap())
        })
    });
    let alg = FieldAlgorithm::LevelLine { k: 1.0, r: 16.0 };
    c.bench_function("level-line algorithm R=16", |b| {
        b.iter(|| {
            i += 1;
            let st = ReplicaStream::new(5, i);
            let noise = w.sample_noise(&st).unwrap();
            let aux = alg.draw_aux(&w, &mut st.rng(lane::AUX));
            black_box(alg.run(&w, &noise, 0.0, aux).unwrap().len())
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bond, oracle, field
}
criterion_main!(benches);
