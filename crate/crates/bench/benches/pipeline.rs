use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slicetopo::datagen::{generate, render_depth, DataConfig, Suite};
use slicetopo::library::{prepare_views, train_from_prepared};
use slicetopo::topology::oracle::random_columnized_slice;
use slicetopo::topology::slice_diagram;
use slicetopo::vectorize::persistence_image;
use slicetopo::{normalize, EssentialPolicy, PiParams, TrainConfig, TrainingView, Weighting};

fn small_data() -> slicetopo::Dataset {
    let cfg = DataConfig {
        n_dirs: 6,
        sequence_sizes: vec![5],
        scenes_per_sequence: 1,
        ..DataConfig::default()
    };
    generate(Suite::Mixed, &cfg).expect("data generates")
}

fn topology(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let slices: Vec<_> = (0..64).map(|_| random_columnized_slice(&mut rng, 400)).collect();
    c.bench_function("slice_diagram/64 slices of up to 400 points", |b| {
        b.iter(|| {
            for (params, cs) in &slices {
                std::hint::black_box(slice_diagram(cs, params, EssentialPolicy::Drop));
            }
        })
    });
    let diagrams: Vec<_> = slices
        .iter()
        .map(|(p, cs)| slice_diagram(cs, p, EssentialPolicy::Drop))
        .collect();
    let pi = PiParams::calibrate(&diagrams, PiParams::DEFAULT_GRID, None, Weighting::LinearPersistence)
        .expect("calibration succeeds");
    c.bench_function("persistence_image/64 diagrams", |b| {
        b.iter(|| {
            for pd in &diagrams {
                std::hint::black_box(persistence_image(pd, &pi).unwrap());
            }
        })
    });
}

fn scenes(c: &mut Criterion) {
    let data = small_data();
    let spec = data.sequences[0].scenes[0].spec.clone();
    c.bench_function("render_depth/5 objects", |b| b.iter(|| render_depth(&spec).unwrap()));
    let cloud = data.train[0].cloud.clone();
    c.bench_function("normalize/training view", |b| {
        b.iter(|| normalize(&cloud, 45f64.to_radians(), [false; 3]).unwrap())
    });

    let views: Vec<TrainingView> = data
        .train
        .iter()
        .map(|t| TrainingView {
            cloud: t.cloud.clone(),
            label: t.label.clone(),
        })
        .collect();
    let cfg = TrainConfig::default();
    let prepared = prepare_views(&views, &cfg).unwrap();
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("prepare_views/66 views", |b| b.iter(|| prepare_views(&views, &cfg).unwrap()));
    group.bench_function("train_from_prepared/66 views", |b| {
        b.iter_batched(|| prepared.clone(), |p| train_from_prepared(&p, &cfg).unwrap(), BatchSize::LargeInput)
    });
    group.finish();
}

criterion_group!(benches, topology, scenes);
criterion_main!(benches);
