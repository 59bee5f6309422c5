use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use offmorl_core::dataset::{generate_dataset, GenerateConfig, PrefSampler};
use offmorl_core::envs::{Env, LINEWORLD, TREASURE};
use offmorl_core::experiments::{evaluate_front, WbcMode};
use offmorl_core::metrics::{hypervolume, ParetoFront};
use offmorl_core::nn::{Activation, Mlp, MlpConfig, OutputActivation, Tape, Tensor};
use offmorl_core::regularizers::Family;
use offmorl_core::trainer::{TrainConfig, Trainer};
use offmorl_core::VectorReturn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mlp_forward_backward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = Mlp::new("q", MlpConfig::new(5, &[64, 64], 2, Activation::Mish, OutputActivation::None), &mut rng).unwrap();
    let x = Tensor::new(64, 5, (0..320).map(|_| rng.random::<f64>()).collect()).unwrap();
    c.bench_function("mlp 5-64-64-2 forward+backward, batch 64", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let input = tape.constant(x.clone());
            let y = net.forward(&mut tape, input, true).unwrap();
            let sq = tape.square(y);
            let loss = tape.mean_all(sq);
            tape.backward(loss).unwrap()
        })
    });
}

fn trainer_step(c: &mut Criterion) {
    let env = Env::by_name(LINEWORLD).unwrap();
    let ds = generate_dataset(
        &env,
        &GenerateConfig {
            n_traj: 50,
            quality_mix: 1.0,
            noise_scale: 0.3,
            pref_sampler: PrefSampler::UniformSimplex,
            seed: 0,
        },
    )
    .unwrap();
    let mut group = c.benchmark_group("trainer step");
    for family in Family::ALL {
        let mut trainer = Trainer::new(TrainConfig::new(LINEWORLD, family), &ds).unwrap();
        group.bench_function(family.name(), |b| b.iter(|| trainer.step().unwrap()));
    }
    group.finish();
}

fn hypervolume_2d(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let points: Vec<VectorReturn> = (0..1000)
        .map(|_| {
            let a: f64 = rng.random();
            VectorReturn::new(vec![a, (1.0 - a * a).sqrt() * rng.random_range(0.9..1.0)])
        })
        .collect();
    c.bench_function("hypervolume, 1000 points", |b| {
        b.iter_batched(
            || points.clone(),
            |p| hypervolume(&ParetoFront::with_origin(&p, 2).unwrap()).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn front_evaluation(c: &mut Criterion) {
    let env = Env::by_name(TREASURE).unwrap();
    let ds = generate_dataset(
        &env,
        &GenerateConfig {
            n_traj: 20,
            quality_mix: 1.0,
            noise_scale: 0.3,
            pref_sampler: PrefSampler::UniformSimplex,
            seed: 0,
        },
    )
    .unwrap();
    let trainer = Trainer::new(TrainConfig::new(TREASURE, Family::Mse), &ds).unwrap();
    let (policy, _) = trainer.finish();
    c.bench_function("treasure front, 101 prefs x 5 episodes", |b| {
        b.iter(|| evaluate_front(&policy, &env, 101, 5, &WbcMode::Fixed(0.6), 0).unwrap())
    });
}

criterion_group!(benches, mlp_forward_backward, trainer_step, hypervolume_2d, front_evaluation);
criterion_main!(benches);
