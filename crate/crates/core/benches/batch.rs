use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use darqn::agent::{Architecture, Model, ModelSpec, Profile};
use darqn::envs::{EnvKind, Frame};
use darqn::evalviz::{evaluate, EvalBudget, Policy};
use darqn::parallel::Execution;
use darqn::training::{minibatch_gradients, AdvantageSign, LossConfig, Segment};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frame(rng: &mut ChaCha8Rng) -> Frame {
    Frame::from_values(24, 24, (0..576).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

fn segments(n: usize, rng: &mut ChaCha8Rng) -> Vec<Segment> {
    (0..n)
        .map(|_| Segment {
            frames: (0..4).map(|_| frame(rng)).collect(),
            actions: (0..4).map(|_| rng.gen_range(0..3)).collect(),
            rewards: vec![0.0, 0.0, 0.0, 1.0],
            terminals: vec![false; 4],
            bootstrap: Some(frame(rng)),
        })
        .collect()
}

fn modes() -> Vec<(&'static str, Execution)> {
    let mut m = vec![("sequential", Execution::Sequential)];
    if Execution::available() == Execution::Parallel {
        m.push(("parallel", Execution::Parallel));
    }
    m
}

fn bench_minibatch(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cfg = LossConfig {
        gamma: 0.99,
        mix_prob: 0.5,
        advantage_sign: AdvantageSign::Prose,
        entropy_coef: 0.0,
    };
    let mut group = c.benchmark_group("minibatch_gradients");
    group.sample_size(10);
    for arch in [
        Architecture::Dqn,
        Architecture::DarqnSoft,
        Architecture::DarqnHard,
    ] {
        let spec = ModelSpec::from_profile(arch, Profile::Small, 3);
        let model = Model::init(spec.clone(), &mut rng).unwrap();
        let target = Model::init(spec, &mut rng).unwrap();
        let batch = segments(32, &mut rng);
        let seeds: Vec<u64> = (0..32).collect();
        for (name, exec) in modes() {
            group.bench_with_input(BenchmarkId::new(name, arch), &exec, |b, &exec| {
                b.iter(|| {
                    minibatch_gradients(&model, &target, &batch, &seeds, &cfg, exec, true).unwrap()
                })
            });
        }
    }
    group.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = Model::init(
        ModelSpec::from_profile(Architecture::DarqnSoft, Profile::Small, 3),
        &mut rng,
    )
    .unwrap();
    let env = EnvKind::Catch.make(24).unwrap();
    let policy = Policy::Agent {
        model: &model,
        epsilon: 0.05,
        mix_prob: 0.5,
    };
    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_function(name, |b| {
            b.iter(|| evaluate(policy, env.as_ref(), EvalBudget::Episodes(16), 7, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_minibatch, bench_evaluate);
criterion_main!(benches);
