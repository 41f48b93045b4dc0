use criterion::{black_box, criterion_group, criterion_main, Criterion};
use flowhrl_core::correction::{relabel, RelabelStrategy};
use flowhrl_core::harness::{RunConfig, Trainer};
use flowhrl_core::{Activation, ConditionalFlow, DenseNet, Parameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = DenseNet::new(&[10, 64, 64, 2], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
    let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
    c.bench_function("dense_forward_64x64", |b| b.iter(|| net.forward(black_box(&x)).unwrap()));
    c.bench_function("dense_backward_64x64", |b| {
        b.iter(|| net.backward(black_box(&x), &[1.0, -1.0]).unwrap())
    });
}

fn flow(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut flow = ConditionalFlow::new(15, 16, &[145, 145], 2.0, &mut rng).unwrap();
    let p: Vec<f64> = (0..flow.num_params()).map(|_| rng.gen_range(-0.05..0.05)).collect();
    flow.set_flat_params(&p).unwrap();
    let g: Vec<f64> = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let cond: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a = flow.forward(&g, &cond).unwrap();
    c.bench_function("flow_forward_d15_w145", |b| {
        b.iter(|| flow.forward(black_box(&g), &cond).unwrap())
    });
    c.bench_function("flow_inverse_d15_w145", |b| {
        b.iter(|| flow.inverse(black_box(&a), &cond).unwrap())
    });
}

fn warmed_trainer() -> Trainer {
    let mut cfg = RunConfig::default();
    cfg.start_steps = 500;
    cfg.other_width = 32;
    cfg.fdgm_actor_width = 24;
    cfg.lower_batch_size = 32;
    cfg.higher_batch_size = 32;
    let mut t = Trainer::new(&cfg).unwrap();
    while t.steps() < 600 {
        t.iterate().unwrap();
    }
    t
}

fn training(c: &mut Criterion) {
    let mut t = warmed_trainer();
    c.bench_function("lower_update_batch32", |b| b.iter(|| t.update_lower(1).unwrap()));
    c.bench_function("higher_update_flow_only_batch32", |b| b.iter(|| t.update_higher().unwrap()));

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bound = t.agent.spec.goal_bound.clone();
    let std = t.cfg.hiro_std().unwrap();
    let items: Vec<_> = t.higher_buffer.iter().take(32).collect();
    for strategy in [RelabelStrategy::FlowOnly, RelabelStrategy::Hiro] {
        c.bench_function(&format!("relabel_{strategy}_batch32"), |b| {
            b.iter(|| relabel(strategy, &items, &t.agent.lower, &bound, &std, &mut rng).unwrap())
        });
    }
}

criterion_group!(benches, dense, flow, training);
criterion_main!(benches);
