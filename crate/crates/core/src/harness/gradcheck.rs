//! Finite-difference checks of every analytic gradient in the stack.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::flow::{ConditionalFlow, CouplingLayer, DEFAULT_SCALE_BOUND};
use crate::numeric::{grad_check, Activation, DenseNet, Parameters};
use crate::policies::{LowerConfig, LowerDims, LowerPolicy, Td3Agent, Td3Config};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub component: &'static str,
    pub points: usize,
    pub max_rel_error: f64,
}

impl GradcheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }
}

fn jitter<P: Parameters + ?Sized, R: Rng>(p: &mut P, scale: f64, rng: &mut R) {
    for block in p.param_blocks_mut() {
        for v in block {
            *v += rng.gen_range(-scale..scale);
        }
    }
}

fn vec_in<R: Rng>(n: usize, r: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-r..r)).collect()
}

fn dense_net<R: Rng>(rng: &mut R) -> Result<f64> {
    let net = DenseNet::new(&[5, 12, 12, 3], Activation::Relu, Activation::Tanh, rng)?;
    let (x, u) = (vec_in(5, 1.0, rng), vec_in(3, 1.0, rng));
    let n = net.num_params();
    let mut point = net.flat_params();
    point.extend_from_slice(&x);
    grad_check(
        |p| {
            let mut m = net.clone();
            m.set_flat_params(&p[..n])?;
            let out = m.forward(&p[n..])?;
            let g = m.backward(&p[n..], &u)?;
            let mut grad = g.params;
            grad.extend(g.input);
            Ok((out.iter().zip(&u).map(|(a, b)| a * b).sum(), grad))
        },
        &point,
        EPS,
    )
}

fn coupling<R: Rng>(rng: &mut R) -> Result<CouplingLayer> {
    let mut layer = CouplingLayer::new(4, 3, &[10, 10], DEFAULT_SCALE_BOUND, rng)?;
    jitter(&mut layer, 0.3, rng);
    Ok(layer)
}

/// `uᵀ·layer(g; c)` as a function of one parameter range of the layer.
fn coupling_path<R: Rng>(rng: &mut R, scale_path: bool) -> Result<f64> {
    let layer = coupling(rng)?;
    let (g, c, u) = (vec_in(4, 2.0, rng), vec_in(3, 1.0, rng), vec_in(4, 1.0, rng));
    let n_scale = layer.scale_net().num_params();
    let all = layer.flat_params();
    let range = if scale_path { 0..n_scale } else { n_scale..all.len() };
    grad_check(
        |p| {
            let mut l = layer.clone();
            let mut full = all.clone();
            full[range.clone()].copy_from_slice(p);
            l.set_flat_params(&full)?;
            let tr = l.forward_trace(&g, &c)?;
            let mut grads = vec![0.0; full.len()];
            l.backward_accumulate(&tr, &u, &mut grads)?;
            let v = tr.output().iter().zip(&u).map(|(a, b)| a * b).sum();
            Ok((v, grads[range.clone()].to_vec()))
        },
        &all[range.clone()],
        EPS,
    )
}

fn coupling_inputs<R: Rng>(rng: &mut R) -> Result<f64> {
    let layer = coupling(rng)?;
    let u = vec_in(4, 1.0, rng);
    let mut point = vec_in(4, 2.0, rng);
    point.extend(vec_in(3, 1.0, rng));
    grad_check(
        |p| {
            let tr = layer.forward_trace(&p[..4], &p[4..])?;
            let mut grads = vec![0.0; layer.num_params()];
            let (dg, dc) = layer.backward_accumulate(&tr, &u, &mut grads)?;
            let v = tr.output().iter().zip(&u).map(|(a, b)| a * b).sum();
            Ok((v, [dg, dc].concat()))
        },
        &point,
        EPS,
    )
}

fn conditional_flow<R: Rng>(rng: &mut R) -> Result<f64> {
    let mut flow = ConditionalFlow::new(5, 3, &[10, 10], DEFAULT_SCALE_BOUND, rng)?;
    jitter(&mut flow, 0.3, rng);
    let u = vec_in(5, 1.0, rng);
    let n = flow.num_params();
    let mut point = flow.flat_params();
    point.extend(vec_in(5, 2.0, rng));
    point.extend(vec_in(3, 1.0, rng));
    grad_check(
        |p| {
            let mut f = flow.clone();
            f.set_flat_params(&p[..n])?;
            let (g, c) = (&p[n..n + 5], &p[n + 5..]);
            let out = f.forward(g, c)?;
            let gr = f.backward(g, c, &u)?;
            let v = out.iter().zip(&u).map(|(a, b)| a * b).sum();
            Ok((v, [gr.params, gr.goal, gr.cond].concat()))
        },
        &point,
        EPS,
    )
}

fn td3_agent<R: Rng>(rng: &mut R) -> Result<Td3Agent> {
    let mut agent = Td3Agent::new(4, vec![1.5, 0.5], 10, 2, Td3Config::default(), rng)?;
    jitter(&mut agent.actor, 0.1, rng);
    Ok(agent)
}

fn td3_critic<R: Rng>(rng: &mut R) -> Result<f64> {
    let agent = td3_agent(rng)?;
    let obs: Vec<Vec<f64>> = (0..6).map(|_| vec_in(4, 1.0, rng)).collect();
    let acts: Vec<Vec<f64>> = (0..6).map(|_| vec_in(2, 1.0, rng)).collect();
    let ys = vec_in(6, 2.0, rng);
    grad_check(
        |p| {
            let mut c = agent.critic.clone();
            c.q1.set_flat_params(p)?;
            c.q2 = c.q1.clone();
            // With q2 tied to q1 the reported mean of both losses is the q1 loss.
            let (loss, g1, _) = c.loss_and_grads(&obs, &acts, &ys)?;
            Ok((loss, g1))
        },
        &agent.critic.q1.flat_params(),
        EPS,
    )
}

fn td3_actor<R: Rng>(rng: &mut R) -> Result<f64> {
    let agent = td3_agent(rng)?;
    let obs: Vec<Vec<f64>> = (0..6).map(|_| vec_in(4, 1.0, rng)).collect();
    grad_check(
        |p| {
            let mut a = agent.clone();
            a.actor.set_flat_params(p)?;
            a.actor_objective(&obs)
        },
        &agent.actor.flat_params(),
        EPS,
    )
}

fn fdgm_actor<R: Rng>(rng: &mut R) -> Result<f64> {
    let cfg = LowerConfig {
        dims: LowerDims {
            state_dim: 6,
            action_dim: 2,
            goal_dim: 2,
            cond_dim: 3,
        },
        action_bound: vec![2.0, 2.0],
        goal_bound: vec![4.0, 4.0],
        width: 10,
        fdgm_actor_width: 8,
        hidden_layers: 2,
        scale_bound: DEFAULT_SCALE_BOUND,
        td3: Td3Config::default(),
        flow_lr: 1e-3,
        variant_model: false,
    };
    let mut lp = LowerPolicy::new(cfg, rng)?;
    jitter(&mut lp.flow, 0.3, rng);
    let states: Vec<Vec<f64>> = (0..5).map(|_| vec_in(6, 3.0, rng)).collect();
    let goals: Vec<Vec<f64>> = (0..5).map(|_| vec_in(2, 4.0, rng)).collect();
    grad_check(
        |p| {
            let mut l = lp.clone();
            l.set_fdgm_actor_params(p)?;
            l.fdgm_actor_objective(&states, &goals)
        },
        &lp.fdgm_actor_params(),
        EPS,
    )
}

type Check = fn(&mut ChaCha8Rng) -> Result<f64>;

/// Runs every check at `points` random instances.
pub fn run_gradcheck(seed: u64, points: usize) -> Result<Vec<GradcheckRow>> {
    let checks: [(&'static str, Check); 8] = [
        ("dense_net", dense_net),
        ("coupling_scale_path", |r| coupling_path(r, true)),
        ("coupling_translate_path", |r| coupling_path(r, false)),
        ("coupling_inputs", coupling_inputs),
        ("conditional_flow", conditional_flow),
        ("td3_critic_loss", td3_critic),
        ("td3_actor_objective", td3_actor),
        ("fdgm_actor_objective", fdgm_actor),
    ];
    let mut rows = Vec::with_capacity(checks.len());
    for (i, (component, check)) in checks.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64 * 7919));
        let mut worst: f64 = 0.0;
        for _ in 0..points {
            worst = worst.max(check(&mut rng)?);
        }
        rows.push(GradcheckRow {
            component,
            points,
            max_rel_error: worst,
        });
    }
    Ok(rows)
}
