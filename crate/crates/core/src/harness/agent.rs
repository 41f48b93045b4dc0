//! The two-level agent, its named parameter blocks, and evaluation rollouts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use crate::envs::{scripted_action, EnvKind, EnvSpec, PointEnv};
use crate::error::{Error, Result};
use crate::numeric::{DenseNet, InputAffine, Parameters};
use crate::policies::{goal_transition, HigherPolicy, LowerPolicy, Td3Agent, TwinCritic};

#[derive(Debug, Clone)]
pub struct HierarchicalAgent {
    pub lower: LowerPolicy,
    pub higher: HigherPolicy,
    pub spec: EnvSpec,
}

fn critic_blocks<'a>(prefix: &str, c: &'a TwinCritic, out: &mut Vec<(String, &'a dyn Parameters)>) {
    out.push((format!("{prefix}.q1"), &c.q1));
    out.push((format!("{prefix}.q2"), &c.q2));
    out.push((format!("{prefix}.q1_target"), &c.q1_target));
    out.push((format!("{prefix}.q2_target"), &c.q2_target));
}

fn td3_blocks<'a>(prefix: &str, a: &'a Td3Agent, out: &mut Vec<(String, &'a dyn Parameters)>) {
    out.push((format!("{prefix}.actor"), &a.actor));
    out.push((format!("{prefix}.actor_target"), &a.actor_target));
    critic_blocks(&format!("{prefix}.critic"), &a.critic, out);
}

fn critic_blocks_mut<'a>(c: &'a mut TwinCritic, out: &mut Vec<&'a mut dyn Parameters>) {
    out.push(&mut c.q1);
    out.push(&mut c.q2);
    out.push(&mut c.q1_target);
    out.push(&mut c.q2_target);
}

fn td3_blocks_mut<'a>(a: &'a mut Td3Agent, out: &mut Vec<&'a mut dyn Parameters>) {
    out.push(&mut a.actor);
    out.push(&mut a.actor_target);
    critic_blocks_mut(&mut a.critic, out);
}

fn concat(parts: &[&InputAffine]) -> InputAffine {
    InputAffine {
        shift: parts.iter().flat_map(|p| p.shift.iter().copied()).collect(),
        scale: parts.iter().flat_map(|p| p.scale.iter().copied()).collect(),
    }
}

fn set_critic(c: &mut TwinCritic, affine: &InputAffine) -> Result<()> {
    for net in [&mut c.q1, &mut c.q2, &mut c.q1_target, &mut c.q2_target] {
        net.set_input_affine(affine.clone())?;
    }
    Ok(())
}

fn set_td3(a: &mut Td3Agent, actor: &InputAffine, critic: &InputAffine) -> Result<()> {
    a.actor.set_input_affine(actor.clone())?;
    a.actor_target.set_input_affine(actor.clone())?;
    set_critic(&mut a.critic, critic)
}

impl HierarchicalAgent {
    pub fn new<R: Rng + ?Sized>(cfg: &RunConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.env_spec()?;
        let lower = LowerPolicy::new(cfg.lower_config()?, rng)?;
        let higher = HigherPolicy::new(
            spec.state_dim,
            spec.goal_bound.clone(),
            cfg.other_width,
            cfg.hidden_layers,
            cfg.c,
            cfg.higher_td3(),
            rng,
        )?;
        let mut agent = Self { lower, higher, spec };
        let state = match cfg.env_kind()? {
            Some(kind) => kind.state_normalization(),
            None => InputAffine {
                shift: vec![0.0; agent.spec.state_dim],
                scale: vec![1.0; agent.spec.state_dim],
            },
        };
        agent.normalize_inputs(&state)?;
        Ok(agent)
    }

    /// Installs fixed input scaling on every non-flow network: `state` for
    /// the state part, `1 / bound` for goal and action parts.
    pub fn normalize_inputs(&mut self, state: &InputAffine) -> Result<()> {
        let inv = |b: &[f64]| InputAffine {
            shift: vec![0.0; b.len()],
            scale: b.iter().map(|v| 1.0 / v).collect(),
        };
        let goal = inv(&self.spec.goal_bound);
        let action = inv(&self.spec.action_bound);
        let s_g = concat(&[state, &goal]);
        let s_g_a = concat(&[state, &goal, &action]);
        let s_g_g = concat(&[state, &goal, &goal]);
        let lp = &mut self.lower;
        set_td3(&mut lp.forward_part, &s_g, &s_g_a)?;
        let cond = if lp.config().variant_model { s_g.clone() } else { concat(&[state, &action]) };
        lp.conditional.set_input_affine(cond.clone())?;
        lp.conditional_target.set_input_affine(cond)?;
        set_critic(&mut lp.fdgm_critic, &s_g_g)?;
        set_td3(&mut self.higher.agent, state, &s_g)
    }

    /// Every network (online and target) with a stable name, in checkpoint
    /// order.
    pub fn named_modules(&self) -> Vec<(String, &dyn Parameters)> {
        let mut out: Vec<(String, &dyn Parameters)> = Vec::new();
        let lp = &self.lower;
        td3_blocks("lower.forward", &lp.forward_part, &mut out);
        out.push(("lower.conditional".into(), &lp.conditional));
        out.push(("lower.conditional_target".into(), &lp.conditional_target));
        out.push(("lower.flow".into(), &lp.flow));
        out.push(("lower.flow_target".into(), &lp.flow_target));
        critic_blocks("lower.fdgm_critic", &lp.fdgm_critic, &mut out);
        td3_blocks("higher", &self.higher.agent, &mut out);
        out
    }

    /// Mutable views in the same order as [`Self::named_modules`].
    pub fn modules_mut(&mut self) -> Vec<&mut dyn Parameters> {
        let mut out: Vec<&mut dyn Parameters> = Vec::new();
        let lp = &mut self.lower;
        td3_blocks_mut(&mut lp.forward_part, &mut out);
        out.push(&mut lp.conditional);
        out.push(&mut lp.conditional_target);
        out.push(&mut lp.flow);
        out.push(&mut lp.flow_target);
        critic_blocks_mut(&mut lp.fdgm_critic, &mut out);
        td3_blocks_mut(&mut self.higher.agent, &mut out);
        out
    }

    /// Hidden-layer widths of each online network, keyed by module name.
    pub fn layer_widths(&self) -> Vec<(String, Vec<usize>)> {
        let dense = |net: &DenseNet| net.widths().to_vec();
        let lp = &self.lower;
        let mut out = vec![
            ("lower.forward.actor".to_string(), dense(&lp.forward_part.actor)),
            ("lower.forward.critic.q1".into(), dense(&lp.forward_part.critic.q1)),
            ("lower.conditional".into(), dense(&lp.conditional)),
            ("lower.fdgm_critic.q1".into(), dense(&lp.fdgm_critic.q1)),
            ("higher.actor".into(), dense(&self.higher.agent.actor)),
            ("higher.critic.q1".into(), dense(&self.higher.agent.critic.q1)),
        ];
        for (i, layer) in lp.flow.layers().iter().enumerate() {
            out.push((format!("lower.flow.layer{i}.scale"), dense(layer.scale_net())));
            out.push((format!("lower.flow.layer{i}.translate"), dense(layer.translate_net())));
        }
        out
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, m) in self.named_modules() {
            if m.param_blocks().iter().any(|b| b.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite { context: format!("parameters of {name}") });
            }
        }
        Ok(())
    }
}

/// Something that picks environment actions during an evaluation episode.
pub trait Controller {
    fn begin_episode(&mut self) {}

    fn act(&mut self, t: usize, state: &[f64]) -> Result<Vec<f64>>;
}

/// Noise-free hierarchical policy: a fresh goal every `c` steps, the goal
/// transition in between.
pub struct AgentController<'a> {
    agent: &'a HierarchicalAgent,
    prev: Option<(Vec<f64>, Vec<f64>)>,
}

impl<'a> AgentController<'a> {
    pub fn new(agent: &'a HierarchicalAgent) -> Self {
        Self { agent, prev: None }
    }
}

impl Controller for AgentController<'_> {
    fn begin_episode(&mut self) {
        self.prev = None;
    }

    fn act(&mut self, t: usize, state: &[f64]) -> Result<Vec<f64>> {
        let goal = if self.agent.higher.emits_at(t) {
            self.agent.higher.agent.act(state)?
        } else {
            let (s_prev, g_prev) = self
                .prev
                .as_ref()
                .ok_or_else(|| Error::Config("goal transition needs the previous step".into()))?;
            goal_transition(s_prev, g_prev, state)?
        };
        let a = self.agent.lower.forward_action(state, &goal)?;
        self.prev = Some((state.to_vec(), goal));
        Ok(a)
    }
}

/// Uniform random actions within the bounds.
pub struct RandomController {
    bound: Vec<f64>,
    rng: ChaCha8Rng,
}

impl RandomController {
    pub fn new(bound: Vec<f64>, seed: u64) -> Self {
        Self {
            bound,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Controller for RandomController {
    fn act(&mut self, _t: usize, _state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.bound.iter().map(|b| self.rng.gen_range(-*b..=*b)).collect())
    }
}

/// The hand-written waypoint controller.
pub struct ScriptedController(pub EnvKind);

impl Controller for ScriptedController {
    fn act(&mut self, _t: usize, state: &[f64]) -> Result<Vec<f64>> {
        Ok(scripted_action(self.0, state))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeResult {
    pub episode_return: f64,
    pub success: bool,
    pub steps: usize,
}

pub fn run_episode(env: &mut PointEnv, seed: u64, controller: &mut dyn Controller) -> Result<EpisodeResult> {
    let mut s = env.reset(seed);
    controller.begin_episode();
    let mut total = 0.0;
    let mut t = 0;
    loop {
        let a = controller.act(t, &s)?;
        let out = env.step(&a)?;
        total += out.reward;
        t += 1;
        s = out.state;
        if out.done {
            return Ok(EpisodeResult {
                episode_return: total,
                success: out.success,
                steps: t,
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub average_reward: f64,
    pub success_rate: f64,
    pub episodes: usize,
}

/// Seed of evaluation episode `i` under `eval_seed`; independent of the
/// training episode seeds.
pub fn eval_episode_seed(eval_seed: u64, i: usize) -> u64 {
    eval_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(0xD1B5_4A32_D192_ED03 ^ i as u64)
}

pub fn evaluate(kind: EnvKind, controller: &mut dyn Controller, episodes: usize, seed: u64) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be positive".into()));
    }
    let mut env = PointEnv::new(kind);
    let mut total = 0.0;
    let mut successes = 0;
    for i in 0..episodes {
        let r = run_episode(&mut env, eval_episode_seed(seed, i), controller)?;
        total += r.episode_return;
        successes += r.success as usize;
    }
    Ok(EvalSummary {
        average_reward: total / episodes as f64,
        success_rate: successes as f64 / episodes as f64,
        episodes,
    })
}
