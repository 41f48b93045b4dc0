//! Composite lower-level policy.
//!
//! * forward part `μ_z(s, g) -> a_z`: the TD3 actor whose action is executed;
//! * conditional part `μ_z-state(s, a_z) -> c`: compresses state and executed
//!   action into the flow's conditioning vector;
//! * flow part `μ_rnvp(g; c) -> a_rnvp`: a conditional flow over goal space,
//!   trained as a deterministic actor against its own twin critic.
//!
//! The flow action is never executed. It is stored with each transition so
//! the higher level can recover a goal by exact inversion.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::td3::{smoothing_noise, Td3Agent, Td3Config, Td3Report, TransitionBatch, TwinCritic};
use super::{concat, hidden_widths, GoalConditionedActor};
use crate::correction::LowTransition;
use crate::error::{check_finite, check_len, Error, Result};
use crate::flow::ConditionalFlow;
use crate::numeric::{polyak_update, Activation, AdamConfig, AdamState, DenseNet, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LowerDims {
    pub state_dim: usize,
    pub action_dim: usize,
    pub goal_dim: usize,
    /// Dimension of the conditioning vector `a_z-state`.
    pub cond_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerConfig {
    pub dims: LowerDims,
    pub action_bound: Vec<f64>,
    pub goal_bound: Vec<f64>,
    /// Hidden width of the forward part, conditional part and flow critics.
    pub width: usize,
    /// Hidden width of the flow's scale and translation nets.
    pub fdgm_actor_width: usize,
    pub hidden_layers: usize,
    pub scale_bound: f64,
    pub td3: Td3Config,
    /// Learning rate shared by the flow and the conditional part.
    pub flow_lr: f64,
    /// Ablation: feed the goal instead of `a_z` into the conditional part.
    pub variant_model: bool,
}

impl LowerConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        if d.state_dim == 0 || d.action_dim == 0 {
            return Err(Error::Config("state and action dims must be positive".into()));
        }
        if d.goal_dim < 2 {
            return Err(Error::Config(format!("goal_dim must be >= 2, got {}", d.goal_dim)));
        }
        if d.cond_dim == 0 {
            return Err(Error::Config("a_z_state_dim must be >= 1".into()));
        }
        if d.goal_dim > d.state_dim {
            return Err(Error::Config("goal_dim must not exceed state_dim".into()));
        }
        check_len("lower action bound", d.action_dim, self.action_bound.len())?;
        check_len("lower goal bound", d.goal_dim, self.goal_bound.len())?;
        if self.width == 0 || self.fdgm_actor_width == 0 || self.hidden_layers == 0 {
            return Err(Error::Config("network widths and depth must be positive".into()));
        }
        if self.flow_lr < 0.0 {
            return Err(Error::Config("flow_lr must be non-negative".into()));
        }
        self.td3.validate()
    }
}

/// The triple produced at every low-level step. Only `a_z` reaches the env.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerAction {
    pub a_z: Vec<f64>,
    pub a_z_state: Vec<f64>,
    pub a_rnvp: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerReport {
    pub forward: Td3Report,
    pub fdgm_critic_loss: f64,
    pub fdgm_actor_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LowerPolicy {
    pub forward_part: Td3Agent,
    pub conditional: DenseNet,
    pub conditional_target: DenseNet,
    conditional_opt: AdamState,
    pub flow: ConditionalFlow,
    pub flow_target: ConditionalFlow,
    flow_opt: AdamState,
    pub fdgm_critic: TwinCritic,
    config: LowerConfig,
    updates: u64,
}

impl LowerPolicy {
    pub fn new<R: Rng + ?Sized>(config: LowerConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.dims;
        let hidden = hidden_widths(config.width, config.hidden_layers);
        let forward_part = Td3Agent::new(
            d.state_dim + d.goal_dim,
            config.action_bound.clone(),
            config.width,
            config.hidden_layers,
            config.td3.clone(),
            rng,
        )?;
        let mut cond_widths = vec![d.state_dim + Self::cond_source_dim(&config)];
        cond_widths.extend_from_slice(&hidden);
        cond_widths.push(d.cond_dim);
        let conditional = DenseNet::new(&cond_widths, Activation::Relu, Activation::Tanh, rng)?;
        let flow = ConditionalFlow::new(
            d.goal_dim,
            d.cond_dim,
            &hidden_widths(config.fdgm_actor_width, config.hidden_layers),
            config.scale_bound,
            rng,
        )?;
        let fdgm_critic = TwinCritic::new(
            d.state_dim + d.goal_dim,
            d.goal_dim,
            &hidden,
            config.td3.critic_lr,
            rng,
        )?;
        let conditional_opt = AdamState::for_params(&conditional, AdamConfig::with_lr(config.flow_lr));
        let flow_opt = AdamState::for_params(&flow, AdamConfig::with_lr(config.flow_lr));
        Ok(Self {
            conditional_target: conditional.clone(),
            conditional,
            conditional_opt,
            flow_target: flow.clone(),
            flow,
            flow_opt,
            fdgm_critic,
            forward_part,
            config,
            updates: 0,
        })
    }

    fn cond_source_dim(config: &LowerConfig) -> usize {
        if config.variant_model {
            config.dims.goal_dim
        } else {
            config.dims.action_dim
        }
    }

    pub fn config(&self) -> &LowerConfig {
        &self.config
    }

    pub fn dims(&self) -> LowerDims {
        self.config.dims
    }

    /// Number of completed updates; doubles as the parameter version stamped
    /// on collected transitions.
    pub fn version(&self) -> u64 {
        self.updates
    }

    fn check_sg(&self, s: &[f64], g: &[f64]) -> Result<()> {
        check_len("lower policy state", self.config.dims.state_dim, s.len())?;
        check_len("lower policy goal", self.config.dims.goal_dim, g.len())
    }

    fn cond_input(&self, s: &[f64], a_z: &[f64], g: &[f64]) -> Vec<f64> {
        if self.config.variant_model {
            concat(s, g)
        } else {
            concat(s, a_z)
        }
    }

    /// `μ_z-state(s, a_z)`, or `μ_z-state(s, g)` under the variant wiring.
    pub fn conditioning(&self, s: &[f64], a_z: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        self.conditional.forward(&self.cond_input(s, a_z, g))
    }

    fn conditioning_target(&self, s: &[f64], a_z: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        self.conditional_target.forward(&self.cond_input(s, a_z, g))
    }

    /// Noise-free forward-part action `μ_z(s, g)`.
    pub fn forward_action(&self, s: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        self.check_sg(s, g)?;
        self.forward_part.act(&concat(s, g))
    }

    /// Runs the three parts. The conditioning chain uses the executed
    /// (post-noise) `a_z`.
    pub fn act<R: Rng + ?Sized>(&self, s: &[f64], g: &[f64], explore: bool, rng: &mut R) -> Result<LowerAction> {
        self.check_sg(s, g)?;
        let obs = concat(s, g);
        let a_z = if explore {
            self.forward_part.act_explore(&obs, rng)?
        } else {
            self.forward_part.act(&obs)?
        };
        self.act_with(s, g, a_z)
    }

    /// Completes the chain for an externally chosen `a_z`, e.g. uniform
    /// warm-up actions.
    pub fn act_with(&self, s: &[f64], g: &[f64], a_z: Vec<f64>) -> Result<LowerAction> {
        self.check_sg(s, g)?;
        check_len("lower policy a_z", self.config.dims.action_dim, a_z.len())?;
        let a_z_state = self.conditioning(s, &a_z, g)?;
        let a_rnvp = self.flow.forward(g, &a_z_state)?;
        check_finite(|| "lower policy activations".into(), &a_rnvp)?;
        Ok(LowerAction {
            a_z,
            a_z_state,
            a_rnvp,
        })
    }

    /// Flat parameters of the flow actor followed by the conditional part.
    pub fn fdgm_actor_params(&self) -> Vec<f64> {
        let mut p = self.flow.flat_params();
        p.extend(self.conditional.flat_params());
        p
    }

    pub fn set_fdgm_actor_params(&mut self, p: &[f64]) -> Result<()> {
        let n = self.flow.num_params();
        check_len("fdgm actor params", n + self.conditional.num_params(), p.len())?;
        self.flow.set_flat_params(&p[..n])?;
        self.conditional.set_flat_params(&p[n..])
    }

    /// Loss `-mean Q1_fdgm(s, g, μ_rnvp(g; μ_z-state(s, sg(μ_z(s, g)))))` and
    /// its gradient in [`fdgm_actor_params`](Self::fdgm_actor_params) order.
    /// No gradient reaches the forward part.
    pub fn fdgm_actor_objective(&self, states: &[Vec<f64>], goals: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        check_len("fdgm objective goals", states.len(), goals.len())?;
        let n = states.len() as f64;
        let n_flow = self.flow.num_params();
        let mut grads = vec![0.0; n_flow + self.conditional.num_params()];
        let (g_flow, g_cond) = grads.split_at_mut(n_flow);
        let mut loss = 0.0;
        for (s, g) in states.iter().zip(goals) {
            let a_z = self.forward_action(s, g)?;
            let cond_trace = self.conditional.forward_trace(&self.cond_input(s, &a_z, g))?;
            let flow_trace = self.flow.forward_trace(g, cond_trace.output())?;
            let (q, dq_da) = self.fdgm_critic.q1_action_gradient(&concat(s, g), flow_trace.output())?;
            loss -= q / n;
            let upstream: Vec<f64> = dq_da.iter().map(|v| -v / n).collect();
            let (_, d_cond) = self.flow.backward_accumulate(&flow_trace, &upstream, g_flow)?;
            self.conditional.backward_accumulate(&cond_trace, &d_cond, g_cond)?;
        }
        Ok((loss, grads))
    }

    /// Smoothed next flow action under the target networks.
    fn fdgm_target_action<R: Rng + ?Sized>(&self, s: &[f64], g: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let a_z = self.forward_part.act_target(&concat(s, g))?;
        let cond = self.conditioning_target(s, &a_z, g)?;
        let mut a = self.flow_target.forward(g, &cond)?;
        let td3 = &self.config.td3;
        let noise = smoothing_noise(&self.config.goal_bound, td3.target_noise, td3.target_noise_clip, rng);
        for (x, n) in a.iter_mut().zip(noise) {
            *x += n;
        }
        Ok(a)
    }

    /// One bottom-up lower-level update:
    /// forward part TD3 over `a_z`; flow critics over `a_rnvp` with the same
    /// intrinsic reward; then (every `policy_delay` updates) the flow and the
    /// conditional part ascend the first flow critic.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &[&LowTransition], rng: &mut R) -> Result<LowerReport> {
        if batch.is_empty() {
            return Err(Error::Config("lower update needs a nonempty batch".into()));
        }
        let mut fwd = TransitionBatch::default();
        let mut rnvp_actions = Vec::with_capacity(batch.len());
        for t in batch {
            self.check_sg(&t.s, &t.g)?;
            fwd.push(
                concat(&t.s, &t.g),
                t.a_z.clone(),
                t.r_intrinsic,
                concat(&t.s_next, &t.g_next),
                t.done,
            );
            rnvp_actions.push(t.a_rnvp.clone());
        }

        let mut fdgm_targets = Vec::with_capacity(batch.len());
        for (i, t) in batch.iter().enumerate() {
            let bootstrap = if t.done {
                0.0
            } else {
                let a_next = self.fdgm_target_action(&t.s_next, &t.g_next, rng)?;
                self.fdgm_critic.target_min(&fwd.next_obs[i], &a_next)?
            };
            fdgm_targets.push(t.r_intrinsic + self.config.td3.gamma * bootstrap);
        }

        let forward = self.forward_part.update(&fwd, rng)?;
        let fdgm_critic_loss = self.fdgm_critic.regress(&fwd.obs, &rnvp_actions, &fdgm_targets)?;
        self.updates += 1;

        let mut fdgm_actor_loss = None;
        if self.updates % self.config.td3.policy_delay == 0 {
            let states: Vec<Vec<f64>> = batch.iter().map(|t| t.s.clone()).collect();
            let goals: Vec<Vec<f64>> = batch.iter().map(|t| t.g.clone()).collect();
            let (loss, grads) = self.fdgm_actor_objective(&states, &goals)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: "fdgm actor loss".into(),
                });
            }
            check_finite(|| "fdgm actor gradient".into(), &grads)?;
            let n_flow = self.flow.num_params();
            self.flow_opt.step(&mut self.flow, &grads[..n_flow])?;
            self.conditional_opt.step(&mut self.conditional, &grads[n_flow..])?;
            let polyak = self.config.td3.polyak;
            polyak_update(&mut self.flow_target, &self.flow, polyak);
            polyak_update(&mut self.conditional_target, &self.conditional, polyak);
            self.fdgm_critic.soft_update(polyak);
            fdgm_actor_loss = Some(loss);
        }

        Ok(LowerReport {
            forward,
            fdgm_critic_loss,
            fdgm_actor_loss,
        })
    }

    pub fn set_learning_rates(&mut self, actor_lr: f64, critic_lr: f64, flow_lr: f64) {
        self.forward_part.set_learning_rates(actor_lr, critic_lr);
        self.fdgm_critic.set_learning_rate(critic_lr);
        self.flow_opt.config.learning_rate = flow_lr;
        self.conditional_opt.config.learning_rate = flow_lr;
        self.config.flow_lr = flow_lr;
        self.config.td3.actor_lr = actor_lr;
        self.config.td3.critic_lr = critic_lr;
    }
}

impl GoalConditionedActor for LowerPolicy {
    fn act_on_goal(&self, state: &[f64], goal: &[f64]) -> Result<Vec<f64>> {
        self.forward_action(state, goal)
    }
}
