//! Twin Delayed DDPG: deterministic actor, two critics with clipped double-Q
//! targets, target policy smoothing, delayed actor and target updates.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{concat, hidden_widths};
use crate::error::{check_finite, check_len, Error, Result};
use crate::numeric::{polyak_update, Activation, AdamConfig, AdamState, DenseNet, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Td3Config {
    pub gamma: f64,
    /// Target retention: `target <- polyak * target + (1 - polyak) * online`.
    pub polyak: f64,
    pub policy_delay: u64,
    /// Target smoothing noise std, as a fraction of the action bound.
    pub target_noise: f64,
    /// Clip for the smoothing noise, as a fraction of the action bound.
    pub target_noise_clip: f64,
    /// Behavior noise std, as a fraction of the action bound.
    pub exploration_noise: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            polyak: 0.995,
            policy_delay: 2,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            exploration_noise: 0.1,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.polyak > 0.0 && self.polyak <= 1.0) {
            return Err(Error::Config(format!("polyak must be in (0, 1], got {}", self.polyak)));
        }
        if self.policy_delay == 0 {
            return Err(Error::Config("policy_delay must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must be in [0, 1], got {}", self.gamma)));
        }
        if self.actor_lr < 0.0 || self.critic_lr < 0.0 {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        Ok(())
    }
}

/// Column-wise batch of `(obs, action, reward, next_obs, done)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionBatch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<Vec<f64>>,
    pub dones: Vec<bool>,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn push(&mut self, obs: Vec<f64>, action: Vec<f64>, reward: f64, next_obs: Vec<f64>, done: bool) {
        self.obs.push(obs);
        self.actions.push(action);
        self.rewards.push(reward);
        self.next_obs.push(next_obs);
        self.dones.push(done);
    }

    fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Config("td3 update needs a nonempty batch".into()));
        }
        let n = self.len();
        check_len("batch actions", n, self.actions.len())?;
        check_len("batch rewards", n, self.rewards.len())?;
        check_len("batch next_obs", n, self.next_obs.len())?;
        check_len("batch dones", n, self.dones.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Td3Report {
    pub critic_loss: f64,
    /// Present only on updates that also stepped the actor.
    pub actor_loss: Option<f64>,
}

/// Two Q networks over `(obs, action)` with Polyak-tracked targets.
#[derive(Debug, Clone)]
pub struct TwinCritic {
    pub q1: DenseNet,
    pub q2: DenseNet,
    pub q1_target: DenseNet,
    pub q2_target: DenseNet,
    opt1: AdamState,
    opt2: AdamState,
    obs_dim: usize,
    action_dim: usize,
}

impl TwinCritic {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        lr: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = vec![obs_dim + action_dim];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let q1 = DenseNet::new(&widths, Activation::Relu, Activation::Identity, rng)?;
        let q2 = DenseNet::new(&widths, Activation::Relu, Activation::Identity, rng)?;
        let opt1 = AdamState::for_params(&q1, AdamConfig::with_lr(lr));
        let opt2 = AdamState::for_params(&q2, AdamConfig::with_lr(lr));
        Ok(Self {
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
            opt1,
            opt2,
            obs_dim,
            action_dim,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn input(&self, obs: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        check_len("critic observation", self.obs_dim, obs.len())?;
        check_len("critic action", self.action_dim, action.len())?;
        Ok(concat(obs, action))
    }

    pub fn q1(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        Ok(self.q1.forward(&self.input(obs, action)?)?[0])
    }

    pub fn q2(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        Ok(self.q2.forward(&self.input(obs, action)?)?[0])
    }

    /// `min(Q1', Q2')` under the target networks.
    pub fn target_min(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let x = self.input(obs, action)?;
        Ok(self.q1_target.forward(&x)?[0].min(self.q2_target.forward(&x)?[0]))
    }

    /// `(Q1(obs, action), ∂Q1/∂action)`.
    pub fn q1_action_gradient(&self, obs: &[f64], action: &[f64]) -> Result<(f64, Vec<f64>)> {
        let x = self.input(obs, action)?;
        let trace = self.q1.forward_trace(&x)?;
        let value = trace.output()[0];
        let dx = self.q1.input_gradient(&trace, &[1.0])?;
        Ok((value, dx[self.obs_dim..].to_vec()))
    }

    /// Mean squared TD error of both critics and their parameter gradients.
    pub fn loss_and_grads(
        &self,
        obs: &[Vec<f64>],
        actions: &[Vec<f64>],
        targets: &[f64],
    ) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        check_len("critic targets", obs.len(), targets.len())?;
        check_len("critic actions", obs.len(), actions.len())?;
        let n = obs.len() as f64;
        let mut g1 = vec![0.0; self.q1.num_params()];
        let mut g2 = vec![0.0; self.q2.num_params()];
        let mut loss = 0.0;
        for ((o, a), &y) in obs.iter().zip(actions).zip(targets) {
            let x = self.input(o, a)?;
            for (net, grads) in [(&self.q1, &mut g1), (&self.q2, &mut g2)] {
                let trace = net.forward_trace(&x)?;
                let err = trace.output()[0] - y;
                loss += err * err / n;
                net.backward_accumulate(&trace, &[2.0 * err / n], grads)?;
            }
        }
        Ok((loss / 2.0, g1, g2))
    }

    /// One Adam step on both critics toward fixed regression targets.
    pub fn regress(&mut self, obs: &[Vec<f64>], actions: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
        let (loss, g1, g2) = self.loss_and_grads(obs, actions, targets)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: "critic loss".into(),
            });
        }
        check_finite(|| "critic 1 gradient".into(), &g1)?;
        check_finite(|| "critic 2 gradient".into(), &g2)?;
        self.opt1.step(&mut self.q1, &g1)?;
        self.opt2.step(&mut self.q2, &g2)?;
        Ok(loss)
    }

    pub fn soft_update(&mut self, polyak: f64) {
        polyak_update(&mut self.q1_target, &self.q1, polyak);
        polyak_update(&mut self.q2_target, &self.q2, polyak);
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.opt1.config.learning_rate = lr;
        self.opt2.config.learning_rate = lr;
    }
}

/// Clipped Gaussian smoothing noise scaled per coordinate by `bound`.
pub(crate) fn smoothing_noise<R: Rng + ?Sized>(bound: &[f64], std: f64, clip: f64, rng: &mut R) -> Vec<f64> {
    bound
        .iter()
        .map(|b| {
            let z: f64 = rng.sample(StandardNormal);
            (z * std * b).clamp(-clip * b, clip * b)
        })
        .collect()
}

pub(crate) fn clamp_to(v: &mut [f64], bound: &[f64]) {
    for (x, b) in v.iter_mut().zip(bound) {
        *x = x.clamp(-b, *b);
    }
}

/// A TD3 agent with a bounded deterministic actor `obs -> bound * tanh(net(obs))`.
#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub actor: DenseNet,
    pub actor_target: DenseNet,
    actor_opt: AdamState,
    pub critic: TwinCritic,
    pub action_bound: Vec<f64>,
    pub config: Td3Config,
    updates: u64,
}

impl Td3Agent {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_bound: Vec<f64>,
        width: usize,
        hidden_layers: usize,
        config: Td3Config,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let action_dim = action_bound.len();
        let hidden = hidden_widths(width, hidden_layers);
        let mut widths = vec![obs_dim];
        widths.extend_from_slice(&hidden);
        widths.push(action_dim);
        let actor = DenseNet::new(&widths, Activation::Relu, Activation::Tanh, rng)?;
        let critic = TwinCritic::new(obs_dim, action_dim, &hidden, config.critic_lr, rng)?;
        let actor_opt = AdamState::for_params(&actor, AdamConfig::with_lr(config.actor_lr));
        Ok(Self {
            actor_target: actor.clone(),
            actor,
            actor_opt,
            critic,
            action_bound,
            config,
            updates: 0,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_bound.len()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    fn scale(&self, y: Vec<f64>) -> Vec<f64> {
        y.into_iter().zip(&self.action_bound).map(|(v, b)| v * b).collect()
    }

    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let y = self.actor.forward(obs)?;
        let a = self.scale(y);
        check_finite(|| "actor output".into(), &a)?;
        Ok(a)
    }

    pub fn act_target(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.scale(self.actor_target.forward(obs)?))
    }

    /// Deterministic action plus Gaussian behavior noise, clamped to bounds.
    pub fn act_explore<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut a = self.act(obs)?;
        for (x, b) in a.iter_mut().zip(&self.action_bound) {
            let z: f64 = rng.sample(StandardNormal);
            *x += z * self.config.exploration_noise * b;
        }
        clamp_to(&mut a, &self.action_bound);
        Ok(a)
    }

    /// Smoothed target action for the TD target.
    pub fn smoothed_target_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut a = self.act_target(obs)?;
        let noise = smoothing_noise(
            &self.action_bound,
            self.config.target_noise,
            self.config.target_noise_clip,
            rng,
        );
        for (x, n) in a.iter_mut().zip(noise) {
            *x += n;
        }
        clamp_to(&mut a, &self.action_bound);
        Ok(a)
    }

    /// TD targets `r + γ (1 - done) min(Q1', Q2')(s', ã')`.
    pub fn td_targets<R: Rng + ?Sized>(&self, batch: &TransitionBatch, rng: &mut R) -> Result<Vec<f64>> {
        let mut ys = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            let bootstrap = if batch.dones[i] {
                0.0
            } else {
                let a_next = self.smoothed_target_action(&batch.next_obs[i], rng)?;
                self.critic.target_min(&batch.next_obs[i], &a_next)?
            };
            ys.push(batch.rewards[i] + self.config.gamma * bootstrap);
        }
        Ok(ys)
    }

    /// Actor loss `-mean Q1(obs, actor(obs))` and its gradient w.r.t. the
    /// actor parameters.
    pub fn actor_objective(&self, obs: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        let n = obs.len() as f64;
        let mut grads = vec![0.0; self.actor.num_params()];
        let mut loss = 0.0;
        for o in obs {
            let trace = self.actor.forward_trace(o)?;
            let a = self.scale(trace.output().to_vec());
            let (q, dq_da) = self.critic.q1_action_gradient(o, &a)?;
            loss -= q / n;
            let upstream: Vec<f64> = dq_da
                .iter()
                .zip(&self.action_bound)
                .map(|(g, b)| -g * b / n)
                .collect();
            self.actor.backward_accumulate(&trace, &upstream, &mut grads)?;
        }
        Ok((loss, grads))
    }

    pub fn update<R: Rng + ?Sized>(&mut self, batch: &TransitionBatch, rng: &mut R) -> Result<Td3Report> {
        batch.validate()?;
        let targets = self.td_targets(batch, rng)?;
        let critic_loss = self.critic.regress(&batch.obs, &batch.actions, &targets)?;
        self.updates += 1;

        let mut actor_loss = None;
        if self.updates % self.config.policy_delay == 0 {
            let (loss, grads) = self.actor_objective(&batch.obs)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: "actor loss".into(),
                });
            }
            self.actor_opt.step(&mut self.actor, &grads)?;
            polyak_update(&mut self.actor_target, &self.actor, self.config.polyak);
            self.critic.soft_update(self.config.polyak);
            actor_loss = Some(loss);
        }
        Ok(Td3Report {
            critic_loss,
            actor_loss,
        })
    }

    pub fn set_learning_rates(&mut self, actor_lr: f64, critic_lr: f64) {
        self.config.actor_lr = actor_lr;
        self.config.critic_lr = critic_lr;
        self.actor_opt.config.learning_rate = actor_lr;
        self.critic.set_learning_rate(critic_lr);
    }
}
