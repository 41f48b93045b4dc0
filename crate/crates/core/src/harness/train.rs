//! The training loop: collect a `c`-step window, update the lower level,
//! relabel, update the higher level, evaluate periodically.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agent::{evaluate, AgentController, EvalSummary, HierarchicalAgent};
use super::checkpoint;
use super::config::RunConfig;
use super::metrics::{CsvLog, LossRow, Mean, MetricsRow, Phase, LOSS_HEADER, METRICS_HEADER};
use crate::correction::{
    flow_residual, recomputed_conditioning, relabel, BufferDump, HighTransition, LowTransition, RelabelStrategy, ReplayBuffer, TransitionDims,
};
use crate::envs::{EnvKind, PointEnv};
use crate::error::{io_err, Error, Result};
use crate::policies::{goal_transition, intrinsic_reward, TransitionBatch};

pub const METRICS_FILE: &str = "metrics.csv";
pub const LOSSES_FILE: &str = "losses.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.fhrl";
pub const BUFFER_FILE: &str = "buffer.json";
pub const CONFIG_FILE: &str = "config.conf";

#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub metrics: PathBuf,
    pub losses: PathBuf,
    pub checkpoint: PathBuf,
    pub buffer: PathBuf,
    pub final_eval: Option<EvalSummary>,
    pub steps: u64,
}

/// Independent random streams derived from the run seed.
struct Streams {
    init: ChaCha8Rng,
    explore: ChaCha8Rng,
    update: ChaCha8Rng,
    relabel: ChaCha8Rng,
    lower_buffer: u64,
    higher_buffer: u64,
    episodes: u64,
    eval: u64,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let mut next = || ChaCha8Rng::seed_from_u64(master.gen());
        let (init, explore, update, relabel) = (next(), next(), next(), next());
        let mut master = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
        Self {
            init,
            explore,
            update,
            relabel,
            lower_buffer: master.gen(),
            higher_buffer: master.gen(),
            episodes: master.gen(),
            eval: master.gen(),
        }
    }
}

/// Accumulates losses and relabel statistics between evaluation rows.
#[derive(Default)]
struct Window {
    lower_critic: Mean,
    lower_actor: Mean,
    fdgm_critic: Mean,
    fdgm_actor: Mean,
    higher_critic: Mean,
    higher_actor: Mean,
    residual_stored: Mean,
    residual_relabeled: Mean,
    goal_drift: Mean,
    fallbacks: u64,
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub struct Trainer {
    pub cfg: RunConfig,
    pub agent: HierarchicalAgent,
    kind: EnvKind,
    env: PointEnv,
    state: Vec<f64>,
    pub lower_buffer: ReplayBuffer<LowTransition>,
    pub higher_buffer: ReplayBuffer<HighTransition>,
    streams: Streams,
    episode: u64,
    steps: u64,
    iteration: u64,
    hiro_std: Vec<f64>,
    stats: Window,
}

impl Trainer {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let kind = cfg.env_kind()?.ok_or_else(|| {
            Error::Config(format!("env {} has no dynamics and cannot be trained", cfg.env))
        })?;
        let mut streams = Streams::new(cfg.seed);
        let agent = HierarchicalAgent::new(cfg, &mut streams.init)?;
        let dims = TransitionDims::new(agent.lower.dims(), cfg.c);
        let mut env = PointEnv::new(kind);
        let state = env.reset(streams.episodes);
        Ok(Self {
            lower_buffer: ReplayBuffer::new(cfg.lower_buffer_capacity, dims, streams.lower_buffer)?,
            higher_buffer: ReplayBuffer::new(cfg.higher_buffer_capacity, dims, streams.higher_buffer)?,
            hiro_std: cfg.hiro_std()?,
            cfg: cfg.clone(),
            agent,
            kind,
            env,
            state,
            streams,
            episode: 0,
            steps: 0,
            iteration: 0,
            stats: Window::default(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn warming_up(&self) -> bool {
        self.steps < self.cfg.start_steps
    }

    /// Collects one window of at most `c` steps (shorter at the end of an
    /// episode or of the step budget) and stores its transitions.
    pub fn collect_window(&mut self) -> Result<usize> {
        let warm = self.warming_up();
        let rng = &mut self.streams.explore;
        let spec = &self.agent.spec;
        let mut s = self.state.clone();
        let mut g = if warm {
            spec.goal_bound.iter().map(|b| rng.gen_range(-*b..=*b)).collect()
        } else {
            self.agent.higher.act(&s, 0, None, true, rng)?
        };
        let mut window = HighTransition {
            s_seq: Vec::with_capacity(self.cfg.c),
            g_seq: Vec::with_capacity(self.cfg.c),
            a_z_seq: Vec::with_capacity(self.cfg.c),
            a_z_state_seq: Vec::with_capacity(self.cfg.c),
            a_rnvp_seq: Vec::with_capacity(self.cfg.c),
            reward_sum: 0.0,
            s_end: Vec::new(),
            done: false,
        };
        let mut episode_over = false;
        while window.s_seq.len() < self.cfg.c && self.steps < self.cfg.total_steps {
            let action = if warm {
                let a_z = spec.action_bound.iter().map(|b| rng.gen_range(-*b..=*b)).collect();
                self.agent.lower.act_with(&s, &g, a_z)?
            } else {
                self.agent.lower.act(&s, &g, true, rng)?
            };
            let out = self.env.step(&action.a_z)?;
            let g_next = goal_transition(&s, &g, &out.state)?;
            self.lower_buffer.push(LowTransition {
                s: s.clone(),
                g: g.clone(),
                a_z: action.a_z.clone(),
                a_z_state: action.a_z_state.clone(),
                a_rnvp: action.a_rnvp.clone(),
                r_intrinsic: intrinsic_reward(&s, &g, &out.state)?,
                s_next: out.state.clone(),
                g_next: g_next.clone(),
                done: false,
                param_version: self.agent.lower.version(),
            })?;
            window.s_seq.push(s);
            window.g_seq.push(g);
            window.a_z_seq.push(action.a_z);
            window.a_z_state_seq.push(action.a_z_state);
            window.a_rnvp_seq.push(action.a_rnvp);
            window.reward_sum += out.reward;
            self.steps += 1;
            s = out.state;
            g = g_next;
            if out.done {
                window.done = out.success;
                episode_over = true;
                break;
            }
        }
        let len = window.s_seq.len();
        if len == 0 {
            return Ok(0);
        }
        window.s_end = s.clone();
        self.higher_buffer.push(window)?;
        self.state = if episode_over {
            self.episode += 1;
            self.env.reset(self.streams.episodes.wrapping_add(self.episode))
        } else {
            s
        };
        Ok(len)
    }

    /// `n` lower-level updates; returns the loss row for the iteration.
    pub fn update_lower(&mut self, n: usize) -> Result<Option<LossRow>> {
        if n == 0 || self.lower_buffer.is_empty() {
            return Ok(None);
        }
        let (mut critic, mut actor, mut fc, mut fa) = (Mean::default(), Mean::default(), Mean::default(), Mean::default());
        for _ in 0..n {
            let batch = self.lower_buffer.sample(self.cfg.lower_batch_size);
            let report = self.agent.lower.update(&batch, &mut self.streams.update)?;
            critic.add(report.forward.critic_loss);
            actor.add_opt(report.forward.actor_loss);
            fc.add(report.fdgm_critic_loss);
            fa.add_opt(report.fdgm_actor_loss);
        }
        self.stats.lower_critic.add_opt(critic.get());
        self.stats.lower_actor.add_opt(actor.get());
        self.stats.fdgm_critic.add_opt(fc.get());
        self.stats.fdgm_actor.add_opt(fa.get());
        Ok(Some(LossRow {
            iteration: self.iteration,
            step: self.steps,
            phase: Phase::Lower,
            critic_loss: critic.get().unwrap_or(f64::NAN),
            actor_loss: actor.get(),
            fdgm_critic_loss: fc.get(),
            fdgm_actor_loss: fa.get(),
        }))
    }

    /// Relabels a sampled batch with the configured strategy (clamped to the
    /// goal bounds) and runs one higher-level update.
    pub fn update_higher(&mut self) -> Result<Option<LossRow>> {
        if self.higher_buffer.is_empty() {
            return Ok(None);
        }
        let idx = self.higher_buffer.sample_indices(self.cfg.higher_batch_size);
        let batch: Vec<&HighTransition> = idx.iter().map(|&i| self.higher_buffer.get(i).unwrap()).collect();
        let lp = &self.agent.lower;
        let bound = self.agent.spec.goal_bound.clone();
        let outcome = relabel(self.cfg.relabel, &batch, lp, &bound, &self.hiro_std, &mut self.streams.relabel)?;
        self.stats.fallbacks += outcome.fallbacks as u64;
        let mut td = TransitionBatch::default();
        for (item, mut goal) in batch.iter().zip(outcome.goals) {
            let cond = if self.cfg.relabel == RelabelStrategy::FlowFull {
                recomputed_conditioning(lp, item)?
            } else {
                item.a_z_state_seq[0].clone()
            };
            let a = &item.a_rnvp_seq[0];
            self.stats.residual_stored.add(flow_residual(lp, a, item.stored_goal(), &cond)?);
            self.stats.residual_relabeled.add(flow_residual(lp, a, &goal, &cond)?);
            for (x, b) in goal.iter_mut().zip(&bound) {
                *x = x.clamp(-b, *b);
            }
            self.stats.goal_drift.add(l2(&goal, item.stored_goal()));
            td.push(
                item.start_state().to_vec(),
                goal,
                self.cfg.higher_reward_scale * item.reward_sum,
                item.s_end.clone(),
                item.done,
            );
        }
        let report = self.agent.higher.update(&td, &mut self.streams.update)?;
        self.stats.higher_critic.add(report.critic_loss);
        self.stats.higher_actor.add_opt(report.actor_loss);
        Ok(Some(LossRow {
            iteration: self.iteration,
            step: self.steps,
            phase: Phase::Higher,
            critic_loss: report.critic_loss,
            actor_loss: report.actor_loss,
            fdgm_critic_loss: None,
            fdgm_actor_loss: None,
        }))
    }

    /// One iteration in bottom-up order. Returns the loss rows it produced
    /// (lower first) and the number of environment steps collected.
    pub fn iterate(&mut self) -> Result<(usize, Vec<LossRow>)> {
        let collected = self.collect_window()?;
        let mut rows = Vec::new();
        if collected > 0 && !self.warming_up() {
            rows.extend(self.update_lower(collected * self.cfg.lower_updates_per_step)?);
            rows.extend(self.update_higher()?);
        }
        self.iteration += 1;
        Ok((collected, rows))
    }

    pub fn evaluate(&self) -> Result<EvalSummary> {
        evaluate(
            self.kind,
            &mut AgentController::new(&self.agent),
            self.cfg.eval_episodes,
            self.streams.eval,
        )
    }

    fn metrics_row(&mut self, eval: &EvalSummary) -> MetricsRow {
        let s = std::mem::take(&mut self.stats);
        MetricsRow {
            step: self.steps,
            average_reward: eval.average_reward,
            success_rate: eval.success_rate,
            lower_critic_loss: s.lower_critic.get(),
            lower_actor_loss: s.lower_actor.get(),
            fdgm_critic_loss: s.fdgm_critic.get(),
            fdgm_actor_loss: s.fdgm_actor.get(),
            higher_critic_loss: s.higher_critic.get(),
            higher_actor_loss: s.higher_actor.get(),
            residual_stored: s.residual_stored.get(),
            residual_relabeled: s.residual_relabeled.get(),
            goal_drift: s.goal_drift.get(),
            relabel_fallbacks: s.fallbacks,
            clamped_actions: self.env.clamped_actions(),
        }
    }

    /// The most recent `buffer_dump_size` windows.
    pub fn buffer_dump(&self) -> BufferDump {
        let keep = self.cfg.buffer_dump_size;
        let skip = self.higher_buffer.len().saturating_sub(keep);
        BufferDump {
            dims: *self.higher_buffer.dims(),
            transitions: self.higher_buffer.iter().skip(skip).cloned().collect(),
        }
    }
}

/// Trains from scratch and writes `config.conf`, `metrics.csv`, `losses.csv`,
/// `checkpoint.fhrl` and `buffer.json` under `out_dir`.
pub fn run_train(cfg: &RunConfig, out_dir: &Path) -> Result<TrainOutputs> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut trainer = Trainer::new(cfg)?;
    let outputs = TrainOutputs {
        metrics: out_dir.join(METRICS_FILE),
        losses: out_dir.join(LOSSES_FILE),
        checkpoint: out_dir.join(CHECKPOINT_FILE),
        buffer: out_dir.join(BUFFER_FILE),
        final_eval: None,
        steps: 0,
    };
    let config_path = out_dir.join(CONFIG_FILE);
    std::fs::write(&config_path, cfg.to_text()).map_err(io_err(&config_path))?;
    let mut metrics = CsvLog::<MetricsRow>::create(&outputs.metrics, &METRICS_HEADER)?;
    let mut losses = CsvLog::<LossRow>::create(&outputs.losses, &LOSS_HEADER)?;
    log::info!(
        "training {} for {} steps with relabel={} seed={}",
        cfg.env,
        cfg.total_steps,
        cfg.relabel,
        cfg.seed
    );

    let mut next_eval = cfg.eval_every;
    let mut final_eval = None;
    while trainer.steps < cfg.total_steps {
        let rows = match trainer.iterate() {
            Ok((_, rows)) => rows,
            Err(e @ Error::NonFinite { .. }) => {
                // Updates reject non-finite gradients before mutating, so the
                // agent still holds the last good parameters.
                checkpoint::save(&outputs.checkpoint, cfg, &trainer.agent)?;
                metrics.flush()?;
                losses.flush()?;
                log::error!("aborting at step {}: {e}", trainer.steps);
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        for row in &rows {
            losses.push(row)?;
        }
        let last = trainer.steps >= cfg.total_steps;
        if trainer.steps >= next_eval || last {
            let eval = trainer.evaluate()?;
            let row = trainer.metrics_row(&eval);
            log::info!(
                "step {}: average reward {:.3}, success {:.2}",
                row.step,
                row.average_reward,
                row.success_rate
            );
            metrics.push(&row)?;
            metrics.flush()?;
            losses.flush()?;
            final_eval = Some(eval);
            next_eval = (trainer.steps / cfg.eval_every + 1) * cfg.eval_every;
        }
    }
    metrics.flush()?;
    losses.flush()?;
    trainer.agent.check_finite()?;
    checkpoint::save(&outputs.checkpoint, cfg, &trainer.agent)?;
    trainer.buffer_dump().save(&outputs.buffer)?;
    Ok(TrainOutputs {
        final_eval,
        steps: trainer.steps,
        ..outputs
    })
}
