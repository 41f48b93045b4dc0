//! Experiment harness: configuration, training loop, checkpoints, metrics,
//! evaluation, relabel audits and plotting.

mod agent;
mod audit;
pub mod checkpoint;
mod config;
mod eval;
mod gradcheck;
mod metrics;
pub mod plot;
mod train;

pub use agent::{
    eval_episode_seed, evaluate, run_episode, AgentController, Controller, EpisodeResult, EvalSummary,
    HierarchicalAgent, RandomController, ScriptedController,
};
pub use audit::{audit_relabel, run_audit, write_audit_csv, AuditRow};
pub use config::{RunConfig, ANT_ENV};
pub use eval::{run_eval, PolicySource};
pub use gradcheck::{run_gradcheck, GradcheckRow, GRADCHECK_TOLERANCE};
pub use metrics::{read_rows, CsvLog, LossRow, Mean, MetricsRow, Phase, LOSS_HEADER, METRICS_HEADER};
pub use plot::{run_plot, PlotOutputs};
pub use train::{
    run_train, TrainOutputs, Trainer, BUFFER_FILE, CHECKPOINT_FILE, CONFIG_FILE, LOSSES_FILE, METRICS_FILE,
};
