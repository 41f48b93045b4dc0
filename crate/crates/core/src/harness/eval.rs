//! Evaluation of checkpoints and of the reference controllers.

use std::fmt;
use std::path::{Path, PathBuf};

use super::agent::{evaluate, AgentController, EvalSummary, RandomController, ScriptedController};
use super::checkpoint;
use crate::envs::EnvKind;
use crate::error::{Error, Result};

/// What to evaluate: a checkpoint file, or a reference controller written
/// as `scripted:ENV` / `random:ENV`.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySource {
    Checkpoint(PathBuf),
    Scripted(EnvKind),
    Random(EnvKind),
}

impl PolicySource {
    pub fn parse(spec: &str) -> Result<Self> {
        if let Some(env) = spec.strip_prefix("scripted:") {
            Ok(Self::Scripted(EnvKind::parse(env)?))
        } else if let Some(env) = spec.strip_prefix("random:") {
            Ok(Self::Random(EnvKind::parse(env)?))
        } else {
            Ok(Self::Checkpoint(PathBuf::from(spec)))
        }
    }
}

impl fmt::Display for PolicySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Checkpoint(p) => write!(f, "{}", p.display()),
            Self::Scripted(k) => write!(f, "scripted:{}", k.name()),
            Self::Random(k) => write!(f, "random:{}", k.name()),
        }
    }
}

/// Noise-free rollouts; returns mean episode return and success rate.
pub fn run_eval(source: &PolicySource, episodes: usize, seed: u64) -> Result<EvalSummary> {
    match source {
        PolicySource::Checkpoint(path) => eval_checkpoint(path, episodes, seed),
        PolicySource::Scripted(kind) => evaluate(*kind, &mut ScriptedController(*kind), episodes, seed),
        PolicySource::Random(kind) => {
            let bound = kind.spec().action_bound;
            evaluate(*kind, &mut RandomController::new(bound, seed), episodes, seed)
        }
    }
}

fn eval_checkpoint(path: &Path, episodes: usize, seed: u64) -> Result<EvalSummary> {
    let (cfg, agent) = checkpoint::load(path)?;
    let kind = cfg
        .env_kind()?
        .ok_or_else(|| Error::Config(format!("checkpoint env {} has no dynamics to evaluate", cfg.env)))?;
    evaluate(kind, &mut AgentController::new(&agent), episodes, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{HierarchicalAgent, RunConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sources_parse() {
        let k = EnvKind::parse("point_push_sparse").unwrap();
        assert_eq!(PolicySource::parse("scripted:point_push_sparse").unwrap(), PolicySource::Scripted(k));
        assert_eq!(PolicySource::parse("random:point_push_sparse").unwrap(), PolicySource::Random(k));
        assert!(PolicySource::parse("scripted:nowhere").is_err());
        assert_eq!(
            PolicySource::parse("runs/a.fhrl").unwrap(),
            PolicySource::Checkpoint("runs/a.fhrl".into())
        );
    }

    #[test]
    fn untrained_checkpoint_on_sparse_task_fails_and_is_repeatable() {
        let mut cfg = RunConfig::default();
        cfg.env = "point_push_sparse".into();
        cfg.other_width = 8;
        let agent = HierarchicalAgent::new(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.fhrl");
        checkpoint::save(&path, &cfg, &agent).unwrap();
        let src = PolicySource::Checkpoint(path);
        let a = run_eval(&src, 4, 3).unwrap();
        let b = run_eval(&src, 4, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.success_rate, 0.0);
    }

    #[test]
    fn corrupt_checkpoint_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.fhrl");
        std::fs::write(&path, b"FHRL garbage").unwrap();
        assert!(run_eval(&PolicySource::Checkpoint(path), 1, 0).is_err());
    }
}
