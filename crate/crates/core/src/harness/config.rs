//! Run configuration: a flat `key = value` text file with `#` comments.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::correction::RelabelStrategy;
use crate::envs::{EnvKind, EnvSpec};
use crate::error::{io_err, Error, Result};
use crate::policies::{LowerConfig, LowerDims, Td3Config};

/// Environment name accepted only for sizing networks (no dynamics).
pub const ANT_ENV: &str = "ant";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: String,
    pub seed: u64,
    pub total_steps: u64,
    /// Higher-level horizon: a fresh goal every `c` steps.
    pub c: usize,
    pub goal_dim: usize,
    /// Output size `m` of the conditional part.
    pub a_z_state_dim: usize,
    /// Width of the flow's scale/translate nets.
    pub fdgm_actor_width: usize,
    /// Width of every other lower-level net; `None` means `other_width`.
    pub lower_width: Option<usize>,
    /// Width of the higher-level nets (and of the lower ones unless
    /// `lower_width` is set).
    pub other_width: usize,
    pub hidden_layers: usize,
    pub relabel: RelabelStrategy,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub lower_batch_size: usize,
    pub higher_batch_size: usize,
    pub lower_buffer_capacity: usize,
    pub higher_buffer_capacity: usize,
    /// Steps of uniformly random goals and actions before learning starts.
    pub start_steps: u64,
    /// Lower-level updates per collected environment step.
    pub lower_updates_per_step: usize,
    pub gamma_lower: f64,
    pub gamma_higher: f64,
    pub polyak: f64,
    pub policy_delay: u64,
    pub target_noise: f64,
    pub target_noise_clip: f64,
    pub exploration_noise_lower: f64,
    pub exploration_noise_higher: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub higher_actor_lr: f64,
    pub higher_critic_lr: f64,
    pub flow_lr: f64,
    pub scale_bound: f64,
    /// Multiplier on the summed environment reward seen by the higher level.
    pub higher_reward_scale: f64,
    /// HIRO candidate std as a fraction of the goal bound.
    pub hiro_std_fraction: f64,
    /// Feed `g` instead of `a_z` into the conditional part.
    pub variant_model: bool,
    /// Most recent higher-level windows written to the buffer dump.
    pub buffer_dump_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: "point_reach".into(),
            seed: 0,
            total_steps: 50_000,
            c: 10,
            goal_dim: 2,
            a_z_state_dim: 8,
            fdgm_actor_width: 32,
            lower_width: None,
            other_width: 64,
            hidden_layers: 2,
            relabel: RelabelStrategy::FlowOnly,
            eval_every: 2_000,
            eval_episodes: 50,
            lower_batch_size: 64,
            higher_batch_size: 64,
            lower_buffer_capacity: 200_000,
            higher_buffer_capacity: 20_000,
            start_steps: 2_000,
            lower_updates_per_step: 1,
            gamma_lower: 0.99,
            gamma_higher: 0.99,
            polyak: 0.995,
            policy_delay: 2,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            exploration_noise_lower: 0.1,
            exploration_noise_higher: 0.2,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            higher_actor_lr: 1e-4,
            higher_critic_lr: 1e-3,
            flow_lr: 1e-4,
            scale_bound: crate::flow::DEFAULT_SCALE_BOUND,
            higher_reward_scale: 0.1,
            hiro_std_fraction: 0.5,
            variant_model: false,
            buffer_dump_size: 512,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("bad value {value:?} for {key}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("bad value {value:?} for {key}: expected true or false")),
    }
}

impl RunConfig {
    /// Parses config text. Keys not present keep their defaults.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(parse_err(format!("duplicate key {key}")));
            }
            seen.push(key.to_string());
            cfg.set(key, value).map_err(parse_err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, path)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        macro_rules! num {
            ($field:ident) => {
                self.$field = parse_value(key, value)?
            };
        }
        match key {
            "env" => self.env = value.to_string(),
            "seed" => num!(seed),
            "total_steps" => num!(total_steps),
            "c" => num!(c),
            "goal_dim" => num!(goal_dim),
            "a_z_state_dim" => num!(a_z_state_dim),
            "fdgm_actor_width" => num!(fdgm_actor_width),
            "lower_width" => {
                self.lower_width = match value {
                    "auto" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "other_width" => num!(other_width),
            "hidden_layers" => num!(hidden_layers),
            "relabel" => self.relabel = value.parse().map_err(|e: Error| e.to_string())?,
            "eval_every" => num!(eval_every),
            "eval_episodes" => num!(eval_episodes),
            "lower_batch_size" => num!(lower_batch_size),
            "higher_batch_size" => num!(higher_batch_size),
            "lower_buffer_capacity" => num!(lower_buffer_capacity),
            "higher_buffer_capacity" => num!(higher_buffer_capacity),
            "start_steps" => num!(start_steps),
            "lower_updates_per_step" => num!(lower_updates_per_step),
            "gamma_lower" => num!(gamma_lower),
            "gamma_higher" => num!(gamma_higher),
            "polyak" => num!(polyak),
            "policy_delay" => num!(policy_delay),
            "target_noise" => num!(target_noise),
            "target_noise_clip" => num!(target_noise_clip),
            "exploration_noise_lower" => num!(exploration_noise_lower),
            "exploration_noise_higher" => num!(exploration_noise_higher),
            "actor_lr" => num!(actor_lr),
            "critic_lr" => num!(critic_lr),
            "higher_actor_lr" => num!(higher_actor_lr),
            "higher_critic_lr" => num!(higher_critic_lr),
            "flow_lr" => num!(flow_lr),
            "scale_bound" => num!(scale_bound),
            "higher_reward_scale" => num!(higher_reward_scale),
            "hiro_std_fraction" => num!(hiro_std_fraction),
            "variant_model" => self.variant_model = parse_bool(key, value)?,
            "buffer_dump_size" => num!(buffer_dump_size),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Canonical text form; every key in a fixed order. Parsing this text
    /// yields an equal config.
    pub fn to_text(&self) -> String {
        let lower_width = self
            .lower_width
            .map_or_else(|| "auto".to_string(), |w| w.to_string());
        let entries: Vec<(&str, String)> = vec![
            ("env", self.env.clone()),
            ("seed", self.seed.to_string()),
            ("total_steps", self.total_steps.to_string()),
            ("c", self.c.to_string()),
            ("goal_dim", self.goal_dim.to_string()),
            ("a_z_state_dim", self.a_z_state_dim.to_string()),
            ("fdgm_actor_width", self.fdgm_actor_width.to_string()),
            ("lower_width", lower_width),
            ("other_width", self.other_width.to_string()),
            ("hidden_layers", self.hidden_layers.to_string()),
            ("relabel", self.relabel.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("lower_batch_size", self.lower_batch_size.to_string()),
            ("higher_batch_size", self.higher_batch_size.to_string()),
            ("lower_buffer_capacity", self.lower_buffer_capacity.to_string()),
            ("higher_buffer_capacity", self.higher_buffer_capacity.to_string()),
            ("start_steps", self.start_steps.to_string()),
            ("lower_updates_per_step", self.lower_updates_per_step.to_string()),
            ("gamma_lower", self.gamma_lower.to_string()),
            ("gamma_higher", self.gamma_higher.to_string()),
            ("polyak", self.polyak.to_string()),
            ("policy_delay", self.policy_delay.to_string()),
            ("target_noise", self.target_noise.to_string()),
            ("target_noise_clip", self.target_noise_clip.to_string()),
            ("exploration_noise_lower", self.exploration_noise_lower.to_string()),
            ("exploration_noise_higher", self.exploration_noise_higher.to_string()),
            ("actor_lr", self.actor_lr.to_string()),
            ("critic_lr", self.critic_lr.to_string()),
            ("higher_actor_lr", self.higher_actor_lr.to_string()),
            ("higher_critic_lr", self.higher_critic_lr.to_string()),
            ("flow_lr", self.flow_lr.to_string()),
            ("scale_bound", self.scale_bound.to_string()),
            ("higher_reward_scale", self.higher_reward_scale.to_string()),
            ("hiro_std_fraction", self.hiro_std_fraction.to_string()),
            ("variant_model", self.variant_model.to_string()),
            ("buffer_dump_size", self.buffer_dump_size.to_string()),
        ];
        entries
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// First eight bytes of the SHA-256 of the canonical text, little-endian.
    pub fn hash(&self) -> u64 {
        let digest = Sha256::digest(self.to_text().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
    }

    pub fn lower_width(&self) -> usize {
        self.lower_width.unwrap_or(self.other_width)
    }

    /// `None` for the sizing-only Ant spec.
    pub fn env_kind(&self) -> Result<Option<EnvKind>> {
        if self.env == ANT_ENV {
            Ok(None)
        } else {
            EnvKind::parse(&self.env).map(Some)
        }
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        Ok(match self.env_kind()? {
            Some(kind) => kind.spec(),
            None => EnvSpec::ant_preset(),
        })
    }

    pub fn lower_td3(&self) -> Td3Config {
        Td3Config {
            gamma: self.gamma_lower,
            polyak: self.polyak,
            policy_delay: self.policy_delay,
            target_noise: self.target_noise,
            target_noise_clip: self.target_noise_clip,
            exploration_noise: self.exploration_noise_lower,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
        }
    }

    pub fn higher_td3(&self) -> Td3Config {
        Td3Config {
            gamma: self.gamma_higher,
            exploration_noise: self.exploration_noise_higher,
            actor_lr: self.higher_actor_lr,
            critic_lr: self.higher_critic_lr,
            ..self.lower_td3()
        }
    }

    pub fn lower_config(&self) -> Result<LowerConfig> {
        let spec = self.env_spec()?;
        Ok(LowerConfig {
            dims: LowerDims {
                state_dim: spec.state_dim,
                action_dim: spec.action_dim,
                goal_dim: self.goal_dim,
                cond_dim: self.a_z_state_dim,
            },
            action_bound: spec.action_bound,
            goal_bound: spec.goal_bound,
            width: self.lower_width(),
            fdgm_actor_width: self.fdgm_actor_width,
            hidden_layers: self.hidden_layers,
            scale_bound: self.scale_bound,
            td3: self.lower_td3(),
            flow_lr: self.flow_lr,
            variant_model: self.variant_model,
        })
    }

    /// Per-coordinate std of the HIRO candidate draws.
    pub fn hiro_std(&self) -> Result<Vec<f64>> {
        Ok(self
            .env_spec()?
            .goal_bound
            .iter()
            .map(|b| b * self.hiro_std_fraction)
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.env_spec()?;
        spec.validate()?;
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.goal_dim < 2 {
            return bad("goal_dim must be at least 2");
        }
        if self.goal_dim != spec.goal_dim {
            return Err(Error::Config(format!(
                "goal_dim {} does not match env {} (goal dim {})",
                self.goal_dim, self.env, spec.goal_dim
            )));
        }
        let positive = [
            ("c", self.c),
            ("a_z_state_dim", self.a_z_state_dim),
            ("fdgm_actor_width", self.fdgm_actor_width),
            ("lower_width", self.lower_width()),
            ("other_width", self.other_width),
            ("hidden_layers", self.hidden_layers),
            ("eval_episodes", self.eval_episodes),
            ("lower_batch_size", self.lower_batch_size),
            ("higher_batch_size", self.higher_batch_size),
            ("lower_buffer_capacity", self.lower_buffer_capacity),
            ("higher_buffer_capacity", self.higher_buffer_capacity),
            ("lower_updates_per_step", self.lower_updates_per_step),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        let non_negative = [
            ("target_noise", self.target_noise),
            ("target_noise_clip", self.target_noise_clip),
            ("exploration_noise_lower", self.exploration_noise_lower),
            ("exploration_noise_higher", self.exploration_noise_higher),
            ("higher_actor_lr", self.higher_actor_lr),
            ("higher_critic_lr", self.higher_critic_lr),
            ("flow_lr", self.flow_lr),
            ("hiro_std_fraction", self.hiro_std_fraction),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.scale_bound > 0.0) || !(self.higher_reward_scale > 0.0) {
            return bad("scale_bound and higher_reward_scale must be positive");
        }
        self.lower_td3().validate()?;
        self.higher_td3().validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("test.conf"))
    }

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.env = "point_fall_sparse".into();
        cfg.lower_width = Some(135);
        cfg.relabel = RelabelStrategy::FlowFull;
        cfg.actor_lr = 3.5e-4;
        cfg.variant_model = true;
        let back = parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), cfg.to_text());
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn comments_and_spacing_are_ignored() {
        let cfg = parse("  c=5   # short horizon\nrelabel = hiro\n").unwrap();
        assert_eq!(cfg.c, 5);
        assert_eq!(cfg.relabel, RelabelStrategy::Hiro);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse("c = 5\n\nwidth = 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse("c = five\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse("c = 1\nc = 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(matches!(parse("no equals sign").unwrap_err(), Error::Parse { .. }));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(parse("c = 0").is_err());
        assert!(parse("a_z_state_dim = 0").is_err());
        assert!(parse("goal_dim = 3").is_err());
        assert!(parse("env = point_maze").is_err());
        assert!(parse("polyak = 1.5").is_err());
        assert!(parse("env = ant\ngoal_dim = 15").is_ok());
    }

    #[test]
    fn lower_width_defaults_to_other_width() {
        let cfg = parse("other_width = 170").unwrap();
        assert_eq!(cfg.lower_width(), 170);
        let cfg = parse("other_width = 160\nlower_width = 135").unwrap();
        assert_eq!(cfg.lower_width(), 135);
        assert_eq!(cfg.lower_config().unwrap().width, 135);
    }
}
