//! Desk-scale point-mass tasks: reach a target, push a block out of a
//! doorway, or push a block into a pit to bridge it.
//!
//! Dynamics are a damped double integrator. Goal coordinates are the agent
//! position, which is always the first two state coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::numeric::InputAffine;

pub const ARENA_SIZE: f64 = 16.0;
pub const SUCCESS_RADIUS: f64 = 0.5;
pub const HORIZON_MAX: usize = 500;
pub const DAMPING: f64 = 0.95;
pub const TIME_STEP: f64 = 0.1;
/// Minimum agent-to-block distance; closer approaches push the block.
pub const CONTACT_RADIUS: f64 = 1.0;
pub const ACTION_BOUND: f64 = 2.0;
pub const GOAL_BOUND: f64 = 4.0;

/// Horizontal wall band; solid everywhere except the middle cell.
const WALL_Y: (f64, f64) = (7.5, 8.5);
const MIDDLE_X: (f64, f64) = (7.0, 9.0);
const PIT_CENTER: [f64; 2] = [8.0, 8.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardShape {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Reach,
    /// Block sits in the doorway of the wall and must be pushed clear.
    Push,
    /// The doorway is a pit; the block must be pushed in to form a bridge.
    Fall,
}

/// One of the runnable task variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvKind {
    pub layout: Layout,
    pub reward_shape: RewardShape,
}

impl EnvKind {
    pub const ALL: [&'static str; 5] = [
        "point_reach",
        "point_push_dense",
        "point_push_sparse",
        "point_fall_dense",
        "point_fall_sparse",
    ];

    pub fn parse(name: &str) -> Result<Self> {
        let (layout, reward_shape) = match name {
            "point_reach" => (Layout::Reach, RewardShape::Dense),
            "point_push_dense" => (Layout::Push, RewardShape::Dense),
            "point_push_sparse" => (Layout::Push, RewardShape::Sparse),
            "point_fall_dense" => (Layout::Fall, RewardShape::Dense),
            "point_fall_sparse" => (Layout::Fall, RewardShape::Sparse),
            other => {
                return Err(Error::Config(format!(
                    "unknown env variant {other:?}; expected one of {}",
                    Self::ALL.join(" | ")
                )))
            }
        };
        Ok(Self {
            layout,
            reward_shape,
        })
    }

    pub fn name(&self) -> &'static str {
        match (self.layout, self.reward_shape) {
            (Layout::Reach, _) => "point_reach",
            (Layout::Push, RewardShape::Dense) => "point_push_dense",
            (Layout::Push, RewardShape::Sparse) => "point_push_sparse",
            (Layout::Fall, RewardShape::Dense) => "point_fall_dense",
            (Layout::Fall, RewardShape::Sparse) => "point_fall_sparse",
        }
    }

    /// Fixed affine map taking states to roughly unit scale: arena
    /// coordinates are centred and divided by half the arena, velocities by
    /// the speed scale.
    pub fn state_normalization(&self) -> InputAffine {
        let half = ARENA_SIZE / 2.0;
        let dim = self.spec().state_dim;
        let mut shift = vec![half; dim];
        let mut scale = vec![1.0 / half; dim];
        shift[2] = 0.0;
        shift[3] = 0.0;
        scale[2] = 0.25;
        scale[3] = 0.25;
        InputAffine { shift, scale }
    }

    pub fn spec(&self) -> EnvSpec {
        let state_dim = match self.layout {
            Layout::Reach => 6,
            Layout::Push | Layout::Fall => 8,
        };
        EnvSpec {
            state_dim,
            action_dim: 2,
            goal_dim: 2,
            action_bound: vec![ACTION_BOUND; 2],
            goal_bound: vec![GOAL_BOUND; 2],
            horizon_max: HORIZON_MAX,
            reward_shape: self.reward_shape,
        }
    }
}

/// Static description of an environment's interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    /// Goals live on the first `goal_dim` state coordinates.
    pub goal_dim: usize,
    pub action_bound: Vec<f64>,
    pub goal_bound: Vec<f64>,
    pub horizon_max: usize,
    pub reward_shape: RewardShape,
}

impl EnvSpec {
    /// Dimensions of the Ant tasks (state 30, action 8, goal 15). There are no
    /// dynamics behind this spec; it exists to size networks like the
    /// original experiments.
    pub fn ant_preset() -> Self {
        Self {
            state_dim: 30,
            action_dim: 8,
            goal_dim: 15,
            action_bound: vec![30.0; 8],
            goal_bound: vec![10.0; 15],
            horizon_max: 500,
            reward_shape: RewardShape::Dense,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.goal_dim > self.state_dim {
            return Err(Error::Config("goal_dim must not exceed state_dim".into()));
        }
        check_len("action bound", self.action_dim, self.action_bound.len())?;
        check_len("goal bound", self.goal_dim, self.goal_bound.len())?;
        if self
            .action_bound
            .iter()
            .chain(&self.goal_bound)
            .any(|b| !(*b > 0.0))
        {
            return Err(Error::Config("bounds must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

#[derive(Debug, Clone)]
pub struct PointEnv {
    kind: EnvKind,
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    block: [f64; 2],
    /// Fall layout only: the block has dropped into the pit.
    bridged: bool,
    target: [f64; 2],
    t: usize,
    done: bool,
    clamped_actions: u64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn in_middle_cell(p: [f64; 2]) -> bool {
    p[0] >= MIDDLE_X.0 && p[0] <= MIDDLE_X.1 && p[1] >= WALL_Y.0 && p[1] <= WALL_Y.1
}

fn in_wall_band(p: [f64; 2]) -> bool {
    p[1] >= WALL_Y.0 && p[1] <= WALL_Y.1
}

fn in_arena(p: [f64; 2]) -> bool {
    (0.0..=ARENA_SIZE).contains(&p[0]) && (0.0..=ARENA_SIZE).contains(&p[1])
}

impl PointEnv {
    pub fn new(kind: EnvKind) -> Self {
        let mut env = Self {
            kind,
            spec: kind.spec(),
            pos: [0.0; 2],
            vel: [0.0; 2],
            block: [0.0; 2],
            bridged: false,
            target: [0.0; 2],
            t: 0,
            done: true,
            clamped_actions: 0,
        };
        env.reset(0);
        env
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn target(&self) -> [f64; 2] {
        self.target
    }

    pub fn block(&self) -> Option<[f64; 2]> {
        (self.kind.layout != Layout::Reach).then_some(self.block)
    }

    pub fn bridged(&self) -> bool {
        self.bridged
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn elapsed(&self) -> usize {
        self.t
    }

    /// Number of actions that arrived outside the bounds and were clamped.
    pub fn clamped_actions(&self) -> u64 {
        self.clamped_actions
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jitter = |c: f64| c + rng.gen_range(-0.5..0.5);
        match self.kind.layout {
            Layout::Reach => {
                loop {
                    self.pos = [rng.gen_range(1.0..15.0), rng.gen_range(1.0..15.0)];
                    self.target = [rng.gen_range(1.0..15.0), rng.gen_range(1.0..15.0)];
                    if dist(self.pos, self.target) > 2.0 {
                        break;
                    }
                }
                self.block = [0.0; 2];
            }
            Layout::Push => {
                self.pos = [jitter(8.0), jitter(2.0)];
                self.target = [jitter(12.0), jitter(13.0)];
                self.block = [8.0, 8.0];
            }
            Layout::Fall => {
                self.pos = [jitter(8.0), jitter(2.0)];
                self.target = [jitter(12.0), jitter(13.0)];
                self.block = [8.0, 5.0];
            }
        }
        self.vel = [0.0; 2];
        self.bridged = false;
        self.t = 0;
        self.done = false;
        self.state()
    }

    pub fn state(&self) -> Vec<f64> {
        let mut s = vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]];
        if self.kind.layout != Layout::Reach {
            s.extend_from_slice(&self.block);
        }
        s.extend_from_slice(&self.target);
        s
    }

    pub fn success(&self) -> bool {
        dist(self.pos, self.target) <= SUCCESS_RADIUS
    }

    fn block_is_obstacle(&self) -> bool {
        match self.kind.layout {
            Layout::Reach => false,
            Layout::Push => true,
            Layout::Fall => !self.bridged,
        }
    }

    fn solid_for_agent(&self, p: [f64; 2]) -> bool {
        match self.kind.layout {
            Layout::Reach => false,
            Layout::Push => in_wall_band(p) && !in_middle_cell(p),
            Layout::Fall => in_wall_band(p) && (!in_middle_cell(p) || !self.bridged),
        }
    }

    fn solid_for_block(&self, p: [f64; 2]) -> bool {
        !in_arena(p) || (in_wall_band(p) && !in_middle_cell(p))
    }

    /// Tries to move the agent to `p`, pushing the block if needed. Returns
    /// false when the move is blocked.
    fn try_move(&mut self, p: [f64; 2], axis: usize) -> bool {
        if self.solid_for_agent(p) {
            return false;
        }
        if !self.block_is_obstacle() {
            return true;
        }
        let d = dist(p, self.block);
        if d >= CONTACT_RADIUS {
            return true;
        }
        let dir = if d > 1e-12 {
            [(self.block[0] - p[0]) / d, (self.block[1] - p[1]) / d]
        } else {
            let mut dir = [0.0; 2];
            dir[axis] = (p[axis] - self.pos[axis]).signum();
            dir
        };
        let pushed = [p[0] + CONTACT_RADIUS * dir[0], p[1] + CONTACT_RADIUS * dir[1]];
        if self.solid_for_block(pushed) {
            return false;
        }
        if self.kind.layout == Layout::Fall && in_middle_cell(pushed) {
            self.block = PIT_CENTER;
            self.bridged = true;
        } else {
            self.block = pushed;
        }
        true
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        check_len("env action", self.spec.action_dim, action.len())?;
        let mut a = [0.0; 2];
        let mut clamped = false;
        for i in 0..2 {
            let b = self.spec.action_bound[i];
            let v = if action[i].is_nan() { 0.0 } else { action[i] };
            a[i] = v.clamp(-b, b);
            clamped |= a[i] != action[i];
        }
        if clamped {
            self.clamped_actions += 1;
        }

        for i in 0..2 {
            self.vel[i] = DAMPING * self.vel[i] + TIME_STEP * a[i];
        }
        for axis in 0..2 {
            let mut p = self.pos;
            p[axis] += TIME_STEP * self.vel[axis];
            if p[axis] < 0.0 || p[axis] > ARENA_SIZE {
                p[axis] = p[axis].clamp(0.0, ARENA_SIZE);
                self.vel[axis] = 0.0;
            }
            if self.try_move(p, axis) {
                self.pos = p;
            } else {
                self.vel[axis] = 0.0;
            }
        }

        self.t += 1;
        let success = self.success();
        let reward = match self.spec.reward_shape {
            RewardShape::Dense => -dist(self.pos, self.target),
            RewardShape::Sparse => {
                if success {
                    0.0
                } else {
                    -1.0
                }
            }
        };
        self.done = success || self.t >= self.spec.horizon_max;
        Ok(StepOutcome {
            state: self.state(),
            reward,
            done: self.done,
            success,
        })
    }
}

/// Waypoint PD controller that solves every layout. Used as the reference
/// "solved" baseline and to check that each task is reachable.
pub fn scripted_action(kind: EnvKind, state: &[f64]) -> Vec<f64> {
    let pos = [state[0], state[1]];
    let vel = [state[2], state[3]];
    let n = state.len();
    let target = [state[n - 2], state[n - 1]];
    let waypoint = match kind.layout {
        Layout::Reach => target,
        Layout::Push | Layout::Fall => {
            let block = [state[4], state[5]];
            let cleared = match kind.layout {
                Layout::Push => block[1] >= 10.0,
                _ => block == PIT_CENTER,
            };
            if cleared {
                if pos[1] < WALL_Y.1 + 0.5 {
                    [8.0, 10.0]
                } else {
                    target
                }
            } else if (pos[0] - block[0]).abs() < 0.3 && pos[1] < block[1] {
                [block[0], block[1] + 1.0]
            } else {
                [block[0], block[1] - 1.5]
            }
        }
    };
    (0..2)
        .map(|i| (1.5 * (waypoint[i] - pos[i]) - 3.0 * vel[i]).clamp(-ACTION_BOUND, ACTION_BOUND))
        .collect()
}
