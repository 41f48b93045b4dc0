use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::policies::LowerDims;

/// Dimensions every stored transition is validated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionDims {
    pub state_dim: usize,
    pub action_dim: usize,
    pub goal_dim: usize,
    pub cond_dim: usize,
    /// Higher-level horizon `c`; window sequences are at most this long.
    pub horizon: usize,
}

impl TransitionDims {
    pub fn new(dims: LowerDims, horizon: usize) -> Self {
        Self {
            state_dim: dims.state_dim,
            action_dim: dims.action_dim,
            goal_dim: dims.goal_dim,
            cond_dim: dims.cond_dim,
            horizon,
        }
    }
}

pub trait Transition {
    fn validate(&self, dims: &TransitionDims) -> Result<()>;
}

/// One low-level step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowTransition {
    pub s: Vec<f64>,
    pub g: Vec<f64>,
    pub a_z: Vec<f64>,
    pub a_z_state: Vec<f64>,
    pub a_rnvp: Vec<f64>,
    pub r_intrinsic: f64,
    pub s_next: Vec<f64>,
    pub g_next: Vec<f64>,
    pub done: bool,
    /// Lower-policy version (update count) in force when collected.
    pub param_version: u64,
}

impl Transition for LowTransition {
    fn validate(&self, d: &TransitionDims) -> Result<()> {
        check_len("low transition s", d.state_dim, self.s.len())?;
        check_len("low transition s_next", d.state_dim, self.s_next.len())?;
        check_len("low transition g", d.goal_dim, self.g.len())?;
        check_len("low transition g_next", d.goal_dim, self.g_next.len())?;
        check_len("low transition a_z", d.action_dim, self.a_z.len())?;
        check_len("low transition a_z_state", d.cond_dim, self.a_z_state.len())?;
        check_len("low transition a_rnvp", d.goal_dim, self.a_rnvp.len())?;
        if !(self.r_intrinsic <= 0.0) {
            return Err(Error::Config(format!(
                "intrinsic reward must be <= 0, got {}",
                self.r_intrinsic
            )));
        }
        Ok(())
    }
}

/// One higher-level window of `c` low-level steps (shorter only when the
/// episode ends inside the window).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighTransition {
    pub s_seq: Vec<Vec<f64>>,
    pub g_seq: Vec<Vec<f64>>,
    pub a_z_seq: Vec<Vec<f64>>,
    pub a_z_state_seq: Vec<Vec<f64>>,
    pub a_rnvp_seq: Vec<Vec<f64>>,
    pub reward_sum: f64,
    pub s_end: Vec<f64>,
    /// The episode terminated (not merely timed out) at the window's end.
    pub done: bool,
}

impl HighTransition {
    pub fn len(&self) -> usize {
        self.s_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_seq.is_empty()
    }

    pub fn start_state(&self) -> &[f64] {
        &self.s_seq[0]
    }

    pub fn stored_goal(&self) -> &[f64] {
        &self.g_seq[0]
    }
}

impl Transition for HighTransition {
    fn validate(&self, d: &TransitionDims) -> Result<()> {
        let k = self.s_seq.len();
        if k == 0 || k > d.horizon {
            return Err(Error::Config(format!(
                "window length must be in 1..={}, got {k}",
                d.horizon
            )));
        }
        check_len("high transition g_seq", k, self.g_seq.len())?;
        check_len("high transition a_z_seq", k, self.a_z_seq.len())?;
        check_len("high transition a_z_state_seq", k, self.a_z_state_seq.len())?;
        check_len("high transition a_rnvp_seq", k, self.a_rnvp_seq.len())?;
        check_len("high transition s_end", d.state_dim, self.s_end.len())?;
        for i in 0..k {
            check_len("high transition s", d.state_dim, self.s_seq[i].len())?;
            check_len("high transition g", d.goal_dim, self.g_seq[i].len())?;
            check_len("high transition a_z", d.action_dim, self.a_z_seq[i].len())?;
            check_len("high transition a_z_state", d.cond_dim, self.a_z_state_seq[i].len())?;
            check_len("high transition a_rnvp", d.goal_dim, self.a_rnvp_seq[i].len())?;
        }
        Ok(())
    }
}

/// Fixed-capacity FIFO ring with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    dims: TransitionDims,
    items: Vec<T>,
    /// Next slot to overwrite once full.
    head: usize,
    rng: ChaCha8Rng,
}

impl<T: Transition> ReplayBuffer<T> {
    pub fn new(capacity: usize, dims: TransitionDims, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("buffer capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            dims,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dims(&self) -> &TransitionDims {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) -> Result<()> {
        item.validate(&self.dims)?;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.head] = item;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    pub fn sample_indices(&mut self, n: usize) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        let len = self.items.len();
        (0..n).map(|_| self.rng.gen_range(0..len)).collect()
    }

    pub fn get(&self, index: usize) -> Option<&T> {
        self.items.get(index)
    }

    pub fn sample(&mut self, n: usize) -> Vec<&T> {
        let idx = self.sample_indices(n);
        idx.into_iter().map(|i| &self.items[i]).collect()
    }
}

/// On-disk form of a higher-level buffer, consumed by the relabel audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferDump {
    pub dims: TransitionDims,
    pub transitions: Vec<HighTransition>,
}

impl BufferDump {
    pub fn from_buffer(buf: &ReplayBuffer<HighTransition>) -> Self {
        Self {
            dims: buf.dims,
            transitions: buf.iter().cloned().collect(),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(crate::error::io_err(path))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(crate::error::io_err(path))?;
        let dump: Self = serde_json::from_reader(std::io::BufReader::new(file))?;
        for t in &dump.transitions {
            t.validate(&dump.dims)?;
        }
        Ok(dump)
    }
}
