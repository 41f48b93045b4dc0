//! CSV logs written during training.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

/// One evaluation point. Loss and relabel columns average everything since
/// the previous row and are empty when nothing was recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub average_reward: f64,
    pub success_rate: f64,
    pub lower_critic_loss: Option<f64>,
    pub lower_actor_loss: Option<f64>,
    pub fdgm_critic_loss: Option<f64>,
    pub fdgm_actor_loss: Option<f64>,
    pub higher_critic_loss: Option<f64>,
    pub higher_actor_loss: Option<f64>,
    /// Mean `‖a_rnvp − μ_rnvp(g; cond)‖` of the stored goals.
    pub residual_stored: Option<f64>,
    /// Same residual for the goals handed to the higher-level update.
    pub residual_relabeled: Option<f64>,
    /// Mean `‖g̃ − g‖`.
    pub goal_drift: Option<f64>,
    pub relabel_fallbacks: u64,
    pub clamped_actions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Lower,
    Higher,
}

/// Per-iteration loss record; the lower row of an iteration always precedes
/// its higher row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub iteration: u64,
    pub step: u64,
    pub phase: Phase,
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
    pub fdgm_critic_loss: Option<f64>,
    pub fdgm_actor_loss: Option<f64>,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.position() {
        Some(pos) => Error::Parse {
            path: path.to_path_buf(),
            line: pos.line() as usize,
            message: e.to_string(),
        },
        None => Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
    }
}

/// Append-only CSV writer with a header row.
pub struct CsvLog<T> {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
    rows: u64,
    _row: std::marker::PhantomData<T>,
}

impl<T: Serialize> CsvLog<T> {
    /// Creates the file and writes the header immediately, so a run with no
    /// rows still leaves a header-only file.
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(BufWriter::new(file));
        writer.write_record(header).map_err(csv_err(path))?;
        writer.flush().map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
            rows: 0,
            _row: std::marker::PhantomData,
        })
    }

    pub fn push(&mut self, row: &T) -> Result<()> {
        self.writer.serialize(row).map_err(csv_err(&self.path))?;
        self.rows += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(io_err(&self.path))
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }
}

pub const METRICS_HEADER: [&str; 14] = [
    "step",
    "average_reward",
    "success_rate",
    "lower_critic_loss",
    "lower_actor_loss",
    "fdgm_critic_loss",
    "fdgm_actor_loss",
    "higher_critic_loss",
    "higher_actor_loss",
    "residual_stored",
    "residual_relabeled",
    "goal_drift",
    "relabel_fallbacks",
    "clamped_actions",
];

pub const LOSS_HEADER: [&str; 7] = [
    "iteration",
    "step",
    "phase",
    "critic_loss",
    "actor_loss",
    "fdgm_critic_loss",
    "fdgm_actor_loss",
];

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(csv_err(path))
}

/// Running mean that reports `None` when empty.
#[derive(Debug, Clone, Copy, Default)]
pub struct Mean {
    sum: f64,
    count: u64,
}

impl Mean {
    pub fn add(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    pub fn add_opt(&mut self, v: Option<f64>) {
        if let Some(v) = v {
            self.add(v);
        }
    }

    pub fn get(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64) -> MetricsRow {
        MetricsRow {
            step,
            average_reward: -12.5,
            success_rate: 0.25,
            lower_critic_loss: Some(0.1),
            lower_actor_loss: None,
            fdgm_critic_loss: Some(1e-7),
            fdgm_actor_loss: None,
            higher_critic_loss: None,
            higher_actor_loss: None,
            residual_stored: Some(0.3),
            residual_relabeled: Some(0.0),
            goal_drift: Some(0.2),
            relabel_fallbacks: 0,
            clamped_actions: 3,
        }
    }

    #[test]
    fn header_matches_row_fields_and_rows_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut log = CsvLog::create(&path, &METRICS_HEADER).unwrap();
        log.push(&row(10)).unwrap();
        log.push(&row(20)).unwrap();
        log.flush().unwrap();
        let back: Vec<MetricsRow> = read_rows(&path).unwrap();
        assert_eq!(back, vec![row(10), row(20)]);
        let mut wtr = csv::Writer::from_writer(vec![]);
        wtr.serialize(row(1)).unwrap();
        let text = String::from_utf8(wtr.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER.join(","));
    }

    #[test]
    fn loss_header_matches_fields() {
        let mut wtr = csv::Writer::from_writer(vec![]);
        wtr.serialize(LossRow {
            iteration: 0,
            step: 10,
            phase: Phase::Lower,
            critic_loss: 1.0,
            actor_loss: None,
            fdgm_critic_loss: Some(2.0),
            fdgm_actor_loss: None,
        })
        .unwrap();
        let text = String::from_utf8(wtr.into_inner().unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), LOSS_HEADER.join(","));
        assert_eq!(lines.next().unwrap(), "0,10,lower,1.0,,2.0,");
    }

    #[test]
    fn header_only_file_is_empty_body() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        CsvLog::<MetricsRow>::create(&path, &METRICS_HEADER).unwrap();
        let rows: Vec<MetricsRow> = read_rows(&path).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn mean_is_none_when_empty() {
        let mut m = Mean::default();
        assert_eq!(m.get(), None);
        m.add(1.0);
        m.add_opt(Some(3.0));
        m.add_opt(None);
        assert_eq!(m.get(), Some(2.0));
    }
}
