//! Structured record of one training run: configuration, a per-epoch
//! log, and which checkpoint the run considers best.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TaskError};

/// One line of the training log. Fields that a task does not measure
/// stay `None` and serialize as nulls.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    #[serde(default)]
    pub acc: Option<f64>,
    #[serde(default)]
    pub tc: Option<f64>,
    #[serde(default)]
    pub spd: Option<f64>,
    #[serde(default)]
    pub sed: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainRun {
    pub task: String,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters the run keeps, when selection applies.
    pub best_epoch: Option<usize>,
    /// Human-readable statement of the selection rule.
    pub selection: String,
}

impl TrainRun {
    pub fn new(task: &str, epochs: usize, batch: usize, lr: f64, seed: u64) -> Self {
        TrainRun {
            task: task.to_string(),
            epochs,
            batch,
            lr,
            seed,
            log: Vec::new(),
            best_epoch: None,
            selection: String::new(),
        }
    }

    /// One JSON object per line: a header, then each epoch in order.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let header = serde_json::json!({
            "task": self.task,
            "epochs": self.epochs,
            "batch": self.batch,
            "lr": self.lr,
            "seed": self.seed,
            "best_epoch": self.best_epoch,
            "selection": self.selection,
        });
        out.push_str(&header.to_string());
        out.push('\n');
        for e in &self.log {
            out.push_str(
                &serde_json::to_string(e).map_err(|e| TaskError::Data(e.to_string()))?,
            );
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: serde_json::Value = lines
            .next()
            .ok_or_else(|| TaskError::Data("empty run log".into()))
            .and_then(|l| serde_json::from_str(l).map_err(|e| TaskError::Data(e.to_string())))?;
        let mut run = TrainRun::new(
            header["task"].as_str().unwrap_or_default(),
            header["epochs"].as_u64().unwrap_or(0) as usize,
            header["batch"].as_u64().unwrap_or(0) as usize,
            header["lr"].as_f64().unwrap_or(0.0),
            header["seed"].as_u64().unwrap_or(0),
        );
        run.best_epoch = header["best_epoch"].as_u64().map(|v| v as usize);
        run.selection = header["selection"].as_str().unwrap_or_default().to_string();
        for l in lines {
            run.log
                .push(serde_json::from_str(l).map_err(|e| TaskError::Data(e.to_string()))?);
        }
        Ok(run)
    }
}
