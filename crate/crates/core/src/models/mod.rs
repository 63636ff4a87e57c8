//! The three probability sources used during adaptation: a trainable
//! linear-softmax classifier (student, and its EMA teacher), and a frozen
//! template-ensemble oracle that plays the zero-shot role.

mod linear;
mod optim;
mod oracle;

pub use linear::{ema_update, grad_total_loss, GradientRecord, LinearSoftmaxModel, LossBreakdown};
pub use optim::{train_source, AdamW, AdamWConfig, SourceTrainConfig};
pub use oracle::{make_oracle, OracleParams, TemplateOracle};

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Result;

/// Writes a checkpoint as pretty JSON.
pub fn save_json<M: Serialize>(value: &M, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), value)?;
    Ok(())
}

pub fn load_json<M: DeserializeOwned>(path: &Path) -> Result<M> {
    let f = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}
