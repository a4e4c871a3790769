//! Self-describing checkpoint container:
//!
//! ```text
//! b"IMVCCKPT" | u64 LE header length | JSON header | f64 LE tensor data
//! ```
//!
//! The header lists every tensor's name and shape in storage order, the
//! config and its hash, optimizer scalars, generator positions and the
//! curves so far. Tensor data follows in the same order with no padding.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::run::{CurveRow, StageSchedule, Trainer};
use crate::dataio::MultiViewDataset;
use crate::error::{Error, Result};
use crate::numerics::{AdamState, Module, Rng, RngState};

const MAGIC: &[u8; 8] = b"IMVCCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct OptimizerEntry {
    name: String,
    step_count: u64,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    moments: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    config_hash: String,
    config: TrainConfig,
    n_clusters: usize,
    stages_completed: u8,
    shuffle_rng: RngState,
    cluster_rng: RngState,
    optimizers: Vec<OptimizerEntry>,
    tensors: Vec<TensorEntry>,
    curves: Vec<CurveRow>,
    schedule: Vec<StageSchedule>,
    stage_seconds: Vec<f64>,
}

fn corrupt(path: &Path, detail: impl Into<String>) -> Error {
    Error::Checkpoint(format!("{}: {}", path.display(), detail.into()))
}

fn optimizers<'t>(trainer: &'t Trainer<'_>) -> [(&'static str, &'t AdamState); 3] {
    [
        ("autoencoders", &trainer.ae_opt),
        ("flows", &trainer.flow_opt),
        ("joint", &trainer.joint_opt),
    ]
}

pub fn save_checkpoint(trainer: &Trainer<'_>, path: &Path) -> Result<()> {
    let mut tensors = Vec::new();
    let mut data: Vec<&Array2<f64>> = Vec::new();
    let model = &trainer.model;
    let params = model
        .autoencoders
        .iter()
        .flat_map(|a| a.params())
        .chain(model.flows.iter().flat_map(|f| f.params()));
    for p in params {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: [p.value.nrows(), p.value.ncols()],
        });
        data.push(&p.value);
    }
    let mut opt_entries = Vec::new();
    for (name, opt) in optimizers(trainer) {
        let (first, second) = opt.moments();
        for (kind, buffers) in [("m", first), ("v", second)] {
            for (i, b) in buffers.iter().enumerate() {
                tensors.push(TensorEntry {
                    name: format!("optimizer.{name}.{kind}{i}"),
                    shape: [b.nrows(), b.ncols()],
                });
                data.push(b);
            }
        }
        opt_entries.push(OptimizerEntry {
            name: name.to_string(),
            step_count: opt.step_count,
            learning_rate: opt.learning_rate,
            beta1: opt.beta1,
            beta2: opt.beta2,
            epsilon: opt.epsilon,
            moments: first.len(),
        });
    }
    let header = Header {
        version: VERSION,
        config_hash: trainer.config.hash(),
        config: trainer.config.clone(),
        n_clusters: trainer.n_clusters,
        stages_completed: trainer.stages_completed,
        shuffle_rng: trainer.shuffle_rng.state(),
        cluster_rng: trainer.cluster_rng.state(),
        optimizers: opt_entries,
        tensors,
        curves: trainer.curves.clone(),
        schedule: trainer.schedule.clone(),
        stage_seconds: trainer.stage_seconds.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| corrupt(path, e.to_string()))?;
    let mut bytes = Vec::with_capacity(16 + json.len() + data.iter().map(|a| a.len() * 8).sum::<usize>());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for a in data {
        for x in a.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Rebuilds a trainer exactly as it was saved. `config` must hash to the
/// saved config so a resumed run cannot silently change course.
pub fn load_checkpoint<'a>(dataset: &'a MultiViewDataset, config: &TrainConfig, path: &Path) -> Result<Trainer<'a>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt(path, "not a checkpoint (bad magic)"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| corrupt(path, "header length exceeds file size"))?;
    let header: Header =
        serde_json::from_slice(&bytes[16..header_end]).map_err(|e| corrupt(path, format!("header: {e}")))?;
    if header.version != VERSION {
        return Err(corrupt(path, format!("unsupported version {}", header.version)));
    }
    if header.config_hash != config.hash() || header.config.hash() != header.config_hash {
        return Err(corrupt(path, "config hash mismatch"));
    }

    let mut offset = header_end;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let count = t.shape[0] * t.shape[1];
        let end = offset + count * 8;
        if end > bytes.len() {
            return Err(corrupt(path, format!("tensor `{}` truncated", t.name)));
        }
        let values: Vec<f64> = bytes[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push((t.name.as_str(), Array2::from_shape_vec((t.shape[0], t.shape[1]), values).expect("shape")));
        offset = end;
    }
    if offset != bytes.len() {
        return Err(corrupt(path, "trailing bytes after tensor data"));
    }

    let mut trainer = Trainer::new(dataset, config.clone())?;
    let mut stored = tensors.into_iter();
    {
        let model = &mut trainer.model;
        let params = model
            .autoencoders
            .iter_mut()
            .flat_map(|a| a.params_mut())
            .chain(model.flows.iter_mut().flat_map(|f| f.params_mut()));
        for p in params {
            let (name, value) = stored
                .next()
                .ok_or_else(|| corrupt(path, "fewer parameters than the model"))?;
            if name != p.name || value.dim() != p.value.dim() {
                return Err(corrupt(
                    path,
                    format!("parameter `{name}` {:?} does not match `{}` {:?}", value.dim(), p.name, p.value.dim()),
                ));
            }
            p.value = value;
        }
    }
    for entry in &header.optimizers {
        let mut take = |kind: &str| -> Result<Vec<Array2<f64>>> {
            (0..entry.moments)
                .map(|i| {
                    let expected = format!("optimizer.{}.{kind}{i}", entry.name);
                    match stored.next() {
                        Some((name, value)) if name == expected => Ok(value),
                        _ => Err(corrupt(path, format!("missing `{expected}`"))),
                    }
                })
                .collect()
        };
        let first = take("m")?;
        let second = take("v")?;
        let opt = match entry.name.as_str() {
            "autoencoders" => &mut trainer.ae_opt,
            "flows" => &mut trainer.flow_opt,
            "joint" => &mut trainer.joint_opt,
            other => return Err(corrupt(path, format!("unknown optimizer `{other}`"))),
        };
        *opt = AdamState::with_betas(entry.learning_rate, entry.beta1, entry.beta2, entry.epsilon);
        opt.step_count = entry.step_count;
        opt.set_moments(first, second)?;
    }
    if stored.next().is_some() {
        return Err(corrupt(path, "unexpected extra tensors"));
    }
    trainer.n_clusters = header.n_clusters;
    trainer.stages_completed = header.stages_completed;
    trainer.shuffle_rng = Rng::from_state(header.shuffle_rng);
    trainer.cluster_rng = Rng::from_state(header.cluster_rng);
    trainer.curves = header.curves;
    trainer.schedule = header.schedule;
    trainer.stage_seconds = header.stage_seconds;
    Ok(trainer)
}
