//! JSON checkpoints. Every float is stored as a hexadecimal float string,
//! so a save/load cycle reproduces the state bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{TrainConfig, TrainState};
use crate::data::write_atomic;
use crate::error::{Error, Result};
use crate::hexfloat;
use crate::model::{LatentTable, LossBreakdown, RNet};
use crate::numerics::{AdamConfig, AdamState, Dense, Matrix, MlpParams};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(transparent)]
struct Hex(#[serde(serialize_with = "ser_hex", deserialize_with = "de_hex")] f64);

fn ser_hex<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&hexfloat::format(*x))
}

fn de_hex<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let text = String::deserialize(d)?;
    hexfloat::parse(&text).map_err(serde::de::Error::custom)
}

fn hex_vec(xs: &[f64]) -> Vec<Hex> {
    xs.iter().map(|&x| Hex(x)).collect()
}

fn unhex(xs: Vec<Hex>) -> Vec<f64> {
    xs.into_iter().map(|h| h.0).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    data: Vec<Hex>,
}

impl MatrixDoc {
    fn from(m: &Matrix) -> Self {
        MatrixDoc {
            rows: m.rows(),
            cols: m.cols(),
            data: hex_vec(m.data()),
        }
    }

    fn into_matrix(self) -> Result<Matrix> {
        Matrix::new(self.rows, self.cols, unhex(self.data))
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DenseDoc {
    w: MatrixDoc,
    b: Vec<Hex>,
}

fn mlp_doc(p: &MlpParams) -> Vec<DenseDoc> {
    p.layers
        .iter()
        .map(|l| DenseDoc {
            w: MatrixDoc::from(&l.w),
            b: hex_vec(&l.b),
        })
        .collect()
}

fn mlp_from_doc(doc: Vec<DenseDoc>) -> Result<MlpParams> {
    let layers: Vec<Dense> = doc
        .into_iter()
        .map(|l| {
            Ok(Dense {
                w: l.w.into_matrix()?,
                b: unhex(l.b),
            })
        })
        .collect::<Result<_>>()?;
    let layers: [Dense; 3] = layers.try_into().map_err(|v: Vec<Dense>| {
        Error::Checkpoint(format!("expected 3 layers, found {}", v.len()))
    })?;
    MlpParams::from_layers(layers).map_err(|e| Error::Checkpoint(e.to_string()))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RNetDoc {
    mean_head: Vec<DenseDoc>,
    sigma_head: Vec<DenseDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamDoc {
    lr: Hex,
    beta1: Hex,
    beta2: Hex,
    eps: Hex,
    step: u64,
    m: Vec<Hex>,
    v: Vec<Hex>,
}

impl AdamDoc {
    fn from(a: &AdamState) -> Self {
        AdamDoc {
            lr: Hex(a.config.lr),
            beta1: Hex(a.config.beta1),
            beta2: Hex(a.config.beta2),
            eps: Hex(a.config.eps),
            step: a.step,
            m: hex_vec(&a.m),
            v: hex_vec(&a.v),
        }
    }

    fn into_state(self, expected_len: usize) -> Result<AdamState> {
        if self.m.len() != expected_len || self.v.len() != expected_len {
            return Err(Error::Checkpoint(format!(
                "optimizer moments have lengths {}/{}, parameters {expected_len}",
                self.m.len(),
                self.v.len()
            )));
        }
        Ok(AdamState {
            config: AdamConfig {
                lr: self.lr.0,
                beta1: self.beta1.0,
                beta2: self.beta2.0,
                eps: self.eps.0,
            },
            m: unhex(self.m),
            v: unhex(self.v),
            step: self.step,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossDoc {
    total: Hex,
    data_terms: Vec<Hex>,
    reg_terms: Vec<Hex>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    schema_version: u32,
    config: TrainConfig,
    epoch: usize,
    stopped_early: bool,
    latent: MatrixDoc,
    nets: Vec<RNetDoc>,
    latent_adam: AdamDoc,
    mean_adams: Vec<AdamDoc>,
    sigma_adams: Vec<AdamDoc>,
    history: Vec<LossDoc>,
}

fn to_doc(state: &TrainState) -> CheckpointDoc {
    CheckpointDoc {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        config: state.config.clone(),
        epoch: state.epoch,
        stopped_early: state.stopped_early,
        latent: MatrixDoc::from(&state.latent.h),
        nets: state
            .nets
            .iter()
            .map(|n| RNetDoc {
                mean_head: mlp_doc(&n.mean_head),
                sigma_head: mlp_doc(&n.sigma_head),
            })
            .collect(),
        latent_adam: AdamDoc::from(&state.latent_adam),
        mean_adams: state.mean_adams.iter().map(AdamDoc::from).collect(),
        sigma_adams: state.sigma_adams.iter().map(AdamDoc::from).collect(),
        history: state
            .history
            .iter()
            .map(|l| LossDoc {
                total: Hex(l.total),
                data_terms: hex_vec(&l.data_terms),
                reg_terms: hex_vec(&l.reg_terms),
            })
            .collect(),
    }
}

fn from_doc(doc: CheckpointDoc) -> Result<TrainState> {
    let latent = LatentTable {
        h: doc.latent.into_matrix()?,
    };
    let nets: Vec<RNet> = doc
        .nets
        .into_iter()
        .map(|n| {
            Ok(RNet {
                mean_head: mlp_from_doc(n.mean_head)?,
                sigma_head: mlp_from_doc(n.sigma_head)?,
            })
        })
        .collect::<Result<_>>()?;
    if nets
        .iter()
        .any(|n| n.latent_dim() != latent.dim() || n.sigma_head.output_width() != 1)
    {
        return Err(Error::Checkpoint(
            "network widths disagree with the latent table".into(),
        ));
    }
    if doc.mean_adams.len() != nets.len() || doc.sigma_adams.len() != nets.len() {
        return Err(Error::Checkpoint(
            "one optimizer state per network head is required".into(),
        ));
    }
    if doc.history.len() != doc.epoch {
        return Err(Error::Checkpoint(format!(
            "history has {} entries for {} epochs",
            doc.history.len(),
            doc.epoch
        )));
    }
    let latent_adam = doc.latent_adam.into_state(latent.h.data().len())?;
    let mean_adams = doc
        .mean_adams
        .into_iter()
        .zip(&nets)
        .map(|(a, n)| a.into_state(n.mean_head.param_count()))
        .collect::<Result<_>>()?;
    let sigma_adams = doc
        .sigma_adams
        .into_iter()
        .zip(&nets)
        .map(|(a, n)| a.into_state(n.sigma_head.param_count()))
        .collect::<Result<_>>()?;
    let history = doc
        .history
        .into_iter()
        .map(|l| LossBreakdown {
            total: l.total.0,
            data_terms: unhex(l.data_terms),
            reg_terms: unhex(l.reg_terms),
        })
        .collect();
    Ok(TrainState {
        config: doc.config,
        nets,
        latent,
        latent_adam,
        mean_adams,
        sigma_adams,
        epoch: doc.epoch,
        history,
        stopped_early: doc.stopped_early,
    })
}

pub fn checkpoint_to_string(state: &TrainState) -> String {
    serde_json::to_string(&to_doc(state)).expect("checkpoint serializes")
}

pub fn checkpoint_from_str(text: &str) -> Result<TrainState> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::Checkpoint(format!("not valid JSON: {e}")))?;
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Checkpoint("missing schema_version".into()))?;
    if version != u64::from(CHECKPOINT_SCHEMA_VERSION) {
        return Err(Error::Version {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: CHECKPOINT_SCHEMA_VERSION,
        });
    }
    let doc: CheckpointDoc =
        serde_json::from_value(value).map_err(|e| Error::Checkpoint(e.to_string()))?;
    from_doc(doc)
}

/// Writes the state atomically to `path`.
pub fn checkpoint_save(state: &TrainState, path: &Path) -> Result<()> {
    write_atomic(path, checkpoint_to_string(state).as_bytes())
}

pub fn checkpoint_load(path: &Path) -> Result<TrainState> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text)
}
