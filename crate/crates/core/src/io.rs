//! Headerless CSV matrices and checkpoint directories.
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every `f64` bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, Dictionary, GenConfig, Provenance};
use crate::error::{shape_err, Error, Result};
use crate::models::{Dense, MlpModel, SaeModel};
use crate::training::{Method, SparseCodingState, TraceRow, TrainTrace, Trained};

pub fn write_matrix_csv(path: impl AsRef<Path>, a: &Array2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut buf = Vec::with_capacity(a.ncols());
    for row in a.rows() {
        buf.clear();
        buf.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::Parse(format!(
                    "{}: ragged row {}",
                    path.display(),
                    rows + 1
                )));
            }
            _ => {}
        }
        for field in rec.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "{}: bad number {field:?} in row {}",
                    path.display(),
                    rows + 1
                ))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), data).map_err(|e| shape_err(e.to_string()))
}

pub fn write_vector_csv(path: impl AsRef<Path>, v: &Array1<f64>) -> Result<()> {
    write_matrix_csv(path, &v.view().insert_axis(ndarray::Axis(0)).to_owned())
}

pub fn read_vector_csv(path: impl AsRef<Path>) -> Result<Array1<f64>> {
    let a = read_matrix_csv(path)?;
    if a.nrows() != 1 {
        return Err(shape_err("vector file must hold one row"));
    }
    Ok(a.row(0).to_owned())
}

/// Writes `X.csv`, `S.csv` and `D.csv` into `dir`. Returns the written paths.
pub fn write_dataset(dir: impl AsRef<Path>, ds: &Dataset) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let files = [
        ("X.csv", &ds.x),
        ("S.csv", &ds.s),
        ("D.csv", ds.dictionary.matrix()),
    ];
    let mut out = Vec::new();
    for (name, a) in files {
        let p = dir.join(name);
        write_matrix_csv(&p, a)?;
        out.push(p);
    }
    Ok(out)
}

/// Reads a dataset written by [`write_dataset`]. `cfg` describes it; its sizes
/// are checked against the files.
pub fn read_dataset(dir: impl AsRef<Path>, cfg: GenConfig) -> Result<Dataset> {
    let dir = dir.as_ref();
    let x = read_matrix_csv(dir.join("X.csv"))?;
    let s = read_matrix_csv(dir.join("S.csv"))?;
    let d = read_matrix_csv(dir.join("D.csv"))?;
    if x.nrows() != s.nrows() || d.dim() != (x.ncols(), s.ncols()) {
        return Err(shape_err("X, S and D do not fit together"));
    }
    if (cfg.n_samples, cfg.n_measurements, cfg.n_sources) != (x.nrows(), x.ncols(), s.ncols()) {
        return Err(shape_err("dataset files disagree with the manifest"));
    }
    Ok(Dataset {
        x,
        s,
        dictionary: Dictionary::from_matrix(d, Provenance::GroundTruth),
        config: cfg,
    })
}

/// Contents of `model.json` in a checkpoint directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub method: Method,
    pub n_measurements: usize,
    pub n_sources: usize,
    /// Widths of the encoder layers' outputs, last one is `N`.
    pub layer_widths: Vec<usize>,
    pub use_bias: bool,
    /// Free-form provenance (training config, seeds, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
}

fn save_dense_stack(dir: &Path, layers: &[Dense]) -> Result<()> {
    for (i, l) in layers.iter().enumerate() {
        write_matrix_csv(dir.join(format!("layer{i}_weight.csv")), &l.weight)?;
        if let Some(b) = &l.bias {
            write_vector_csv(dir.join(format!("layer{i}_bias.csv")), b)?;
        }
    }
    Ok(())
}

fn load_dense_stack(dir: &Path, n_layers: usize, use_bias: bool) -> Result<Vec<Dense>> {
    (0..n_layers)
        .map(|i| {
            let w = read_matrix_csv(dir.join(format!("layer{i}_weight.csv")))?;
            let b = if use_bias {
                Some(read_vector_csv(dir.join(format!("layer{i}_bias.csv")))?)
            } else {
                None
            };
            Dense::new(w, b)
        })
        .collect()
}

/// Saves `trained` as a directory of CSV matrices plus `model.json`.
pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    trained: &Trained,
    extra: serde_json::Value,
) -> Result<CheckpointMeta> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let dictionary = trained.dictionary();
    write_matrix_csv(dir.join("decoder.csv"), dictionary.matrix())?;
    let (layers, decoder_bias): (&[Dense], _) = match trained {
        Trained::Sae(m) | Trained::SaeIto(m) => {
            (std::slice::from_ref(&m.encoder), m.decoder_bias.as_ref())
        }
        Trained::Mlp(m) => (&m.layers, m.decoder_bias.as_ref()),
        Trained::SparseCoding(state) => {
            write_matrix_csv(dir.join("train_codes.csv"), &state.train_codes)?;
            (&[], None)
        }
    };
    save_dense_stack(dir, layers)?;
    if let Some(b) = decoder_bias {
        write_vector_csv(dir.join("decoder_bias.csv"), b)?;
    }
    let meta = CheckpointMeta {
        method: trained.method(),
        n_measurements: dictionary.n_measurements(),
        n_sources: dictionary.n_features(),
        layer_widths: layers.iter().map(Dense::outputs).collect(),
        use_bias: decoder_bias.is_some(),
        extra,
    };
    fs::write(dir.join("model.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(meta)
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(Trained, CheckpointMeta)> {
    let dir = dir.as_ref();
    let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(dir.join("model.json"))?)?;
    let decoder = Dictionary::from_matrix(
        read_matrix_csv(dir.join("decoder.csv"))?,
        Provenance::Learned,
    );
    if decoder.view().dim() != (meta.n_measurements, meta.n_sources) {
        return Err(shape_err("decoder.csv disagrees with model.json"));
    }
    let bias = if meta.use_bias {
        Some(read_vector_csv(dir.join("decoder_bias.csv"))?)
    } else {
        None
    };
    let layers = load_dense_stack(dir, meta.layer_widths.len(), meta.use_bias)?;
    let trained = match meta.method {
        Method::Sae | Method::SaeIto => {
            let encoder = layers
                .into_iter()
                .next()
                .ok_or_else(|| shape_err("SAE checkpoint without encoder"))?;
            let model = SaeModel::new(encoder, decoder, bias)?;
            if meta.method == Method::Sae {
                Trained::Sae(model)
            } else {
                Trained::SaeIto(model)
            }
        }
        Method::Mlp { .. } => Trained::Mlp(MlpModel::new(layers, decoder, bias)?),
        Method::SparseCoding => Trained::SparseCoding(SparseCodingState {
            dictionary: decoder,
            train_codes: read_matrix_csv(dir.join("train_codes.csv"))?,
        }),
    };
    Ok((trained, meta))
}

/// One line of `trace.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceCsvRow {
    pub step: usize,
    pub mse: f64,
    pub latent_mcc: f64,
    pub dict_mcc: f64,
    pub l0: f64,
    pub l1: f64,
    pub flops_train_cum: f64,
    pub flops_inference: f64,
    pub dead_fraction: f64,
    pub train_loss: f64,
}

impl From<&TraceRow> for TraceCsvRow {
    fn from(r: &TraceRow) -> Self {
        TraceCsvRow {
            step: r.step,
            mse: r.metrics.mse,
            latent_mcc: r.metrics.latent_mcc,
            dict_mcc: r.metrics.dict_mcc,
            l0: r.metrics.l0_mean,
            l1: r.metrics.l1_mean,
            flops_train_cum: r.flops_train_cum,
            flops_inference: r.flops_inference,
            dead_fraction: r.metrics.dead_fraction,
            train_loss: r.train_loss,
        }
    }
}

/// Writes a training trace with a header row.
pub fn write_trace_csv(path: impl AsRef<Path>, trace: &TrainTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in &trace.rows {
        w.serialize(TraceCsvRow::from(row))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Vec<TraceCsvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
