//! Run artifacts on disk. Every file name carries the config hash so runs of
//! different configs can share one output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::pipeline::{Prediction, RunOutput, RunReport};

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedFiles {
    pub report: PathBuf,
    pub selection: PathBuf,
    pub loss: PathBuf,
    pub predictions: PathBuf,
    pub model: PathBuf,
    pub timing: PathBuf,
}

impl EmittedFiles {
    pub fn named(out_dir: &Path, hash: &str) -> Self {
        EmittedFiles {
            report: out_dir.join(format!("report-{hash}.json")),
            selection: out_dir.join(format!("selection-{hash}.csv")),
            loss: out_dir.join(format!("loss-{hash}.csv")),
            predictions: out_dir.join(format!("predictions-{hash}.csv")),
            model: out_dir.join(format!("model-{hash}.json")),
            timing: out_dir.join(format!("timing-{hash}.json")),
        }
    }
}

#[derive(Debug, Serialize)]
struct SelectionRow {
    epoch: usize,
    domain: usize,
    omega1: Option<f64>,
    omega2: Option<f64>,
    omega: f64,
    kept: bool,
    n_confident_src: usize,
    n_confident_tgt: usize,
}

#[derive(Debug, Serialize)]
struct LossRow {
    epoch: usize,
    #[serde(rename = "L_src")]
    l_src: f64,
    #[serde(rename = "L_ex")]
    l_ex: f64,
    #[serde(rename = "L_in")]
    l_in: f64,
    target_accuracy: Option<f64>,
    teacher_ce_before: f64,
    teacher_ce_after: f64,
}

/// Wall time lives apart from the report so the report stays a pure
/// function of config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub config_hash: String,
    pub wall_time_secs: f64,
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

pub fn emit_report(output: &RunOutput, out_dir: &Path) -> Result<EmittedFiles> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let report = &output.report;
    let files = EmittedFiles::named(out_dir, &report.config_hash);

    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Data(e.to_string()))?;
    write(&files.report, json.as_bytes())?;

    let selection = report.epochs.iter().flat_map(|e| {
        e.domains.iter().map(move |d| SelectionRow {
            epoch: e.epoch,
            domain: d.domain,
            omega1: d.omega1,
            omega2: d.omega2,
            omega: d.omega,
            kept: d.kept,
            n_confident_src: d.n_confident_src,
            n_confident_tgt: d.n_confident_tgt,
        })
    });
    write(&files.selection, &csv_bytes(selection)?)?;

    let loss = report.epochs.iter().map(|e| LossRow {
        epoch: e.epoch,
        l_src: e.l_src,
        l_ex: e.l_ex,
        l_in: e.l_in,
        target_accuracy: e.target_accuracy,
        teacher_ce_before: e.teacher_ce_before,
        teacher_ce_after: e.teacher_ce_after,
    });
    write(&files.loss, &csv_bytes(loss)?)?;

    write(&files.predictions, &csv_bytes(&output.predictions)?)?;

    let ckpt = Checkpoint::from_model(&output.model, report.seed, Some(output.omega_hat.clone()));
    write(&files.model, ckpt.to_json().as_bytes())?;

    let timing = Timing {
        config_hash: report.config_hash.clone(),
        wall_time_secs: output.wall_time_secs,
    };
    let json = serde_json::to_string_pretty(&timing).map_err(|e| Error::Data(e.to_string()))?;
    write(&files.timing, json.as_bytes())?;
    Ok(files)
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<Prediction>, _>>()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}
