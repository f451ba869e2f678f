#![allow(dead_code)]

use std::path::PathBuf;

use autos::config::{Mode, RunConfig};

pub fn suite_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml")
}

/// The checked-in synthetic suite with a given seed and mode.
pub fn suite(seed: u64, mode: Mode) -> RunConfig {
    let mut cfg = RunConfig::from_file(&suite_path()).expect("suite config parses");
    cfg.seed = seed;
    cfg.adapt.mode = mode;
    cfg
}

/// A cut-down suite for quick plumbing tests.
pub fn small(seed: u64, mode: Mode) -> RunConfig {
    let mut cfg = suite(seed, mode);
    let spec = cfg.data.synthetic.as_mut().unwrap();
    spec.samples_per_class = 12;
    spec.teacher_samples_per_class = 4;
    cfg.train.epochs = 4;
    cfg.train.hidden_width = 16;
    cfg.train.warmup_passes = 4;
    cfg.train.local_passes = 2;
    cfg
}
