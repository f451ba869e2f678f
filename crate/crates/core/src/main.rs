use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use autos::config::RunConfig;
use autos::data::{self, SampleRecord};
use autos::{gradcheck, pipeline, report, Error, Result};

#[derive(Parser)]
#[command(name = "autos", version, about = "Multi-source domain adaptation with autonomous source selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic suite of a config as CSV tables plus a config
    /// that runs on them.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train, select, adapt and write the run artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy of a predictions file against a labeled table, matched by id.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Finite-difference check of every analytic gradient.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Also write the results as JSON into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn gen(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = load_config(config, seed)?;
    let spec = cfg
        .data
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::Config("gen needs data.synthetic".into()))?;
    let suite = data::generate_synthetic(spec, cfg.seed)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut source_paths = Vec::new();
    for d in &suite.sources {
        let name = format!("{}.csv", d.name);
        data::write_feature_table(&out.join(&name), d.samples())?;
        source_paths.push(PathBuf::from(name));
    }
    // hidden labels go into the label column; `run` reads them for scoring only
    let hidden = suite.target.hidden_labels().expect("synthetic targets carry labels");
    let target: Vec<SampleRecord> = suite
        .target
        .samples()
        .iter()
        .zip(hidden)
        .map(|(s, &c)| SampleRecord {
            label: Some(c),
            ..s.clone()
        })
        .collect();
    data::write_feature_table(&out.join("target.csv"), &target)?;
    data::write_feature_table(&out.join("teacher.csv"), suite.teacher_split.samples())?;

    let mut run_cfg = cfg.clone();
    run_cfg.data.synthetic = None;
    run_cfg.data.source_paths = Some(source_paths);
    run_cfg.data.target_path = Some("target.csv".into());
    run_cfg.data.teacher_path = Some("teacher.csv".into());
    run_cfg.data.class_count = Some(spec.classes);
    let text = toml::to_string(&run_cfg).map_err(|e| Error::Config(e.to_string()))?;
    let cfg_path = out.join("config.toml");
    std::fs::write(&cfg_path, text).map_err(|e| Error::io(&cfg_path, e))?;
    println!(
        "wrote {} sources, target and teacher tables, and {}",
        suite.sources.len(),
        cfg_path.display()
    );
    Ok(())
}

fn run(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = load_config(config, seed)?;
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    let output = pipeline::run_pipeline(&cfg)?;
    let files = report::emit_report(&output, &cfg.out_dir)?;
    let f = &output.report.final_record;
    let kept: Vec<&str> = output
        .report
        .domain_names
        .iter()
        .zip(&f.kept)
        .filter(|(_, &k)| k)
        .map(|(n, _)| n.as_str())
        .collect();
    println!("mode {} seed {} hash {}", output.report.mode, cfg.seed, output.report.config_hash);
    println!("kept {} of {}: {}", f.kept_count, f.kept.len(), kept.join(", "));
    if let Some(a) = f.accuracy {
        println!("target accuracy {a:.4}");
    }
    println!("report {}", files.report.display());
    Ok(())
}

fn eval(predictions: &Path, labels: &Path) -> Result<()> {
    let preds = report::read_predictions(predictions)?;
    let truth: HashMap<String, usize> = match data::load_feature_table(labels, true, None)? {
        data::FeatureTable::Labeled(d) => d
            .samples()
            .iter()
            .map(|s| (s.id.clone(), s.label.expect("labeled")))
            .collect(),
        data::FeatureTable::Unlabeled(_) => unreachable!("loaded with labels"),
    };
    let mut p = Vec::with_capacity(preds.len());
    let mut h = Vec::with_capacity(preds.len());
    for pr in &preds {
        let c = truth
            .get(&pr.id)
            .ok_or_else(|| Error::Data(format!("{}: no label for id {}", labels.display(), pr.id)))?;
        p.push(pr.pred_label);
        h.push(*c);
    }
    println!("accuracy {:.4} over {} samples", pipeline::evaluate(&p, &h)?, p.len());
    Ok(())
}

fn run_gradcheck(seed: u64, instances: usize, out: Option<PathBuf>) -> Result<()> {
    let checks = gradcheck::run_gradcheck(seed, instances)?;
    for c in &checks {
        println!(
            "{:<12} {} instances  max rel err {:.3e}  {}",
            c.loss,
            c.instances,
            c.max_relative_error,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join("gradcheck.json");
        let json = serde_json::to_string_pretty(&checks).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    }
    if checks.iter().all(|c| c.passed) {
        Ok(())
    } else {
        Err(Error::NonFinite("gradient check exceeded tolerance".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { config, seed, out } => gen(&config, seed, &out),
        Command::Run { config, seed, out } => run(&config, seed, out),
        Command::Eval { predictions, labels } => eval(&predictions, &labels),
        Command::Gradcheck { seed, instances, out } => run_gradcheck(seed, instances, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
