//! Command-line runner for the synthetic adaptation benchmark.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use sfda::config::{parse_value, RunConfig, SCHEMA};
use sfda::datagen::make_domain_pair;
use sfda::experiment::{prepare, prepare_with_data, run_prepared, Prepared, Seeds};
use sfda::models::{make_oracle, save_json, train_source, LinearSoftmaxModel};
use sfda::pseudo::{match_or_conf, FusionConfig, FusionSource, PseudoLabel};
use sfda::trainer::Variant;
use sfda::{Dataset, Dist};

#[derive(Parser)]
#[command(
    name = "sfda",
    version,
    about = "Source-free adaptation on synthetic domain shift"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Dotted-key config file; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set acr.h=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write source.csv and target.csv.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite existing files.
        #[arg(long)]
        force: bool,
    },
    /// Train the source model and write it as JSON.
    TrainSource {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Labelled source CSV; generated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the model's predictions on this CSV as `{"id","p"}` JSONL.
        #[arg(long, requires = "predictions")]
        target: Option<PathBuf>,
        #[arg(long, requires = "target")]
        predictions: Option<PathBuf>,
    },
    /// Build the template oracle and report its accuracy on the target set.
    ZeroShotEval {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Target CSV; generated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Write the oracle as JSON.
        #[arg(long)]
        oracle_out: Option<PathBuf>,
        /// Write predictions as `{"id","p"}` JSONL.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Fuse teacher and oracle prediction files into pseudo-labels.
    Fuse {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        oracle: PathBuf,
        /// Output JSONL; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = FusionConfig::default().psi_teacher)]
        psi_s: f64,
        #[arg(long, default_value_t = FusionConfig::default().psi_oracle)]
        psi_c: f64,
    },
    /// Run one adaptation variant and report lb/method/ub/cg.
    Adapt {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
        #[arg(long)]
        seed: Option<u64>,
        /// Per-epoch JSONL.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Summary JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Directory holding source.csv and target.csv; generated when absent.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Grid over one config key and several seeds; writes value,mean_accuracy,std.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dotted config key to vary.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// `a..b` (inclusive) or a comma-separated list.
        #[arg(long, default_value = "0..9")]
        seeds: String,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::from_cli_name(s).ok_or_else(|| {
        let names: Vec<&str> = Variant::ALL.iter().map(|v| v.cli_name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

/// Marks errors that should exit with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn parse_seeds(spec: &str) -> Result<Vec<u64>, UsageError> {
    let bad = || UsageError(format!("bad seed list `{spec}`"));
    if let Some((a, b)) = spec.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct PredictionLine {
    id: usize,
    p: Vec<f64>,
}

#[derive(Serialize)]
struct DecisionLine {
    id: usize,
    label: PseudoLabel,
    source: Option<FusionSource>,
    cs: f64,
    cc: f64,
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_predictions<'a>(path: &Path, preds: impl Iterator<Item = &'a Dist>) -> anyhow::Result<()> {
    let mut w = create(path)?;
    for (id, p) in preds.enumerate() {
        let line = PredictionLine {
            id,
            p: p.probs().to_vec(),
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn read_predictions(path: &Path) -> anyhow::Result<Vec<(usize, Dist)>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionLine = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: bad prediction line", path.display(), n + 1))?;
        let p = Dist::new(rec.p).with_context(|| format!("{}:{}", path.display(), n + 1))?;
        out.push((rec.id, p));
    }
    Ok(out)
}

fn load_data(path: &Path, cfg: &RunConfig) -> anyhow::Result<Dataset> {
    Dataset::load_csv(path, Some(cfg.data.num_classes))
        .with_context(|| format!("reading {}", path.display()))
}

fn generated(cfg: &RunConfig) -> anyhow::Result<(Dataset, Dataset)> {
    Ok(make_domain_pair(
        &cfg.domain_spec(),
        &cfg.shift,
        Seeds::new(cfg.seed).data,
    )?)
}

fn gen_data(cfg: &RunConfig, out: &Path, force: bool) -> anyhow::Result<()> {
    let src_path = out.join("source.csv");
    let tgt_path = out.join("target.csv");
    if !force {
        for p in [&src_path, &tgt_path] {
            if p.exists() {
                bail!("{} exists; pass --force to overwrite", p.display());
            }
        }
    }
    std::fs::create_dir_all(out)?;
    let (source, target) = generated(cfg)?;
    source.save_csv(&src_path)?;
    target.save_csv(&tgt_path)?;
    println!(
        "{}",
        serde_json::json!({
            "source": src_path.display().to_string(),
            "target": tgt_path.display().to_string(),
            "rows": source.len() + target.len(),
        })
    );
    Ok(())
}

fn train_source_cmd(
    cfg: &RunConfig,
    data: Option<&Path>,
    out: &Path,
    target: Option<&Path>,
    predictions: Option<&Path>,
) -> anyhow::Result<()> {
    let source = match data {
        Some(p) => load_data(p, cfg)?,
        None => generated(cfg)?.0,
    };
    let model = train_source(
        LinearSoftmaxModel::zeros(cfg.data.num_classes, cfg.data.feature_dim),
        &source,
        &cfg.supervised(Seeds::new(cfg.seed).source),
    )?;
    save_json(&model, out)?;
    let train_acc = sfda::eval::accuracy(|x| model.predict(x), &source)?;
    let mut report =
        serde_json::json!({ "model": out.display().to_string(), "source_accuracy": train_acc });
    if let (Some(t), Some(p)) = (target, predictions) {
        let target = load_data(t, cfg)?;
        let preds = target
            .features()
            .iter()
            .map(|x| model.forward(x, 1.0))
            .collect::<sfda::Result<Vec<_>>>()?;
        write_predictions(p, preds.iter())?;
        report["target_accuracy"] = sfda::eval::accuracy(|x| model.predict(x), &target)?.into();
    }
    println!("{report}");
    Ok(())
}

fn zero_shot_eval(
    cfg: &RunConfig,
    data: Option<&Path>,
    oracle_out: Option<&Path>,
    predictions: Option<&Path>,
) -> anyhow::Result<()> {
    let target = match data {
        Some(p) => load_data(p, cfg)?,
        None => generated(cfg)?.1,
    };
    let oracle = make_oracle::<f64>(
        &cfg.domain_spec(),
        &cfg.shift,
        &cfg.oracle,
        Seeds::new(cfg.seed).oracle,
    )?;
    if let Some(p) = oracle_out {
        save_json(&oracle, p)?;
    }
    let preds = target
        .features()
        .iter()
        .map(|x| oracle.predict(x))
        .collect::<sfda::Result<Vec<_>>>()?;
    if let Some(p) = predictions {
        write_predictions(p, preds.iter())?;
    }
    let hits = preds
        .iter()
        .zip(target.labels())
        .filter(|(p, &y)| p.argmax() == y)
        .count();
    println!(
        "{}",
        serde_json::json!({ "accuracy": 100.0 * hits as f64 / target.len() as f64, "samples": target.len() })
    );
    Ok(())
}

fn fuse(
    teacher: &Path,
    oracle: &Path,
    out: Option<&Path>,
    fusion: FusionConfig,
) -> anyhow::Result<()> {
    fusion.validate()?;
    let t = read_predictions(teacher)?;
    let o = read_predictions(oracle)?;
    if t.len() != o.len() {
        bail!(
            "teacher has {} predictions, oracle has {}",
            t.len(),
            o.len()
        );
    }
    let mut w = output(out)?;
    for ((tid, tp), (oid, op)) in t.iter().zip(&o) {
        if tid != oid {
            bail!("prediction ids out of step: teacher {tid}, oracle {oid}");
        }
        let d = match_or_conf(tp, op, &fusion)?;
        let line = DecisionLine {
            id: *tid,
            label: d.label,
            source: d.source,
            cs: d.teacher_conf,
            cc: d.oracle_conf,
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn prepared_for(cfg: &RunConfig, data_dir: Option<&Path>) -> anyhow::Result<Prepared> {
    Ok(match data_dir {
        Some(dir) => {
            let source = load_data(&dir.join("source.csv"), cfg)?;
            let target = load_data(&dir.join("target.csv"), cfg)?;
            prepare_with_data(cfg, source, target)?
        }
        None => prepare(cfg)?,
    })
}

fn adapt(
    mut cfg: RunConfig,
    variant: Option<Variant>,
    seed: Option<u64>,
    metrics: Option<PathBuf>,
    summary: Option<PathBuf>,
    data_dir: Option<&Path>,
) -> anyhow::Result<()> {
    if let Some(v) = variant {
        cfg.variant = v;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let metrics = metrics
        .or_else(|| Some(PathBuf::from(&cfg.output.metrics)).filter(|p| !p.as_os_str().is_empty()));
    let summary = summary
        .or_else(|| Some(PathBuf::from(&cfg.output.summary)).filter(|p| !p.as_os_str().is_empty()));

    let prepared = prepared_for(&cfg, data_dir)?;
    let report = run_prepared(&cfg, &prepared)?;
    if let Some(p) = &metrics {
        let mut w = create(p)?;
        for t in &report.traces {
            serde_json::to_writer(&mut w, t)?;
            writeln!(w)?;
        }
        w.flush()?;
    }
    let line = serde_json::to_string(&report.summary)?;
    if let Some(p) = &summary {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, &report.summary)?;
        writeln!(w)?;
        w.flush()?;
    }
    println!("{line}");
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn sweep(
    base: RunConfig,
    param: &str,
    values: &[String],
    seeds: &str,
    variant: Option<Variant>,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    if !SCHEMA.iter().any(|(k, _)| *k == param) || param == "seed" {
        return Err(UsageError(format!("`{param}` is not a sweepable config key")).into());
    }
    let seeds = parse_seeds(seeds)?;
    let mut base = base;
    if let Some(v) = variant {
        base.variant = v;
    }
    let mut jobs = Vec::new();
    for (vi, value) in values.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.set(param, &parse_value(value))?;
        cfg.validate()?;
        for &s in &seeds {
            let mut c = cfg.clone();
            c.seed = s;
            jobs.push((vi, c));
        }
    }

    // independent runs in parallel; results land in job order
    let results: Mutex<Vec<Option<anyhow::Result<f64>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((_, cfg)) = jobs.get(i) else { break };
                let r = sfda::experiment::run(cfg)
                    .map(|r| r.summary.method)
                    .map_err(anyhow::Error::from);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().expect("results lock");

    let mut per_value: Vec<Vec<f64>> = vec![Vec::new(); values.len()];
    for ((vi, _), r) in jobs.iter().zip(results) {
        per_value[*vi].push(r.ok_or_else(|| anyhow!("sweep job did not run"))??);
    }
    let mut w = csv::Writer::from_writer(output(out)?);
    w.write_record(["value", "mean_accuracy", "std"])?;
    for (value, accs) in values.iter().zip(&per_value) {
        let (m, s) = mean_std(accs);
        w.write_record([value.as_str(), &format!("{m:.4}"), &format!("{s:.4}")])?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData { cfg, out, force } => gen_data(&cfg.load()?, &out, force),
        Command::TrainSource {
            cfg,
            data,
            out,
            target,
            predictions,
        } => train_source_cmd(
            &cfg.load()?,
            data.as_deref(),
            &out,
            target.as_deref(),
            predictions.as_deref(),
        ),
        Command::ZeroShotEval {
            cfg,
            data,
            oracle_out,
            predictions,
        } => zero_shot_eval(
            &cfg.load()?,
            data.as_deref(),
            oracle_out.as_deref(),
            predictions.as_deref(),
        ),
        Command::Fuse {
            teacher,
            oracle,
            out,
            psi_s,
            psi_c,
        } => fuse(
            &teacher,
            &oracle,
            out.as_deref(),
            FusionConfig {
                psi_teacher: psi_s,
                psi_oracle: psi_c,
            },
        ),
        Command::Adapt {
            cfg,
            variant,
            seed,
            metrics,
            summary,
            data_dir,
        } => adapt(
            cfg.load()?,
            variant,
            seed,
            metrics,
            summary,
            data_dir.as_deref(),
        ),
        Command::Sweep {
            cfg,
            param,
            values,
            seeds,
            variant,
            out,
        } => sweep(
            cfg.load()?,
            &param,
            &values,
            &seeds,
            variant,
            out.as_deref(),
        ),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.downcast_ref::<UsageError>().is_some()
            || matches!(
                e.downcast_ref::<sfda::Error>(),
                Some(sfda::Error::InvalidConfig(_))
            )
    });
    if usage {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
