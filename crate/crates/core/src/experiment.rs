//! End-to-end runs on the synthetic benchmark: data, source model, bounds,
//! oracle and one adaptation variant.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::datagen::{make_domain_pair, LabeledDataset};
use crate::error::{check_len, Result};
use crate::eval::{accuracy, closed_gap};
use crate::models::{make_oracle, train_source, LinearSoftmaxModel, TemplateOracle};
use crate::rng::derive_seed;
use crate::trainer::{run_variant, EpochTrace, Variant};

/// Per-component seeds derived from the root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub data: u64,
    pub oracle: u64,
    pub source: u64,
    pub upper: u64,
    pub adapt: u64,
}

impl Seeds {
    pub fn new(root: u64) -> Self {
        Self {
            data: derive_seed(root, "data", &[]),
            oracle: derive_seed(root, "oracle", &[]),
            source: derive_seed(root, "source", &[]),
            upper: derive_seed(root, "upper", &[]),
            adapt: derive_seed(root, "adapt", &[]),
        }
    }
}

/// Everything an adaptation run starts from.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub source: LabeledDataset<f64>,
    pub target: LabeledDataset<f64>,
    /// Source-only model, also the initial teacher and student.
    pub teacher: LinearSoftmaxModel<f64>,
    pub oracle: TemplateOracle<f64>,
    /// Source-only accuracy on the target, percent.
    pub lb: f64,
    /// Accuracy of a model trained on target labels, percent.
    pub ub: f64,
}

/// Generates both domains from the config seed and prepares them.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let (source, target) =
        make_domain_pair(&cfg.domain_spec(), &cfg.shift, Seeds::new(cfg.seed).data)?;
    prepare_with_data(cfg, source, target)
}

/// Prepares externally supplied domains.
pub fn prepare_with_data(
    cfg: &RunConfig,
    source: LabeledDataset<f64>,
    target: LabeledDataset<f64>,
) -> Result<Prepared> {
    cfg.validate()?;
    let k = cfg.data.num_classes;
    let d = cfg.data.feature_dim;
    check_len("source features", d, source.feature_dim())?;
    check_len("target features", d, target.feature_dim())?;
    let seeds = Seeds::new(cfg.seed);

    let teacher = train_source(
        LinearSoftmaxModel::zeros(k, d),
        &source,
        &cfg.supervised(seeds.source),
    )?;
    let upper = train_source(
        LinearSoftmaxModel::zeros(k, d),
        &target,
        &cfg.supervised(seeds.upper),
    )?;
    let oracle = make_oracle(&cfg.domain_spec(), &cfg.shift, &cfg.oracle, seeds.oracle)?;
    let lb = accuracy(|x| teacher.predict(x), &target)?;
    let ub = accuracy(|x| upper.predict(x), &target)?;
    Ok(Prepared {
        source,
        target,
        teacher,
        oracle,
        lb,
        ub,
    })
}

/// Final summary of one run, including the resolved config for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub lb: f64,
    pub method: f64,
    pub ub: f64,
    pub cg: Option<f64>,
    pub seed: u64,
    pub variant: String,
    pub config: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: RunSummary,
    pub traces: Vec<EpochTrace>,
}

/// Runs `cfg.variant` on already prepared inputs.
pub fn run_prepared(cfg: &RunConfig, prepared: &Prepared) -> Result<RunReport> {
    let adapt = cfg.adaptation(Seeds::new(cfg.seed).adapt);
    let out = run_variant(
        cfg.variant,
        &prepared.teacher,
        &prepared.oracle,
        &prepared.target,
        &adapt,
    )?;
    Ok(RunReport {
        summary: RunSummary {
            lb: prepared.lb,
            method: out.accuracy,
            ub: prepared.ub,
            cg: closed_gap(out.accuracy, prepared.lb, prepared.ub),
            seed: cfg.seed,
            variant: cfg.variant.cli_name().to_string(),
            config: cfg.to_json_map(),
        },
        traces: out.traces,
    })
}

/// Generates data and runs `cfg.variant` with `cfg.seed`.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    run_prepared(cfg, &prepare(cfg)?)
}

/// Method accuracy for each variant on one seed, sharing the prepared inputs.
pub fn run_all_variants(
    cfg: &RunConfig,
    variants: &[Variant],
) -> Result<(Prepared, Vec<RunReport>)> {
    let prepared = prepare(cfg)?;
    let reports = variants
        .iter()
        .map(|&v| {
            let cfg = RunConfig {
                variant: v,
                ..cfg.clone()
            };
            run_prepared(&cfg, &prepared)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((prepared, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.data.samples_per_class = 40;
        cfg.adapt.epochs = 3;
        cfg.source.epochs = 10;
        cfg
    }

    #[test]
    fn seeds_are_distinct() {
        let s = Seeds::new(0);
        let all = [s.data, s.oracle, s.source, s.upper, s.adapt];
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
        assert_ne!(Seeds::new(1), s);
    }

    #[test]
    fn run_is_reproducible() {
        let cfg = small();
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.traces, b.traces);
        assert_eq!(a.traces.len(), 3);
        assert_eq!(a.summary.variant, "full");
        assert_eq!(a.summary.config.len(), crate::config::SCHEMA.len());
        assert_eq!(
            a.summary.cg,
            closed_gap(a.summary.method, a.summary.lb, a.summary.ub)
        );
    }

    #[test]
    fn oracle_only_has_no_traces() {
        let cfg = RunConfig {
            variant: Variant::OracleOnly,
            ..small()
        };
        let r = run(&cfg).unwrap();
        assert!(r.traces.is_empty());
    }

    #[test]
    fn invalid_config_is_reported_before_work() {
        let mut cfg = small();
        cfg.acr.eta = -1.0;
        assert!(matches!(run(&cfg), Err(crate::Error::InvalidConfig(_))));
    }
}
