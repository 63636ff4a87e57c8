//! The adaptation loop: fused pseudo-labels, reliability-paced loss weights,
//! adaptive regularisation, AdamW on the student and EMA on the teacher.
//!
//! Target labels are read only to report per-epoch accuracy; no gradient ever
//! depends on them.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::acr::{
    adjust_weight, inversion_probability, select_candidates, stability_kl, AcrConfig, HistoryBuffer,
};
use crate::curriculum::{pace_weight, reliability, CurriculumConfig};
use crate::datagen::LabeledDataset;
use crate::error::{check_len, Error, Result};
use crate::eval::accuracy;
use crate::models::{
    ema_update, grad_total_loss, AdamW, AdamWConfig, GradientRecord, LinearSoftmaxModel,
    TemplateOracle,
};
use crate::numerics::ProbDist;
use crate::pseudo::{
    compute_gamma, match_or_conf, FusionConfig, FusionDecision, FusionSource, PseudoLabel,
};
use crate::rng;
use crate::scalar::Scalar;

/// When the agreement threshold is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// Once, from the initial teacher, before the first epoch.
    Once,
    /// Recomputed from the live teacher at the start of every epoch.
    PerEpoch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmaSchedule {
    Step,
    Epoch,
}

/// Where pseudo-labels come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// Teacher/oracle fusion.
    Fusion,
    /// The teacher's argmax alone.
    Teacher,
}

/// How the per-sample loss weight is chosen before regularisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Curriculum,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Distillation temperature.
    pub temperature: f64,
    /// EMA decay for the teacher.
    pub ema_decay: f64,
    pub ema_per: EmaSchedule,
    pub kl_tau_squared: bool,
    pub labels: LabelSource,
    pub weighting: Weighting,
    pub curriculum: CurriculumConfig,
    pub acr_enabled: bool,
    pub acr: AcrConfig,
    pub fusion: FusionConfig,
    pub optimizer: AdamWConfig,
    pub gamma_mode: GammaMode,
    pub seed: u64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            temperature: 2.0,
            ema_decay: 0.999,
            ema_per: EmaSchedule::Step,
            kl_tau_squared: false,
            labels: LabelSource::Fusion,
            weighting: Weighting::Curriculum,
            curriculum: CurriculumConfig::default(),
            acr_enabled: true,
            acr: AcrConfig::default(),
            fusion: FusionConfig::default(),
            optimizer: AdamWConfig::default(),
            gamma_mode: GammaMode::Once,
            seed: 0,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::config("temperature must be positive"));
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(Error::config("ema decay must lie in [0, 1]"));
        }
        if let Weighting::Fixed(w) = self.weighting {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::config("fixed weight must lie in [0, 1]"));
            }
        }
        self.curriculum.validate()?;
        self.acr.validate()?;
        self.fusion.validate()?;
        self.optimizer.validate()
    }
}

/// Per-target-sample bookkeeping.
#[derive(Debug, Clone)]
pub struct SampleState<T> {
    /// Row index in the target set.
    pub id: usize,
    /// Oracle prediction, computed once before training.
    pub oracle_pred: ProbDist<T>,
    pub history: HistoryBuffer<T>,
    pub last_weight: T,
    pub last_reliability: T,
    pub last_decision: Option<FusionDecision<T>>,
}

/// Per-epoch training dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    /// Mean over samples of the student's top-class probability.
    pub mean_max_confidence: f64,
    /// Mean over batches of the smallest loss weight in the batch.
    pub min_batch_weight_mean: f64,
    /// Student accuracy on the target set after the epoch, in percent.
    pub target_accuracy: f64,
    pub rejected_fraction: f64,
    pub inverted_fraction: f64,
    pub mean_reliability: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptationOutcome<T> {
    pub student: LinearSoftmaxModel<T>,
    pub teacher: LinearSoftmaxModel<T>,
    pub traces: Vec<EpochTrace>,
    pub samples: Vec<SampleState<T>>,
    /// Threshold in force during the final epoch.
    pub gamma: T,
    pub optimizer_steps: usize,
    pub ema_updates: usize,
}

/// `e / E`.
pub fn epoch_fraction(epoch: usize, total: usize) -> f64 {
    epoch as f64 / total as f64
}

fn teacher_gamma<T: Scalar>(
    teacher: &LinearSoftmaxModel<T>,
    target: &LabeledDataset<T>,
    samples: &[SampleState<T>],
) -> Result<T> {
    let teacher_preds = target
        .features()
        .iter()
        .map(|x| teacher.forward(x, T::one()))
        .collect::<Result<Vec<_>>>()?;
    let oracle_preds: Vec<ProbDist<T>> = samples.iter().map(|s| s.oracle_pred.clone()).collect();
    compute_gamma(&teacher_preds, &oracle_preds)
}

#[derive(Default)]
struct EpochStats {
    samples: usize,
    confidence: f64,
    reliability: f64,
    rejected: usize,
    inverted: usize,
    batch_min_weights: Vec<f64>,
}

/// Runs source-free adaptation of `student` (normally a copy of `teacher`) on
/// the target features.
pub fn adapt<T: Scalar>(
    student: LinearSoftmaxModel<T>,
    teacher: LinearSoftmaxModel<T>,
    oracle: &TemplateOracle<T>,
    target: &LabeledDataset<T>,
    cfg: &AdaptationConfig,
) -> Result<AdaptationOutcome<T>> {
    cfg.validate()?;
    if target.is_empty() {
        return Err(Error::input("target set is empty"));
    }
    check_len(
        "teacher classes",
        student.num_classes(),
        teacher.num_classes(),
    )?;
    check_len(
        "teacher features",
        student.feature_dim(),
        teacher.feature_dim(),
    )?;
    check_len(
        "oracle classes",
        student.num_classes(),
        oracle.num_classes(),
    )?;
    check_len(
        "oracle features",
        student.feature_dim(),
        oracle.feature_dim(),
    )?;
    check_len(
        "target features",
        student.feature_dim(),
        target.feature_dim(),
    )?;

    let mut student = student;
    let mut teacher = teacher;
    let mut opt = AdamW::new(cfg.optimizer, &student)?;
    let tau = T::lit(cfg.temperature);
    let decay = T::lit(cfg.ema_decay);
    let alpha = T::lit(cfg.curriculum.alpha);
    let features = target.features();

    let mut samples = features
        .iter()
        .enumerate()
        .map(|(id, x)| {
            Ok(SampleState {
                id,
                oracle_pred: oracle.predict(x)?,
                history: HistoryBuffer::new(cfg.acr.history)?,
                last_weight: T::zero(),
                last_reliability: T::zero(),
                last_decision: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut gamma = teacher_gamma(&teacher, target, &samples)?;
    let mut order: Vec<usize> = (0..target.len()).collect();
    let mut traces = Vec::with_capacity(cfg.epochs);
    let mut optimizer_steps = 0usize;
    let mut ema_updates = 0usize;

    for epoch in 0..cfg.epochs {
        let e_frac = T::lit(epoch_fraction(epoch, cfg.epochs));
        if cfg.gamma_mode == GammaMode::PerEpoch && epoch > 0 {
            gamma = teacher_gamma(&teacher, target, &samples)?;
        }
        let p_inv = inversion_probability(e_frac, T::lit(cfg.acr.eta)).to_f64_lossy();
        order.shuffle(&mut rng::stream(cfg.seed, "adapt.shuffle", &[epoch as u64]));
        let mut stats = EpochStats::default();

        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut student_preds = Vec::with_capacity(batch.len());
            let mut labels = Vec::with_capacity(batch.len());
            let mut weights = Vec::with_capacity(batch.len());

            for &i in batch {
                let x = &features[i];
                let state = &mut samples[i];
                let p_teacher = teacher.forward(x, T::one())?;
                let p_student = student.forward(x, T::one())?;

                let decision = match cfg.labels {
                    LabelSource::Fusion => {
                        match_or_conf(&p_teacher, &state.oracle_pred, &cfg.fusion)?
                    }
                    LabelSource::Teacher => FusionDecision {
                        label: PseudoLabel::Class(p_teacher.argmax()),
                        source: Some(FusionSource::TeacherConf),
                        teacher_conf: p_teacher.max_prob(),
                        oracle_conf: state.oracle_pred.max_prob(),
                    },
                };
                // teacher-only self-training compares the teacher with itself
                let r = match cfg.labels {
                    LabelSource::Fusion => reliability(&p_teacher, &state.oracle_pred, alpha)?,
                    LabelSource::Teacher => T::one(),
                };
                let w = match cfg.weighting {
                    Weighting::Curriculum => pace_weight(r, e_frac, &cfg.curriculum.pace)?,
                    Weighting::Fixed(w) => T::lit(w),
                };

                if decision.label == PseudoLabel::Rejected {
                    stats.rejected += 1;
                }
                stats.confidence += p_student.max_prob().to_f64_lossy();
                stats.reliability += r.to_f64_lossy();
                state.last_reliability = r;
                state.last_decision = Some(decision);
                labels.push(decision.label);
                weights.push(w);
                student_preds.push(p_student);
            }

            if cfg.acr_enabled {
                let mut stream =
                    rng::stream(cfg.seed, "adapt.acr", &[epoch as u64, batch_idx as u64]);
                let selected = select_candidates(batch.len(), p_inv, cfg.acr.rho, &mut stream);
                for j in selected {
                    let state = &samples[batch[j]];
                    let current = &student_preds[j];
                    let d = stability_kl(current, &state.history, cfg.acr.min_history)?;
                    let (w, inverted) =
                        adjust_weight(weights[j], current.max_prob(), d, &cfg.acr, gamma);
                    weights[j] = w;
                    if inverted {
                        stats.inverted += 1;
                    }
                }
            }

            let mut grad = GradientRecord::zeros_like(&student);
            let scale = T::one() / T::lit(batch.len() as f64);
            for (j, &i) in batch.iter().enumerate() {
                let (_, g) = grad_total_loss(
                    &student,
                    &teacher,
                    &features[i],
                    labels[j],
                    weights[j],
                    tau,
                    cfg.kl_tau_squared,
                )?;
                grad.add_scaled(&g, scale);
            }
            opt.step(&mut student, &grad)?;
            optimizer_steps += 1;
            if cfg.ema_per == EmaSchedule::Step {
                ema_update(&mut teacher, &student, decay)?;
                ema_updates += 1;
            }

            let batch_min = weights.iter().copied().fold(T::infinity(), T::min);
            stats.batch_min_weights.push(batch_min.to_f64_lossy());
            for ((&i, p), w) in batch.iter().zip(student_preds).zip(weights) {
                let state = &mut samples[i];
                state.last_weight = w;
                state.history.push(p);
            }
            stats.samples += batch.len();
        }

        if cfg.ema_per == EmaSchedule::Epoch {
            ema_update(&mut teacher, &student, decay)?;
            ema_updates += 1;
        }

        let n = stats.samples as f64;
        traces.push(EpochTrace {
            epoch,
            mean_max_confidence: stats.confidence / n,
            min_batch_weight_mean: stats.batch_min_weights.iter().sum::<f64>()
                / stats.batch_min_weights.len() as f64,
            target_accuracy: accuracy(|x| student.predict(x), target)?,
            rejected_fraction: stats.rejected as f64 / n,
            inverted_fraction: stats.inverted as f64 / n,
            mean_reliability: stats.reliability / n,
        });
    }

    Ok(AdaptationOutcome {
        student,
        teacher,
        traces,
        samples,
        gamma,
        optimizer_steps,
        ema_updates,
    })
}

/// Component subsets compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Self-training on the teacher's own labels, full cross-entropy weight.
    TeacherOnly,
    /// The oracle's zero-shot predictions; no training.
    OracleOnly,
    /// Fused labels, fixed weight 1.
    Fusion,
    /// Fused labels with curriculum weights, no regularisation.
    FusionCurriculum,
    /// Everything.
    Full,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::TeacherOnly,
        Variant::OracleOnly,
        Variant::Fusion,
        Variant::FusionCurriculum,
        Variant::Full,
    ];

    /// Command-line name.
    pub fn cli_name(self) -> &'static str {
        match self {
            Variant::TeacherOnly => "teacher-only",
            Variant::OracleOnly => "oracle-only",
            Variant::Fusion => "no-curriculum",
            Variant::FusionCurriculum => "no-acr",
            Variant::Full => "full",
        }
    }

    pub fn from_cli_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.cli_name() == name)
    }

    pub fn is_training_free(self) -> bool {
        self == Variant::OracleOnly
    }

    /// The adaptation settings this variant runs with.
    pub fn configure(self, base: &AdaptationConfig) -> AdaptationConfig {
        let mut cfg = base.clone();
        match self {
            Variant::TeacherOnly => {
                cfg.labels = LabelSource::Teacher;
                cfg.weighting = Weighting::Fixed(1.0);
                cfg.acr_enabled = false;
            }
            Variant::Fusion => {
                cfg.labels = LabelSource::Fusion;
                cfg.weighting = Weighting::Fixed(1.0);
                cfg.acr_enabled = false;
            }
            Variant::FusionCurriculum => {
                cfg.labels = LabelSource::Fusion;
                cfg.weighting = Weighting::Curriculum;
                cfg.acr_enabled = false;
            }
            Variant::Full | Variant::OracleOnly => {
                cfg.labels = LabelSource::Fusion;
                cfg.weighting = Weighting::Curriculum;
            }
        }
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct VariantOutcome {
    /// Target accuracy in percent.
    pub accuracy: f64,
    /// Empty for the training-free variant.
    pub traces: Vec<EpochTrace>,
}

/// Runs one ablation variant starting from the source-trained teacher.
pub fn run_variant<T: Scalar>(
    variant: Variant,
    teacher: &LinearSoftmaxModel<T>,
    oracle: &TemplateOracle<T>,
    target: &LabeledDataset<T>,
    cfg: &AdaptationConfig,
) -> Result<VariantOutcome> {
    if variant.is_training_free() {
        let acc = accuracy(|x| Ok(oracle.predict(x)?.argmax()), target)?;
        return Ok(VariantOutcome {
            accuracy: acc,
            traces: Vec::new(),
        });
    }
    let cfg = variant.configure(cfg);
    let out = adapt(teacher.clone(), teacher.clone(), oracle, target, &cfg)?;
    let acc = accuracy(|x| out.student.predict(x), target)?;
    Ok(VariantOutcome {
        accuracy: acc,
        traces: out.traces,
    })
}

/// Final target accuracy of one ablation variant.
pub fn ablation_run<T: Scalar>(
    variant: Variant,
    teacher: &LinearSoftmaxModel<T>,
    oracle: &TemplateOracle<T>,
    target: &LabeledDataset<T>,
    cfg: &AdaptationConfig,
) -> Result<f64> {
    Ok(run_variant(variant, teacher, oracle, target, cfg)?.accuracy)
}
