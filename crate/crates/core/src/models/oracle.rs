use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datagen::{shifted_means, DomainSpec, ShiftSpec};
use crate::error::{check_len, Error, Result};
use crate::numerics::{softmax_raw, ProbDist};
use crate::rng;
use crate::scalar::Scalar;

/// Frozen zero-shot classifier built from per-class template prototypes.
///
/// Prediction normalises the input, takes the scaled cosine similarity to each
/// template, averages over the templates of a class and applies a tempered
/// softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOracle<T>", bound(deserialize = "T: Scalar"))]
pub struct TemplateOracle<T> {
    k: usize,
    d: usize,
    m: usize,
    /// `K x m x d`.
    templates: Vec<Vec<Vec<T>>>,
    logit_scale: T,
    temperature: T,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct RawOracle<T> {
    k: usize,
    d: usize,
    m: usize,
    templates: Vec<Vec<Vec<T>>>,
    logit_scale: T,
    temperature: T,
}

impl<T: Scalar> TryFrom<RawOracle<T>> for TemplateOracle<T> {
    type Error = Error;

    fn try_from(raw: RawOracle<T>) -> Result<Self> {
        let o = TemplateOracle::new(raw.templates, raw.logit_scale, raw.temperature)?;
        check_len("checkpoint k", raw.k, o.k)?;
        check_len("checkpoint d", raw.d, o.d)?;
        check_len("checkpoint m", raw.m, o.m)?;
        Ok(o)
    }
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

impl<T: Scalar> TemplateOracle<T> {
    pub fn new(templates: Vec<Vec<Vec<T>>>, logit_scale: T, temperature: T) -> Result<Self> {
        let k = templates.len();
        if k < 2 {
            return Err(Error::config("oracle needs at least 2 classes"));
        }
        let m = templates[0].len();
        if m < 1 {
            return Err(Error::config(
                "oracle needs at least one template per class",
            ));
        }
        let d = templates[0][0].len();
        for class in &templates {
            check_len("templates per class", m, class.len())?;
            for t in class {
                check_len("template dimension", d, t.len())?;
                if t.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("templates must be finite"));
                }
                if norm(t) == T::zero() {
                    return Err(Error::config("templates must have non-zero norm"));
                }
            }
        }
        if !(logit_scale > T::zero()) || !logit_scale.is_finite() {
            return Err(Error::config("logit_scale must be positive"));
        }
        if !(temperature > T::zero()) || !temperature.is_finite() {
            return Err(Error::config("oracle temperature must be positive"));
        }
        Ok(Self {
            k,
            d,
            m,
            templates,
            logit_scale,
            temperature,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn feature_dim(&self) -> usize {
        self.d
    }

    pub fn templates_per_class(&self) -> usize {
        self.m
    }

    pub fn templates(&self) -> &[Vec<Vec<T>>] {
        &self.templates
    }

    pub fn logit_scale(&self) -> T {
        self.logit_scale
    }

    pub fn temperature(&self) -> T {
        self.temperature
    }

    /// Template-averaged scaled cosine similarity per class, before the
    /// softmax. `None` for a zero-norm input.
    pub fn similarities(&self, x: &[T]) -> Result<Option<Vec<T>>> {
        check_len("feature vector", self.d, x.len())?;
        let xn = norm(x);
        if !xn.is_finite() {
            return Err(Error::input("non-finite feature vector"));
        }
        if xn == T::zero() {
            return Ok(None);
        }
        let m = T::lit(self.m as f64);
        let sims = self
            .templates
            .iter()
            .map(|class| {
                let total: T = class
                    .iter()
                    .map(|t| {
                        let dot: T = t.iter().zip(x).map(|(&a, &b)| a * b).sum();
                        self.logit_scale * dot / (norm(t) * xn)
                    })
                    .sum();
                total / m
            })
            .collect();
        Ok(Some(sims))
    }

    pub fn predict(&self, x: &[T]) -> Result<ProbDist<T>> {
        match self.similarities(x)? {
            Some(s) => Ok(softmax_raw(&s, self.temperature)),
            None => ProbDist::uniform(self.k),
        }
    }
}

/// Knobs for the synthetic oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub templates_per_class: usize,
    pub perturbation_scale: f64,
    pub logit_scale: f64,
    pub temperature: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            templates_per_class: 8,
            perturbation_scale: 0.5,
            logit_scale: 3.0,
            temperature: 0.5,
        }
    }
}

/// Builds templates around the midpoint of each source class mean and its
/// shifted target counterpart, with independent Gaussian perturbations.
pub fn make_oracle<T: Scalar>(
    spec: &DomainSpec,
    shift: &ShiftSpec,
    params: &OracleParams,
    seed: u64,
) -> Result<TemplateOracle<T>> {
    spec.validate()?;
    shift.validate(spec.feature_dim)?;
    if params.templates_per_class < 1 {
        return Err(Error::config("templates_per_class must be at least 1"));
    }
    if !(params.perturbation_scale >= 0.0) || !params.perturbation_scale.is_finite() {
        return Err(Error::config("perturbation_scale must be non-negative"));
    }
    let noise =
        Normal::new(0.0, params.perturbation_scale).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = rng::stream(seed, "oracle.templates", &[]);
    let targets = shifted_means(spec, shift);
    let templates = spec
        .class_means
        .iter()
        .zip(&targets)
        .map(|(src, tgt)| {
            let center: Vec<f64> = src.iter().zip(tgt).map(|(a, b)| 0.5 * (a + b)).collect();
            (0..params.templates_per_class)
                .map(|_| {
                    center
                        .iter()
                        .map(|c| T::lit(c + noise.sample(&mut rng)))
                        .collect()
                })
                .collect()
        })
        .collect();
    TemplateOracle::new(
        templates,
        T::lit(params.logit_scale),
        T::lit(params.temperature),
    )
}
