//! Reliability scores and pace functions that turn them into per-sample loss
//! weights.
//!
//! The weight `w` mixes the two loss terms: `w = 0` is pure distillation
//! towards the teacher, `w = 1` is pure pseudo-label cross-entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sym_kl, ProbDist};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpSign {
    Growth,
    Decay,
}

/// Schedule mapping `(reliability, training fraction)` to a weight in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PaceKind {
    /// `w = r`.
    ReliabilityOnly,
    /// `w = r * exp(+-beta * e)`.
    Exponential { beta: f64, sign: ExpSign },
    /// `w = r * (1 + beta * e)`.
    Linear { beta: f64 },
    /// `w = r (1 - r) + 1 / (1 + exp(-beta (12 e - 6)))`.
    Sigmoid { beta: f64 },
    /// `w = r + floor(n e) (1 - r) / n`.
    Stepwise { steps: u32 },
}

impl Default for PaceKind {
    fn default() -> Self {
        PaceKind::Exponential {
            beta: 0.6,
            sign: ExpSign::Growth,
        }
    }
}

impl PaceKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PaceKind::ReliabilityOnly => Ok(()),
            PaceKind::Exponential { beta, .. }
            | PaceKind::Linear { beta }
            | PaceKind::Sigmoid { beta } => {
                if beta > 0.0 && beta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::config(format!(
                        "pace beta must be positive, got {beta}"
                    )))
                }
            }
            PaceKind::Stepwise { steps } => {
                if steps >= 1 {
                    Ok(())
                } else {
                    Err(Error::config("stepwise pace needs at least one step"))
                }
            }
        }
    }

    /// Short name used by the config file and sweep output.
    pub fn name(&self) -> &'static str {
        match self {
            PaceKind::ReliabilityOnly => "reliability-only",
            PaceKind::Exponential { .. } => "exponential",
            PaceKind::Linear { .. } => "linear",
            PaceKind::Sigmoid { .. } => "sigmoid",
            PaceKind::Stepwise { .. } => "stepwise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    pub alpha: f64,
    pub pace: PaceKind,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            pace: PaceKind::default(),
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        self.pace.validate()
    }
}

/// `exp(-alpha * symKL(p_teacher, p_oracle))`.
pub fn reliability<T: Scalar>(
    p_teacher: &ProbDist<T>,
    p_oracle: &ProbDist<T>,
    alpha: T,
) -> Result<T> {
    if !(alpha > T::zero()) {
        return Err(Error::config("alpha must be positive"));
    }
    Ok((-alpha * sym_kl(p_teacher, p_oracle)?).exp())
}

fn clamp01<T: Scalar>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

/// Loss weight for reliability `r` at training fraction `e_frac`.
///
/// `r` of exactly zero (exponent underflow) is accepted.
pub fn pace_weight<T: Scalar>(r: T, e_frac: T, pace: &PaceKind) -> Result<T> {
    if !(r >= T::zero() && r <= T::one()) {
        return Err(Error::input(format!(
            "reliability must lie in (0, 1], got {r}"
        )));
    }
    if !(e_frac >= T::zero() && e_frac <= T::one()) {
        return Err(Error::input(format!(
            "epoch fraction must lie in [0, 1], got {e_frac}"
        )));
    }
    pace.validate()?;
    let one = T::one();
    let w = match *pace {
        PaceKind::ReliabilityOnly => r,
        PaceKind::Exponential { beta, sign } => {
            let s = match sign {
                ExpSign::Growth => one,
                ExpSign::Decay => -one,
            };
            r * (s * T::lit(beta) * e_frac).exp()
        }
        PaceKind::Linear { beta } => r * (one + T::lit(beta) * e_frac),
        PaceKind::Sigmoid { beta } => {
            let spread = T::lit(12.0) * e_frac - T::lit(6.0);
            r * (one - r) + one / (one + (-T::lit(beta) * spread).exp())
        }
        PaceKind::Stepwise { steps } => {
            let n = T::lit(f64::from(steps));
            r + (n * e_frac).floor() * (one - r) / n
        }
    };
    Ok(clamp01(w))
}
