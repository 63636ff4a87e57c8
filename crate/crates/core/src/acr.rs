//! Adaptive curriculum regularisation.
//!
//! As training progresses a growing, capped random subset of each batch is
//! inspected. A selected sample has its curriculum weight partially inverted
//! when the student is either unconfident, or confident beyond the agreement
//! threshold while its recent predictions have stopped moving.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{kl_div, ProbDist};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcrConfig {
    /// Growth rate of the inversion probability.
    pub eta: f64,
    /// Maximum fraction of a batch selected for inspection.
    pub rho: f64,
    /// Stability threshold on the KL to the history mean.
    pub sigma: f64,
    /// Inversion strength; 0 keeps `w`, 1 maps it to `1 - w`.
    pub lambda: f64,
    /// History buffer length.
    pub history: usize,
    /// Stored predictions required before the stability test applies.
    pub min_history: usize,
}

impl Default for AcrConfig {
    fn default() -> Self {
        Self {
            eta: 6.0,
            rho: 0.25,
            sigma: 0.05,
            lambda: 0.2,
            history: 10,
            min_history: 2,
        }
    }
}

impl AcrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::config("acr eta must be positive"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::config("acr rho must lie in [0, 1]"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::config("acr sigma must be positive"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("acr lambda must lie in [0, 1]"));
        }
        if self.history < 1 {
            return Err(Error::config("acr history length must be at least 1"));
        }
        if self.min_history < 1 {
            return Err(Error::config("acr min_history must be at least 1"));
        }
        Ok(())
    }
}

/// Fixed-capacity FIFO of a sample's most recent predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer<T> {
    capacity: usize,
    items: VecDeque<ProbDist<T>>,
}

impl<T: Scalar> HistoryBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("history capacity must be at least 1"));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ProbDist<T>> {
        self.items.iter()
    }

    /// Appends `p`, evicting the oldest entry when full.
    pub fn push(&mut self, p: ProbDist<T>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(p);
    }

    pub fn mean(&self) -> Option<ProbDist<T>> {
        ProbDist::mean(self.items.iter()).ok()
    }
}

/// `1 - exp(-eta * e_frac)`.
pub fn inversion_probability<T: Scalar>(e_frac: T, eta: T) -> T {
    T::one() - (-eta * e_frac).exp()
}

/// `floor(rho * n)`, tolerant of representation error in the product.
pub fn selection_cap(n: usize, rho: f64) -> usize {
    ((rho * n as f64) + 1e-9).floor().max(0.0) as usize
}

/// Indices `i` with `u_i < p_inv`, thinned uniformly to at most
/// `floor(rho * n)`. Always draws exactly `n` uniforms before any thinning.
/// The result is sorted.
pub fn select_candidates<R: Rng + ?Sized>(
    n: usize,
    p_inv: f64,
    rho: f64,
    rng: &mut R,
) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < p_inv).collect();
    let cap = selection_cap(n, rho);
    if candidates.len() > cap {
        let keep = index::sample(rng, candidates.len(), cap);
        let mut thinned: Vec<usize> = keep.into_iter().map(|j| candidates[j]).collect();
        thinned.sort_unstable();
        candidates = thinned;
    }
    candidates
}

/// `KL(current || mean(history))`, or `None` while the buffer holds fewer
/// than `min_history` predictions.
pub fn stability_kl<T: Scalar>(
    current: &ProbDist<T>,
    history: &HistoryBuffer<T>,
    min_history: usize,
) -> Result<Option<T>> {
    if history.len() < min_history.max(1) {
        return Ok(None);
    }
    let mean = ProbDist::mean(history.iter())?;
    Ok(Some(kl_div(current, &mean)?))
}

/// `(1 - w) lambda + w (1 - lambda)`.
pub fn invert_weight<T: Scalar>(w: T, lambda: T) -> T {
    (T::one() - w) * lambda + w * (T::one() - lambda)
}

/// Decides whether a selected sample's weight is inverted. Returns the
/// resulting weight and whether inversion happened.
pub fn adjust_weight<T: Scalar>(
    w: T,
    confidence: T,
    stability: Option<T>,
    cfg: &AcrConfig,
    gamma: T,
) -> (T, bool) {
    let sigma = T::lit(cfg.sigma);
    let settled_and_confident = stability.is_some_and(|d| d < sigma) && confidence > gamma;
    if settled_and_confident || confidence < gamma {
        (invert_weight(w, T::lit(cfg.lambda)), true)
    } else {
        (w, false)
    }
}
