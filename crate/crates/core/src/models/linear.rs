use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::numerics::{softmax_raw, ProbDist};
use crate::pseudo::PseudoLabel;
use crate::scalar::Scalar;

/// `p(y | x) = softmax((W x + b) / temperature)` with `W` of shape `K x d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel<T>", bound(deserialize = "T: Scalar"))]
pub struct LinearSoftmaxModel<T> {
    k: usize,
    d: usize,
    w: Vec<Vec<T>>,
    b: Vec<T>,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct RawModel<T> {
    k: usize,
    d: usize,
    w: Vec<Vec<T>>,
    b: Vec<T>,
}

impl<T: Scalar> TryFrom<RawModel<T>> for LinearSoftmaxModel<T> {
    type Error = Error;

    fn try_from(raw: RawModel<T>) -> Result<Self> {
        let m = LinearSoftmaxModel::from_parts(raw.w, raw.b)?;
        check_len("checkpoint k", raw.k, m.k)?;
        check_len("checkpoint d", raw.d, m.d)?;
        Ok(m)
    }
}

impl<T: Scalar> LinearSoftmaxModel<T> {
    pub fn zeros(num_classes: usize, feature_dim: usize) -> Self {
        Self {
            k: num_classes,
            d: feature_dim,
            w: vec![vec![T::zero(); feature_dim]; num_classes],
            b: vec![T::zero(); num_classes],
        }
    }

    pub fn from_parts(w: Vec<Vec<T>>, b: Vec<T>) -> Result<Self> {
        let k = w.len();
        if k < 2 {
            return Err(Error::input("model needs at least 2 classes"));
        }
        check_len("bias", k, b.len())?;
        let d = w[0].len();
        for row in &w {
            check_len("weight row", d, row.len())?;
        }
        let finite = w.iter().flatten().chain(&b).all(|v| v.is_finite());
        if !finite {
            return Err(Error::input("model parameters must be finite"));
        }
        Ok(Self { k, d, w, b })
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn feature_dim(&self) -> usize {
        self.d
    }

    pub fn weights(&self) -> &[Vec<T>] {
        &self.w
    }

    pub fn bias(&self) -> &[T] {
        &self.b
    }

    pub fn num_params(&self) -> usize {
        self.k * (self.d + 1)
    }

    /// Parameters in a fixed order: rows of `W`, then `b`.
    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.w.iter().flatten().chain(self.b.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.w.iter_mut().flatten().chain(self.b.iter_mut())
    }

    /// Euclidean distance between the parameter vectors of two models.
    pub fn param_distance(&self, other: &Self) -> T {
        self.params()
            .zip(other.params())
            .map(|(a, b)| (*a - *b) * (*a - *b))
            .sum::<T>()
            .sqrt()
    }

    pub fn logits(&self, x: &[T]) -> Result<Vec<T>> {
        check_len("feature vector", self.d, x.len())?;
        Ok(self.logits_unchecked(x))
    }

    fn logits_unchecked(&self, x: &[T]) -> Vec<T> {
        self.w
            .iter()
            .zip(&self.b)
            .map(|(row, &bias)| {
                row.iter()
                    .zip(x)
                    .fold(bias, |acc, (&wi, &xi)| acc + wi * xi)
            })
            .collect()
    }

    pub fn forward(&self, x: &[T], temperature: T) -> Result<ProbDist<T>> {
        if !(temperature > T::zero()) || !temperature.is_finite() {
            return Err(Error::config("temperature must be positive"));
        }
        let z = self.logits(x)?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite logits"));
        }
        Ok(softmax_raw(&z, temperature))
    }

    pub fn predict(&self, x: &[T]) -> Result<usize> {
        Ok(crate::numerics::argmax(&self.logits(x)?))
    }

    /// `self += scale * grad`.
    pub fn apply_scaled(&mut self, grad: &GradientRecord<T>, scale: T) {
        for (row, grow) in self.w.iter_mut().zip(&grad.dw) {
            for (p, g) in row.iter_mut().zip(grow) {
                *p = *p + scale * *g;
            }
        }
        for (p, g) in self.b.iter_mut().zip(&grad.db) {
            *p = *p + scale * *g;
        }
    }
}

/// Gradient of a scalar loss with respect to `W` and `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientRecord<T> {
    pub dw: Vec<Vec<T>>,
    pub db: Vec<T>,
}

impl<T: Scalar> GradientRecord<T> {
    pub fn zeros_like(model: &LinearSoftmaxModel<T>) -> Self {
        Self {
            dw: vec![vec![T::zero(); model.d]; model.k],
            db: vec![T::zero(); model.k],
        }
    }

    /// Outer product `g_z x^T` for a logit gradient `g_z`.
    fn from_logit_grad(gz: &[T], x: &[T]) -> Self {
        Self {
            dw: gz
                .iter()
                .map(|&g| x.iter().map(|&xi| g * xi).collect())
                .collect(),
            db: gz.to_vec(),
        }
    }

    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (row, orow) in self.dw.iter_mut().zip(&other.dw) {
            for (a, b) in row.iter_mut().zip(orow) {
                *a = *a + scale * *b;
            }
        }
        for (a, b) in self.db.iter_mut().zip(&other.db) {
            *a = *a + scale * *b;
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.dw.iter().flatten().chain(self.db.iter())
    }
}

/// Loss value and its two components for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<T> {
    pub total: T,
    /// `KL(p_student^tau || p_teacher^tau)`, before the `(1 - w)` factor.
    pub kl: T,
    /// `-ln p_student(label)` at temperature 1; zero when rejected.
    pub ce: T,
}

/// Per-sample loss `(1 - w) KL + w CE` and its closed-form gradient with
/// respect to the student's parameters. The teacher is treated as constant.
///
/// KL compares tempered distributions at `temperature`; CE is untempered. A
/// rejected pseudo-label drops the CE term. With `kl_tau_squared` the KL term
/// is scaled by `temperature^2`.
pub fn grad_total_loss<T: Scalar>(
    student: &LinearSoftmaxModel<T>,
    teacher: &LinearSoftmaxModel<T>,
    x: &[T],
    label: PseudoLabel,
    w: T,
    temperature: T,
    kl_tau_squared: bool,
) -> Result<(LossBreakdown<T>, GradientRecord<T>)> {
    if !(w >= T::zero() && w <= T::one()) {
        return Err(Error::config(format!(
            "loss weight must lie in [0, 1], got {w}"
        )));
    }
    if !(temperature > T::zero()) || !temperature.is_finite() {
        return Err(Error::config("temperature must be positive"));
    }
    check_len("teacher classes", student.k, teacher.k)?;
    check_len("teacher features", student.d, teacher.d)?;
    let zs = student.logits(x)?;
    let zt = teacher.logits_unchecked(x);
    let k = student.k;

    // KL(p || q), p = softmax(zs / tau), q = softmax(zt / tau):
    // d/dzs_j = p_j (ln p_j - ln q_j - KL) / tau
    let p = softmax_raw(&zs, temperature);
    let q = softmax_raw(&zt, temperature);
    let floor = T::kl_floor();
    let log_ratio: Vec<T> = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(&pi, &qi)| {
            if pi > T::zero() {
                pi.ln() - qi.max(floor).ln()
            } else {
                T::zero()
            }
        })
        .collect();
    let kl_raw: T = p
        .probs()
        .iter()
        .zip(&log_ratio)
        .map(|(&pi, &l)| pi * l)
        .sum();
    let kl_scale = if kl_tau_squared {
        temperature * temperature
    } else {
        T::one()
    };
    let kl_weight = (T::one() - w) * kl_scale;
    let mut gz: Vec<T> = p
        .probs()
        .iter()
        .zip(&log_ratio)
        .map(|(&pi, &l)| kl_weight * pi * (l - kl_raw) / temperature)
        .collect();

    let ce = match label {
        PseudoLabel::Rejected => T::zero(),
        PseudoLabel::Class(y) => {
            if y >= k {
                return Err(Error::input(format!("pseudo-label {y} out of range")));
            }
            // -ln softmax(zs)_y via log-sum-exp; gradient p1 - onehot(y)
            let p1 = softmax_raw(&zs, T::one());
            let max = zs.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + zs.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
            for (j, g) in gz.iter_mut().enumerate() {
                let onehot = if j == y { T::one() } else { T::zero() };
                *g = *g + w * (p1.probs()[j] - onehot);
            }
            lse - zs[y]
        }
    };

    let kl = kl_raw.max(T::zero());
    let total = kl_weight * kl + w * ce;
    Ok((
        LossBreakdown { total, kl, ce },
        GradientRecord::from_logit_grad(&gz, x),
    ))
}

/// `teacher <- decay * teacher + (1 - decay) * student`, elementwise.
pub fn ema_update<T: Scalar>(
    teacher: &mut LinearSoftmaxModel<T>,
    student: &LinearSoftmaxModel<T>,
    decay: T,
) -> Result<()> {
    if !(decay >= T::zero() && decay <= T::one()) {
        return Err(Error::config(format!(
            "EMA decay must lie in [0, 1], got {decay}"
        )));
    }
    check_len("EMA classes", teacher.k, student.k)?;
    check_len("EMA features", teacher.d, student.d)?;
    let keep = T::one() - decay;
    for (t, s) in teacher.params_mut().zip(student.params()) {
        *t = decay * *t + keep * *s;
    }
    Ok(())
}
