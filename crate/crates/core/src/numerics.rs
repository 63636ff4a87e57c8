//! Probability-vector arithmetic: tempered softmax, KL divergence and its
//! symmetrised form.
//!
//! Every operation here is pure. `ProbDist` values are validated on
//! construction, so downstream code can assume a normalised, non-negative
//! vector of at least two entries.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

/// A normalised probability vector over `K >= 2` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbDist<T>(Vec<T>);

impl<T: Scalar> ProbDist<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::input(format!(
                "a distribution needs at least 2 classes, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < T::zero()) {
            return Err(Error::input(
                "probabilities must be finite and non-negative",
            ));
        }
        let total: T = probs.iter().copied().sum();
        if (total - T::one()).abs() > T::simplex_tol(probs.len()) {
            return Err(Error::input(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self(probs))
    }

    /// Uniform distribution over `k` classes.
    pub fn uniform(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::input("a distribution needs at least 2 classes"));
        }
        let v = T::one() / T::lit(k as f64);
        Ok(Self(vec![v; k]))
    }

    /// Skips validation. Callers guarantee the simplex invariants.
    pub(crate) fn from_vec_unchecked(probs: Vec<T>) -> Self {
        debug_assert!(probs.len() >= 2);
        Self(probs)
    }

    pub fn probs(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Largest entry, i.e. the confidence of the argmax class.
    pub fn max_prob(&self) -> T {
        self.0[self.argmax()]
    }

    /// Elementwise mean of a non-empty set of same-length distributions.
    pub fn mean<'a, I>(dists: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a ProbDist<T>>,
    {
        let mut iter = dists.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::input("mean of zero distributions"))?;
        let mut acc = first.0.clone();
        let mut count = 1usize;
        for d in iter {
            check_len("distribution mean", acc.len(), d.len())?;
            for (a, p) in acc.iter_mut().zip(&d.0) {
                *a = *a + *p;
            }
            count += 1;
        }
        let n = T::lit(count as f64);
        acc.iter_mut().for_each(|a| *a = *a / n);
        Ok(Self(acc))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Pre-softmax scores; always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<T>(Vec<T>);

impl<T: Scalar> Logits<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("logits must be finite"));
        }
        if values.len() < 2 {
            return Err(Error::input("logits need at least 2 classes"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }
}

/// `softmax(z / temperature)`, stabilised by subtracting the maximum logit.
pub fn softmax<T: Scalar>(z: &Logits<T>, temperature: T) -> Result<ProbDist<T>> {
    if !(temperature > T::zero()) || !temperature.is_finite() {
        return Err(Error::config(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    Ok(softmax_raw(&z.0, temperature))
}

/// Softmax over an already-validated slice (finite values, `len >= 2`,
/// positive temperature).
pub(crate) fn softmax_raw<T: Scalar>(z: &[T], temperature: T) -> ProbDist<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = z.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    let total: T = out.iter().copied().sum();
    out.iter_mut().for_each(|p| *p = *p / total);
    ProbDist::from_vec_unchecked(out)
}

/// `KL(p || q) = sum_i p_i ln(p_i / q_i)` with `0 ln 0 = 0` and `q_i` floored
/// at `1e-12`.
pub fn kl_div<T: Scalar>(p: &ProbDist<T>, q: &ProbDist<T>) -> Result<T> {
    check_len("kl_div", p.len(), q.len())?;
    Ok(kl_raw(&p.0, &q.0))
}

pub(crate) fn kl_raw<T: Scalar>(p: &[T], q: &[T]) -> T {
    let floor = T::kl_floor();
    let total: T = p
        .iter()
        .zip(q)
        .filter(|(pi, _)| **pi > T::zero())
        .map(|(&pi, &qi)| pi * (pi.ln() - qi.max(floor).ln()))
        .sum();
    total.max(T::zero())
}

/// Mean of the two KL directions.
pub fn sym_kl<T: Scalar>(p: &ProbDist<T>, q: &ProbDist<T>) -> Result<T> {
    Ok((kl_div(p, q)? + kl_div(q, p)?) / T::lit(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pd(v: &[f64]) -> ProbDist<f64> {
        ProbDist::new(v.to_vec()).unwrap()
    }

    fn logits(v: &[f64]) -> Logits<f64> {
        Logits::new(v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&logits(&[0.0, 0.0]), 2.0).unwrap();
        assert_eq!(p.probs(), &[0.5, 0.5]);

        for c in [-7.5, 0.0, 3.0, 1e4] {
            let p = softmax(&logits(&[c, c, c]), 1.0).unwrap();
            for v in p.probs() {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }

        // e / (e + 1), 1 / (e + 1)
        let p = softmax(&logits(&[2.0, 0.0]), 2.0).unwrap();
        assert!((p.probs()[0] - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!((p.probs()[1] - 0.268_941_421_369_995_1).abs() < 1e-15);
    }

    #[test]
    fn softmax_errors() {
        assert!(matches!(
            softmax(&logits(&[1.0, 2.0]), 0.0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            softmax(&logits(&[1.0, 2.0]), -1.0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            Logits::new(vec![f64::NAN, 0.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            Logits::new(vec![f64::INFINITY, 0.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn softmax_extreme_logits_stay_valid() {
        let p = softmax(&logits(&[1e4, -1e4, 0.0]), 1.0).unwrap();
        assert!(ProbDist::new(p.probs().to_vec()).is_ok());
        assert_eq!(p.argmax(), 0);
        let p = softmax(&logits(&[-1e4, -1e4]), 0.5).unwrap();
        assert_eq!(p.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_div(&pd(&[0.5, 0.5]), &pd(&[0.5, 0.5])).unwrap(), 0.0);

        let v = kl_div(&pd(&[1.0, 0.0]), &pd(&[0.5, 0.5])).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);

        // 0.4 ln(7/3), summed term by term at 30 digits
        let v = kl_div(&pd(&[0.7, 0.3]), &pd(&[0.3, 0.7])).unwrap();
        assert!((v - 0.338_919_144_154_881_45).abs() < 1e-15);
    }

    #[test]
    fn kl_zero_q_is_floored() {
        let v = kl_div(&pd(&[0.5, 0.5]), &pd(&[1.0, 0.0])).unwrap();
        let expected = 0.5 * (0.5f64).ln() + 0.5 * (0.5f64 / 1e-12).ln();
        assert!((v - expected).abs() < 1e-12);
        assert!(v.is_finite());
    }

    #[test]
    fn kl_shape_mismatch() {
        let err = kl_div(&pd(&[0.5, 0.5]), &pd(&[0.2, 0.3, 0.5])).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
        assert!(matches!(
            sym_kl(&pd(&[0.5, 0.5]), &pd(&[0.2, 0.3, 0.5])),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn sym_kl_examples() {
        let p = pd(&[0.7, 0.3]);
        let q = pd(&[0.3, 0.7]);
        assert_eq!(sym_kl(&p, &p).unwrap(), 0.0);
        let s = sym_kl(&p, &q).unwrap();
        assert!((s - 0.338_919_144_154_881_45).abs() < 1e-15);
    }

    #[test]
    fn prob_dist_validation() {
        assert!(ProbDist::new(vec![1.0f64]).is_err());
        assert!(ProbDist::new(vec![0.6f64, 0.6]).is_err());
        assert!(ProbDist::new(vec![1.1f64, -0.1]).is_err());
        assert!(ProbDist::new(vec![0.5f64, 0.5 + 5e-10]).is_ok());
        assert_eq!(pd(&[0.3, 0.3, 0.4]).argmax(), 2);
        assert_eq!(pd(&[0.4, 0.2, 0.4]).argmax(), 0);
    }

    #[test]
    fn works_in_single_precision() {
        let p = softmax(&Logits::new(vec![2.0f32, 0.0]).unwrap(), 2.0).unwrap();
        assert!((p.probs()[0] - 0.731_058_6).abs() < 1e-6);
        let q = ProbDist::new(vec![0.3f32, 0.7]).unwrap();
        assert!(kl_div(&p, &q).unwrap() > 0.0);
    }

    fn arb_dist(k: usize) -> impl Strategy<Value = ProbDist<f64>> {
        prop::collection::vec(1e-6f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum();
            ProbDist::new(v.into_iter().map(|x| x / s).collect()).unwrap()
        })
    }

    fn arb_pair() -> impl Strategy<Value = (ProbDist<f64>, ProbDist<f64>)> {
        (2usize..12).prop_flat_map(|k| (arb_dist(k), arb_dist(k)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn kl_is_nonnegative((p, q) in arb_pair()) {
            prop_assert!(kl_div(&p, &q).unwrap() >= 0.0);
            prop_assert!(kl_div(&p, &p).unwrap() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn sym_kl_is_symmetric((p, q) in arb_pair()) {
            let a = sym_kl(&p, &q).unwrap();
            let b = sym_kl(&q, &p).unwrap();
            prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }

        #[test]
        fn softmax_is_shift_invariant(
            z in prop::collection::vec(-50.0f64..50.0, 2..10),
            c in -1e3f64..1e3,
            t in 0.1f64..10.0,
        ) {
            let a = softmax(&Logits::new(z.clone()).unwrap(), t).unwrap();
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let b = softmax(&Logits::new(shifted).unwrap(), t).unwrap();
            for (x, y) in a.probs().iter().zip(b.probs()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_always_valid(
            z in prop::collection::vec(-1e4f64..1e4, 2..10),
            t in 0.01f64..100.0,
        ) {
            let p = softmax(&Logits::new(z).unwrap(), t).unwrap();
            prop_assert!(ProbDist::new(p.into_vec()).is_ok());
        }

        #[test]
        fn hotter_softmax_is_flatter(
            z in prop::collection::vec(-5.0f64..5.0, 2..8),
            t in 0.2f64..5.0,
            dt in 0.1f64..5.0,
        ) {
            let spread = z.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - z.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-3);
            let l = Logits::new(z).unwrap();
            let cold = softmax(&l, t).unwrap().max_prob();
            let hot = softmax(&l, t + dt).unwrap().max_prob();
            prop_assert!(hot < cold);
        }
    }
}
