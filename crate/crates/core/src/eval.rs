//! Accuracy and the closed-gap summary between source-only and supervised
//! bounds.

use serde::{Deserialize, Serialize};

use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Percentage of samples whose predicted class matches the label.
pub fn accuracy<T, F>(predict: F, data: &LabeledDataset<T>) -> Result<f64>
where
    T: Scalar,
    F: Fn(&[T]) -> Result<usize>,
{
    if data.is_empty() {
        return Err(Error::input("accuracy of an empty dataset"));
    }
    let mut hits = 0usize;
    for (x, y) in data.iter() {
        if predict(x)? == y {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / data.len() as f64)
}

/// `min(100, max(0, (method - lb) / (ub - lb) * 100))`; `None` when `lb >= ub`.
pub fn closed_gap(method: f64, lb: f64, ub: f64) -> Option<f64> {
    if lb >= ub {
        return None;
    }
    Some(((method - lb) / (ub - lb) * 100.0).clamp(0.0, 100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub lb: f64,
    pub ub: f64,
    pub method: f64,
    pub cg: Option<f64>,
}

impl BoundsReport {
    pub fn new(lb: f64, ub: f64, method: f64) -> Self {
        Self {
            lb,
            ub,
            method,
            cg: closed_gap(method, lb, ub),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn balanced(k: usize, per: usize) -> LabeledDataset<f64> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for c in 0..k {
            for i in 0..per {
                x.push(vec![c as f64, i as f64]);
                y.push(c);
            }
        }
        LabeledDataset::new(x, y, k).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        let data = balanced(4, 25);
        assert_eq!(accuracy(|_| Ok(2), &data).unwrap(), 25.0);
        assert_eq!(
            accuracy(|x: &[f64]| Ok(x[0] as usize), &data).unwrap(),
            100.0
        );
        let empty = LabeledDataset::<f64>::new(vec![], vec![], 2).unwrap();
        assert!(matches!(
            accuracy(|_| Ok(0), &empty),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn closed_gap_examples() {
        assert!((closed_gap(55.8, 40.0, 66.3).unwrap() - 60.1).abs() < 0.05);
        assert_eq!(closed_gap(92.8, 83.0, 92.0), Some(100.0));
        assert_eq!(closed_gap(40.0, 40.0, 66.3), Some(0.0));
        assert_eq!(closed_gap(66.3, 40.0, 66.3), Some(100.0));
        assert_eq!(closed_gap(30.0, 40.0, 66.3), Some(0.0));
        assert_eq!(closed_gap(60.0, 50.0, 50.0), None);
        assert_eq!(closed_gap(60.0, 51.0, 50.0), None);
        let r = BoundsReport::new(50.0, 50.0, 55.0);
        assert_eq!(r.cg, None);
    }

    proptest! {
        #[test]
        fn closed_gap_bounded_and_monotone(lb in 0.0f64..100.0, gap in 1e-3f64..100.0, m in -50.0f64..150.0, dm in 0.0f64..50.0) {
            let ub = lb + gap;
            let a = closed_gap(m, lb, ub).unwrap();
            let b = closed_gap(m + dm, lb, ub).unwrap();
            prop_assert!((0.0..=100.0).contains(&a));
            prop_assert!(b >= a);
        }
    }
}
