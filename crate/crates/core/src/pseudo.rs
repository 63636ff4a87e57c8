//! Collaborative pseudo-labelling: fusing teacher and oracle predictions by
//! agreement and confidence, and the agreement-based confidence threshold.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_len, Error, Result};
use crate::numerics::ProbDist;
use crate::scalar::Scalar;

/// A class index, or no label at all. Serialised as the index or `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PseudoLabel {
    Class(usize),
    Rejected,
}

impl PseudoLabel {
    pub fn class(self) -> Option<usize> {
        match self {
            PseudoLabel::Class(c) => Some(c),
            PseudoLabel::Rejected => None,
        }
    }

    pub fn as_i64(self) -> i64 {
        match self {
            PseudoLabel::Class(c) => c as i64,
            PseudoLabel::Rejected => -1,
        }
    }
}

impl Serialize for PseudoLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i64(self.as_i64())
    }
}

impl<'de> Deserialize<'de> for PseudoLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        match v {
            -1 => Ok(PseudoLabel::Rejected),
            v if v >= 0 => Ok(PseudoLabel::Class(v as usize)),
            v => Err(serde::de::Error::custom(format!(
                "invalid pseudo-label {v}"
            ))),
        }
    }
}

/// Which branch of the fusion rule produced an accepted label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionSource {
    /// Teacher and oracle argmaxes agree.
    Match,
    /// Disagreement resolved in the teacher's favour.
    TeacherConf,
    /// Disagreement resolved in the oracle's favour.
    OracleConf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionDecision<T> {
    pub label: PseudoLabel,
    /// `None` exactly when the label is rejected.
    pub source: Option<FusionSource>,
    pub teacher_conf: T,
    pub oracle_conf: T,
}

/// Minimum confidences below which a model cannot win a disagreement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub psi_teacher: f64,
    pub psi_oracle: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            psi_teacher: 0.1,
            psi_oracle: 0.1,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("psi_teacher", self.psi_teacher),
            ("psi_oracle", self.psi_oracle),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Agreement-or-confidence fusion.
///
/// Agreeing argmaxes yield the shared label. On disagreement a model whose
/// confidence clears its threshold wins against one that does not; when both
/// clear, the more confident wins and a tie goes to the oracle. Otherwise the
/// sample is rejected.
pub fn match_or_conf<T: Scalar>(
    p_teacher: &ProbDist<T>,
    p_oracle: &ProbDist<T>,
    cfg: &FusionConfig,
) -> Result<FusionDecision<T>> {
    check_len("match_or_conf", p_teacher.len(), p_oracle.len())?;
    let (yt, yo) = (p_teacher.argmax(), p_oracle.argmax());
    let cs = p_teacher.probs()[yt];
    let cc = p_oracle.probs()[yo];
    let teacher_ok = cs >= T::lit(cfg.psi_teacher);
    let oracle_ok = cc >= T::lit(cfg.psi_oracle);

    let teacher = (PseudoLabel::Class(yt), Some(FusionSource::TeacherConf));
    let oracle = (PseudoLabel::Class(yo), Some(FusionSource::OracleConf));
    let (label, source) = if yt == yo {
        (PseudoLabel::Class(yt), Some(FusionSource::Match))
    } else {
        match (teacher_ok, oracle_ok) {
            (true, false) => teacher,
            (false, true) => oracle,
            (true, true) if cs > cc => teacher,
            (true, true) => oracle,
            (false, false) => (PseudoLabel::Rejected, None),
        }
    };
    Ok(FusionDecision {
        label,
        source,
        teacher_conf: cs,
        oracle_conf: cc,
    })
}

/// Largest teacher confidence among samples where teacher and oracle agree,
/// or `1` when they never agree.
pub fn compute_gamma<T: Scalar>(
    teacher_preds: &[ProbDist<T>],
    oracle_preds: &[ProbDist<T>],
) -> Result<T> {
    if teacher_preds.is_empty() {
        return Err(Error::input("gamma needs at least one sample"));
    }
    check_len("compute_gamma", teacher_preds.len(), oracle_preds.len())?;
    let mut best: Option<T> = None;
    for (t, o) in teacher_preds.iter().zip(oracle_preds) {
        check_len("compute_gamma classes", t.len(), o.len())?;
        if t.argmax() == o.argmax() {
            let c = t.max_prob();
            best = Some(best.map_or(c, |b| b.max(c)));
        }
    }
    Ok(best.unwrap_or_else(T::one))
}
