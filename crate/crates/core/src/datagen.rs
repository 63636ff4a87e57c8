//! Synthetic source/target classification data with a controllable shift.
//!
//! Each class is an isotropic Gaussian blob. The target domain moves every
//! class mean by a rotation in the first two feature dimensions followed by a
//! translation, and widens the blobs by a noise multiplier.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub class_means: Vec<Vec<f64>>,
    /// Per-dimension standard deviation of the source clusters.
    pub covariance_scale: f64,
    pub samples_per_class: usize,
}

impl DomainSpec {
    /// Class means evenly spaced on a circle of `radius` in the first two
    /// dimensions, zero elsewhere.
    pub fn ring(
        num_classes: usize,
        feature_dim: usize,
        radius: f64,
        covariance_scale: f64,
        samples_per_class: usize,
    ) -> Self {
        let class_means = (0..num_classes)
            .map(|k| {
                let angle = std::f64::consts::TAU * k as f64 / num_classes.max(1) as f64;
                let mut m = vec![0.0; feature_dim];
                if feature_dim >= 2 {
                    m[0] = radius * angle.cos();
                    m[1] = radius * angle.sin();
                }
                m
            })
            .collect();
        Self {
            num_classes,
            feature_dim,
            class_means,
            covariance_scale,
            samples_per_class,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("num_classes must be at least 2"));
        }
        if self.feature_dim < 2 {
            return Err(Error::config("feature_dim must be at least 2"));
        }
        if self.samples_per_class < 1 {
            return Err(Error::config("samples_per_class must be at least 1"));
        }
        if !(self.covariance_scale > 0.0) || !self.covariance_scale.is_finite() {
            return Err(Error::config("covariance_scale must be positive"));
        }
        check_len("class_means", self.num_classes, self.class_means.len())?;
        for m in &self.class_means {
            check_len("class mean", self.feature_dim, m.len())?;
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("class means must be finite"));
            }
        }
        for i in 0..self.num_classes {
            for j in (i + 1)..self.num_classes {
                if self.class_means[i] == self.class_means[j] {
                    return Err(Error::config(format!("class means {i} and {j} coincide")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    /// Radians, applied in the plane of the first two feature dimensions.
    pub rotation_angle: f64,
    pub translation: Vec<f64>,
    pub noise_scale_multiplier: f64,
}

impl ShiftSpec {
    pub fn none(feature_dim: usize) -> Self {
        Self {
            rotation_angle: 0.0,
            translation: vec![0.0; feature_dim],
            noise_scale_multiplier: 1.0,
        }
    }

    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        if !(self.noise_scale_multiplier > 0.0) || !self.noise_scale_multiplier.is_finite() {
            return Err(Error::config("noise_scale_multiplier must be positive"));
        }
        if !self.rotation_angle.is_finite() {
            return Err(Error::config("rotation_angle must be finite"));
        }
        check_len("translation", feature_dim, self.translation.len())?;
        if self.translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("translation must be finite"));
        }
        Ok(())
    }

    /// Rotates the first two coordinates, then translates.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        let (s, c) = self.rotation_angle.sin_cos();
        out[0] = c * x[0] - s * x[1];
        out[1] = s * x[0] + c * x[1];
        for (o, t) in out.iter_mut().zip(&self.translation) {
            *o += t;
        }
        out
    }
}

/// Features plus integer labels. Target labels are only ever read by
/// evaluation code.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    features: Vec<Vec<T>>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(features: Vec<Vec<T>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        check_len("labels", features.len(), labels.len())?;
        if let Some(first) = features.first() {
            let d = first.len();
            for row in &features {
                check_len("feature row", d, row.len())?;
            }
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::input(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[Vec<T>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], usize)> {
        self.features
            .iter()
            .map(Vec::as_slice)
            .zip(self.labels.iter().copied())
    }

    pub fn cast<U: Scalar>(&self) -> LabeledDataset<U> {
        LabeledDataset {
            features: self
                .features
                .iter()
                .map(|r| r.iter().map(|v| U::lit(v.to_f64_lossy())).collect())
                .collect(),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
        }
    }

    /// Writes `f0,...,f{d-1},label` CSV with a header row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let d = self.feature_dim();
        let mut header: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (x, y) in self.iter() {
            let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            row.push(y.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV layout produced by [`write_csv`](Self::write_csv). With
    /// `num_classes = None` the class count is one past the largest label.
    pub fn read_csv<R: Read>(reader: R, num_classes: Option<usize>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let d = header.len().saturating_sub(1);
        let header_ok = d >= 1
            && header.get(d) == Some("label")
            && (0..d).all(|i| header.get(i) == Some(format!("f{i}").as_str()));
        if !header_ok {
            return Err(Error::input("CSV header must be f0,...,f{d-1},label"));
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut row = Vec::with_capacity(d);
            for i in 0..d {
                let v: f64 = rec[i]
                    .trim()
                    .parse()
                    .map_err(|_| Error::input(format!("bad feature value {:?}", &rec[i])))?;
                row.push(T::lit(v));
            }
            let y: usize = rec[d]
                .trim()
                .parse()
                .map_err(|_| Error::input(format!("bad label {:?}", &rec[d])))?;
            features.push(row);
            labels.push(y);
        }
        let k = match num_classes {
            Some(k) => k,
            None => labels.iter().max().map_or(0, |m| m + 1).max(2),
        };
        Self::new(features, labels, k)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: &Path, num_classes: Option<usize>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f), num_classes)
    }
}

fn draw_domain<R: Rng>(
    rng: &mut R,
    means: &[Vec<f64>],
    std_dev: f64,
    per_class: usize,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let noise = Normal::new(0.0, std_dev).map_err(|e| Error::config(e.to_string()))?;
    let mut features = Vec::with_capacity(means.len() * per_class);
    let mut labels = Vec::with_capacity(means.len() * per_class);
    for (k, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            features.push(mean.iter().map(|m| m + noise.sample(rng)).collect());
            labels.push(k);
        }
    }
    Ok((features, labels))
}

/// Class means of the shifted (target) domain.
pub fn shifted_means(spec: &DomainSpec, shift: &ShiftSpec) -> Vec<Vec<f64>> {
    spec.class_means.iter().map(|m| shift.apply(m)).collect()
}

/// Draws a labelled source set and a shifted target set. Deterministic given
/// `seed`.
pub fn make_domain_pair(
    spec: &DomainSpec,
    shift: &ShiftSpec,
    seed: u64,
) -> Result<(LabeledDataset<f64>, LabeledDataset<f64>)> {
    spec.validate()?;
    shift.validate(spec.feature_dim)?;

    let mut src_rng = rng::stream(seed, "data.source", &[]);
    let (xs, ys) = draw_domain(
        &mut src_rng,
        &spec.class_means,
        spec.covariance_scale,
        spec.samples_per_class,
    )?;

    let mut tgt_rng = rng::stream(seed, "data.target", &[]);
    let (xt, yt) = draw_domain(
        &mut tgt_rng,
        &shifted_means(spec, shift),
        spec.covariance_scale * shift.noise_scale_multiplier,
        spec.samples_per_class,
    )?;

    Ok((
        LabeledDataset::new(xs, ys, spec.num_classes)?,
        LabeledDataset::new(xt, yt, spec.num_classes)?,
    ))
}
