use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::study::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// `d_i / Σd` for all but the last node.
    NormalizedDropLast,
    /// As above, plus the largest load divided by the magnitude scale.
    NormalizedPlusMagnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub mode: FeatureMode,
    /// kW per unit of the magnitude feature.
    #[serde(default = "default_scale")]
    pub magnitude_scale: f64,
}

fn default_scale() -> f64 {
    10.0
}

impl FeatureSpec {
    pub fn normalized() -> Self {
        Self {
            mode: FeatureMode::NormalizedDropLast,
            magnitude_scale: default_scale(),
        }
    }

    pub fn with_magnitude() -> Self {
        Self {
            mode: FeatureMode::NormalizedPlusMagnitude,
            magnitude_scale: default_scale(),
        }
    }

    /// The usual choice for a node count: plain fractions for three nodes or
    /// fewer, fractions plus magnitude beyond.
    pub fn for_nodes(n: usize) -> Self {
        if n <= 3 {
            Self::normalized()
        } else {
            Self::with_magnitude()
        }
    }

    pub fn dimension(&self, n_nodes: usize) -> usize {
        match self.mode {
            FeatureMode::NormalizedDropLast => n_nodes.saturating_sub(1),
            FeatureMode::NormalizedPlusMagnitude => n_nodes,
        }
    }

    /// Node count behind a feature row of length `dim`.
    pub fn nodes_for_dimension(&self, dim: usize) -> usize {
        match self.mode {
            FeatureMode::NormalizedDropLast => dim + 1,
            FeatureMode::NormalizedPlusMagnitude => dim,
        }
    }
}

/// Feature row for one load vector (kW).
pub fn featurize<T: Real>(loads: &[T], spec: &FeatureSpec) -> Result<Vec<T>> {
    if loads.iter().any(|d| !d.is_finite() || *d < T::zero()) {
        return Err(Error::Validation("loads must be finite and non-negative".into()));
    }
    let total: T = loads.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::Validation("total load must be positive".into()));
    }
    let mut row: Vec<T> = loads[..loads.len().saturating_sub(1)]
        .iter()
        .map(|&d| d / total)
        .collect();
    if spec.mode == FeatureMode::NormalizedPlusMagnitude {
        let largest = loads.iter().copied().fold(T::zero(), T::max);
        row.push(largest / T::lit(spec.magnitude_scale));
    }
    Ok(row)
}

/// Indices into `ds.records`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of the valid samples, first `n_train` for training.
pub fn train_test_split(ds: &Dataset, n_train: usize, seed: u64) -> Result<Split> {
    let mut valid: Vec<usize> = (0..ds.records.len())
        .filter(|&i| ds.records[i].is_valid())
        .collect();
    if n_train == 0 || n_train >= valid.len() {
        return Err(Error::Validation(format!(
            "cannot train on {n_train} of {} valid samples and keep a test set",
            valid.len()
        )));
    }
    valid.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = valid.split_off(n_train);
    Ok(Split { train: valid, test })
}

pub const TRAIN_FRACTION: f64 = 0.8;

/// Training-set size for `n_valid` samples at `fraction`, keeping at least
/// one sample on each side.
pub fn train_size(n_valid: usize, fraction: f64) -> usize {
    ((n_valid as f64 * fraction).round() as usize).clamp(1, n_valid.saturating_sub(1).max(1))
}

/// Features and labels of the given records.
pub fn design_matrix(
    ds: &Dataset,
    idx: &[usize],
    spec: &FeatureSpec,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut x = Vec::with_capacity(idx.len());
    let mut y = Vec::with_capacity(idx.len());
    for &i in idx {
        let r = &ds.records[i];
        let label = r
            .label
            .ok_or_else(|| Error::Validation(format!("sample {i} is invalid")))?;
        x.push(featurize(&r.loads, spec)?);
        y.push(label);
    }
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigFamily;
    use crate::study::{SampleRecord, StudySpec};

    #[test]
    fn documented_rows() {
        let s = FeatureSpec::normalized();
        let a = featurize(&[5.0f64, 5.0, 5.0], &s).unwrap();
        assert!((a[0] - 1.0 / 3.0).abs() < 1e-15 && (a[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(featurize(&[4.0, 8.0, 4.0], &s).unwrap(), vec![0.25, 0.5]);
        let m = featurize(&[10.0f64, 8.0, 6.0, 4.0], &FeatureSpec::with_magnitude()).unwrap();
        let want = [10.0 / 28.0, 8.0 / 28.0, 6.0 / 28.0, 1.0];
        assert!(m.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(s.dimension(3), 2);
        assert_eq!(FeatureSpec::with_magnitude().dimension(4), 4);
    }

    #[test]
    fn zero_total_is_rejected() {
        assert!(featurize(&[0.0, 0.0, 0.0], &FeatureSpec::normalized()).is_err());
        assert!(featurize(&[1.0, -1.0, 2.0], &FeatureSpec::normalized()).is_err());
    }

    #[test]
    fn normalized_rows_ignore_scale() {
        let s = FeatureSpec::normalized();
        let d = [4.5f64, 11.0, 7.25];
        let scaled: Vec<f64> = d.iter().map(|x| 3.7 * x).collect();
        let (a, b) = (featurize(&d, &s).unwrap(), featurize(&scaled, &s).unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-15));
    }

    fn fake_dataset(n: usize) -> Dataset {
        Dataset {
            spec: StudySpec::new(2, n, 0),
            configs: ConfigFamily::single(2).enumerate().unwrap(),
            records: (0..n)
                .map(|i| SampleRecord {
                    sample_id: i,
                    loads: vec![4.0 + i as f64, 5.0],
                    objectives: vec![1.0, 2.0, 3.0],
                    converged: vec![true; 3],
                    label: if i == 3 { None } else { Some(2) },
                })
                .collect(),
        }
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let ds = fake_dataset(20);
        let s = train_test_split(&ds, 14, 8).unwrap();
        assert_eq!(s.train.len(), 14);
        assert_eq!(s.test.len(), 5);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort();
        let expect: Vec<usize> = (0..20).filter(|&i| i != 3).collect();
        assert_eq!(all, expect);
        assert_eq!(s, train_test_split(&ds, 14, 8).unwrap());
        assert!(train_test_split(&ds, 19, 8).is_err());
    }

    #[test]
    fn train_size_keeps_a_test_set() {
        assert_eq!(train_size(100, TRAIN_FRACTION), 80);
        assert_eq!(train_size(97, TRAIN_FRACTION), 78);
        assert_eq!(train_size(2, 0.99), 1);
        assert_eq!(train_size(3, 0.01), 1);
    }
}
