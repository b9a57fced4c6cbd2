use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{featurize, FeatureSpec};
use crate::config::ConfigFamily;
use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::scalar::Real;

pub const DEFAULT_K: usize = 5;

/// Stored feature rows and labels; prediction is a k-nearest vote under the
/// Euclidean distance.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel<T> {
    pub spec: FeatureSpec,
    /// The family the labels index into, when known.
    pub family: Option<ConfigFamily>,
    pub k: usize,
    rows: Vec<Vec<T>>,
    labels: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    spec: FeatureSpec,
    #[serde(default)]
    family: Option<ConfigFamily>,
    k: usize,
    rows: Vec<Vec<f64>>,
}

pub fn train_knn<T: Real>(
    features: &[Vec<T>],
    labels: &[usize],
    k: usize,
    spec: FeatureSpec,
) -> Result<KnnModel<T>> {
    if features.len() != labels.len() {
        return Err(Error::Dimension {
            expected: features.len(),
            got: labels.len(),
        });
    }
    if k == 0 || k > features.len() {
        return Err(Error::Validation(format!(
            "k = {k} needs 1 <= k <= {} training rows",
            features.len()
        )));
    }
    let dim = features[0].len();
    for row in features {
        if row.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("training rows must be finite".into()));
        }
    }
    Ok(KnnModel {
        spec,
        family: None,
        k,
        rows: features.to_vec(),
        labels: labels.to_vec(),
    })
}

impl<T: Real> KnnModel<T> {
    pub fn with_family(mut self, family: ConfigFamily) -> Self {
        self.family = Some(family);
        self
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Same rows, different neighbor count.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        let mut m = train_knn(&self.rows, &self.labels, k, self.spec)?;
        m.family = self.family;
        Ok(m)
    }

    /// Majority label among the `k` nearest rows. Distance ties at the
    /// cut-off favour lower labels; vote ties go to the smaller summed
    /// distance, then the lower label.
    pub fn predict(&self, row: &[T]) -> Result<usize> {
        if row.len() != self.dimension() {
            return Err(Error::Dimension {
                expected: self.dimension(),
                got: row.len(),
            });
        }
        let mut near: Vec<(T, usize)> = self
            .rows
            .iter()
            .zip(&self.labels)
            .map(|(r, &l)| {
                let d2: T = r.iter().zip(row).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
                (d2.sqrt(), l)
            })
            .collect();
        near.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        });
        let n_labels = self.labels.iter().max().map_or(0, |m| m + 1);
        let mut votes = vec![0usize; n_labels];
        let mut dist = vec![T::zero(); n_labels];
        for &(d, l) in &near[..self.k] {
            votes[l] += 1;
            dist[l] += d;
        }
        let mut best = 0;
        for l in 1..n_labels {
            if votes[l] > votes[best] || (votes[l] == votes[best] && votes[l] > 0 && dist[l] < dist[best]) {
                best = l;
            }
        }
        Ok(best)
    }

    /// Featurizes `loads` (kW) with the model's spec, then predicts.
    pub fn predict_loads(&self, loads: &[T]) -> Result<usize> {
        self.predict(&featurize(loads, &self.spec)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            spec: self.spec,
            family: self.family,
            k: self.k,
            rows: self
                .rows
                .iter()
                .zip(&self.labels)
                .map(|(r, &l)| {
                    let mut v: Vec<f64> = r.iter().map(|x| x.to_f64_lossy()).collect();
                    v.push(l as f64);
                    v
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let mut rows = Vec::with_capacity(file.rows.len());
        let mut labels = Vec::with_capacity(file.rows.len());
        for r in &file.rows {
            let (&l, feats) = r
                .split_last()
                .ok_or_else(|| Error::Validation("empty model row".into()))?;
            if !(l >= 0.0 && l.fract() == 0.0) {
                return Err(Error::Validation(format!("bad label {l} in model")));
            }
            labels.push(l as usize);
            rows.push(feats.iter().map(|&x| T::lit(x)).collect());
        }
        if rows.is_empty() {
            return Err(Error::EmptyDataset("model has no rows".into()));
        }
        let mut m = train_knn(&rows, &labels, file.k, file.spec)?;
        m.family = file.family;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
