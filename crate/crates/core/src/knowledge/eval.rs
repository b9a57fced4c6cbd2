use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::features::{design_matrix, FeatureSpec, Split};
use super::knn::{train_knn, KnnModel};
use super::logistic::train_logistic_baseline;
use crate::error::{Error, Result};
use crate::study::Dataset;

pub const SENSITIVITY_KS: [usize; 4] = [1, 3, 5, 7];
pub const LOGISTIC_EPOCHS: usize = 2000;
pub const LOGISTIC_RATE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KAccuracy {
    pub k: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub train_accuracy: f64,
    /// `confusion[true][predicted]` over the test samples.
    pub confusion: Vec<Vec<usize>>,
    /// `(J_best − J_pred) / J_best` per test sample.
    pub gaps: Vec<f64>,
    pub gap: GapSummary,
    pub k_sensitivity: Vec<KAccuracy>,
    pub logistic_accuracy: Option<f64>,
    pub notes: Vec<String>,
}

fn summarize(gaps: &[f64]) -> GapSummary {
    if gaps.is_empty() {
        return GapSummary {
            mean: 0.0,
            median: 0.0,
            max: 0.0,
        };
    }
    let mut s = gaps.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    };
    GapSummary {
        mean: s.iter().sum::<f64>() / n as f64,
        median,
        max: s[n - 1],
    }
}

fn accuracy(model: &KnnModel<f64>, x: &[Vec<f64>], y: &[usize]) -> Result<f64> {
    let mut hits = 0;
    for (r, &l) in x.iter().zip(y) {
        hits += usize::from(model.predict(r)? == l);
    }
    Ok(hits as f64 / y.len().max(1) as f64)
}

/// Scores `model` on the test part of `split` using the stored objectives.
pub fn evaluate(model: &KnnModel<f64>, ds: &Dataset, split: &Split) -> Result<EvalReport> {
    if split.test.is_empty() {
        return Err(Error::EmptyDataset("empty test split".into()));
    }
    let (xtr, ytr) = design_matrix(ds, &split.train, &model.spec)?;
    let (xte, yte) = design_matrix(ds, &split.test, &model.spec)?;
    let n_conf = ds.n_conf();
    let mut confusion = vec![vec![0usize; n_conf]; n_conf];
    let mut gaps = Vec::with_capacity(yte.len());
    for ((r, &truth), &i) in xte.iter().zip(&yte).zip(&split.test) {
        let pred = model.predict(r)?;
        if pred >= n_conf {
            return Err(Error::Validation(format!(
                "model predicts label {pred} outside the dataset's {n_conf} configurations"
            )));
        }
        confusion[truth][pred] += 1;
        let j = &ds.records[i].objectives;
        let best = j[truth];
        let gap = if j[pred].is_finite() {
            ((best - j[pred]) / best).max(0.0)
        } else {
            1.0
        };
        gaps.push(gap);
    }
    let hits: usize = (0..n_conf).map(|c| confusion[c][c]).sum();
    let mut k_sensitivity = Vec::new();
    for k in SENSITIVITY_KS {
        if k <= model.len() {
            k_sensitivity.push(KAccuracy {
                k,
                accuracy: accuracy(&model.with_k(k)?, &xte, &yte)?,
            });
        }
    }
    Ok(EvalReport {
        k: model.k,
        n_train: split.train.len(),
        n_test: split.test.len(),
        accuracy: hits as f64 / yte.len() as f64,
        train_accuracy: accuracy(model, &xtr, &ytr)?,
        confusion,
        gap: summarize(&gaps),
        gaps,
        k_sensitivity,
        logistic_accuracy: None,
        notes: vec![
            "distance: unweighted Euclidean on unstandardized features".into(),
            "neighbors: uniform weights".into(),
        ],
    })
}

/// Test accuracy of the one-vs-rest logistic baseline trained on the
/// training part of `split`.
pub fn logistic_baseline_accuracy(ds: &Dataset, split: &Split, spec: &FeatureSpec) -> Result<f64> {
    let (xtr, ytr) = design_matrix(ds, &split.train, spec)?;
    let (xte, yte) = design_matrix(ds, &split.test, spec)?;
    let logistic = train_logistic_baseline(&xtr, &ytr, ds.n_conf(), LOGISTIC_EPOCHS, LOGISTIC_RATE)?;
    let hits = xte
        .iter()
        .zip(&yte)
        .filter(|(r, &l)| logistic.predict(r) == l)
        .count();
    Ok(hits as f64 / yte.len().max(1) as f64)
}

/// Trains KNN on the training part of `split`, evaluates it, and adds the
/// logistic baseline's test accuracy.
pub fn fit_and_evaluate(
    ds: &Dataset,
    split: &Split,
    k: usize,
    spec: FeatureSpec,
) -> Result<(KnnModel<f64>, EvalReport)> {
    let (xtr, ytr) = design_matrix(ds, &split.train, &spec)?;
    let model = train_knn(&xtr, &ytr, k, spec)?.with_family(ds.spec.family());
    let mut report = evaluate(&model, ds, split)?;
    report.logistic_accuracy = Some(logistic_baseline_accuracy(ds, split, &spec)?);
    Ok((model, report))
}

impl EvalReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "k-NN (k={}), {} train / {} test", self.k, self.n_train, self.n_test);
        let _ = writeln!(s, "  test accuracy   {:.3}", self.accuracy);
        let _ = writeln!(s, "  train accuracy  {:.3}", self.train_accuracy);
        if let Some(a) = self.logistic_accuracy {
            let _ = writeln!(s, "  logistic (test) {a:.3}");
        }
        let _ = writeln!(
            s,
            "  objective gap   mean {:.4}  median {:.4}  max {:.4}",
            self.gap.mean, self.gap.median, self.gap.max
        );
        for ka in &self.k_sensitivity {
            let _ = writeln!(s, "  k={:<2} accuracy    {:.3}", ka.k, ka.accuracy);
        }
        let _ = writeln!(s, "  confusion (rows: true, cols: predicted)");
        for (i, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:3}")).collect();
            let _ = writeln!(s, "  {i:3} |{}", cells.join(""));
        }
        for n in &self.notes {
            let _ = writeln!(s, "  note: {n}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigFamily;
    use crate::knowledge::train_test_split;
    use crate::study::{SampleRecord, StudySpec};

    // Label 2 when the first load dominates, 0 otherwise; objectives make the
    // label the argmax.
    fn synthetic(n: usize) -> Dataset {
        Dataset {
            spec: StudySpec::new(2, n, 0),
            configs: ConfigFamily::single(2).enumerate().unwrap(),
            records: (0..n)
                .map(|i| {
                    let d1 = 4.0 + 12.0 * i as f64 / n as f64;
                    let label = if d1 > 10.0 { 2 } else { 0 };
                    let mut objectives = vec![1.0, 0.9, 0.95];
                    objectives[label] = 1.2;
                    SampleRecord {
                        sample_id: i,
                        loads: vec![d1, 10.0],
                        objectives,
                        converged: vec![true; 3],
                        label: Some(label),
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn learnable_data_scores_well() {
        let ds = synthetic(60);
        let split = train_test_split(&ds, 45, 1).unwrap();
        let (model, rep) = fit_and_evaluate(&ds, &split, 5, FeatureSpec::normalized()).unwrap();
        assert_eq!(model.k, 5);
        assert!(rep.accuracy >= 0.9, "{}", rep.table());
        let trace: usize = (0..3).map(|c| rep.confusion[c][c]).sum();
        assert_eq!(trace as f64 / rep.n_test as f64, rep.accuracy);
        for (row, c) in rep.confusion.iter().zip(0..) {
            let truth = split.test.iter().filter(|&&i| ds.records[i].label == Some(c)).count();
            assert_eq!(row.iter().sum::<usize>(), truth);
        }
        assert_eq!(rep.k_sensitivity.len(), 4);
        assert!(rep.gaps.iter().all(|g| (0.0..1.0).contains(g)));
        assert!(rep.logistic_accuracy.is_some());
        assert!(rep.table().contains("test accuracy"));
    }

    #[test]
    fn perfect_predictor_has_zero_gaps() {
        let ds = synthetic(30);
        let split = train_test_split(&ds, 20, 2).unwrap();
        // Train on everything with k = 1 so test rows are their own neighbors.
        let all: Vec<usize> = (0..30).collect();
        let (x, y) = design_matrix(&ds, &all, &FeatureSpec::normalized()).unwrap();
        let m = train_knn(&x, &y, 1, FeatureSpec::normalized()).unwrap();
        let rep = evaluate(&m, &ds, &split).unwrap();
        assert_eq!(rep.accuracy, 1.0);
        assert!(rep.gaps.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn constant_predictor_scores_majority_rate() {
        let ds = synthetic(40);
        let split = train_test_split(&ds, 30, 3).unwrap();
        let (x, y) = design_matrix(&ds, &split.train, &FeatureSpec::normalized()).unwrap();
        let m = train_knn(&x, &vec![0; y.len()], y.len(), FeatureSpec::normalized()).unwrap();
        let rep = evaluate(&m, &ds, &split).unwrap();
        let zeros = split.test.iter().filter(|&&i| ds.records[i].label == Some(0)).count();
        assert_eq!(rep.accuracy, zeros as f64 / split.test.len() as f64);
    }

    #[test]
    fn median_of_even_count() {
        let g = summarize(&[0.4, 0.1, 0.3, 0.2]);
        assert!((g.median - 0.25).abs() < 1e-15);
        assert_eq!(g.max, 0.4);
    }
}
