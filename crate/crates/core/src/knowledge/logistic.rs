use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// One-vs-rest logistic regression, used only as a comparison row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LogisticModel<T: Real> {
    /// Per class: bias followed by one weight per feature.
    pub weights: Vec<Vec<T>>,
}

fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// Full-batch gradient descent on the mean log-loss of each class. Biases
/// start at the log-odds of the class frequencies, so zero epochs give a
/// model that ignores the features and predicts the majority class.
pub fn train_logistic_baseline<T: Real>(
    features: &[Vec<T>],
    labels: &[usize],
    n_classes: usize,
    epochs: usize,
    rate: T,
) -> Result<LogisticModel<T>> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::Dimension {
            expected: features.len(),
            got: labels.len(),
        });
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Validation(format!("label {l} >= {n_classes} classes")));
    }
    let dim = features[0].len();
    let n = T::from_usize(features.len()).unwrap();
    let eps = T::lit(1e-6);
    let mut weights: Vec<Vec<T>> = (0..n_classes)
        .map(|c| {
            let count = T::from_usize(labels.iter().filter(|&&l| l == c).count()).unwrap();
            let p = (count / n).max(eps).min(T::one() - eps);
            let mut w = vec![T::zero(); dim + 1];
            w[0] = (p / (T::one() - p)).ln();
            w
        })
        .collect();
    let mut grad = vec![T::zero(); dim + 1];
    for _ in 0..epochs {
        for (c, w) in weights.iter_mut().enumerate() {
            grad.iter_mut().for_each(|g| *g = T::zero());
            for (x, &l) in features.iter().zip(labels) {
                let z = w[0] + x.iter().zip(&w[1..]).map(|(a, b)| *a * *b).sum::<T>();
                let target = if l == c { T::one() } else { T::zero() };
                let e = sigmoid(z) - target;
                grad[0] += e;
                for j in 0..dim {
                    grad[j + 1] += e * x[j];
                }
            }
            for j in 0..=dim {
                w[j] -= rate * grad[j] / n;
            }
        }
    }
    Ok(LogisticModel { weights })
}

impl<T: Real> LogisticModel<T> {
    /// Class with the highest score; ties go to the lower class.
    pub fn predict(&self, row: &[T]) -> usize {
        let mut best = 0;
        let mut best_z = T::neg_infinity();
        for (c, w) in self.weights.iter().enumerate() {
            let z = w[0] + row.iter().zip(&w[1..]).map(|(a, b)| *a * *b).sum::<T>();
            if z > best_z {
                best = c;
                best_z = z;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_classes_are_learned() {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![i as f64 / 40.0, 1.0 - i as f64 / 40.0])
            .collect();
        let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let m = train_logistic_baseline(&x, &y, 2, 3000, 5.0).unwrap();
        let acc = x.iter().zip(&y).filter(|(r, &l)| m.predict(r) == l).count();
        assert_eq!(acc, 40);
    }

    #[test]
    fn zero_epochs_predicts_majority() {
        let x = vec![vec![0.1], vec![0.9], vec![0.5], vec![0.2]];
        let y = vec![1, 1, 0, 1];
        let m = train_logistic_baseline(&x, &y, 3, 0, 1.0).unwrap();
        for r in &x {
            assert_eq!(m.predict(r), 1);
        }
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        assert!(train_logistic_baseline(&[vec![0.0f64]], &[2], 2, 1, 0.1).is_err());
    }
}
