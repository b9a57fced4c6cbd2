//! CSV tables behind the usual study figures.

use std::path::Path;

use clap::ValueEnum;
use thermoforge::composer::MergeEstimate;
use thermoforge::knowledge::{featurize, FeatureSpec, KnnModel};
use thermoforge::study::{relative_performance, success_rate, Dataset};
use thermoforge::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    /// Load fractions and label per valid sample.
    FeatureScatter,
    /// Load fractions and `J / J_best` for every configuration.
    RelativePerformance,
    /// Mean load and objective, one row per sample and configuration.
    EnduranceVsMeanload,
    SuccessRate,
    /// Counts of merge-estimate regrets over equal bins on [0, 1].
    RegretHistogram,
}

fn need<'a, T: ?Sized>(x: Option<&'a T>, what: &str) -> Result<&'a T> {
    x.ok_or_else(|| Error::Validation(format!("this plot kind needs --{what}")))
}

fn fraction_header(n: usize) -> Vec<String> {
    (1..n).map(|i| format!("D_{i}")).collect()
}

fn fractions(loads: &[f64]) -> Result<Vec<String>> {
    Ok(featurize(loads, &FeatureSpec::normalized())?
        .iter()
        .map(f64::to_string)
        .collect())
}

pub fn emit_plot_data(
    kind: Kind,
    ds: Option<&Dataset>,
    model: Option<&KnnModel<f64>>,
    regrets: Option<&[f64]>,
    bins: usize,
) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    match kind {
        Kind::FeatureScatter => {
            let ds = need(ds, "dataset")?;
            let mut h = vec!["sample_id".to_string()];
            h.extend(fraction_header(ds.spec.n_nodes));
            h.push("label".into());
            w.write_record(&h)?;
            for r in ds.valid() {
                let mut row = vec![r.sample_id.to_string()];
                row.extend(fractions(&r.loads)?);
                row.push(r.label.unwrap_or_default().to_string());
                w.write_record(&row)?;
            }
        }
        Kind::RelativePerformance => {
            let ds = need(ds, "dataset")?;
            let mut h = vec!["sample_id".to_string()];
            h.extend(fraction_header(ds.spec.n_nodes));
            h.extend(ds.configs.iter().map(|g| format!("ratio_{}", g.canonical_string())));
            w.write_record(&h)?;
            let ratios = (0..ds.n_conf())
                .map(|c| relative_performance(ds, c))
                .collect::<Result<Vec<_>>>()?;
            for (k, r) in ds.valid().enumerate() {
                let mut row = vec![r.sample_id.to_string()];
                row.extend(fractions(&r.loads)?);
                row.extend(ratios.iter().map(|col| col[k].to_string()));
                w.write_record(&row)?;
            }
        }
        Kind::EnduranceVsMeanload => {
            let ds = need(ds, "dataset")?;
            w.write_record(["sample_id", "mean_load", "config", "J", "optimal", "predicted"])?;
            for r in ds.valid() {
                let mean = r.loads.iter().sum::<f64>() / r.loads.len() as f64;
                let predicted = match model {
                    Some(m) => Some(m.predict_loads(&r.loads)?),
                    None => None,
                };
                for (c, g) in ds.configs.iter().enumerate() {
                    w.write_record([
                        r.sample_id.to_string(),
                        mean.to_string(),
                        g.canonical_string(),
                        r.objectives[c].to_string(),
                        u8::from(r.label == Some(c)).to_string(),
                        predicted.map_or(String::new(), |p| u8::from(p == c).to_string()),
                    ])?;
                }
            }
        }
        Kind::SuccessRate => {
            let ds = need(ds, "dataset")?;
            w.write_record(["index", "config", "success_rate"])?;
            for (i, (g, s)) in ds.configs.iter().zip(success_rate(ds)?).enumerate() {
                w.write_record([i.to_string(), g.canonical_string(), s.to_string()])?;
            }
        }
        Kind::RegretHistogram => {
            let regrets = need(regrets, "report")?;
            if bins == 0 {
                return Err(Error::Validation("--bins must be at least 1".into()));
            }
            w.write_record(["lower", "upper", "count"])?;
            for (i, c) in histogram(regrets, bins).iter().enumerate() {
                w.write_record([
                    (i as f64 / bins as f64).to_string(),
                    ((i + 1) as f64 / bins as f64).to_string(),
                    c.to_string(),
                ])?;
            }
        }
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Equal-width bins on [0, 1]; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let i = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
}

/// Regrets from one merge estimate or an array of them.
pub fn read_regrets(path: &Path) -> Result<Vec<f64>> {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let items = match v {
        serde_json::Value::Array(a) => a,
        other => vec![other],
    };
    items
        .into_iter()
        .map(|item| {
            let est: MergeEstimate = serde_json::from_value(item)?;
            est.reference.map(|r| r.regret).ok_or_else(|| {
                Error::Validation("merge estimate without a reference has no regret".into())
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_covers_closed_unit_interval() {
        let c = histogram(&[0.0, 0.05, 0.1, 0.99, 1.0, f64::NAN], 10);
        assert_eq!(c.len(), 10);
        assert_eq!(c[0], 2);
        assert_eq!(c[1], 1);
        assert_eq!(c[9], 2);
        assert_eq!(c.iter().sum::<usize>(), 5);
    }

    #[test]
    fn missing_inputs_are_validation_errors() {
        assert!(matches!(
            emit_plot_data(Kind::SuccessRate, None, None, None, 10),
            Err(Error::Validation(_))
        ));
        assert!(emit_plot_data(Kind::RegretHistogram, None, None, Some(&[0.2]), 0).is_err());
    }
}
