//! Load sampling, batch solves over a configuration family, and datasets.

mod dataset;
mod sampling;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{config_list_hash, ConfigFamily, ConfigGraph, SplitMode};
use crate::error::{Error, Result};
use crate::oloc::{solve, SolveOptions};
use crate::thermal::{LoadVector, ThermalParams};

pub use dataset::{
    dataset_csv, dataset_meta, read_dataset, sidecar_path, write_dataset, DatasetMeta,
};
pub use sampling::{lhs_sample, random_sorted_sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Lhs,
    RandomSorted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub n_nodes: usize,
    pub n_pop: usize,
    /// Load range in kW.
    pub d_range: [f64; 2],
    pub sampler: Sampler,
    pub split_mode: SplitMode,
    pub seed: u64,
    #[serde(default = "study_solver_defaults")]
    pub solver: SolveOptions,
    /// Split-level limit for multi-split families; defaults to unrestricted.
    #[serde(default)]
    pub max_depth: Option<usize>,
}

fn study_solver_defaults() -> SolveOptions {
    SolveOptions {
        segments: 16,
        ..Default::default()
    }
}

impl StudySpec {
    /// Single-split LHS study over `[4, 16]` kW at 16 segments.
    pub fn new(n_nodes: usize, n_pop: usize, seed: u64) -> Self {
        Self {
            n_nodes,
            n_pop,
            d_range: [4.0, 16.0],
            sampler: Sampler::Lhs,
            split_mode: SplitMode::Single,
            seed,
            solver: study_solver_defaults(),
            max_depth: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pop == 0 {
            return Err(Error::Validation("n_pop must be at least 1".into()));
        }
        let [lo, hi] = self.d_range;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
            return Err(Error::Validation(format!("bad load range [{lo}, {hi}]")));
        }
        self.family().enumerate().map(|_| ())
    }

    pub fn family(&self) -> ConfigFamily {
        ConfigFamily {
            n_nodes: self.n_nodes,
            split_mode: self.split_mode,
            max_depth: self.max_depth.unwrap_or(self.n_nodes.max(1)),
        }
    }

    pub fn samples(&self) -> Vec<Vec<f64>> {
        match self.sampler {
            Sampler::Lhs => lhs_sample(self.n_pop, self.n_nodes, self.d_range, self.seed),
            Sampler::RandomSorted => {
                random_sorted_sample(self.n_pop, self.n_nodes, self.d_range, self.seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: usize,
    /// Loads in kW.
    pub loads: Vec<f64>,
    /// Endurance per configuration, seconds; NaN where the solve failed.
    pub objectives: Vec<f64>,
    pub converged: Vec<bool>,
    /// Index of the best configuration; `None` for invalid samples.
    pub label: Option<usize>,
}

impl SampleRecord {
    pub fn is_valid(&self) -> bool {
        self.label.is_some()
    }

    pub fn best(&self) -> Option<f64> {
        self.label.map(|l| self.objectives[l])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: StudySpec,
    pub configs: Vec<ConfigGraph>,
    pub records: Vec<SampleRecord>,
}

impl Dataset {
    pub fn n_conf(&self) -> usize {
        self.configs.len()
    }

    pub fn config_hash(&self) -> String {
        config_list_hash(&self.configs)
    }

    pub fn valid(&self) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(|r| r.is_valid())
    }

    pub fn n_invalid(&self) -> usize {
        self.records.len() - self.valid().count()
    }
}

/// Argmax over the finite entries; ties go to the lowest index.
pub fn best_label(objectives: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &j) in objectives.iter().enumerate() {
        if j.is_finite() && best.is_none_or(|b| j > objectives[b]) {
            best = Some(i);
        }
    }
    best
}

/// Solves every (sample, configuration) pair on the current rayon pool.
/// Results are gathered in index order, so the dataset does not depend on
/// the number of workers.
pub fn run_study(spec: &StudySpec, params: &ThermalParams<f64>) -> Result<Dataset> {
    run_study_on(spec, spec.samples(), params)
}

/// [`run_study`] on given load vectors instead of the spec's sampler.
pub fn run_study_on(
    spec: &StudySpec,
    samples: Vec<Vec<f64>>,
    params: &ThermalParams<f64>,
) -> Result<Dataset> {
    spec.validate()?;
    params.validate()?;
    if let Some(bad) = samples.iter().find(|s| s.len() != spec.n_nodes) {
        return Err(Error::Dimension {
            expected: spec.n_nodes,
            got: bad.len(),
        });
    }
    let configs = spec.family().enumerate()?;
    let n_conf = configs.len();
    let cells: Vec<(f64, bool)> = (0..samples.len() * n_conf)
        .into_par_iter()
        .map(|idx| {
            let (s, c) = (idx / n_conf, idx % n_conf);
            let loads = LoadVector(samples[s].clone());
            match solve(&configs[c], params, &loads, &spec.solver) {
                Ok(sol) if sol.t_end.is_finite() && sol.t_end > 0.0 => (sol.t_end, sol.converged),
                _ => (f64::NAN, false),
            }
        })
        .collect();
    let records = samples
        .into_iter()
        .enumerate()
        .map(|(s, loads)| {
            let row = &cells[s * n_conf..(s + 1) * n_conf];
            let objectives: Vec<f64> = row.iter().map(|c| c.0).collect();
            SampleRecord {
                sample_id: s,
                loads,
                label: best_label(&objectives),
                converged: row.iter().map(|c| c.1).collect(),
                objectives,
            }
        })
        .collect();
    Ok(Dataset {
        spec: spec.clone(),
        configs,
        records,
    })
}

/// Fraction of valid samples on which each configuration is optimal.
pub fn success_rate(ds: &Dataset) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; ds.n_conf()];
    let mut total = 0usize;
    for r in ds.valid() {
        counts[r.label.expect("valid")] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::EmptyDataset("no valid samples".into()));
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// `J_i / max_m J_m` on every valid sample.
pub fn relative_performance(ds: &Dataset, config: usize) -> Result<Vec<f64>> {
    if config >= ds.n_conf() {
        return Err(Error::Validation(format!(
            "configuration {config} out of range 0..{}",
            ds.n_conf()
        )));
    }
    Ok(ds
        .valid()
        .map(|r| {
            let best = r.best().expect("valid");
            let j = r.objectives[config];
            if j.is_finite() {
                j / best
            } else {
                0.0
            }
        })
        .collect())
}

/// Spearman rank correlation between mean load and best endurance.
pub fn load_endurance_correlation(ds: &Dataset) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = ds
        .valid()
        .map(|r| {
            let mean = r.loads.iter().sum::<f64>() / r.loads.len() as f64;
            (mean, r.best().expect("valid"))
        })
        .unzip();
    spearman(&x, &y)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}
