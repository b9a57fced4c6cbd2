//! Designs for multi-junction systems from per-group predictions, and
//! four-node estimates from three-node models by merging node pairs.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    enumerate_single_split, group_by_parent, Anchor, ComplexSystemSpec, ConfigGraph, NodeGroup,
};
use crate::error::{Error, Result};
use crate::knowledge::KnnModel;
use crate::oloc::{solve, SolveOptions};
use crate::thermal::{LoadVector, ThermalParams};

/// Trained models keyed by the group size they cover.
pub type ModelSet = BTreeMap<usize, KnnModel<f64>>;

/// Solver settings for the large batches run by the composer.
pub fn reduced_options() -> SolveOptions {
    SolveOptions {
        segments: 8,
        max_outer: 15,
        ..Default::default()
    }
}

/// The per-group design space of a system.
#[derive(Debug, Clone)]
pub struct CompositeSpace {
    pub groups: Vec<NodeGroup>,
    /// Single-split configurations of each group, canonical order.
    pub options: Vec<Vec<ConfigGraph>>,
    spec: ComplexSystemSpec,
}

impl CompositeSpace {
    pub fn new(spec: &ComplexSystemSpec) -> Result<Self> {
        let groups = group_by_parent(spec)?;
        let options = groups
            .iter()
            .map(|g| enumerate_single_split(g.members.len()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            groups,
            options,
            spec: spec.clone(),
        })
    }

    pub fn size(&self) -> usize {
        self.options.iter().map(Vec::len).product()
    }

    /// Mixed-radix digits of a composite index, first group most significant.
    pub fn choice(&self, mut idx: usize) -> Vec<usize> {
        let mut digits = vec![0; self.options.len()];
        for (d, opts) in digits.iter_mut().zip(&self.options).rev() {
            *d = idx % opts.len();
            idx /= opts.len();
        }
        digits
    }

    pub fn graph(&self, choice: &[usize]) -> Result<ConfigGraph> {
        let subs: Vec<&ConfigGraph> = choice
            .iter()
            .zip(&self.options)
            .map(|(&c, opts)| &opts[c])
            .collect();
        stitch(&self.spec, &self.groups, &subs)
    }
}

fn anchor_parent(a: Anchor) -> Option<usize> {
    match a {
        Anchor::Tank => None,
        Anchor::Junction(id) => Some(id - 1),
    }
}

/// Places each group's subgraph under its anchor. Junction CPHXs hang off
/// their own anchors.
pub fn stitch(
    spec: &ComplexSystemSpec,
    groups: &[NodeGroup],
    subgraphs: &[&ConfigGraph],
) -> Result<ConfigGraph> {
    let mut parents = vec![None; spec.n_nodes()];
    for j in &spec.junctions {
        parents[j.id - 1] = anchor_parent(j.anchor);
    }
    for (g, sub) in groups.iter().zip(subgraphs) {
        if sub.n_nodes() != g.members.len() {
            return Err(Error::Dimension {
                expected: g.members.len(),
                got: sub.n_nodes(),
            });
        }
        for (local, &id) in g.members.iter().enumerate() {
            parents[id - 1] = match sub.parent(local) {
                None => anchor_parent(g.anchor),
                Some(p) => Some(g.members[p] - 1),
            };
        }
    }
    ConfigGraph::new(parents)
}

/// Predicted configuration index for every group.
pub fn predict_choice(spec: &ComplexSystemSpec, models: &ModelSet) -> Result<Vec<usize>> {
    let space = CompositeSpace::new(spec)?;
    space
        .groups
        .iter()
        .map(|g| {
            let size = g.members.len();
            if size == 1 {
                return Ok(0);
            }
            let model = models.get(&size).ok_or(Error::MissingModel(size))?;
            let loads: Vec<f64> = g
                .members
                .iter()
                .map(|&id| spec.load_of(id).expect("validated"))
                .collect();
            let label = model.predict_loads(&loads)?;
            if label >= single_split_count_usize(size) {
                return Err(Error::Validation(format!(
                    "model for {size} nodes predicts label {label} outside its family"
                )));
            }
            Ok(label)
        })
        .collect()
}

fn single_split_count_usize(n: usize) -> usize {
    crate::config::single_split_count(n) as usize
}

/// Stitches the model's prediction for every group into one design.
pub fn compose_estimate(spec: &ComplexSystemSpec, models: &ModelSet) -> Result<ConfigGraph> {
    let choice = predict_choice(spec, models)?;
    CompositeSpace::new(spec)?.graph(&choice)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileReport {
    pub design: String,
    pub design_objective: f64,
    /// Composite indices drawn, in draw order.
    pub sampled: Vec<usize>,
    pub objectives: Vec<f64>,
    pub exhaustive: bool,
    /// Share of sampled objectives at or below the design's, in percent.
    pub percentile: f64,
    pub best_sampled: f64,
}

fn solve_or_nan(g: &ConfigGraph, params: &ThermalParams<f64>, loads: &[f64], opts: &SolveOptions) -> f64 {
    solve(g, params, &LoadVector(loads.to_vec()), opts)
        .map(|s| s.t_end)
        .unwrap_or(f64::NAN)
}

/// Compares `design` with `n_random` distinct composites drawn uniformly
/// from the system's design space (all of them when the space is smaller).
pub fn percentile_score(
    design: &ConfigGraph,
    spec: &ComplexSystemSpec,
    n_random: usize,
    seed: u64,
    opts: &SolveOptions,
    params: &ThermalParams<f64>,
) -> Result<PercentileReport> {
    if n_random == 0 {
        return Err(Error::Validation("n_random must be at least 1".into()));
    }
    let space = CompositeSpace::new(spec)?;
    let loads = spec.node_loads()?;
    if design.n_nodes() != loads.len() {
        return Err(Error::Dimension {
            expected: loads.len(),
            got: design.n_nodes(),
        });
    }
    let total = space.size();
    let exhaustive = total <= n_random;
    let sampled: Vec<usize> = if exhaustive {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index::sample(&mut rng, total, n_random).into_vec()
    };
    let graphs = sampled
        .iter()
        .map(|&i| space.graph(&space.choice(i)))
        .collect::<Result<Vec<_>>>()?;
    let design_objective = solve_or_nan(design, params, &loads, opts);
    let objectives: Vec<f64> = graphs
        .par_iter()
        .map(|g| solve_or_nan(g, params, &loads, opts))
        .collect();
    let at_or_below = objectives
        .iter()
        .filter(|&&j| j.is_finite() && j <= design_objective)
        .count();
    Ok(PercentileReport {
        design: design.canonical_string(),
        design_objective,
        exhaustive,
        percentile: 100.0 * at_or_below as f64 / objectives.len() as f64,
        best_sampled: objectives.iter().copied().filter(|j| j.is_finite()).fold(f64::NAN, f64::max),
        sampled,
        objectives,
    })
}

/// One way of fusing two of four nodes into a single node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergePattern {
    /// 0-based indices of the merged pair, `pair.0 < pair.1`.
    pub pair: (usize, usize),
    /// Loads of the three merged nodes; the fused node takes the place of
    /// `pair.0`.
    pub loads: Vec<f64>,
    /// Original nodes behind each merged node.
    pub members: Vec<Vec<usize>>,
}

/// The six pair merges in the order (12), (13), (14), (23), (24), (34).
pub fn merge_patterns(loads4: &[f64]) -> Result<Vec<MergePattern>> {
    if loads4.len() != 4 {
        return Err(Error::Dimension {
            expected: 4,
            got: loads4.len(),
        });
    }
    let mut out = Vec::with_capacity(6);
    for i in 0..4 {
        for j in i + 1..4 {
            let mut loads = Vec::with_capacity(3);
            let mut members = Vec::with_capacity(3);
            for v in 0..4 {
                if v == i {
                    loads.push(loads4[i] + loads4[j]);
                    members.push(vec![i, j]);
                } else if v != j {
                    loads.push(loads4[v]);
                    members.push(vec![v]);
                }
            }
            out.push(MergePattern {
                pair: (i, j),
                loads,
                members,
            });
        }
    }
    Ok(out)
}

/// Unfolds a three-node configuration back onto the four original nodes.
/// The fused node becomes a two-node chain with the larger load upstream
/// (the lower index on equal loads); whatever hung below it hangs below the
/// chain's end.
pub fn expand_merged(pattern: &MergePattern, g3: &ConfigGraph, loads4: &[f64]) -> Result<ConfigGraph> {
    if g3.n_nodes() != 3 {
        return Err(Error::Dimension {
            expected: 3,
            got: g3.n_nodes(),
        });
    }
    let (i, j) = pattern.pair;
    let (up, down) = if loads4[j] > loads4[i] { (j, i) } else { (i, j) };
    // The node carrying flow out of each merged node.
    let exit: Vec<usize> = pattern
        .members
        .iter()
        .map(|m| if m.len() == 2 { down } else { m[0] })
        .collect();
    let mut parents = vec![None; 4];
    for (k, m) in pattern.members.iter().enumerate() {
        let above = g3.parent(k).map(|p| exit[p]);
        if m.len() == 2 {
            parents[up] = above;
            parents[down] = Some(up);
        } else {
            parents[m[0]] = above;
        }
    }
    ConfigGraph::new(parents)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeReference {
    pub y_max: f64,
    pub y_min: f64,
    /// `(y_max − ŷ) / (y_max − y_min)`, zero when all objectives agree.
    pub regret: f64,
    pub best: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEstimate {
    pub candidates: Vec<String>,
    pub candidate_objectives: Vec<f64>,
    pub estimate: String,
    pub y_hat: f64,
    pub reference: Option<MergeReference>,
}

/// Predicts a three-node design for each merge pattern, expands them, solves
/// the distinct candidates and keeps the best. With `reference`, every
/// four-node single-split configuration is solved as well to score the
/// estimate.
pub fn estimate_via_merge(
    loads4: &[f64],
    model3: &KnnModel<f64>,
    params: &ThermalParams<f64>,
    opts: &SolveOptions,
    reference: bool,
) -> Result<(ConfigGraph, MergeEstimate)> {
    let configs3 = enumerate_single_split(3)?;
    let mut candidates = Vec::with_capacity(6);
    for p in merge_patterns(loads4)? {
        let label = model3.predict_loads(&p.loads)?;
        let g3 = configs3.get(label).ok_or_else(|| {
            Error::Validation(format!("three-node model predicts unknown label {label}"))
        })?;
        candidates.push(expand_merged(&p, g3, loads4)?);
    }
    let mut unique: Vec<ConfigGraph> = Vec::new();
    for c in &candidates {
        if !unique.contains(c) {
            unique.push(c.clone());
        }
    }
    let all = if reference {
        enumerate_single_split(4)?
    } else {
        Vec::new()
    };
    let mut to_solve = unique.clone();
    to_solve.extend(all.iter().filter(|g| !unique.contains(g)).cloned());
    let solved: Vec<f64> = to_solve
        .par_iter()
        .map(|g| solve_or_nan(g, params, loads4, opts))
        .collect();
    let value: HashMap<String, f64> = to_solve
        .iter()
        .map(|g| g.canonical_string())
        .zip(solved)
        .collect();

    let candidate_objectives: Vec<f64> = candidates
        .iter()
        .map(|g| value[&g.canonical_string()])
        .collect();
    let mut best = 0;
    for (k, &j) in candidate_objectives.iter().enumerate() {
        if j > candidate_objectives[best] || candidate_objectives[best].is_nan() {
            best = k;
        }
    }
    let y_hat = candidate_objectives[best];
    let reference = if reference {
        let mut y_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut arg = &all[0];
        for g in &all {
            let j = value[&g.canonical_string()];
            if j.is_finite() {
                if j > y_max {
                    y_max = j;
                    arg = g;
                }
                y_min = y_min.min(j);
            }
        }
        let spread = y_max - y_min;
        let regret = if spread > 0.0 {
            ((y_max - y_hat) / spread).clamp(0.0, 1.0)
        } else {
            0.0
        };
        Some(MergeReference {
            y_max,
            y_min,
            regret,
            best: arg.canonical_string(),
        })
    } else {
        None
    };
    let estimate = candidates[best].clone();
    Ok((
        estimate.clone(),
        MergeEstimate {
            candidates: candidates.iter().map(|g| g.canonical_string()).collect(),
            candidate_objectives,
            estimate: estimate.canonical_string(),
            y_hat,
            reference,
        },
    ))
}
