use serde::Serialize;

use crate::config::ConfigGraph;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Coolant routing for one configuration.
///
/// Every CPHX has one inlet edge. At each junction (tank or CPHX) with `k`
/// children, the first `k - 1` child edges (ascending node id) carry
/// independent flows and the last one takes the remainder. Each edge flow is
/// therefore affine in `[pump, independent...]`, stored as a coefficient row.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "")]
pub struct FlowLayout<T: Real> {
    n_nodes: usize,
    /// Row per edge over `[pump, indp_0, ..]`.
    edge_coeffs: Vec<Vec<T>>,
    independent: Vec<usize>,
    dependent: Vec<usize>,
}

impl<T: Real> FlowLayout<T> {
    pub fn new(g: &ConfigGraph) -> Self {
        let n = g.n_nodes();
        let mut junctions = vec![None];
        junctions.extend(g.topological_order().into_iter().map(Some));

        let n_indp: usize = junctions
            .iter()
            .map(|&j| g.children(j).len().saturating_sub(1))
            .sum();
        let width = 1 + n_indp;
        let mut edge_coeffs = vec![vec![T::zero(); width]; n];
        let mut independent = Vec::with_capacity(n_indp);
        let mut dependent = Vec::new();
        let mut tank_row = vec![T::zero(); width];
        tank_row[0] = T::one();

        for j in junctions {
            let inflow = match j {
                None => tank_row.clone(),
                Some(v) => edge_coeffs[v].clone(),
            };
            let children = g.children(j);
            let Some((&last, firsts)) = children.split_last() else {
                continue;
            };
            let mut remainder = inflow;
            for &c in firsts {
                let mut row = vec![T::zero(); width];
                row[1 + independent.len()] = T::one();
                remainder[1 + independent.len()] -= T::one();
                independent.push(c);
                edge_coeffs[c] = row;
            }
            if !firsts.is_empty() {
                dependent.push(last);
            }
            edge_coeffs[last] = remainder;
        }
        Self {
            n_nodes: n,
            edge_coeffs,
            independent,
            dependent,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_independent(&self) -> usize {
        self.independent.len()
    }

    /// Edges (by receiving node) whose flow is a free state.
    pub fn independent_edges(&self) -> &[usize] {
        &self.independent
    }

    /// Edges that close a junction balance.
    pub fn dependent_edges(&self) -> &[usize] {
        &self.dependent
    }

    /// Coefficients of edge `e` over `[pump, indp...]`.
    pub fn edge_row(&self, e: usize) -> &[T] {
        &self.edge_coeffs[e]
    }

    /// Affine map of the dependent flows: `m_dp = M_c · m_indp + m_0 · pump`.
    pub fn dependence(&self) -> (Vec<Vec<T>>, Vec<T>) {
        let mc = self
            .dependent
            .iter()
            .map(|&e| self.edge_coeffs[e][1..].to_vec())
            .collect();
        let m0 = self
            .dependent
            .iter()
            .map(|&e| self.edge_coeffs[e][0])
            .collect();
        (mc, m0)
    }

    pub fn edge_flows_into(&self, pump: T, indp: &[T], out: &mut [T]) {
        for (row, slot) in self.edge_coeffs.iter().zip(out.iter_mut()) {
            let mut f = row[0] * pump;
            for (c, &q) in row[1..].iter().zip(indp) {
                if *c != T::zero() {
                    f += *c * q;
                }
            }
            *slot = f;
        }
    }

    pub fn edge_flows(&self, pump: T, indp: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_nodes];
        self.edge_flows_into(pump, indp, &mut out);
        out
    }

    /// Independent flows splitting every junction evenly.
    pub fn equal_split(&self, g: &ConfigGraph, pump: T) -> Vec<T> {
        self.weighted_split(g, pump, |_| T::one())
    }

    /// Independent flows splitting every junction in proportion to the total
    /// load carried by each child subtree (even split where all are zero).
    pub fn load_proportional(&self, g: &ConfigGraph, pump: T, loads: &[T]) -> Vec<T> {
        let subtree: Vec<T> = (0..g.n_nodes())
            .map(|v| {
                (0..g.n_nodes())
                    .filter(|&u| is_ancestor_or_self(g, v, u))
                    .map(|u| loads[u])
                    .sum()
            })
            .collect();
        self.weighted_split(g, pump, |c| subtree[c])
    }

    /// Independent flows splitting every junction in proportion to
    /// `weight(child)` (even split where all weights are zero).
    pub fn weighted_split(&self, g: &ConfigGraph, pump: T, weight: impl Fn(usize) -> T) -> Vec<T> {
        let mut edge = vec![T::zero(); self.n_nodes];
        let mut junctions = vec![None];
        junctions.extend(g.topological_order().into_iter().map(Some));
        for j in junctions {
            let inflow = j.map_or(pump, |v| edge[v]);
            let children = g.children(j);
            let total: T = children.iter().map(|&c| weight(c)).sum();
            let k = T::from_usize(children.len()).unwrap_or_else(T::one);
            for &c in &children {
                edge[c] = if total > T::zero() {
                    inflow * weight(c) / total
                } else {
                    inflow / k
                };
            }
        }
        self.independent.iter().map(|&e| edge[e]).collect()
    }

    /// Largest violation of `0 <= flow <= pump` over all edges.
    pub fn bound_violation(&self, pump: T, indp: &[T]) -> T {
        self.edge_flows(pump, indp)
            .into_iter()
            .map(|f| (-f).max(f - pump).max(T::zero()))
            .fold(T::zero(), T::max)
    }

    pub fn validate_indp(&self, indp: &[T]) -> Result<()> {
        if indp.len() != self.n_independent() {
            return Err(Error::Dimension {
                expected: self.n_independent(),
                got: indp.len(),
            });
        }
        Ok(())
    }
}

fn is_ancestor_or_self(g: &ConfigGraph, anc: usize, mut v: usize) -> bool {
    loop {
        if v == anc {
            return true;
        }
        match g.parent(v) {
            Some(p) => v = p,
            None => return false,
        }
    }
}
