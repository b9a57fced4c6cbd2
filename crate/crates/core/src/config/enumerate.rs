use serde::{Deserialize, Serialize};

use super::graph::ConfigGraph;
use crate::error::{Error, Result};

/// Largest node count accepted by the exhaustive enumerators.
pub const MAX_ENUM_NODES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Single,
    Multi,
    All,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::Single),
            "multi" => Ok(Self::Multi),
            "all" => Ok(Self::All),
            other => Err(Error::Validation(format!("unknown split mode `{other}`"))),
        }
    }
}

/// A configuration family: which graphs a label indexes into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfigFamily {
    pub n_nodes: usize,
    pub split_mode: SplitMode,
    pub max_depth: usize,
}

impl ConfigFamily {
    pub fn single(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            split_mode: SplitMode::Single,
            max_depth: n_nodes.max(1),
        }
    }

    /// Graphs of the family in canonical order. Single-split graphs precede
    /// multi-split ones for [`SplitMode::All`].
    pub fn enumerate(&self) -> Result<Vec<ConfigGraph>> {
        match self.split_mode {
            SplitMode::Single => enumerate_single_split(self.n_nodes),
            SplitMode::Multi => enumerate_multi_split(self.n_nodes, self.max_depth),
            SplitMode::All => {
                let mut all = enumerate_single_split(self.n_nodes)?;
                all.extend(enumerate_multi_split(self.n_nodes, self.max_depth)?);
                Ok(all)
            }
        }
    }
}

fn check_range(n: usize) -> Result<()> {
    if (1..=MAX_ENUM_NODES).contains(&n) {
        Ok(())
    } else {
        Err(Error::Range {
            n,
            min: 1,
            max: MAX_ENUM_NODES,
        })
    }
}

/// Every partition of `n` labeled nodes into an unordered set of series
/// chains, in canonical order.
pub fn enumerate_single_split(n: usize) -> Result<Vec<ConfigGraph>> {
    check_range(n)?;
    // Insert nodes in increasing label order: each node either opens a new
    // chain or goes into any slot of an existing one. Removing the largest
    // label recovers a unique predecessor, so nothing is produced twice.
    let mut layouts: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
    for v in 0..n {
        let mut next = Vec::new();
        for chains in &layouts {
            for (ci, chain) in chains.iter().enumerate() {
                for pos in 0..=chain.len() {
                    let mut grown = chains.clone();
                    grown[ci].insert(pos, v);
                    next.push(grown);
                }
            }
            let mut opened = chains.clone();
            opened.push(vec![v]);
            next.push(opened);
        }
        layouts = next;
    }
    let mut graphs = layouts
        .iter()
        .map(|chains| ConfigGraph::from_chains(n, chains))
        .collect::<Result<Vec<_>>>()?;
    graphs.sort_by(ConfigGraph::canonical_cmp);
    Ok(graphs)
}

/// Rooted labeled forests with at least one CPHX feeding two or more
/// children.
///
/// `max_depth` bounds the number of split levels met on any path from the
/// tank: the tank junction is level 1 and every CPHX split vertex on the path
/// adds one. `max_depth = 1` therefore admits nothing here, and
/// `max_depth >= n` leaves the depth unrestricted.
pub fn enumerate_multi_split(n: usize, max_depth: usize) -> Result<Vec<ConfigGraph>> {
    check_range(n)?;
    if max_depth == 0 {
        return Err(Error::Validation("max_depth must be at least 1".into()));
    }
    let mut graphs: Vec<ConfigGraph> = enumerate_forests(n)?
        .into_iter()
        .filter(|g| {
            let levels = split_levels(g);
            levels > 1 && levels <= max_depth
        })
        .collect();
    graphs.sort_by(ConfigGraph::canonical_cmp);
    Ok(graphs)
}

/// Largest split-level count over all tank-to-node paths (tank junction = 1).
pub fn split_levels(g: &ConfigGraph) -> usize {
    let n = g.n_nodes();
    let is_split = |v: usize| g.children(Some(v)).len() >= 2;
    (0..n)
        .map(|v| {
            let mut count = 1;
            let mut cur = Some(v);
            while let Some(u) = cur {
                if is_split(u) {
                    count += 1;
                }
                cur = g.parent(u);
            }
            count
        })
        .max()
        .unwrap_or(1)
}

/// All rooted labeled forests on `n` nodes, unsorted.
///
/// Recursion on the smallest remaining label: it belongs to a tree spanning
/// itself plus any subset of the other labels, rooted at any member; the
/// remaining labels form an independent forest.
pub fn enumerate_forests(n: usize) -> Result<Vec<ConfigGraph>> {
    check_range(n)?;
    let labels: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    forests(&labels, n, &mut out);
    Ok(out
        .into_iter()
        .map(ConfigGraph::from_parents_unchecked)
        .collect())
}

// Parent arrays always have length `size`; only entries for `labels` are
// meaningful.
fn forests(labels: &[usize], size: usize, out: &mut Vec<Vec<Option<usize>>>) {
    let Some((&first, rest)) = labels.split_first() else {
        out.push(vec![None; size]);
        return;
    };
    for mask in 0u32..(1u32 << rest.len()) {
        let mut tree = vec![first];
        let mut others = Vec::new();
        for (i, &v) in rest.iter().enumerate() {
            if mask & (1 << i) != 0 {
                tree.push(v);
            } else {
                others.push(v);
            }
        }
        let mut trees = Vec::new();
        rooted_trees(&tree, size, &mut trees);
        let mut beside = Vec::new();
        forests(&others, size, &mut beside);
        for t in &trees {
            for b in &beside {
                let mut parents = t.clone();
                for &v in &others {
                    parents[v] = b[v];
                }
                out.push(parents);
            }
        }
    }
}

fn rooted_trees(labels: &[usize], size: usize, out: &mut Vec<Vec<Option<usize>>>) {
    for (i, &root) in labels.iter().enumerate() {
        let below: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &v)| v)
            .collect();
        let mut under = Vec::new();
        forests(&below, size, &mut under);
        for u in under {
            let mut parents = vec![None; size];
            for &v in &below {
                parents[v] = Some(u[v].unwrap_or(root));
            }
            out.push(parents);
        }
    }
}

/// Number of single-split configurations of `n` nodes (sets of lists),
/// from the recurrence `a(n) = (2n-1) a(n-1) - (n-1)(n-2) a(n-2)`.
pub fn single_split_count(n: usize) -> u128 {
    let (mut prev, mut cur) = (1u128, 1u128);
    if n == 0 {
        return 1;
    }
    for k in 2..=n as u128 {
        let next = (2 * k - 1) * cur - (k - 1) * (k - 2) * prev;
        prev = cur;
        cur = next;
    }
    cur
}
