use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A rooted labeled forest over CPHX nodes.
///
/// Node `i` (0-based) carries heat load `d_{i+1}`. A parent of `None` means
/// the node hangs directly off the tank-level junction. Children are
/// unordered; every derived child list is returned sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ConfigGraphFile", into = "ConfigGraphFile")]
pub struct ConfigGraph {
    parents: Vec<Option<usize>>,
}

/// On-disk form: `{"n_nodes": 3, "parents": [-1, 0, 1]}` with `-1` for the tank.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigGraphFile {
    pub n_nodes: usize,
    pub parents: Vec<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    SingleSplit,
    MultiSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigClassification {
    pub kind: ShapeKind,
    /// Longest root-to-leaf path, counted in nodes.
    pub depth: usize,
}

impl ConfigGraph {
    /// Builds a validated graph from a parent array.
    pub fn new(parents: Vec<Option<usize>>) -> Result<Self> {
        canonicalize(&Self::from_parents_unchecked(parents))
    }

    /// Wraps a parent array without checking it. Use [`canonicalize`] to
    /// validate a graph built this way.
    pub fn from_parents_unchecked(parents: Vec<Option<usize>>) -> Self {
        Self { parents }
    }

    /// Builds a single-split graph from series chains; the first node of each
    /// chain attaches to the tank.
    pub fn from_chains(n_nodes: usize, chains: &[Vec<usize>]) -> Result<Self> {
        let mut parents = vec![None; n_nodes];
        let mut seen = vec![false; n_nodes];
        for chain in chains {
            let mut prev = None;
            for &v in chain {
                if v >= n_nodes {
                    return Err(Error::Structure(format!("node {v} out of range")));
                }
                if std::mem::replace(&mut seen[v], true) {
                    return Err(Error::Structure(format!("node {v} listed twice")));
                }
                parents[v] = prev;
                prev = Some(v);
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Structure(format!("node {missing} not placed")));
        }
        Self::new(parents)
    }

    /// Builds a graph from `(vertex, children)` lists, `None` standing for the
    /// tank. Children may be listed in any order.
    pub fn from_children_lists(
        n_nodes: usize,
        lists: &[(Option<usize>, Vec<usize>)],
    ) -> Result<Self> {
        let mut parents: Vec<Option<Option<usize>>> = vec![None; n_nodes];
        for (vertex, children) in lists {
            for &c in children {
                if c >= n_nodes {
                    return Err(Error::Structure(format!("node {c} out of range")));
                }
                if parents[c].replace(*vertex).is_some() {
                    return Err(Error::Structure(format!("node {c} has two parents")));
                }
            }
        }
        let parents = parents
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.ok_or_else(|| Error::Structure(format!("node {i} has no parent"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(parents)
    }

    pub fn from_file(file: ConfigGraphFile) -> Result<Self> {
        if file.parents.len() != file.n_nodes {
            return Err(Error::Dimension {
                expected: file.n_nodes,
                got: file.parents.len(),
            });
        }
        let parents = file
            .parents
            .iter()
            .map(|&p| match p {
                -1 => Ok(None),
                p if p >= 0 && (p as usize) < file.n_nodes => Ok(Some(p as usize)),
                p => Err(Error::Structure(format!("parent index {p} out of range"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(parents)
    }

    pub fn to_file(&self) -> ConfigGraphFile {
        ConfigGraphFile {
            n_nodes: self.n_nodes(),
            parents: self
                .parents
                .iter()
                .map(|p| p.map_or(-1, |v| v as i64))
                .collect(),
        }
    }

    /// Canonical JSON bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("plain struct serializes")
    }

    pub fn n_nodes(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parents[v]
    }

    /// Children of `vertex` (`None` = tank), ascending.
    pub fn children(&self, vertex: Option<usize>) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&c| self.parents[c] == vertex)
            .collect()
    }

    pub fn roots(&self) -> Vec<usize> {
        self.children(None)
    }

    pub fn n_branches(&self) -> usize {
        self.parents.iter().filter(|p| p.is_none()).count()
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        !self.parents.contains(&Some(v))
    }

    /// Depth of a node; roots have depth 1.
    pub fn node_depth(&self, mut v: usize) -> usize {
        let mut d = 1;
        while let Some(p) = self.parents[v] {
            d += 1;
            v = p;
        }
        d
    }

    /// Nodes in an order where every parent precedes its children
    /// (breadth-first from the tank, ascending within a level).
    pub fn topological_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.n_nodes());
        let mut frontier = self.roots();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &v in &frontier {
                order.push(v);
                next.extend(self.children(Some(v)));
            }
            next.sort_unstable();
            frontier = next;
        }
        order
    }

    pub fn classify(&self) -> ConfigClassification {
        let multi = (0..self.n_nodes()).any(|v| self.children(Some(v)).len() >= 2);
        let depth = (0..self.n_nodes())
            .filter(|&v| self.is_leaf(v))
            .map(|v| self.node_depth(v))
            .max()
            .unwrap_or(0);
        ConfigClassification {
            kind: if multi {
                ShapeKind::MultiSplit
            } else {
                ShapeKind::SingleSplit
            },
            depth,
        }
    }

    /// Every node attaches directly to the tank.
    pub fn is_all_parallel(&self) -> bool {
        self.parents.iter().all(Option::is_none)
    }

    /// The graph is a single chain visiting `order`, `order[0]` nearest the tank.
    pub fn is_series_chain(&self, order: &[usize]) -> bool {
        if order.len() != self.n_nodes() || order.is_empty() {
            return false;
        }
        order.iter().enumerate().all(|(i, &v)| {
            v < self.n_nodes() && self.parents[v] == i.checked_sub(1).map(|j| order[j])
        })
    }

    /// Single-split graphs as their chains, each listed from the tank outwards.
    /// Returns `None` for multi-split graphs.
    pub fn chains(&self) -> Option<Vec<Vec<usize>>> {
        let mut chains = Vec::new();
        for root in self.roots() {
            let mut chain = vec![root];
            let mut v = root;
            loop {
                let kids = self.children(Some(v));
                match kids.as_slice() {
                    [] => break,
                    [c] => {
                        chain.push(*c);
                        v = *c;
                    }
                    _ => return None,
                }
            }
            chains.push(chain);
        }
        Some(chains)
    }

    /// Applies a relabeling: node `v` becomes node `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_nodes() {
            return Err(Error::Dimension {
                expected: self.n_nodes(),
                got: perm.len(),
            });
        }
        let mut parents = vec![None; self.n_nodes()];
        for (v, &p) in self.parents.iter().enumerate() {
            parents[perm[v]] = p.map(|p| perm[p]);
        }
        Self::new(parents)
    }

    /// Canonical text form: roots ascending, each node written as its 1-based
    /// id followed by its children (ascending) in parentheses. A chain
    /// 1→2→3 reads `1(2(3))`; three parallel branches read `1,2,3`.
    pub fn canonical_string(&self) -> String {
        let mut out = String::new();
        self.write_level(None, &mut out);
        out
    }

    fn write_level(&self, vertex: Option<usize>, out: &mut String) {
        for (i, c) in self.children(vertex).into_iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&(c + 1).to_string());
            if !self.is_leaf(c) {
                out.push('(');
                self.write_level(Some(c), out);
                out.push(')');
            }
        }
    }

    /// Enumeration order: fewer branches first, then canonical text.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.n_branches()
            .cmp(&other.n_branches())
            .then_with(|| self.canonical_string().cmp(&other.canonical_string()))
    }
}

impl fmt::Display for ConfigGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_string())
    }
}

impl TryFrom<ConfigGraphFile> for ConfigGraph {
    type Error = Error;

    fn try_from(file: ConfigGraphFile) -> Result<Self> {
        Self::from_file(file)
    }
}

impl From<ConfigGraph> for ConfigGraphFile {
    fn from(g: ConfigGraph) -> Self {
        g.to_file()
    }
}

/// Validates the forest structure and returns the canonical graph.
///
/// The parent array is itself a canonical encoding (children are implied and
/// unordered), so a valid input comes back unchanged.
pub fn canonicalize(g: &ConfigGraph) -> Result<ConfigGraph> {
    let n = g.parents.len();
    for (v, p) in g.parents.iter().enumerate() {
        if let Some(p) = *p {
            if p >= n {
                return Err(Error::Structure(format!(
                    "node {v} has parent {p} out of range"
                )));
            }
        }
    }
    // 0 = unvisited, 1 = on current path, 2 = reaches the tank
    let mut state = vec![0u8; n];
    for start in 0..n {
        let mut path = Vec::new();
        let mut v = start;
        loop {
            match state[v] {
                2 => break,
                1 => {
                    return Err(Error::Structure(format!(
                        "cycle through node {} detected",
                        v + 1
                    )))
                }
                _ => {}
            }
            state[v] = 1;
            path.push(v);
            match g.parents[v] {
                Some(p) => v = p,
                None => break,
            }
        }
        for u in path {
            state[u] = 2;
        }
    }
    Ok(g.clone())
}
