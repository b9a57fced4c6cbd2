//! Hierarchical multi-junction system descriptions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::enumerate::single_split_count;
use crate::error::{Error, Result};

/// Where a group of CPHXs takes its coolant from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Anchor {
    Tank,
    /// A junction CPHX, by 1-based node id.
    Junction(usize),
}

impl Serialize for Anchor {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Anchor::Tank => s.serialize_str("tank"),
            Anchor::Junction(id) => s.serialize_u64(*id as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Anchor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct AnchorVisitor;
        impl Visitor<'_> for AnchorVisitor {
            type Value = Anchor;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"tank\" or a positive node id")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Anchor, E> {
                if v == "tank" {
                    Ok(Anchor::Tank)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Anchor, E> {
                if v == 0 {
                    Err(E::invalid_value(de::Unexpected::Unsigned(v), &self))
                } else {
                    Ok(Anchor::Junction(v as usize))
                }
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Anchor, E> {
                if v > 0 {
                    self.visit_u64(v as u64)
                } else {
                    Err(E::invalid_value(de::Unexpected::Signed(v), &self))
                }
            }
        }
        d.deserialize_any(AnchorVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionSpec {
    pub id: usize,
    pub anchor: Anchor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub anchor: Anchor,
    pub node_ids: Vec<usize>,
    /// Heat loads in kW, aligned with `node_ids`.
    pub loads: Vec<f64>,
}

/// A multi-junction system: junction CPHXs with fixed placement, plus groups
/// of leaf CPHXs whose arrangement under their anchor is the design choice.
///
/// Node ids run over `1..=N` across junctions and group members; `loads`
/// holds the junction loads (kW) keyed by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSystemSpec {
    pub junctions: Vec<JunctionSpec>,
    pub groups: Vec<GroupSpec>,
    #[serde(default)]
    pub loads: BTreeMap<String, f64>,
}

/// CPHXs sharing one anchor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeGroup {
    pub anchor: Anchor,
    pub members: Vec<usize>,
}

impl ComplexSystemSpec {
    pub fn n_nodes(&self) -> usize {
        self.junctions.len() + self.groups.iter().map(|g| g.node_ids.len()).sum::<usize>()
    }

    pub fn is_junction(&self, id: usize) -> bool {
        self.junctions.iter().any(|j| j.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        let mut ids = BTreeSet::new();
        for id in self
            .junctions
            .iter()
            .map(|j| j.id)
            .chain(self.groups.iter().flat_map(|g| g.node_ids.iter().copied()))
        {
            if id == 0 || id > n {
                return Err(Error::Validation(format!("node id {id} outside 1..={n}")));
            }
            if !ids.insert(id) {
                return Err(Error::Validation(format!("node id {id} appears twice")));
            }
        }
        let check_anchor = |a: &Anchor| match a {
            Anchor::Tank => Ok(()),
            Anchor::Junction(id) if self.is_junction(*id) => Ok(()),
            Anchor::Junction(id) => Err(Error::Validation(format!(
                "anchor {id} is not a declared junction"
            ))),
        };
        for j in &self.junctions {
            check_anchor(&j.anchor)?;
            if !self.loads.contains_key(&j.id.to_string()) {
                return Err(Error::Validation(format!("junction {} has no load", j.id)));
            }
        }
        for g in &self.groups {
            check_anchor(&g.anchor)?;
            if g.loads.len() != g.node_ids.len() {
                return Err(Error::Dimension {
                    expected: g.node_ids.len(),
                    got: g.loads.len(),
                });
            }
        }
        // Junction anchors must reach the tank.
        for j in &self.junctions {
            let mut seen = BTreeSet::new();
            let mut a = j.anchor;
            while let Anchor::Junction(id) = a {
                if !seen.insert(id) || id == j.id {
                    return Err(Error::Validation(format!(
                        "junction {} does not reach the tank",
                        j.id
                    )));
                }
                a = self
                    .junctions
                    .iter()
                    .find(|k| k.id == id)
                    .map(|k| k.anchor)
                    .unwrap();
            }
        }
        let bad_load = self
            .all_loads_unchecked()
            .into_iter()
            .find(|x| !x.is_finite() || *x < 0.0);
        if let Some(x) = bad_load {
            return Err(Error::Validation(format!("invalid load {x}")));
        }
        Ok(())
    }

    fn all_loads_unchecked(&self) -> Vec<f64> {
        let mut loads = vec![f64::NAN; self.n_nodes()];
        for j in &self.junctions {
            if let (Some(slot), Some(&x)) =
                (loads.get_mut(j.id - 1), self.loads.get(&j.id.to_string()))
            {
                *slot = x;
            }
        }
        for g in &self.groups {
            for (&id, &x) in g.node_ids.iter().zip(&g.loads) {
                if let Some(slot) = loads.get_mut(id - 1) {
                    *slot = x;
                }
            }
        }
        loads
    }

    /// Loads (kW) indexed by 0-based node index.
    pub fn node_loads(&self) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(self.all_loads_unchecked())
    }

    /// Load of a 1-based node id.
    pub fn load_of(&self, id: usize) -> Option<f64> {
        self.all_loads_unchecked().get(id.wrapping_sub(1)).copied()
    }
}

/// Partitions the non-junction CPHXs by the anchor feeding them. Groups come
/// out tank first, then by junction id; members keep their listed order.
pub fn group_by_parent(spec: &ComplexSystemSpec) -> Result<Vec<NodeGroup>> {
    spec.validate()?;
    let mut by_anchor: BTreeMap<Anchor, Vec<usize>> = BTreeMap::new();
    for g in &spec.groups {
        by_anchor.entry(g.anchor).or_default().extend(&g.node_ids);
    }
    Ok(by_anchor
        .into_iter()
        .filter(|(_, m)| !m.is_empty())
        .map(|(anchor, members)| NodeGroup { anchor, members })
        .collect())
}

/// Size of the composite design space: the product of the single-split
/// counts of every group.
pub fn composite_count(groups: &[NodeGroup]) -> u128 {
    groups
        .iter()
        .map(|g| single_split_count(g.members.len()))
        .product()
}
