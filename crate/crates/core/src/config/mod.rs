//! Configuration graphs: enumeration, canonical form and shape queries.

mod enumerate;
mod graph;
mod system;

pub use enumerate::{
    enumerate_forests, enumerate_multi_split, enumerate_single_split, single_split_count,
    split_levels, ConfigFamily, SplitMode, MAX_ENUM_NODES,
};
pub use graph::{canonicalize, ConfigClassification, ConfigGraph, ConfigGraphFile, ShapeKind};
pub use system::{
    composite_count, group_by_parent, Anchor, ComplexSystemSpec, GroupSpec, JunctionSpec, NodeGroup,
};

/// Stable digest of a configuration list, used to keep labels aligned with
/// the graphs they index.
pub fn config_list_hash(configs: &[ConfigGraph]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for g in configs {
        h.update(g.canonical_string().as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}
