use serde::{Deserialize, Serialize};

use super::{ArchGraph, EdgeRole, OpChoice};

/// Parameter and per-sample multiply-accumulate counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Costs {
    pub params: u64,
    pub macs: u64,
}

pub(super) fn count(graph: &ArchGraph) -> Costs {
    let mut c = Costs::default();
    for e in &graph.edges {
        match e.role {
            EdgeRole::Decided(OpChoice::None) | EdgeRole::Decided(OpChoice::Identity) => continue,
            EdgeRole::Fixed | EdgeRole::Free { .. } | EdgeRole::Decided(OpChoice::Same) => {
                c.params += e.op.param_count();
                c.macs += e.op.macs(&graph.nodes[e.source].shape);
            }
        }
    }
    c
}
