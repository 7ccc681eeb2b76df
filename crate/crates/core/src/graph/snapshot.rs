use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Edge, EdgeId, Node, NodeId, NodeKind, NodeOrigin, WorldObject};
use crate::geometry::Pose2;

/// A node as seen in snapshots and on the wire; gridmaps are sent separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default)]
    pub origin: NodeOrigin,
    pub pose: Pose2,
    pub objects: Vec<WorldObject>,
}

impl NodeView {
    pub(crate) fn of(node: &Node) -> Self {
        Self {
            id: node.id,
            kind: node.kind,
            origin: node.origin,
            pose: node.pose,
            objects: node.situation.objects.values().cloned().collect(),
        }
    }
}

/// Immutable copy of the graph at one revision. Nodes and edges are sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub revision: u64,
    pub nodes: Vec<NodeView>,
    pub edges: Vec<Edge>,
}

impl GraphSnapshot {
    pub fn node(&self, id: NodeId) -> Option<&NodeView> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| &self.edges[i])
    }

    pub fn contains_edge(&self, id: EdgeId) -> bool {
        self.edge(id).is_some()
    }

    pub fn frontiers(&self) -> impl Iterator<Item = &NodeView> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Frontier)
    }

    /// Outgoing edge lists keyed by source, each in id order.
    pub fn adjacency(&self) -> BTreeMap<NodeId, Vec<&Edge>> {
        let mut adj: BTreeMap<NodeId, Vec<&Edge>> = self.nodes.iter().map(|n| (n.id, Vec::new())).collect();
        for e in &self.edges {
            adj.entry(e.source).or_default().push(e);
        }
        adj
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}
