use serde::{Deserialize, Serialize};

use super::{Edge, EdgeId, NodeId, NodeView, WorldObject};
use crate::grid::GridMap;

/// One graph mutation, tagged with the revision it produced.
///
/// Serialized as `{"type": ..., "payload": ..., "revision": n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDelta {
    #[serde(flatten)]
    pub change: GraphChange,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum GraphChange {
    NodeAdded {
        node: NodeView,
        gridmap: GridMap,
    },
    NodeRemoved {
        node: NodeId,
    },
    /// A frontier was reached and became a waypoint.
    NodeVisited {
        node: NodeId,
    },
    EdgeAdded {
        edge: Edge,
    },
    EdgeRemoved {
        edge: EdgeId,
    },
    SituationUpdated {
        node: NodeId,
        gridmap: GridMap,
        objects: Vec<WorldObject>,
    },
}

impl GraphChange {
    pub fn kind(&self) -> &'static str {
        match self {
            GraphChange::NodeAdded { .. } => "node_added",
            GraphChange::NodeRemoved { .. } => "node_removed",
            GraphChange::NodeVisited { .. } => "node_visited",
            GraphChange::EdgeAdded { .. } => "edge_added",
            GraphChange::EdgeRemoved { .. } => "edge_removed",
            GraphChange::SituationUpdated { .. } => "situation_updated",
        }
    }
}
