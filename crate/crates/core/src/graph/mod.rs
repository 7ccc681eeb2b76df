//! The behavior-oriented situational graph.
//!
//! A directed multigraph whose nodes are places (a planar pose plus the
//! situation observed there) and whose edges are robot behaviors. An edge's
//! source encodes the behavior's preconditions and its target the
//! postconditions, so several edges may join the same pair of nodes.
//!
//! `goto` edges are always stored as a directed pair (one per direction, equal
//! cost). `open_door` and `request_teleop` edges are one-directional, and
//! `request_teleop` is a self-loop.
//!
//! Every mutation bumps [`SituationalGraph::revision`] by one and appends a
//! [`GraphDelta`] to an internal journal that the owner drains with
//! [`SituationalGraph::take_deltas`].

mod delta;
mod snapshot;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose2, Pose3};
use crate::grid::GridMap;

pub use delta::{GraphChange, GraphDelta};
pub use snapshot::{GraphSnapshot, NodeView};

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(NodeId, "v");
id_type!(EdgeId, "e");
id_type!(ObjectId, "o");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectLabel {
    Door,
    Container,
    Person,
    Frontier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoorState {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: ObjectId,
    pub label: ObjectLabel,
    pub pose: Pose3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<DoorState>,
}

impl WorldObject {
    pub fn new(id: ObjectId, label: ObjectLabel, pose: Pose3) -> Self {
        Self {
            id,
            label,
            pose,
            state: None,
        }
    }

    pub fn door(id: ObjectId, pose: Pose3, state: DoorState) -> Self {
        Self {
            id,
            label: ObjectLabel::Door,
            pose,
            state: Some(state),
        }
    }

    fn validate(&self) -> Result<(), GraphError> {
        if !self.pose.is_finite() {
            return Err(GraphError::InvariantViolation(format!(
                "object {} has a non-finite pose",
                self.id
            )));
        }
        match (self.label, self.state) {
            (ObjectLabel::Door, None) => Err(GraphError::InvariantViolation(format!(
                "door {} carries no state",
                self.id
            ))),
            (ObjectLabel::Door, Some(_)) | (_, None) => Ok(()),
            (_, Some(_)) => Err(GraphError::InvariantViolation(format!(
                "non-door object {} carries a door state",
                self.id
            ))),
        }
    }
}

/// Data recorded at a place: the latest local gridmap and the objects seen there.
#[derive(Debug, Clone, PartialEq)]
pub struct Situation {
    pub gridmap: GridMap,
    pub objects: BTreeMap<ObjectId, WorldObject>,
}

impl Situation {
    /// Later entries with a repeated id replace earlier ones.
    pub fn new(gridmap: GridMap, objects: impl IntoIterator<Item = WorldObject>) -> Self {
        Self {
            gridmap,
            objects: objects.into_iter().map(|o| (o.id, o)).collect(),
        }
    }

    pub fn unobserved() -> Self {
        Self::new(GridMap::empty(), [])
    }

    pub fn is_unobserved(&self) -> bool {
        self.objects.is_empty() && self.gridmap.is_all_unknown()
    }
}

impl Default for Situation {
    fn default() -> Self {
        Self::unobserved()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Waypoint,
    Frontier,
}

/// Why a node was created. Only `spacing` nodes are subject to the
/// minimum-spacing rule; the others are behavior postconditions or seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NodeOrigin {
    #[default]
    Manual,
    Start,
    Spacing,
    Frontier,
    Doorway,
    Arrival,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub pose: Pose2,
    pub situation: Situation,
    pub kind: NodeKind,
    pub origin: NodeOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorKind {
    #[serde(rename = "goto")]
    GoTo,
    OpenDoor,
    RequestTeleop,
}

impl fmt::Display for BehaviorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BehaviorKind::GoTo => "goTo",
            BehaviorKind::OpenDoor => "openDoor",
            BehaviorKind::RequestTeleop => "requestTeleop",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub source: NodeId,
    pub target: NodeId,
    pub behavior: BehaviorKind,
    pub object_params: BTreeSet<ObjectId>,
    pub cost: f64,
}

impl Edge {
    fn same_key(&self, target: NodeId, behavior: BehaviorKind, params: &BTreeSet<ObjectId>) -> bool {
        self.target == target && self.behavior == behavior && &self.object_params == params
    }
}

/// Edge cost model: `goto` costs its Euclidean length, the other behaviors a fixed penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeCosts {
    pub open_door: f64,
    pub request_teleop: f64,
}

impl Default for EdgeCosts {
    fn default() -> Self {
        Self {
            open_door: 5.0,
            request_teleop: 100.0,
        }
    }
}

impl EdgeCosts {
    pub fn cost_for(&self, behavior: BehaviorKind, from: &Pose2, to: &Pose2) -> f64 {
        match behavior {
            BehaviorKind::GoTo => from.distance(to),
            BehaviorKind::OpenDoor => self.open_door,
            BehaviorKind::RequestTeleop => self.request_teleop,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("duplicate {behavior} edge {source_node} -> {target_node}")]
    DuplicateEdge {
        source_node: NodeId,
        target_node: NodeId,
        behavior: BehaviorKind,
    },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("delta revision {got} does not follow graph revision {expected}")]
    RevisionGap { expected: u64, got: u64 },
}

#[derive(Debug, Clone, Default)]
pub struct SituationalGraph {
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeId, Edge>,
    out_index: BTreeMap<NodeId, BTreeSet<EdgeId>>,
    in_index: BTreeMap<NodeId, BTreeSet<EdgeId>>,
    objects: BTreeMap<ObjectId, WorldObject>,
    revision: u64,
    next_node: u64,
    next_edge: u64,
    journal: Vec<GraphDelta>,
}

impl SituationalGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    /// Latest known state of every object ever recorded in a situation.
    pub fn object(&self, id: ObjectId) -> Option<&WorldObject> {
        self.objects.get(&id)
    }

    pub fn objects(&self) -> impl Iterator<Item = &WorldObject> {
        self.objects.values()
    }

    /// Drains the deltas produced since the last call.
    pub fn take_deltas(&mut self) -> Vec<GraphDelta> {
        std::mem::take(&mut self.journal)
    }

    fn record(&mut self, change: GraphChange) {
        self.revision += 1;
        self.journal.push(GraphDelta {
            change,
            revision: self.revision,
        });
    }

    pub fn add_node(
        &mut self,
        pose: Pose2,
        kind: NodeKind,
        situation: Situation,
    ) -> Result<NodeId, GraphError> {
        self.add_node_from(pose, kind, situation, NodeOrigin::Manual)
    }

    pub fn add_node_from(
        &mut self,
        pose: Pose2,
        kind: NodeKind,
        situation: Situation,
        origin: NodeOrigin,
    ) -> Result<NodeId, GraphError> {
        if !pose.is_finite() {
            return Err(GraphError::InvariantViolation("node pose is not finite".into()));
        }
        if kind == NodeKind::Frontier && !situation.is_unobserved() {
            return Err(GraphError::InvariantViolation(
                "frontier nodes start with an unobserved situation".into(),
            ));
        }
        for o in situation.objects.values() {
            o.validate()?;
        }
        self.next_node += 1;
        let id = NodeId(self.next_node);
        for o in situation.objects.values() {
            self.objects.insert(o.id, o.clone());
        }
        let node = Node {
            id,
            pose,
            situation,
            kind,
            origin,
        };
        let change = GraphChange::NodeAdded {
            node: NodeView::of(&node),
            gridmap: node.situation.gridmap.clone(),
        };
        self.nodes.insert(id, node);
        self.out_index.insert(id, BTreeSet::new());
        self.in_index.insert(id, BTreeSet::new());
        self.record(change);
        Ok(id)
    }

    /// Adds an edge. A `goto` edge is stored together with its reverse; the
    /// returned id is the `source -> target` direction.
    pub fn add_edge(
        &mut self,
        source: NodeId,
        target: NodeId,
        behavior: BehaviorKind,
        object_params: BTreeSet<ObjectId>,
        cost: f64,
    ) -> Result<EdgeId, GraphError> {
        for n in [source, target] {
            if !self.nodes.contains_key(&n) {
                return Err(GraphError::UnknownNode(n));
            }
        }
        if !(cost >= 0.0 && cost.is_finite()) {
            return Err(GraphError::InvariantViolation(format!(
                "edge cost {cost} must be finite and nonnegative"
            )));
        }
        match behavior {
            BehaviorKind::GoTo => {
                if !object_params.is_empty() {
                    return Err(GraphError::InvariantViolation(
                        "goto edges take no object parameters".into(),
                    ));
                }
                if source == target {
                    return Err(GraphError::InvariantViolation(
                        "goto edges join two distinct nodes".into(),
                    ));
                }
            }
            BehaviorKind::OpenDoor => {
                let door = match object_params.iter().collect::<Vec<_>>().as_slice() {
                    [id] => self.objects.get(id),
                    _ => None,
                };
                if door.map(|o| o.label) != Some(ObjectLabel::Door) {
                    return Err(GraphError::InvariantViolation(
                        "open_door edges take exactly one known door".into(),
                    ));
                }
            }
            BehaviorKind::RequestTeleop => {
                if source != target || object_params.len() != 1 {
                    return Err(GraphError::InvariantViolation(
                        "request_teleop edges are self-loops with exactly one object".into(),
                    ));
                }
            }
        }
        if self.find_edge(source, target, behavior, &object_params).is_some() {
            return Err(GraphError::DuplicateEdge {
                source_node: source,
                target_node: target,
                behavior,
            });
        }
        let id = self.insert_edge(source, target, behavior, object_params.clone(), cost);
        if behavior == BehaviorKind::GoTo {
            self.insert_edge(target, source, behavior, object_params, cost);
        }
        Ok(id)
    }

    fn insert_edge(
        &mut self,
        source: NodeId,
        target: NodeId,
        behavior: BehaviorKind,
        object_params: BTreeSet<ObjectId>,
        cost: f64,
    ) -> EdgeId {
        self.next_edge += 1;
        let id = EdgeId(self.next_edge);
        let edge = Edge {
            id,
            source,
            target,
            behavior,
            object_params,
            cost,
        };
        self.link(&edge);
        self.edges.insert(id, edge.clone());
        self.record(GraphChange::EdgeAdded { edge });
        id
    }

    fn link(&mut self, edge: &Edge) {
        self.out_index.entry(edge.source).or_default().insert(edge.id);
        self.in_index.entry(edge.target).or_default().insert(edge.id);
    }

    pub fn find_edge(
        &self,
        source: NodeId,
        target: NodeId,
        behavior: BehaviorKind,
        params: &BTreeSet<ObjectId>,
    ) -> Option<EdgeId> {
        self.out_index
            .get(&source)?
            .iter()
            .copied()
            .find(|e| self.edges[e].same_key(target, behavior, params))
    }

    /// The opposite direction of a `goto` edge.
    pub fn reverse_of(&self, id: EdgeId) -> Option<EdgeId> {
        let e = self.edges.get(&id)?;
        if e.behavior != BehaviorKind::GoTo {
            return None;
        }
        self.find_edge(e.target, e.source, BehaviorKind::GoTo, &e.object_params)
    }

    /// Removes an edge; the paired reverse of a `goto` edge goes with it.
    pub fn remove_edge(&mut self, id: EdgeId) -> Result<(), GraphError> {
        if !self.edges.contains_key(&id) {
            return Err(GraphError::UnknownEdge(id));
        }
        let reverse = self.reverse_of(id);
        self.drop_edge(id);
        if let Some(r) = reverse {
            self.drop_edge(r);
        }
        Ok(())
    }

    fn drop_edge(&mut self, id: EdgeId) {
        if let Some(e) = self.edges.remove(&id) {
            if let Some(s) = self.out_index.get_mut(&e.source) {
                s.remove(&id);
            }
            if let Some(s) = self.in_index.get_mut(&e.target) {
                s.remove(&id);
            }
            self.record(GraphChange::EdgeRemoved { edge: id });
        }
    }

    /// Removes a node together with every incident edge.
    pub fn remove_node(&mut self, id: NodeId) -> Result<(), GraphError> {
        if !self.nodes.contains_key(&id) {
            return Err(GraphError::UnknownNode(id));
        }
        let mut incident: BTreeSet<EdgeId> = self.out_index[&id].clone();
        incident.extend(self.in_index[&id].iter().copied());
        for e in incident {
            self.drop_edge(e);
        }
        self.nodes.remove(&id);
        self.out_index.remove(&id);
        self.in_index.remove(&id);
        self.record(GraphChange::NodeRemoved { node: id });
        Ok(())
    }

    /// Nearest node in the plane; ties go to the lowest id.
    pub fn nearest_node(&self, pose: &Pose2) -> Result<(NodeId, f64), GraphError> {
        self.nearest_node_where(pose, |_| true)
            .ok_or(GraphError::EmptyGraph)
    }

    pub fn nearest_node_where(
        &self,
        pose: &Pose2,
        mut keep: impl FnMut(&Node) -> bool,
    ) -> Option<(NodeId, f64)> {
        let mut best: Option<(NodeId, f64)> = None;
        for n in self.nodes.values().filter(|n| keep(n)) {
            let d = pose.distance(&n.pose);
            // ascending id order, so strict comparison keeps the lowest id on ties
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((n.id, d));
            }
        }
        best
    }

    /// Replaces a node's situation. Objects are keyed by id (latest wins) and
    /// also upserted into the graph-wide object registry.
    pub fn update_situation(
        &mut self,
        node: NodeId,
        gridmap: GridMap,
        objects: impl IntoIterator<Item = WorldObject>,
    ) -> Result<(), GraphError> {
        let situation = Situation::new(gridmap, objects);
        let n = self.nodes.get(&node).ok_or(GraphError::UnknownNode(node))?;
        if n.kind == NodeKind::Frontier && !situation.is_unobserved() {
            return Err(GraphError::InvariantViolation(format!(
                "frontier {node} cannot hold observations until visited"
            )));
        }
        for o in situation.objects.values() {
            o.validate()?;
        }
        for o in situation.objects.values() {
            self.objects.insert(o.id, o.clone());
        }
        let change = GraphChange::SituationUpdated {
            node,
            gridmap: situation.gridmap.clone(),
            objects: situation.objects.values().cloned().collect(),
        };
        self.nodes.get_mut(&node).expect("checked above").situation = situation;
        self.record(change);
        Ok(())
    }

    /// Turns a frontier into a waypoint on the robot's first visit.
    pub fn mark_visited(&mut self, node: NodeId) -> Result<bool, GraphError> {
        let n = self.nodes.get_mut(&node).ok_or(GraphError::UnknownNode(node))?;
        if n.kind != NodeKind::Frontier {
            return Ok(false);
        }
        n.kind = NodeKind::Waypoint;
        self.record(GraphChange::NodeVisited { node });
        Ok(true)
    }

    /// Outgoing edges ordered by id.
    pub fn out_edges(&self, node: NodeId) -> Result<Vec<&Edge>, GraphError> {
        let ids = self.out_index.get(&node).ok_or(GraphError::UnknownNode(node))?;
        Ok(ids.iter().map(|e| &self.edges[e]).collect())
    }

    pub fn in_edges(&self, node: NodeId) -> Result<Vec<&Edge>, GraphError> {
        let ids = self.in_index.get(&node).ok_or(GraphError::UnknownNode(node))?;
        Ok(ids.iter().map(|e| &self.edges[e]).collect())
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot {
            revision: self.revision,
            nodes: self.nodes.values().map(NodeView::of).collect(),
            edges: self.edges.values().cloned().collect(),
        }
    }

    /// Applies a recorded delta, reproducing the ids and revision it carries.
    /// Used to rebuild a graph from a mission log.
    pub fn apply_delta(&mut self, delta: &GraphDelta) -> Result<(), GraphError> {
        if delta.revision != self.revision + 1 {
            return Err(GraphError::RevisionGap {
                expected: self.revision + 1,
                got: delta.revision,
            });
        }
        match &delta.change {
            GraphChange::NodeAdded { node, gridmap } => {
                if self.nodes.contains_key(&node.id) {
                    return Err(GraphError::InvariantViolation(format!(
                        "node {} already exists",
                        node.id
                    )));
                }
                let situation = Situation::new(gridmap.clone(), node.objects.iter().cloned());
                for o in situation.objects.values() {
                    self.objects.insert(o.id, o.clone());
                }
                self.nodes.insert(
                    node.id,
                    Node {
                        id: node.id,
                        pose: node.pose,
                        situation,
                        kind: node.kind,
                        origin: node.origin,
                    },
                );
                self.out_index.insert(node.id, BTreeSet::new());
                self.in_index.insert(node.id, BTreeSet::new());
                self.next_node = self.next_node.max(node.id.0);
            }
            GraphChange::NodeRemoved { node } => {
                if self.nodes.remove(node).is_none() {
                    return Err(GraphError::UnknownNode(*node));
                }
                let dangling = self.out_index.remove(node).unwrap_or_default().len()
                    + self.in_index.remove(node).unwrap_or_default().len();
                if dangling > 0 {
                    return Err(GraphError::InvariantViolation(format!(
                        "node {node} removed with incident edges"
                    )));
                }
            }
            GraphChange::NodeVisited { node } => {
                self.nodes
                    .get_mut(node)
                    .ok_or(GraphError::UnknownNode(*node))?
                    .kind = NodeKind::Waypoint;
            }
            GraphChange::EdgeAdded { edge } => {
                for n in [edge.source, edge.target] {
                    if !self.nodes.contains_key(&n) {
                        return Err(GraphError::UnknownNode(n));
                    }
                }
                self.link(edge);
                self.edges.insert(edge.id, edge.clone());
                self.next_edge = self.next_edge.max(edge.id.0);
            }
            GraphChange::EdgeRemoved { edge } => {
                let e = self.edges.remove(edge).ok_or(GraphError::UnknownEdge(*edge))?;
                if let Some(s) = self.out_index.get_mut(&e.source) {
                    s.remove(edge);
                }
                if let Some(s) = self.in_index.get_mut(&e.target) {
                    s.remove(edge);
                }
            }
            GraphChange::SituationUpdated {
                node,
                gridmap,
                objects,
            } => {
                let situation = Situation::new(gridmap.clone(), objects.iter().cloned());
                for o in situation.objects.values() {
                    self.objects.insert(o.id, o.clone());
                }
                self.nodes
                    .get_mut(node)
                    .ok_or(GraphError::UnknownNode(*node))?
                    .situation = situation;
            }
        }
        self.revision = delta.revision;
        Ok(())
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut keys = BTreeSet::new();
        for e in self.edges.values() {
            if !self.nodes.contains_key(&e.source) || !self.nodes.contains_key(&e.target) {
                return Err(format!("edge {} has a missing endpoint", e.id));
            }
            if e.cost.is_nan() || e.cost < 0.0 {
                return Err(format!("edge {} has negative cost", e.id));
            }
            if !keys.insert((e.source, e.target, e.behavior, e.object_params.clone())) {
                return Err(format!("edge {} duplicates another edge", e.id));
            }
            if !self.out_index[&e.source].contains(&e.id) || !self.in_index[&e.target].contains(&e.id) {
                return Err(format!("edge {} missing from adjacency", e.id));
            }
            if e.behavior == BehaviorKind::GoTo {
                match self.reverse_of(e.id).map(|r| &self.edges[&r]) {
                    Some(r) if r.cost == e.cost => {}
                    _ => return Err(format!("goto edge {} has no matching reverse", e.id)),
                }
            }
        }
        let indexed: usize = self.out_index.values().map(|s| s.len()).sum();
        if indexed != self.edges.len() {
            return Err("adjacency index out of sync".into());
        }
        for n in self.nodes.values() {
            if n.kind == NodeKind::Frontier && !n.situation.is_unobserved() {
                return Err(format!("frontier {} holds observations", n.id));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
