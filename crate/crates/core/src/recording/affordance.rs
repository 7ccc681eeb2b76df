use std::collections::BTreeSet;

use super::frontier::{extract_frontiers, is_frontier_cell};
use super::Recorder;
use crate::geometry::Pose2;
use crate::graph::{
    BehaviorKind, DoorState, GraphError, NodeId, NodeKind, NodeOrigin, ObjectId, ObjectLabel, Situation,
    SituationalGraph, WorldObject,
};
use crate::grid::CellState;

/// The fixed affordance schema. Each rule maps a situation to a behavior
/// and a way of constructing the behavior's target node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Affordance {
    /// Traversable terrain leading to unknown space: go to a frontier.
    Frontier,
    /// A closed door: open it.
    Door,
    /// A person: ask the operator to take over.
    Person,
    /// A container: ask the operator to take over.
    Container,
}

impl Affordance {
    pub const ALL: [Affordance; 4] = [
        Affordance::Frontier,
        Affordance::Door,
        Affordance::Person,
        Affordance::Container,
    ];

    pub fn behavior(self) -> BehaviorKind {
        match self {
            Affordance::Frontier => BehaviorKind::GoTo,
            Affordance::Door => BehaviorKind::OpenDoor,
            Affordance::Person | Affordance::Container => BehaviorKind::RequestTeleop,
        }
    }

    pub fn precondition(self, situation: &Situation) -> bool {
        let has = |label| situation.objects.values().any(|o: &WorldObject| o.label == label);
        match self {
            Affordance::Frontier => {
                let g = &situation.gridmap;
                g.iter_cells().any(|(i, j, _)| is_frontier_cell(g, i, j))
            }
            Affordance::Door => situation
                .objects
                .values()
                .any(|o| o.label == ObjectLabel::Door && o.state == Some(DoorState::Closed)),
            Affordance::Person => has(ObjectLabel::Person),
            Affordance::Container => has(ObjectLabel::Container),
        }
    }
}

impl Recorder {
    /// Applies every affordance whose precondition holds at `node`. A second
    /// application on an unchanged situation adds nothing.
    pub fn apply_affordances(
        &mut self,
        graph: &mut SituationalGraph,
        node: NodeId,
    ) -> Result<Vec<crate::graph::GraphDelta>, GraphError> {
        let n = graph.node(node).ok_or(GraphError::UnknownNode(node))?;
        if n.kind == NodeKind::Waypoint {
            let situation = n.situation.clone();
            for rule in Affordance::ALL {
                if !rule.precondition(&situation) {
                    continue;
                }
                match rule {
                    Affordance::Frontier => self.sample_frontiers(graph, node),
                    Affordance::Door => self.doors(graph, node, &situation)?,
                    Affordance::Person => self.teleop(graph, node, &situation, ObjectLabel::Person)?,
                    Affordance::Container => self.teleop(graph, node, &situation, ObjectLabel::Container)?,
                }
            }
        }
        self.reconnect_orphans(graph);
        Ok(graph.take_deltas())
    }

    /// Best node to reach `target` from: `preferred` first, then waypoints by
    /// distance; the corridor must be observed free and not too long.
    fn link_source(
        &self,
        graph: &SituationalGraph,
        preferred: Option<NodeId>,
        target: Pose2,
        exclude: Option<NodeId>,
    ) -> Option<NodeId> {
        let r = self.config.robot_radius;
        let ok = |id: NodeId| {
            let p = graph.node(id).map(|n| n.pose);
            p.is_some_and(|p| {
                Some(id) != exclude
                    && p.distance(&target) <= self.config.max_link_length
                    && self.view.corridor_free((p.x, p.y), (target.x, target.y), r)
            })
        };
        if let Some(p) = preferred.filter(|&p| ok(p)) {
            return Some(p);
        }
        let mut candidates: Vec<(f64, NodeId)> = graph
            .nodes()
            .filter(|n| n.kind == NodeKind::Waypoint)
            .map(|n| (n.pose.distance(&target), n.id))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        candidates.into_iter().map(|(_, id)| id).find(|&id| ok(id))
    }

    fn sample_frontiers(&mut self, graph: &mut SituationalGraph, node: NodeId) {
        for pose in extract_frontiers(&self.view, graph, &self.config) {
            if graph
                .nodes()
                .any(|n| n.pose.distance(&pose) < self.config.frontier_separation)
            {
                continue;
            }
            // would be pruned straight away
            if self.near_robot(&pose) {
                continue;
            }
            let Some(src) = self.link_source(graph, Some(node), pose, None) else {
                continue;
            };
            let f = graph
                .add_node_from(
                    pose,
                    NodeKind::Frontier,
                    Situation::unobserved(),
                    NodeOrigin::Frontier,
                )
                .expect("finite pose");
            self.goto(graph, src, f);
        }
    }

    /// Frontiers whose every incoming edge was invalidated are relinked, or
    /// withdrawn when no observed-free corridor reaches them.
    fn reconnect_orphans(&mut self, graph: &mut SituationalGraph) {
        let orphans: Vec<(NodeId, Pose2)> = graph
            .nodes()
            .filter(|n| n.kind == NodeKind::Frontier)
            .filter(|n| graph.in_edges(n.id).map(|e| e.is_empty()).unwrap_or(false))
            .map(|n| (n.id, n.pose))
            .collect();
        for (f, pose) in orphans {
            match self.link_source(graph, None, pose, Some(f)) {
                Some(src) => self.goto(graph, src, f),
                None => graph.remove_node(f).expect("orphan exists"),
            }
        }
    }

    fn doors(
        &mut self,
        graph: &mut SituationalGraph,
        node: NodeId,
        situation: &Situation,
    ) -> Result<(), GraphError> {
        let source_pose = graph.node(node).ok_or(GraphError::UnknownNode(node))?.pose;
        for door in situation.objects.values() {
            if door.label != ObjectLabel::Door || self.door_state(graph, door.id) != Some(DoorState::Closed) {
                continue;
            }
            let params = BTreeSet::from([door.id]);
            let exists = graph
                .edges()
                .any(|e| e.behavior == BehaviorKind::OpenDoor && e.object_params == params);
            if exists {
                continue;
            }
            let (dx, dy) = (door.pose.x, door.pose.y);
            let axis = self.passage_axis((dx, dy), &source_pose);
            let off = self.config.doorway_offset;
            let beyond = Pose2::at(dx + off * axis.0, dy + off * axis.1);
            let approach = Pose2::at(dx - off * axis.0, dy - off * axis.1);

            let existing = graph
                .nearest_node_where(&approach, |n| n.kind == NodeKind::Waypoint)
                .filter(|&(_, d)| d <= self.config.visit_radius);
            let opener = if let Some((id, _)) = existing {
                id
            } else if source_pose.distance_to(dx, dy) <= self.config.door_reach {
                node
            } else if let Some(src) = self.link_source(graph, Some(node), approach, None) {
                let a = graph.add_node_from(
                    approach,
                    NodeKind::Waypoint,
                    Situation::unobserved(),
                    NodeOrigin::Doorway,
                )?;
                self.goto(graph, src, a);
                a
            } else {
                continue;
            };
            let kind = if self
                .view
                .unknown_within(beyond.x, beyond.y, self.config.prune_radius)
            {
                NodeKind::Frontier
            } else {
                NodeKind::Waypoint
            };
            let target = graph.add_node_from(beyond, kind, Situation::unobserved(), NodeOrigin::Doorway)?;
            graph.add_edge(
                opener,
                target,
                BehaviorKind::OpenDoor,
                params,
                self.config.costs.open_door,
            )?;
        }
        Ok(())
    }

    /// Unit vector through the doorway, pointing away from `from`. Walls on
    /// both sides of the door cell along one axis fix the passage to the
    /// other axis; otherwise the dominant component of `from -> door` is used.
    fn passage_axis(&self, door: (f64, f64), from: &Pose2) -> (f64, f64) {
        let res = self.view.resolution();
        let occ = |dx: f64, dy: f64| {
            self.view.state_at(door.0 + dx * res, door.1 + dy * res) == CellState::Occupied
        };
        let (vx, vy) = (door.0 - from.x, door.1 - from.y);
        let along_y = occ(1.0, 0.0) && occ(-1.0, 0.0);
        let along_x = occ(0.0, 1.0) && occ(0.0, -1.0);
        let use_y = if along_y != along_x {
            along_y
        } else {
            vy.abs() > vx.abs()
        };
        if use_y {
            (0.0, if vy >= 0.0 { 1.0 } else { -1.0 })
        } else {
            (if vx >= 0.0 { 1.0 } else { -1.0 }, 0.0)
        }
    }

    fn teleop(
        &mut self,
        graph: &mut SituationalGraph,
        node: NodeId,
        situation: &Situation,
        label: ObjectLabel,
    ) -> Result<(), GraphError> {
        let wanted: Vec<ObjectId> = situation
            .objects
            .values()
            .filter(|o| o.label == label)
            .map(|o| o.id)
            .collect();
        for obj in wanted {
            let params = BTreeSet::from([obj]);
            let exists = graph
                .edges()
                .any(|e| e.behavior == BehaviorKind::RequestTeleop && e.object_params == params);
            if !exists {
                graph.add_edge(
                    node,
                    node,
                    BehaviorKind::RequestTeleop,
                    params,
                    self.config.costs.request_teleop,
                )?;
            }
        }
        Ok(())
    }
}
