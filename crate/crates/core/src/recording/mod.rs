//! Graph recording: folds perception into the graph, places waypoint nodes,
//! applies the affordance schema and maintains frontier nodes.

mod affordance;
mod frontier;
mod view;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::Pose2;
use crate::graph::{
    BehaviorKind, DoorState, EdgeCosts, GraphDelta, NodeId, NodeKind, NodeOrigin, ObjectId, Situation,
    SituationalGraph, WorldObject,
};
use crate::grid::GridMap;
use crate::world::{Perception, PerceptionEvent};

pub use affordance::Affordance;
pub use frontier::{extract_frontiers, frontier_clusters, is_frontier_cell};
pub use view::GlobalView;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecorderConfig {
    /// A new waypoint is placed once the robot is farther than this from every waypoint.
    pub node_spacing: f64,
    pub frontier_min_cluster: usize,
    pub frontier_separation: f64,
    pub prune_radius: f64,
    pub doorway_offset: f64,
    /// Distance within which the robot counts as being at a node.
    pub node_reach: f64,
    /// Distance within which a frontier counts as reached.
    pub visit_radius: f64,
    /// Maximum distance from which a door can be opened.
    pub door_reach: f64,
    pub robot_radius: f64,
    /// Longest `goto` edge the recorder creates towards a new node. Frontier
    /// candidates lie at the edge of the lidar range, so this must exceed it.
    pub max_link_length: f64,
    pub costs: EdgeCosts,
}

impl Default for RecorderConfig {
    fn default() -> Self {
        Self {
            node_spacing: 2.0,
            frontier_min_cluster: 3,
            frontier_separation: 1.0,
            prune_radius: 0.5,
            doorway_offset: 1.0,
            node_reach: 1.0,
            visit_radius: 0.3,
            door_reach: 1.5,
            robot_radius: crate::world::RobotState::DEFAULT_RADIUS,
            max_link_length: 7.5,
            costs: EdgeCosts::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Recorder {
    config: RecorderConfig,
    view: GlobalView,
    pose: Option<Pose2>,
    /// The node the robot was last at, or the last node created under it.
    last_node: Option<NodeId>,
    doors: BTreeMap<ObjectId, DoorState>,
}

impl Recorder {
    pub fn new(config: RecorderConfig, resolution: f64) -> Self {
        Self {
            config,
            view: GlobalView::new(resolution),
            pose: None,
            last_node: None,
            doors: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &RecorderConfig {
        &self.config
    }

    pub fn view(&self) -> &GlobalView {
        &self.view
    }

    pub fn pose(&self) -> Option<Pose2> {
        self.pose
    }

    /// Nearest waypoint to the robot.
    pub fn current(&self, graph: &SituationalGraph) -> Option<NodeId> {
        let pose = self.pose?;
        graph
            .nearest_node_where(&pose, |n| n.kind == NodeKind::Waypoint)
            .map(|(id, _)| id)
    }

    /// Latest door state seen by the robot, falling back to the graph.
    fn door_state(&self, graph: &SituationalGraph, door: ObjectId) -> Option<DoorState> {
        self.doors
            .get(&door)
            .copied()
            .or_else(|| graph.object(door).and_then(|o| o.state))
    }

    fn near_robot(&self, p: &Pose2) -> bool {
        self.pose.is_some_and(|r| {
            r.distance(p) <= self.config.node_spacing && self.view.line_of_sight((r.x, r.y), (p.x, p.y))
        })
    }

    fn goto(&self, graph: &mut SituationalGraph, a: NodeId, b: NodeId) {
        if a == b {
            return;
        }
        if graph
            .find_edge(a, b, BehaviorKind::GoTo, &Default::default())
            .is_some()
        {
            return;
        }
        let cost = graph.node(a).unwrap().pose.distance(&graph.node(b).unwrap().pose);
        graph
            .add_edge(a, b, BehaviorKind::GoTo, Default::default(), cost)
            .expect("valid goto");
    }

    /// Connects a node the robot just produced to where it came from: the
    /// last node if the straight corridor is not blocked, otherwise the
    /// nearest waypoint with an unblocked corridor.
    fn link_back(&self, graph: &mut SituationalGraph, new: NodeId) {
        let pose = graph.node(new).unwrap().pose;
        let r = self.config.robot_radius;
        let clear = |g: &SituationalGraph, id: NodeId| {
            let p = g.node(id).unwrap().pose;
            !self.view.corridor_blocked((p.x, p.y), (pose.x, pose.y), r)
        };
        if let Some(last) = self.last_node.filter(|&l| l != new && graph.node(l).is_some()) {
            if clear(graph, last) {
                self.goto(graph, last, new);
                return;
            }
        }
        let mut others: Vec<(f64, NodeId)> = graph
            .nodes()
            .filter(|n| n.kind == NodeKind::Waypoint && n.id != new)
            .map(|n| (n.pose.distance(&pose), n.id))
            .filter(|&(d, _)| d <= self.config.max_link_length)
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some(&(_, id)) = others.iter().find(|&&(_, id)| clear(graph, id)) {
            self.goto(graph, id, new);
        }
    }

    /// Folds one sensing cycle into the graph.
    ///
    /// Updates the robot pose, the fused view and the situation of the
    /// waypoint the robot is at; places a new waypoint when the robot is
    /// farther than `node_spacing` from all waypoints; marks reached
    /// frontiers visited; removes `goto` edges whose corridor became
    /// blocked and `open_door` edges whose door is open.
    pub fn observe(&mut self, graph: &mut SituationalGraph, events: &[PerceptionEvent]) -> Vec<GraphDelta> {
        let mut grid: Option<GridMap> = None;
        let mut seen: BTreeMap<ObjectId, WorldObject> = BTreeMap::new();
        let mut newly_occupied = Vec::new();
        for e in events {
            match &e.perception {
                Perception::PoseUpdate { pose } => self.pose = Some(*pose),
                Perception::LocalGrid { gridmap } => {
                    newly_occupied.extend(self.view.merge(gridmap));
                    grid = Some(gridmap.clone());
                }
                Perception::ObjectDetected { object } => {
                    if let Some(s) = object.state {
                        self.doors.insert(object.id, s);
                    }
                    seen.insert(object.id, object.clone());
                }
                Perception::DoorStateChanged { door, state } => {
                    self.doors.insert(*door, *state);
                    if let Some(o) = seen.get_mut(door) {
                        o.state = Some(*state);
                    }
                }
            }
        }
        if let Some(pose) = self.pose {
            self.place_nodes(graph, pose);
            if let (Some(grid), Some((v, d))) = (
                grid,
                graph.nearest_node_where(&pose, |n| n.kind == NodeKind::Waypoint),
            ) {
                if d <= self.config.node_reach {
                    let fresh = Situation::new(grid, seen.into_values());
                    if graph.node(v).unwrap().situation != fresh {
                        graph
                            .update_situation(v, fresh.gridmap, fresh.objects.into_values())
                            .expect("waypoint accepts observations");
                    }
                }
            }
        }
        self.validate_edges(graph, &newly_occupied);
        graph.take_deltas()
    }

    fn place_nodes(&mut self, graph: &mut SituationalGraph, pose: Pose2) {
        if let Some((f, d)) = graph.nearest_node_where(&pose, |n| n.kind == NodeKind::Frontier) {
            if d <= self.config.visit_radius {
                graph.mark_visited(f).expect("frontier exists");
                self.link_back(graph, f);
                self.last_node = Some(f);
            }
        }
        match graph.nearest_node_where(&pose, |n| n.kind == NodeKind::Waypoint) {
            None => {
                let id = graph
                    .add_node_from(
                        pose,
                        NodeKind::Waypoint,
                        Situation::unobserved(),
                        NodeOrigin::Start,
                    )
                    .expect("finite pose");
                self.last_node = Some(id);
            }
            Some((_, d)) if d > self.config.node_spacing => {
                let id = graph
                    .add_node_from(
                        pose,
                        NodeKind::Waypoint,
                        Situation::unobserved(),
                        NodeOrigin::Spacing,
                    )
                    .expect("finite pose");
                self.link_back(graph, id);
                self.last_node = Some(id);
            }
            Some((v, d)) if d <= self.config.node_reach => {
                if self.last_node != Some(v) {
                    if let Some(last) = self.last_node.filter(|&l| graph.node(l).is_some()) {
                        let (a, b) = (graph.node(last).unwrap().pose, graph.node(v).unwrap().pose);
                        if !self
                            .view
                            .corridor_blocked((a.x, a.y), (b.x, b.y), self.config.robot_radius)
                        {
                            self.goto(graph, last, v);
                        }
                    }
                    self.last_node = Some(v);
                }
            }
            Some(_) => {}
        }
    }

    /// Anchors an idle robot to the graph: when no waypoint is within
    /// `node_reach`, a waypoint is placed at the robot pose.
    pub fn settle(&mut self, graph: &mut SituationalGraph) -> Vec<GraphDelta> {
        if let Some(pose) = self.pose {
            let far = graph
                .nearest_node_where(&pose, |n| n.kind == NodeKind::Waypoint)
                .is_none_or(|(_, d)| d > self.config.node_reach);
            if far {
                let id = graph
                    .add_node_from(
                        pose,
                        NodeKind::Waypoint,
                        Situation::unobserved(),
                        NodeOrigin::Arrival,
                    )
                    .expect("finite pose");
                self.link_back(graph, id);
                self.last_node = Some(id);
            }
        }
        graph.take_deltas()
    }

    fn validate_edges(&mut self, graph: &mut SituationalGraph, newly_occupied: &[(f64, f64)]) {
        let r = self.config.robot_radius;
        let reach = r + self.view.resolution();
        let mut doomed = Vec::new();
        if !newly_occupied.is_empty() {
            for e in graph
                .edges()
                .filter(|e| e.behavior == BehaviorKind::GoTo && e.source < e.target)
            {
                let (a, b) = (
                    graph.node(e.source).unwrap().pose,
                    graph.node(e.target).unwrap().pose,
                );
                let near = newly_occupied.iter().any(|&(x, y)| {
                    x >= a.x.min(b.x) - reach
                        && x <= a.x.max(b.x) + reach
                        && y >= a.y.min(b.y) - reach
                        && y <= a.y.max(b.y) + reach
                });
                if near && self.view.corridor_blocked((a.x, a.y), (b.x, b.y), r) {
                    doomed.push(e.id);
                }
            }
        }
        for id in doomed {
            graph.remove_edge(id).expect("edge exists");
        }

        let opened: Vec<(crate::graph::EdgeId, NodeId, NodeId)> = graph
            .edges()
            .filter(|e| e.behavior == BehaviorKind::OpenDoor)
            .filter(|e| {
                e.object_params
                    .iter()
                    .all(|&d| self.door_state(graph, d) == Some(DoorState::Open))
            })
            .map(|e| (e.id, e.source, e.target))
            .collect();
        for (id, s, t) in opened {
            graph.remove_edge(id).expect("edge exists");
            let (a, b) = (graph.node(s).unwrap().pose, graph.node(t).unwrap().pose);
            if self.view.corridor_free((a.x, a.y), (b.x, b.y), r) {
                self.goto(graph, s, t);
            }
        }
    }

    /// Removes frontiers with no unknown cell within `prune_radius`, and
    /// frontiers within `node_spacing` of the robot that it can see.
    pub fn prune_frontiers(&mut self, graph: &mut SituationalGraph) -> Vec<GraphDelta> {
        let doomed: Vec<NodeId> = graph
            .nodes()
            .filter(|n| n.kind == NodeKind::Frontier)
            .filter(|n| {
                !self
                    .view
                    .unknown_within(n.pose.x, n.pose.y, self.config.prune_radius)
                    || self.near_robot(&n.pose)
            })
            .map(|n| n.id)
            .collect();
        for id in doomed {
            graph.remove_node(id).expect("frontier exists");
        }
        graph.take_deltas()
    }
}
