//! Small hand-built graphs shared by tests and examples.

use std::collections::BTreeSet;

use crate::geometry::{Pose2, Pose3};
use crate::graph::{
    BehaviorKind, DoorState, EdgeCosts, EdgeId, NodeId, NodeKind, ObjectId, ObjectLabel, Situation,
    SituationalGraph, WorldObject,
};
use crate::grid::GridMap;

/// Ids of the four-waypoint example graph.
#[derive(Debug, Clone)]
pub struct ExampleIds {
    pub waypoints: [NodeId; 4],
    pub frontier: NodeId,
    pub beyond_door: NodeId,
    pub container: ObjectId,
    pub door: ObjectId,
    pub teleop_edge: EdgeId,
    pub door_edge: EdgeId,
}

/// Four waypoints `v1..v4` chained by `goto` pairs, a frontier `v5` reached
/// from `v2`, a container seen from `v3` (with a teleop self-loop) and a
/// closed door seen from `v4` (with an `open_door` edge to `v6` beyond it).
///
/// ```text
///   v5 (frontier)
///    |
///   v2 ---- v3 ---- v4 --door--> v6
///    |      (o2)    (o3)
///   v1
/// ```
pub fn example_graph() -> (SituationalGraph, ExampleIds) {
    let costs = EdgeCosts::default();
    let mut g = SituationalGraph::new();
    let container = ObjectId(2);
    let door = ObjectId(3);

    let poses = [
        Pose2::at(0.0, 0.0),
        Pose2::at(0.0, 3.0),
        Pose2::at(3.0, 3.0),
        Pose2::at(6.0, 3.0),
    ];
    let mut waypoints = [NodeId(0); 4];
    for (slot, pose) in waypoints.iter_mut().zip(poses) {
        *slot = g
            .add_node(pose, NodeKind::Waypoint, Situation::new(GridMap::empty(), []))
            .expect("finite pose");
    }
    let frontier_pose = Pose2::at(-2.0, 4.5);
    let frontier = g
        .add_node(frontier_pose, NodeKind::Frontier, Situation::unobserved())
        .expect("finite pose");

    let [v1, v2, v3, v4] = waypoints;
    g.update_situation(
        v3,
        GridMap::empty(),
        [WorldObject::new(
            container,
            ObjectLabel::Container,
            Pose3::planar(3.0, 4.5, 0.0),
        )],
    )
    .expect("v3 exists");
    g.update_situation(
        v4,
        GridMap::empty(),
        [WorldObject::door(
            door,
            Pose3::planar(7.0, 3.0, 0.0),
            DoorState::Closed,
        )],
    )
    .expect("v4 exists");
    let beyond_door = g
        .add_node(Pose2::at(8.0, 3.0), NodeKind::Frontier, Situation::unobserved())
        .expect("finite pose");

    for (a, b) in [(v1, v2), (v2, v3), (v3, v4), (v2, frontier)] {
        let cost = costs.cost_for(
            BehaviorKind::GoTo,
            &g.node(a).unwrap().pose,
            &g.node(b).unwrap().pose,
        );
        g.add_edge(a, b, BehaviorKind::GoTo, BTreeSet::new(), cost)
            .expect("valid goto");
    }
    let teleop_edge = g
        .add_edge(
            v3,
            v3,
            BehaviorKind::RequestTeleop,
            BTreeSet::from([container]),
            costs.request_teleop,
        )
        .expect("valid teleop");
    let door_edge = g
        .add_edge(
            v4,
            beyond_door,
            BehaviorKind::OpenDoor,
            BTreeSet::from([door]),
            costs.open_door,
        )
        .expect("valid door edge");

    (
        g,
        ExampleIds {
            waypoints,
            frontier,
            beyond_door,
            container,
            door,
            teleop_edge,
            door_edge,
        },
    )
}
