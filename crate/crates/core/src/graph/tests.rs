use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fixtures::example_graph;

fn waypoint(g: &mut SituationalGraph, x: f64, y: f64) -> NodeId {
    g.add_node(Pose2::at(x, y), NodeKind::Waypoint, Situation::unobserved())
        .unwrap()
}

fn goto(g: &mut SituationalGraph, a: NodeId, b: NodeId) -> Result<EdgeId, GraphError> {
    g.add_edge(a, b, BehaviorKind::GoTo, BTreeSet::new(), 1.0)
}

#[test]
fn example_ids_are_assigned_in_order() {
    let (_, ids) = example_graph();
    let got: Vec<u64> = ids.waypoints.iter().chain([&ids.frontier]).map(|n| n.0).collect();
    assert_eq!(got, vec![1, 2, 3, 4, 5]);
}

#[test]
fn first_node_in_empty_graph() {
    let mut g = SituationalGraph::new();
    assert_eq!(g.node_count(), 0);
    let id = waypoint(&mut g, 1.0, 2.0);
    assert_eq!(g.node_count(), 1);
    assert_eq!(g.node(id).unwrap().pose, Pose2::at(1.0, 2.0));
}

#[test]
fn revision_counts_every_add() {
    let mut g = SituationalGraph::new();
    let before = g.revision();
    let mut expected = before;
    for i in 0..1000 {
        waypoint(&mut g, i as f64, 0.0);
        expected += 1;
    }
    assert_eq!(g.revision(), expected);
    assert_eq!(g.revision() - before, 1000);
}

#[test]
fn non_finite_pose_is_rejected() {
    let mut g = SituationalGraph::new();
    let err = g
        .add_node(
            Pose2::at(f64::NAN, 0.0),
            NodeKind::Waypoint,
            Situation::unobserved(),
        )
        .unwrap_err();
    assert!(matches!(err, GraphError::InvariantViolation(_)));
}

#[test]
fn goto_is_stored_in_both_directions() {
    let mut g = SituationalGraph::new();
    let a = waypoint(&mut g, 0.0, 0.0);
    let b = waypoint(&mut g, 3.0, 0.0);
    goto(&mut g, a, b).unwrap();
    assert_eq!(g.edge_count(), 2);
    assert!(g.find_edge(a, b, BehaviorKind::GoTo, &BTreeSet::new()).is_some());
    assert!(g.find_edge(b, a, BehaviorKind::GoTo, &BTreeSet::new()).is_some());
}

#[test]
fn open_door_is_one_directional() {
    let (g, ids) = example_graph();
    let e = g.edge(ids.door_edge).unwrap();
    assert_eq!(e.behavior, BehaviorKind::OpenDoor);
    assert_eq!(e.source, ids.waypoints[3]);
    assert_eq!(e.object_params, BTreeSet::from([ids.door]));
    assert!(g
        .find_edge(
            ids.beyond_door,
            ids.waypoints[3],
            BehaviorKind::OpenDoor,
            &e.object_params
        )
        .is_none());
}

#[test]
fn duplicate_goto_is_rejected() {
    let mut g = SituationalGraph::new();
    let a = waypoint(&mut g, 0.0, 0.0);
    let b = waypoint(&mut g, 3.0, 0.0);
    goto(&mut g, a, b).unwrap();
    assert!(matches!(
        goto(&mut g, a, b),
        Err(GraphError::DuplicateEdge { .. })
    ));
    assert!(matches!(
        goto(&mut g, b, a),
        Err(GraphError::DuplicateEdge { .. })
    ));
}

#[test]
fn edge_invariants_are_enforced() {
    let (mut g, ids) = example_graph();
    let [v1, v2, ..] = ids.waypoints;
    let no_door = g.add_edge(v1, v2, BehaviorKind::OpenDoor, BTreeSet::new(), 5.0);
    assert!(matches!(no_door, Err(GraphError::InvariantViolation(_))));
    let not_a_door = g.add_edge(
        v1,
        v2,
        BehaviorKind::OpenDoor,
        BTreeSet::from([ids.container]),
        5.0,
    );
    assert!(matches!(not_a_door, Err(GraphError::InvariantViolation(_))));
    let teleop_moves = g.add_edge(
        v1,
        v2,
        BehaviorKind::RequestTeleop,
        BTreeSet::from([ids.container]),
        1.0,
    );
    assert!(matches!(teleop_moves, Err(GraphError::InvariantViolation(_))));
    let goto_params = g.add_edge(v1, v2, BehaviorKind::GoTo, BTreeSet::from([ids.door]), 1.0);
    assert!(matches!(goto_params, Err(GraphError::InvariantViolation(_))));
    let negative = g.add_edge(v1, ids.frontier, BehaviorKind::GoTo, BTreeSet::new(), -1.0);
    assert!(matches!(negative, Err(GraphError::InvariantViolation(_))));
    let unknown = g.add_edge(v1, NodeId(99), BehaviorKind::GoTo, BTreeSet::new(), 1.0);
    assert_eq!(unknown, Err(GraphError::UnknownNode(NodeId(99))));
}

#[test]
fn removing_door_edge_drops_out_degree() {
    let (mut g, ids) = example_graph();
    let v4 = ids.waypoints[3];
    let before = g.out_edges(v4).unwrap().len();
    g.remove_edge(ids.door_edge).unwrap();
    assert_eq!(g.out_edges(v4).unwrap().len(), before - 1);
}

#[test]
fn remove_from_empty_graph() {
    let mut g = SituationalGraph::new();
    assert_eq!(g.remove_edge(EdgeId(1)), Err(GraphError::UnknownEdge(EdgeId(1))));
}

#[test]
fn add_then_remove_goto_restores_structure() {
    let (mut g, ids) = example_graph();
    let before = g.snapshot();
    let e = goto(&mut g, ids.waypoints[0], ids.waypoints[3]).unwrap();
    g.remove_edge(e).unwrap();
    let after = g.snapshot();
    assert!(after.revision > before.revision);
    assert_eq!(after.nodes, before.nodes);
    assert_eq!(after.edges, before.edges);
}

#[test]
fn remove_node_takes_incident_edges() {
    let (mut g, ids) = example_graph();
    g.remove_node(ids.waypoints[1]).unwrap();
    assert!(g
        .edges()
        .all(|e| e.source != ids.waypoints[1] && e.target != ids.waypoints[1]));
    g.check_invariants().unwrap();
}

#[test]
fn nearest_at_exact_position() {
    let (g, ids) = example_graph();
    assert_eq!(
        g.nearest_node(&Pose2::at(0.0, 3.0)).unwrap(),
        (ids.waypoints[1], 0.0)
    );
}

#[test]
fn nearest_tie_goes_to_lowest_id() {
    let mut g = SituationalGraph::new();
    let a = waypoint(&mut g, 0.0, 0.0);
    waypoint(&mut g, 2.0, 0.0);
    assert_eq!(g.nearest_node(&Pose2::at(1.0, 0.0)).unwrap(), (a, 1.0));
}

#[test]
fn nearest_on_empty_graph() {
    assert_eq!(
        SituationalGraph::new().nearest_node(&Pose2::at(0.0, 0.0)),
        Err(GraphError::EmptyGraph)
    );
}

#[test]
fn nearest_matches_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut g = SituationalGraph::new();
    let mut points = Vec::new();
    for _ in 0..40 {
        // coarse coordinates so exact ties occur
        let (x, y) = (rng.gen_range(0..10) as f64, rng.gen_range(0..10) as f64);
        let id = waypoint(&mut g, x, y);
        points.push((id, x, y));
    }
    for _ in 0..100 {
        let q = Pose2::at(rng.gen_range(-1.0..11.0), rng.gen_range(-1.0..11.0));
        let mut best = (points[0].0, f64::INFINITY);
        for &(id, x, y) in &points {
            let d = ((q.x - x).powi(2) + (q.y - y).powi(2)).sqrt();
            if d < best.1 || (d == best.1 && id < best.0) {
                best = (id, d);
            }
        }
        let (id, d) = g.nearest_node(&q).unwrap();
        assert_eq!(id, best.0);
        assert!((d - best.1).abs() < 1e-12);
    }
}

#[test]
fn redetected_door_updates_in_place() {
    let (mut g, ids) = example_graph();
    let v4 = ids.waypoints[3];
    let open = WorldObject::door(ids.door, Pose3::planar(7.0, 3.0, 0.0), DoorState::Open);
    g.update_situation(v4, GridMap::empty(), [open]).unwrap();
    let objs = &g.node(v4).unwrap().situation.objects;
    assert_eq!(objs.len(), 1);
    assert_eq!(objs[&ids.door].state, Some(DoorState::Open));
    assert_eq!(g.object(ids.door).unwrap().state, Some(DoorState::Open));
}

#[test]
fn empty_update_clears_objects() {
    let (mut g, ids) = example_graph();
    g.update_situation(ids.waypoints[2], GridMap::empty(), [])
        .unwrap();
    assert!(g.node(ids.waypoints[2]).unwrap().situation.objects.is_empty());
    // the registry still remembers the container
    assert!(g.object(ids.container).is_some());
}

#[test]
fn latest_situation_wins() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut g, ids) = example_graph();
    let v1 = ids.waypoints[0];
    let mut last = None;
    for k in 0..50 {
        let n = rng.gen_range(0..4);
        let objs: Vec<WorldObject> = (0..n)
            .map(|i| {
                WorldObject::new(
                    ObjectId(100 + i),
                    ObjectLabel::Person,
                    Pose3::planar(rng.gen_range(0.0..5.0), k as f64, 0.0),
                )
            })
            .collect();
        let grid = GridMap::new(k % 5 + 1, 2, 0.5, Pose2::at(0.0, 0.0));
        g.update_situation(v1, grid.clone(), objs.clone()).unwrap();
        last = Some(Situation::new(grid, objs));
    }
    assert_eq!(g.node(v1).unwrap().situation, last.unwrap());
}

#[test]
fn situation_update_rejects_bad_objects() {
    let (mut g, ids) = example_graph();
    let stateless_door = WorldObject::new(ObjectId(9), ObjectLabel::Door, Pose3::planar(0.0, 0.0, 0.0));
    assert!(g
        .update_situation(ids.waypoints[0], GridMap::empty(), [stateless_door])
        .is_err());
    let person = WorldObject::new(ObjectId(9), ObjectLabel::Person, Pose3::planar(0.0, 0.0, 0.0));
    assert!(matches!(
        g.update_situation(ids.frontier, GridMap::empty(), [person]),
        Err(GraphError::InvariantViolation(_))
    ));
    assert_eq!(
        g.update_situation(NodeId(77), GridMap::empty(), []),
        Err(GraphError::UnknownNode(NodeId(77)))
    );
}

#[test]
fn out_edges_of_v2() {
    let (g, ids) = example_graph();
    let [v1, v2, v3, _] = ids.waypoints;
    let out = g.out_edges(v2).unwrap();
    let targets: BTreeSet<NodeId> = out.iter().map(|e| e.target).collect();
    assert_eq!(targets, BTreeSet::from([v1, v3, ids.frontier]));
    assert!(out.iter().all(|e| e.behavior == BehaviorKind::GoTo));
    assert!(out.windows(2).all(|w| w[0].id < w[1].id));
}

#[test]
fn isolated_node_has_no_out_edges() {
    let (mut g, _) = example_graph();
    let lone = waypoint(&mut g, 50.0, 50.0);
    assert!(g.out_edges(lone).unwrap().is_empty());
    assert_eq!(
        g.out_edges(NodeId(999)).unwrap_err(),
        GraphError::UnknownNode(NodeId(999))
    );
}

#[test]
fn out_edges_partition_the_edge_set() {
    let (g, _) = example_graph();
    let mut union = BTreeSet::new();
    for n in g.nodes() {
        for e in g.out_edges(n.id).unwrap() {
            assert!(union.insert(e.id));
        }
    }
    let all: BTreeSet<EdgeId> = g.edges().map(|e| e.id).collect();
    assert_eq!(union, all);
}

#[test]
fn snapshot_is_frozen() {
    let (mut g, _) = example_graph();
    let snap = g.snapshot();
    assert_eq!(snap.revision, g.revision());
    let count = snap.nodes.len();
    waypoint(&mut g, 9.0, 9.0);
    assert_eq!(snap.nodes.len(), count);
    assert!(g.revision() > snap.revision);
}

#[test]
fn snapshot_json_round_trip() {
    let (g, _) = example_graph();
    let snap = g.snapshot();
    let back = GraphSnapshot::from_json(&snap.to_json()).unwrap();
    assert_eq!(back, snap);
}

#[test]
fn snapshot_json_shape() {
    let (g, ids) = example_graph();
    let v: serde_json::Value = serde_json::from_str(&g.snapshot().to_json()).unwrap();
    assert!(v["revision"].is_u64());
    let v4 = &v["nodes"][3];
    assert_eq!(v4["id"], 4);
    assert_eq!(v4["kind"], "waypoint");
    assert_eq!(v4["objects"][0]["label"], "door");
    assert_eq!(v4["objects"][0]["state"], "closed");
    assert!(v["nodes"][2]["objects"][0].get("state").is_none());
    let door = v["edges"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["id"] == ids.door_edge.0)
        .unwrap();
    assert_eq!(door["behavior"], "open_door");
    assert_eq!(door["object_params"], serde_json::json!([ids.door.0]));
}

#[test]
fn replaying_deltas_rebuilds_the_graph() {
    let (mut g, ids) = example_graph();
    g.remove_node(ids.frontier).unwrap();
    g.mark_visited(ids.beyond_door).unwrap();
    let deltas = g.take_deltas();
    let mut rebuilt = SituationalGraph::new();
    for d in &deltas {
        let text = serde_json::to_string(d).unwrap();
        let back: GraphDelta = serde_json::from_str(&text).unwrap();
        rebuilt.apply_delta(&back).unwrap();
    }
    assert_eq!(rebuilt.snapshot(), g.snapshot());
    rebuilt.check_invariants().unwrap();
}

#[test]
fn delta_wire_shape() {
    let mut g = SituationalGraph::new();
    waypoint(&mut g, 1.0, 1.0);
    let d = &g.take_deltas()[0];
    let v = serde_json::to_value(d).unwrap();
    assert_eq!(v["type"], "node_added");
    assert_eq!(v["revision"], 1);
    assert_eq!(v["payload"]["node"]["id"], 1);
}

#[derive(Debug, Clone)]
enum Op {
    AddNode(u8, u8, bool),
    Goto(u8, u8),
    Teleop(u8),
    RemoveEdge(u8),
    RemoveNode(u8),
    Visit(u8),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u8..20, 0u8..20, any::<bool>()).prop_map(|(x, y, f)| Op::AddNode(x, y, f)),
        (any::<u8>(), any::<u8>()).prop_map(|(a, b)| Op::Goto(a, b)),
        any::<u8>().prop_map(Op::Teleop),
        any::<u8>().prop_map(Op::RemoveEdge),
        any::<u8>().prop_map(Op::RemoveNode),
        any::<u8>().prop_map(Op::Visit),
    ]
}

proptest! {
    #[test]
    fn mutations_preserve_invariants(ops in proptest::collection::vec(op(), 1..80)) {
        let mut g = SituationalGraph::new();
        let person = WorldObject::new(ObjectId(1), ObjectLabel::Person, Pose3::planar(0.0, 0.0, 0.0));
        for op in ops {
            let before = g.revision();
            let nodes: Vec<NodeId> = g.nodes().map(|n| n.id).collect();
            let edges: Vec<EdgeId> = g.edges().map(|e| e.id).collect();
            let pick = |v: &[NodeId], k: u8| (!v.is_empty()).then(|| v[k as usize % v.len()]);
            let changed = match op {
                Op::AddNode(x, y, frontier) => {
                    let kind = if frontier { NodeKind::Frontier } else { NodeKind::Waypoint };
                    g.add_node(Pose2::at(x as f64, y as f64), kind, Situation::unobserved()).is_ok()
                }
                Op::Goto(a, b) => match (pick(&nodes, a), pick(&nodes, b)) {
                    (Some(a), Some(b)) => goto(&mut g, a, b).is_ok(),
                    _ => false,
                },
                Op::Teleop(a) => match pick(&nodes, a) {
                    Some(a) if g.node(a).unwrap().kind == NodeKind::Waypoint => {
                        g.update_situation(a, GridMap::empty(), [person.clone()]).unwrap();
                        let _ = g.add_edge(a, a, BehaviorKind::RequestTeleop, BTreeSet::from([person.id]), 100.0);
                        true
                    }
                    _ => false,
                },
                Op::RemoveEdge(k) => !edges.is_empty()
                    && g.remove_edge(edges[k as usize % edges.len()]).is_ok(),
                Op::RemoveNode(k) => pick(&nodes, k).map(|n| g.remove_node(n).is_ok()).unwrap_or(false),
                Op::Visit(k) => pick(&nodes, k).map(|n| g.mark_visited(n).unwrap()).unwrap_or(false),
            };
            if changed {
                prop_assert!(g.revision() > before);
            } else {
                prop_assert_eq!(g.revision(), before);
            }
            prop_assert_eq!(g.check_invariants(), Ok(()));
        }
        let snap = g.snapshot();
        prop_assert_eq!(GraphSnapshot::from_json(&snap.to_json()).unwrap(), snap);
    }
}
