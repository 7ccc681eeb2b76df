use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::geometry::Pose3;
use crate::graph::{NodeId, NodeKind, Situation, WorldObject};
use crate::grid::GridMap;
use crate::planner::plan_path;
use crate::recording::RecorderConfig;
use crate::world::{load_scenario, Perception};

/// A walled room of `w` x `h` floor cells with the robot start in the bottom-left cell.
fn room(w: usize, h: usize) -> WorldModel {
    let mut text = String::from("resolution: 0.5\nname: room\n\n");
    text.push_str(&"#".repeat(w + 2));
    text.push('\n');
    for row in 0..h {
        let mut line = String::from("#");
        for col in 0..w {
            line.push(if row == h - 1 && col == 0 { 'S' } else { '.' });
        }
        line.push_str("#\n");
        text.push_str(&line);
    }
    text.push_str(&"#".repeat(w + 2));
    text.push('\n');
    load_scenario(&text).unwrap()
}

/// One-cell corridor with a closed door; the door cell centre is (2.75, 1.25).
fn door_corridor() -> WorldModel {
    load_scenario(
        "resolution: 0.5\nname: x\n\n###########\n###########\n#S...D....#\n###########\n###########\n",
    )
    .unwrap()
}

fn waypoint(g: &mut SituationalGraph, x: f64, y: f64) -> NodeId {
    g.add_node(
        Pose2::at(x, y),
        NodeKind::Waypoint,
        Situation::new(GridMap::empty(), []),
    )
    .unwrap()
}

fn goto(g: &mut SituationalGraph, a: NodeId, b: NodeId) -> EdgeId {
    let cost = g.node(a).unwrap().pose.distance(&g.node(b).unwrap().pose);
    g.add_edge(a, b, BehaviorKind::GoTo, BTreeSet::new(), cost)
        .unwrap()
}

/// Graph with a waypoint in front of the corridor door, the door object
/// and an `open_door` edge to a waypoint beyond it.
fn door_graph(world: &WorldModel, from_x: f64) -> (SituationalGraph, NodeId, EdgeId, ObjectId) {
    let door = world
        .objects()
        .find(|o| o.label == crate::graph::ObjectLabel::Door)
        .unwrap()
        .clone();
    let mut g = SituationalGraph::new();
    let a = waypoint(&mut g, from_x, 1.25);
    g.update_situation(a, GridMap::empty(), [door.clone()]).unwrap();
    let b = waypoint(&mut g, 3.75, 1.25);
    let e = g
        .add_edge(a, b, BehaviorKind::OpenDoor, BTreeSet::from([door.id]), 5.0)
        .unwrap();
    (g, b, e, door.id)
}

#[test]
fn straight_goto_takes_distance_over_speed_steps() {
    let mut w = room(12, 4);
    let mut g = SituationalGraph::new();
    let a = waypoint(&mut g, 0.75, 0.75);
    let b = waypoint(&mut g, 4.75, 0.75);
    let e = goto(&mut g, a, b);
    w.place_robot(Pose2::at(0.75, 0.75));
    let mut step = 0;
    let (o, events) = execute_goto(
        &mut w,
        &g,
        e,
        &ExecutorConfig::default(),
        &SensorConfig::default(),
        &mut step,
    )
    .unwrap();
    assert_eq!(o.status, OutcomeStatus::Succeeded);
    // 4 m at 1 m/s with 0.1 s steps; the last step may be a rounding sliver
    let expected = (4.0 / (w.robot().max_speed * DT)).ceil() as u64;
    assert!(
        o.steps_taken == expected || o.steps_taken == expected + 1,
        "{}",
        o.steps_taken
    );
    assert!(w.robot().pose.distance(&Pose2::at(4.75, 0.75)) < 1e-9);
    assert_eq!(step, o.steps_taken);
    // sensing happened on every step
    let poses = events
        .iter()
        .filter(|e| matches!(e.perception, Perception::PoseUpdate { .. }))
        .count() as u64;
    assert_eq!(poses, o.steps_taken);
}

#[test]
fn goto_already_at_target_takes_no_steps() {
    let mut w = room(12, 4);
    let mut g = SituationalGraph::new();
    let a = waypoint(&mut g, 0.75, 0.75);
    let b = waypoint(&mut g, 0.95, 0.75);
    let e = goto(&mut g, a, b);
    w.place_robot(Pose2::at(0.75, 0.75));
    let mut step = 0;
    let (o, _) = execute_goto(
        &mut w,
        &g,
        e,
        &ExecutorConfig::default(),
        &SensorConfig::default(),
        &mut step,
    )
    .unwrap();
    assert_eq!((o.status, o.steps_taken), (OutcomeStatus::Succeeded, 0));
    assert_eq!(w.robot().pose, Pose2::at(0.75, 0.75));
}

#[test]
fn goto_preconditions() {
    let mut w = room(12, 4);
    let (dg, _, door_edge, _) = door_graph(&door_corridor(), 1.75);
    let mut g = SituationalGraph::new();
    let a = waypoint(&mut g, 0.75, 0.75);
    let b = waypoint(&mut g, 4.75, 0.75);
    let e = goto(&mut g, a, b);
    w.place_robot(Pose2::at(2.25, 0.75));
    let mut step = 0;
    let cfg = ExecutorConfig::default();
    let s = SensorConfig::default();
    assert!(matches!(
        execute_goto(&mut w, &g, e, &cfg, &s, &mut step),
        Err(ExecError::NotAtSource { .. })
    ));
    let mut dw = door_corridor();
    assert_eq!(
        execute_goto(&mut dw, &dg, door_edge, &cfg, &s, &mut step),
        Err(ExecError::WrongBehavior {
            edge: door_edge,
            expected: BehaviorKind::GoTo,
            got: BehaviorKind::OpenDoor
        })
    );
    assert_eq!(
        execute_goto(&mut w, &g, EdgeId(99), &cfg, &s, &mut step),
        Err(ExecError::UnknownEdge(EdgeId(99)))
    );
}

#[test]
fn door_closing_mid_corridor_fails_the_goto() {
    let mut w = door_corridor();
    let door = w.objects().find(|o| o.state.is_some()).unwrap().id;
    w.set_door(door, DoorState::Open, 0).unwrap();
    let mut g = SituationalGraph::new();
    let a = waypoint(&mut g, 0.75, 1.25);
    let b = waypoint(&mut g, 4.75, 1.25);
    let e = goto(&mut g, a, b);
    let mut exec = Executor::new(ExecutorConfig::default());
    assert_eq!(exec.start(e, &g, &w).unwrap(), Started::default());
    let mut outcome = None;
    for step in 1..=200 {
        if step == 5 {
            w.set_door(door, DoorState::Closed, step).unwrap();
        }
        if let Some(o) = exec.step(&mut w, step).outcome {
            outcome = Some(o);
            break;
        }
    }
    let o = outcome.expect("behavior ends");
    assert_eq!(o.status, OutcomeStatus::Failed);
    assert!(o.detail.starts_with("no progress"), "{}", o.detail);
    // the robot stopped short of the door cell (x >= 2.5) by its radius
    let x = w.robot().pose.x;
    assert!(x <= 2.5 - w.robot().radius + 1e-9 && x > 1.5, "{x}");
    assert!(!exec.is_busy());
}

#[test]
fn open_door_opens_and_passes_through() {
    let mut w = door_corridor();
    let (g, beyond, e, door) = door_graph(&w, 1.75);
    w.place_robot(Pose2::at(1.75, 1.25));
    let mut step = 0;
    let cfg = ExecutorConfig::default();
    let (o, events) = execute_open_door(&mut w, &g, e, &cfg, &SensorConfig::default(), &mut step).unwrap();
    assert_eq!(o.status, OutcomeStatus::Succeeded);
    assert_eq!(w.door_state(door), Some(DoorState::Open));
    let target = g.node(beyond).unwrap().pose;
    assert!(w.robot().pose.distance(&target) <= cfg.arrival_tolerance);
    // 20 manipulation steps, then 2 m of driving
    assert!(o.steps_taken >= cfg.door_delay_steps + 20, "{}", o.steps_taken);
    assert!(events.iter().any(|e| e.perception
        == Perception::DoorStateChanged {
            door,
            state: DoorState::Open
        }));
    // the robot ends one metre past the door centre
    assert!((w.robot().pose.x - 2.75 - 1.0).abs() < 1e-9);
}

#[test]
fn open_door_on_open_door_only_traverses() {
    let mut w = door_corridor();
    let (g, _, e, door) = door_graph(&w, 1.75);
    w.set_door(door, DoorState::Open, 0).unwrap();
    w.place_robot(Pose2::at(1.75, 1.25));
    let mut step = 0;
    let (o, events) = execute_open_door(
        &mut w,
        &g,
        e,
        &ExecutorConfig::default(),
        &SensorConfig::default(),
        &mut step,
    )
    .unwrap();
    assert_eq!(o.status, OutcomeStatus::Succeeded);
    assert!(o.steps_taken <= 21, "{}", o.steps_taken);
    assert!(!events
        .iter()
        .any(|e| matches!(e.perception, Perception::DoorStateChanged { .. })));
}

#[test]
fn open_door_from_afar_is_rejected() {
    let mut w = load_scenario(
        "resolution: 0.5\nname: x\n\n#################\n#S.........D....#\n#################\n",
    )
    .unwrap();
    let door = w.objects().find(|o| o.state.is_some()).unwrap().clone();
    let mut g = SituationalGraph::new();
    let a = waypoint(&mut g, 0.75, 0.75);
    g.update_situation(a, GridMap::empty(), [door.clone()]).unwrap();
    let b = waypoint(&mut g, 6.75, 0.75);
    let e = g
        .add_edge(a, b, BehaviorKind::OpenDoor, BTreeSet::from([door.id]), 5.0)
        .unwrap();
    let mut step = 0;
    let err = execute_open_door(
        &mut w,
        &g,
        e,
        &ExecutorConfig::default(),
        &SensorConfig::default(),
        &mut step,
    )
    .unwrap_err();
    match err {
        ExecError::TooFarFromDoor { door: d, distance } => {
            assert_eq!(d, door.id);
            assert!((distance - 5.0).abs() < 1e-9);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn teleop_request_waits_for_the_operator() {
    let mut w = room(6, 4);
    let mut g = SituationalGraph::new();
    let a = waypoint(&mut g, 0.75, 0.75);
    let obj = WorldObject::new(
        ObjectId(7),
        crate::graph::ObjectLabel::Container,
        Pose3::planar(1.5, 1.5, 0.0),
    );
    g.update_situation(a, GridMap::empty(), [obj]).unwrap();
    let e = g
        .add_edge(
            a,
            a,
            BehaviorKind::RequestTeleop,
            BTreeSet::from([ObjectId(7)]),
            100.0,
        )
        .unwrap();
    let mut exec = Executor::new(ExecutorConfig::default());
    let started = exec.start(e, &g, &w).unwrap();
    assert_eq!(started.teleop_request, Some(ObjectId(7)));
    assert!(exec.awaiting_operator());
    let before = w.robot().pose;
    for step in 1..=10 {
        assert_eq!(exec.step(&mut w, step), StepOutput::default());
    }
    assert_eq!(w.robot().pose, before);
    let o = exec.end_teleop(OutcomeStatus::Succeeded, "released").unwrap();
    assert_eq!((o.status, o.steps_taken), (OutcomeStatus::Succeeded, 10));
    assert!(exec.end_teleop(OutcomeStatus::Succeeded, "again").is_none());

    exec.start(e, &g, &w).unwrap();
    exec.step(&mut w, 11);
    let o = exec
        .end_teleop(OutcomeStatus::Preempted, "autonomy resumed")
        .unwrap();
    assert_eq!(o.status, OutcomeStatus::Preempted);
}

#[test]
fn preempting_a_goto() {
    let mut w = room(12, 4);
    let mut g = SituationalGraph::new();
    let a = waypoint(&mut g, 0.75, 0.75);
    let b = waypoint(&mut g, 4.75, 0.75);
    let e = goto(&mut g, a, b);
    let mut exec = Executor::new(ExecutorConfig::default());
    exec.start(e, &g, &w).unwrap();
    assert_eq!(exec.start(e, &g, &w), Err(ExecError::Busy(e)));
    for step in 1..=5 {
        exec.step(&mut w, step);
    }
    let o = exec.preempt("autonomy changed").unwrap();
    assert_eq!((o.status, o.steps_taken), (OutcomeStatus::Preempted, 5));
    assert!((w.robot().pose.x - 1.25).abs() < 1e-9);
    assert!(exec.preempt("x").is_none());
}

/// Four waypoints in the layout of the example graph, in an open room.
fn chain() -> (SituationalGraph, [NodeId; 4]) {
    let mut g = SituationalGraph::new();
    let v = [
        waypoint(&mut g, 0.75, 0.75),
        waypoint(&mut g, 0.75, 3.75),
        waypoint(&mut g, 3.75, 3.75),
        waypoint(&mut g, 6.75, 3.75),
    ];
    goto(&mut g, v[0], v[1]);
    goto(&mut g, v[1], v[2]);
    goto(&mut g, v[2], v[3]);
    (g, v)
}

#[test]
fn plan_runs_edge_by_edge() {
    let mut w = room(16, 10);
    let (mut g, v) = chain();
    w.place_robot(Pose2::at(0.75, 0.75));
    let mut rec = Recorder::new(RecorderConfig::default(), w.resolution());
    let plan = plan_path(&g.snapshot(), v[0], v[3]).unwrap();
    let mut step = 0;
    let run = execute_plan(
        &mut w,
        &mut g,
        &mut rec,
        &plan,
        &ExecutorConfig::default(),
        &SensorConfig::default(),
        &mut step,
    )
    .unwrap();
    assert_eq!(run.outcomes.len(), 3);
    assert!(run.outcomes.iter().all(|o| o.status == OutcomeStatus::Succeeded));
    assert_eq!(
        run.outcomes.iter().map(|o| o.edge).collect::<Vec<_>>(),
        plan.edges
    );
    assert!(w.robot().pose.distance(&g.node(v[3]).unwrap().pose) < 1e-9);
    assert!(!run.deltas.is_empty(), "recording ran");
    g.check_invariants().unwrap();

    let empty = plan_path(&g.snapshot(), v[3], v[3]).unwrap();
    let run = execute_plan(
        &mut w,
        &mut g,
        &mut rec,
        &empty,
        &ExecutorConfig::default(),
        &SensorConfig::default(),
        &mut step,
    )
    .unwrap();
    assert!(run.outcomes.is_empty());
}

#[test]
fn plan_with_vanished_edge_is_stale() {
    let mut w = room(16, 10);
    let (mut g, v) = chain();
    w.place_robot(Pose2::at(0.75, 0.75));
    let mut rec = Recorder::new(RecorderConfig::default(), w.resolution());
    let plan = plan_path(&g.snapshot(), v[0], v[3]).unwrap();
    g.remove_edge(plan.edges[1]).unwrap();
    let mut step = 0;
    let err = execute_plan(
        &mut w,
        &mut g,
        &mut rec,
        &plan,
        &ExecutorConfig::default(),
        &SensorConfig::default(),
        &mut step,
    )
    .unwrap_err();
    assert_eq!(err, ExecError::StalePlan(plan.edges[1]));
    // the first edge was carried out before the plan went stale
    assert!(w.robot().pose.distance(&g.node(v[1]).unwrap().pose) < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn successful_goto_ends_at_target(ax in 0usize..16, ay in 0usize..10, bx in 0usize..16, by in 0usize..10) {
        let mut w = room(16, 10);
        let centre = |i: usize| (i as f64 + 1.5) * 0.5;
        let (pa, pb) = (Pose2::at(centre(ax), centre(ay)), Pose2::at(centre(bx), centre(by)));
        prop_assume!(pa.distance(&pb) > 0.0);
        let mut g = SituationalGraph::new();
        let a = waypoint(&mut g, pa.x, pa.y);
        let b = waypoint(&mut g, pb.x, pb.y);
        let e = goto(&mut g, a, b);
        w.place_robot(pa);
        let mut step = 0;
        let cfg = ExecutorConfig::default();
        let (o, _) = execute_goto(&mut w, &g, e, &cfg, &SensorConfig::default(), &mut step).unwrap();
        prop_assert_eq!(o.status, OutcomeStatus::Succeeded);
        prop_assert!(w.robot().pose.distance(&pb) <= cfg.arrival_tolerance);
    }
}
