//! The mission loop: one simulation step at a time, owning the world, the
//! graph and every module's state.

use std::collections::BTreeSet;

use sitgraph_core::executor::{Executor, OutcomeStatus, DT};
use sitgraph_core::graph::{
    BehaviorKind, DoorState, EdgeId, GraphChange, GraphDelta, NodeKind, ObjectId, SituationalGraph,
};
use sitgraph_core::grid::CellState;
use sitgraph_core::planner::{planner_tick, replan_on_delta, AutonomyLevel, Decision, PlannerState};
use sitgraph_core::recording::Recorder;
use sitgraph_core::world::{MotionCommand, Perception, PerceptionEvent, RobotState, WorldModel};

use crate::config::{ConfigError, MissionConfig, TeleopInterrupt};
use crate::events::{
    EventBody, LogHeader, MissionEvent, MissionOutcome, MissionSummary, Notification, OperatorCommand,
};

/// A teleop behavior in progress, with the level to return to.
#[derive(Debug, Clone, Copy)]
struct Handover {
    previous: AutonomyLevel,
}

pub struct Mission {
    config: MissionConfig,
    world: WorldModel,
    graph: SituationalGraph,
    recorder: Recorder,
    executor: Executor,
    planner: PlannerState,
    step: u64,
    seq: u64,
    paused: bool,
    complete: bool,
    handover: Option<Handover>,
    /// Velocity to apply on the next motion phase (L4).
    teleop_velocity: Option<(f64, f64, f64)>,
    /// Behavior chosen by the operator at L3, started at the next planning phase.
    queued_behavior: Option<EdgeId>,
    /// Teleop edges waiting for the L1 handover policy.
    pending_requests: Vec<EdgeId>,
    /// Perception produced by behaviors, folded in at the next sensing phase.
    behavior_events: Vec<PerceptionEvent>,
    last_decision: Option<Decision>,
    /// Edges whose behavior failed, with the failure count.
    failures: std::collections::BTreeMap<EdgeId, u32>,
    reachable: Vec<(f64, f64)>,
    digest: String,
}

impl Mission {
    pub fn new(config: MissionConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let world = config.load_world()?;
        let digest = config.digest()?;
        let reachable = world
            .reachable_cells()
            .into_iter()
            .map(|(i, j)| {
                let r = world.resolution();
                ((i as f64 + 0.5) * r, (j as f64 + 0.5) * r)
            })
            .collect();
        Ok(Self {
            recorder: Recorder::new(config.recorder, world.resolution()),
            executor: Executor::new(config.executor),
            planner: PlannerState::new(config.autonomy),
            world,
            graph: SituationalGraph::new(),
            step: 0,
            seq: 0,
            paused: false,
            complete: false,
            handover: None,
            teleop_velocity: None,
            queued_behavior: None,
            pending_requests: Vec::new(),
            behavior_events: Vec::new(),
            last_decision: None,
            failures: Default::default(),
            reachable,
            digest,
            config,
        })
    }

    pub fn header(&self) -> LogHeader {
        LogHeader {
            config_digest: self.digest.clone(),
            scenario_name: self.world.name().to_string(),
            seed: self.config.seed,
            autonomy: self.config.autonomy,
        }
    }

    pub fn config(&self) -> &MissionConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn level(&self) -> AutonomyLevel {
        self.planner.level()
    }

    pub fn graph(&self) -> &SituationalGraph {
        &self.graph
    }

    pub fn world(&self) -> &WorldModel {
        &self.world
    }

    pub fn robot(&self) -> RobotState {
        *self.world.robot()
    }

    pub fn recorder(&self) -> &Recorder {
        &self.recorder
    }

    pub fn planner(&self) -> &PlannerState {
        &self.planner
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    /// Fraction of ground-truth reachable floor cells known in the fused view.
    pub fn coverage(&self) -> f64 {
        if self.reachable.is_empty() {
            return 1.0;
        }
        let view = self.recorder.view();
        let known = self
            .reachable
            .iter()
            .filter(|&&(x, y)| view.state_at(x, y) != CellState::Unknown)
            .count();
        known as f64 / self.reachable.len() as f64
    }

    pub fn frontier_count(&self) -> usize {
        self.graph
            .nodes()
            .filter(|n| n.kind == NodeKind::Frontier)
            .count()
    }

    pub fn summary(&self, outcome: MissionOutcome) -> MissionSummary {
        MissionSummary {
            steps: self.step,
            coverage_fraction: self.coverage(),
            frontiers_remaining: self.frontier_count(),
            outcome,
            revision: self.graph.revision(),
            nodes: self.graph.node_count(),
            edges: self.graph.edge_count(),
        }
    }

    /// Appends a closing event at the current step.
    pub fn finish(&mut self, body: EventBody) -> MissionEvent {
        let mut out = Vec::new();
        self.emit(&mut out, body);
        out.pop().expect("one event")
    }

    fn emit(&mut self, out: &mut Vec<MissionEvent>, body: EventBody) {
        self.seq += 1;
        out.push(MissionEvent {
            seq: self.seq,
            step: self.step,
            body,
        });
    }

    fn emit_deltas(&mut self, out: &mut Vec<MissionEvent>, deltas: Vec<GraphDelta>) -> Vec<GraphDelta> {
        for d in &deltas {
            self.emit(out, EventBody::GraphDelta { delta: d.clone() });
            if let GraphChange::EdgeAdded { edge } = &d.change {
                if edge.behavior == BehaviorKind::RequestTeleop {
                    let object = *edge.object_params.iter().next().expect("teleop names an object");
                    let label = self.graph.object(object).map(|o| o.label);
                    if let Some(label) = label {
                        self.emit(
                            out,
                            EventBody::Notification(Notification::TeleopAvailable {
                                edge: edge.id,
                                node: edge.source,
                                object,
                                label,
                            }),
                        );
                    }
                    if self.config.teleop.request_at_l1 {
                        self.pending_requests.push(edge.id);
                    }
                }
            }
        }
        deltas
    }

    fn set_level(&mut self, out: &mut Vec<MissionEvent>, to: AutonomyLevel, reason: &str) {
        let from = self.planner.level();
        if from == to {
            return;
        }
        self.planner.level = Some(to);
        self.planner.drop_plan();
        if to != AutonomyLevel::L2 {
            self.planner.operator_job = None;
        }
        if to != AutonomyLevel::L3 {
            self.queued_behavior = None;
        }
        if to != AutonomyLevel::L4 {
            self.teleop_velocity = None;
        }
        self.last_decision = None;
        self.emit(
            out,
            EventBody::AutonomyChanged {
                from,
                to,
                reason: reason.into(),
            },
        );
    }

    /// Ends an active behavior because the operator took over.
    fn preempt(&mut self, out: &mut Vec<MissionEvent>, detail: &str) {
        if self.executor.awaiting_operator() {
            return;
        }
        let kind = self.executor.active_edge().map(|e| e.behavior);
        if let (Some(kind), Some(o)) = (kind, self.executor.preempt(detail)) {
            self.emit(out, EventBody::outcome(kind, o));
        }
    }

    fn end_handover(&mut self, out: &mut Vec<MissionEvent>, status: OutcomeStatus, detail: &str) {
        self.handover = None;
        if let Some(o) = self.executor.end_teleop(status, detail) {
            self.emit(out, EventBody::outcome(BehaviorKind::RequestTeleop, o));
        }
    }

    fn reject(&mut self, out: &mut Vec<MissionEvent>, cmd: OperatorCommand, reason: &str) {
        self.emit(
            out,
            EventBody::Command {
                command: cmd,
                accepted: false,
                reason: Some(reason.into()),
            },
        );
        self.emit(
            out,
            EventBody::Notification(Notification::CommandRejected {
                command: cmd.name().into(),
                reason: reason.into(),
            }),
        );
    }

    fn accept(&mut self, out: &mut Vec<MissionEvent>, cmd: OperatorCommand) {
        self.emit(
            out,
            EventBody::Command {
                command: cmd,
                accepted: true,
                reason: None,
            },
        );
    }

    /// Validates and applies one operator command. Rejections are events,
    /// never errors.
    pub fn apply_command(&mut self, cmd: OperatorCommand, out: &mut Vec<MissionEvent>) {
        let level = self.planner.level();
        match cmd {
            OperatorCommand::SetAutonomy { level: to } => {
                self.accept(out, cmd);
                if self.handover.is_some() {
                    let (status, detail) = if matches!(to, AutonomyLevel::L1 | AutonomyLevel::L2) {
                        (OutcomeStatus::Preempted, "autonomy resumed")
                    } else {
                        (OutcomeStatus::Succeeded, "operator took over")
                    };
                    self.end_handover(out, status, detail);
                } else if to != level && matches!(to, AutonomyLevel::L3 | AutonomyLevel::L4) {
                    self.preempt(out, "autonomy level changed");
                }
                self.set_level(out, to, "operator");
            }
            OperatorCommand::AllocateJob { node } => {
                if level != AutonomyLevel::L2 {
                    return self.reject(out, cmd, "requires level 2");
                }
                if self.graph.node(node).is_none() {
                    return self.reject(out, cmd, "unknown node");
                }
                self.accept(out, cmd);
                self.planner.operator_job = Some(node);
                self.planner.drop_plan();
            }
            OperatorCommand::ExecuteBehavior { edge } => {
                if level != AutonomyLevel::L3 {
                    return self.reject(out, cmd, "requires level 3");
                }
                let Some(e) = self.graph.edge(edge) else {
                    return self.reject(out, cmd, "unknown edge");
                };
                let current = self.recorder.current(&self.graph);
                if current != Some(e.source) {
                    return self.reject(out, cmd, "behavior not available at the current node");
                }
                if self.executor.is_busy() || self.queued_behavior.is_some() {
                    return self.reject(out, cmd, "a behavior is already executing");
                }
                self.accept(out, cmd);
                self.queued_behavior = Some(edge);
            }
            OperatorCommand::Teleop { vx, vy, wz } => {
                if level != AutonomyLevel::L4 {
                    return self.reject(out, cmd, "requires level 4");
                }
                if ![vx, vy, wz].iter().all(|v| v.is_finite()) {
                    return self.reject(out, cmd, "velocities must be finite");
                }
                self.accept(out, cmd);
                self.teleop_velocity = Some((vx, vy, wz));
            }
            OperatorCommand::ReleaseTeleop => {
                let Some(h) = self.handover else {
                    return self.reject(out, cmd, "no teleop request active");
                };
                self.accept(out, cmd);
                self.end_handover(out, OutcomeStatus::Succeeded, "released by operator");
                self.set_level(out, h.previous, "teleop released");
            }
            OperatorCommand::Pause => {
                if self.paused {
                    return self.reject(out, cmd, "already paused");
                }
                self.accept(out, cmd);
                self.paused = true;
            }
            OperatorCommand::Resume => {
                if !self.paused {
                    return self.reject(out, cmd, "not paused");
                }
                self.accept(out, cmd);
                self.paused = false;
            }
        }
    }

    /// Runs one simulation step: commands, sensing, recording, planning,
    /// then one step of motion.
    pub fn tick(&mut self, commands: &[OperatorCommand]) -> Vec<MissionEvent> {
        self.step += 1;
        let mut out = Vec::new();
        for &cmd in commands {
            self.apply_command(cmd, &mut out);
        }
        if self.paused {
            return out;
        }

        // sensing and recording
        let mut events = std::mem::take(&mut self.behavior_events);
        events.extend(self.world.sense(&self.config.sensors, self.step));
        self.log_perception(&mut out, &events);
        let mut deltas = Vec::new();
        let d = self.recorder.observe(&mut self.graph, &events);
        deltas.extend(self.emit_deltas(&mut out, d));
        if let Some(v) = self.recorder.current(&self.graph) {
            let d = self
                .recorder
                .apply_affordances(&mut self.graph, v)
                .expect("current node exists");
            deltas.extend(self.emit_deltas(&mut out, d));
        }
        let d = self.recorder.prune_frontiers(&mut self.graph);
        deltas.extend(self.emit_deltas(&mut out, d));
        replan_on_delta(&mut self.planner, &deltas);
        self.failures.retain(|e, _| self.graph.edge(*e).is_some());

        // teleop handover policy
        if self.config.teleop.request_at_l1
            && self.planner.level() == AutonomyLevel::L1
            && self.config.teleop.interrupt == TeleopInterrupt::Immediate
            && !self.pending_requests.is_empty()
        {
            self.preempt(&mut out, "teleop requested");
        }

        // planning
        if !self.executor.is_busy() {
            self.plan(&mut out);
        }

        // motion
        self.advance(&mut out);
        out
    }

    fn log_perception(&mut self, out: &mut Vec<MissionEvent>, events: &[PerceptionEvent]) {
        let mut pose = self.world.robot().pose;
        let mut gridmap = None;
        let mut detections = BTreeSet::new();
        let mut door_changes: Vec<(ObjectId, DoorState)> = Vec::new();
        for e in events {
            match &e.perception {
                Perception::PoseUpdate { pose: p } => pose = *p,
                Perception::LocalGrid { gridmap: g } => gridmap = Some(g.clone()),
                Perception::ObjectDetected { object } => {
                    detections.insert(object.id);
                }
                Perception::DoorStateChanged { door, state } => door_changes.push((*door, *state)),
            }
        }
        self.emit(
            out,
            EventBody::Perception {
                pose,
                gridmap: gridmap.unwrap_or_else(sitgraph_core::grid::GridMap::empty),
                detections: detections.into_iter().collect(),
                door_changes,
            },
        );
    }

    fn plan(&mut self, out: &mut Vec<MissionEvent>) {
        let d = self.recorder.settle(&mut self.graph);
        if !d.is_empty() {
            let d = self.emit_deltas(out, d);
            replan_on_delta(&mut self.planner, &d);
        }
        self.planner.current = self.recorder.current(&self.graph);
        let level = self.planner.level();

        if level == AutonomyLevel::L1 && self.config.teleop.request_at_l1 {
            while let Some(edge) = self.pending_requests.first().copied() {
                self.pending_requests.remove(0);
                if self.graph.edge(edge).is_some() {
                    self.start_behavior(out, edge);
                    return;
                }
            }
        }
        if level == AutonomyLevel::L3 {
            if let Some(edge) = self.queued_behavior.take() {
                self.start_behavior(out, edge);
            }
            return;
        }
        if level == AutonomyLevel::L4 {
            return;
        }

        let snapshot = self.graph.snapshot();
        let (decision, report) = planner_tick(&snapshot, &mut self.planner, &self.config.rewards);
        if let Some(node) = report.no_path {
            self.emit(out, EventBody::Notification(Notification::NoPath { node }));
        }
        if let Some((source, plan)) = report.new_plan {
            self.emit(
                out,
                EventBody::Plan {
                    source,
                    job: report.job,
                    plan,
                },
            );
        }
        // consecutive idle decisions are logged once
        if !(decision == Decision::Idle && self.last_decision == Some(Decision::Idle)) {
            self.emit(out, EventBody::Decision { level, decision });
        }
        self.last_decision = Some(decision);
        match decision {
            Decision::ExecuteEdge(edge) => {
                if !self.start_behavior(out, edge) {
                    self.planner.drop_plan();
                }
            }
            Decision::MissionComplete => self.complete = true,
            Decision::Idle => {}
        }
    }

    /// Starts the behavior of `edge`; a failed precondition is reported as
    /// a notification.
    fn start_behavior(&mut self, out: &mut Vec<MissionEvent>, edge: EdgeId) -> bool {
        match self.executor.start(edge, &self.graph, &self.world) {
            Ok(started) => {
                if let Some(object) = started.teleop_request {
                    let previous = self.planner.level();
                    self.handover = Some(Handover { previous });
                    self.emit(
                        out,
                        EventBody::Notification(Notification::TeleopRequested { edge, object }),
                    );
                    self.set_level(out, AutonomyLevel::L4, "teleop requested");
                }
                if let Some(o) = started.outcome {
                    let kind = self
                        .graph
                        .edge(edge)
                        .map(|e| e.behavior)
                        .unwrap_or(BehaviorKind::GoTo);
                    self.emit(out, EventBody::outcome(kind, o));
                }
                true
            }
            Err(err) => {
                self.emit(
                    out,
                    EventBody::Notification(Notification::BehaviorRejected {
                        edge,
                        reason: err.to_string(),
                    }),
                );
                false
            }
        }
    }

    fn advance(&mut self, out: &mut Vec<MissionEvent>) {
        if let Some((vx, vy, wz)) = self.teleop_velocity.take() {
            self.world.step(MotionCommand::Velocity { vx, vy, wz }, DT);
            return;
        }
        if !self.executor.is_busy() {
            return;
        }
        let kind = self
            .executor
            .active_edge()
            .map(|e| e.behavior)
            .expect("busy executor");
        let step = self.executor.step(&mut self.world, self.step);
        self.behavior_events.extend(step.events);
        if let Some(o) = step.outcome {
            let (edge, failed) = (o.edge, o.status != OutcomeStatus::Succeeded);
            self.emit(out, EventBody::outcome(kind, o));
            if failed {
                self.planner.drop_plan();
                let n = self.failures.entry(edge).or_insert(0);
                *n += 1;
                // an edge that keeps failing is not traversable after all
                if *n >= 2 && kind != BehaviorKind::RequestTeleop && self.graph.edge(edge).is_some() {
                    self.graph.remove_edge(edge).expect("edge exists");
                    let d = self.graph.take_deltas();
                    let d = self.emit_deltas(out, d);
                    replan_on_delta(&mut self.planner, &d);
                }
            }
        }
    }
}
