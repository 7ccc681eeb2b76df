//! Behavior execution on the simulated robot.
//!
//! Behaviors are resumable: [`Executor::step`] advances the active behavior
//! by one simulation step so the mission loop can interleave sensing,
//! recording and operator commands. [`execute_edge`] and [`execute_plan`]
//! run behaviors to completion for headless use.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose2;
use crate::graph::{BehaviorKind, DoorState, Edge, EdgeId, GraphDelta, ObjectId, SituationalGraph};
use crate::planner::Plan;
use crate::recording::Recorder;
use crate::world::{MotionCommand, PerceptionEvent, SensorConfig, WorldModel};

/// Simulation time step in seconds.
pub const DT: f64 = 0.1;

/// Remaining distance under which a drive leg counts as complete.
const LEG_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutorConfig {
    pub arrival_tolerance: f64,
    /// A drive fails when it gains less than `stall_progress` metres over
    /// this many consecutive steps.
    pub stall_window: usize,
    pub stall_progress: f64,
    /// Manipulation time before a door opens.
    pub door_delay_steps: u64,
    pub door_reach: f64,
    /// How far from the source node a behavior may be started.
    pub source_tolerance: f64,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            arrival_tolerance: 0.3,
            stall_window: 20,
            stall_progress: 0.05,
            door_delay_steps: 20,
            door_reach: 1.5,
            source_tolerance: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OutcomeStatus {
    Succeeded,
    Failed,
    Preempted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorOutcome {
    pub edge: EdgeId,
    pub status: OutcomeStatus,
    pub steps_taken: u64,
    pub detail: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("edge {edge} is {got}, expected {expected}")]
    WrongBehavior {
        edge: EdgeId,
        expected: BehaviorKind,
        got: BehaviorKind,
    },
    #[error("robot is {distance:.2} m from the source of {edge}")]
    NotAtSource { edge: EdgeId, distance: f64 },
    #[error("robot is {distance:.2} m from door {door}")]
    TooFarFromDoor { door: ObjectId, distance: f64 },
    #[error("door {0} is not in the graph")]
    DoorMissing(ObjectId),
    #[error("plan edge {0} is no longer in the graph")]
    StalePlan(EdgeId),
    #[error("executor is busy with {0}")]
    Busy(EdgeId),
}

#[derive(Debug, Clone)]
enum Phase {
    Drive {
        legs: VecDeque<Pose2>,
        history: VecDeque<f64>,
    },
    Manipulate {
        door: ObjectId,
        remaining: u64,
        then: VecDeque<Pose2>,
    },
    AwaitOperator,
}

#[derive(Debug, Clone)]
struct Active {
    edge: Edge,
    steps: u64,
    phase: Phase,
}

/// What a call to [`Executor::start`] produced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Started {
    /// Set when the behavior finished without taking a step.
    pub outcome: Option<BehaviorOutcome>,
    /// The object a teleop request names.
    pub teleop_request: Option<ObjectId>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepOutput {
    /// Perception produced by the behavior itself (door state changes).
    pub events: Vec<PerceptionEvent>,
    pub outcome: Option<BehaviorOutcome>,
}

#[derive(Debug, Clone, Default)]
pub struct Executor {
    config: ExecutorConfig,
    active: Option<Active>,
}

impl Executor {
    pub fn new(config: ExecutorConfig) -> Self {
        Self { config, active: None }
    }

    pub fn config(&self) -> &ExecutorConfig {
        &self.config
    }

    pub fn active_edge(&self) -> Option<&Edge> {
        self.active.as_ref().map(|a| &a.edge)
    }

    pub fn is_busy(&self) -> bool {
        self.active.is_some()
    }

    /// Whether the active behavior is waiting for the operator.
    pub fn awaiting_operator(&self) -> bool {
        matches!(self.active.as_ref().map(|a| &a.phase), Some(Phase::AwaitOperator))
    }

    /// Checks preconditions and starts the behavior of `edge`.
    pub fn start(
        &mut self,
        edge: EdgeId,
        graph: &SituationalGraph,
        world: &WorldModel,
    ) -> Result<Started, ExecError> {
        if let Some(a) = &self.active {
            return Err(ExecError::Busy(a.edge.id));
        }
        let e = graph.edge(edge).ok_or(ExecError::UnknownEdge(edge))?.clone();
        let robot = world.robot().pose;
        let source = graph.node(e.source).expect("edge source exists").pose;
        let target = graph.node(e.target).expect("edge target exists").pose;
        let mut started = Started::default();
        let phase = match e.behavior {
            BehaviorKind::GoTo => {
                let d = robot.distance(&source);
                if d > self.config.source_tolerance {
                    return Err(ExecError::NotAtSource { edge, distance: d });
                }
                if robot.distance(&target) <= self.config.arrival_tolerance {
                    started.outcome = Some(BehaviorOutcome {
                        edge,
                        status: OutcomeStatus::Succeeded,
                        steps_taken: 0,
                        detail: "already at target".into(),
                    });
                    return Ok(started);
                }
                Phase::Drive {
                    legs: VecDeque::from([target]),
                    history: VecDeque::new(),
                }
            }
            BehaviorKind::OpenDoor => {
                let door = *e.object_params.iter().next().expect("open_door names a door");
                let obj = graph.object(door).ok_or(ExecError::DoorMissing(door))?;
                let (dx, dy) = (obj.pose.x, obj.pose.y);
                let d = robot.distance_to(dx, dy);
                if d > self.config.door_reach {
                    return Err(ExecError::TooFarFromDoor { door, distance: d });
                }
                // line up on the far side's mirror image so the last leg
                // passes straight through the doorway
                let mirror = Pose2::at(2.0 * dx - target.x, 2.0 * dy - target.y);
                let mut legs = VecDeque::new();
                if robot.distance(&mirror) > self.config.arrival_tolerance {
                    legs.push_back(mirror);
                }
                legs.push_back(target);
                if world.door_state(door) == Some(DoorState::Open) {
                    Phase::Drive {
                        legs,
                        history: VecDeque::new(),
                    }
                } else {
                    Phase::Manipulate {
                        door,
                        remaining: self.config.door_delay_steps,
                        then: legs,
                    }
                }
            }
            BehaviorKind::RequestTeleop => {
                started.teleop_request = e.object_params.iter().next().copied();
                Phase::AwaitOperator
            }
        };
        self.active = Some(Active {
            edge: e,
            steps: 0,
            phase,
        });
        Ok(started)
    }

    /// Advances the active behavior by one step of `DT` seconds.
    pub fn step(&mut self, world: &mut WorldModel, step: u64) -> StepOutput {
        let mut out = StepOutput::default();
        let Some(active) = self.active.as_mut() else {
            return out;
        };
        active.steps += 1;
        let mut finished: Option<(OutcomeStatus, String)> = None;
        let mut next = None;
        match &mut active.phase {
            Phase::AwaitOperator => {}
            Phase::Manipulate {
                door,
                remaining,
                then,
            } => {
                *remaining = remaining.saturating_sub(1);
                if *remaining == 0 {
                    match world.set_door(*door, DoorState::Open, step) {
                        Ok(ev) => out.events.push(ev),
                        Err(err) => finished = Some((OutcomeStatus::Failed, err.to_string())),
                    }
                    if finished.is_none() {
                        next = Some(Phase::Drive {
                            legs: std::mem::take(then),
                            history: VecDeque::new(),
                        });
                    }
                }
            }
            Phase::Drive { legs, history } => {
                let leg = *legs.front().expect("drive has a leg");
                let state = world.step(MotionCommand::Waypoint { target: leg }, DT);
                let remaining = state.pose.distance(&leg);
                if remaining <= LEG_EPS {
                    legs.pop_front();
                    history.clear();
                    if legs.is_empty() {
                        finished = Some((OutcomeStatus::Succeeded, "arrived".into()));
                    }
                } else {
                    history.push_back(remaining);
                    let w = self.config.stall_window;
                    if history.len() > w {
                        history.pop_front();
                    }
                    let stalled = history.len() == w
                        && history.front().unwrap() - history.back().unwrap() < self.config.stall_progress;
                    if stalled {
                        let to_target = state.pose.distance(legs.back().unwrap());
                        finished = Some(if legs.len() == 1 && to_target <= self.config.arrival_tolerance {
                            (OutcomeStatus::Succeeded, "arrived within tolerance".into())
                        } else {
                            (
                                OutcomeStatus::Failed,
                                format!("no progress, {to_target:.2} m short of target"),
                            )
                        });
                    }
                }
            }
        }
        if let Some(phase) = next {
            active.phase = phase;
        }
        if let Some((status, detail)) = finished {
            out.outcome = Some(self.finish(status, detail));
        }
        out
    }

    fn finish(&mut self, status: OutcomeStatus, detail: String) -> BehaviorOutcome {
        let a = self.active.take().expect("active behavior");
        BehaviorOutcome {
            edge: a.edge.id,
            status,
            steps_taken: a.steps,
            detail,
        }
    }

    /// Stops the active behavior on operator request.
    pub fn preempt(&mut self, detail: &str) -> Option<BehaviorOutcome> {
        self.active.as_ref()?;
        Some(self.finish(OutcomeStatus::Preempted, detail.to_string()))
    }

    /// Ends a teleop request: `Succeeded` once the operator hands back,
    /// `Preempted` when autonomy was resumed over it.
    pub fn end_teleop(&mut self, status: OutcomeStatus, detail: &str) -> Option<BehaviorOutcome> {
        if !self.awaiting_operator() {
            return None;
        }
        Some(self.finish(status, detail.to_string()))
    }
}

/// Runs one non-teleop behavior to completion, sensing after every step.
/// Returns the outcome and all perception gathered on the way.
pub fn execute_edge(
    world: &mut WorldModel,
    graph: &SituationalGraph,
    edge: EdgeId,
    config: &ExecutorConfig,
    sensors: &SensorConfig,
    step: &mut u64,
) -> Result<(BehaviorOutcome, Vec<PerceptionEvent>), ExecError> {
    let e = graph.edge(edge).ok_or(ExecError::UnknownEdge(edge))?;
    if e.behavior == BehaviorKind::RequestTeleop {
        return Err(ExecError::WrongBehavior {
            edge,
            expected: BehaviorKind::GoTo,
            got: e.behavior,
        });
    }
    let mut exec = Executor::new(*config);
    let started = exec.start(edge, graph, world)?;
    if let Some(o) = started.outcome {
        return Ok((o, Vec::new()));
    }
    let mut events = Vec::new();
    loop {
        *step += 1;
        let out = exec.step(world, *step);
        events.extend(out.events);
        events.extend(world.sense(sensors, *step));
        if let Some(o) = out.outcome {
            return Ok((o, events));
        }
    }
}

fn check_kind(graph: &SituationalGraph, edge: EdgeId, kind: BehaviorKind) -> Result<(), ExecError> {
    let e = graph.edge(edge).ok_or(ExecError::UnknownEdge(edge))?;
    if e.behavior != kind {
        return Err(ExecError::WrongBehavior {
            edge,
            expected: kind,
            got: e.behavior,
        });
    }
    Ok(())
}

pub fn execute_goto(
    world: &mut WorldModel,
    graph: &SituationalGraph,
    edge: EdgeId,
    config: &ExecutorConfig,
    sensors: &SensorConfig,
    step: &mut u64,
) -> Result<(BehaviorOutcome, Vec<PerceptionEvent>), ExecError> {
    check_kind(graph, edge, BehaviorKind::GoTo)?;
    execute_edge(world, graph, edge, config, sensors, step)
}

pub fn execute_open_door(
    world: &mut WorldModel,
    graph: &SituationalGraph,
    edge: EdgeId,
    config: &ExecutorConfig,
    sensors: &SensorConfig,
    step: &mut u64,
) -> Result<(BehaviorOutcome, Vec<PerceptionEvent>), ExecError> {
    check_kind(graph, edge, BehaviorKind::OpenDoor)?;
    execute_edge(world, graph, edge, config, sensors, step)
}

/// Outcomes of a plan run, with the graph deltas recording produced.
#[derive(Debug, Clone, Default)]
pub struct PlanRun {
    pub outcomes: Vec<BehaviorOutcome>,
    pub deltas: Vec<GraphDelta>,
}

/// Executes a plan edge by edge. The recorder observes every step, and
/// a full recording cycle (observe, affordances, pruning) runs after each
/// edge. Stops at the first outcome that is not `Succeeded`.
pub fn execute_plan(
    world: &mut WorldModel,
    graph: &mut SituationalGraph,
    recorder: &mut Recorder,
    plan: &Plan,
    config: &ExecutorConfig,
    sensors: &SensorConfig,
    step: &mut u64,
) -> Result<PlanRun, ExecError> {
    let mut run = PlanRun::default();
    for &edge in &plan.edges {
        let e = graph.edge(edge).ok_or(ExecError::StalePlan(edge))?;
        if e.behavior == BehaviorKind::RequestTeleop {
            return Err(ExecError::WrongBehavior {
                edge,
                expected: BehaviorKind::GoTo,
                got: e.behavior,
            });
        }
        let mut exec = Executor::new(*config);
        let started = exec.start(edge, graph, world)?;
        let outcome = match started.outcome {
            Some(o) => o,
            None => loop {
                *step += 1;
                let out = exec.step(world, *step);
                let mut events = out.events;
                events.extend(world.sense(sensors, *step));
                run.deltas.extend(recorder.observe(graph, &events));
                if let Some(o) = out.outcome {
                    break o;
                }
            },
        };
        let ok = outcome.status == OutcomeStatus::Succeeded;
        run.outcomes.push(outcome);
        let events = world.sense(sensors, *step);
        run.deltas.extend(recorder.observe(graph, &events));
        if let Some(v) = recorder.current(graph) {
            run.deltas
                .extend(recorder.apply_affordances(graph, v).expect("current node exists"));
        }
        run.deltas.extend(recorder.prune_frontiers(graph));
        if !ok {
            break;
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests;
