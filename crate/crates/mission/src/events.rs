//! Mission events and the operator command set.

use serde::{Deserialize, Serialize};

use sitgraph_core::executor::{BehaviorOutcome, OutcomeStatus};
use sitgraph_core::geometry::Pose2;
use sitgraph_core::graph::{BehaviorKind, DoorState, EdgeId, GraphDelta, NodeId, ObjectId, ObjectLabel};
use sitgraph_core::grid::GridMap;
use sitgraph_core::planner::{AutonomyLevel, Decision, Job, Plan, PlanSource};

/// Commands an operator can send. Also the client half of the wire protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OperatorCommand {
    SetAutonomy { level: AutonomyLevel },
    AllocateJob { node: NodeId },
    ExecuteBehavior { edge: EdgeId },
    Teleop { vx: f64, vy: f64, wz: f64 },
    ReleaseTeleop,
    Pause,
    Resume,
}

impl OperatorCommand {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorCommand::SetAutonomy { .. } => "set_autonomy",
            OperatorCommand::AllocateJob { .. } => "allocate_job",
            OperatorCommand::ExecuteBehavior { .. } => "execute_behavior",
            OperatorCommand::Teleop { .. } => "teleop",
            OperatorCommand::ReleaseTeleop => "release_teleop",
            OperatorCommand::Pause => "pause",
            OperatorCommand::Resume => "resume",
        }
    }
}

/// A command applied at a given step; a list of these replays an
/// operator session headlessly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedCommand {
    pub step: u64,
    pub command: OperatorCommand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "notification", rename_all = "snake_case")]
pub enum Notification {
    /// A person or container was found and a teleop edge offered.
    TeleopAvailable {
        edge: EdgeId,
        node: NodeId,
        object: ObjectId,
        label: ObjectLabel,
    },
    /// A teleop behavior started: the operator has control.
    TeleopRequested {
        edge: EdgeId,
        object: ObjectId,
    },
    CommandRejected {
        command: String,
        reason: String,
    },
    /// An operator job cannot be reached.
    NoPath {
        node: NodeId,
    },
    BehaviorRejected {
        edge: EdgeId,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionOutcome {
    MissionComplete,
    StepLimit,
    Paused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSummary {
    pub steps: u64,
    pub coverage_fraction: f64,
    pub frontiers_remaining: usize,
    pub outcome: MissionOutcome,
    pub revision: u64,
    pub nodes: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    /// One sensing cycle.
    Perception {
        pose: Pose2,
        gridmap: GridMap,
        detections: Vec<ObjectId>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        door_changes: Vec<(ObjectId, DoorState)>,
    },
    GraphDelta {
        delta: GraphDelta,
    },
    Plan {
        source: PlanSource,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        job: Option<Job>,
        plan: Plan,
    },
    Decision {
        level: AutonomyLevel,
        decision: Decision,
    },
    BehaviorOutcome {
        behavior: BehaviorKind,
        edge: EdgeId,
        status: OutcomeStatus,
        steps_taken: u64,
        detail: String,
    },
    Command {
        command: OperatorCommand,
        accepted: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    AutonomyChanged {
        from: AutonomyLevel,
        to: AutonomyLevel,
        reason: String,
    },
    Notification(Notification),
    MissionComplete(MissionSummary),
}

impl EventBody {
    pub fn outcome(behavior: BehaviorKind, o: BehaviorOutcome) -> Self {
        EventBody::BehaviorOutcome {
            behavior,
            edge: o.edge,
            status: o.status,
            steps_taken: o.steps_taken,
            detail: o.detail,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::Perception { .. } => "perception",
            EventBody::GraphDelta { .. } => "graph_delta",
            EventBody::Plan { .. } => "plan",
            EventBody::Decision { .. } => "decision",
            EventBody::BehaviorOutcome { .. } => "behavior_outcome",
            EventBody::Command { .. } => "command",
            EventBody::AutonomyChanged { .. } => "autonomy_changed",
            EventBody::Notification(_) => "notification",
            EventBody::MissionComplete(_) => "mission_complete",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionEvent {
    pub seq: u64,
    pub step: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

/// First line of every log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "header")]
pub struct LogHeader {
    pub config_digest: String,
    pub scenario_name: String,
    pub seed: u64,
    pub autonomy: AutonomyLevel,
}
