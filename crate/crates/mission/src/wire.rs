//! WebSocket message schema. Clients send [`OperatorCommand`] JSON; the
//! server sends [`ServerMessage`]s.

use serde::{Deserialize, Serialize};

use sitgraph_core::graph::{GraphDelta, GraphSnapshot};
use sitgraph_core::grid::GridMap;
use sitgraph_core::planner::{AutonomyLevel, Plan};
use sitgraph_core::world::RobotState;

use crate::events::{EventBody, MissionEvent, OperatorCommand};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMessage {
    pub seq: u64,
    pub step: u64,
    #[serde(flatten)]
    pub body: ServerBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerBody {
    /// First message on every connection.
    Snapshot {
        graph: GraphSnapshot,
        robot: RobotState,
        level: AutonomyLevel,
        /// Fused occupancy so far, for the background layer.
        view: GridMap,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plan: Option<Plan>,
    },
    GraphDelta {
        delta: GraphDelta,
    },
    RobotState {
        robot: RobotState,
    },
    Event {
        event: MissionEvent,
    },
    Plan {
        plan: Plan,
    },
    Error {
        reason: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server message serializes")
    }
}

/// Parses one client frame.
pub fn parse_command(text: &str) -> Result<OperatorCommand, String> {
    serde_json::from_str(text).map_err(|e| format!("malformed command: {e}"))
}

/// Maps a mission event onto its wire message. Perception events are not
/// forwarded: robot state goes out every tick and local grids travel
/// inside graph deltas.
pub fn event_body(event: &MissionEvent) -> Option<ServerBody> {
    match &event.body {
        EventBody::Perception { .. } => None,
        EventBody::GraphDelta { delta } => Some(ServerBody::GraphDelta { delta: delta.clone() }),
        EventBody::Plan { plan, .. } => Some(ServerBody::Plan { plan: plan.clone() }),
        _ => Some(ServerBody::Event { event: event.clone() }),
    }
}
