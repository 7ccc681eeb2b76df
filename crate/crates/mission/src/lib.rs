//! Mission server for the situational-graph system: the mission loop,
//! operator commands, the JSON Lines event log, replay, the log auditor
//! and the WebSocket wire protocol.

pub mod audit;
pub mod config;
pub mod events;
pub mod log;
pub mod mission;
pub mod replay;
pub mod run;
pub mod server;
pub mod wire;

pub use config::MissionConfig;
pub use events::{MissionEvent, OperatorCommand};
pub use mission::Mission;
pub use run::{run_mission, MissionRun};
