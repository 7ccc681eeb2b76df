#![allow(dead_code)]

use sitgraph_core::graph::{EdgeId, NodeId, NodeKind};
use sitgraph_core::planner::AutonomyLevel;
use sitgraph_mission::events::{EventBody, Notification};
use sitgraph_mission::{Mission, MissionConfig, MissionEvent, OperatorCommand};

pub fn config(level: AutonomyLevel, seed: u64) -> MissionConfig {
    MissionConfig {
        autonomy: level,
        seed,
        ..MissionConfig::default()
    }
}

pub fn mission(level: AutonomyLevel) -> Mission {
    Mission::new(config(level, 42)).expect("mock lab loads")
}

/// Ticks until `done` holds or `max` steps pass. Returns whether `done` held.
pub fn tick_until(
    m: &mut Mission,
    log: &mut Vec<MissionEvent>,
    max: u64,
    mut done: impl FnMut(&Mission, &[MissionEvent]) -> bool,
) -> bool {
    for _ in 0..max {
        let batch = m.tick(&[]);
        let stop = done(m, &batch);
        log.extend(batch);
        if stop {
            return true;
        }
    }
    false
}

pub fn tick_with(m: &mut Mission, log: &mut Vec<MissionEvent>, cmd: OperatorCommand) -> Vec<MissionEvent> {
    let batch = m.tick(&[cmd]);
    log.extend(batch.iter().cloned());
    batch
}

/// The command event for the single command applied in `batch`.
pub fn command_result(batch: &[MissionEvent]) -> (bool, Option<String>) {
    batch
        .iter()
        .find_map(|e| match &e.body {
            EventBody::Command { accepted, reason, .. } => Some((*accepted, reason.clone())),
            _ => None,
        })
        .expect("command event")
}

pub fn rejected_with(batch: &[MissionEvent], why: &str) -> bool {
    let notified = batch.iter().any(|e| {
        matches!(&e.body, EventBody::Notification(Notification::CommandRejected { reason, .. }) if reason == why)
    });
    command_result(batch) == (false, Some(why.to_string())) && notified
}

pub fn frontiers(m: &Mission) -> Vec<NodeId> {
    m.graph()
        .nodes()
        .filter(|n| n.kind == NodeKind::Frontier)
        .map(|n| n.id)
        .collect()
}

pub fn goto_out_of(m: &Mission, node: NodeId) -> Option<EdgeId> {
    m.graph()
        .out_edges(node)
        .ok()?
        .into_iter()
        .find(|e| e.behavior == sitgraph_core::graph::BehaviorKind::GoTo)
        .map(|e| e.id)
}

pub fn outcome_for(batch: &[MissionEvent], edge: EdgeId) -> Option<sitgraph_core::executor::OutcomeStatus> {
    batch.iter().find_map(|e| match &e.body {
        EventBody::BehaviorOutcome { edge: e2, status, .. } if *e2 == edge => Some(*status),
        _ => None,
    })
}
