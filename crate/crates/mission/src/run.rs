//! Headless mission runs.

use thiserror::Error;

use crate::config::{ConfigError, MissionConfig};
use crate::events::{EventBody, LogHeader, MissionEvent, MissionOutcome, MissionSummary, ScriptedCommand};
use crate::log::{LogError, LogWriter};
use crate::mission::Mission;

#[derive(Debug, Error)]
pub enum MissionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Debug, Clone)]
pub struct MissionRun {
    pub header: LogHeader,
    pub summary: MissionSummary,
    pub events: Vec<MissionEvent>,
}

/// Runs a mission as fast as possible until it completes, stays paused
/// with no scripted command left, or hits the step limit. Commands in
/// `script` are applied at the start of their step. The log is written to
/// `config.log` when set.
pub fn run_mission(config: &MissionConfig, script: &[ScriptedCommand]) -> Result<MissionRun, MissionError> {
    let mut mission = Mission::new(config.clone())?;
    let header = mission.header();
    let mut writer = match &config.log {
        Some(path) => Some(LogWriter::create(path, &header)?),
        None => None,
    };
    let last_scripted = script.iter().map(|c| c.step).max().unwrap_or(0);
    let mut events = Vec::new();
    let mut outcome = MissionOutcome::StepLimit;
    while mission.step_count() < config.step_limit {
        let step = mission.step_count() + 1;
        let commands: Vec<_> = script
            .iter()
            .filter(|c| c.step == step)
            .map(|c| c.command)
            .collect();
        let batch = mission.tick(&commands);
        if let Some(w) = writer.as_mut() {
            w.append(&batch)?;
        }
        events.extend(batch);
        if mission.is_complete() {
            outcome = MissionOutcome::MissionComplete;
            break;
        }
        if mission.is_paused() && step >= last_scripted {
            outcome = MissionOutcome::Paused;
            break;
        }
    }
    let summary = mission.summary(outcome);
    let end = mission.finish(EventBody::MissionComplete(summary.clone()));
    if let Some(w) = writer.as_mut() {
        w.append(std::slice::from_ref(&end))?;
        w.flush()?;
    }
    events.push(end);
    Ok(MissionRun {
        header,
        summary,
        events,
    })
}
