//! Log replay: re-emits logged events and rebuilds the graph from deltas.

use sitgraph_core::graph::{GraphError, SituationalGraph};

use crate::events::{EventBody, MissionEvent};

/// Applies every `graph_delta` event in order.
pub fn rebuild_graph(events: &[MissionEvent]) -> Result<SituationalGraph, GraphError> {
    let mut g = SituationalGraph::new();
    for e in events {
        if let EventBody::GraphDelta { delta } = &e.body {
            g.apply_delta(delta)?;
        }
    }
    Ok(g)
}

/// Events grouped by step, in seq order, for paced playback.
pub fn by_step(events: &[MissionEvent]) -> Vec<(u64, Vec<MissionEvent>)> {
    let mut out: Vec<(u64, Vec<MissionEvent>)> = Vec::new();
    for e in events {
        match out.last_mut() {
            Some((step, batch)) if *step == e.step => batch.push(e.clone()),
            _ => out.push((e.step, vec![e.clone()])),
        }
    }
    out
}
