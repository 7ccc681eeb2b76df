//! Log auditor: checks mission invariants from the event log alone.

use std::collections::BTreeMap;

use sitgraph_core::geometry::Pose2;
use sitgraph_core::graph::{BehaviorKind, EdgeId, GraphChange, NodeId, NodeKind, NodeOrigin};
use sitgraph_core::planner::{AutonomyLevel, Decision, PlanSource};
use sitgraph_core::recording::GlobalView;

use crate::events::{EventBody, LogHeader, MissionEvent, OperatorCommand};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditReport {
    pub gating: Vec<String>,
    pub spacing: Vec<String>,
    pub frontiers: Vec<String>,
    pub interleaving: Vec<String>,
    pub plans: Vec<String>,
    pub revisions: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.all().next().is_none()
    }

    pub fn all(&self) -> impl Iterator<Item = &String> {
        self.gating
            .iter()
            .chain(&self.spacing)
            .chain(&self.frontiers)
            .chain(&self.interleaving)
            .chain(&self.plans)
            .chain(&self.revisions)
    }
}

/// Parameters the auditor needs from the mission config.
#[derive(Debug, Clone, Copy)]
pub struct AuditParams {
    pub resolution: f64,
    pub node_spacing: f64,
    pub prune_radius: f64,
}

impl Default for AuditParams {
    fn default() -> Self {
        Self {
            resolution: 0.5,
            node_spacing: 2.0,
            prune_radius: 0.5,
        }
    }
}

fn steps(events: &[MissionEvent]) -> Vec<&[MissionEvent]> {
    events.chunk_by(|a, b| a.step == b.step).collect()
}

/// Autonomy gating: no plan at L3/L4, job selection only at L1, operator
/// commands only at their level, and no motion at L4 except by teleop.
pub fn audit_gating(header: &LogHeader, events: &[MissionEvent]) -> Vec<String> {
    let mut out = Vec::new();
    let mut level = header.autonomy;
    let mut last_pose: Option<(u64, Pose2, AutonomyLevel, bool)> = None;
    for batch in steps(events) {
        let step = batch[0].step;
        let mut teleop_this_step = false;
        let mut pose = None;
        for e in batch {
            match &e.body {
                EventBody::AutonomyChanged { to, .. } => level = *to,
                EventBody::Plan { source, .. } => {
                    if matches!(level, AutonomyLevel::L3 | AutonomyLevel::L4) {
                        out.push(format!("seq {}: plan at {level}", e.seq));
                    }
                    if *source == PlanSource::JobSelection && level != AutonomyLevel::L1 {
                        out.push(format!("seq {}: job selection at {level}", e.seq));
                    }
                }
                EventBody::Decision { decision, .. } => {
                    if matches!(level, AutonomyLevel::L3 | AutonomyLevel::L4) && *decision != Decision::Idle {
                        out.push(format!("seq {}: planner decision at {level}", e.seq));
                    }
                }
                EventBody::Command {
                    command,
                    accepted: true,
                    ..
                } => {
                    let required = match command {
                        OperatorCommand::Teleop { .. } => Some(AutonomyLevel::L4),
                        OperatorCommand::AllocateJob { .. } => Some(AutonomyLevel::L2),
                        OperatorCommand::ExecuteBehavior { .. } => Some(AutonomyLevel::L3),
                        _ => None,
                    };
                    if let Some(r) = required {
                        if level != r {
                            out.push(format!("seq {}: {} accepted at {level}", e.seq, command.name()));
                        }
                    }
                    if matches!(command, OperatorCommand::Teleop { .. }) {
                        teleop_this_step = true;
                    }
                }
                EventBody::Perception { pose: p, .. } => pose = Some(*p),
                _ => {}
            }
        }
        // motion happens at the end of a step, so it shows in the next step's pose
        if let (Some((prev_step, prev_pose, prev_level, prev_teleop)), Some(p)) = (last_pose, pose) {
            if prev_level == AutonomyLevel::L4 && !prev_teleop && p != prev_pose {
                out.push(format!(
                    "step {prev_step}: robot moved at L4 without a teleop command"
                ));
            }
        }
        if let Some(p) = pose {
            last_pose = Some((step, p, level, teleop_this_step));
        } else if let Some(lp) = last_pose.as_mut() {
            // paused step: no motion either
            lp.2 = level;
            lp.3 = lp.3 || teleop_this_step;
        }
    }
    out
}

/// Observer-placed waypoints (start and spacing nodes) are at least
/// `node_spacing` apart, both from the previous such node and from every
/// waypoint present when they were placed.
pub fn audit_spacing(events: &[MissionEvent], params: &AuditParams) -> Vec<String> {
    let mut out = Vec::new();
    let mut poses: BTreeMap<NodeId, Pose2> = BTreeMap::new();
    let mut waypoints: BTreeMap<NodeId, Pose2> = BTreeMap::new();
    let mut last_observed: Option<(NodeId, Pose2)> = None;
    for e in events {
        let EventBody::GraphDelta { delta } = &e.body else {
            continue;
        };
        match &delta.change {
            GraphChange::NodeAdded { node, .. } => {
                if node.kind == NodeKind::Waypoint && node.origin == NodeOrigin::Spacing {
                    if let Some((prev, p)) = last_observed {
                        let d = p.distance(&node.pose);
                        if d < params.node_spacing {
                            out.push(format!("{} is {d:.3} m from {prev}", node.id));
                        }
                    }
                    for (id, p) in &waypoints {
                        let d = p.distance(&node.pose);
                        if d <= params.node_spacing {
                            out.push(format!("{} placed {d:.3} m from waypoint {id}", node.id));
                        }
                    }
                }
                if matches!(node.origin, NodeOrigin::Start | NodeOrigin::Spacing) {
                    last_observed = Some((node.id, node.pose));
                }
                poses.insert(node.id, node.pose);
                if node.kind == NodeKind::Waypoint {
                    waypoints.insert(node.id, node.pose);
                }
            }
            // a reached frontier is a waypoint from then on
            GraphChange::NodeVisited { node } => {
                if let Some(p) = poses.get(node) {
                    waypoints.insert(*node, *p);
                }
            }
            GraphChange::NodeRemoved { node } => {
                waypoints.remove(node);
            }
            _ => {}
        }
    }
    out
}

/// After every step, every frontier has an unknown cell within
/// `prune_radius` in the view fused from the logged local grids.
pub fn audit_frontiers(events: &[MissionEvent], params: &AuditParams) -> Vec<String> {
    let mut out = Vec::new();
    let mut view = GlobalView::new(params.resolution);
    let mut frontiers: BTreeMap<NodeId, Pose2> = BTreeMap::new();
    for batch in steps(events) {
        for e in batch {
            match &e.body {
                EventBody::Perception { gridmap, .. } => {
                    view.merge(gridmap);
                }
                EventBody::GraphDelta { delta } => match &delta.change {
                    GraphChange::NodeAdded { node, .. } if node.kind == NodeKind::Frontier => {
                        frontiers.insert(node.id, node.pose);
                    }
                    GraphChange::NodeRemoved { node } | GraphChange::NodeVisited { node } => {
                        frontiers.remove(node);
                    }
                    _ => {}
                },
                _ => {}
            }
        }
        for (id, p) in &frontiers {
            if !view.unknown_within(p.x, p.y, params.prune_radius) {
                out.push(format!(
                    "step {}: frontier {id} has no unknown cell nearby",
                    batch[0].step
                ));
            }
        }
    }
    out
}

/// A full recording cycle (a perception event) separates every behavior
/// outcome from the next behavior start.
pub fn audit_interleaving(events: &[MissionEvent]) -> Vec<String> {
    let mut out = Vec::new();
    let mut waiting_since: Option<u64> = None;
    for e in events {
        match &e.body {
            EventBody::BehaviorOutcome { .. } => waiting_since = Some(e.seq),
            EventBody::Perception { .. } => waiting_since = None,
            EventBody::Decision {
                decision: Decision::ExecuteEdge(edge),
                ..
            } => {
                if let Some(s) = waiting_since {
                    out.push(format!(
                        "seq {}: {edge} started right after outcome seq {s}",
                        e.seq
                    ));
                }
            }
            _ => {}
        }
    }
    out
}

/// Plans chain correctly over edges that exist when the plan is logged,
/// and never contain teleop requests.
pub fn audit_plans(events: &[MissionEvent]) -> Vec<String> {
    let mut out = Vec::new();
    let mut edges: BTreeMap<EdgeId, (NodeId, NodeId, BehaviorKind)> = BTreeMap::new();
    for e in events {
        match &e.body {
            EventBody::GraphDelta { delta } => match &delta.change {
                GraphChange::EdgeAdded { edge } => {
                    edges.insert(edge.id, (edge.source, edge.target, edge.behavior));
                }
                GraphChange::EdgeRemoved { edge } => {
                    edges.remove(edge);
                }
                _ => {}
            },
            EventBody::Plan { plan, .. } => {
                let mut at = plan.start;
                for id in &plan.edges {
                    match edges.get(id) {
                        None => out.push(format!("seq {}: plan uses missing edge {id}", e.seq)),
                        Some(&(s, t, kind)) => {
                            if s != at {
                                out.push(format!("seq {}: plan edge {id} does not chain", e.seq));
                            }
                            if kind == BehaviorKind::RequestTeleop {
                                out.push(format!("seq {}: plan contains teleop edge {id}", e.seq));
                            }
                            at = t;
                        }
                    }
                }
                if at != plan.goal {
                    out.push(format!("seq {}: plan ends at {at}, not {}", e.seq, plan.goal));
                }
            }
            _ => {}
        }
    }
    out
}

/// Graph deltas carry consecutive revisions starting at 1.
pub fn audit_revisions(events: &[MissionEvent]) -> Vec<String> {
    let mut out = Vec::new();
    let mut expected = 1;
    for e in events {
        if let EventBody::GraphDelta { delta } = &e.body {
            if delta.revision != expected {
                out.push(format!(
                    "seq {}: revision {} where {expected} was due",
                    e.seq, delta.revision
                ));
            }
            expected = delta.revision + 1;
        }
    }
    out
}

pub fn audit(header: &LogHeader, events: &[MissionEvent], params: &AuditParams) -> AuditReport {
    AuditReport {
        gating: audit_gating(header, events),
        spacing: audit_spacing(events, params),
        frontiers: audit_frontiers(events, params),
        interleaving: audit_interleaving(events),
        plans: audit_plans(events),
        revisions: audit_revisions(events),
    }
}
