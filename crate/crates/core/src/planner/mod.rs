//! Path planning, job selection and the autonomy gate.
//!
//! Plans are shortest paths over the behavior graph (Dijkstra), with
//! `request_teleop` edges excluded. Among equal-cost paths the one with the
//! lexicographically smallest edge-id sequence wins.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BehaviorKind, EdgeId, GraphChange, GraphDelta, GraphSnapshot, NodeId, NodeKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub start: NodeId,
    pub goal: NodeId,
    pub edges: Vec<EdgeId>,
    pub total_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub target: NodeId,
    pub reward: f64,
    pub cost: f64,
    pub net: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum AutonomyLevel {
    /// Job selection and planning.
    L1,
    /// Operator picks jobs, planner plans.
    L2,
    /// Operator picks behaviors.
    L3,
    /// Operator drives.
    L4,
}

impl AutonomyLevel {
    pub fn number(self) -> u8 {
        match self {
            AutonomyLevel::L1 => 1,
            AutonomyLevel::L2 => 2,
            AutonomyLevel::L3 => 3,
            AutonomyLevel::L4 => 4,
        }
    }
}

impl TryFrom<u8> for AutonomyLevel {
    type Error = String;

    fn try_from(n: u8) -> Result<Self, Self::Error> {
        match n {
            1 => Ok(AutonomyLevel::L1),
            2 => Ok(AutonomyLevel::L2),
            3 => Ok(AutonomyLevel::L3),
            4 => Ok(AutonomyLevel::L4),
            other => Err(format!("autonomy level must be 1-4, got {other}")),
        }
    }
}

impl From<AutonomyLevel> for u8 {
    fn from(l: AutonomyLevel) -> u8 {
        l.number()
    }
}

impl fmt::Display for AutonomyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.number())
    }
}

/// Rewards for job selection: a flat reward for every frontier, plus an
/// optional per-node adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardModel {
    pub frontier_reward: f64,
    pub node_bonus: BTreeMap<NodeId, f64>,
}

impl Default for RewardModel {
    fn default() -> Self {
        Self {
            frontier_reward: 50.0,
            node_bonus: BTreeMap::new(),
        }
    }
}

impl RewardModel {
    pub fn reward(&self, node: NodeId) -> f64 {
        self.frontier_reward + self.node_bonus.get(&node).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no path from {from} to {to}")]
    NoPath { from: NodeId, to: NodeId },
}

struct Label {
    cost: f64,
    edges: Vec<EdgeId>,
    node: NodeId,
}

impl Label {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.edges.cmp(&other.edges))
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal && self.node == other.node
    }
}

impl Eq for Label {}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self).then_with(|| other.node.cmp(&self.node))
    }
}

/// Best (cost, edge sequence) from `from` to every reachable node.
pub fn shortest_paths(
    snapshot: &GraphSnapshot,
    from: NodeId,
) -> Result<BTreeMap<NodeId, (f64, Vec<EdgeId>)>, PlanError> {
    if snapshot.node(from).is_none() {
        return Err(PlanError::UnknownNode(from));
    }
    let adjacency = snapshot.adjacency();
    let mut done: BTreeMap<NodeId, (f64, Vec<EdgeId>)> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    heap.push(Label {
        cost: 0.0,
        edges: Vec::new(),
        node: from,
    });
    while let Some(label) = heap.pop() {
        if done.contains_key(&label.node) {
            continue;
        }
        for e in adjacency.get(&label.node).into_iter().flatten() {
            if e.behavior == BehaviorKind::RequestTeleop || done.contains_key(&e.target) {
                continue;
            }
            let mut edges = label.edges.clone();
            edges.push(e.id);
            heap.push(Label {
                cost: label.cost + e.cost,
                edges,
                node: e.target,
            });
        }
        done.insert(label.node, (label.cost, label.edges));
    }
    Ok(done)
}

/// Minimum-cost plan from `from` to `to`.
pub fn plan_path(snapshot: &GraphSnapshot, from: NodeId, to: NodeId) -> Result<Plan, PlanError> {
    if snapshot.node(to).is_none() {
        return Err(PlanError::UnknownNode(to));
    }
    let mut paths = shortest_paths(snapshot, from)?;
    let (total_cost, edges) = paths.remove(&to).ok_or(PlanError::NoPath { from, to })?;
    Ok(Plan {
        start: from,
        goal: to,
        edges,
        total_cost,
    })
}

/// The reachable frontier maximizing reward minus plan cost, with the plan
/// to reach it. `None` when no reachable frontier has a positive net value.
pub fn select_job_with_plan(
    snapshot: &GraphSnapshot,
    current: NodeId,
    rewards: &RewardModel,
) -> Result<Option<(Job, Plan)>, PlanError> {
    let paths = shortest_paths(snapshot, current)?;
    let mut best: Option<(Job, &Vec<EdgeId>)> = None;
    for node in snapshot.frontiers() {
        let Some((cost, edges)) = paths.get(&node.id) else {
            continue;
        };
        let reward = rewards.reward(node.id);
        let net = reward - cost;
        // frontiers come in id order, so strict comparison keeps the lowest id
        if best.as_ref().is_none_or(|(b, _)| net > b.net) {
            best = Some((
                Job {
                    target: node.id,
                    reward,
                    cost: *cost,
                    net,
                },
                edges,
            ));
        }
    }
    Ok(best.filter(|(j, _)| j.net > 0.0).map(|(job, edges)| {
        let plan = Plan {
            start: current,
            goal: job.target,
            edges: edges.clone(),
            total_cost: job.cost,
        };
        (job, plan)
    }))
}

pub fn select_job(
    snapshot: &GraphSnapshot,
    current: NodeId,
    rewards: &RewardModel,
) -> Result<Option<Job>, PlanError> {
    Ok(select_job_with_plan(snapshot, current, rewards)?.map(|(j, _)| j))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "edge", rename_all = "snake_case")]
pub enum Decision {
    ExecuteEdge(EdgeId),
    Idle,
    MissionComplete,
}

/// Where a plan came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSource {
    JobSelection,
    OperatorJob,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlannerState {
    pub level: Option<AutonomyLevel>,
    pub current: Option<NodeId>,
    pub active_plan: Option<Plan>,
    /// Index of the next plan edge to dispatch.
    pub cursor: usize,
    pub operator_job: Option<NodeId>,
}

impl PlannerState {
    pub fn new(level: AutonomyLevel) -> Self {
        Self {
            level: Some(level),
            ..Self::default()
        }
    }

    pub fn level(&self) -> AutonomyLevel {
        self.level.unwrap_or(AutonomyLevel::L1)
    }

    pub fn drop_plan(&mut self) {
        self.active_plan = None;
        self.cursor = 0;
    }

    fn adopt(&mut self, plan: Plan) {
        self.active_plan = Some(plan);
        self.cursor = 0;
    }
}

/// What a tick produced besides the decision, for logging.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TickReport {
    pub job: Option<Job>,
    pub new_plan: Option<(PlanSource, Plan)>,
    /// An operator job that cannot be reached.
    pub no_path: Option<NodeId>,
}

/// One planning step. Dispatches the next edge of the active plan, or
/// computes a new plan according to the autonomy level.
pub fn planner_tick(
    snapshot: &GraphSnapshot,
    state: &mut PlannerState,
    rewards: &RewardModel,
) -> (Decision, TickReport) {
    let mut report = TickReport::default();
    let level = state.level();
    if matches!(level, AutonomyLevel::L3 | AutonomyLevel::L4) {
        return (Decision::Idle, report);
    }
    if let Some(plan) = &state.active_plan {
        if plan.edges.iter().any(|e| !snapshot.contains_edge(*e)) {
            state.drop_plan();
        }
    }
    if let Some(plan) = &state.active_plan {
        if let Some(&e) = plan.edges.get(state.cursor) {
            state.cursor += 1;
            return (Decision::ExecuteEdge(e), report);
        }
        if level == AutonomyLevel::L2 && state.operator_job == Some(plan.goal) {
            state.operator_job = None;
        }
        state.drop_plan();
    }
    let Some(current) = state.current.filter(|c| snapshot.node(*c).is_some()) else {
        return (Decision::Idle, report);
    };
    let planned = match level {
        AutonomyLevel::L1 => match select_job_with_plan(snapshot, current, rewards) {
            Ok(Some((job, plan))) => {
                report.job = Some(job);
                Some((PlanSource::JobSelection, plan))
            }
            Ok(None) => return (Decision::MissionComplete, report),
            Err(_) => None,
        },
        _ => {
            let Some(target) = state.operator_job else {
                return (Decision::Idle, report);
            };
            match plan_path(snapshot, current, target) {
                Ok(plan) => Some((PlanSource::OperatorJob, plan)),
                Err(_) => {
                    state.operator_job = None;
                    report.no_path = Some(target);
                    None
                }
            }
        }
    };
    let Some((source, plan)) = planned else {
        return (Decision::Idle, report);
    };
    if plan.edges.is_empty() {
        if source == PlanSource::OperatorJob {
            state.operator_job = None;
        }
        return (Decision::Idle, report);
    }
    let first = plan.edges[0];
    state.adopt(plan.clone());
    state.cursor = 1;
    report.new_plan = Some((source, plan));
    (Decision::ExecuteEdge(first), report)
}

/// Drops the active plan when a delta removed one of its edges or nodes.
pub fn replan_on_delta(state: &mut PlannerState, deltas: &[GraphDelta]) {
    let Some(plan) = &state.active_plan else {
        return;
    };
    let stale = deltas.iter().any(|d| match &d.change {
        GraphChange::EdgeRemoved { edge } => plan.edges.contains(edge),
        GraphChange::NodeRemoved { node } => *node == plan.start || *node == plan.goal,
        _ => false,
    });
    if stale {
        state.drop_plan();
    }
}

/// Whether `node` is a frontier in `snapshot`.
pub fn is_frontier(snapshot: &GraphSnapshot, node: NodeId) -> bool {
    snapshot.node(node).is_some_and(|n| n.kind == NodeKind::Frontier)
}
