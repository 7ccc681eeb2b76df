//! WebSocket mission server. One hub task owns the mission and ticks it
//! at a fixed period; connection tasks forward client frames to the hub
//! and hub messages to their socket.

use std::collections::BTreeMap;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver, UnboundedSender};
use tokio_tungstenite::tungstenite::Message;

use sitgraph_core::geometry::Pose2;
use sitgraph_core::graph::SituationalGraph;
use sitgraph_core::planner::{AutonomyLevel, Plan};
use sitgraph_core::recording::GlobalView;
use sitgraph_core::world::RobotState;

use crate::events::{EventBody, LogHeader, MissionEvent, MissionOutcome};
use crate::log::{LogError, LogWriter};
use crate::mission::Mission;
use crate::replay::by_step;
use crate::wire::{event_body, parse_command, ServerBody, ServerMessage};

/// Wall-clock period of one mission step at speed 1.
pub const STEP_PERIOD: Duration = Duration::from_millis(100);

type ClientId = u64;

enum Inbound {
    Join {
        id: ClientId,
        tx: UnboundedSender<String>,
    },
    Leave {
        id: ClientId,
    },
    Frame {
        id: ClientId,
        text: String,
    },
}

/// Plays a recorded log back, one step per tick.
pub struct ReplayEngine {
    batches: Vec<(u64, Vec<MissionEvent>)>,
    next: usize,
    step: u64,
    graph: SituationalGraph,
    view: GlobalView,
    robot: RobotState,
    level: AutonomyLevel,
    plan: Option<Plan>,
}

impl ReplayEngine {
    /// The view resolution is taken from the first logged grid.
    pub fn new(header: &LogHeader, events: &[MissionEvent]) -> Self {
        let resolution = events
            .iter()
            .find_map(|e| match &e.body {
                EventBody::Perception { gridmap, .. } => Some(gridmap.resolution()),
                _ => None,
            })
            .unwrap_or(0.5);
        Self {
            batches: by_step(events),
            next: 0,
            step: 0,
            graph: SituationalGraph::new(),
            view: GlobalView::new(resolution),
            robot: RobotState::at(Pose2::new(0.0, 0.0, 0.0)),
            level: header.autonomy,
            plan: None,
        }
    }

    fn advance(&mut self) -> Vec<MissionEvent> {
        if self.next >= self.batches.len() {
            return Vec::new();
        }
        self.step += 1;
        let mut out = Vec::new();
        while let Some((step, batch)) = self.batches.get(self.next) {
            if *step > self.step {
                break;
            }
            for e in batch {
                match &e.body {
                    EventBody::GraphDelta { delta } => {
                        // a log that does not apply is still replayed verbatim
                        if let Err(err) = self.graph.apply_delta(delta) {
                            tracing::warn!(seq = e.seq, %err, "delta does not apply");
                        }
                    }
                    EventBody::Perception { pose, gridmap, .. } => {
                        self.robot.pose = *pose;
                        self.view.merge(gridmap);
                    }
                    EventBody::AutonomyChanged { to, .. } => self.level = *to,
                    EventBody::Plan { plan, .. } => self.plan = Some(plan.clone()),
                    _ => {}
                }
            }
            out.extend(batch.iter().cloned());
            self.next += 1;
        }
        out
    }

    pub fn is_finished(&self) -> bool {
        self.next >= self.batches.len()
    }
}

/// What the hub drives.
pub enum Engine {
    Live {
        mission: Box<Mission>,
        log: Option<LogWriter>,
        finished: bool,
    },
    Replay(Box<ReplayEngine>),
}

impl Engine {
    pub fn live(mission: Mission, log: Option<LogWriter>) -> Self {
        Engine::Live {
            mission: Box::new(mission),
            log,
            finished: false,
        }
    }

    fn step(&self) -> u64 {
        match self {
            Engine::Live { mission, .. } => mission.step_count(),
            Engine::Replay(r) => r.step,
        }
    }

    fn snapshot(&self) -> ServerBody {
        match self {
            Engine::Live { mission, .. } => ServerBody::Snapshot {
                graph: mission.graph().snapshot(),
                robot: mission.robot(),
                level: mission.level(),
                view: mission.recorder().view().grid().clone(),
                plan: mission.planner().active_plan.clone(),
            },
            Engine::Replay(r) => ServerBody::Snapshot {
                graph: r.graph.snapshot(),
                robot: r.robot,
                level: r.level,
                view: r.view.grid().clone(),
                plan: r.plan.clone(),
            },
        }
    }

    fn robot(&self) -> RobotState {
        match self {
            Engine::Live { mission, .. } => mission.robot(),
            Engine::Replay(r) => r.robot,
        }
    }
}

struct Hub {
    engine: Engine,
    clients: BTreeMap<ClientId, UnboundedSender<String>>,
    seq: u64,
    pending: Vec<(ClientId, String)>,
}

impl Hub {
    fn message(&mut self, body: ServerBody) -> String {
        self.seq += 1;
        ServerMessage {
            seq: self.seq,
            step: self.engine.step(),
            body,
        }
        .to_json()
    }

    fn send_to(&mut self, id: ClientId, body: ServerBody) {
        let text = self.message(body);
        if let Some(tx) = self.clients.get(&id) {
            let _ = tx.send(text);
        }
    }

    fn broadcast(&mut self, body: ServerBody) {
        let text = self.message(body);
        self.clients.retain(|_, tx| tx.send(text.clone()).is_ok());
    }

    fn inbound(&mut self, msg: Inbound) {
        match msg {
            Inbound::Join { id, tx } => {
                tracing::info!(client = id, "client joined");
                self.clients.insert(id, tx);
                let snapshot = self.engine.snapshot();
                self.send_to(id, snapshot);
            }
            Inbound::Leave { id } => {
                tracing::info!(client = id, "client left");
                self.clients.remove(&id);
            }
            Inbound::Frame { id, text } => self.pending.push((id, text)),
        }
    }

    fn tick(&mut self) -> Result<(), LogError> {
        let pending = std::mem::take(&mut self.pending);
        let mut commands = Vec::new();
        let mut senders = Vec::new();
        for (id, text) in pending {
            match parse_command(&text) {
                Ok(cmd) => {
                    commands.push(cmd);
                    senders.push(id);
                }
                Err(reason) => self.send_to(id, ServerBody::Error { reason }),
            }
        }
        let events = match &mut self.engine {
            Engine::Live {
                mission,
                log,
                finished,
            } => {
                if *finished {
                    for id in senders {
                        self.send_to(
                            id,
                            ServerBody::Error {
                                reason: "mission is over".into(),
                            },
                        );
                    }
                    return Ok(());
                }
                let mut events = mission.tick(&commands);
                if mission.is_complete() || mission.step_count() >= mission.config().step_limit {
                    let outcome = if mission.is_complete() {
                        MissionOutcome::MissionComplete
                    } else {
                        MissionOutcome::StepLimit
                    };
                    let summary = mission.summary(outcome);
                    events.push(mission.finish(EventBody::MissionComplete(summary)));
                    *finished = true;
                }
                if let Some(w) = log.as_mut() {
                    w.append(&events)?;
                    w.flush()?;
                }
                events
            }
            Engine::Replay(r) => {
                let events = r.advance();
                for id in std::mem::take(&mut senders) {
                    self.send_to(
                        id,
                        ServerBody::Error {
                            reason: "replay is read-only".into(),
                        },
                    );
                }
                events
            }
        };
        // command events appear in the order the commands were applied
        let mut from = senders.into_iter();
        for e in &events {
            if let EventBody::Command { accepted, reason, .. } = &e.body {
                let id = from.next();
                if let (false, Some(id)) = (*accepted, id) {
                    let reason = reason.clone().unwrap_or_default();
                    self.send_to(id, ServerBody::Error { reason });
                }
            }
        }
        let ticked = !events.is_empty();
        for e in &events {
            if let Some(body) = event_body(e) {
                self.broadcast(body);
            }
        }
        if ticked {
            let robot = self.engine.robot();
            self.broadcast(ServerBody::RobotState { robot });
        }
        Ok(())
    }
}

async fn connection(stream: TcpStream, id: ClientId, hub: UnboundedSender<Inbound>) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(err) => {
            tracing::warn!(client = id, %err, "handshake failed");
            return;
        }
    };
    let (mut sink, mut source) = ws.split();
    let (tx, mut rx) = unbounded_channel::<String>();
    if hub.send(Inbound::Join { id, tx }).is_err() {
        return;
    }
    let writer = tokio::spawn(async move {
        while let Some(text) = rx.recv().await {
            if sink.send(Message::text(text)).await.is_err() {
                break;
            }
        }
    });
    while let Some(frame) = source.next().await {
        match frame {
            Ok(Message::Text(text)) => {
                let _ = hub.send(Inbound::Frame {
                    id,
                    text: text.to_string(),
                });
            }
            Ok(Message::Binary(_)) => {
                let _ = hub.send(Inbound::Frame {
                    id,
                    text: String::new(),
                });
            }
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => {}
        }
    }
    let _ = hub.send(Inbound::Leave { id });
    writer.abort();
}

async fn accept_loop(listener: TcpListener, hub: UnboundedSender<Inbound>) {
    let mut next_id: ClientId = 0;
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                next_id += 1;
                tracing::debug!(client = next_id, %peer, "connection");
                tokio::spawn(connection(stream, next_id, hub.clone()));
            }
            Err(err) => tracing::warn!(%err, "accept failed"),
        }
    }
}

async fn hub_loop(
    mut hub: Hub,
    mut rx: UnboundedReceiver<Inbound>,
    period: Duration,
) -> Result<(), LogError> {
    let mut interval = tokio::time::interval(period);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            msg = rx.recv() => match msg {
                Some(m) => hub.inbound(m),
                None => return Ok(()),
            },
            _ = interval.tick() => hub.tick()?,
        }
    }
}

/// Serves `engine` on `listener`, ticking once per `period`. Runs until
/// the log cannot be written.
pub async fn serve(listener: TcpListener, engine: Engine, period: Duration) -> Result<(), LogError> {
    let (tx, rx) = unbounded_channel();
    let hub = Hub {
        engine,
        clients: BTreeMap::new(),
        seq: 0,
        pending: Vec::new(),
    };
    let acceptor = tokio::spawn(accept_loop(listener, tx));
    let result = hub_loop(hub, rx, period).await;
    acceptor.abort();
    result
}
