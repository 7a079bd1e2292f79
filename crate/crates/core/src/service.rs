//! Live zone-editing service.
//!
//! One event loop owns the registry and the simulated robot. Connection
//! handlers decode frames, forward edits to the loop in arrival order and
//! relay broadcast frames back to their client. Every accepted edit is
//! persisted before it is broadcast.
//!
//! Transports share one message schema:
//! - web socket text frames at `/ws` on the HTTP listener (`GET /healthz`
//!   answers `ok`);
//! - newline-delimited JSON on an optional plain TCP listener.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{Sink, SinkExt, Stream, StreamExt};
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::task::JoinHandle;

use crate::grid::{Point, Pose2D};
use crate::navsim::{step_robot, RobotMotion, Scenario};
use crate::planner::{path_length, plan, PlanConfig};
use crate::protocol::{
    apply_message, decode, encode, error_reply, Applied, MapState, RobotState, WireMessage,
};
use crate::registry::{StoreError, ZoneRegistry};

pub const DEFAULT_SPEED: f64 = 0.3;
pub const DEFAULT_TICK_HZ: f64 = 20.0;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("refusing to start: {0}")]
    Store(#[from] StoreError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub line_listen: Option<SocketAddr>,
    pub store: PathBuf,
    pub scenario: Scenario,
    /// Robot speed, m/s.
    pub speed: f64,
    pub tick_hz: f64,
    pub plan: PlanConfig,
}

impl ServiceConfig {
    pub fn new(listen: SocketAddr, store: PathBuf, scenario: Scenario) -> Self {
        Self {
            listen,
            line_listen: None,
            store,
            scenario,
            speed: DEFAULT_SPEED,
            tick_hz: DEFAULT_TICK_HZ,
            plan: PlanConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return Err(ServiceError::Config(format!("speed must be > 0, got {}", self.speed)));
        }
        if !(self.tick_hz.is_finite() && self.tick_hz > 0.0) {
            return Err(ServiceError::Config(format!("tick rate must be > 0, got {}", self.tick_hz)));
        }
        Ok(())
    }
}

/// Robot marker state as seen by clients.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotView {
    pub seq: u64,
    pub motion: RobotMotion,
    pub path: Vec<Point>,
    pub path_length: f64,
    pub status: String,
}

/// Map and robot frames for the current state. Pure: equal inputs give equal frames.
pub fn snapshot(reg: &ZoneRegistry, revision: u64, robot: &RobotView) -> [WireMessage; 2] {
    [
        WireMessage::Map(MapState::from_grid(reg.composite(), revision, reg.ids())),
        WireMessage::Robot(RobotState {
            seq: robot.seq,
            pose: robot.motion.pose,
            path: robot.path.iter().map(|&p| p.into()).collect(),
            path_length: robot.path_length,
            status: robot.status.clone(),
        }),
    ]
}

/// Everything the event loop owns.
#[derive(Debug)]
pub struct Session {
    registry: ZoneRegistry,
    revision: u64,
    robot: RobotView,
    scenario: Scenario,
    store: PathBuf,
    speed: f64,
    plan: PlanConfig,
}

/// Result of handling one client message.
#[derive(Debug)]
pub enum Handled {
    Broadcast(Vec<WireMessage>),
    Reply(WireMessage),
}

impl Session {
    /// Loads persisted zones (absent file = no zones), recomposes and plans.
    pub fn open(config: &ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let registry = ZoneRegistry::read_store(&config.store, config.scenario.base.clone())?;
        let mut session = Self {
            registry,
            revision: 0,
            robot: RobotView {
                seq: 0,
                motion: RobotMotion::at(config.scenario.start),
                path: Vec::new(),
                path_length: 0.0,
                status: String::new(),
            },
            scenario: config.scenario.clone(),
            store: config.store.clone(),
            speed: config.speed,
            plan: config.plan,
        };
        session.replan();
        Ok(session)
    }

    pub fn registry(&self) -> &ZoneRegistry {
        &self.registry
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn robot(&self) -> &RobotView {
        &self.robot
    }

    pub fn snapshot(&self) -> [WireMessage; 2] {
        snapshot(&self.registry, self.revision, &self.robot)
    }

    /// Plans from the robot's current position to the goal on the composite.
    fn replan(&mut self) {
        let grid = self.registry.composite();
        let pose = self.robot.motion.pose;
        let from = grid.world_to_grid(pose.position());
        let goal = self.scenario.goal_cell();
        self.robot.seq += 1;
        self.robot.motion.travelled = 0.0;
        let result = match from {
            Ok(start) => plan(grid, start, goal, &self.plan).map_err(|e| e.code()),
            Err(_) => Err("out_of_bounds"),
        };
        match result {
            Ok(path) => {
                let mut points = vec![pose.position()];
                points.extend(path.world_points(grid).into_iter().skip(1));
                self.robot.path_length = path_length(&path, grid.resolution());
                self.robot.path = points;
                self.robot.status = "ok".into();
            }
            Err(code) => {
                self.robot.path.clear();
                self.robot.path_length = 0.0;
                self.robot.status = code.into();
            }
        }
    }

    /// Applies one client message. Accepted edits are written to the store
    /// before the broadcast frames are produced; if the write fails the edit
    /// is rolled back and only the sender hears about it.
    pub fn handle(&mut self, msg: &WireMessage) -> Handled {
        let before = (self.registry.clone(), self.revision);
        match apply_message(&mut self.registry, &mut self.revision, msg) {
            Applied::Rejected(reply) => Handled::Reply(reply),
            Applied::Changed(_) => {
                if let Err(e) = self.registry.write_store(&self.store) {
                    tracing::error!(error = %e, "store write failed; edit rolled back");
                    (self.registry, self.revision) = before;
                    return Handled::Reply(error_reply("store_write_failed", e.to_string(), None));
                }
                self.replan();
                Handled::Broadcast(self.snapshot().to_vec())
            }
        }
    }

    /// Advances the robot; returns a robot frame if it moved.
    pub fn tick(&mut self, dt: f64) -> Option<WireMessage> {
        let next = step_robot(self.robot.motion, &self.robot.path, self.speed, dt);
        if next == self.robot.motion {
            return None;
        }
        self.robot.motion = next;
        self.robot.seq += 1;
        let [_, robot] = self.snapshot();
        Some(robot)
    }

    pub fn robot_pose(&self) -> Pose2D {
        self.robot.motion.pose
    }
}

type Frame = Arc<str>;

enum Command {
    Edit {
        msg: WireMessage,
        reply: mpsc::UnboundedSender<Frame>,
    },
    Snapshot {
        reply: oneshot::Sender<Vec<Frame>>,
    },
}

#[derive(Clone)]
struct Hub {
    commands: mpsc::UnboundedSender<Command>,
    frames: broadcast::Sender<Frame>,
    shutdown: watch::Receiver<bool>,
}

fn frame(msg: &WireMessage) -> Frame {
    encode(msg).expect("server messages are valid").into()
}

async fn event_loop(
    mut session: Session,
    mut commands: mpsc::UnboundedReceiver<Command>,
    frames: broadcast::Sender<Frame>,
    tick_hz: f64,
    mut shutdown: watch::Receiver<bool>,
) {
    let dt = 1.0 / tick_hz;
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(dt));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    loop {
        tokio::select! {
            _ = shutdown.changed() => break,
            cmd = commands.recv() => match cmd {
                None => break,
                Some(Command::Snapshot { reply }) => {
                    let _ = reply.send(session.snapshot().iter().map(frame).collect());
                }
                Some(Command::Edit { msg, reply }) => match session.handle(&msg) {
                    Handled::Broadcast(msgs) => {
                        for m in &msgs {
                            let _ = frames.send(frame(m));
                        }
                    }
                    Handled::Reply(m) => {
                        let _ = reply.send(frame(&m));
                    }
                },
            },
            _ = ticker.tick() => {
                if let Some(m) = session.tick(dt) {
                    let _ = frames.send(frame(&m));
                }
            }
        }
    }
}

/// Drives one client connection over any text-frame transport.
async fn run_client<I, O>(hub: Hub, mut incoming: I, mut outgoing: O)
where
    I: Stream<Item = String> + Unpin,
    O: Sink<String> + Unpin,
{
    // subscribe before asking for the snapshot so no broadcast is missed
    let mut frames = hub.frames.subscribe();
    let (reply_tx, mut replies) = mpsc::unbounded_channel::<Frame>();
    let mut shutdown = hub.shutdown.clone();

    let (snap_tx, snap_rx) = oneshot::channel();
    if hub.commands.send(Command::Snapshot { reply: snap_tx }).is_err() {
        return;
    }
    let Ok(initial) = snap_rx.await else { return };
    for f in initial {
        if outgoing.send(f.to_string()).await.is_err() {
            return;
        }
    }

    loop {
        tokio::select! {
            _ = shutdown.changed() => break,
            text = incoming.next() => {
                let Some(text) = text else { break };
                if text.trim().is_empty() {
                    continue;
                }
                match decode(&text) {
                    Ok(msg) => {
                        let cmd = Command::Edit { msg, reply: reply_tx.clone() };
                        if hub.commands.send(cmd).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let reply = frame(&error_reply(e.code(), e.to_string(), None));
                        if outgoing.send(reply.to_string()).await.is_err() {
                            break;
                        }
                    }
                }
            }
            Some(f) = replies.recv() => {
                if outgoing.send(f.to_string()).await.is_err() {
                    break;
                }
            }
            f = frames.recv() => match f {
                Ok(f) => {
                    if outgoing.send(f.to_string()).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::warn!(skipped = n, "slow client; resending full state");
                    let (tx, rx) = oneshot::channel();
                    if hub.commands.send(Command::Snapshot { reply: tx }).is_err() {
                        break;
                    }
                    let Ok(state) = rx.await else { break };
                    for f in state {
                        if outgoing.send(f.to_string()).await.is_err() {
                            return;
                        }
                    }
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
        }
    }
}

async fn handle_line_client(hub: Hub, stream: TcpStream) {
    let (read, write) = stream.into_split();
    let lines = BufReader::new(read).lines();
    let incoming = futures::stream::unfold(lines, |mut lines| async move {
        match lines.next_line().await {
            Ok(Some(line)) => Some((line, lines)),
            _ => None,
        }
    });
    let outgoing = futures::sink::unfold(write, |mut w, text: String| async move {
        w.write_all(text.as_bytes()).await?;
        w.write_all(b"\n").await?;
        Ok::<_, std::io::Error>(w)
    });
    run_client(hub, Box::pin(incoming), Box::pin(outgoing)).await;
}

async fn healthz() -> &'static str {
    "ok"
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(hub): State<Hub>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| handle_ws_client(hub, socket))
}

async fn handle_ws_client(hub: Hub, socket: WebSocket) {
    let (sink, stream) = socket.split();
    let incoming = stream
        .take_while(|m| futures::future::ready(matches!(m, Ok(m) if !matches!(m, Message::Close(_)))))
        .filter_map(|m| async move {
            match m {
                Ok(Message::Text(t)) => Some(t.to_string()),
                _ => None,
            }
        });
    let outgoing = sink.with(|text: String| async move { Ok::<_, axum::Error>(Message::Text(text.into())) });
    run_client(hub, Box::pin(incoming), Box::pin(outgoing)).await;
}

/// Handle to a running service.
pub struct RunningService {
    http_addr: SocketAddr,
    line_addr: Option<SocketAddr>,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl RunningService {
    pub fn http_addr(&self) -> SocketAddr {
        self.http_addr
    }

    pub fn line_addr(&self) -> Option<SocketAddr> {
        self.line_addr
    }

    /// Stops accepting connections, closes clients and waits for the loop to exit.
    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        for t in self.tasks {
            let _ = t.await;
        }
    }
}

/// Loads state, binds the listeners and spawns the service tasks.
pub async fn start(config: ServiceConfig) -> Result<RunningService, ServiceError> {
    let session = Session::open(&config)?;
    tracing::info!(
        zones = session.registry().len(),
        store = %config.store.display(),
        "restored zones"
    );

    let http = TcpListener::bind(config.listen)
        .await
        .map_err(|source| ServiceError::Bind { addr: config.listen, source })?;
    let line = match config.line_listen {
        Some(addr) => Some(
            TcpListener::bind(addr)
                .await
                .map_err(|source| ServiceError::Bind { addr, source })?,
        ),
        None => None,
    };
    let http_addr = http.local_addr()?;
    let line_addr = line.as_ref().map(TcpListener::local_addr).transpose()?;

    let (shutdown_tx, shutdown_rx) = watch::channel(false);
    let (cmd_tx, cmd_rx) = mpsc::unbounded_channel();
    let (frames_tx, _) = broadcast::channel(256);
    let hub = Hub {
        commands: cmd_tx,
        frames: frames_tx.clone(),
        shutdown: shutdown_rx.clone(),
    };

    let mut tasks = Vec::new();
    tasks.push(tokio::spawn(event_loop(
        session,
        cmd_rx,
        frames_tx,
        config.tick_hz,
        shutdown_rx.clone(),
    )));

    let app = Router::new()
        .route("/healthz", get(healthz))
        .route("/ws", get(ws_upgrade))
        .with_state(hub.clone());
    let mut http_shutdown = shutdown_rx.clone();
    tasks.push(tokio::spawn(async move {
        let res = axum::serve(http, app)
            .with_graceful_shutdown(async move {
                let _ = http_shutdown.changed().await;
            })
            .await;
        if let Err(e) = res {
            tracing::error!(error = %e, "http server stopped");
        }
    }));

    if let Some(listener) = line {
        let hub = hub.clone();
        let mut stop = shutdown_rx.clone();
        tasks.push(tokio::spawn(async move {
            loop {
                tokio::select! {
                    _ = stop.changed() => break,
                    accepted = listener.accept() => match accepted {
                        Ok((stream, peer)) => {
                            tracing::debug!(%peer, "line client connected");
                            tokio::spawn(handle_line_client(hub.clone(), stream));
                        }
                        Err(e) => tracing::warn!(error = %e, "accept failed"),
                    },
                }
            }
        }));
    }

    tracing::info!(%http_addr, ?line_addr, "serving");
    Ok(RunningService {
        http_addr,
        line_addr,
        shutdown: shutdown_tx,
        tasks,
    })
}

/// Runs until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let running = start(config).await?;
    tokio::signal::ctrl_c().await?;
    tracing::info!("shutting down");
    running.shutdown().await;
    Ok(())
}
