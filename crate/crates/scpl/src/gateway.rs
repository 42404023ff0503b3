//! The WebSocket/HTTP gateway: one served run whose human agents are
//! operated from connected sessions.
//!
//! A single task owns the [`Runtime`] and is the only thing that changes it.
//! Sessions send commands (claims, decisions, passes) into that task through
//! a channel, so every decision enters the run in one total order. The task
//! streams trace events to sessions in trace order; since frames are derived
//! from the trace alone, [`ServeOutcome::audit_ok`] can check afterwards that
//! what was streamed is exactly what the trace says happened.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot};

use crate::oracle::{InteractiveOracle, Oracle, OracleAnswer, OracleDecision, OracleError, OracleRequest};
use crate::parser::parse_term;
use crate::runtime::{Runtime, RuntimeError};
use crate::scheduler::Scheduler;
use crate::staticcheck::CheckedProgram;
use crate::term::{Subst, Sym};
use crate::trace::{HaltReason, Trace, TraceEvent};

/// Frames the gateway sends. Terms are in their canonical text form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    Hello { agents: Vec<String>, interactive: Vec<String>, contract_name: String },
    /// Acknowledges a claim. It is followed by the agent's complete view so
    /// far (its events, then its state), so a console rebuilds its feed here.
    Claimed { agent: String },
    State { agent: String, state_term: String },
    Event {
        index: usize,
        agent: String,
        kind: EventKind,
        payload: String,
        recipients: Vec<String>,
        /// For inputs: who signed the received act.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        signer: Option<String>,
    },
    OracleRequest { request_id: u64, agent: String, alternatives: Vec<AlternativeFrame> },
    Error { code: ErrorCode, message: String },
    Halted { reason: HaltReason, fault: Option<String> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Act,
    Oracle,
    Input,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlternativeFrame {
    pub index: usize,
    pub act_pattern: String,
    pub required_vars: Vec<String>,
    pub choice_options: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadFrame,
    BadToken,
    UnknownAgent,
    NotInteractive,
    AlreadyClaimed,
    NotClaimed,
    UnknownRequest,
    BadBinding,
    Rejected,
}

/// Frames sessions send.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientFrame {
    Claim { agent: String, token: String },
    Release { agent: String },
    Decision {
        request_id: u64,
        alternative: usize,
        #[serde(default)]
        bindings: BTreeMap<String, String>,
    },
    Pass { request_id: u64 },
}

/// Everything a served run needs.
pub struct ServeConfig {
    pub program: Arc<CheckedProgram>,
    pub contract_name: String,
    pub interactive: BTreeSet<Sym>,
    /// Decides for the agents that are not interactive.
    pub fallback: Box<dyn Oracle + Send>,
    pub scheduler: Box<dyn Scheduler + Send>,
    pub token: String,
    pub max_steps: usize,
    /// Outstanding requests older than this are answered with Pass.
    pub idle_timeout: Duration,
    /// Pause between transitions, so that humans can follow.
    pub step_delay: Duration,
    /// Directory of console assets; a built-in page is served without one.
    pub assets: Option<PathBuf>,
}

/// The result of a served run, available after shutdown.
#[derive(Debug)]
pub struct ServeOutcome {
    pub trace: Trace,
    /// Whether the streamed event frames are exactly the frames derived
    /// from the final trace.
    pub audit_ok: bool,
    pub fault: Option<RuntimeError>,
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("the run task ended unexpectedly")]
    Lost,
}

/// A running gateway.
pub struct Gateway {
    addr: SocketAddr,
    commands: mpsc::UnboundedSender<Command>,
    done: oneshot::Receiver<ServeOutcome>,
    server: tokio::task::JoinHandle<()>,
}

impl Gateway {
    /// Binds `addr` (port 0 picks a free port) and starts the run.
    pub async fn start(config: ServeConfig, addr: SocketAddr) -> Result<Gateway, GatewayError> {
        let listener = TcpListener::bind(addr).await.map_err(|source| GatewayError::Bind { addr, source })?;
        let addr = listener.local_addr().map_err(|source| GatewayError::Bind { addr, source })?;
        let runtime = Runtime::new(config.program.clone())?;
        let (commands, rx) = mpsc::unbounded_channel();
        let (done_tx, done) = oneshot::channel();
        let assets = config.assets.clone();
        let run = RunLoop::new(config, runtime);
        tokio::spawn(run.drive(rx, done_tx));

        let shared = commands.clone();
        let mut app = Router::new().route("/ws", get(upgrade)).with_state(shared);
        app = match assets {
            Some(dir) => app.fallback_service(tower_http::services::ServeDir::new(dir)),
            None => app.fallback(get(|| async { Html(BUILTIN_PAGE) })),
        };
        let server = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(Gateway { addr, commands, done, server })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops the run and the server, returning the trace and audit result.
    pub async fn shutdown(self) -> Result<ServeOutcome, GatewayError> {
        let _ = self.commands.send(Command::Shutdown);
        let outcome = self.done.await.map_err(|_| GatewayError::Lost)?;
        self.server.abort();
        Ok(outcome)
    }

    /// Resolves once the run halts on its own: quiescence, the step limit,
    /// or a fault. Interactive agents that nobody has claimed count as idle.
    pub fn halted(&self) -> impl std::future::Future<Output = ()> + use<> {
        let (tx, rx) = oneshot::channel();
        let _ = self.commands.send(Command::NotifyHalt(tx));
        async move {
            let _ = rx.await;
        }
    }

    /// Waits until the run halts (or `timeout` passes), then shuts down.
    pub async fn finish(self, timeout: Duration) -> Result<ServeOutcome, GatewayError> {
        let _ = tokio::time::timeout(timeout, self.halted()).await;
        self.shutdown().await
    }
}

const BUILTIN_PAGE: &str = "<!doctype html><title>scpl gateway</title>\
<p>This gateway serves one contract run. Connect a console to <code>/ws</code>.</p>";

type SessionId = u64;

enum Command {
    Connect { session: SessionId, frames: mpsc::UnboundedSender<ServerFrame> },
    Frame { session: SessionId, frame: ClientFrame },
    Disconnect { session: SessionId },
    NotifyHalt(oneshot::Sender<()>),
    Shutdown,
}

async fn upgrade(ws: WebSocketUpgrade, State(commands): State<mpsc::UnboundedSender<Command>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| session(socket, commands))
}

async fn session(socket: WebSocket, commands: mpsc::UnboundedSender<Command>) {
    static NEXT: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(1);
    let id = NEXT.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<ServerFrame>();
    if commands.send(Command::Connect { session: id, frames: tx.clone() }).is_err() {
        return;
    }
    let writer = tokio::spawn(async move {
        while let Some(frame) = rx.recv().await {
            let text = serde_json::to_string(&frame).expect("frames serialize");
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });
    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(text) => match serde_json::from_str::<ClientFrame>(text.as_str()) {
                Ok(frame) => {
                    let _ = commands.send(Command::Frame { session: id, frame });
                }
                Err(e) => {
                    let _ = tx.send(ServerFrame::Error { code: ErrorCode::BadFrame, message: e.to_string() });
                }
            },
            Message::Close(_) => break,
            _ => {}
        }
    }
    let _ = commands.send(Command::Disconnect { session: id });
    drop(tx);
    let _ = writer.await;
}

/// Routes interactive agents to the sessions and everyone else to the
/// fallback oracle.
struct ServedOracle {
    sessions: InteractiveOracle,
    interactive: BTreeSet<Sym>,
    fallback: Box<dyn Oracle + Send>,
}

impl Oracle for ServedOracle {
    fn decide(&mut self, request: &OracleRequest) -> Result<OracleAnswer, OracleError> {
        if self.interactive.contains(&request.agent) {
            self.sessions.decide(request)
        } else {
            self.fallback.decide(request)
        }
    }

    fn rejected(&mut self, request: &OracleRequest, reason: &str) -> Result<(), OracleError> {
        if self.interactive.contains(&request.agent) {
            self.sessions.rejected(request, reason)
        } else {
            self.fallback.rejected(request, reason)
        }
    }
}

struct RunLoop {
    rt: Runtime,
    oracle: ServedOracle,
    scheduler: Box<dyn Scheduler + Send>,
    contract_name: String,
    token: String,
    max_steps: usize,
    idle_timeout: Duration,
    step_delay: Duration,
    steps: usize,
    sessions: HashMap<SessionId, mpsc::UnboundedSender<ServerFrame>>,
    owners: HashMap<Sym, SessionId>,
    issued: HashMap<u64, Instant>,
    /// Trace events already streamed.
    streamed: usize,
    log: Vec<ServerFrame>,
    halted: Option<(HaltReason, Option<RuntimeError>)>,
    halt_waiters: Vec<oneshot::Sender<()>>,
}

impl RunLoop {
    fn new(config: ServeConfig, rt: Runtime) -> Self {
        RunLoop {
            rt,
            oracle: ServedOracle { sessions: InteractiveOracle::new(), interactive: config.interactive, fallback: config.fallback },
            scheduler: config.scheduler,
            contract_name: config.contract_name,
            token: config.token,
            max_steps: config.max_steps,
            idle_timeout: config.idle_timeout,
            step_delay: config.step_delay,
            steps: 0,
            sessions: HashMap::new(),
            owners: HashMap::new(),
            issued: HashMap::new(),
            streamed: 0,
            log: Vec::new(),
            halted: None,
            halt_waiters: Vec::new(),
        }
    }

    async fn drive(mut self, mut rx: mpsc::UnboundedReceiver<Command>, done: oneshot::Sender<ServeOutcome>) {
        loop {
            while let Ok(cmd) = rx.try_recv() {
                if !self.handle(cmd) {
                    return self.finish(done);
                }
            }
            self.expire_requests();
            let progressed = if self.halted.is_none() { self.advance() } else { None };
            self.flush();
            if let Some(transition) = progressed {
                if !transition || self.step_delay.is_zero() {
                    tokio::task::yield_now().await;
                } else {
                    tokio::time::sleep(self.step_delay).await;
                }
                continue;
            }
            if self.rt.candidates().is_empty() && !self.rt.is_awaiting_oracle() && self.halted.is_none() {
                // Nobody can move and nobody is deliberating. Interactive
                // agents may still be claimed later, so the run stays open.
                self.notify_halt();
            }
            tokio::select! {
                cmd = rx.recv() => match cmd {
                    Some(cmd) => if !self.handle(cmd) { return self.finish(done) },
                    None => return self.finish(done),
                },
                _ = tokio::time::sleep(Duration::from_millis(50)) => {}
            }
        }
    }

    /// Performs one scheduled move if any is enabled; `Some(true)` when it
    /// was a transition.
    fn advance(&mut self) -> Option<bool> {
        if self.steps >= self.max_steps {
            self.halted = Some((HaltReason::MaxSteps, None));
            self.notify_halt();
            return None;
        }
        match self.rt.step(&mut self.scheduler, &mut self.oracle) {
            Ok(Some(outcome)) => {
                let transition = outcome.is_transition();
                self.steps += usize::from(transition);
                Some(transition)
            }
            Ok(None) => None,
            Err(e) => {
                self.rt.halt(HaltReason::Fault, Some(e.to_string()));
                self.broadcast(ServerFrame::Halted { reason: HaltReason::Fault, fault: Some(e.to_string()) });
                self.halted = Some((HaltReason::Fault, Some(e)));
                self.notify_halt();
                None
            }
        }
    }

    fn notify_halt(&mut self) {
        for w in self.halt_waiters.drain(..) {
            let _ = w.send(());
        }
    }

    fn finish(mut self, done: oneshot::Sender<ServeOutcome>) {
        self.flush();
        let (reason, fault) = match self.halted.take() {
            Some((r, f)) => (r, f),
            None if self.rt.is_awaiting_oracle() => (HaltReason::AwaitingOracle, None),
            None if self.rt.candidates().is_empty() => (HaltReason::Quiescent, None),
            None => (HaltReason::MaxSteps, None),
        };
        if reason != HaltReason::Fault {
            self.rt.halt(reason, None);
        }
        let trace = self.rt.trace().clone();
        let expected: Vec<ServerFrame> = trace.events.iter().map(|e| event_frame(&self.rt, e)).collect();
        let audit_ok = expected == self.log;
        let _ = done.send(ServeOutcome { trace, audit_ok, fault });
    }

    /// Handles one command; `false` ends the run.
    fn handle(&mut self, cmd: Command) -> bool {
        match cmd {
            Command::Connect { session, frames } => {
                let mut agents: Vec<String> = self.rt.config().agents.keys().map(|a| a.to_string()).collect();
                agents.sort();
                let interactive = self.oracle.interactive.iter().map(|a| a.to_string()).collect();
                let _ = frames.send(ServerFrame::Hello { agents, interactive, contract_name: self.contract_name.clone() });
                // Acts are public: a newcomer gets the feed so far.
                for e in &self.rt.trace().events[..self.streamed] {
                    if matches!(e, TraceEvent::Act { .. }) {
                        let _ = frames.send(event_frame(&self.rt, e));
                    }
                }
                self.sessions.insert(session, frames);
            }
            Command::Frame { session, frame } => self.on_frame(session, frame),
            Command::Disconnect { session } => {
                self.sessions.remove(&session);
                let released: Vec<Sym> = self.owners.iter().filter(|(_, s)| **s == session).map(|(a, _)| a.clone()).collect();
                for agent in released {
                    self.release(&agent);
                }
            }
            Command::NotifyHalt(tx) => {
                if self.halted.is_some() {
                    let _ = tx.send(());
                } else {
                    self.halt_waiters.push(tx);
                }
            }
            Command::Shutdown => return false,
        }
        true
    }

    fn send(&self, session: SessionId, frame: ServerFrame) {
        if let Some(tx) = self.sessions.get(&session) {
            let _ = tx.send(frame);
        }
    }

    fn error(&self, session: SessionId, code: ErrorCode, message: impl Into<String>) {
        self.send(session, ServerFrame::Error { code, message: message.into() });
    }

    fn broadcast(&self, frame: ServerFrame) {
        for tx in self.sessions.values() {
            let _ = tx.send(frame.clone());
        }
    }

    fn on_frame(&mut self, session: SessionId, frame: ClientFrame) {
        match frame {
            ClientFrame::Claim { agent, token } => {
                if token != self.token {
                    return self.error(session, ErrorCode::BadToken, "wrong token");
                }
                let agent = Sym::from(agent);
                if !self.oracle.interactive.contains(&agent) {
                    let code = if self.rt.agent(&agent).is_some() { ErrorCode::NotInteractive } else { ErrorCode::UnknownAgent };
                    return self.error(session, code, format!("`{agent}` cannot be claimed"));
                }
                if let Some(owner) = self.owners.get(&agent) {
                    let message = if *owner == session { "you already hold it" } else { "another session holds it" };
                    return self.error(session, ErrorCode::AlreadyClaimed, format!("`{agent}` is taken: {message}"));
                }
                self.owners.insert(agent.clone(), session);
                self.oracle.sessions.claim(&agent);
                self.rt.wake(&agent);
                self.send(session, ServerFrame::Claimed { agent: agent.to_string() });
                // Replay what this agent has seen so far, then its state.
                for e in &self.rt.trace().events[..self.streamed] {
                    if visible_to(e, &agent) {
                        self.send(session, event_frame(&self.rt, e));
                    }
                }
                if let Some(cell) = self.rt.agent(&agent) {
                    self.send(session, ServerFrame::State { agent: agent.to_string(), state_term: cell.state.to_string() });
                }
            }
            ClientFrame::Release { agent } => {
                let agent = Sym::from(agent);
                if self.owners.get(&agent) != Some(&session) {
                    return self.error(session, ErrorCode::NotClaimed, format!("you do not hold `{agent}`"));
                }
                self.release(&agent);
            }
            ClientFrame::Decision { request_id, alternative, bindings } => {
                let Some(agent) = self.owned_request(session, request_id) else { return };
                let mut subst = Subst::new();
                for (var, text) in &bindings {
                    match parse_term(text) {
                        Ok(t) if t.is_ground() => subst.bind(var.as_str().into(), t),
                        _ => return self.error(session, ErrorCode::BadBinding, format!("`{var}`: `{text}` is not a ground term")),
                    }
                }
                let answer = OracleAnswer::Decide(OracleDecision { alternative, bindings: subst });
                if self.oracle.sessions.answer(request_id, answer).is_some() {
                    self.issued.remove(&request_id);
                    self.rt.wake(&agent);
                }
            }
            ClientFrame::Pass { request_id } => {
                let Some(agent) = self.owned_request(session, request_id) else { return };
                if self.oracle.sessions.answer(request_id, OracleAnswer::Pass).is_some() {
                    self.issued.remove(&request_id);
                    self.rt.wake(&agent);
                }
            }
        }
    }

    /// The agent of outstanding request `id`, if `session` holds it.
    fn owned_request(&self, session: SessionId, id: u64) -> Option<Sym> {
        let Some(req) = self.oracle.sessions.outstanding_requests().find(|r| r.id == id) else {
            self.error(session, ErrorCode::UnknownRequest, format!("no outstanding request {id}"));
            return None;
        };
        if self.owners.get(&req.agent) != Some(&session) {
            self.error(session, ErrorCode::NotClaimed, format!("request {id} belongs to `{}`, which you do not hold", req.agent));
            return None;
        }
        Some(req.agent.clone())
    }

    fn release(&mut self, agent: &Sym) {
        self.owners.remove(agent);
        self.oracle.sessions.release(agent);
        self.rt.wake(agent);
    }

    /// Humans deliberate, but not forever: stale requests count as Pass.
    fn expire_requests(&mut self) {
        let now = Instant::now();
        let stale: Vec<u64> = self.issued.iter().filter(|(_, t)| now.duration_since(**t) >= self.idle_timeout).map(|(id, _)| *id).collect();
        for id in stale {
            self.issued.remove(&id);
            if let Some(agent) = self.oracle.sessions.answer(id, OracleAnswer::Pass) {
                self.rt.wake(&agent);
            }
        }
    }

    /// Streams new trace events, states, requests and rejections.
    fn flush(&mut self) {
        let events = self.rt.trace().events[self.streamed..].to_vec();
        self.streamed += events.len();
        let mut touched = BTreeSet::new();
        for e in &events {
            let frame = event_frame(&self.rt, e);
            self.log.push(frame.clone());
            for (agent, session) in &self.owners {
                if visible_to(e, agent) {
                    self.send(*session, frame.clone());
                }
            }
            touched.insert(e.agent().clone());
            if let TraceEvent::Act { payload, .. } = e {
                if let Some(("activated", 2)) = payload.functor() {
                    if let Some(name) = payload.args()[0].as_name() {
                        touched.insert(name.into());
                    }
                }
            }
        }
        // Sessions that hold no agent still see the public acts.
        let holders: BTreeSet<SessionId> = self.owners.values().copied().collect();
        for e in events.iter().filter(|e| matches!(e, TraceEvent::Act { .. })) {
            let frame = event_frame(&self.rt, e);
            for (session, tx) in &self.sessions {
                if !holders.contains(session) {
                    let _ = tx.send(frame.clone());
                }
            }
        }
        for agent in touched {
            if let (Some(session), Some(cell)) = (self.owners.get(&agent), self.rt.agent(&agent)) {
                self.send(*session, ServerFrame::State { agent: agent.to_string(), state_term: cell.state.to_string() });
            }
        }
        for req in self.oracle.sessions.take_outbox() {
            self.issued.insert(req.id, Instant::now());
            if let Some(session) = self.owners.get(&req.agent) {
                self.send(*session, request_frame(&req));
            }
        }
        for (req, reason) in self.oracle.sessions.take_rejections() {
            if let Some(session) = self.owners.get(&req.agent) {
                self.error(*session, ErrorCode::Rejected, format!("request {}: {reason}", req.id));
            }
            self.rt.wake(&req.agent);
        }
    }
}

/// Acts are public; decisions and receipts are seen by their agent only.
fn visible_to(e: &TraceEvent, agent: &Sym) -> bool {
    match e {
        TraceEvent::Act { agent: signer, recipients, .. } => signer == agent || recipients.contains(agent),
        TraceEvent::Oracle { agent: a, .. } | TraceEvent::Input { agent: a, .. } => a == agent,
    }
}

fn event_frame(rt: &Runtime, e: &TraceEvent) -> ServerFrame {
    match e {
        TraceEvent::Oracle { index, agent, payload } => ServerFrame::Event {
            index: *index,
            agent: agent.to_string(),
            kind: EventKind::Oracle,
            payload: payload.to_string(),
            recipients: vec![],
            signer: None,
        },
        TraceEvent::Act { index, agent, payload, recipients, .. } => ServerFrame::Event {
            index: *index,
            agent: agent.to_string(),
            kind: EventKind::Act,
            payload: payload.to_string(),
            recipients: recipients.iter().map(|r| r.to_string()).collect(),
            signer: None,
        },
        TraceEvent::Input { agent, act } => {
            let received = rt.config().acts.iter().find(|a| a.index == *act).expect("inputs refer to emitted acts");
            ServerFrame::Event {
                index: *act,
                agent: agent.to_string(),
                kind: EventKind::Input,
                payload: received.payload.to_string(),
                recipients: vec![],
                signer: Some(received.signer.to_string()),
            }
        }
    }
}

pub fn request_frame(req: &OracleRequest) -> ServerFrame {
    ServerFrame::OracleRequest {
        request_id: req.id,
        agent: req.agent.to_string(),
        alternatives: req
            .alternatives
            .iter()
            .enumerate()
            .map(|(index, a)| AlternativeFrame {
                index,
                act_pattern: format!("{}({})", req.agent, a.act),
                required_vars: a.required.iter().map(|v| v.to_string()).collect(),
                choice_options: a.choices.iter().map(|(v, opts)| (v.to_string(), opts.iter().map(|o| o.to_string()).collect())).collect(),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_use_the_documented_shape() {
        let f: ClientFrame = serde_json::from_str(r#"{"type":"decision","request_id":3,"alternative":0,"bindings":{"Host":"ouri"}}"#).unwrap();
        assert_eq!(f, ClientFrame::Decision { request_id: 3, alternative: 0, bindings: [("Host".into(), "ouri".into())].into() });
        let hello = ServerFrame::Hello { agents: vec!["gal".into()], interactive: vec![], contract_name: "t".into() };
        assert_eq!(serde_json::to_value(&hello).unwrap()["type"], "hello");
        let err = ServerFrame::Error { code: ErrorCode::AlreadyClaimed, message: String::new() };
        assert_eq!(serde_json::to_value(&err).unwrap()["code"], "already_claimed");
    }
}
