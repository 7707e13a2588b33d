//! `/session` WebSocket: hello, then a stream of hand updates.
//!
//! Frames are solved in arrival order. With a rate limit, a frame that
//! arrives before the next solve slot replaces any frame still waiting, so
//! only the latest is solved (its seq is echoed; skipped seqs get nothing).

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use graspshare::{FrameContext, IntentVector, Mode, WorkspaceBounds};
use tokio::time::Instant;

use crate::error::{parse_json, ServiceError};
use crate::wire::{BoundsSpec, Inbound, Outbound, SolutionMessage};
use crate::{AppState, Snapshot, Target};

pub(crate) async fn upgrade(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>) -> Response {
    ws.on_upgrade(move |socket| run(socket, state))
}

struct Session {
    snapshot: Arc<Snapshot>,
    model_id: String,
    mode: Mode,
    bounds: WorkspaceBounds,
    seed: Option<u64>,
    last_seq: Option<u64>,
    history: VecDeque<SolutionMessage>,
    capacity: usize,
}

impl Session {
    fn open(
        state: &AppState,
        model: String,
        mode: Mode,
        bounds: Option<&BoundsSpec>,
        seed: Option<u64>,
    ) -> Result<Self, ServiceError> {
        let snapshot = state.snapshot();
        let reg = &snapshot.registry;
        let bounds = AppState::resolve_bounds(&snapshot, &model, bounds)?;
        // Fail at hello rather than on every frame.
        FrameContext::new(
            reg.model(&model)?,
            reg.human().map(|(_, m)| m),
            &bounds,
            reg.alignments(),
            state.config.solver,
        )?;
        Ok(Self {
            snapshot,
            model_id: model,
            mode,
            bounds,
            seed,
            last_seq: None,
            history: VecDeque::new(),
            capacity: state.config.history,
        })
    }

    fn remember(&mut self, msg: &SolutionMessage) {
        if self.capacity == 0 {
            return;
        }
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back(msg.clone());
    }
}

struct Pending {
    seq: u64,
    mode: Mode,
    features: Vec<f64>,
    intent: Option<IntentVector>,
}

fn error(seq: Option<u64>, message: impl Into<String>) -> Outbound {
    Outbound::Error {
        seq,
        message: message.into(),
    }
}

async fn send(socket: &mut WebSocket, msg: &Outbound) -> bool {
    let text = serde_json::to_string(msg).expect("outbound messages serialize");
    socket.send(Message::Text(text.into())).await.is_ok()
}

async fn solve(state: &Arc<AppState>, session: &mut Session, p: Pending) -> Outbound {
    let (state2, snapshot) = (state.clone(), session.snapshot.clone());
    let (model_id, bounds, seed) = (session.model_id.clone(), session.bounds.clone(), session.seed);
    let seq = p.seq;
    let result = tokio::task::spawn_blocking(move || {
        let target = Target {
            model_id: &model_id,
            bounds,
            seed,
        };
        state2.solve(&snapshot, &target, p.mode, &p.features, p.intent.as_ref(), None)
    })
    .await;
    match result {
        Ok(Ok(solution)) => {
            let msg = SolutionMessage::new(seq, &solution);
            session.remember(&msg);
            Outbound::Solution(msg)
        }
        Ok(Err(e)) => error(Some(seq), e.to_string()),
        Err(e) => error(Some(seq), format!("solver task failed: {e}")),
    }
}

async fn run(mut socket: WebSocket, state: Arc<AppState>) {
    let interval = match state.config.rate_limit {
        0 => None,
        n => Some(Duration::from_secs_f64(1.0 / n as f64)),
    };
    let mut session: Option<Session> = None;
    let mut pending: Option<Pending> = None;
    let mut next_slot = Instant::now();
    let mut coalesced = 0u64;

    loop {
        let due = pending.is_some();
        tokio::select! {
            biased;
            _ = tokio::time::sleep_until(next_slot), if due => {
                let (Some(p), Some(s)) = (pending.take(), session.as_mut()) else { continue };
                let out = solve(&state, s, p).await;
                if !send(&mut socket, &out).await {
                    break;
                }
                next_slot = Instant::now() + interval.unwrap_or_default();
            }
            msg = socket.recv() => {
                let text = match msg {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Binary(_))) => {
                        if !send(&mut socket, &error(None, "binary messages are not supported")).await {
                            break;
                        }
                        continue;
                    }
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let inbound = match parse_json::<Inbound>(&text) {
                    Ok(m) => m,
                    Err(e) => {
                        let seq = serde_json::from_str::<serde_json::Value>(&text)
                            .ok()
                            .and_then(|v| v.get("seq").and_then(|s| s.as_u64()));
                        if !send(&mut socket, &error(seq, e.to_string())).await {
                            break;
                        }
                        continue;
                    }
                };
                let reply = match inbound {
                    Inbound::Hello { model, mode, bounds, seed } => {
                        match Session::open(&state, model, mode, bounds.as_ref(), seed) {
                            Ok(s) => {
                                if pending.take().is_some() {
                                    coalesced += 1;
                                }
                                session = Some(s);
                                None
                            }
                            Err(e) => Some(error(None, e.to_string())),
                        }
                    }
                    Inbound::SetMode { mode } => match session.as_mut() {
                        Some(s) => {
                            s.mode = mode;
                            None
                        }
                        None => Some(error(None, "send hello before set_mode")),
                    },
                    Inbound::HandUpdate { seq, features, intent } => match session.as_mut() {
                        None => Some(error(Some(seq), "send hello before hand_update")),
                        Some(s) if s.last_seq.is_some_and(|last| seq <= last) => {
                            Some(error(Some(seq), format!("seq {seq} does not increase past {}", s.last_seq.unwrap_or(0))))
                        }
                        Some(s) => {
                            s.last_seq = Some(seq);
                            let p = Pending { seq, mode: s.mode, features: features.to_vec(), intent };
                            if interval.is_none() {
                                Some(solve(&state, s, p).await)
                            } else {
                                if pending.replace(p).is_some() {
                                    coalesced += 1;
                                }
                                None
                            }
                        }
                    },
                };
                if let Some(out) = reply {
                    if !send(&mut socket, &out).await {
                        break;
                    }
                }
            }
        }
    }
    let kept = session.as_ref().map_or(0, |s| s.history.len());
    tracing::debug!(coalesced, kept, "session closed");
}
