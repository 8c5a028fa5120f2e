use std::collections::VecDeque;
use std::convert::Infallible;
use std::time::Duration;

use bytes::Bytes;
use futures::Stream;
use tokio::sync::broadcast::{self, error::RecvError};
use tokio::time::{interval_at, Instant, Interval};
use viscot_core::session::{EventKind, SessionEvent};

/// Sent in place of further events when a subscriber falls too far behind.
pub const DROPPED_NOTICE: &str = r#"{"type":"dropped","reason":"subscriber fell behind"}"#;

struct State {
    backlog: VecDeque<SessionEvent>,
    rx: broadcast::Receiver<SessionEvent>,
    next_sequence: u64,
    heartbeat: Interval,
    done: bool,
}

fn line(event: &SessionEvent) -> Bytes {
    Bytes::from(event.to_json_line() + "\n")
}

impl State {
    fn emit(&mut self, event: SessionEvent) -> Bytes {
        self.next_sequence = event.sequence + 1;
        self.done = event.kind() == EventKind::Accepted;
        line(&event)
    }

    async fn next(&mut self) -> Option<Bytes> {
        if self.done {
            return None;
        }
        if let Some(event) = self.backlog.pop_front() {
            return Some(self.emit(event));
        }
        loop {
            tokio::select! {
                received = self.rx.recv() => match received {
                    Ok(event) if event.sequence < self.next_sequence => continue,
                    Ok(event) => return Some(self.emit(event)),
                    Err(RecvError::Lagged(_)) => {
                        self.done = true;
                        return Some(Bytes::from(format!("{DROPPED_NOTICE}\n")));
                    }
                    Err(RecvError::Closed) => return None,
                },
                _ = self.heartbeat.tick() => return Some(Bytes::from_static(b"\n")),
            }
        }
    }
}

/// JSON lines: every event in `backlog`, then live events from `rx`, with a
/// blank line every `heartbeat` while idle. Ends after ACCEPTED.
pub fn event_stream(
    backlog: Vec<SessionEvent>,
    rx: broadcast::Receiver<SessionEvent>,
    heartbeat: Duration,
) -> impl Stream<Item = Result<Bytes, Infallible>> {
    let state = State {
        backlog: backlog.into(),
        rx,
        next_sequence: 0,
        heartbeat: interval_at(Instant::now() + heartbeat, heartbeat),
        done: false,
    };
    futures::stream::unfold(state, |mut state| async move {
        state.next().await.map(|bytes| (Ok(bytes), state))
    })
}
