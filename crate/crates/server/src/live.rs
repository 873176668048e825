//! The live session: one loop thread that owns the simulation, fed by an
//! event queue and publishing snapshots and frames on a broadcast channel.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use tokio::sync::{broadcast, mpsc, oneshot};

use microsteer_core::api::EventAck;
use microsteer_core::imaging::Frame;
use microsteer_core::protocol::{SessionInfo, PROTOCOL_VERSION};
use microsteer_core::session::{
    Event, RunRecord, Scenario, Session, SessionError, StateSnapshot, LIVE_PARAM_KEYS,
};

/// Snapshots buffered per subscriber before a slow one starts missing them.
const BROADCAST_CAPACITY: usize = 64;

#[derive(Debug, Clone)]
pub enum Outgoing {
    Snapshot(Arc<StateSnapshot>),
    Frame(Arc<Frame>),
}

enum Command {
    Event(Event, oneshot::Sender<Result<EventAck, String>>),
    Render(oneshot::Sender<Frame>),
}

#[derive(Default)]
struct Flags {
    stop: AtomicBool,
    operator: AtomicBool,
    frame_subscribers: AtomicUsize,
}

struct Shared {
    scenario: Scenario,
    snapshots: Vec<StateSnapshot>,
}

pub struct LiveHandle {
    commands: mpsc::UnboundedSender<Command>,
    out: broadcast::Sender<Outgoing>,
    shared: Arc<Mutex<Shared>>,
    flags: Arc<Flags>,
    info: SessionInfo,
    thread: Mutex<Option<JoinHandle<()>>>,
}

impl LiveHandle {
    /// Starts the loop thread. Frames advance every `frame_dt / speed`
    /// seconds of wall time.
    pub fn start(scenario: Scenario, speed: f64) -> Result<Arc<LiveHandle>, SessionError> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(microsteer_core::session::ConfigError::Invalid("speed must be positive".into()).into());
        }
        let session = Session::new(scenario.clone())?;
        let info = SessionInfo {
            protocol: PROTOCOL_VERSION,
            width: scenario.cam.width_px,
            height: scenario.cam.height_px,
            scale: scenario.cam.scale,
            frame_dt: scenario.cam.frame_dt,
            live_params: LIVE_PARAM_KEYS.iter().map(|k| k.to_string()).collect(),
        };
        let (commands, rx) = mpsc::unbounded_channel();
        let (out, _) = broadcast::channel(BROADCAST_CAPACITY);
        let shared = Arc::new(Mutex::new(Shared { scenario: scenario.clone(), snapshots: Vec::new() }));
        let flags = Arc::new(Flags::default());
        let period = Duration::from_secs_f64(scenario.cam.frame_dt / speed);
        let thread = {
            let (out, shared, flags) = (out.clone(), shared.clone(), flags.clone());
            std::thread::Builder::new()
                .name("live-session".into())
                .spawn(move || run_loop(session, rx, out, shared, flags, period))
                .expect("spawn session thread")
        };
        Ok(Arc::new(LiveHandle { commands, out, shared, flags, info, thread: Mutex::new(Some(thread)) }))
    }

    pub fn info(&self) -> &SessionInfo {
        &self.info
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Outgoing> {
        self.out.subscribe()
    }

    /// Queues an event for the next frame boundary.
    pub async fn submit(&self, event: Event) -> Result<EventAck, String> {
        let (tx, rx) = oneshot::channel();
        self.commands.send(Command::Event(event, tx)).map_err(|_| "live session has stopped".to_string())?;
        rx.await.map_err(|_| "live session has stopped".to_string())?
    }

    /// Full camera frame of the latest completed frame.
    pub async fn render(&self) -> Option<Frame> {
        let (tx, rx) = oneshot::channel();
        self.commands.send(Command::Render(tx)).ok()?;
        rx.await.ok()
    }

    pub fn latest(&self) -> Option<StateSnapshot> {
        self.shared.lock().expect("session state lock").snapshots.last().cloned()
    }

    pub fn frames(&self) -> u64 {
        self.shared.lock().expect("session state lock").snapshots.len() as u64
    }

    /// Everything so far as a replayable record.
    pub fn record(&self) -> RunRecord {
        let shared = self.shared.lock().expect("session state lock");
        let mut scenario = shared.scenario.clone();
        let frames = shared.snapshots.len();
        if frames > 0 {
            scenario.duration = frames as f64 * scenario.cam.frame_dt;
        }
        RunRecord { scenario, snapshots: shared.snapshots.clone() }
    }

    /// Claims the single operator slot.
    pub fn try_claim_operator(self: &Arc<Self>) -> Option<OperatorGuard> {
        if self.flags.operator.swap(true, Ordering::AcqRel) {
            None
        } else {
            Some(OperatorGuard(self.clone()))
        }
    }

    pub fn operator_connected(&self) -> bool {
        self.flags.operator.load(Ordering::Acquire)
    }

    pub fn set_frames_wanted(&self, on: bool) {
        if on {
            self.flags.frame_subscribers.fetch_add(1, Ordering::AcqRel);
        } else {
            self.flags.frame_subscribers.fetch_sub(1, Ordering::AcqRel);
        }
    }

    pub fn shutdown(&self) {
        self.flags.stop.store(true, Ordering::Release);
        if let Some(t) = self.thread.lock().expect("thread lock").take() {
            let _ = t.join();
        }
    }
}

impl Drop for LiveHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Releases the operator slot on drop.
pub struct OperatorGuard(Arc<LiveHandle>);

impl Drop for OperatorGuard {
    fn drop(&mut self) {
        self.0.flags.operator.store(false, Ordering::Release);
    }
}

fn run_loop(
    mut session: Session,
    mut commands: mpsc::UnboundedReceiver<Command>,
    out: broadcast::Sender<Outgoing>,
    shared: Arc<Mutex<Shared>>,
    flags: Arc<Flags>,
    period: Duration,
) {
    let mut deadline = Instant::now();
    while !flags.stop.load(Ordering::Acquire) {
        let mut events_changed = false;
        while let Ok(cmd) = commands.try_recv() {
            match cmd {
                Command::Event(event, reply) => {
                    let kind = event.kind().to_string();
                    let result = session
                        .push_event(event)
                        .map(|()| EventAck { event: kind, time: session.boundary_time() })
                        .map_err(|e| e.to_string());
                    events_changed |= result.is_ok();
                    let _ = reply.send(result);
                }
                Command::Render(reply) => {
                    let _ = reply.send(session.render_full());
                }
            }
        }

        let snapshot = Arc::new(session.advance());
        {
            let mut s = shared.lock().expect("session state lock");
            if events_changed {
                s.scenario = session.scenario().clone();
            }
            s.snapshots.push((*snapshot).clone());
        }
        let _ = out.send(Outgoing::Snapshot(snapshot));
        if flags.frame_subscribers.load(Ordering::Acquire) > 0 {
            let _ = out.send(Outgoing::Frame(Arc::new(session.render_full())));
        }

        deadline += period;
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        } else {
            // fell behind; pace from here rather than bursting to catch up
            deadline = now;
        }
    }
}
