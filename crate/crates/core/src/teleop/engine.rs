//! Discrete-event session loop over a virtual microsecond clock.
//!
//! Events are ordered by `(time, insertion sequence)`, which makes every run a
//! pure function of the setup and seed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::master::{Master, MasterStats};
use super::operator::{OperatorInput, ScriptedOperator};
use super::slave::{ModeTransition, Slave, SlaveStats, TelemetrySample};
use super::{SessionConfig, SessionError, SlaveMode};
use crate::kinematics::StrapRig;
use crate::phantom::{spacing_to_um, BodyPhantom, UsFrame};
use crate::wire::{
    Channel, ChannelProfile, FaultSchedule, LaneId, Message, Packet, Payload, SendOutcome, Site, Trace,
    AUDIO_VIDEO, HAPTIC_ROBOT, US_IMAGES,
};

/// Everything needed to run a session.
#[derive(Debug, Clone)]
pub struct SessionSetup {
    pub phantom: BodyPhantom,
    pub rig: StrapRig,
    pub config: SessionConfig,
    pub profile: ChannelProfile,
    pub faults: FaultSchedule,
    pub duration_s: f64,
    pub seed: u64,
}

/// Source of operator motion.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorProgram {
    Scripted(ScriptedOperator),
    /// Input arrives through [`Session::push_input`].
    Interactive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub seq: u32,
    pub sent_us: u64,
    pub delivered_us: u64,
    pub frame: UsFrame,
}

impl ReceivedFrame {
    pub fn latency_us(&self) -> u64 {
        self.delivered_us - self.sent_us
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionOutcome {
    Completed,
    SafetyAbort { reason: String },
    SolverFailure { message: String },
}

#[derive(Debug, Clone)]
pub struct SessionOutput {
    pub trace: Trace,
    pub frames: Vec<ReceivedFrame>,
    pub transitions: Vec<ModeTransition>,
    pub telemetry: Vec<TelemetrySample>,
    pub master: MasterStats,
    pub slave: SlaveStats,
    pub outcome: SessionOutcome,
    pub duration_us: u64,
    pub crashed_at_us: Option<u64>,
}

#[derive(Debug)]
enum EventKind {
    MasterTick,
    SlaveTick,
    End,
    Deliver { lane: LaneId, to: Site, packet: Packet },
}

#[derive(Debug)]
struct Event {
    t_us: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.t_us, self.seq) == (other.t_us, other.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.t_us, other.seq).cmp(&(self.t_us, self.seq))
    }
}

fn stream_of(packet: &Packet) -> &'static str {
    match packet {
        Packet::AvPlaceholder { .. } => AUDIO_VIDEO,
        Packet::Wire(Message {
            payload: Payload::UsFrame(_),
            ..
        }) => US_IMAGES,
        Packet::Wire(_) => HAPTIC_ROBOT,
    }
}

pub struct Session {
    config: SessionConfig,
    faults: FaultSchedule,
    program: OperatorProgram,
    master: Master,
    slave: Slave,
    channel: Channel,
    queue: BinaryHeap<Event>,
    next_event_seq: u64,
    now_us: u64,
    duration_us: u64,
    master_period_us: u64,
    slave_period_us: u64,
    inbox: OperatorInput,
    master_outbox: Vec<Message>,
    frames: Vec<ReceivedFrame>,
    retain_history: bool,
    crashed_at_us: Option<u64>,
    end_mode: Option<SlaveMode>,
}

impl Session {
    pub fn new(setup: SessionSetup, program: OperatorProgram) -> Result<Self, SessionError> {
        let SessionSetup {
            phantom,
            rig,
            config,
            profile,
            faults,
            duration_s,
            seed,
        } = setup;
        phantom.validate()?;
        rig.validate()?;
        config.validate(&profile)?;
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(super::ConfigError::NotPositive {
                field: "duration_s",
                value: duration_s,
            }
            .into());
        }
        let (box_mm, wrist) = match &program {
            OperatorProgram::Scripted(s) => {
                s.validate()?;
                s.pose_at(0.0)
            }
            OperatorProgram::Interactive => (Vector3::zeros(), Vector3::zeros()),
        };
        let mut channel = Channel::new(profile, seed)?;
        for w in &faults.disruptions {
            channel.add_disruption(*w)?;
        }
        channel.enable_trace();
        let master = Master::new(config.clone(), phantom.body, box_mm, wrist);
        let slave = Slave::new(config.clone(), phantom, rig)?;
        let duration_us = (duration_s * 1e6).round() as u64;
        let mut s = Self {
            master_period_us: master.tick_period_us(),
            slave_period_us: slave.tick_period_us(),
            config,
            faults,
            program,
            master,
            slave,
            channel,
            queue: BinaryHeap::new(),
            next_event_seq: 0,
            now_us: 0,
            duration_us,
            inbox: OperatorInput::default(),
            master_outbox: Vec::new(),
            frames: Vec::new(),
            retain_history: true,
            crashed_at_us: None,
            end_mode: None,
        };
        s.schedule(0, EventKind::MasterTick);
        s.schedule(0, EventKind::SlaveTick);
        s.schedule(duration_us, EventKind::End);
        Ok(s)
    }

    /// Drop traces, telemetry and received frames as they are produced, for
    /// long-running live sessions.
    pub fn discard_history(&mut self) {
        self.retain_history = false;
        self.channel.take_trace();
        self.slave.take_telemetry();
        self.frames.clear();
    }

    fn schedule(&mut self, t_us: u64, kind: EventKind) {
        let seq = self.next_event_seq;
        self.next_event_seq += 1;
        self.queue.push(Event { t_us, seq, kind });
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn duration_us(&self) -> u64 {
        self.duration_us
    }

    pub fn is_finished(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn master(&self) -> &Master {
        &self.master
    }

    pub fn slave(&self) -> &Slave {
        &self.slave
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    /// Queue operator input for the next motion tick (interactive sessions).
    pub fn push_input(&mut self, input: &OperatorInput) {
        self.inbox.accumulate(input);
    }

    /// Messages delivered to the master since the previous call.
    pub fn take_master_inbox(&mut self) -> Vec<Message> {
        std::mem::take(&mut self.master_outbox)
    }

    /// End the session early at `t_us` (no new ticks from then on).
    pub fn request_stop(&mut self, t_us: u64) {
        let t = t_us.max(self.now_us);
        if t < self.duration_us {
            self.duration_us = t;
            self.queue.retain(|e| !matches!(e.kind, EventKind::End));
            self.schedule(t, EventKind::End);
        }
    }

    fn send(&mut self, from: Site, packet: Packet, now_us: u64) {
        let lane = self
            .channel
            .lane(stream_of(&packet), from)
            .expect("streams checked by config validation");
        if let SendOutcome::Scheduled { deliver_at_us, .. } = self.channel.send(lane, &packet, now_us) {
            self.schedule(
                deliver_at_us,
                EventKind::Deliver {
                    lane,
                    to: from.peer(),
                    packet,
                },
            );
        }
    }

    fn master_tick(&mut self, t: u64) {
        let frozen = self.faults.input_frozen(t);
        if self.master.motion_due(t) {
            let input = match &self.program {
                OperatorProgram::Scripted(s) => {
                    let (p, w) = s.pose_at(t as f64 * 1e-6);
                    let dp = p - self.master.box_position();
                    let dw = w - self.master.wrist_angles();
                    OperatorInput {
                        delta_mm: [dp.x, dp.y, dp.z],
                        delta_wrist_rad: [dw.x, dw.y, dw.z],
                    }
                }
                OperatorProgram::Interactive => std::mem::take(&mut self.inbox),
            };
            self.master.push_input(&input);
        }
        for p in self.master.tick(t, frozen) {
            self.send(Site::Master, p, t);
        }
        let next = t + self.master_period_us;
        if next < self.duration_us {
            self.schedule(next, EventKind::MasterTick);
        }
    }

    fn slave_tick(&mut self, t: u64) {
        if self.faults.slave_crashed(t) {
            // The controller dies here; its mode log ends with SHUTDOWN.
            self.crashed_at_us.get_or_insert(t);
            self.slave.shutdown(t);
            return;
        }
        for p in self.slave.tick(t) {
            self.send(Site::Slave, p, t);
        }
        if !self.retain_history {
            self.slave.take_telemetry();
        }
        let next = t + self.slave_period_us;
        if next < self.duration_us && self.slave.mode() != SlaveMode::Shutdown {
            self.schedule(next, EventKind::SlaveTick);
        }
    }

    fn deliver(&mut self, t: u64, lane: LaneId, to: Site, packet: Packet) {
        self.channel.record_delivery(lane, &packet, t);
        let Packet::Wire(msg) = packet else {
            return;
        };
        match to {
            Site::Master => {
                self.master.on_receive(&msg);
                if let Payload::UsFrame(f) = &msg.payload {
                    if self.retain_history {
                        self.frames.push(ReceivedFrame {
                            seq: msg.seq,
                            sent_us: msg.timestamp_us,
                            delivered_us: t,
                            frame: UsFrame {
                                width: f.width,
                                height: f.height,
                                pixel_spacing_um: spacing_to_um(self.config.frame.spacing_mm),
                                pixels: f.pixels.clone(),
                                acquisition_time_us: msg.timestamp_us,
                            },
                        });
                    }
                }
                if !self.retain_history || matches!(self.program, OperatorProgram::Interactive) {
                    self.master_outbox.push(msg);
                }
            }
            Site::Slave => {
                if !self.faults.slave_crashed(t) {
                    self.slave.on_receive(&msg, t);
                }
            }
        }
    }

    fn end(&mut self, t: u64) {
        if self.end_mode.is_some() {
            return;
        }
        self.end_mode = Some(self.slave.mode());
        if !self.faults.slave_crashed(t) {
            self.slave.shutdown(t);
        } else {
            self.crashed_at_us
                .get_or_insert(self.faults.crash_at_us.unwrap_or(t));
        }
    }

    fn step(&mut self) -> bool {
        let Some(ev) = self.queue.pop() else {
            return false;
        };
        self.now_us = ev.t_us;
        match ev.kind {
            EventKind::MasterTick => self.master_tick(ev.t_us),
            EventKind::SlaveTick => self.slave_tick(ev.t_us),
            EventKind::End => self.end(ev.t_us),
            EventKind::Deliver { lane, to, packet } => self.deliver(ev.t_us, lane, to, packet),
        }
        true
    }

    /// Process every event scheduled at or before `t_us`.
    pub fn advance_until(&mut self, t_us: u64) {
        while self.queue.peek().is_some_and(|e| e.t_us <= t_us) {
            self.step();
        }
        self.now_us = self.now_us.max(t_us);
    }

    /// Run to the end, draining messages still in flight at the end time.
    pub fn finish(mut self) -> SessionOutput {
        while self.step() {}
        let outcome = if let Some(e) = self.slave.solver_failure() {
            SessionOutcome::SolverFailure {
                message: e.to_string(),
            }
        } else if let Some(t) = self.crashed_at_us {
            SessionOutcome::SafetyAbort {
                reason: format!("slave crashed at {t} us"),
            }
        } else if self.end_mode == Some(SlaveMode::SafeHold) {
            SessionOutcome::SafetyAbort {
                reason: "session ended in SAFE_HOLD".into(),
            }
        } else {
            SessionOutcome::Completed
        };
        SessionOutput {
            trace: self.channel.take_trace().unwrap_or_default(),
            frames: self.frames,
            transitions: self.slave.transitions().to_vec(),
            telemetry: self.slave.take_telemetry(),
            master: self.master.stats().clone(),
            slave: self.slave.stats().clone(),
            outcome,
            duration_us: self.duration_us,
            crashed_at_us: self.crashed_at_us,
        }
    }
}

/// Run a complete session on the virtual clock.
pub fn run_session(setup: SessionSetup, program: OperatorProgram) -> Result<SessionOutput, SessionError> {
    Ok(Session::new(setup, program)?.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teleop::Waypoint;
    use crate::wire::{preset, Fault, TraceStatus};

    fn setup(duration_s: f64) -> SessionSetup {
        SessionSetup {
            phantom: BodyPhantom::default(),
            rig: StrapRig::default(),
            config: SessionConfig::default(),
            profile: preset("ISDN256").unwrap(),
            faults: FaultSchedule::default(),
            duration_s,
            seed: 1,
        }
    }

    fn hold(x: f64, z: f64) -> OperatorProgram {
        OperatorProgram::Scripted(
            ScriptedOperator::new(vec![Waypoint {
                t_s: 0.0,
                box_mm: [x, 0.0, z],
                wrist_rad: [0.0; 3],
            }])
            .unwrap(),
        )
    }

    #[test]
    fn empty_second_counts() {
        let out = run_session(setup(1.0), hold(0.0, 0.0)).unwrap();
        let sent = |t: &str| out.trace.count(None, t, TraceStatus::Sent);
        assert_eq!(sent("MotionOrder"), 50);
        assert_eq!(sent("Heartbeat"), 10);
        assert_eq!(sent("SessionControl"), 1);
        assert_eq!(sent("AvPlaceholder"), 2);
        assert_eq!(sent("RobotStateReport"), 10);
        assert_eq!(sent("USFrame"), 4);
        assert_eq!(sent("ForceSample"), 25);
        assert_eq!(
            out.trace
                .records
                .iter()
                .filter(|r| r.status == TraceStatus::Dropped)
                .count(),
            0
        );
        assert_eq!(out.outcome, SessionOutcome::Completed);
        let modes: Vec<_> = out.transitions.iter().map(|t| t.to).collect();
        assert_eq!(
            modes,
            vec![
                SlaveMode::Init,
                SlaveMode::Ready,
                SlaveMode::Tracking,
                SlaveMode::Shutdown
            ]
        );
        // START: 19 bytes at 64 kb/s plus 20 ms
        assert_eq!(out.transitions[2].t_us, 22_375);
    }

    #[test]
    fn frame_latency_is_serialisation_plus_propagation() {
        let out = run_session(setup(2.0), hold(0.0, -6.0)).unwrap();
        // 3942 bytes at 128 kb/s = 246375 us, plus 20 ms
        for f in &out.frames {
            assert_eq!(f.latency_us(), 266_375);
        }
        assert_eq!(out.frames.len(), 8);
    }

    #[test]
    fn deterministic() {
        let a = run_session(setup(3.0), hold(10.0, -6.0)).unwrap();
        let b = run_session(setup(3.0), hold(10.0, -6.0)).unwrap();
        assert_eq!(a.trace.to_tsv(), b.trace.to_tsv());
        assert_eq!(a.frames, b.frames);
    }

    #[test]
    fn crash_silences_slave() {
        let mut s = setup(3.0);
        s.faults.inject_fault(Fault::SlaveCrash { at_s: 1.5 }).unwrap();
        let out = run_session(s, hold(0.0, 0.0)).unwrap();
        let lanes = &out.trace.lanes;
        for r in &out.trace.records {
            let from_slave = lanes[r.lane.0] == US_IMAGES || lanes[r.lane.0].ends_with("s2m");
            if from_slave && r.status != TraceStatus::Delivered {
                assert!(r.t_us < 1_500_000, "{r:?}");
            }
        }
        let (last, rest) = out.transitions.split_last().unwrap();
        assert_eq!((last.t_us, last.to), (1_500_000, SlaveMode::Shutdown));
        assert!(rest.iter().all(|t| t.t_us < 1_500_000));
        assert!(matches!(out.outcome, SessionOutcome::SafetyAbort { .. }));
    }

    #[test]
    fn interactive_stepping() {
        let mut s = Session::new(setup(10.0), OperatorProgram::Interactive).unwrap();
        s.advance_until(500_000);
        assert_eq!(s.slave().mode(), SlaveMode::Tracking);
        let inbox = s.take_master_inbox();
        assert!(inbox
            .iter()
            .any(|m| matches!(m.payload, Payload::RobotStateReport(_))));
        s.push_input(&OperatorInput {
            delta_mm: [5.0, 0.0, 0.0],
            ..OperatorInput::default()
        });
        s.advance_until(600_000);
        assert_eq!(s.master().box_position().x, 5.0);
        s.request_stop(700_000);
        s.advance_until(1_000_000);
        assert!(s.is_finished());
        let out = s.finish();
        assert_eq!(out.duration_us, 700_000);
        assert_eq!(out.transitions.last().unwrap().to, SlaveMode::Shutdown);
    }
}
