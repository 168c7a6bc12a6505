use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::Serialize;

use super::config::{period_us, SessionConfig};
use super::{render_force_1d, SlaveMode, SAFETY_CLAMP_ACTIVE};
use crate::kinematics::{
    contact_force, forward_kinematics, inverse_kinematics, wrist_forward, wrist_from_quaternion,
    KinematicsError, StrapLengths, StrapRig, WristState,
};
use crate::phantom::{BodyPhantom, ChartSurface, ProbePose, SliceError};
use crate::wire::{
    ForceSample, FramePayload, Message, MessageType, MotionOrder, Packet, Payload, RobotStateReport,
    SessionControl,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeTransition {
    pub t_us: u64,
    pub from: Option<SlaveMode>,
    pub to: SlaveMode,
}

/// Per servo tick record of the slave controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetrySample {
    pub t_us: u64,
    pub mode: SlaveMode,
    /// Commanded translational speed of the strap stage.
    pub chart_speed_mm_s: f64,
    pub fine_d_mm: f64,
    pub normal_force_n: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SlaveStats {
    pub safe_hold_entries: u64,
    pub ik_clamps: u64,
    pub frames_sent: u64,
    pub no_contact_frames: u64,
    pub max_normal_force_n: f64,
    pub orders_received: u64,
}

/// Patient site: strap robot, wrist, probe and the safety watchdog.
#[derive(Debug, Clone)]
pub struct Slave {
    config: SessionConfig,
    phantom: BodyPhantom,
    rig: StrapRig,
    mode: SlaveMode,
    transitions: Vec<ModeTransition>,
    chart: (f64, f64),
    wrist: WristState,
    target_chart: (f64, f64),
    target_wrist: WristState,
    clamp_active: bool,
    lengths: StrapLengths,
    fk_estimate: (f64, f64),
    last_rx_us: u64,
    order_since_hold: bool,
    anchor_pending: bool,
    next_state_us: u64,
    next_frame_us: Option<u64>,
    next_force_us: Option<u64>,
    next_av_us: u64,
    seq: [u32; 7],
    av_seq: u32,
    force: Vector3<f64>,
    normal_force_n: f64,
    solver_failure: Option<KinematicsError>,
    stats: SlaveStats,
    telemetry: Vec<TelemetrySample>,
}

impl Slave {
    /// Boot the slave at `t = 0` with the probe resting at the centre of the
    /// chart rectangle, and bring it to READY.
    pub fn new(config: SessionConfig, phantom: BodyPhantom, rig: StrapRig) -> Result<Self, KinematicsError> {
        let r = &config.chart_rect;
        let chart = ((r.u[0] + r.u[1]) / 2.0, (r.v[0] + r.v[1]) / 2.0);
        let lengths = inverse_kinematics(chart, 0.0, &rig, &phantom.body)?;
        let mut s = Self {
            config,
            phantom,
            rig,
            mode: SlaveMode::Init,
            transitions: vec![ModeTransition {
                t_us: 0,
                from: None,
                to: SlaveMode::Init,
            }],
            chart,
            wrist: WristState::default(),
            target_chart: chart,
            target_wrist: WristState::default(),
            clamp_active: false,
            lengths,
            fk_estimate: chart,
            last_rx_us: 0,
            order_since_hold: false,
            anchor_pending: false,
            next_state_us: 0,
            next_frame_us: None,
            next_force_us: None,
            next_av_us: 0,
            seq: [0; 7],
            av_seq: 0,
            force: Vector3::zeros(),
            normal_force_n: 0.0,
            solver_failure: None,
            stats: SlaveStats::default(),
            telemetry: Vec::new(),
        };
        s.enter(SlaveMode::Ready, 0);
        Ok(s)
    }

    pub fn mode(&self) -> SlaveMode {
        self.mode
    }

    pub fn transitions(&self) -> &[ModeTransition] {
        &self.transitions
    }

    pub fn stats(&self) -> &SlaveStats {
        &self.stats
    }

    pub fn telemetry(&self) -> &[TelemetrySample] {
        &self.telemetry
    }

    pub fn take_telemetry(&mut self) -> Vec<TelemetrySample> {
        std::mem::take(&mut self.telemetry)
    }

    pub fn solver_failure(&self) -> Option<&KinematicsError> {
        self.solver_failure.as_ref()
    }

    pub fn chart(&self) -> (f64, f64) {
        self.chart
    }

    pub fn target_chart(&self) -> (f64, f64) {
        self.target_chart
    }

    pub fn wrist(&self) -> WristState {
        self.wrist
    }

    pub fn strap_lengths(&self) -> StrapLengths {
        self.lengths
    }

    pub fn normal_force_n(&self) -> f64 {
        self.normal_force_n
    }

    pub fn tick_period_us(&self) -> u64 {
        period_us(self.config.servo_rate_hz)
    }

    fn enter(&mut self, to: SlaveMode, t_us: u64) {
        debug_assert!(self.mode.can_enter(to), "{:?} -> {:?}", self.mode, to);
        self.transitions.push(ModeTransition {
            t_us,
            from: Some(self.mode),
            to,
        });
        match to {
            SlaveMode::SafeHold => {
                self.stats.safe_hold_entries += 1;
                self.order_since_hold = false;
            }
            SlaveMode::Tracking if self.next_frame_us.is_none() => self.anchor_pending = true,
            _ => {}
        }
        self.mode = to;
    }

    /// Stop the robot for good (end of session or STOP request).
    pub fn shutdown(&mut self, t_us: u64) {
        if self.mode != SlaveMode::Shutdown {
            self.enter(SlaveMode::Shutdown, t_us);
        }
    }

    fn next_seq(&mut self, t: MessageType) -> u32 {
        let s = &mut self.seq[t as usize];
        let out = *s;
        *s = s.wrapping_add(1);
        out
    }

    fn message(&mut self, now_us: u64, payload: Payload) -> Packet {
        Packet::Wire(Message {
            seq: self.next_seq(payload.msg_type()),
            timestamp_us: now_us,
            payload,
        })
    }

    pub fn on_receive(&mut self, msg: &Message, now_us: u64) {
        if self.mode == SlaveMode::Shutdown {
            return;
        }
        match &msg.payload {
            Payload::SessionControl(c) if c.code == SessionControl::START => {
                self.last_rx_us = now_us;
                if self.mode == SlaveMode::Ready {
                    self.enter(SlaveMode::Tracking, now_us);
                }
            }
            Payload::SessionControl(c) if c.code == SessionControl::STOP => self.shutdown(now_us),
            Payload::Heartbeat => self.last_rx_us = now_us,
            Payload::MotionOrder(o) => {
                self.last_rx_us = now_us;
                self.stats.orders_received += 1;
                if self.mode == SlaveMode::SafeHold {
                    self.order_since_hold = true;
                }
                self.accept_order(o, now_us as f64 * 1e-6);
            }
            _ => {}
        }
    }

    fn accept_order(&mut self, o: &MotionOrder, t: f64) {
        let tip = Vector3::new(o.tip_mm[0] as f64, o.tip_mm[1] as f64, o.tip_mm[2] as f64);
        let Some(target) = self.phantom.body.rest_chart_of(&tip) else {
            return;
        };
        let [w, x, y, z] = o.orientation.map(|c| c as f64);
        let q = Quaternion::new(w, x, y, z);
        if q.norm() > 0.0 && q.coords.iter().all(|c| c.is_finite()) {
            let ws = wrist_from_quaternion(&UnitQuaternion::from_quaternion(q), o.fine_d_mm as f64);
            self.target_wrist = self.config.wrist_limits.clamp(&ws);
        }
        if inverse_kinematics(target, t, &self.rig, &self.phantom.body).is_ok() {
            self.target_chart = target;
            self.clamp_active = false;
            return;
        }
        // Largest feasible fraction of the way from the current point.
        let (a, b) = (self.chart, target);
        let at = |s: f64| (a.0 + (b.0 - a.0) * s, a.1 + (b.1 - a.1) * s);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if inverse_kinematics(at(mid), t, &self.rig, &self.phantom.body).is_ok() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.target_chart = at(lo);
        self.clamp_active = true;
        self.stats.ik_clamps += 1;
    }

    fn rest_distance(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let body = &self.phantom.body;
        match (body.rest_point(a.0, a.1), body.rest_point(b.0, b.1)) {
            (Ok(p), Ok(q)) => (p - q).norm(),
            _ => f64::INFINITY,
        }
    }

    fn servo_tracking(&mut self, dt: f64) -> f64 {
        let alpha = 1.0 - (-dt / (self.config.servo_time_constant_ms * 1e-3)).exp();
        let cap = self.config.max_probe_speed_mm_s * dt;
        let mut step = (
            (self.target_chart.0 - self.chart.0) * alpha,
            (self.target_chart.1 - self.chart.1) * alpha,
        );
        let mut next = (self.chart.0 + step.0, self.chart.1 + step.1);
        let mut chord = self.rest_distance(self.chart, next);
        // The chart is curved, so rescale until the chord respects the cap.
        for _ in 0..8 {
            if chord <= cap {
                break;
            }
            let k = cap / chord * (1.0 - 1e-9);
            step = (step.0 * k, step.1 * k);
            next = (self.chart.0 + step.0, self.chart.1 + step.1);
            chord = self.rest_distance(self.chart, next);
        }
        if chord > cap {
            next = self.chart;
            chord = 0.0;
        }
        self.chart = (next.0.clamp(0.0, 1.0), next.1.clamp(0.0, 1.0));

        let tw = self.target_wrist;
        let w = &mut self.wrist;
        w.roll += (tw.roll - w.roll) * alpha;
        w.pitch += (tw.pitch - w.pitch) * alpha;
        w.yaw += (tw.yaw - w.yaw) * alpha;
        w.fine_d += ((tw.fine_d - w.fine_d) * alpha).clamp(-cap, cap);
        chord / dt
    }

    pub fn pose_at(&self, t: f64) -> Result<ProbePose, KinematicsError> {
        let body = &self.phantom.body;
        let base = body.point(self.chart.0, self.chart.1, t)?;
        let normal = body.normal(self.chart.0, self.chart.1, t)?;
        let w = self.config.wrist_limits.clamp(&self.wrist);
        wrist_forward(&base, &normal, &w, &self.config.wrist_limits)
    }

    fn update_contact(&mut self, t: f64) -> Result<ProbePose, KinematicsError> {
        let pose = self.pose_at(t)?;
        let body = &self.phantom.body;
        self.force = contact_force(&pose, body, t, &self.config.contact);
        let normal = body.normal(self.chart.0, self.chart.1, t)?;
        self.normal_force_n = render_force_1d(&self.force, &normal)?;
        self.stats.max_normal_force_n = self.stats.max_normal_force_n.max(self.normal_force_n);
        Ok(pose)
    }

    /// One servo period ending at `now_us`.
    pub fn tick(&mut self, now_us: u64) -> Vec<Packet> {
        let mut out = Vec::new();
        if self.mode == SlaveMode::Shutdown {
            return out;
        }
        let dt = self.tick_period_us() as f64 * 1e-6;
        let t = now_us as f64 * 1e-6;
        let timeout_us = (self.config.watchdog_timeout_ms * 1e3).round() as u64;
        if self.mode == SlaveMode::Tracking && now_us.saturating_sub(self.last_rx_us) > timeout_us {
            self.enter(SlaveMode::SafeHold, now_us);
        }

        let mut speed = 0.0;
        match self.mode {
            SlaveMode::Tracking => speed = self.servo_tracking(dt),
            SlaveMode::SafeHold if self.normal_force_n > self.config.release_force_n => {
                let travel = self.config.wrist_limits.fine_travel_mm;
                self.wrist.fine_d = (self.wrist.fine_d - self.config.retract_speed_mm_s * dt).max(-travel);
            }
            _ => {}
        }
        if let Ok(l) = inverse_kinematics(self.chart, t, &self.rig, &self.phantom.body) {
            self.lengths = l;
        }
        let pose = match self.update_contact(t) {
            Ok(p) => p,
            Err(e) => {
                self.solver_failure = Some(e);
                self.shutdown(now_us);
                return out;
            }
        };
        if self.mode == SlaveMode::SafeHold
            && self.order_since_hold
            && self.normal_force_n <= self.config.release_force_n
        {
            self.enter(SlaveMode::Tracking, now_us);
        }

        if self.anchor_pending {
            self.anchor_pending = false;
            self.next_frame_us = Some(now_us);
            self.next_force_us = Some(now_us);
        }
        if now_us >= self.next_state_us {
            match forward_kinematics(&self.lengths, t, &self.rig, &self.phantom.body, self.fk_estimate) {
                Ok(uv) => self.fk_estimate = uv,
                Err(e) => {
                    self.solver_failure = Some(e);
                    self.shutdown(now_us);
                    return out;
                }
            }
            let safety = self.mode.code() | if self.clamp_active { SAFETY_CLAMP_ACTIVE } else { 0 };
            let report = RobotStateReport {
                straps_mm: self.lengths.0.map(|l| l as f32),
                wrist_rad: [
                    self.wrist.roll as f32,
                    self.wrist.pitch as f32,
                    self.wrist.yaw as f32,
                ],
                fine_d_mm: self.wrist.fine_d as f32,
                safety,
            };
            out.push(self.message(now_us, Payload::RobotStateReport(report)));
            self.next_state_us += period_us(self.config.state_rate_hz);
        }
        if let Some(due) = self.next_force_us.filter(|d| now_us >= *d) {
            let sample = ForceSample {
                force_n: [self.force.x as f32, self.force.y as f32, self.force.z as f32],
                normal_n: self.normal_force_n as f32,
            };
            out.push(self.message(now_us, Payload::ForceSample(sample)));
            self.next_force_us = Some(due + period_us(self.config.force_rate_hz));
        }
        if let Some(due) = self.next_frame_us.filter(|d| now_us >= *d) {
            let frame = match self.phantom.extract_slice(&pose, self.config.frame, now_us) {
                Ok(f) => f,
                Err(SliceError::NoContact { blank, .. }) => {
                    self.stats.no_contact_frames += 1;
                    blank
                }
                Err(e) => unreachable!("frame geometry validated with the config: {e}"),
            };
            let payload = Payload::UsFrame(FramePayload {
                width: frame.width,
                height: frame.height,
                pixels: frame.pixels,
            });
            out.push(self.message(now_us, payload));
            self.stats.frames_sent += 1;
            self.next_frame_us = Some(due + period_us(self.config.frame_rate_hz));
        }
        if now_us >= self.next_av_us {
            out.push(Packet::AvPlaceholder {
                seq: self.av_seq,
                timestamp_us: now_us,
            });
            self.av_seq += 1;
            self.next_av_us += period_us(self.config.av_rate_hz);
        }

        self.telemetry.push(TelemetrySample {
            t_us: now_us,
            mode: self.mode,
            chart_speed_mm_s: speed,
            fine_d_mm: self.wrist.fine_d,
            normal_force_n: self.normal_force_n,
        });
        out
    }
}
