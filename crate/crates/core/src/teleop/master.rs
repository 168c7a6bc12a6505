use nalgebra::{UnitQuaternion, Vector3};
use serde::Serialize;

use super::config::{period_us, SessionConfig};
use super::operator::OperatorInput;
use crate::kinematics::{clamp_master_workspace, MASTER_WORKSPACE_HALF_EXTENTS_MM};
use crate::phantom::BodySurface;
use crate::wire::{flags, Message, MessageType, MotionOrder, Packet, Payload, SessionControl};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MasterStats {
    pub orders_sent: u64,
    pub frozen_orders: u64,
    /// Motion ticks at which operator input left the box and was clamped.
    pub clamp_count: u64,
    pub frames_received: u64,
    pub out_of_order_frames: u64,
    pub force_samples_received: u64,
    pub state_reports_received: u64,
    pub max_force_display_n: f64,
}

/// Expert site: virtual probe in the haptic box, order emission and force display.
#[derive(Debug, Clone)]
pub struct Master {
    config: SessionConfig,
    body: BodySurface,
    box_pos: Vector3<f64>,
    wrist: Vector3<f64>,
    pending: OperatorInput,
    started: bool,
    next_motion_us: u64,
    next_heartbeat_us: u64,
    next_display_us: u64,
    next_av_us: u64,
    seq: [u32; 7],
    av_seq: u32,
    last_force_n: f64,
    last_slave_safety: Option<u8>,
    last_frame_seq: Option<u32>,
    stats: MasterStats,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Master {
    pub fn new(
        config: SessionConfig,
        body: BodySurface,
        box_mm: Vector3<f64>,
        wrist_rad: Vector3<f64>,
    ) -> Self {
        let mut m = Self {
            config,
            body,
            box_pos: Vector3::zeros(),
            wrist: Vector3::zeros(),
            pending: OperatorInput::default(),
            started: false,
            next_motion_us: 0,
            next_heartbeat_us: 0,
            next_display_us: 0,
            next_av_us: 0,
            seq: [0; 7],
            av_seq: 0,
            last_force_n: 0.0,
            last_slave_safety: None,
            last_frame_seq: None,
            stats: MasterStats::default(),
        };
        m.box_pos = clamp_master_workspace(&box_mm);
        m.wrist = m.clamp_wrist(wrist_rad);
        m
    }

    /// Period at which [`Master::tick`] must be called.
    pub fn tick_period_us(&self) -> u64 {
        let c = &self.config;
        [
            c.motion_rate_hz,
            c.heartbeat_rate_hz,
            c.force_display_rate_hz,
            c.av_rate_hz,
        ]
        .iter()
        .map(|r| period_us(*r))
        .fold(0, gcd)
    }

    fn clamp_wrist(&self, w: Vector3<f64>) -> Vector3<f64> {
        let l = &self.config.wrist_limits;
        Vector3::new(
            w.x.clamp(-l.roll_rad, l.roll_rad),
            w.y.clamp(-l.pitch_rad, l.pitch_rad),
            w.z.clamp(-l.yaw_rad, l.yaw_rad),
        )
    }

    pub fn box_position(&self) -> Vector3<f64> {
        self.box_pos
    }

    pub fn wrist_angles(&self) -> Vector3<f64> {
        self.wrist
    }

    pub fn stats(&self) -> &MasterStats {
        &self.stats
    }

    pub fn motion_due(&self, now_us: u64) -> bool {
        now_us >= self.next_motion_us
    }

    /// Queue operator input to be integrated at the next motion tick.
    pub fn push_input(&mut self, input: &OperatorInput) {
        self.pending.accumulate(input);
    }

    /// Force shown on the 1-D display, in `[0, F_max]`.
    pub fn force_display(&self) -> f64 {
        self.last_force_n.clamp(0.0, self.config.contact.max_force_n)
    }

    pub fn last_slave_safety(&self) -> Option<u8> {
        self.last_slave_safety
    }

    /// Chart point and fine translation addressed by the current box pose.
    pub fn chart_target(&self) -> (f64, f64, f64) {
        let [hx, hy, hz] = MASTER_WORKSPACE_HALF_EXTENTS_MM;
        let r = &self.config.chart_rect;
        let u = r.u[0] + (self.box_pos.x + hx) / (2.0 * hx) * (r.u[1] - r.u[0]);
        let v = r.v[0] + (self.box_pos.y + hy) / (2.0 * hy) * (r.v[1] - r.v[0]);
        // Pushing down in the box presses the probe into the body.
        let fine_d = -self.box_pos.z / hz * self.config.wrist_limits.fine_travel_mm;
        (u, v, fine_d)
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

    pub fn motion_order(&self, flags: u8) -> MotionOrder {
        let (u, v, fine_d) = self.chart_target();
        let tip = self
            .body
            .rest_point(u, v)
            .expect("chart rectangle lies inside the unit square");
        let q = UnitQuaternion::from_euler_angles(self.wrist.x, self.wrist.y, self.wrist.z);
        MotionOrder {
            tip_mm: [tip.x as f32, tip.y as f32, tip.z as f32],
            orientation: [q.w as f32, q.i as f32, q.j as f32, q.k as f32],
            fine_d_mm: fine_d as f32,
            flags,
        }
    }

    fn integrate(&mut self, frozen: bool) -> u8 {
        let input = std::mem::take(&mut self.pending);
        if frozen {
            return flags::INPUT_FROZEN;
        }
        let wanted = self.box_pos + Vector3::from(input.delta_mm);
        self.box_pos = clamp_master_workspace(&wanted);
        self.wrist = self.clamp_wrist(self.wrist + Vector3::from(input.delta_wrist_rad));
        if self.box_pos != wanted {
            self.stats.clamp_count += 1;
            flags::CLAMPED
        } else {
            0
        }
    }

    /// Advance the master to `now_us`, emitting whatever is due.
    pub fn tick(&mut self, now_us: u64, frozen: bool) -> Vec<Packet> {
        let mut out = Vec::new();
        if !self.started {
            self.started = true;
            out.push(self.message(
                now_us,
                Payload::SessionControl(SessionControl {
                    code: SessionControl::START,
                }),
            ));
        }
        if now_us >= self.next_motion_us {
            let f = self.integrate(frozen);
            if f & flags::INPUT_FROZEN != 0 {
                self.stats.frozen_orders += 1;
            }
            let order = self.motion_order(f);
            out.push(self.message(now_us, Payload::MotionOrder(order)));
            self.stats.orders_sent += 1;
            self.next_motion_us += period_us(self.config.motion_rate_hz);
        }
        if now_us >= self.next_heartbeat_us {
            out.push(self.message(now_us, Payload::Heartbeat));
            self.next_heartbeat_us += period_us(self.config.heartbeat_rate_hz);
        }
        if now_us >= self.next_display_us {
            self.stats.max_force_display_n = self.stats.max_force_display_n.max(self.force_display());
            self.next_display_us += period_us(self.config.force_display_rate_hz);
        }
        if now_us >= self.next_av_us {
            out.push(Packet::AvPlaceholder {
                seq: self.av_seq,
                timestamp_us: now_us,
            });
            self.av_seq += 1;
            self.next_av_us += period_us(self.config.av_rate_hz);
        }
        out
    }

    /// A STOP control message, used when a live session is closed.
    pub fn stop(&mut self, now_us: u64) -> Packet {
        self.message(
            now_us,
            Payload::SessionControl(SessionControl {
                code: SessionControl::STOP,
            }),
        )
    }

    pub fn on_receive(&mut self, msg: &Message) {
        match &msg.payload {
            Payload::UsFrame(_) => {
                self.stats.frames_received += 1;
                if self.last_frame_seq.is_some_and(|s| msg.seq <= s) {
                    self.stats.out_of_order_frames += 1;
                }
                self.last_frame_seq = Some(msg.seq);
            }
            Payload::ForceSample(f) => {
                self.stats.force_samples_received += 1;
                self.last_force_n = f.normal_n as f64;
            }
            Payload::RobotStateReport(r) => {
                self.stats.state_reports_received += 1;
                self.last_slave_safety = Some(r.safety);
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn master() -> Master {
        Master::new(
            SessionConfig::default(),
            BodySurface::default(),
            Vector3::zeros(),
            Vector3::zeros(),
        )
    }

    fn orders(packets: &[Packet]) -> Vec<MotionOrder> {
        packets
            .iter()
            .filter_map(|p| match p {
                Packet::Wire(Message {
                    payload: Payload::MotionOrder(o),
                    ..
                }) => Some(*o),
                _ => None,
            })
            .collect()
    }

    fn run(m: &mut Master, seconds: u64, mut input: impl FnMut(u64) -> OperatorInput) -> Vec<Packet> {
        let p = m.tick_period_us();
        let mut out = Vec::new();
        let mut t = 0;
        while t < seconds * 1_000_000 {
            if m.motion_due(t) {
                m.push_input(&input(t));
            }
            out.extend(m.tick(t, false));
            t += p;
        }
        out
    }

    #[test]
    fn tick_period_is_gcd() {
        assert_eq!(master().tick_period_us(), 10_000);
    }

    #[test]
    fn zero_input_holds_pose() {
        let mut m = master();
        let out = run(&mut m, 1, |_| OperatorInput::default());
        let o = orders(&out);
        assert_eq!(o.len(), 50);
        assert!(o.iter().all(|x| *x == o[0]));
        let hb = out
            .iter()
            .filter(|p| {
                matches!(
                    p,
                    Packet::Wire(Message {
                        payload: Payload::Heartbeat,
                        ..
                    })
                )
            })
            .count();
        assert_eq!(hb, 10);
    }

    #[test]
    fn ramp_is_monotone_until_clamp() {
        let mut m = master();
        let o = orders(&run(&mut m, 3, |_| OperatorInput {
            delta_mm: [1.0, 0.0, 0.0],
            ..OperatorInput::default()
        }));
        let xs: Vec<f32> = o.iter().map(|x| x.tip_mm[0]).collect();
        // first order integrates the first step; box reaches 80 mm at order 80
        for k in 1..80 {
            assert!(xs[k] > xs[k - 1], "k={k}");
        }
        assert!(xs[80..].iter().all(|x| *x == xs[79]));
        assert_eq!(m.box_position().x, 80.0);
        assert!(o[80].flags & flags::CLAMPED != 0);
        assert!(m.stats().clamp_count > 0);
    }

    #[test]
    fn order_count_over_ten_seconds() {
        let mut m = master();
        let o = orders(&run(&mut m, 10, |_| OperatorInput::default()));
        assert_eq!(o.len(), 500);
    }

    #[test]
    fn box_centre_maps_to_apex() {
        let m = master();
        let (u, v, d) = m.chart_target();
        assert!((u - 0.5).abs() < 1e-12 && (v - 0.5).abs() < 1e-12 && d == 0.0);
        let o = m.motion_order(0);
        assert!((o.tip_mm[2] - 110.0).abs() < 1e-4);
        assert_eq!(o.orientation, [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn box_depth_maps_to_fine_travel() {
        let m = Master::new(
            SessionConfig::default(),
            BodySurface::default(),
            Vector3::new(0.0, 0.0, -60.0),
            Vector3::zeros(),
        );
        assert_eq!(m.chart_target().2, 20.0);
        let m = Master::new(
            SessionConfig::default(),
            BodySurface::default(),
            Vector3::new(0.0, 0.0, -6.0),
            Vector3::zeros(),
        );
        assert!((m.chart_target().2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn frozen_input_is_discarded() {
        let mut m = master();
        m.tick(0, false);
        m.push_input(&OperatorInput {
            delta_mm: [5.0, 0.0, 0.0],
            ..OperatorInput::default()
        });
        let o = orders(&m.tick(20_000, true));
        assert_eq!(o[0].flags & flags::INPUT_FROZEN, flags::INPUT_FROZEN);
        assert_eq!(m.box_position().x, 0.0);
    }

    #[test]
    fn display_is_clamped() {
        let mut m = master();
        m.on_receive(&Message {
            seq: 0,
            timestamp_us: 0,
            payload: Payload::ForceSample(crate::wire::ForceSample {
                force_n: [0.0; 3],
                normal_n: 35.0,
            }),
        });
        assert_eq!(m.force_display(), 20.0);
    }
}
