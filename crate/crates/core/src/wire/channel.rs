//! Deterministic link emulator: per-lane serialisation, latency, jitter and
//! disruption windows on a virtual microsecond clock.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::profile::{validate_windows, ChannelProfile, Direction, Window};
use super::trace::{Trace, TraceStatus};
use super::{ChannelError, Message};

/// Transmitting end of a lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    Master,
    Slave,
}

impl Site {
    pub fn peer(self) -> Site {
        match self {
            Site::Master => Site::Slave,
            Site::Slave => Site::Master,
        }
    }
}

/// Size of the placeholder packets that occupy the audio-video reservation.
pub const AV_PLACEHOLDER_BYTES: usize = 100;

/// Anything carried by the link.
#[derive(Debug, Clone, PartialEq)]
pub enum Packet {
    Wire(Message),
    AvPlaceholder { seq: u32, timestamp_us: u64 },
}

impl Packet {
    pub fn size_bytes(&self) -> usize {
        match self {
            Packet::Wire(m) => m.encoded_len(),
            Packet::AvPlaceholder { .. } => AV_PLACEHOLDER_BYTES,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Packet::Wire(m) => m.msg_type().name(),
            Packet::AvPlaceholder { .. } => "AvPlaceholder",
        }
    }

    pub fn seq(&self) -> u32 {
        match self {
            Packet::Wire(m) => m.seq,
            Packet::AvPlaceholder { seq, .. } => *seq,
        }
    }
}

/// Index of a lane inside a [`Channel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LaneId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    pub label: String,
    pub stream: String,
    pub from: Site,
    pub budget_bps: u64,
    pub busy_until_us: u64,
    pub last_delivery_us: u64,
    window_start_us: u64,
    pub bytes_sent_window: u64,
}

impl StreamState {
    fn account(&mut self, start_us: u64, bytes: usize) {
        if start_us >= self.window_start_us + 1_000_000 {
            self.window_start_us = start_us - start_us % 1_000_000;
            self.bytes_sent_window = 0;
        }
        self.bytes_sent_window += bytes as u64;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Scheduled { lane: LaneId, deliver_at_us: u64 },
    Dropped { lane: LaneId },
}

/// Serialisation time of `bytes` on a lane, rounded up to whole microseconds.
pub fn transmission_delay_us(bytes: usize, budget_bps: u64) -> u64 {
    let bits = bytes as u128 * 8 * 1_000_000;
    bits.div_ceil(budget_bps as u128) as u64
}

pub struct Channel {
    profile: ChannelProfile,
    lanes: Vec<StreamState>,
    windows: Vec<Window>,
    latency_us: u64,
    jitter_us: u64,
    rng: ChaCha8Rng,
    trace: Option<Trace>,
}

impl Channel {
    pub fn new(profile: ChannelProfile, seed: u64) -> Result<Self, ChannelError> {
        profile.validate()?;
        let mut lanes = Vec::new();
        for s in &profile.streams {
            let sites: &[Site] = match s.direction {
                Direction::MasterToSlave => &[Site::Master],
                Direction::SlaveToMaster => &[Site::Slave],
                Direction::Duplex => &[Site::Master, Site::Slave],
            };
            for &from in sites {
                let label = match s.direction {
                    Direction::Duplex => {
                        format!("{}/{}", s.name, if from == Site::Master { "m2s" } else { "s2m" })
                    }
                    _ => s.name.clone(),
                };
                lanes.push(StreamState {
                    label,
                    stream: s.name.clone(),
                    from,
                    budget_bps: s.budget_bps,
                    busy_until_us: 0,
                    last_delivery_us: 0,
                    window_start_us: 0,
                    bytes_sent_window: 0,
                });
            }
        }
        let latency_us = (profile.latency_ms * 1000.0).round() as u64;
        let jitter_us = (profile.jitter_ms * 1000.0).round() as u64;
        Ok(Self {
            windows: profile.disruption_windows.clone(),
            profile,
            lanes,
            latency_us,
            jitter_us,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace: None,
        })
    }

    /// Start recording SENT/DELIVERED/DROPPED events.
    pub fn enable_trace(&mut self) {
        let labels = self.lanes.iter().map(|l| l.label.clone()).collect();
        self.trace = Some(Trace::new(labels));
    }

    pub fn trace(&self) -> Option<&Trace> {
        self.trace.as_ref()
    }

    pub fn take_trace(&mut self) -> Option<Trace> {
        self.trace.take()
    }

    pub fn profile(&self) -> &ChannelProfile {
        &self.profile
    }

    pub fn lanes(&self) -> &[StreamState] {
        &self.lanes
    }

    pub fn disruption_windows(&self) -> &[Window] {
        &self.windows
    }

    /// Add a disruption window; it must not overlap any existing one.
    pub fn add_disruption(&mut self, w: Window) -> Result<(), ChannelError> {
        let mut all = self.windows.clone();
        all.push(w);
        all.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        validate_windows(&all)?;
        self.windows = all;
        Ok(())
    }

    /// Lane carrying `stream` in the direction away from `from`.
    pub fn lane(&self, stream: &str, from: Site) -> Result<LaneId, ChannelError> {
        self.lanes
            .iter()
            .position(|l| l.stream == stream && l.from == from)
            .map(LaneId)
            .ok_or_else(|| ChannelError::NoSuchStream(format!("{stream} from {from:?}")))
    }

    /// Queue a packet of `size_bytes` on a lane at `now_us`.
    pub fn send_bytes(&mut self, lane: LaneId, size_bytes: usize, now_us: u64) -> SendOutcome {
        let jitter = if self.jitter_us > 0 {
            self.rng.random_range(0..=self.jitter_us)
        } else {
            0
        };
        let latency = self.latency_us;
        let st = &mut self.lanes[lane.0];
        let tx = transmission_delay_us(size_bytes, st.budget_bps);
        let start = now_us.max(st.busy_until_us);
        // Jitter may not reorder a lane nor compress its spacing below the
        // serialisation time.
        let delivery = (start + tx + latency + jitter).max(st.last_delivery_us + tx);
        st.busy_until_us = start + tx;
        st.account(start, size_bytes);
        if self.windows.iter().any(|w| w.intersects_us(start, delivery)) {
            SendOutcome::Dropped { lane }
        } else {
            st.last_delivery_us = delivery;
            SendOutcome::Scheduled {
                lane,
                deliver_at_us: delivery,
            }
        }
    }

    /// Send a packet and record the event in the trace if enabled.
    pub fn send(&mut self, lane: LaneId, packet: &Packet, now_us: u64) -> SendOutcome {
        let out = self.send_bytes(lane, packet.size_bytes(), now_us);
        if let Some(tr) = &mut self.trace {
            let status = match out {
                SendOutcome::Scheduled { .. } => TraceStatus::Sent,
                SendOutcome::Dropped { .. } => TraceStatus::Dropped,
            };
            tr.record(now_us, lane, packet, status);
        }
        out
    }

    /// Record a delivery at `t_us` (called by the event loop).
    pub fn record_delivery(&mut self, lane: LaneId, packet: &Packet, t_us: u64) {
        if let Some(tr) = &mut self.trace {
            tr.record(t_us, lane, packet, TraceStatus::Delivered);
        }
    }

    /// Convenience form addressed by stream name.
    pub fn channel_send(
        &mut self,
        stream: &str,
        from: Site,
        m: &Message,
        now_us: u64,
    ) -> Result<SendOutcome, ChannelError> {
        let lane = self.lane(stream, from)?;
        Ok(self.send(lane, &Packet::Wire(m.clone()), now_us))
    }
}

/// Scheduled failures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Fault {
    LinkDisruption { start_s: f64, end_s: f64 },
    MasterInputFreeze { start_s: f64, end_s: f64 },
    SlaveCrash { at_s: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaultSchedule {
    pub disruptions: Vec<Window>,
    pub freezes: Vec<Window>,
    pub crash_at_us: Option<u64>,
}

fn insert_window(list: &mut Vec<Window>, w: Window) -> Result<(), ChannelError> {
    let mut all = list.clone();
    all.push(w);
    all.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    validate_windows(&all)?;
    *list = all;
    Ok(())
}

impl FaultSchedule {
    pub fn from_faults(faults: &[Fault]) -> Result<Self, ChannelError> {
        let mut s = Self::default();
        for f in faults {
            s.inject_fault(*f)?;
        }
        Ok(s)
    }

    pub fn inject_fault(&mut self, fault: Fault) -> Result<(), ChannelError> {
        match fault {
            Fault::LinkDisruption { start_s, end_s } => {
                insert_window(&mut self.disruptions, Window { start_s, end_s })
            }
            Fault::MasterInputFreeze { start_s, end_s } => {
                insert_window(&mut self.freezes, Window { start_s, end_s })
            }
            Fault::SlaveCrash { at_s } => {
                if !(at_s.is_finite() && at_s >= 0.0) {
                    return Err(ChannelError::InvalidSchedule(format!("crash time {at_s}")));
                }
                if self.crash_at_us.is_some() {
                    return Err(ChannelError::InvalidSchedule("more than one slave crash".into()));
                }
                self.crash_at_us = Some(super::profile::secs_to_us(at_s));
                Ok(())
            }
        }
    }

    pub fn input_frozen(&self, t_us: u64) -> bool {
        self.freezes.iter().any(|w| w.contains_us(t_us))
    }

    pub fn slave_crashed(&self, t_us: u64) -> bool {
        self.crash_at_us.is_some_and(|c| t_us >= c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::profile::{preset, StreamSpec, HAPTIC_ROBOT, US_IMAGES};
    use crate::wire::{FramePayload, Payload};

    fn single(budget: u64, latency_ms: f64) -> ChannelProfile {
        ChannelProfile {
            name: "test".into(),
            link_total_bps: budget,
            streams: vec![StreamSpec {
                name: "s".into(),
                budget_bps: budget,
                direction: Direction::MasterToSlave,
            }],
            latency_ms,
            jitter_ms: 0.0,
            disruption_windows: vec![],
        }
    }

    fn heartbeat(seq: u32) -> Message {
        Message {
            seq,
            timestamp_us: 0,
            payload: Payload::Heartbeat,
        }
    }

    #[test]
    fn four_kilobyte_frame_takes_quarter_second() {
        let mut ch = Channel::new(single(128_000, 0.0), 0).unwrap();
        let lane = ch.lane("s", Site::Master).unwrap();
        let out = ch.send_bytes(lane, 4000, 1_000);
        // 32000 bits / 128000 bit/s
        assert_eq!(
            out,
            SendOutcome::Scheduled {
                lane,
                deliver_at_us: 1_000 + 250_000
            }
        );
    }

    #[test]
    fn heartbeat_on_haptic_lane() {
        let mut ch = Channel::new(single(64_000, 30.0), 0).unwrap();
        let out = ch.channel_send("s", Site::Master, &heartbeat(0), 500).unwrap();
        // 144 bits / 64000 bit/s = 2250 us
        assert!(
            matches!(out, SendOutcome::Scheduled { deliver_at_us, .. } if deliver_at_us == 500 + 2_250 + 30_000)
        );
    }

    #[test]
    fn back_to_back_messages_queue() {
        let mut ch = Channel::new(single(64_000, 0.0), 0).unwrap();
        let lane = ch.lane("s", Site::Master).unwrap();
        let a = ch.send_bytes(lane, 18, 0);
        let b = ch.send_bytes(lane, 18, 0);
        assert!(matches!(
            a,
            SendOutcome::Scheduled {
                deliver_at_us: 2_250,
                ..
            }
        ));
        assert!(matches!(
            b,
            SendOutcome::Scheduled {
                deliver_at_us: 4_500,
                ..
            }
        ));
    }

    #[test]
    fn unknown_stream() {
        let mut ch = Channel::new(preset("ISDN256").unwrap(), 0).unwrap();
        assert!(matches!(
            ch.channel_send("video", Site::Master, &heartbeat(0), 0),
            Err(ChannelError::NoSuchStream(_))
        ));
        // images only flow slave to master
        assert!(ch.lane(US_IMAGES, Site::Master).is_err());
        assert!(ch.lane(HAPTIC_ROBOT, Site::Master).is_ok());
        assert!(ch.lane(HAPTIC_ROBOT, Site::Slave).is_ok());
    }

    #[test]
    fn lan_limit_is_near_latency() {
        let mut ch = Channel::new(preset("LAN100M").unwrap(), 0).unwrap();
        let out = ch
            .channel_send(HAPTIC_ROBOT, Site::Master, &heartbeat(0), 0)
            .unwrap();
        let SendOutcome::Scheduled { deliver_at_us, .. } = out else {
            panic!()
        };
        assert!(deliver_at_us <= 1_000 + 3, "{deliver_at_us}");
    }

    #[test]
    fn disruption_drops() {
        let mut p = single(64_000, 20.0);
        p.disruption_windows = vec![Window {
            start_s: 10.0,
            end_s: 12.0,
        }];
        let mut ch = Channel::new(p, 0).unwrap();
        let lane = ch.lane("s", Site::Master).unwrap();
        for k in 0..400 {
            let now = 9_000_000 + k * 10_000;
            let out = ch.send_bytes(lane, 18, now);
            let inside = (10_000_000..=12_000_000).contains(&now);
            if inside {
                assert!(matches!(out, SendOutcome::Dropped { .. }));
            }
            if let SendOutcome::Scheduled { deliver_at_us, .. } = out {
                assert!(!(10_000_000..=12_000_000).contains(&deliver_at_us));
            }
        }
    }

    #[test]
    fn in_flight_message_crossing_window_is_dropped() {
        let mut p = single(128_000, 20.0);
        p.disruption_windows = vec![Window {
            start_s: 0.1,
            end_s: 0.2,
        }];
        let mut ch = Channel::new(p, 0).unwrap();
        let lane = ch.lane("s", Site::Master).unwrap();
        assert!(matches!(
            ch.send_bytes(lane, 4000, 0),
            SendOutcome::Dropped { .. }
        ));
    }

    #[test]
    fn jitter_is_seeded_and_fifo() {
        let mut p = single(64_000, 20.0);
        p.jitter_ms = 15.0;
        let run = |seed| {
            let mut ch = Channel::new(p.clone(), seed).unwrap();
            let lane = ch.lane("s", Site::Master).unwrap();
            (0..500)
                .map(|k| match ch.send_bytes(lane, 51, k * 2_000) {
                    SendOutcome::Scheduled { deliver_at_us, .. } => deliver_at_us,
                    SendOutcome::Dropped { .. } => unreachable!(),
                })
                .collect::<Vec<_>>()
        };
        let a = run(3);
        assert_eq!(a, run(3));
        assert_ne!(a, run(4));
        assert!(a.windows(2).all(|w| w[1] > w[0]));
        for (k, d) in a.iter().enumerate() {
            let send = k as u64 * 2_000;
            assert!(*d >= send + 20_000 + 6_375);
        }
    }

    #[test]
    fn frame_packet_size() {
        let f = Packet::Wire(Message {
            seq: 0,
            timestamp_us: 0,
            payload: Payload::UsFrame(FramePayload {
                width: 56,
                height: 70,
                pixels: vec![1; 56 * 70],
            }),
        });
        assert_eq!(f.size_bytes(), 18 + 4 + 3920);
        assert_eq!(f.type_name(), "USFrame");
    }

    #[test]
    fn fault_schedule() {
        let mut s = FaultSchedule::default();
        s.inject_fault(Fault::LinkDisruption {
            start_s: 10.0,
            end_s: 12.0,
        })
        .unwrap();
        assert!(matches!(
            s.inject_fault(Fault::LinkDisruption {
                start_s: 11.0,
                end_s: 13.0
            }),
            Err(ChannelError::InvalidSchedule(_))
        ));
        s.inject_fault(Fault::MasterInputFreeze {
            start_s: 5.0,
            end_s: 6.0,
        })
        .unwrap();
        assert!(s.input_frozen(5_500_000));
        assert!(!s.input_frozen(6_000_001));
        s.inject_fault(Fault::SlaveCrash { at_s: 8.0 }).unwrap();
        assert!(s.inject_fault(Fault::SlaveCrash { at_s: 9.0 }).is_err());
        assert!(s.slave_crashed(8_000_000) && !s.slave_crashed(7_999_999));
    }

    #[test]
    fn channel_rejects_overlapping_injected_window() {
        let mut p = single(64_000, 0.0);
        p.disruption_windows = vec![Window {
            start_s: 1.0,
            end_s: 2.0,
        }];
        let mut ch = Channel::new(p, 0).unwrap();
        assert!(ch
            .add_disruption(Window {
                start_s: 1.5,
                end_s: 3.0
            })
            .is_err());
        ch.add_disruption(Window {
            start_s: 0.2,
            end_s: 0.5,
        })
        .unwrap();
        assert_eq!(ch.disruption_windows()[0].start_s, 0.2);
    }
}
