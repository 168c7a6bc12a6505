use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use super::channel::{LaneId, Packet};
use super::profile::ChannelProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceStatus {
    Sent,
    Delivered,
    Dropped,
}

impl fmt::Display for TraceStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceStatus::Sent => "SENT",
            TraceStatus::Delivered => "DELIVERED",
            TraceStatus::Dropped => "DROPPED",
        })
    }
}

impl FromStr for TraceStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "SENT" => Ok(TraceStatus::Sent),
            "DELIVERED" => Ok(TraceStatus::Delivered),
            "DROPPED" => Ok(TraceStatus::Dropped),
            other => Err(format!("unknown trace status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub t_us: u64,
    pub lane: LaneId,
    pub msg_type: &'static str,
    pub seq: u32,
    pub size: usize,
    pub status: TraceStatus,
}

/// Event log of a channel, in recording order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub lanes: Vec<String>,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(lanes: Vec<String>) -> Self {
        Self {
            lanes,
            records: Vec::new(),
        }
    }

    pub fn record(&mut self, t_us: u64, lane: LaneId, packet: &Packet, status: TraceStatus) {
        self.records.push(TraceRecord {
            t_us,
            lane,
            msg_type: packet.type_name(),
            seq: packet.seq(),
            size: packet.size_bytes(),
            status,
        });
    }

    pub fn lane_label(&self, lane: LaneId) -> &str {
        &self.lanes[lane.0]
    }

    pub fn line(&self, r: &TraceRecord) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.t_us,
            self.lane_label(r.lane),
            r.msg_type,
            r.seq,
            r.size,
            r.status
        )
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            writeln!(w, "{}", self.line(r))?;
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = Vec::new();
        self.write_tsv(&mut out).expect("writing to a Vec cannot fail");
        String::from_utf8(out).expect("trace lines are ASCII")
    }

    pub fn count(&self, lane: Option<LaneId>, msg_type: &str, status: TraceStatus) -> usize {
        self.records
            .iter()
            .filter(|r| lane.is_none_or(|l| l == r.lane) && r.msg_type == msg_type && r.status == status)
            .count()
    }

    /// Largest number of bits delivered on `lane` within any window of
    /// `window_us` (counting each delivery at its delivery instant).
    pub fn max_delivered_bits(&self, lane: LaneId, window_us: u64) -> u64 {
        let mut ts: Vec<(u64, u64)> = self
            .records
            .iter()
            .filter(|r| r.lane == lane && r.status == TraceStatus::Delivered)
            .map(|r| (r.t_us, r.size as u64 * 8))
            .collect();
        ts.sort_unstable();
        let (mut lo, mut sum, mut best) = (0, 0u64, 0u64);
        for hi in 0..ts.len() {
            sum += ts[hi].1;
            while ts[hi].0 - ts[lo].0 >= window_us {
                sum -= ts[lo].1;
                lo += 1;
            }
            best = best.max(sum);
        }
        best
    }
}

/// Worst one-second delivered load on a lane against its budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaneBudgetCheck {
    pub lane: String,
    pub budget_bps: u64,
    pub max_bits_per_window: u64,
    /// One largest message on the lane, in bits.
    pub allowance_bits: u64,
}

impl LaneBudgetCheck {
    pub fn ok(&self) -> bool {
        self.max_bits_per_window <= self.budget_bps + self.allowance_bits
    }
}

/// Sliding one-second budget check of every lane in a trace.
pub fn budget_checks(trace: &Trace, profile: &ChannelProfile) -> Vec<LaneBudgetCheck> {
    trace
        .lanes
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let stream = label.split('/').next().unwrap_or(label);
            let budget_bps = profile.stream(stream).map_or(0, |s| s.budget_bps);
            let allowance_bits = trace
                .records
                .iter()
                .filter(|r| r.lane == LaneId(i))
                .map(|r| r.size as u64 * 8)
                .max()
                .unwrap_or(0);
            LaneBudgetCheck {
                lane: label.clone(),
                budget_bps,
                max_bits_per_window: trace.max_delivered_bits(LaneId(i), 1_000_000),
                allowance_bits,
            }
        })
        .collect()
}

/// One parsed line of a trace file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceLine {
    pub t_us: u64,
    pub lane: String,
    pub msg_type: String,
    pub seq: u32,
    pub size: usize,
    pub status: TraceStatus,
}

pub fn parse_trace_line(line: &str) -> Result<TraceLine, String> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != 6 {
        return Err(format!("expected 6 tab-separated fields, found {}", f.len()));
    }
    let num = |s: &str, what: &str| s.parse::<u64>().map_err(|e| format!("{what}: {e}"));
    Ok(TraceLine {
        t_us: num(f[0], "t_us")?,
        lane: f[1].to_string(),
        msg_type: f[2].to_string(),
        seq: u32::try_from(num(f[3], "seq")?).map_err(|e| e.to_string())?,
        size: num(f[4], "size")? as usize,
        status: f[5].parse()?,
    })
}
