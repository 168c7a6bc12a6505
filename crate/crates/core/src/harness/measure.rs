use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::phantom::UsFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementResult {
    pub ap_diameter_mm: f64,
    /// Index of the maximising frame in the sweep (its sequence number for
    /// received streams).
    pub frame_seq: u32,
    pub repeat_index: u32,
}

/// Longest vertical lumen run through the lumen centroid column, in pixels.
/// `None` when the frame holds no lumen pixel.
pub fn frame_ap_run(frame: &UsFrame, threshold: u8) -> Option<usize> {
    let (w, h) = (frame.width as usize, frame.height as usize);
    let lumen = |c: usize, r: usize| {
        let p = frame.get(c, r);
        p > 0 && p < threshold
    };
    let (mut sum, mut n) = (0usize, 0usize);
    for r in 0..h {
        for c in 0..w {
            if lumen(c, r) {
                sum += c;
                n += 1;
            }
        }
    }
    if n == 0 {
        return None;
    }
    // Centroid column, rounded half up in exact integer arithmetic.
    let col = ((2 * sum + n) / (2 * n)).min(w - 1);
    let (mut best, mut run) = (0, 0);
    for r in 0..h {
        if lumen(col, r) {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    Some(best)
}

/// Maximum antero-posterior lumen diameter over a sweep.
///
/// Lumen pixels are those strictly between 0 (outside the body) and
/// `threshold`. Frames are identified by their position in `frames` paired
/// with the given sequence numbers.
pub fn measure_ap_diameter<'a, I>(frames: I, threshold: u8) -> Result<MeasurementResult, HarnessError>
where
    I: IntoIterator<Item = (u32, &'a UsFrame)>,
{
    let mut best: Option<(f64, u32)> = None;
    for (seq, frame) in frames {
        if let Some(run) = frame_ap_run(frame, threshold) {
            let d = run as f64 * frame.pixel_spacing_mm();
            if best.is_none_or(|(b, _)| d > b) {
                best = Some((d, seq));
            }
        }
    }
    let (ap_diameter_mm, frame_seq) =
        best.ok_or_else(|| HarnessError::NotFound("no lumen pixels in any frame".into()))?;
    Ok(MeasurementResult {
        ap_diameter_mm,
        frame_seq,
        repeat_index: 0,
    })
}
