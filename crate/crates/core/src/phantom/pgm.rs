//! Binary PGM (P5) frame dumps.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::UsFrame;

const SPACING_KEY: &str = "pixel_spacing_um=";
const TIME_KEY: &str = "acquisition_time_us=";

pub fn frame_file_name(seq: u32) -> String {
    format!("frame_{seq:06}.pgm")
}

pub fn encode_pgm(frame: &UsFrame) -> Vec<u8> {
    let header = format!(
        "P5\n# {SPACING_KEY}{}\n# {TIME_KEY}{}\n{} {}\n255\n",
        frame.pixel_spacing_um, frame.acquisition_time_us, frame.width, frame.height
    );
    let mut out = header.into_bytes();
    out.extend_from_slice(&frame.pixels);
    out
}

pub fn write_pgm(path: &Path, frame: &UsFrame) -> io::Result<()> {
    fs::write(path, encode_pgm(frame))
}

fn invalid(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

/// Parse a P5 image. Spacing and acquisition time come from the comment
/// lines written by [`encode_pgm`]; absent comments fall back to
/// `default_spacing_um` and zero.
pub fn decode_pgm(bytes: &[u8], default_spacing_um: u32) -> io::Result<UsFrame> {
    let mut pos = 0;
    let mut tokens = Vec::new();
    let mut spacing = default_spacing_um;
    let mut time = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(invalid("truncated PGM header"));
        }
        if bytes[pos] == b'#' {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map_or(bytes.len(), |e| pos + e);
            let comment = String::from_utf8_lossy(&bytes[pos + 1..end]);
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix(SPACING_KEY) {
                spacing = v.parse().map_err(|_| invalid("bad spacing comment"))?;
            } else if let Some(v) = comment.strip_prefix(TIME_KEY) {
                time = v.parse().map_err(|_| invalid("bad time comment"))?;
            }
            pos = end;
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if tokens[0] != "P5" {
        return Err(invalid("not a binary PGM"));
    }
    let width: u16 = tokens[1].parse().map_err(|_| invalid("bad width"))?;
    let height: u16 = tokens[2].parse().map_err(|_| invalid("bad height"))?;
    if tokens[3] != "255" {
        return Err(invalid("only 8-bit PGM is supported"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = width as usize * height as usize;
    if bytes.len() < pos + n {
        return Err(invalid("truncated PGM raster"));
    }
    Ok(UsFrame {
        width,
        height,
        pixel_spacing_um: spacing,
        pixels: bytes[pos..pos + n].to_vec(),
        acquisition_time_us: time,
    })
}

/// All `frame_*.pgm` files in a directory, sorted by name.
pub fn read_frame_dir(dir: &Path, default_spacing_um: u32) -> io::Result<Vec<(PathBuf, UsFrame)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("frame_") && n.ends_with(".pgm"))
        })
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let frame = decode_pgm(&fs::read(&p)?, default_spacing_um)?;
            Ok((p, frame))
        })
        .collect()
}
