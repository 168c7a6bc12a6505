use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tersim_core::harness::{
    compare_runs, exit_code, measure_ap_diameter, run_scenario, write_outputs, ExamMetrics, OutputOptions,
    RunOverrides, Scenario, EXIT_ERROR,
};
use tersim_core::phantom::pgm::read_frame_dir;
use tersim_core::phantom::BodyPhantom;
use tersim_core::wire::vectors;

mod serve;

#[derive(Parser)]
#[command(name = "tersim", version, about = "Tele-echography robot simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario in simulated time and write its metrics.
    Run {
        /// Scenario JSON file or bundled scenario name.
        scenario: String,
        /// Channel preset replacing the scenario's channel.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, env = "TERSIM_SEED")]
        seed: Option<u64>,
        /// Number of jittered measurement repeats.
        #[arg(long)]
        repeats: Option<u32>,
        #[arg(long, default_value = "tersim-out")]
        out: PathBuf,
        /// Write every received frame as `frame_NNNNNN.pgm`.
        #[arg(long)]
        dump_frames: bool,
        /// Write the channel event log as `trace.tsv`.
        #[arg(long)]
        trace: bool,
    },
    /// Measure the AP lumen diameter over a directory of PGM frames.
    Measure {
        frames_dir: PathBuf,
        /// Lumen threshold; defaults to the default phantom's midpoint.
        #[arg(long)]
        threshold: Option<u8>,
        /// Pixel spacing for frames without a spacing comment, micrometres.
        #[arg(long, default_value_t = 1000)]
        spacing_um: u32,
    },
    /// Compare two metrics.json files.
    Compare { a: PathBuf, b: PathBuf },
    /// Run a scenario against the wall clock and bridge it to a console over WebSocket.
    Serve {
        scenario: String,
        #[arg(long, default_value = "127.0.0.1:8765")]
        listen: SocketAddr,
        /// Session length override, seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, env = "TERSIM_SEED")]
        seed: Option<u64>,
    },
    /// Write the golden codec vectors file.
    CodecVectors {
        #[arg(default_value = "codec_vectors.bin")]
        path: PathBuf,
    },
}

fn read_metrics(path: &PathBuf) -> Result<ExamMetrics> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ExamMetrics::from_json(&text)?)
}

fn default_threshold() -> u8 {
    let v = BodyPhantom::default().vessel;
    ((v.intensity_vessel as u16 + v.intensity_tissue as u16) / 2) as u8
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run {
            scenario,
            preset,
            seed,
            repeats,
            out,
            dump_frames,
            trace,
        } => {
            let s = Scenario::load(&scenario)?;
            let report = run_scenario(
                &s,
                &RunOverrides {
                    preset,
                    seed,
                    repeats,
                },
            )?;
            write_outputs(&report, &out, OutputOptions { trace, dump_frames })?;
            let m = &report.metrics;
            println!(
                "{} on {}: {} frames, {:.2} img/s, D = {}, outcome {}",
                m.scenario,
                m.channel,
                m.frames_received,
                m.achieved_frame_rate_hz,
                m.primary_diameter_mm()
                    .map_or("n/a".into(), |d| format!("{d} mm")),
                serde_json::to_string(&m.outcome)?
            );
            Ok(exit_code(&m.outcome))
        }
        Command::Measure {
            frames_dir,
            threshold,
            spacing_um,
        } => {
            let frames = read_frame_dir(&frames_dir, spacing_um)
                .with_context(|| format!("reading frames from {}", frames_dir.display()))?;
            if frames.is_empty() {
                bail!("no frame_*.pgm files in {}", frames_dir.display());
            }
            let thr = threshold.unwrap_or_else(default_threshold);
            let seq_of = |i: usize, p: &PathBuf| {
                p.file_stem()
                    .and_then(|n| n.to_str())
                    .and_then(|n| n.strip_prefix("frame_"))
                    .and_then(|n| n.parse().ok())
                    .unwrap_or(i as u32)
            };
            let m = measure_ap_diameter(
                frames.iter().enumerate().map(|(i, (p, f))| (seq_of(i, p), f)),
                thr,
            )?;
            println!("{}", serde_json::to_string_pretty(&m)?);
            Ok(0)
        }
        Command::Compare { a, b } => {
            let cmp = compare_runs(&read_metrics(&a)?, &read_metrics(&b)?)?;
            println!("{}", serde_json::to_string_pretty(&cmp)?);
            Ok(0)
        }
        Command::Serve {
            scenario,
            listen,
            duration,
            seed,
        } => {
            let mut s = Scenario::load(&scenario)?;
            if let Some(d) = duration {
                s.duration_s = d;
            }
            if let Some(seed) = seed {
                s.seed = seed;
            }
            s.validate()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve::serve(s, listen))?;
            Ok(0)
        }
        Command::CodecVectors { path } => {
            vectors::write_vectors(&path).with_context(|| format!("writing {}", path.display()))?;
            println!(
                "wrote {} vectors to {}",
                vectors::golden_messages().len(),
                path.display()
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
