//! `csvc`: encode, decode and evaluate compressive-sensing video containers.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use csvc::error::Error;
use csvc::frame::VideoSequence;
use csvc::io::{load_sequence, save_sequence, SequenceFormat};
use csvc::metrics::{add_noise, mean_psnr, psnr};
use csvc::pipeline::{read_container, read_header, realized_cr, write_container, GopConfig};
use csvc::solver::SolverParams;
use csvc::sweep::{run_sweep, sweep_csv, SweepCell, TrackingProbe};
use csvc::tracker::{
    format_boxes, parse_truth_boxes, success_rate, track, BoundingBox, TrackerConfig,
    DEFAULT_SR_THRESHOLD,
};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_FORMAT: u8 = 3;

#[derive(Parser)]
#[command(name = "csvc", version, about = "Compressive-sensing video codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    /// Directory of binary PGM files.
    Pgm,
    /// YUV4MPEG2 stream (luma plane only).
    Y4m,
    /// Raw planar 8-bit luma; requires --width and --height.
    Raw,
}

#[derive(Args, Clone)]
struct InputSeq {
    /// Input sequence path (directory for pgm, file otherwise).
    #[arg(long)]
    input: PathBuf,
    /// Input sequence format.
    #[arg(long, value_enum, default_value = "pgm")]
    format: Format,
    /// Frame width, required for raw input.
    #[arg(long)]
    width: Option<usize>,
    /// Frame height, required for raw input.
    #[arg(long)]
    height: Option<usize>,
}

impl InputSeq {
    fn seq_format(&self) -> Result<SequenceFormat, CliError> {
        seq_format(self.format, self.width, self.height)
    }

    fn load(&self) -> Result<VideoSequence, CliError> {
        Ok(load_sequence(&self.input, self.seq_format()?)?)
    }
}

fn seq_format(
    format: Format,
    width: Option<usize>,
    height: Option<usize>,
) -> Result<SequenceFormat, CliError> {
    match format {
        Format::Pgm => Ok(SequenceFormat::PgmDir),
        Format::Y4m => Ok(SequenceFormat::Y4m),
        Format::Raw => match (width, height) {
            (Some(w), Some(h)) => Ok(SequenceFormat::Raw { width: w, height: h }),
            _ => Err(CliError::usage(
                "--format raw requires --width and --height",
            )),
        },
    }
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Data-fidelity penalty weight at the first continuation stage.
    #[arg(long)]
    mu: Option<f64>,
    /// Gradient-splitting penalty weight at the first continuation stage.
    #[arg(long)]
    beta: Option<f64>,
    /// Relative-change stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Continuation stages.
    #[arg(long)]
    max_outer: Option<usize>,
    /// Iterations per stage.
    #[arg(long)]
    max_inner: Option<usize>,
    /// Use anisotropic (per-component) total variation.
    #[arg(long)]
    anisotropic: bool,
}

impl SolverArgs {
    fn params(&self) -> SolverParams {
        let mut p = SolverParams::default();
        if let Some(v) = self.mu {
            p.mu = v;
        }
        if let Some(v) = self.beta {
            p.beta = v;
        }
        if let Some(v) = self.tol {
            p.tol = v;
        }
        if let Some(v) = self.max_outer {
            p.max_outer = v;
        }
        if let Some(v) = self.max_inner {
            p.max_inner = v;
        }
        p.isotropic = !self.anisotropic;
        p
    }
}

fn parse_box(s: &str) -> Result<BoundingBox, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err("expected cx,cy,w,h".into());
    }
    let num = |i: usize| -> Result<f64, String> {
        parts[i]
            .trim()
            .parse()
            .map_err(|_| format!("bad number in box field {i}"))
    };
    Ok(BoundingBox::new(
        num(0)?,
        num(1)?,
        num(2)? as usize,
        num(3)? as usize,
    ))
}

#[derive(Subcommand)]
enum Command {
    /// Encode a sequence into a container.
    Encode {
        #[command(flatten)]
        input: InputSeq,
        /// Output container file.
        #[arg(long)]
        output: PathBuf,
        /// Frames per GOP (one key frame plus gop-1 CS frames).
        #[arg(long, default_value_t = 5)]
        gop: usize,
        /// Key-frame target compression ratio.
        #[arg(long, default_value_t = 23.0)]
        cr_key: f64,
        /// CS-frame sample-count compression ratio (1 = lossless diagnostic).
        #[arg(long, default_value_t = 50.0)]
        cr_cs: f64,
        /// Measurement-matrix seed.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Decode a container back into a sequence.
    Decode {
        /// Input container file.
        #[arg(long)]
        input: PathBuf,
        /// Output path (directory for pgm, file otherwise).
        #[arg(long)]
        output: PathBuf,
        /// Output sequence format.
        #[arg(long, value_enum, default_value = "pgm")]
        format: Format,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Print container header and compression accounting.
    Info {
        /// Container file.
        #[arg(long)]
        input: PathBuf,
    },
    /// Per-frame PSNR between two sequences, as CSV.
    Psnr {
        /// Reference sequence path.
        #[arg(long)]
        a: PathBuf,
        /// Test sequence path.
        #[arg(long)]
        b: PathBuf,
        /// Format of both sequences.
        #[arg(long, value_enum, default_value = "pgm")]
        format: Format,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        /// Output CSV file (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Encode/decode/measure a grid of configurations, emitting CSV.
    Sweep {
        #[command(flatten)]
        input: InputSeq,
        /// GOP sizes, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "3,5,7")]
        gops: Vec<usize>,
        /// Key-frame CR targets, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "23")]
        cr_keys: Vec<f64>,
        /// CS-frame CRs, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "40,60,80")]
        cr_css: Vec<f64>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Track the decoded video from this box (cx,cy,w,h).
        #[arg(long, value_parser = parse_box)]
        init_box: Option<BoundingBox>,
        /// Ground-truth boxes file (frame_index,cx,cy,w,h per line).
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Success-rate center-distance threshold in pixels.
        #[arg(long, default_value_t = DEFAULT_SR_THRESHOLD)]
        threshold: f64,
        /// Output CSV file (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Degrade a sequence over a noise-variance ladder and report quality.
    Noise {
        #[command(flatten)]
        input: InputSeq,
        /// Noise variances, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "0,25,100,400,1600")]
        variances: Vec<f64>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Track the noisy video from this box (cx,cy,w,h).
        #[arg(long, value_parser = parse_box)]
        init_box: Option<BoundingBox>,
        /// Ground-truth boxes file.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SR_THRESHOLD)]
        threshold: f64,
        /// Output CSV file (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Track a target and report the predicted boxes.
    Track {
        #[command(flatten)]
        input: InputSeq,
        /// Initial target box (cx,cy,w,h).
        #[arg(long, value_parser = parse_box)]
        init_box: BoundingBox,
        /// Ground-truth boxes file for a success-rate summary.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        search_radius: usize,
        #[arg(long, default_value_t = DEFAULT_SR_THRESHOLD)]
        threshold: f64,
        /// Output boxes file (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError {
            message: msg.into(),
            code: EXIT_USAGE,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } | Error::NoFrames(_) => EXIT_IO,
            Error::Malformed { .. }
            | Error::CorruptIntra(_)
            | Error::CorruptContainer(_)
            | Error::Version(_) => EXIT_FORMAT,
            Error::DimensionMismatch { .. }
            | Error::InvalidParam { .. }
            | Error::NonFinite(_)
            | Error::Solver(_) => EXIT_USAGE,
        };
        CliError {
            message: e.to_string(),
            code,
        }
    }
}

fn write_text(path: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::from(Error::Io {
            path: p.clone(),
            source: e,
        })),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_truth(path: &PathBuf) -> Result<Vec<BoundingBox>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::from(Error::Io {
        path: path.clone(),
        source: e,
    }))?;
    Ok(parse_truth_boxes(&text)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Encode {
            input,
            output,
            gop,
            cr_key,
            cr_cs,
            seed,
        } => {
            let seq = input.load()?;
            let cfg = GopConfig {
                gop_size: gop,
                cr_key,
                cr_cs,
                seed,
                per_gop_seed: false,
            };
            let bytes = write_container(&seq, &cfg)?;
            fs::write(&output, &bytes).map_err(|e| CliError::from(Error::Io {
                path: output.clone(),
                source: e,
            }))?;
            eprintln!(
                "encoded {} frames ({}x{}) into {} bytes",
                seq.len(),
                seq.width(),
                seq.height(),
                bytes.len()
            );
            Ok(())
        }
        Command::Decode {
            input,
            output,
            format,
            solver,
        } => {
            let bytes = fs::read(&input).map_err(|e| CliError::from(Error::Io {
                path: input.clone(),
                source: e,
            }))?;
            let (seq, report) = read_container(&bytes, &solver.params())?;
            let fmt = seq_format(format, Some(seq.width()), Some(seq.height()))?;
            save_sequence(&seq, &output, fmt)?;
            let unconverged = report.cs_converged.iter().filter(|&&c| !c).count();
            if unconverged > 0 {
                eprintln!("warning: {unconverged} CS frames hit the iteration cap");
            }
            eprintln!("decoded {} frames", seq.len());
            Ok(())
        }
        Command::Info { input } => {
            let bytes = fs::read(&input).map_err(|e| CliError::from(Error::Io {
                path: input.clone(),
                source: e,
            }))?;
            let h = read_header(&bytes)?;
            println!("version: {}", h.version);
            println!("resolution: {}x{}", h.width, h.height);
            println!("frames: {}", h.frame_count);
            println!("gop_size: {}", h.gop_size);
            println!("cr_key_achieved: {:.2}", h.cr_key_achieved);
            println!("cr_cs: {}", h.cr_cs);
            println!("measurements_per_frame: {}", h.m);
            println!("seed: {}", h.seed);
            println!("frame_rate: {}", h.frame_rate);
            println!("nominal_total_cr: {:.2}", h.nominal_total_cr());
            println!("realized_total_cr: {:.2}", realized_cr(&bytes, &h));
            Ok(())
        }
        Command::Psnr {
            a,
            b,
            format,
            width,
            height,
            output,
        } => {
            let fmt = seq_format(format, width, height)?;
            let sa = load_sequence(&a, fmt)?;
            let sb = load_sequence(&b, fmt)?;
            if sa.len() != sb.len() {
                return Err(CliError::usage(format!(
                    "frame count mismatch: {} vs {}",
                    sa.len(),
                    sb.len()
                )));
            }
            let mut csv = String::from("frame,psnr\n");
            for (i, (fa, fb)) in sa.frames().iter().zip(sb.frames()).enumerate() {
                csv.push_str(&format!("{i},{:.2}\n", psnr(fa, fb)?));
            }
            csv.push_str(&format!("mean,{:.2}\n", mean_psnr(sa.frames(), sb.frames())?));
            write_text(output.as_ref(), &csv)
        }
        Command::Sweep {
            input,
            gops,
            cr_keys,
            cr_css,
            seed,
            init_box,
            truth,
            threshold,
            output,
            solver,
        } => {
            let seq = input.load()?;
            let probe = match (init_box, truth) {
                (Some(init), Some(path)) => Some(TrackingProbe {
                    init,
                    truth: load_truth(&path)?,
                    config: TrackerConfig::default(),
                    threshold,
                }),
                (None, None) => None,
                _ => {
                    return Err(CliError::usage(
                        "--init-box and --truth must be given together",
                    ))
                }
            };
            let mut cells = Vec::new();
            for &gop in &gops {
                for &cr_key in &cr_keys {
                    for &cr_cs in &cr_css {
                        cells.push(SweepCell { gop, cr_key, cr_cs });
                    }
                }
            }
            let rows = run_sweep(&seq, &cells, &solver.params(), seed, probe.as_ref());
            for row in &rows {
                if let Some(err) = &row.error {
                    eprintln!(
                        "cell gop={} cr_key={} cr_cs={} failed: {err}",
                        row.gop, row.cr_key, row.cr_cs
                    );
                }
            }
            write_text(output.as_ref(), &sweep_csv(&rows))
        }
        Command::Noise {
            input,
            variances,
            seed,
            init_box,
            truth,
            threshold,
            output,
        } => {
            let seq = input.load()?;
            let truth_boxes = truth.map(|p| load_truth(&p)).transpose()?;
            let mut csv = String::from("variance,mean_psnr,track_sr\n");
            for (vi, &variance) in variances.iter().enumerate() {
                let noisy: Vec<_> = seq
                    .frames()
                    .iter()
                    .enumerate()
                    .map(|(i, f)| add_noise(f, variance, seed ^ ((vi * 1000 + i) as u64)))
                    .collect::<csvc::Result<_>>()?;
                let noisy_seq = VideoSequence::new(noisy, seq.frame_rate())?;
                let quality = mean_psnr(seq.frames(), noisy_seq.frames())?;
                let sr = match (&init_box, &truth_boxes) {
                    (Some(init), Some(tb)) => {
                        let boxes = track(&noisy_seq, *init, &TrackerConfig::default())?;
                        Some(success_rate(&boxes, tb, threshold)?)
                    }
                    _ => None,
                };
                match sr {
                    Some(v) => csv.push_str(&format!("{variance},{quality:.2},{v:.1}\n")),
                    None => csv.push_str(&format!("{variance},{quality:.2},NA\n")),
                }
            }
            write_text(output.as_ref(), &csv)
        }
        Command::Track {
            input,
            init_box,
            truth,
            search_radius,
            threshold,
            output,
        } => {
            let seq = input.load()?;
            let cfg = TrackerConfig {
                search_radius,
                ..TrackerConfig::default()
            };
            let boxes = track(&seq, init_box, &cfg)?;
            if let Some(path) = truth {
                let tb = load_truth(&path)?;
                let sr = success_rate(&boxes, &tb, threshold)?;
                eprintln!("success rate: {sr:.1}% (threshold {threshold} px)");
            }
            write_text(output.as_ref(), &format_boxes(&boxes))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not usage errors.
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_USAGE)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
