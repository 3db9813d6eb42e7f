//! Command-line front end: per-stage inspection, full handshakes and
//! parameter campaigns. [`run`] is the whole program minus process exit.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use compass::channel::{generate_channel_pair, read_trace, write_trace, CsiTrace, SimConfig};
use compass::dapper::{extract_eps_g_with, ExtractOptions, ParameterSeries};
use compass::mow::{quantize, window_size, BitString};
use compass::passphrase::{derive_psk, estimate_strength, map_bits, Passphrase};
use compass::pinsketch::{self, leakage_report, read_sketch, write_sketch, SketchError};
use compass::protocol::{default_identities, run_session, HandshakeOptions, SessionStatus};
use compass::ChannelParams;

/// Header of the campaign CSV.
pub const CAMPAIGN_HEADER: &str = "correlation,noise,success_rate,mean_entropy_bits,mean_guess_log10";
pub const CAMPAIGN_FILE: &str = "campaign.csv";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Pipeline(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Pipeline(_) => 1,
            CliError::Usage(_) | CliError::Format(_) => 2,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "compass", version, about = "Physical-layer passphrase agreement simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
struct ChannelArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    correlation: f64,
    /// Additive phase-noise standard deviation, radians.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    #[arg(long, default_value_t = 200)]
    packets: usize,
}

impl ChannelArgs {
    fn config(&self, eve: bool) -> SimConfig {
        SimConfig {
            n_packets: self.packets,
            correlation: self.correlation,
            noise_sigma: self.noise,
            eve_enabled: eve,
            seed: self.seed,
            ..SimConfig::default()
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a reciprocal trace pair (and optionally Eve's trace).
    Simulate {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        eve: bool,
        /// Directory receiving trace_a.csi, trace_b.csi and trace_e.csi.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit every packet of a trace and emit the ε_g series.
    Fit {
        #[arg(long)]
        trace_in: PathBuf,
        #[arg(long, default_value_t = 0)]
        rx: usize,
        #[arg(long, default_value_t = 0)]
        tx: usize,
        #[arg(long, default_value_t = 1.0)]
        f_s: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quantize an ε_g series; the window comes from --window or from the
    /// trace's RTT and packet interval.
    Quantize {
        #[arg(long)]
        series: PathBuf,
        #[arg(long, required_unless_present = "window")]
        trace_in: Option<PathBuf>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the secure sketch of a bit string.
    Sketch {
        #[arg(long)]
        bits: PathBuf,
        #[arg(long)]
        sketch_out: Option<PathBuf>,
    },
    /// Reconcile a bit string against a sketch.
    Recover {
        #[arg(long)]
        bits: PathBuf,
        #[arg(long)]
        sketch_in: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Map reconciled bits to a passphrase and estimate its strength.
    Passphrase {
        #[arg(long)]
        bits: PathBuf,
        #[arg(long)]
        ssid: Option<String>,
    },
    /// Derive the 256-bit PSK for a passphrase and SSID.
    Psk {
        #[arg(long)]
        passphrase: String,
        #[arg(long)]
        ssid: String,
    },
    /// Run the full three-party handshake.
    Handshake {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long, default_value = "compass-net")]
        ssid: String,
        #[arg(long)]
        eve: bool,
        /// Corrupt the association hash.
        #[arg(long)]
        tamper_hash: bool,
        #[arg(long)]
        transcript_out: Option<PathBuf>,
    },
    /// Run handshakes over a correlation × noise grid and write a CSV summary.
    Campaign {
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.5, 0.8, 1.0])]
        correlation: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.02])]
        noise: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        seeds_per_cell: u64,
        #[arg(long, default_value_t = 200)]
        packets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory receiving campaign.csv.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `argv` (including the program name), runs the command and returns
/// the exit code: 0 success, 1 pipeline failure, 2 usage or format error.
pub fn run<O: Write, E: Write>(argv: &[String], stdout: &mut O, stderr: &mut E) -> i32 {
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    2
                }
            };
        }
    };
    match execute(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("COMPASS_LOG", "error");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn load_trace(path: &Path) -> Result<CsiTrace, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let node = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    read_trace(BufReader::new(file), node).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

fn load_bits(path: &Path) -> Result<BitString, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.parse()
        .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

fn save(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

/// Writes `text` to `out` if given, otherwise to stdout.
fn emit<O: Write>(out: Option<&Path>, text: &str, stdout: &mut O) -> Result<(), CliError> {
    match out {
        Some(p) => save(p, |w| w.write_all(text.as_bytes())),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Usage(format!("stdout: {e}"))),
    }
}

fn say<O: Write>(stdout: &mut O, text: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(stdout, "{}", text.as_ref()).map_err(|e| CliError::Usage(format!("stdout: {e}")))
}

fn execute<O: Write>(command: Command, stdout: &mut O) -> Result<i32, CliError> {
    match command {
        Command::Simulate { channel, eve, out } => {
            let config = channel.config(eve);
            let pair = generate_channel_pair(&config).map_err(|e| CliError::Usage(e.to_string()))?;
            fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
            let mut traces = vec![("trace_a.csi", &pair.trace_a), ("trace_b.csi", &pair.trace_b)];
            if let Some(e) = &pair.trace_e {
                traces.push(("trace_e.csi", e));
            }
            for (name, trace) in traces {
                let path = out.join(name);
                let file = File::create(&path).map_err(|e| io_err(&path, e))?;
                let mut w = BufWriter::new(file);
                write_trace(trace, &mut w).map_err(|e| CliError::Usage(e.to_string()))?;
                w.flush().map_err(|e| io_err(&path, e))?;
                say(stdout, format!("wrote {name} ({} packets)", trace.len()))?;
            }
            Ok(0)
        }
        Command::Fit {
            trace_in,
            rx,
            tx,
            f_s,
            out,
        } => {
            let trace = load_trace(&trace_in)?;
            let opts = ExtractOptions {
                path: (rx, tx),
                f_s,
                ..ExtractOptions::default()
            };
            let series = extract_eps_g_with(&trace, &ChannelParams::REFERENCE, &opts)
                .map_err(|e| CliError::Pipeline(e.to_string()))?;
            let mut text = Vec::new();
            series.write_text(&mut text).expect("writing to memory");
            emit(out.as_deref(), &String::from_utf8(text).expect("ascii"), stdout)?;
            Ok(0)
        }
        Command::Quantize {
            series,
            trace_in,
            window,
            out,
        } => {
            let file = File::open(&series).map_err(|e| io_err(&series, e))?;
            let s = ParameterSeries::read_text(BufReader::new(file))
                .map_err(|e| CliError::Format(format!("{}: {e}", series.display())))?;
            let w = match (window, trace_in) {
                (Some(w), _) => w,
                (None, Some(path)) => {
                    let trace = load_trace(&path)?;
                    let unit = trace.mean_packet_interval().ok_or_else(|| {
                        CliError::Format(format!("{}: needs two or more packets", path.display()))
                    })?;
                    window_size(&trace.rtts(), unit).map_err(|e| CliError::Format(e.to_string()))?
                }
                (None, None) => return Err(CliError::Usage("give --window or --trace-in".into())),
            };
            let bits = quantize(&s, w).map_err(|e| CliError::Format(e.to_string()))?;
            emit(out.as_deref(), &format!("{bits}\n"), stdout)?;
            Ok(0)
        }
        Command::Sketch { bits, sketch_out } => {
            let q = load_bits(&bits)?;
            let s = pinsketch::sketch(&q);
            let mut text = Vec::new();
            write_sketch(&s, &mut text).expect("writing to memory");
            emit(sketch_out.as_deref(), &String::from_utf8(text).expect("ascii"), stdout)?;
            if sketch_out.is_some() {
                let r = leakage_report(q.len());
                say(
                    stdout,
                    format!(
                        "blocks {} sketch_bits {} leakage_bound_bits {:.1} payload_bound_bits {}",
                        r.blocks,
                        r.sketch_bits,
                        r.syndrome_bound_total,
                        r.payload_bound_per_block * r.blocks
                    ),
                )?;
            }
            Ok(0)
        }
        Command::Recover {
            bits,
            sketch_in,
            out,
        } => {
            let q = load_bits(&bits)?;
            let file = File::open(&sketch_in).map_err(|e| io_err(&sketch_in, e))?;
            let s = read_sketch(BufReader::new(file))
                .map_err(|e| CliError::Format(format!("{}: {e}", sketch_in.display())))?;
            let r = pinsketch::recover(&q, &s).map_err(|e| match e {
                SketchError::ReconciliationFailure { .. } => CliError::Pipeline(e.to_string()),
                other => CliError::Format(other.to_string()),
            })?;
            emit(out.as_deref(), &format!("{r}\n"), stdout)?;
            Ok(0)
        }
        Command::Passphrase { bits, ssid } => {
            let q = load_bits(&bits)?;
            let p = map_bits(&q).map_err(|e| CliError::Pipeline(e.to_string()))?;
            let r = estimate_strength(&p);
            say(stdout, format!("passphrase {p}"))?;
            say(stdout, format!("entropy_bits {:.2}", r.entropy_bits))?;
            say(stdout, format!("guess_log10 {:.2}", r.guess_count_log10))?;
            if let Some(ssid) = ssid {
                let psk = derive_psk(&p, &ssid).map_err(|e| CliError::Usage(e.to_string()))?;
                say(stdout, format!("psk {}", psk.to_hex()))?;
            }
            Ok(0)
        }
        Command::Psk { passphrase, ssid } => {
            let p = Passphrase::new(passphrase).map_err(|e| CliError::Usage(e.to_string()))?;
            let psk = derive_psk(&p, &ssid).map_err(|e| CliError::Usage(e.to_string()))?;
            say(stdout, psk.to_hex())?;
            Ok(0)
        }
        Command::Handshake {
            channel,
            ssid,
            eve,
            tamper_hash,
            transcript_out,
        } => handshake(&channel, ssid, eve, tamper_hash, transcript_out.as_deref(), stdout),
        Command::Campaign {
            correlation,
            noise,
            seeds_per_cell,
            packets,
            seed,
            out,
        } => {
            let cfg = CampaignConfig {
                correlations: correlation,
                noise_sigmas: noise,
                seeds_per_cell,
                n_packets: packets,
                base_seed: seed,
            };
            let csv = campaign_csv(&cfg)?;
            fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
            let path = out.join(CAMPAIGN_FILE);
            save(&path, |w| w.write_all(csv.as_bytes()))?;
            write!(stdout, "{csv}").map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(0)
        }
    }
}

fn handshake<O: Write>(
    channel: &ChannelArgs,
    ssid: String,
    eve: bool,
    tamper_hash: bool,
    transcript_out: Option<&Path>,
    stdout: &mut O,
) -> Result<i32, CliError> {
    let (a, e, p) = default_identities();
    let opts = HandshakeOptions {
        ssid: ssid.clone(),
        tamper_assoc_hash: tamper_hash,
        ..HandshakeOptions::default()
    };
    let report = run_session(&a, &e, &p, &channel.config(eve), channel.seed, &opts)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let o = report.outcome;
    if let Some(path) = transcript_out {
        save(path, |w| w.write_all(o.transcript.to_text().as_bytes()))?;
    }
    say(stdout, format!("status {}", o.status.as_str()))?;
    say(stdout, format!("pass2_attempts {}", o.pass2_attempts))?;
    say(stdout, format!("transcript_records {}", o.transcript.len()))?;
    if let Some(f) = &o.failure {
        say(stdout, format!("failure {f:?}"))?;
    }
    for ev in &o.eve {
        say(
            stdout,
            format!(
                "eve pass {} recover_ok {} matches_enrollee {}",
                ev.pass, ev.recover_ok, ev.matches_enrollee
            ),
        )?;
    }
    match &o.passphrase2 {
        Some(pp) => {
            let r = estimate_strength(pp);
            say(stdout, format!("passphrase {pp}"))?;
            say(stdout, format!("entropy_bits {:.2}", r.entropy_bits))?;
            let psk = derive_psk(pp, &ssid).map_err(|e| CliError::Usage(e.to_string()))?;
            say(stdout, format!("psk {}", psk.to_hex()))?;
            Ok(0)
        }
        None => Ok(1),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub correlations: Vec<f64>,
    pub noise_sigmas: Vec<f64>,
    pub seeds_per_cell: u64,
    pub n_packets: usize,
    pub base_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CampaignRow {
    pub correlation: f64,
    pub noise: f64,
    pub success_rate: f64,
    /// Means over joined runs; `None` when no run joined.
    pub mean_entropy_bits: Option<f64>,
    pub mean_guess_log10: Option<f64>,
}

/// Runs every cell (in parallel) and returns rows sorted by
/// `(correlation, noise)`. Every cell uses seeds `base_seed..base_seed+k`.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<Vec<CampaignRow>, CliError> {
    if cfg.correlations.is_empty() || cfg.noise_sigmas.is_empty() || cfg.seeds_per_cell < 1 {
        return Err(CliError::Usage(
            "campaign needs correlations, noise levels and seeds_per_cell >= 1".into(),
        ));
    }
    let mut cells: Vec<(f64, f64)> = cfg
        .correlations
        .iter()
        .flat_map(|&c| cfg.noise_sigmas.iter().map(move |&n| (c, n)))
        .collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    cells.dedup();

    let (a, e, p) = default_identities();
    let opts = HandshakeOptions::default();
    let runs: Vec<_> = cells
        .iter()
        .flat_map(|&cell| (0..cfg.seeds_per_cell).map(move |k| (cell, k)))
        .collect();
    let results = runs
        .par_iter()
        .map(|&((correlation, noise), k)| {
            let seed = cfg.base_seed.wrapping_add(k);
            let channel = SimConfig {
                n_packets: cfg.n_packets,
                correlation,
                noise_sigma: noise,
                seed,
                ..SimConfig::default()
            };
            run_session(&a, &e, &p, &channel, seed, &opts)
                .map(|r| r.outcome)
                .map_err(|e| CliError::Usage(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let per_cell = cfg.seeds_per_cell as usize;
    Ok(cells
        .iter()
        .zip(results.chunks(per_cell))
        .map(|(&(correlation, noise), outcomes)| {
            let strengths: Vec<_> = outcomes
                .iter()
                .filter(|o| o.status == SessionStatus::Joined)
                .filter_map(|o| o.passphrase2.as_ref().map(estimate_strength))
                .collect();
            let mean = |f: fn(&compass::passphrase::StrengthReport) -> f64| {
                (!strengths.is_empty())
                    .then(|| strengths.iter().map(f).sum::<f64>() / strengths.len() as f64)
            };
            CampaignRow {
                correlation,
                noise,
                success_rate: strengths.len() as f64 / per_cell as f64,
                mean_entropy_bits: mean(|r| r.entropy_bits),
                mean_guess_log10: mean(|r| r.guess_count_log10),
            }
        })
        .collect())
}

/// CSV text with [`CAMPAIGN_HEADER`]; empty cells where no run joined.
pub fn campaign_csv(cfg: &CampaignConfig) -> Result<String, CliError> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    let mut out = format!("{CAMPAIGN_HEADER}\n");
    for r in run_campaign(cfg)? {
        out.push_str(&format!(
            "{:?},{:?},{:.4},{},{}\n",
            r.correlation,
            r.noise,
            r.success_rate,
            opt(r.mean_entropy_bits),
            opt(r.mean_guess_log10)
        ));
    }
    Ok(out)
}
