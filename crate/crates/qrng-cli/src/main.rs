//! `qrng`: simulate a gated photon-counting random number generator,
//! tune it, and turn the clicks into analyzed or exportable bitstreams.
//!
//! Subcommands map onto the stages of the bench: `simulate` runs gates
//! and emits bits, `calibrate` closes the attenuator feedback loop,
//! `scan-delay` sweeps the gate timing, `extract` post-processes a
//! captured stream, `analyze` runs the statistics battery, and `export`
//! writes raw bytes for external batteries such as DIEHARD.
//!
//! Every run is reproducible: the stream is a pure function of the
//! configuration and `--seed` (default 0). `--entropy-seed` draws a
//! fresh seed from the operating system and logs it on stderr so the
//! run can be replayed.

mod config;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::rngs::OsRng;
use rand::TryRngCore;

use qrng_sim::acquisition::{calibrate, run_stream, scan_delay};
use qrng_sim::extraction::{decimate, peres, von_neumann, DEFAULT_PERES_DEPTH};
use qrng_sim::stats::{correlogram, ent_report};
use qrng_sim::BitStream;

use config::{parse_config_file, resolve, Debias, Overrides, Params};

/// Errors split by exit code: domain and configuration problems exit 1,
/// I/O problems exit 2.
#[derive(Debug)]
pub enum CliError {
    Domain(String),
    Io(String),
}

impl CliError {
    fn domain(message: impl Into<String>) -> Self {
        CliError::Domain(message.into())
    }

    fn io(message: impl Into<String>) -> Self {
        CliError::Io(message.into())
    }

    fn code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Domain(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<qrng_sim::Error> for CliError {
    fn from(e: qrng_sim::Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "qrng", version, about = "Gated photon-counting RNG simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run gates and emit the resulting bit stream.
    Simulate(SimulateCmd),
    /// Tune the attenuator until the bit bias meets the target.
    Calibrate(CalibrateCmd),
    /// Sweep the gate delay and report click counts per setting.
    ScanDelay(ScanDelayCmd),
    /// Decimate and debias a previously captured raw stream.
    Extract(ExtractCmd),
    /// Run the statistics battery over a raw stream file.
    Analyze(AnalyzeCmd),
    /// Simulate and write raw bytes for external test batteries.
    Export(ExportCmd),
}

/// Flags shared by every command that runs the simulator.
#[derive(Args, Default)]
struct CommonFlags {
    /// Gates to run; one raw bit per gate.
    #[arg(long)]
    bits: Option<u64>,
    /// Detection efficiency in [0, 1].
    #[arg(long)]
    eta: Option<f64>,
    /// Mean photons per pulse at the source.
    #[arg(long, conflicts_with = "power_dbm")]
    lambda: Option<f64>,
    /// Source average power in dBm (alternative to --lambda).
    #[arg(long)]
    power_dbm: Option<f64>,
    /// Vacuum wavelength in nanometres.
    #[arg(long)]
    wavelength_nm: Option<f64>,
    /// Pulse repetition rate in hertz.
    #[arg(long)]
    rep_rate_hz: Option<f64>,
    /// Attenuator power transmittance in (0, 1].
    #[arg(long)]
    transmittance: Option<f64>,
    /// Dark count probability per gate.
    #[arg(long)]
    dark: Option<f64>,
    /// Afterpulse amplitude for a click one gate old.
    #[arg(long)]
    ap_alpha: Option<f64>,
    /// Afterpulse memory constant in gates.
    #[arg(long)]
    ap_tau: Option<f64>,
    /// Afterpulse memory horizon in gates.
    #[arg(long)]
    ap_horizon: Option<u32>,
    /// Gates blanked after every click.
    #[arg(long)]
    dead_gates: Option<u32>,
    /// Gate opening time in nanoseconds.
    #[arg(long)]
    gate_delay_ns: Option<f64>,
    /// Gate width in nanoseconds.
    #[arg(long)]
    gate_width_ns: Option<f64>,
    /// Pulse leading edge arrival time in nanoseconds.
    #[arg(long)]
    pulse_arrival_ns: Option<f64>,
    /// Pulse width in nanoseconds.
    #[arg(long)]
    pulse_width_ns: Option<f64>,
    /// RNG seed; the same seed replays the same stream.
    #[arg(long, conflicts_with = "entropy_seed")]
    seed: Option<u64>,
    /// Draw the seed from the operating system and log it on stderr.
    #[arg(long)]
    entropy_seed: bool,
    /// Flat key = value config file; flags override its entries.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

impl CommonFlags {
    fn as_overrides(&self) -> Result<Overrides, CliError> {
        let mut flags = Overrides {
            bits: self.bits,
            eta: self.eta,
            lambda: self.lambda,
            power_dbm: self.power_dbm,
            wavelength_nm: self.wavelength_nm,
            rep_rate_hz: self.rep_rate_hz,
            transmittance: self.transmittance,
            dark: self.dark,
            ap_alpha: self.ap_alpha,
            ap_tau: self.ap_tau,
            ap_horizon: self.ap_horizon,
            dead_gates: self.dead_gates,
            gate_delay_ns: self.gate_delay_ns,
            gate_width_ns: self.gate_width_ns,
            pulse_arrival_ns: self.pulse_arrival_ns,
            pulse_width_ns: self.pulse_width_ns,
            seed: self.seed,
            ..Overrides::default()
        };
        if self.entropy_seed {
            let seed = OsRng
                .try_next_u64()
                .map_err(|e| CliError::io(format!("no entropy from the OS: {e}")))?;
            eprintln!("seed={seed}");
            flags.seed = Some(seed);
        }
        Ok(flags)
    }

    fn resolve(&self, extra: Overrides) -> Result<Params, CliError> {
        let mut layers = Vec::new();
        if let Some(path) = &self.config {
            layers.push(parse_config_file(path)?);
        }
        layers.push(self.as_overrides()?.over(extra));
        resolve(&layers)
    }
}

/// Post-processing applied to a stream before it leaves the command.
#[derive(Args, Clone, Copy, Default)]
struct PipelineFlags {
    /// Keep every Nth bit; N defaults to 7 when the flag is bare.
    #[arg(long, value_name = "N", num_args = 0..=1, default_missing_value = "7")]
    decimate: Option<usize>,
    /// Debiasing extractor applied after decimation.
    #[arg(long, value_enum)]
    debias: Option<Debias>,
}

impl PipelineFlags {
    fn as_overrides(&self) -> Overrides {
        Overrides { decimate: self.decimate, debias: self.debias, ..Overrides::default() }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Headerless packed bits, first bit in the top bit of byte 0.
    Raw,
    /// Correlogram as `k,a_k` rows.
    Csv,
    /// Human-readable statistics battery report.
    Report,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct SimulateCmd {
    #[command(flatten)]
    common: CommonFlags,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "raw")]
    format: Format,
    /// Drop tail bits so raw output is a whole number of bytes.
    #[arg(long)]
    truncate: bool,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct CalibrateCmd {
    #[command(flatten)]
    common: CommonFlags,
    /// Bias the loop should settle on (zeros fraction minus one half).
    #[arg(long)]
    target_bias: Option<f64>,
    /// Acceptable distance from the target bias.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Gates measured per feedback window.
    #[arg(long)]
    window_gates: Option<u64>,
    /// Feedback windows before giving up.
    #[arg(long)]
    max_iters: Option<u32>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ScanDelayCmd {
    #[command(flatten)]
    common: CommonFlags,
    /// First gate delay to try, in nanoseconds.
    #[arg(long)]
    delay_min_ns: Option<f64>,
    /// Last gate delay to try, in nanoseconds.
    #[arg(long)]
    delay_max_ns: Option<f64>,
    /// Delay increment, in nanoseconds.
    #[arg(long)]
    delay_step_ns: Option<f64>,
    /// Gates simulated at each delay setting.
    #[arg(long)]
    gates_per_point: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv lists the sweep; report prints the winning delay.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ExtractCmd {
    /// Raw stream file to post-process.
    input: PathBuf,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Flat key = value config file; flags override its entries.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Drop tail bits so raw output is a whole number of bytes.
    #[arg(long)]
    truncate: bool,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct AnalyzeCmd {
    /// Raw stream file to analyze.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "report")]
    format: Format,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ExportCmd {
    #[command(flatten)]
    common: CommonFlags,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Drop tail bits so raw output is a whole number of bytes.
    #[arg(long)]
    truncate: bool,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(cmd) => {
            let params = cmd.common.resolve(cmd.pipeline.as_overrides())?;
            let stream = apply_pipeline(run_stream(&params.run_config()?)?, &params)?;
            match cmd.format {
                Format::Raw => write_bytes(cmd.out.as_deref(), &to_raw(stream, cmd.truncate)?),
                Format::Csv => write_text(cmd.out.as_deref(), &correlogram_csv(&stream)?),
                Format::Report => {
                    write_text(cmd.out.as_deref(), &ent_report(&stream)?.to_text())
                }
            }
        }
        Command::Calibrate(cmd) => {
            let extra = Overrides {
                target_bias: cmd.target_bias,
                tolerance: cmd.tolerance,
                window_gates: cmd.window_gates,
                max_iters: cmd.max_iters,
                ..Overrides::default()
            };
            let params = cmd.common.resolve(extra)?;
            let result = calibrate(
                &params.run_config()?,
                params.target_bias,
                params.tolerance,
                params.window_gates,
                params.max_iters,
            )?;
            let text = format!(
                "transmittance={}\nachieved_bias={}\niterations={}\nconverged={}\n",
                result.transmittance,
                result.achieved_bias,
                result.iterations,
                result.converged
            );
            write_text(cmd.out.as_deref(), &text)
        }
        Command::ScanDelay(cmd) => {
            let extra = Overrides {
                delay_min_ns: cmd.delay_min_ns,
                delay_max_ns: cmd.delay_max_ns,
                delay_step_ns: cmd.delay_step_ns,
                gates_per_point: cmd.gates_per_point,
                ..Overrides::default()
            };
            let params = cmd.common.resolve(extra)?;
            let scan = scan_delay(
                &params.run_config()?,
                params.delay_min_ns,
                params.delay_max_ns,
                params.delay_step_ns,
                params.gates_per_point,
            )?;
            let text = match cmd.format {
                Format::Csv => {
                    let mut text = String::from("delay_ns,clicks\n");
                    for point in &scan.points {
                        text.push_str(&format!("{},{}\n", point.delay_ns, point.clicks));
                    }
                    text
                }
                Format::Report => format!(
                    "best_delay_ns={}\npoints={}\n",
                    scan.best_delay_ns,
                    scan.points.len()
                ),
                Format::Raw => {
                    return Err(CliError::domain(
                        "scan-delay emits csv or report, not raw bytes",
                    ))
                }
            };
            write_text(cmd.out.as_deref(), &text)
        }
        Command::Extract(cmd) => {
            let mut layers = Vec::new();
            if let Some(path) = &cmd.config {
                layers.push(parse_config_file(path)?);
            }
            layers.push(cmd.pipeline.as_overrides());
            let params = resolve(&layers)?;
            let stream = apply_pipeline(read_raw(&cmd.input)?, &params)?;
            write_bytes(cmd.out.as_deref(), &to_raw(stream, cmd.truncate)?)
        }
        Command::Analyze(cmd) => {
            let stream = read_raw(&cmd.input)?;
            match cmd.format {
                Format::Report => write_text(cmd.out.as_deref(), &ent_report(&stream)?.to_text()),
                Format::Csv => write_text(cmd.out.as_deref(), &correlogram_csv(&stream)?),
                Format::Raw => Err(CliError::domain(
                    "analyze emits csv or report; use extract for raw output",
                )),
            }
        }
        Command::Export(cmd) => {
            let params = cmd.common.resolve(cmd.pipeline.as_overrides())?;
            let stream = apply_pipeline(run_stream(&params.run_config()?)?, &params)?;
            write_bytes(cmd.out.as_deref(), &to_raw(stream, cmd.truncate)?)
        }
    }
}

/// Decimation then debiasing, as configured.
fn apply_pipeline(stream: BitStream, params: &Params) -> Result<BitStream, CliError> {
    let stream = match params.decimate {
        Some(factor) => decimate(&stream, factor)?,
        None => stream,
    };
    Ok(match params.debias {
        Debias::None => stream,
        Debias::Vn => von_neumann(&stream),
        Debias::Peres => peres(&stream, DEFAULT_PERES_DEPTH)?,
    })
}

/// Packs a stream for headerless export, enforcing whole bytes.
fn to_raw(mut stream: BitStream, truncate: bool) -> Result<Vec<u8>, CliError> {
    if stream.len() % 8 != 0 {
        if !truncate {
            return Err(CliError::domain(format!(
                "stream length {} is not a whole number of bytes; pass --truncate to drop the tail",
                stream.len()
            )));
        }
        stream.truncate(stream.len() / 8 * 8);
    }
    Ok(stream.as_bytes().to_vec())
}

/// Loads a headerless raw file; every byte carries eight bits.
fn read_raw(path: &Path) -> Result<BitStream, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    let bits = bytes.len() * 8;
    Ok(BitStream::from_bytes(bytes, bits).expect("whole bytes always load"))
}

/// Correlogram up to lag 100 (shorter for very short streams).
fn correlogram_csv(stream: &BitStream) -> Result<String, CliError> {
    let k_max = 100.min(stream.len().saturating_sub(1));
    Ok(correlogram(stream, k_max)?.to_csv())
}

fn write_bytes(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|()| stdout.flush())
                .map_err(|e| CliError::io(format!("cannot write to stdout: {e}")))
        }
    }
}

fn write_text(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    write_bytes(out, text.as_bytes())
}
