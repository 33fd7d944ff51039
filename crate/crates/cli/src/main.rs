//! `stcpm` — experiment driver.
//!
//! Exit codes: 0 success, 1 certification failed, 2 usage or configuration
//! error, 3 file I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stcpm::analysis::{BandwidthRule, KeyValue};
use stcpm::experiment::{
    ber_csv, ber_sweep, certify, decode_demo, format_bits, load_config, parse_bits, run_psd, ExperimentConfig,
};
use stcpm::{CorrectionKind, PulseKind, SolutionBranch};

const EXIT_CERTIFY: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "stcpm", version, about = "Space-time coded CPM simulator")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, env = "STCPM_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path (file, or directory for `psd`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long, global = true)]
    alphabet_size: Option<u32>,
    #[arg(long, global = true)]
    mod_index_num: Option<u32>,
    #[arg(long, global = true)]
    mod_index_den: Option<u32>,
    #[arg(long, global = true, value_parser = parse_pulse)]
    pulse: Option<PulseKind>,
    #[arg(long, global = true)]
    memory_len: Option<usize>,
    #[arg(long, global = true)]
    samples_per_symbol: Option<usize>,
    #[arg(long, global = true, value_parser = parse_scheme)]
    scheme: Option<CorrectionKind>,
    #[arg(long, global = true, value_enum)]
    branch: Option<BranchArg>,
    #[arg(long, global = true)]
    n_tx: Option<usize>,
    #[arg(long, global = true)]
    n_rx: Option<usize>,
    /// Comma-separated initial phases in cycles.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    initial_phases: Option<Vec<f64>>,
    /// Comma-separated Eb/N0 grid in dB.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    #[arg(long, global = true)]
    target_errors: Option<u64>,
    #[arg(long, global = true)]
    max_blocks: Option<u64>,
    #[arg(long, global = true)]
    frame_blocks: Option<usize>,
    /// Path memory in code blocks (0 = decide at the end).
    #[arg(long, global = true)]
    truncation_depth: Option<usize>,
    /// Fading coherence in slots (0 = one code block).
    #[arg(long, global = true)]
    fading_slots: Option<usize>,
    #[arg(long, global = true)]
    certify_blocks: Option<usize>,
    #[arg(long, global = true)]
    diversity_symbols: Option<usize>,
    #[arg(long, global = true)]
    diversity_pairs: Option<usize>,
    #[arg(long, global = true)]
    psd_symbols: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    demo_snr_db: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BranchArg {
    Primary,
    Conjugate,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RuleArg {
    /// PSD within N dB of its peak.
    PsdLevel,
    /// All but 10^(-N/10) of the power.
    Containment,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte-Carlo BER over the SNR grid; CSV to --out or stdout.
    BerSweep,
    /// Orthogonality, diversity and representation checks.
    Certify {
        /// Detune antenna 1 by this many cycles per slot.
        #[arg(long, hide = true, default_value_t = 0.0)]
        perturb: f64,
    },
    /// Transmit spectra and bandwidth expansion.
    Psd {
        #[arg(long, value_enum, default_value_t = RuleArg::PsdLevel)]
        rule: RuleArg,
        #[arg(long, default_value_t = 30.0)]
        level_db: f64,
    },
    /// Encode, transmit and decode a bit file.
    DecodeDemo {
        /// Input bits as `0`/`1` characters.
        #[arg(long)]
        bits: PathBuf,
        /// Per-block trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

fn parse_pulse(s: &str) -> Result<PulseKind, String> {
    s.parse().map_err(|e: stcpm::Error| e.to_string())
}

fn parse_scheme(s: &str) -> Result<CorrectionKind, String> {
    s.parse().map_err(|e: stcpm::Error| e.to_string())
}

enum Failure {
    Certify(String),
    Usage(String),
    Io(String),
}

impl From<stcpm::Error> for Failure {
    fn from(e: stcpm::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(Failure::Io(format!("{}: config file not found", path.display())));
            }
            load_config(path)?
        }
        None => ExperimentConfig::default(),
    };
    let o = &cli.overrides;
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = o.$field.clone() { cfg.$field = v; } )* };
    }
    set!(
        alphabet_size, mod_index_num, mod_index_den, pulse, memory_len, samples_per_symbol, scheme, n_tx, n_rx,
        initial_phases, snr_db, target_errors, max_blocks, frame_blocks, truncation_depth, fading_slots,
        certify_blocks, diversity_symbols, diversity_pairs, psd_symbols
    );
    if let Some(b) = o.branch {
        cfg.branch = match b {
            BranchArg::Primary => SolutionBranch::Primary,
            BranchArg::Conjugate => SolutionBranch::Conjugate,
        };
    }
    if o.demo_snr_db.is_some() {
        cfg.demo_snr_db = o.demo_snr_db;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.display().to_string());
    }
    Ok(cfg)
}

fn emit(out: Option<&str>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => write_file(Path::new(path), text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = build_config(&cli)?;
    match cli.command {
        Command::BerSweep => {
            cfg.validate_sweep()?;
            let records = ber_sweep(&cfg, |r| {
                eprintln!(
                    "Eb/N0={} dB ber={:.3e} errors={} bits={} deff={:.2} time={:.1}s{}",
                    r.eb_n0_db,
                    r.ber,
                    r.errors,
                    r.bits,
                    r.design_effect,
                    r.wall_time_s,
                    if r.low_confidence() { " low-confidence" } else { "" }
                )
            })?;
            emit(cfg.out.as_deref(), &ber_csv(&records))
        }
        Command::Certify { perturb } => {
            let report = certify(&cfg, perturb)?;
            let text = report.to_kv_string();
            emit(cfg.out.as_deref(), &text)?;
            if report.pass() {
                Ok(())
            } else {
                Err(Failure::Certify("certification failed".into()))
            }
        }
        Command::Psd { rule, level_db } => {
            let rule = match rule {
                RuleArg::PsdLevel => BandwidthRule::PsdLevel { db: level_db },
                RuleArg::Containment => BandwidthRule::PowerContainment { db: level_db },
            };
            let reports = run_psd(&cfg, rule)?;
            if let Some(dir) = cfg.out.as_deref().map(Path::new) {
                fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
                for r in &reports {
                    write_file(&dir.join(format!("psd_ant{}.csv", r.antenna + 1)), &r.to_csv())?;
                }
            }
            for r in &reports {
                println!("{}", r.key_values().iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" "));
            }
            Ok(())
        }
        Command::DecodeDemo { bits, trace } => {
            let text = fs::read_to_string(&bits).map_err(|e| io_err(&bits, e))?;
            let input = parse_bits(&text)?;
            let report = decode_demo(&cfg, &input)?;
            emit(cfg.out.as_deref(), &format_bits(&report.decoded_bits))?;
            if let Some(path) = &trace {
                write_file(path, &report.trace)?;
            }
            eprint!("{}", report.to_kv_string());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Certify(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CERTIFY)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_IO)
        }
    }
}
