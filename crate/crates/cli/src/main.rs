//! Command-line front end for the randomness-amplification toolkit.
//!
//! Subcommands:
//!
//! * `run` — full pipeline: resolve a JSON configuration, play the blockwise
//!   game, and (on completion) extract the final output. Writes
//!   `report.json`, `transcript.csv`, and `r.bits`/`r.hex`.
//! * `simulate` — device and transcript only; writes `transcript.csv`.
//! * `bound` — entropy-accumulation bound passthrough from raw parameters.
//! * `extract` — one-shot seeded extraction on explicit bit strings.
//! * `twosource` — inner-product two-source extraction on explicit bits.
//! * `score` — game-score diagnostics for the configured device.
//! * `certify-srs` — exact per-block certification of the seeded table.
//!
//! Exit codes: 0 success, 2 protocol abort, 3 invalid or infeasible
//! configuration (including bad command-line arguments), 4 runtime error
//! (I/O or serialization). No environment variables are read; randomness is
//! seeded only through the configuration file or `--seed`.

use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use blockamp_core::bits::{BitString, Distribution};
use blockamp_core::eat::{
    accumulation_g, accumulation_g_three_party, certificate, chain_penalty, EatConfig,
};
use blockamp_core::mdl::{
    lhv_max_three_party, lhv_max_two_party, mdl_score, nu_window, parity_correlator_sum,
    uniform_nu, Game,
};
use blockamp_core::protocol::{resolve, run_protocol, ProtocolConfig};
use blockamp_core::srs::{certify_seeded_table, SubstringRule};
use blockamp_core::trevisan::{CodeKind, TrevisanExtractor, TrevisanParams};
use blockamp_core::two_source::two_source_extract;

// ───────────────────────── argument surface ─────────────────────────

#[derive(Parser)]
#[command(
    name = "blockamp",
    version,
    about = "Randomness amplification from a two-block min-entropy source",
    after_help = "Exit codes: 0 success, 2 protocol abort, 3 invalid/infeasible configuration, 4 runtime error."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full protocol: game rounds, abort test, extraction, report.
    Run(RunArgs),
    /// Sample the device and write the transcript without extracting.
    Simulate(RunArgs),
    /// Evaluate the entropy-accumulation bound for explicit parameters.
    Bound(BoundArgs),
    /// Apply the seeded extractor to explicit input and seed bits.
    Extract(ExtractArgs),
    /// Apply the inner-product two-source extractor to explicit bits.
    Twosource(TwoSourceArgs),
    /// Report game-score diagnostics for the configured device.
    Score(ConfigArgs),
    /// Certify the enumerated seeded table block by block.
    CertifySrs(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to a JSON protocol configuration.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Path to a JSON protocol configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configuration's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files (created if missing).
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BoundArgs {
    /// Smoothing parameter γ ∈ (0, 1).
    #[arg(long)]
    gamma: f64,
    /// Accumulation error budget ε_EA ∈ (0, 1).
    #[arg(long)]
    eps_ea: f64,
    /// Abort threshold δ on the per-block empirical score.
    #[arg(long)]
    delta: f64,
    /// Game rounds per block (half the consumed input bits).
    #[arg(long)]
    half_block: u64,
    /// Input bias ε ∈ [0, 1/2).
    #[arg(long)]
    eps: f64,
    /// Use the three-party parity game instead of the two-party game.
    #[arg(long)]
    three_party: bool,
}

#[derive(Args)]
struct ExtractArgs {
    /// Input bits: a 0/1 string, or @path to read one from a file.
    #[arg(long)]
    x: String,
    /// Seed bits (length must equal the derived seed length d = q²).
    #[arg(long)]
    y: String,
    /// Seed bits consumed per output bit (design set size).
    #[arg(long)]
    t: u32,
    /// Output length in bits.
    #[arg(long)]
    m: usize,
    /// Rated extraction error.
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    /// One-bit code: rs-hadamard or linear-select.
    #[arg(long, default_value = "linear-select")]
    code: String,
    /// Output rendering: bits or hex.
    #[arg(long, default_value = "bits")]
    format: String,
}

#[derive(Args)]
struct TwoSourceArgs {
    /// First source bits: a 0/1 string, or @path.
    #[arg(long)]
    x1: String,
    /// Second source bits: a 0/1 string, or @path.
    #[arg(long)]
    x2: String,
    /// Output length in bits.
    #[arg(long)]
    m: usize,
    /// Output rendering: bits or hex.
    #[arg(long, default_value = "bits")]
    format: String,
}

// ───────────────────────── failure plumbing ─────────────────────────

/// A failed command, tagged with the exit code class it belongs to.
enum Failure {
    /// The configuration or arguments are invalid or infeasible (exit 3).
    Config(String),
    /// The machine failed us: I/O or serialization (exit 4).
    Runtime(String),
}

type CmdResult = Result<u8, Failure>;

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests arrive as "errors" but exit cleanly;
            // genuine usage errors fall in the configuration class.
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Run(args) => cmd_run(&args),
        Cmd::Simulate(args) => cmd_simulate(&args),
        Cmd::Bound(args) => cmd_bound(&args),
        Cmd::Extract(args) => cmd_extract(&args),
        Cmd::Twosource(args) => cmd_twosource(&args),
        Cmd::Score(args) => cmd_score(&args),
        Cmd::CertifySrs(args) => cmd_certify_srs(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(4)
        }
    }
}

// ───────────────────────── shared helpers ─────────────────────────

fn load_config(path: &Path) -> Result<ProtocolConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("cannot parse {}: {e}", path.display())))
}

/// Parses a bit-string argument: literal 0/1 text, or `@path` to a file.
fn bits_arg(name: &str, value: &str) -> Result<BitString, Failure> {
    let text = if let Some(path) = value.strip_prefix('@') {
        fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {name} from {path}: {e}")))?
    } else {
        value.to_string()
    };
    BitString::from_text(&text).map_err(|e| Failure::Config(format!("{name}: {e}")))
}

fn render_bits(bits: &BitString, format: &str) -> Result<String, Failure> {
    match format {
        "bits" => Ok(bits.to_text()),
        "hex" => bits
            .to_hex()
            .map_err(|e| Failure::Config(format!("{e}; use --format bits"))),
        other => Err(Failure::Config(format!(
            "unknown format {other:?}; expected bits or hex"
        ))),
    }
}

/// Prints one line to stdout. A closed pipe (e.g. `blockamp … | head`) is
/// tolerated silently so the command still reports its real exit code; all
/// files are written before anything is printed, so no output is lost.
fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(Failure::Runtime(format!("cannot write to stdout: {e}"))),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn ensure_out_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

// ───────────────────────── subcommands ─────────────────────────

fn cmd_run(args: &RunArgs) -> CmdResult {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let run = run_protocol(&cfg, None, None).map_err(config_err)?;
    ensure_out_dir(&args.out_dir)?;
    let report_json = serde_json::to_string_pretty(&run.report).map_err(runtime_err)?;
    write_file(&args.out_dir.join("report.json"), &report_json)?;
    write_file(&args.out_dir.join("transcript.csv"), &run.transcript.to_csv())?;
    if let Some(r) = &run.output {
        write_file(&args.out_dir.join("r.bits"), &format!("{}\n", r.to_text()))?;
        if r.len() % 4 == 0 {
            let hex = r.to_hex().map_err(runtime_err)?;
            write_file(&args.out_dir.join("r.hex"), &format!("{hex}\n"))?;
        }
    }
    emit(report_json.as_str())?;
    if run.transcript.abort {
        eprintln!(
            "abort: {} of {} blocks scored below delta = {}",
            run.transcript.failing_blocks(cfg.delta).len(),
            run.transcript.block_scores.len(),
            cfg.delta
        );
        Ok(2)
    } else {
        eprintln!(
            "completed: {} output bits, certified: {}",
            run.report.output_bits, run.report.certified
        );
        Ok(0)
    }
}

fn cmd_simulate(args: &RunArgs) -> CmdResult {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let run = run_protocol(&cfg, None, None).map_err(config_err)?;
    ensure_out_dir(&args.out_dir)?;
    write_file(&args.out_dir.join("transcript.csv"), &run.transcript.to_csv())?;
    let summary = json!({
        "abort": run.transcript.abort,
        "blocks": run.transcript.block_scores.len(),
        "m_prime": run.transcript.m_prime,
        "rounds": run.transcript.rounds(),
        "delta": cfg.delta,
        "block_scores": run.transcript.block_scores,
        "failing_blocks": run.transcript.failing_blocks(cfg.delta),
    });
    emit(&serde_json::to_string_pretty(&summary).map_err(runtime_err)?)?;
    Ok(if run.transcript.abort { 2 } else { 0 })
}

fn cmd_bound(args: &BoundArgs) -> CmdResult {
    let cfg = EatConfig {
        gamma: args.gamma,
        eps_ea: args.eps_ea,
        delta: args.delta,
        half_block: args.half_block,
        eps: args.eps,
    };
    let penalty = chain_penalty(args.gamma).map_err(config_err)?;
    let out = if args.three_party {
        let g = accumulation_g_three_party(&cfg).map_err(config_err)?;
        json!({ "g": g, "chain_penalty": penalty })
    } else {
        let g = accumulation_g(&cfg).map_err(config_err)?;
        let cert = certificate(&cfg).map_err(config_err)?;
        json!({ "g": g, "chain_penalty": penalty, "certificate": cert })
    };
    emit(&serde_json::to_string_pretty(&out).map_err(runtime_err)?)?;
    Ok(0)
}

fn cmd_extract(args: &ExtractArgs) -> CmdResult {
    let x = bits_arg("--x", &args.x)?;
    let y = bits_arg("--y", &args.y)?;
    let code = match args.code.as_str() {
        "rs-hadamard" => CodeKind::RsHadamard,
        "linear-select" => CodeKind::LinearSelect,
        other => {
            return Err(Failure::Config(format!(
                "unknown code {other:?}; expected rs-hadamard or linear-select"
            )))
        }
    };
    let params =
        TrevisanParams::desk(x.len(), args.t, args.m, args.eps, code).map_err(config_err)?;
    let ext = TrevisanExtractor::new(params).map_err(config_err)?;
    if y.len() != ext.params().d {
        return Err(Failure::Config(format!(
            "seed is {} bits but the design needs d = {}",
            y.len(),
            ext.params().d
        )));
    }
    let out = ext.extract(&x, &y).map_err(config_err)?;
    emit(&render_bits(&out, &args.format)?)?;
    Ok(0)
}

fn cmd_twosource(args: &TwoSourceArgs) -> CmdResult {
    let x1 = bits_arg("--x1", &args.x1)?;
    let x2 = bits_arg("--x2", &args.x2)?;
    let out = two_source_extract(&x1, &x2, args.m).map_err(config_err)?;
    emit(&render_bits(&out, &args.format)?)?;
    Ok(0)
}

fn cmd_score(args: &ConfigArgs) -> CmdResult {
    let cfg = load_config(&args.config)?;
    let behavior = cfg.device.behavior().map_err(config_err)?;
    let game = match behavior.parties() {
        2 => Game::TwoParty,
        3 => Game::ThreeParty,
        p => return Err(Failure::Config(format!("no game for {p} parties"))),
    };
    let g_exp =
        mdl_score(game, &behavior, &uniform_nu(game), cfg.eps_bias).map_err(config_err)?;
    let window = nu_window(game, cfg.eps_bias).map_err(config_err)?;
    let lhv = match game {
        Game::TwoParty => lhv_max_two_party(cfg.eps_bias),
        Game::ThreeParty => lhv_max_three_party(cfg.eps_bias),
    }
    .map_err(config_err)?;
    let mut out = json!({
        "parties": behavior.parties(),
        "eps_bias": cfg.eps_bias,
        "nu_window": [window.0, window.1],
        "g_exp": g_exp,
        "lhv_max": lhv,
        "quantum_advantage": g_exp - lhv,
    });
    if game == Game::ThreeParty {
        let m = parity_correlator_sum(&behavior).map_err(config_err)?;
        out["correlator_sum"] = json!(m);
    }
    emit(&serde_json::to_string_pretty(&out).map_err(runtime_err)?)?;
    Ok(0)
}

fn cmd_certify_srs(args: &ConfigArgs) -> CmdResult {
    let cfg = load_config(&args.config)?;
    let resolved = resolve(&cfg).map_err(config_err)?;
    let source = Distribution::uniform(cfg.n).map_err(config_err)?;
    let cert = certify_seeded_table(
        &resolved.extractor,
        &source,
        resolved.m_prime,
        SubstringRule::Prefix,
        Some(resolved.d_enum),
        resolved.eps_srs,
    )
    .map_err(config_err)?;
    emit(&serde_json::to_string_pretty(&cert).map_err(runtime_err)?)?;
    Ok(0)
}
