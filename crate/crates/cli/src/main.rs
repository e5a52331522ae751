//! `gsg`: file-based front end for the Gaussian-state circuit toolkit.
//!
//! Every command reads JSON inputs, writes JSON or CSV outputs with floats in
//! a fixed 17-significant-digit format, and embeds the resolved run
//! configuration, so identical invocations produce byte-identical files.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gsg_core::analysis::{
    displacement_fidelity_curve, fit_bound_constants, loss_fidelity_grid,
};
use gsg_core::circuit::{
    apply_loss_model, build_two_mode_chip, simulate, simulate_with_oracle, CircuitProgram,
    LossModel, VoltageFrame, DEFAULT_CELL_PART_FRACTION,
};
use gsg_core::compiler::{compile, eta_budget_db, CompileOptions, GaussianTarget};
use gsg_core::fock::DEFAULT_TAIL_TOL;
use gsg_core::gaussian::{wigner_slice, GaussianState, GridSpec};
use output::{emit_csv, emit_json, state_value, vec_value, RunConfig};

#[derive(Parser)]
#[command(
    name = "gsg",
    version,
    about = "Simulate and compile multimode Gaussian photonic circuits",
    after_help = "Grids: lo:hi:N is linear, lo:hi:Nlog is log-spaced. \
                  Set GSG_THREADS to cap sweep parallelism."
)]
struct Cli {
    /// Recorded in every output for reproducibility of randomized workflows
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a circuit program
    Simulate {
        /// Circuit program JSON
        circuit: PathBuf,
        /// Insertion-loss model JSON to fold into the program
        #[arg(long)]
        loss: Option<PathBuf>,
        /// Cross-check moments in the photon-number basis
        #[arg(long)]
        oracle: bool,
        /// Photon-basis cutoff (defaults to an estimate from the program)
        #[arg(long)]
        cutoff: Option<usize>,
        /// Output path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compile a pure Gaussian target into a circuit program and voltages
    Compile {
        /// Target state JSON (squeezing, rotation, displacements)
        target: PathBuf,
        /// Displacement beam amplitude
        #[arg(long, default_value_t = 40.0)]
        alpha0: f64,
        /// Insertion-loss model JSON; adds a compensated lossy program
        #[arg(long)]
        loss: Option<PathBuf>,
        /// Fidelity level whose coupling budget is checked (0.95 or 0.98)
        #[arg(long)]
        fidelity: Option<f64>,
        /// Output path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build and simulate the two-mode chip from a voltage frame
    Chip {
        /// Voltage frame JSON (v1..v11, alpha0)
        voltages: PathBuf,
        /// Insertion-loss model JSON to fold into the chip
        #[arg(long)]
        loss: Option<PathBuf>,
        /// Output path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a Wigner-function slice of a saved state
    Wigner {
        /// Gaussian state JSON, or any output with a state/reduced field
        state: PathBuf,
        /// Two quadrature axes, e.g. x2,p2 (modes are 1-based)
        #[arg(long)]
        axes: String,
        /// Pin other quadratures, e.g. x1=0.5,p1=0 (default: state mean)
        #[arg(long, allow_hyphen_values = true)]
        fixed: Option<String>,
        /// Axis range lo:hi shared by both axes
        #[arg(long, allow_hyphen_values = true)]
        range: String,
        /// Points per axis
        #[arg(long)]
        n: usize,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Fidelity of the skimmed displacement against the coupling grid
    SweepEta {
        /// Squeezing of the displaced signal
        #[arg(long)]
        r: f64,
        /// Target displacement amplitude
        #[arg(long)]
        alpha: f64,
        /// Coupling grid, e.g. 1e-4:1e-1:60log
        #[arg(long)]
        grid: String,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Bisect coupling thresholds over a squeezing grid and fit a r^b curve
    FitBound {
        /// Fidelity level to hold, in (0, 1)
        #[arg(long)]
        fidelity: f64,
        /// Squeezing grid
        #[arg(long, default_value = "0.3:1.8:16")]
        grid: String,
        /// Output JSON path
        #[arg(long)]
        out: PathBuf,
    },
    /// Chip fidelity against its ideal target under insertion loss
    SweepLoss {
        /// Comma-separated loss levels in dB per mixing cell, e.g. 0,0.1,2.2
        #[arg(long)]
        levels: String,
        /// Re-tune the skim couplings at each point before scoring
        #[arg(long)]
        mitigate: bool,
        /// Squeezing grid for the chip frame (drivable range is 0..1)
        #[arg(long, default_value = "0.1:1.0:10")]
        r_grid: String,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure modes, each with its own exit code so scripts can branch on them.
#[derive(Debug)]
enum CliError {
    /// Bad flags, unknown subcommand, malformed grid or axis syntax: 2
    Usage(String),
    /// Unreadable or unwritable file: 3
    Io(String),
    /// File read but not valid JSON for the expected shape: 4
    Parse(String),
    /// Inputs parsed but violate a documented range or shape: 5
    Validation(String),
    /// Bisection, compensation, or truncation failure: 6
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Parse(_) => 4,
            CliError::Validation(_) => 5,
            CliError::Numerical(_) => 6,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
            CliError::Parse(_) => "parse",
            CliError::Validation(_) => "validation",
            CliError::Numerical(_) => "numerical",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Io(m)
            | CliError::Parse(m)
            | CliError::Validation(m)
            | CliError::Numerical(m) => m,
        }
    }
}

impl From<gsg_core::Error> for CliError {
    fn from(e: gsg_core::Error) -> Self {
        use gsg_core::Error::*;
        let msg = e.to_string();
        match e {
            TruncationTail { .. } | CascadeInfeasible { .. } | CompensationInfeasible { .. }
            | CompensationDiverged { .. } | BisectionFailed(_) | Numerical(_) => {
                CliError::Numerical(msg)
            }
            _ => CliError::Validation(msg),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            return fail(&CliError::Usage(e.to_string()));
        }
        // --help / --version print to stdout and exit cleanly
        Err(e) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    if let Err(e) = init_threads() {
        return fail(&e);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    let obj = serde_json::json!({
        "error": { "kind": e.kind(), "exit_code": e.exit_code(), "message": e.message() }
    });
    eprintln!("{obj}");
    ExitCode::from(e.exit_code())
}

/// Caps the rayon pool when GSG_THREADS is set.
fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("GSG_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("GSG_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Simulate {
            circuit,
            loss,
            oracle,
            cutoff,
            out,
        } => {
            let mut rc = RunConfig::new("simulate", &[&circuit], out.as_deref(), seed);
            rc.opt("oracle", oracle.into());
            if let Some(c) = cutoff {
                rc.opt("cutoff", c.into());
            }
            let program: CircuitProgram = read_json(&circuit)?;
            let program = fold_loss(program, loss.as_deref(), &mut rc)?;
            let result = if oracle {
                simulate_with_oracle(&program, cutoff, DEFAULT_TAIL_TOL)?
            } else {
                simulate(&program)?
            };
            let mut payload = serde_json::Map::new();
            payload.insert("state".into(), state_value(&result.state));
            if let Some(reduced) = &result.reduced {
                payload.insert("reduced".into(), state_value(reduced));
            }
            if let Some(fock) = &result.fock {
                payload.insert(
                    "fock".into(),
                    serde_json::json!({
                        "cutoff": fock.cutoff,
                        "mean": vec_value(&fock.mean),
                        "cov": output::mat_value(&fock.cov),
                    }),
                );
            }
            emit_json(&rc, payload, out.as_deref())
        }
        Command::Compile {
            target,
            alpha0,
            loss,
            fidelity,
            out,
        } => {
            let mut rc = RunConfig::new("compile", &[&target], out.as_deref(), seed);
            rc.opt("alpha0", alpha0.into());
            if let Some(level) = fidelity {
                rc.opt("fidelity", level.into());
            }
            let spec: GaussianTarget = read_json(&target)?;
            let mut opts = CompileOptions {
                alpha0,
                fidelity_level: fidelity,
                ..CompileOptions::default()
            };
            if let Some(path) = loss.as_deref() {
                rc.opt("loss", path.display().to_string().into());
                opts.loss = Some(read_json::<LossModel>(path)?);
            }
            let compiled = compile(&spec, &opts)?;
            let value = serde_json::to_value(&compiled)
                .map_err(|e| CliError::Numerical(format!("serialization: {e}")))?;
            let serde_json::Value::Object(payload) = value else {
                unreachable!("compiled program serializes to an object");
            };
            emit_json(&rc, payload, out.as_deref())
        }
        Command::Chip { voltages, loss, out } => {
            let mut rc = RunConfig::new("chip", &[&voltages], out.as_deref(), seed);
            let frame: VoltageFrame = read_json(&voltages)?;
            let program = build_two_mode_chip(&frame)?;
            let program = fold_loss(program, loss.as_deref(), &mut rc)?;
            let result = simulate(&program)?;
            let mut payload = serde_json::Map::new();
            payload.insert("state".into(), state_value(&result.state));
            if let Some(reduced) = &result.reduced {
                payload.insert("reduced".into(), state_value(reduced));
            }
            emit_json(&rc, payload, out.as_deref())
        }
        Command::Wigner {
            state,
            axes,
            fixed,
            range,
            n,
            out,
        } => {
            let mut rc = RunConfig::new("wigner", &[&state], Some(&out), seed);
            rc.opt("axes", axes.clone().into());
            rc.opt("range", range.clone().into());
            rc.opt("n", n.into());
            if let Some(f) = &fixed {
                rc.opt("fixed", f.clone().into());
            }
            let state = read_state(&state)?;
            let (ai, aj, names) = parse_axes(&axes, state.n_modes())?;
            let mut base = state.mean().clone();
            for (idx, value) in parse_fixed(fixed.as_deref(), state.n_modes())? {
                base[idx] = value;
            }
            let (lo, hi) = parse_range(&range)?;
            let grid = GridSpec { lo, hi, n };
            let slice = wigner_slice(&state, (ai, aj), &base, grid, grid)?;
            let mut rows = Vec::with_capacity(slice.xs.len() * slice.ys.len());
            for (j, &y) in slice.ys.iter().enumerate() {
                for (i, &x) in slice.xs.iter().enumerate() {
                    rows.push(vec![x, y, slice.values[j * slice.xs.len() + i]]);
                }
            }
            let sweep = gsg_core::analysis::SweepResult {
                label: "wigner_slice".into(),
                metadata: Vec::new(),
                columns: vec![names.0, names.1, "wigner".into()],
                rows,
            };
            emit_csv(&rc, sweep, &out)
        }
        Command::SweepEta { r, alpha, grid, out } => {
            let mut rc = RunConfig::new("sweep-eta", &[], Some(&out), seed);
            rc.opt("r", r.into());
            rc.opt("alpha", alpha.into());
            rc.opt("grid", grid.clone().into());
            let etas = parse_grid(&grid)?;
            let sweep = displacement_fidelity_curve(r, alpha, &etas)?;
            emit_csv(&rc, sweep, &out)
        }
        Command::FitBound { fidelity, grid, out } => {
            let mut rc = RunConfig::new("fit-bound", &[], Some(&out), seed);
            rc.opt("fidelity", fidelity.into());
            rc.opt("grid", grid.clone().into());
            let rs = parse_grid(&grid)?;
            let fit = fit_bound_constants(fidelity, &rs, 0.01)?;
            // how far the tabulated constants sit from the bisected data
            let reference_gap = match eta_budget_db(1.0, fidelity) {
                Ok(_) => {
                    let gap = fit
                        .r
                        .iter()
                        .zip(&fit.threshold_db)
                        .map(|(&r, &db)| (eta_budget_db(r, fidelity).unwrap() - db).abs())
                        .fold(0.0f64, f64::max);
                    serde_json::Value::from(gap)
                }
                Err(_) => serde_json::Value::Null,
            };
            let mut payload = serde_json::Map::new();
            payload.insert(
                "fit".into(),
                serde_json::to_value(&fit)
                    .map_err(|e| CliError::Numerical(format!("serialization: {e}")))?,
            );
            payload.insert("reference_max_gap_db".into(), reference_gap);
            emit_json(&rc, payload, Some(&out))
        }
        Command::SweepLoss {
            levels,
            mitigate,
            r_grid,
            out,
        } => {
            let mut rc = RunConfig::new("sweep-loss", &[], Some(&out), seed);
            rc.opt("levels", levels.clone().into());
            rc.opt("mitigate", mitigate.into());
            rc.opt("r_grid", r_grid.clone().into());
            let dbs = parse_levels(&levels)?;
            let rs = parse_grid(&r_grid)?;
            let sweep = loss_fidelity_grid(&rs, &dbs, DEFAULT_CELL_PART_FRACTION, mitigate)?;
            emit_csv(&rc, sweep, &out)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&raw).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// Reads a bare state file, or pulls the signal state out of a previous
/// `chip`/`simulate` output (preferring `reduced` over the full rail set).
fn read_state(path: &Path) -> Result<GaussianState, CliError> {
    let value: serde_json::Value = read_json(path)?;
    let inner = value
        .get("reduced")
        .or_else(|| value.get("state"))
        .unwrap_or(&value);
    serde_json::from_value(inner.clone())
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn fold_loss(
    program: CircuitProgram,
    loss: Option<&Path>,
    rc: &mut RunConfig,
) -> Result<CircuitProgram, CliError> {
    let Some(path) = loss else {
        return Ok(program);
    };
    rc.opt("loss", path.display().to_string().into());
    let model: LossModel = read_json(path)?;
    Ok(apply_loss_model(&program, &model)?)
}

/// Parses "lo:hi:N" (linear) or "lo:hi:Nlog" (log-spaced) into grid points.
fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("grid {spec:?} is not lo:hi:N or lo:hi:Nlog"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, count] = parts.as_slice() else {
        return Err(bad());
    };
    let lo: f64 = lo.parse().map_err(|_| bad())?;
    let hi: f64 = hi.parse().map_err(|_| bad())?;
    let (count, log) = match count.strip_suffix("log") {
        Some(c) => (c, true),
        None => (*count, false),
    };
    let n: usize = count.parse().map_err(|_| bad())?;
    if n == 0 || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    // endpoints are pinned exactly; only interior points go through the map
    let point = |i: usize| -> f64 {
        if i == 0 {
            lo
        } else if i == n - 1 {
            hi
        } else if log {
            let (llo, lhi) = (lo.ln(), hi.ln());
            (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp()
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    if log && (lo <= 0.0 || hi <= 0.0) {
        return Err(CliError::Usage(format!(
            "log grid {spec:?} needs positive endpoints"
        )));
    }
    Ok((0..n).map(point).collect())
}

fn parse_range(spec: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("range {spec:?} is not lo:hi"));
    let (lo, hi) = spec.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.parse().map_err(|_| bad())?;
    let hi: f64 = hi.parse().map_err(|_| bad())?;
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn parse_levels(spec: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("loss level {s:?} is not a number")))
        })
        .collect()
}

/// Quadrature name `x<k>` or `p<k>` (1-based mode) to interleaved index.
fn parse_quadrature(name: &str, n_modes: usize) -> Result<usize, CliError> {
    let bad = || {
        CliError::Usage(format!(
            "quadrature {name:?} is not x<mode> or p<mode> with mode in 1..={n_modes}"
        ))
    };
    let (kind, mode) = name.split_at(1);
    let offset = match kind {
        "x" => 0,
        "p" => 1,
        _ => return Err(bad()),
    };
    let mode: usize = mode.parse().map_err(|_| bad())?;
    if mode == 0 || mode > n_modes {
        return Err(bad());
    }
    Ok(2 * (mode - 1) + offset)
}

fn parse_axes(spec: &str, n_modes: usize) -> Result<(usize, usize, (String, String)), CliError> {
    let (a, b) = spec
        .split_once(',')
        .ok_or_else(|| CliError::Usage(format!("axes {spec:?} are not name,name")))?;
    let (a, b) = (a.trim(), b.trim());
    let ai = parse_quadrature(a, n_modes)?;
    let aj = parse_quadrature(b, n_modes)?;
    if ai == aj {
        return Err(CliError::Usage(format!("axes {spec:?} must be distinct")));
    }
    Ok((ai, aj, (a.to_string(), b.to_string())))
}

fn parse_fixed(spec: Option<&str>, n_modes: usize) -> Result<Vec<(usize, f64)>, CliError> {
    let Some(spec) = spec else {
        return Ok(Vec::new());
    };
    spec.split(',')
        .map(|part| {
            let (name, value) = part.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("fixed entry {part:?} is not name=value"))
            })?;
            let idx = parse_quadrature(name.trim(), n_modes)?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("fixed value {value:?} is not a number")))?;
            Ok((idx, value))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_parse_linear_and_log() {
        let lin = parse_grid("0:1:5").unwrap();
        assert_eq!(lin, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let log = parse_grid("1e-4:1e-2:3log").unwrap();
        assert!((log[1] - 1e-3).abs() < 1e-12);
        assert_eq!(parse_grid("2:2:1").unwrap(), vec![2.0]);
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("a:2:3").is_err());
        assert!(parse_grid("-1:1:3log").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }

    #[test]
    fn quadrature_names_map_to_interleaved_indices() {
        assert_eq!(parse_quadrature("x1", 2).unwrap(), 0);
        assert_eq!(parse_quadrature("p1", 2).unwrap(), 1);
        assert_eq!(parse_quadrature("x2", 2).unwrap(), 2);
        assert_eq!(parse_quadrature("p2", 2).unwrap(), 3);
        assert!(parse_quadrature("x3", 2).is_err());
        assert!(parse_quadrature("q1", 2).is_err());
        assert!(parse_quadrature("x0", 2).is_err());
    }

    #[test]
    fn fixed_lists_parse() {
        let fixed = parse_fixed(Some("x1=0.5, p2=-1"), 2).unwrap();
        assert_eq!(fixed, vec![(0, 0.5), (3, -1.0)]);
        assert!(parse_fixed(Some("x1:0.5"), 2).is_err());
    }
}
