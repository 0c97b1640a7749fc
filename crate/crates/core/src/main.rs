use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use matrix_hill::contour::Contour;
use matrix_hill::par::Execution;
use matrix_hill::report::{self, Document};
use matrix_hill::spectrum::{
    analyze_window, antiperiodic_eigenvalues, complex_resonances, periodic_eigenvalues, reconstruct_dminus,
    reconstruct_dplus, reconstructed_resonances, reconstruction_table, resonances_near_axis, shell_eigenvalues,
    signed_sqrt_grid, spectral_floor, sweep, Resonance, SpectrumOptions,
};
use matrix_hill::verify::{self, Suite, VerifyOptions};
use matrix_hill::{HillError, HillOperator, PotentialSpec, PropagationConfig};

#[derive(Parser, Debug)]
#[command(name = "matrix-hill", version, about = "Spectra of periodic 2x2 matrix Schrödinger operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Band/gap structure with gap classification.
    Bands(Common),
    /// Periodic and anti-periodic eigenvalues.
    Eigs {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Which::Both)]
        which: Which,
    },
    /// Zeros of rho near the real window or inside a complex rectangle.
    Resonances(Common),
    /// Run a built-in verification suite (or `all`).
    Verify {
        suite: String,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
    },
    /// Rebuild D± from computed eigenvalues and compare with direct values.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Largest accepted tail estimate.
        #[arg(long, default_value_t = 1e-3)]
        tail_tol: f64,
    },
    /// Delta1, Delta2, rho, D± on a real grid.
    Sweep(Common),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Which {
    Periodic,
    Antiperiodic,
    Both,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct Common {
    /// Potential document: a file path or inline JSON.
    #[arg(long)]
    potential: Option<String>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], allow_negative_numbers = true)]
    window: Option<Vec<f64>>,
    #[arg(long, num_args = 4, value_names = ["RE0", "RE1", "IM0", "IM1"], allow_negative_numbers = true)]
    rect: Option<Vec<f64>>,
    /// Grid points per unit of sqrt|lambda|.
    #[arg(long)]
    grid: Option<f64>,
    /// Relative propagation tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    base_steps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long, default_value_t = 30)]
    n_max: usize,
    #[arg(long, default_value_t = 40)]
    truncate: usize,
    /// Evaluate everything on one thread.
    #[arg(long)]
    sequential: bool,
}

enum Failure {
    Config(String),
    Numerical(String),
    Verification,
}

impl From<HillError> for Failure {
    fn from(e: HillError) -> Self {
        match e {
            HillError::Schema(_)
            | HillError::NonSymmetric { .. }
            | HillError::DeltaLocation(_)
            | HillError::DuplicateDelta(_)
            | HillError::InvalidParameter(_)
            | HillError::Io(_)
            | HillError::Json(_) => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

type Run<T> = std::result::Result<T, Failure>;

impl Common {
    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    fn config(&self) -> Run<PropagationConfig> {
        let mut c = PropagationConfig::default();
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(Failure::Config(format!("--tol must be positive, got {t}")));
            }
            c.tol = t;
        }
        if let Some(b) = self.base_steps {
            if b == 0 || b > c.max_steps {
                return Err(Failure::Config(format!("--base-steps must be in 1..={}", c.max_steps)));
            }
            c.base_steps = b;
        }
        Ok(c)
    }

    fn spectrum(&self) -> Run<SpectrumOptions> {
        let mut o = SpectrumOptions::default().with_exec(self.exec());
        if let Some(g) = self.grid {
            if !(g > 0.0) {
                return Err(Failure::Config(format!("--grid must be positive, got {g}")));
            }
            o.grid_density = g;
        }
        Ok(o)
    }

    fn spec(&self) -> Run<PotentialSpec> {
        let p = self.potential.as_deref().ok_or_else(|| Failure::Config("--potential is required".into()))?;
        let text = if p.trim_start().starts_with('{') { p.to_string() } else { fs::read_to_string(p).map_err(HillError::from)? };
        Ok(PotentialSpec::parse_str(&text)?)
    }

    fn operator(&self) -> Run<HillOperator> {
        Ok(HillOperator::from_spec(&self.spec()?, self.config()?))
    }

    fn window_or(&self, default: (f64, f64)) -> Run<(f64, f64)> {
        let w = self.window.as_ref().map_or(default, |v| (v[0], v[1]));
        if !(w.0 < w.1) || !w.0.is_finite() || !w.1.is_finite() {
            return Err(Failure::Config(format!("window [{}, {}] is empty", w.0, w.1)));
        }
        Ok(w)
    }

    fn echo(&self) -> Value {
        json!({
            "potential": self.potential,
            "window": self.window,
            "rect": self.rect,
            "grid": self.grid,
            "tol": self.tol,
            "base_steps": self.base_steps,
            "format": format!("{:?}", self.format).to_lowercase(),
            "n_max": self.n_max,
            "truncate": self.truncate,
        })
    }

    fn emit(&self, text: &str) -> Run<()> {
        match &self.out {
            Some(p) => fs::write(p, text).map_err(|e| Failure::Config(format!("cannot write {}: {e}", p.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn document<R: serde::Serialize>(meta: Value, results: R, diagnostics: Value) -> Run<String> {
    Ok(report::to_json(&Document { meta, results, diagnostics })?)
}

fn default_window(op: &HillOperator) -> (f64, f64) {
    (spectral_floor(op.potential()), 400.0)
}

fn bands(c: &Common) -> Run<()> {
    let op = c.operator()?;
    let window = c.window_or(default_window(&op))?;
    let r = analyze_window(&op, window, &c.spectrum()?)?;
    let diag = json!(r.diagnostics);
    let meta = report::meta("bands", c.echo(), op.potential());
    c.emit(&document(meta, &r, diag)?)
}

fn eigs(c: &Common, which: Which) -> Run<()> {
    let op = c.operator()?;
    let window = c.window_or(default_window(&op))?;
    let opts = c.spectrum()?;
    let (p, dp) = if which != Which::Antiperiodic { periodic_eigenvalues(&op, window, &opts)? } else { Default::default() };
    let (a, da) = if which != Which::Periodic { antiperiodic_eigenvalues(&op, window, &opts)? } else { Default::default() };
    if c.format == Format::Csv {
        let mut s = report::eigenvalues_csv("periodic", &p);
        s.push_str(report::eigenvalues_csv("antiperiodic", &a).split_once('\n').map_or("", |x| x.1));
        return c.emit(&s);
    }
    let meta = report::meta("eigs", c.echo(), op.potential());
    c.emit(&document(meta, json!({"periodic": p, "antiperiodic": a}), json!([dp, da].concat()))?)
}

fn resonances(c: &Common) -> Run<()> {
    let op = c.operator()?;
    let opts = c.spectrum()?;
    let mut diag = Vec::new();
    let found: Vec<Resonance> = match &c.rect {
        Some(r) => {
            if !(r[0] < r[1] && r[2] < r[3]) {
                return Err(Failure::Config("rectangle is empty".into()));
            }
            match complex_resonances(&op, &Contour::rect(r[0], r[1], r[2], r[3]), &opts) {
                Err(HillError::IdenticallyZero) => {
                    diag.push("rho vanishes identically".to_string());
                    Vec::new()
                }
                other => other?,
            }
        }
        None => {
            let window = c.window_or(default_window(&op))?;
            match resonances_near_axis(&op, window, &opts) {
                Err(HillError::IdenticallyZero) => {
                    diag.push("rho vanishes identically".to_string());
                    Vec::new()
                }
                other => other?,
            }
        }
    };
    if c.format == Format::Csv {
        return c.emit(&report::resonances_csv(&found));
    }
    let meta = report::meta("resonances", c.echo(), op.potential());
    c.emit(&document(meta, json!({"resonances": found}), json!(diag))?)
}

fn run_verify(c: &Common, suite: &str, seed: u64) -> Run<()> {
    let suites: Vec<Suite> = if suite == "all" { Suite::ALL.to_vec() } else { vec![suite.parse::<Suite>()?] };
    let mut opts = VerifyOptions { seed, n_max: c.n_max, truncation: c.truncate, config: c.config()?, ..Default::default() };
    opts.spectrum = c.spectrum()?;
    opts = opts.with_exec(c.exec());
    let mut reports = Vec::new();
    for s in suites {
        let r = verify::run(s, &opts)?;
        eprintln!("{} {} ({:.1} s)", if r.passed() { "PASS" } else { "FAIL" }, s, r.seconds);
        reports.push(r);
    }
    let ok = reports.iter().all(|r| r.passed());
    let meta = json!({"command": "verify", "version": report::VERSION, "config": c.echo(), "suite": suite, "seed": seed});
    let timing: Vec<Value> = reports.iter().map(|r| json!({"suite": r.suite, "seconds": r.seconds})).collect();
    c.emit(&document(meta, json!({"passed": ok, "suites": reports}), json!(timing))?)?;
    if ok {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn reconstruct(c: &Common, tail_tol: f64) -> Run<()> {
    if c.truncate == 0 {
        return Err(Failure::Config("--truncate must be positive".into()));
    }
    let op = c.operator()?;
    let opts = c.spectrum()?;
    let window = c.window_or((0.0, 50.0))?;
    let floor = spectral_floor(op.potential());
    let (p, a, mut diag) = shell_eigenvalues(&op, 2 * c.truncate, floor, &opts)?;
    let dp = reconstruct_dplus(&p, c.truncate)?;
    let dm = reconstruct_dminus(&a, c.truncate)?;
    let grid = signed_sqrt_grid(window.0, window.1, opts.grid_density);
    let table = reconstruction_table(&op, &dp, &dm, &grid, c.exec())?;
    let tail = dp.tail_estimate.max(dm.tail_estimate);
    let insufficient = tail > tail_tol;
    if insufficient {
        diag.push(format!("insufficient truncation: tail estimate {tail:e} exceeds {tail_tol:e}"));
    }
    if c.format == Format::Csv {
        c.emit(&report::reconstruction_csv(&table))?;
    } else {
        let res = reconstructed_resonances(&dp, &dm, window, &opts)?;
        let meta = report::meta("reconstruct", c.echo(), op.potential());
        let results = json!({
            "table": table,
            "resonances": res,
            "tail_estimate": {"d_plus": dp.tail_estimate, "d_minus": dm.tail_estimate},
            "periodic_eigs": p,
            "antiperiodic_eigs": a,
        });
        c.emit(&document(meta, results, json!(diag))?)?;
    }
    if insufficient {
        Err(Failure::Numerical(diag.last().cloned().unwrap_or_default()))
    } else {
        Ok(())
    }
}

fn run_sweep(c: &Common) -> Run<()> {
    let op = c.operator()?;
    let opts = c.spectrum()?;
    let window = c.window_or(default_window(&op))?;
    let grid = signed_sqrt_grid(window.0, window.1, opts.grid_density);
    let rows = sweep(&op, &grid, c.exec())?;
    if c.format == Format::Csv {
        return c.emit(&report::sweep_csv(&rows));
    }
    let out: Vec<Value> = rows
        .iter()
        .map(|d| {
            json!({
                "lambda": d.lambda.re,
                "delta1": [d.delta1.re, d.delta1.im],
                "delta2": [d.delta2.re, d.delta2.im],
                "rho": d.rho.re,
                "d_plus": d.d_plus.re,
                "d_minus": d.d_minus.re,
            })
        })
        .collect();
    let meta = report::meta("sweep", c.echo(), op.potential());
    c.emit(&document(meta, out, json!([]))?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bands(c) => bands(c),
        Command::Eigs { common, which } => eigs(common, *which),
        Command::Resonances(c) => resonances(c),
        Command::Verify { suite, common, seed } => run_verify(common, suite, *seed),
        Command::Reconstruct { common, tail_tol } => reconstruct(common, *tail_tol),
        Command::Sweep(c) => run_sweep(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Verification) => ExitCode::from(4),
    }
}
