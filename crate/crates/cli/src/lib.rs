//! Command-line front end: model checks, analytic tables, simulation and
//! side-by-side comparison. Exit codes: 0 success, 1 invalid model or
//! scenario, 2 numerical failure, 3 bad arguments.

pub mod compare;
pub mod defaults;
pub mod table;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mmexit::error::Error;
use mmexit::factorization::{minus_grid, sup_tail};
use mmexit::model::validate;
use mmexit::presets;
use mmexit::risk::{self, RiskModel, RiskSpec};
use mmexit::simulator::{self, EstimandParams};
use mmexit::two_boundary::{bratiichuk_tails, limit_bt, limit_m, LimitOptions};
use mmexit::{Model, ModelSpec};

use compare::{analytic, factor, interval, inversion, Comparison, Target};
use table::{num, Format, Table};

#[derive(Debug, Parser)]
#[command(name = "mmexit", version, about = "Exit, overshoot and capped-reserve transforms of a jump process on a Markov chain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Source {
    /// model file (TOML or JSON)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// built-in model: s1, s2, m2, d2, zero
    #[arg(long)]
    pub preset: Option<String>,
    /// risk scenario file (TOML or JSON)
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// built-in risk scenario: r1, r2, rm2
    #[arg(long = "risk-preset")]
    pub risk_preset: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct Output {
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// write here instead of standard output
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct Interval {
    #[arg(long, default_value_t = defaults::S)]
    pub s: f64,
    #[arg(long = "T", default_value_t = defaults::T)]
    pub t: f64,
    #[arg(long, default_value_t = defaults::GRID)]
    pub grid: usize,
}

#[derive(Debug, Args, Clone)]
pub struct Estimand {
    /// estimand name; `mmexit estimands` lists them
    #[arg(long)]
    pub estimand: String,
    #[arg(long, default_value_t = defaults::S)]
    pub s: f64,
    #[arg(long, default_value_t = defaults::X)]
    pub x: f64,
    #[arg(long = "T", default_value_t = defaults::T)]
    pub t: f64,
    /// level for cdfs and tails
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub z: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = defaults::PATHS)]
    pub paths: usize,
    #[arg(long, default_value_t = defaults::SEED)]
    pub seed: u64,
    /// cells of the interval solve used by `compare`
    #[arg(long, default_value_t = defaults::GRID)]
    pub grid: usize,
}

impl Estimand {
    fn params(&self) -> EstimandParams {
        EstimandParams {
            s: self.s,
            x: self.x,
            t: self.t,
            z: self.z,
            alpha: self.alpha,
            mu: self.mu,
            ..EstimandParams::default()
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model or risk scenario and print its stationary law.
    Validate {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        out: Output,
    },
    /// Positive factor at one killing rate and the post-supremum cdf.
    Factorize {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = defaults::S)]
        s: f64,
        /// levels (<= 0) of the post-supremum cdf, comma separated
        #[arg(long, default_value = defaults::Y_GRID, allow_hyphen_values = true)]
        y: String,
        #[command(flatten)]
        out: Output,
    },
    /// Exit transforms through either barrier on the grid of [0, T].
    Exit {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        iv: Interval,
        #[command(flatten)]
        out: Output,
    },
    /// Killed law at one start: density, atom at zero and non-exit mass.
    Density {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        iv: Interval,
        #[arg(long, default_value_t = defaults::X)]
        x: f64,
        #[command(flatten)]
        out: Output,
    },
    /// Exit-level tails beyond either barrier.
    Tails {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        iv: Interval,
        #[arg(long, default_value_t = defaults::X)]
        x: f64,
        #[arg(long, default_value = defaults::Z_GRID, allow_hyphen_values = true)]
        z: String,
        #[command(flatten)]
        out: Output,
    },
    /// Limits as the killing rate goes to zero.
    Limits {
        #[command(flatten)]
        source: Source,
        #[arg(long = "T", default_value_t = defaults::T)]
        t: f64,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Transform of the capped reserve at the killing time (`--s 0` for the limit).
    Risk {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = defaults::S)]
        s: f64,
        #[arg(long, default_value = defaults::ALPHA_GRID, allow_hyphen_values = true)]
        alpha: String,
        #[command(flatten)]
        out: Output,
    },
    /// Laplace transform of the dividends over a grid of arguments.
    Dividend {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = defaults::S)]
        s: f64,
        #[arg(long, default_value = defaults::MU_GRID)]
        mu: String,
        #[command(flatten)]
        out: Output,
    },
    /// Monte Carlo estimate of one estimand.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        est: Estimand,
        #[command(flatten)]
        out: Output,
    },
    /// Analytic value next to its Monte Carlo estimate.
    Compare {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        est: Estimand,
        #[command(flatten)]
        out: Output,
    },
    /// List the estimand names.
    Estimands {
        #[command(flatten)]
        out: Output,
    },
    /// Print a built-in model or risk scenario as a TOML file.
    Preset {
        /// s1, s2, m2, d2, zero, r1, r2 or rm2
        name: String,
    },
    /// Print the defaults table.
    Defaults {
        #[command(flatten)]
        out: Output,
    },
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::InvalidModel(_) | Error::Parse(_) => (1, "invalid-model"),
            e if e.is_numerical() => (2, "numerical"),
            _ => (3, "argument"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

fn arg_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 3,
        kind: "argument",
        message: message.into(),
    }
}

impl Failure {
    /// The one-line record printed on standard error.
    pub fn record(&self) -> String {
        serde_json::json!({ "error": self.kind, "code": self.code, "message": self.message }).to_string()
    }
}

type Outcome = std::result::Result<Table, Failure>;

fn parse_grid(text: &str) -> std::result::Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| arg_error(format!("`{t}` is not a number in grid `{text}`")))
        })
        .collect()
}

fn load_spec(source: &Source) -> std::result::Result<ModelSpec, Failure> {
    match (&source.model, &source.preset) {
        (Some(path), None) => Ok(ModelSpec::from_path(path)?),
        (None, Some(name)) => presets::by_name(name).ok_or_else(|| arg_error(format!("unknown preset `{name}`"))),
        _ => Err(arg_error("give exactly one of --model and --preset")),
    }
}

fn load_scenario(source: &Source) -> std::result::Result<RiskSpec, Failure> {
    match (&source.scenario, &source.risk_preset) {
        (Some(path), None) => Ok(RiskSpec::from_path(path)?),
        (None, Some(name)) => presets::risk_by_name(name).ok_or_else(|| arg_error(format!("unknown risk preset `{name}`"))),
        _ => Err(arg_error("give exactly one of --scenario and --risk-preset")),
    }
}

fn is_risk(source: &Source) -> bool {
    source.scenario.is_some() || source.risk_preset.is_some()
}

fn load_model(source: &Source) -> std::result::Result<Model, Failure> {
    Ok(Model::new(load_spec(source)?)?)
}

fn load_risk(source: &Source) -> std::result::Result<RiskModel, Failure> {
    Ok(RiskModel::new(load_scenario(source)?)?)
}

fn load_target(source: &Source) -> std::result::Result<Target, Failure> {
    if is_risk(source) {
        if source.model.is_some() || source.preset.is_some() {
            return Err(arg_error("give either a model or a risk scenario, not both"));
        }
        Ok(Target::Risk(load_risk(source)?))
    } else {
        Ok(Target::Process(load_model(source)?))
    }
}

fn list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| num(*x)).collect();
    format!("[{}]", parts.join(", "))
}

fn cmd_validate(source: &Source) -> Outcome {
    let mut t = Table::new(&["status", "pi", "detail"]);
    if is_risk(source) {
        let spec = load_scenario(source)?;
        let mut problems = spec.violations();
        if problems.is_empty() {
            problems = validate(&spec.to_model_spec()).violations;
        }
        if !problems.is_empty() {
            return Err(Failure {
                code: 1,
                kind: "invalid-model",
                message: problems.join("; "),
            });
        }
        let rm = RiskModel::new(spec)?;
        let d = risk::drift(&rm).m10;
        t.push(vec!["valid".into(), list(&rm.model.pi), format!("drift m10 = {}", num(d))]);
        return Ok(t);
    }
    let spec = load_spec(source)?;
    let report = validate(&spec);
    if !report.is_valid() {
        return Err(Failure {
            code: 1,
            kind: "invalid-model",
            message: report.violations.join("; "),
        });
    }
    let model = Model::new(spec)?;
    t.push(vec![
        "valid".into(),
        list(&model.pi),
        format!("mean drift = {}", num(model.mean_drift())),
    ]);
    Ok(t)
}

fn cmd_factorize(source: &Source, s: f64, y: &str) -> Outcome {
    let model = load_model(source)?;
    let ys = parse_grid(y)?;
    let f = factor(&model, s)?;
    let mut t = Table::new(&["quantity", "y", "k", "r", "value"]);
    for (name, v) in [
        ("p_plus", &f.p_plus),
        ("q_plus", &f.q_plus),
        ("p_star", &f.p_star),
        ("r_star", &f.r_star),
        ("ps", &f.ps),
    ] {
        t.push_matrix(&[name.into(), String::new()], v);
    }
    let grid = minus_grid(&model, &f, &ys, &inversion())?;
    t.push_matrix(&["minus_atom".into(), String::new()], &grid.atom_at_zero);
    for (y, c) in grid.y_grid.iter().zip(&grid.cdf) {
        t.push_matrix(&["minus_cdf".into(), num(*y)], c);
    }
    for y in ys.iter().filter(|y| **y < 0.0) {
        t.push_matrix(&["sup_tail".into(), num(-y)], &sup_tail(&f, -y)?);
    }
    Ok(t)
}

fn cmd_exit(source: &Source, iv: &Interval) -> Outcome {
    let model = load_model(source)?;
    let sol = interval(&model, iv.s, iv.t, iv.grid)?;
    let mut t = Table::new(&["x", "k", "r", "BT", "Blow", "B"]);
    for i in 0..=sol.n() {
        for k in 0..model.m {
            for r in 0..model.m {
                t.push(vec![
                    num(sol.x_grid[i]),
                    (k + 1).to_string(),
                    (r + 1).to_string(),
                    num(sol.bt[i][(k, r)]),
                    num(sol.bt_low[i][(k, r)]),
                    num(sol.b[i][(k, r)]),
                ]);
            }
        }
    }
    Ok(t)
}

fn cmd_density(source: &Source, iv: &Interval, x: f64) -> Outcome {
    let model = load_model(source)?;
    let sol = interval(&model, iv.s, iv.t, iv.grid)?;
    let law = sol.killed_law(x)?;
    let mut t = Table::new(&["quantity", "y", "k", "r", "value"]);
    for (y, d) in law.y_grid().iter().zip(law.density()) {
        t.push_matrix(&["density".into(), num(*y)], &d);
    }
    t.push_matrix(&["atom".into(), num(0.0)], &law.atom_at_zero);
    t.push_matrix(&["nonexit".into(), String::new()], &law.non_exit);
    Ok(t)
}

fn cmd_tails(source: &Source, iv: &Interval, x: f64, z: &str) -> Outcome {
    let model = load_model(source)?;
    let zs = parse_grid(z)?;
    let sol = interval(&model, iv.s, iv.t, iv.grid)?;
    let law = sol.killed_law(x)?;
    let mut t = Table::new(&["z", "k", "r", "tail"]);
    for z in zs {
        t.push_matrix(&[num(z)], &bratiichuk_tails(&model, &law, z)?);
    }
    Ok(t)
}

fn cmd_limits(source: &Source, t_len: f64, grid: usize) -> Outcome {
    let model = load_model(source)?;
    let opts = LimitOptions::for_model(&model);
    let lb = limit_bt(&model, t_len, grid, &opts)?;
    let mut t = Table::new(&["quantity", "x", "k", "r", "value"]);
    for (i, x) in lb.x_grid.iter().enumerate() {
        t.push_matrix(&["BT_limit".into(), num(*x)], &lb.direct[i]);
        t.push_matrix(&["BT_extrapolated".into(), num(*x)], &lb.extrapolated[i]);
    }
    t.push_matrix(&["p_star0".into(), String::new()], &lb.limit.p_star0);
    let lm = limit_m(&model, t_len, grid, &opts)?;
    for (r, rel) in &lm.transform_checks {
        t.push(vec!["M_transform_rel_error".into(), num(*r), String::new(), String::new(), num(*rel)]);
    }
    Ok(t)
}

fn cmd_risk(source: &Source, s: f64, alpha: &str) -> Outcome {
    let rm = load_risk(source)?;
    let alphas = parse_grid(alpha)?;
    let mut t = Table::new(&["quantity", "alpha", "k", "r", "re", "im"]);
    let push_c = |t: &mut Table, q: &str, a: f64, v: &mmexit::linalg::ComplexMatrix| {
        for k in 0..v.nrows() {
            for r in 0..v.ncols() {
                t.push(vec![q.into(), num(a), (k + 1).to_string(), (r + 1).to_string(), num(v[(k, r)].re), num(v[(k, r)].im)]);
            }
        }
    };
    if s == 0.0 {
        let lim = risk::eta_limit_inputs(&rm, &LimitOptions::for_model(&rm.model))?;
        for a in alphas {
            push_c(&mut t, "cf_limit", a, &risk::eta_limit_cf(&rm, &lim, a)?);
        }
        let atom = mmexit::linalg::to_complex(&risk::eta_limit_atom(&rm, &lim)?);
        push_c(&mut t, "atom_at_B_limit", f64::NAN, &atom);
        return Ok(t);
    }
    let f = factor(&rm.model, s)?;
    for a in alphas {
        push_c(&mut t, "cf", a, &risk::phi_eta(&rm, &f, a)?);
    }
    let atom = mmexit::linalg::to_complex(&risk::eta_atom_at(&rm, &f)?);
    push_c(&mut t, "atom_at_B", f64::NAN, &atom);
    let zeta = mmexit::linalg::to_complex(&risk::zeta_star_transform(&rm, s)?);
    push_c(&mut t, "first_claim", f64::NAN, &zeta);
    Ok(t)
}

fn cmd_dividend(source: &Source, s: f64, mu: &str) -> Outcome {
    let rm = load_risk(source)?;
    let mus = parse_grid(mu)?;
    let f = factor(&rm.model, s)?;
    let mut t = Table::new(&["quantity", "mu", "k", "r", "value"]);
    for m in mus {
        t.push_matrix(&["laplace".into(), num(m)], &risk::dividend_transform(&rm, &f, m)?);
    }
    t.push_matrix(&["atom".into(), num(f64::INFINITY)], &risk::dividend_atom(&rm, &f)?);
    t.push_matrix(&["mean".into(), String::new()], &risk::dividend_mean(&rm, &f)?);
    Ok(t)
}

fn cmd_simulate(source: &Source, est: &Estimand) -> Outcome {
    let target = load_target(source)?;
    let p = target.params(est.params());
    let e = simulator::estimate(target.model(), &est.estimand, &p, est.paths, est.seed)?;
    let mut t = Table::new(&["k", "r", "value", "stderr", "n", "seed"]);
    for k in 0..e.value.nrows() {
        for r in 0..e.value.ncols() {
            t.push(vec![
                (k + 1).to_string(),
                (r + 1).to_string(),
                num(e.value[(k, r)]),
                num(e.std_err[(k, r)]),
                e.n.to_string(),
                e.seed.to_string(),
            ]);
        }
    }
    Ok(t)
}

/// Comparison table for one estimand.
pub fn comparison_table(c: &Comparison) -> Table {
    let mut t = Table::new(&["k", "r", "analytic", "mc", "stderr", "zscore"]);
    for k in 0..c.analytic.nrows() {
        for r in 0..c.analytic.ncols() {
            t.push(vec![
                (k + 1).to_string(),
                (r + 1).to_string(),
                num(c.analytic[(k, r)]),
                num(c.mc.value[(k, r)]),
                num(c.mc.std_err[(k, r)]),
                num(c.z_score(k, r)),
            ]);
        }
    }
    t
}

fn cmd_compare(source: &Source, est: &Estimand) -> Outcome {
    let target = load_target(source)?;
    let c = compare::compare(&target, &est.estimand, &est.params(), est.grid, est.paths, est.seed)?;
    Ok(comparison_table(&c))
}

fn cmd_estimands() -> Outcome {
    let mut t = Table::new(&["estimand", "meaning"]);
    for (n, d) in simulator::ESTIMANDS {
        t.push(vec![n.to_string(), d.to_string()]);
    }
    Ok(t)
}

fn cmd_defaults() -> Outcome {
    let mut t = Table::new(&["setting", "default", "meaning"]);
    for (a, b, c) in defaults::TABLE {
        t.push(vec![a.to_string(), b.to_string(), c.to_string()]);
    }
    Ok(t)
}

fn preset_toml(name: &str) -> std::result::Result<String, Failure> {
    if let Some(spec) = presets::by_name(name) {
        return Ok(spec.to_toml_string());
    }
    presets::risk_by_name(name)
        .map(|spec| spec.to_toml_string())
        .ok_or_else(|| arg_error(format!("unknown preset `{name}`")))
}

fn execute(cmd: &Command) -> std::result::Result<(Table, &Output), Failure> {
    Ok(match cmd {
        Command::Preset { .. } => unreachable!("handled before dispatch"),
        Command::Validate { source, out } => (cmd_validate(source)?, out),
        Command::Factorize { source, s, y, out } => (cmd_factorize(source, *s, y)?, out),
        Command::Exit { source, iv, out } => (cmd_exit(source, iv)?, out),
        Command::Density { source, iv, x, out } => (cmd_density(source, iv, *x)?, out),
        Command::Tails { source, iv, x, z, out } => (cmd_tails(source, iv, *x, z)?, out),
        Command::Limits { source, t, grid, out } => (cmd_limits(source, *t, *grid)?, out),
        Command::Risk { source, s, alpha, out } => (cmd_risk(source, *s, alpha)?, out),
        Command::Dividend { source, s, mu, out } => (cmd_dividend(source, *s, mu)?, out),
        Command::Simulate { source, est, out } => (cmd_simulate(source, est)?, out),
        Command::Compare { source, est, out } => (cmd_compare(source, est)?, out),
        Command::Estimands { out } => (cmd_estimands()?, out),
        Command::Defaults { out } => (cmd_defaults()?, out),
    })
}

fn emit(table: &Table, out: &Output, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let io = |e: std::io::Error| arg_error(format!("writing output: {e}"));
    match &out.output {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(io)?;
            table.write(out.format, std::io::BufWriter::new(file)).map_err(io)
        }
        // a closed pipe (`| head`) is not an error
        None => match table.write(out.format, stdout) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => r.map_err(io),
        },
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("bad arguments").trim_start_matches("error: ");
            let _ = writeln!(stderr, "{}", arg_error(first).record());
            return 3;
        }
    };
    if let Command::Preset { name } = &cli.command {
        return match preset_toml(name) {
            Ok(text) => {
                let _ = write!(stdout, "{text}");
                0
            }
            Err(f) => {
                let _ = writeln!(stderr, "{}", f.record());
                f.code
            }
        };
    }
    match execute(&cli.command).and_then(|(table, out)| emit(&table, out, stdout)) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(stderr, "{}", f.record());
            f.code
        }
    }
}

/// Convenience for tests: runs and captures both streams.
pub fn run_captured<I, T>(args: I) -> (i32, String, String)
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(args, &mut out, &mut err);
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&err).into_owned(),
    )
}

/// Analytic value of an estimand, exposed for scripted checks.
pub fn analytic_value(target: &Target, name: &str, p: &EstimandParams, grid: usize) -> mmexit::Result<mmexit::linalg::RealMatrix> {
    analytic(target, name, &target.params(*p), grid)
}
