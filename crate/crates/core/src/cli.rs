//! TOML configuration and the `solve | sweep | check | kernel` commands.
//!
//! A configuration file looks like
//!
//! ```toml
//! A = [["1 + eps*t"]]      # m×m, expressions in t and eps
//! f = ["0"]                # m entries (optional, default 0)
//! c = ["1"]                # m entries, in eps only
//!
//! [interval]
//! a = 0.0
//! b = 1.0
//!
//! [dims]
//! m = 1
//! n = 2
//!
//! [grid]
//! N = 2000                 # even
//!
//! [[boundary]]
//! kind = "point"           # or "integral" with `kernel = [[...]]`
//! node = 0.0
//! order = 0
//! coeff = [["1"]]
//! part = "B0"              # or "B1" for the ε-proportional part
//!
//! [sweep]
//! eps0 = 1.0
//! k_range = [3, 12]        # or schedule = [0.125, 0.0625]
//! R_max = 3.0
//!
//! [output]
//! csv = "o1.csv"
//! precision = 12
//! ```
//!
//! Any matrix or vector entry may be a number, an expression string or a
//! table `{ re = "...", im = "..." }`. An optional `[limit]` table with `A`,
//! `f`, `c` and `[[limit.boundary]]` replaces the family data at `ε = 0`.
//!
//! Exit codes: 0 success, 2 singular characteristic matrix, 3 configuration or
//! evaluation error, 4 integration blow-up, 5 a condition or the ratio bracket
//! failed.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::bvp::{homogeneous_kernel_dim, solve, SolveResult};
use crate::error::{Error, Result};
use crate::expr::{ComplexExpr, Expr};
use crate::parametric::{
    BoundarySpec, BoundaryTermSpec, CheckReport, ConvergenceReport, Family, LimitData, SweepReport, DEFAULT_R_MAX,
};
use crate::sobolev::{sobolev_norm, Grid, JetFunction};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SINGULAR: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_BLOW_UP: i32 = 4;
pub const EXIT_CONDITION: i32 = 5;

pub const MAX_DIM: usize = 64;

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(Scalar),
    Complex { re: Scalar, im: Scalar },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalConfig {
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsConfig {
    pub m: usize,
    pub n: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "N")]
    pub intervals: usize,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Point,
    Integral,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
pub enum Part {
    #[default]
    B0,
    B1,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub kind: TermKind,
    pub node: Option<f64>,
    pub kernel: Option<Vec<Vec<Entry>>>,
    #[serde(default)]
    pub order: usize,
    pub coeff: Option<Vec<Vec<Entry>>>,
    #[serde(default)]
    pub part: Part,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eps0: Option<f64>,
    pub schedule: Option<Vec<f64>>,
    pub k_range: Option<[i32; 2]>,
    #[serde(rename = "R_max")]
    pub r_max: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    #[serde(default = "default_precision")]
    pub precision: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            csv: None,
            precision: default_precision(),
        }
    }
}

fn default_precision() -> usize {
    12
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitConfig {
    #[serde(rename = "A")]
    pub a: Option<Vec<Vec<Entry>>>,
    pub f: Option<Vec<Entry>>,
    pub c: Option<Vec<Entry>>,
    pub boundary: Option<Vec<BoundaryConfig>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub interval: IntervalConfig,
    pub dims: DimsConfig,
    pub grid: GridConfig,
    #[serde(rename = "A")]
    pub a: Vec<Vec<Entry>>,
    pub f: Option<Vec<Entry>>,
    pub c: Vec<Entry>,
    pub boundary: Vec<BoundaryConfig>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub limit: Option<LimitConfig>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub schedule: Option<Vec<f64>>,
    pub r_max: Option<f64>,
    pub intervals: Option<usize>,
}

/// A validated configuration turned into a family.
#[derive(Clone, Debug)]
pub struct Setup {
    pub family: Family,
    pub csv: Option<PathBuf>,
    pub precision: usize,
    /// Node-snapping notices.
    pub warnings: Vec<String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn setup(&self, overrides: &Overrides) -> Result<Setup> {
        let (m, n) = (self.dims.m, self.dims.n);
        if m == 0 || m > MAX_DIM {
            return config_err(format!("dims.m must be in 1..={MAX_DIM}, got {m}"));
        }
        if n == 0 {
            return config_err("dims.n must be at least 1".into());
        }
        let intervals = overrides.intervals.unwrap_or(self.grid.intervals);
        if !intervals.is_multiple_of(2) {
            return config_err(format!("grid.N must be even, got {intervals}"));
        }
        let grid = Grid::new(self.interval.a, self.interval.b, intervals)
            .map_err(|e| Error::Config(e.to_string()))?;
        let precision = self.output.precision;
        if !(1..=17).contains(&precision) {
            return config_err(format!("output.precision must be in 1..=17, got {precision}"));
        }

        let mut warnings = Vec::new();
        let a = matrix("A", &self.a, m)?;
        let f = match &self.f {
            Some(f) => vector("f", f, m)?,
            None => vec![ComplexExpr::constant(0.0); m],
        };
        let c = vector("c", &self.c, m)?;
        let mut b0 = Vec::new();
        let mut b1 = Vec::new();
        for (i, term) in self.boundary.iter().enumerate() {
            let spec = boundary_term(&format!("boundary[{i}]"), term, m, &grid, &mut warnings)?;
            match term.part {
                Part::B0 => b0.push(spec),
                Part::B1 => b1.push(spec),
            }
        }
        if b0.is_empty() {
            return config_err("at least one boundary term with part = \"B0\" is required".into());
        }

        let mut limit = LimitData::default();
        if let Some(l) = &self.limit {
            limit.a = l.a.as_ref().map(|v| matrix("limit.A", v, m)).transpose()?;
            limit.f = l.f.as_ref().map(|v| vector("limit.f", v, m)).transpose()?;
            limit.c = l.c.as_ref().map(|v| vector("limit.c", v, m)).transpose()?;
            if let Some(terms) = &l.boundary {
                let mut specs = Vec::new();
                for (i, term) in terms.iter().enumerate() {
                    let what = format!("limit.boundary[{i}]");
                    if term.part != Part::B0 {
                        return config_err(format!("{what}: limit terms cannot set part"));
                    }
                    specs.push(boundary_term(&what, term, m, &grid, &mut warnings)?);
                }
                limit.boundary = Some(BoundarySpec::new(specs));
            }
        }

        let schedule = match (&overrides.schedule, &self.sweep.schedule, self.sweep.k_range) {
            (Some(s), _, _) => s.clone(),
            (None, Some(_), Some(_)) => return config_err("sweep: give either schedule or k_range, not both".into()),
            (None, Some(s), None) => s.clone(),
            (None, None, Some([k1, k2])) => {
                if k1 > k2 {
                    return config_err(format!("sweep.k_range [{k1}, {k2}] is empty"));
                }
                (k1..=k2).map(|k| 2f64.powi(-k)).collect()
            }
            (None, None, None) => crate::parametric::default_schedule(),
        };

        let family = Family::new(grid, n, a, f, c, BoundarySpec::new(b0))
            .and_then(|fam| fam.with_b1(BoundarySpec::new(b1)))
            .and_then(|fam| fam.with_limit(limit))
            .and_then(|fam| fam.with_eps0(self.sweep.eps0.unwrap_or(f64::INFINITY)))
            .and_then(|fam| fam.with_r_max(overrides.r_max.or(self.sweep.r_max).unwrap_or(DEFAULT_R_MAX)))
            .and_then(|fam| fam.with_schedule(schedule))
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(Setup {
            family,
            csv: overrides.out.clone().or_else(|| self.output.csv.clone()),
            precision,
            warnings,
        })
    }
}

fn config_err<T>(msg: String) -> Result<T> {
    Err(Error::Config(msg))
}

fn scalar(what: &str, s: &Scalar) -> Result<Expr> {
    match s {
        Scalar::Number(x) if x.is_finite() => Ok(Expr::num(*x)),
        Scalar::Number(x) => config_err(format!("{what}: non-finite number {x}")),
        Scalar::Text(src) => src
            .parse::<Expr>()
            .map_err(|e| Error::Config(format!("{what}: {e} in {src:?}"))),
    }
}

fn entry(what: &str, e: &Entry) -> Result<ComplexExpr> {
    match e {
        Entry::Real(s) => Ok(ComplexExpr::real(scalar(what, s)?)),
        Entry::Complex { re, im } => Ok(ComplexExpr::new(
            scalar(&format!("{what}.re"), re)?,
            scalar(&format!("{what}.im"), im)?,
        )),
    }
}

fn vector(what: &str, v: &[Entry], m: usize) -> Result<Vec<ComplexExpr>> {
    if v.len() != m {
        return config_err(format!("{what} has {} entries, expected {m}", v.len()));
    }
    v.iter().enumerate().map(|(i, e)| entry(&format!("{what}[{i}]"), e)).collect()
}

/// Row-major flattening of an `m×m` table.
fn matrix(what: &str, rows: &[Vec<Entry>], m: usize) -> Result<Vec<ComplexExpr>> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return config_err(format!("{what} must be a {m}×{m} table"));
    }
    let mut out = Vec::with_capacity(m * m);
    for (r, row) in rows.iter().enumerate() {
        for (c, e) in row.iter().enumerate() {
            out.push(entry(&format!("{what}[{r}][{c}]"), e)?);
        }
    }
    Ok(out)
}

fn boundary_term(
    what: &str,
    term: &BoundaryConfig,
    m: usize,
    grid: &Grid,
    warnings: &mut Vec<String>,
) -> Result<BoundaryTermSpec> {
    match term.kind {
        TermKind::Point => {
            if term.kernel.is_some() {
                return config_err(format!("{what}: point terms take coeff, not kernel"));
            }
            let node = term
                .node
                .ok_or_else(|| Error::Config(format!("{what}: point term needs node")))?;
            let span = grid.b() - grid.a();
            let slack = 1e-12 * span;
            if !(node >= grid.a() - slack && node <= grid.b() + slack) {
                return config_err(format!("{what}: node {node} outside [{}, {}]", grid.a(), grid.b()));
            }
            let (i, dist) = grid.nearest_node(node);
            let snapped = grid.node(i);
            if dist > slack {
                warnings.push(format!("{what}: node {node} snapped to grid node {snapped} (distance {dist:e})"));
            }
            let coeff = term
                .coeff
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{what}: point term needs coeff")))?;
            Ok(BoundaryTermSpec::Point {
                node: snapped,
                order: term.order,
                coeff: matrix(&format!("{what}.coeff"), coeff, m)?,
            })
        }
        TermKind::Integral => {
            if term.node.is_some() || term.coeff.is_some() {
                return config_err(format!("{what}: integral terms take kernel only"));
            }
            let kernel = term
                .kernel
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{what}: integral term needs kernel")))?;
            Ok(BoundaryTermSpec::Integral {
                kernel: matrix(&format!("{what}.kernel"), kernel, m)?,
                order: term.order,
            })
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::SingularCharacteristicMatrix { .. } => EXIT_SINGULAR,
        Error::BlowUp { .. } => EXIT_BLOW_UP,
        _ => EXIT_CONFIG,
    }
}

/// `precision` significant digits in scientific notation.
pub fn format_number(x: f64, precision: usize) -> String {
    format!("{:.*e}", precision.saturating_sub(1), x)
}

/// Node table: `t`, then `y<j>_d<k>_re`, `y<j>_d<k>_im` for each component
/// `j = 1..=m` and derivative `k = 0..=n`.
pub fn node_table_csv(y: &JetFunction, precision: usize) -> String {
    let mut s = String::from("t");
    for j in 1..=y.m() {
        for k in 0..=y.order() {
            let _ = write!(s, ",y{j}_d{k}_re,y{j}_d{k}_im");
        }
    }
    s.push('\n');
    for (i, t) in y.grid().nodes().enumerate() {
        s.push_str(&format_number(t, precision));
        for j in 0..y.m() {
            for k in 0..=y.order() {
                let z = y.get(j, k, i);
                let _ = write!(s, ",{},{}", format_number(z.re, precision), format_number(z.im, precision));
            }
        }
        s.push('\n');
    }
    s
}

fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn optional(x: Option<f64>, precision: usize) -> String {
    x.map_or_else(|| "none".to_string(), |v| format_number(v, precision))
}

/// Sweep table with header `eps,error,discrepancy,ratio` and a `# verdict`
/// footer.
pub fn sweep_csv(report: &SweepReport, precision: usize) -> String {
    let mut s = String::from("eps,error,discrepancy,ratio\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            format_number(r.eps, precision),
            format_number(r.error, precision),
            format_number(r.discrepancy, precision),
            format_number(r.ratio, precision)
        );
    }
    let flags = &report.check;
    let _ = writeln!(
        s,
        "# verdict={} c0={} cI={} cII={} bracket={} ratio_min={} ratio_max={} R_max={} order={} floor={} degenerate={} errors_decay={}",
        pass_fail(report.verdict()),
        pass_fail(flags.zero.pass),
        pass_fail(flags.cond_i.pass),
        pass_fail(flags.cond_ii.pass),
        pass_fail(report.bracket_ok),
        optional(report.ratio_min, precision),
        optional(report.ratio_max, precision),
        format_number(report.r_max, precision),
        optional(report.order, precision),
        format_number(report.floor, precision),
        report.degenerate,
        report.errors_decay,
    );
    s
}

/// Solve at `eps`, writing the node table when a CSV path is configured.
pub fn cmd_solve(setup: &Setup, eps: f64) -> Result<SolveResult> {
    let result = solve(&setup.family.instantiate(eps)?)?;
    if let Some(path) = &setup.csv {
        std::fs::write(path, node_table_csv(&result.y, setup.precision))?;
    }
    Ok(result)
}

/// Run the sweep, writing the CSV when a path is configured.
pub fn cmd_sweep(setup: &Setup) -> Result<SweepReport> {
    let report = setup.family.sweep()?;
    if let Some(path) = &setup.csv {
        std::fs::write(path, sweep_csv(&report, setup.precision))?;
    }
    Ok(report)
}

pub fn cmd_check(setup: &Setup) -> Result<CheckReport> {
    setup.family.check()
}

pub fn cmd_kernel(setup: &Setup, eps: f64) -> Result<usize> {
    homogeneous_kernel_dim(&setup.family.instantiate(eps)?)
}

#[derive(Debug, Parser)]
#[command(name = "sobolev-bvp", version, about = "Parametrized linear ODE boundary-value problems in W^n_inf")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the problem at one parameter value.
    Solve(CommonArgs),
    /// Sweep the schedule and tabulate error against discrepancy.
    Sweep(CommonArgs),
    /// Check the nonsingular-limit and the two convergence conditions.
    Check(CommonArgs),
    /// Dimension of the homogeneous kernel at one parameter value.
    Kernel(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Configuration file (TOML).
    pub config: PathBuf,
    /// Parameter value for solve and kernel.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub eps: f64,
    /// CSV output path, overriding output.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated schedule, overriding the sweep table.
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<f64>>,
    /// Bracket threshold, overriding sweep.R_max.
    #[arg(long)]
    pub rmax: Option<f64>,
    /// Number of grid intervals, overriding grid.N.
    #[arg(long = "grid-N")]
    pub grid_n: Option<usize>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            schedule: self.schedule.clone(),
            r_max: self.rmax,
            intervals: self.grid_n,
        }
    }

    fn setup(&self) -> Result<Setup> {
        Config::load(&self.config)?.setup(&self.overrides())
    }
}

fn evidence_table(out: &mut dyn Write, name: &str, r: &ConvergenceReport, p: usize) -> std::io::Result<()> {
    writeln!(out, "condition ({name}): {}", pass_fail(r.pass))?;
    writeln!(out, "  tol = {}  slope = {}", format_number(r.tol, p), optional(r.slope, p))?;
    writeln!(out, "  eps, value")?;
    for (e, v) in r.eps.iter().zip(&r.values) {
        writeln!(out, "  {}, {}", format_number(*e, p), format_number(*v, p))?;
    }
    Ok(())
}

fn report_check(out: &mut dyn Write, r: &CheckReport, p: usize) -> std::io::Result<i32> {
    let z = &r.zero.report;
    writeln!(out, "condition (0): {}", pass_fail(r.zero.pass))?;
    writeln!(
        out,
        "  det = {}{:+}i  cond = {}  sigma_min/sigma_max = {}",
        format_number(z.det.re, p),
        z.det.im,
        format_number(z.cond, p),
        format_number(z.sigma_ratio, p)
    )?;
    evidence_table(out, "I", &r.cond_i, p)?;
    evidence_table(out, "II", &r.cond_ii, p)?;
    writeln!(
        out,
        "c0={} cI={} cII={}",
        pass_fail(r.zero.pass),
        pass_fail(r.cond_i.pass),
        pass_fail(r.cond_ii.pass)
    )?;
    Ok(if !r.zero.pass {
        EXIT_SINGULAR
    } else if r.all_pass() {
        EXIT_OK
    } else {
        EXIT_CONDITION
    })
}

fn report_solve(out: &mut dyn Write, setup: &Setup, eps: f64, s: &SolveResult) -> Result<()> {
    let p = setup.precision;
    let n = setup.family.n;
    let r = &s.report;
    writeln!(out, "eps = {}", format_number(eps, p))?;
    writeln!(
        out,
        "characteristic matrix: det = {}{:+}i  cond = {}  sigma_min/sigma_max = {}",
        format_number(r.det.re, p),
        r.det.im,
        format_number(r.cond, p),
        format_number(r.sigma_ratio, p)
    )?;
    writeln!(out, "norm_y = {}", format_number(sobolev_norm(&s.y, n)?, p))?;
    writeln!(out, "norm_v = {}", format_number(sobolev_norm(&s.v, n)?, p))?;
    writeln!(out, "norm_w = {}", format_number(sobolev_norm(&s.w, n)?, p))?;
    writeln!(out, "ode_residual = {}", format_number(s.ode_residual, p))?;
    writeln!(out, "boundary_residual = {}", format_number(s.boundary_residual, p))?;
    if let Some(path) = &setup.csv {
        writeln!(out, "node table written to {}", path.display())?;
    }
    Ok(())
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let args = match &cli.command {
        Command::Solve(a) | Command::Sweep(a) | Command::Check(a) | Command::Kernel(a) => a,
    };
    let setup = args.setup()?;
    for w in &setup.warnings {
        writeln!(err, "warning: {w}")?;
    }
    match &cli.command {
        Command::Solve(_) => {
            let s = cmd_solve(&setup, args.eps)?;
            report_solve(out, &setup, args.eps, &s)?;
            Ok(EXIT_OK)
        }
        Command::Sweep(_) => {
            let report = cmd_sweep(&setup)?;
            match &setup.csv {
                Some(path) => {
                    write!(out, "{}", sweep_csv(&report, setup.precision).lines().last().unwrap_or(""))?;
                    writeln!(out, "\nsweep table written to {}", path.display())?;
                }
                None => write!(out, "{}", sweep_csv(&report, setup.precision))?,
            }
            Ok(if report.verdict() { EXIT_OK } else { EXIT_CONDITION })
        }
        Command::Check(_) => {
            let report = cmd_check(&setup)?;
            Ok(report_check(out, &report, setup.precision)?)
        }
        Command::Kernel(_) => {
            writeln!(out, "{}", cmd_kernel(&setup, args.eps)?)?;
            Ok(EXIT_OK)
        }
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
