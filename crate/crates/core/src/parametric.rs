//! ε-families of problems and the continuity checks run on them.
//!
//! A [`Family`] describes `y' + A(t;ε) y = f(t;ε)`, `B(ε) y = c(ε)` with
//! `B(ε) = B0 + ε·B1`. At `ε = 0` the limit data may be given explicitly
//! (see [`LimitData`]); this is how families whose coefficients have no limit
//! as `ε → 0+` are expressed.
//!
//! Convergence of a sequence sampled along the decreasing schedule is judged
//! by [`converges`]: either every value is below the tolerance, or the sequence
//! is non-increasing (up to 5% jitter) and loses at least one decade between
//! the first and last schedule point.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::boundary::{nonsingularity_report, BoundaryOperator, CMatrix, CVector, IntegralTerm, NonsingularityReport, PointTerm};
use crate::bvp::{operator_residual, residual_norms, solve, Problem, SolveResult};
use crate::error::{Error, Result};
use crate::expr::{ComplexExpr, Var};
use crate::ode::{integration_error_estimate, CoefficientProvider};
use crate::sobolev::{matrix_sobolev_norm, sobolev_norm, Grid, JetFunction};

/// Environment variable capping the number of sweep worker threads.
pub const THREADS_ENV: &str = "SOBOLEV_BVP_THREADS";

/// Default bracket threshold `ratio_max / ratio_min`.
pub const DEFAULT_R_MAX: f64 = 10.0;

/// Rows whose error or discrepancy is below this multiple of the solver floor
/// are left out of the ratio statistics.
pub const FLOOR_FACTOR: f64 = 1e3;

/// `ε = 2^{-k}`, `k = 3..=12`.
pub fn default_schedule() -> Vec<f64> {
    (3..=12).map(|k| 2f64.powi(-k)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryTermSpec {
    /// `α(ε) · y^{(order)}(node)`; `coeff` is row-major `m×m` in `eps`.
    Point {
        node: f64,
        order: usize,
        coeff: Vec<ComplexExpr>,
    },
    /// `∫ Φ(t;ε) y^{(order)}(t) dt`; `kernel` is row-major `m×m` in `t`, `eps`.
    Integral { kernel: Vec<ComplexExpr>, order: usize },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundarySpec {
    pub terms: Vec<BoundaryTermSpec>,
}

impl BoundarySpec {
    pub fn new(terms: Vec<BoundaryTermSpec>) -> Self {
        Self { terms }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn validate(&self, m: usize, n: usize) -> Result<()> {
        for term in &self.terms {
            let (entries, order, what) = match term {
                BoundaryTermSpec::Point { coeff, order, .. } => (coeff, *order, "point coefficient"),
                BoundaryTermSpec::Integral { kernel, order } => (kernel, *order, "integral kernel"),
            };
            if entries.len() != m * m {
                return Err(Error::InvalidFamily(format!(
                    "{what} has {} entries, expected {}",
                    entries.len(),
                    m * m
                )));
            }
            if order >= n {
                return Err(Error::InvalidFamily(format!(
                    "boundary term of order {order} exceeds n−1 = {}",
                    n - 1
                )));
            }
            if let BoundaryTermSpec::Point { coeff, .. } = term {
                if coeff.iter().any(|e| e.depends_on(Var::T)) {
                    return Err(Error::InvalidFamily(
                        "point coefficients may depend on eps only".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn terms_at(&self, m: usize, eps: f64, scale: f64) -> Result<(Vec<PointTerm>, Vec<IntegralTerm>)> {
        let mut points = Vec::new();
        let mut integrals = Vec::new();
        for term in &self.terms {
            match term {
                BoundaryTermSpec::Point { node, order, coeff } => {
                    let mut mat = CMatrix::zeros(m, m);
                    for (idx, e) in coeff.iter().enumerate() {
                        mat[(idx / m, idx % m)] = e.eval(*node, eps)? * scale;
                    }
                    points.push(PointTerm {
                        node: *node,
                        order: *order,
                        coeff: mat,
                    });
                }
                BoundaryTermSpec::Integral { kernel, order } => integrals.push(IntegralTerm {
                    kernel: kernel.clone(),
                    order: *order,
                    eps,
                    scale: Complex64::new(scale, 0.0),
                }),
            }
        }
        Ok((points, integrals))
    }
}

/// Data used at `ε = 0` in place of evaluating the family's expressions there.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LimitData {
    pub a: Option<Vec<ComplexExpr>>,
    pub f: Option<Vec<ComplexExpr>>,
    pub c: Option<Vec<ComplexExpr>>,
    pub boundary: Option<BoundarySpec>,
}

#[derive(Clone, Debug)]
pub struct Family {
    pub grid: Grid,
    pub m: usize,
    pub n: usize,
    /// Row-major `m×m`, in `t` and `eps`.
    pub a: Vec<ComplexExpr>,
    pub f: Vec<ComplexExpr>,
    /// In `eps` only.
    pub c: Vec<ComplexExpr>,
    pub b0: BoundarySpec,
    pub b1: BoundarySpec,
    pub limit: LimitData,
    pub eps0: f64,
    /// Strictly decreasing values in `(0, eps0)`.
    pub schedule: Vec<f64>,
    pub r_max: f64,
}

impl Family {
    /// Family with `B1 = 0`, no explicit limit data, `eps0 = ∞`, the default
    /// schedule and the default bracket threshold.
    pub fn new(
        grid: Grid,
        n: usize,
        a: Vec<ComplexExpr>,
        f: Vec<ComplexExpr>,
        c: Vec<ComplexExpr>,
        b0: BoundarySpec,
    ) -> Result<Self> {
        let fam = Self {
            grid,
            m: c.len(),
            n,
            a,
            f,
            c,
            b0,
            b1: BoundarySpec::default(),
            limit: LimitData::default(),
            eps0: f64::INFINITY,
            schedule: default_schedule(),
            r_max: DEFAULT_R_MAX,
        };
        fam.validate()?;
        Ok(fam)
    }

    pub fn with_b1(mut self, b1: BoundarySpec) -> Result<Self> {
        self.b1 = b1;
        self.validate()?;
        Ok(self)
    }

    pub fn with_limit(mut self, limit: LimitData) -> Result<Self> {
        self.limit = limit;
        self.validate()?;
        Ok(self)
    }

    pub fn with_schedule(mut self, schedule: Vec<f64>) -> Result<Self> {
        self.schedule = schedule;
        self.validate()?;
        Ok(self)
    }

    pub fn with_eps0(mut self, eps0: f64) -> Result<Self> {
        self.eps0 = eps0;
        self.validate()?;
        Ok(self)
    }

    pub fn with_r_max(mut self, r_max: f64) -> Result<Self> {
        self.r_max = r_max;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.m, self.n);
        let bad = |msg: String| Err(Error::InvalidFamily(msg));
        if m == 0 || n == 0 {
            return bad(format!("need m ≥ 1 and n ≥ 1, got m={m}, n={n}"));
        }
        let check_len = |what: &str, v: &[ComplexExpr], len: usize| {
            if v.len() != len {
                return Err(Error::InvalidFamily(format!("{what} has {} entries, expected {len}", v.len())));
            }
            Ok(())
        };
        check_len("A", &self.a, m * m)?;
        check_len("f", &self.f, m)?;
        check_len("c", &self.c, m)?;
        if let Some(a) = &self.limit.a {
            check_len("limit A", a, m * m)?;
        }
        if let Some(f) = &self.limit.f {
            check_len("limit f", f, m)?;
        }
        if let Some(c) = &self.limit.c {
            check_len("limit c", c, m)?;
        }
        let constant_c = |c: &[ComplexExpr]| c.iter().all(|e| !e.depends_on(Var::T));
        if !constant_c(&self.c) || !self.limit.c.as_deref().is_none_or(constant_c) {
            return bad("c may depend on eps only".into());
        }
        if self.b0.is_empty() {
            return bad("B0 needs at least one term".into());
        }
        self.b0.validate(m, n)?;
        self.b1.validate(m, n)?;
        if let Some(b) = &self.limit.boundary {
            if b.is_empty() {
                return bad("limit boundary needs at least one term".into());
            }
            b.validate(m, n)?;
        }
        if !(self.eps0 > 0.0) {
            return bad(format!("eps0 must be positive, got {}", self.eps0));
        }
        if !(self.r_max >= 1.0) {
            return bad(format!("R_max must be at least 1, got {}", self.r_max));
        }
        for w in self.schedule.windows(2) {
            if !(w[1] < w[0]) {
                return bad("schedule must be strictly decreasing".into());
            }
        }
        if self.schedule.iter().any(|&e| !(e > 0.0 && e < self.eps0)) {
            return bad(format!("schedule must lie in (0, {})", self.eps0));
        }
        Ok(())
    }

    fn require_schedule(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::InvalidFamily("empty schedule".into()));
        }
        Ok(())
    }

    fn check_eps(&self, eps: f64) -> Result<()> {
        if !(eps >= 0.0 && eps < self.eps0) {
            return Err(Error::InvalidFamily(format!("eps = {eps} outside [0, {})", self.eps0)));
        }
        Ok(())
    }

    fn pick<'a>(&'a self, eps: f64, general: &'a [ComplexExpr], limit: &'a Option<Vec<ComplexExpr>>) -> &'a [ComplexExpr] {
        match limit {
            Some(l) if eps == 0.0 => l,
            _ => general,
        }
    }

    /// `A(·;eps)` and `f(·;eps)` bound at `eps`.
    pub fn coefficients(&self, eps: f64) -> Result<CoefficientProvider> {
        self.check_eps(eps)?;
        CoefficientProvider::new(
            self.m,
            self.pick(eps, &self.a, &self.limit.a).to_vec(),
            Some(self.pick(eps, &self.f, &self.limit.f).to_vec()),
            eps,
            self.n,
        )
    }

    /// `B(eps) = B0 + eps·B1`, or the explicit limit operator at `eps = 0`.
    pub fn boundary(&self, eps: f64) -> Result<BoundaryOperator> {
        self.check_eps(eps)?;
        let (mut points, mut integrals) = match (&self.limit.boundary, eps == 0.0) {
            (Some(limit), true) => limit.terms_at(self.m, 0.0, 1.0)?,
            _ => self.b0.terms_at(self.m, eps, 1.0)?,
        };
        if eps != 0.0 && !self.b1.is_empty() {
            let (p1, i1) = self.b1.terms_at(self.m, eps, eps)?;
            points.extend(p1);
            integrals.extend(i1);
        }
        BoundaryOperator::new(self.m, self.n, points, integrals)
    }

    pub fn c_at(&self, eps: f64) -> Result<Vec<Complex64>> {
        self.check_eps(eps)?;
        self.pick(eps, &self.c, &self.limit.c)
            .iter()
            .map(|e| e.eval(0.0, eps))
            .collect()
    }

    /// Bind `eps` everywhere and build the fixed-parameter problem.
    pub fn instantiate(&self, eps: f64) -> Result<Problem> {
        Problem::new(self.grid, self.coefficients(eps)?, self.boundary(eps)?, self.c_at(eps)?)
    }

    /// Monomial probes `t^k e_j`, `k = 0..=n+2`, as jets of order `n`.
    pub fn default_probes(&self) -> Vec<JetFunction> {
        let mut probes = Vec::new();
        for j in 0..self.m {
            for k in 0..=(self.n + 2) {
                let jet = JetFunction::from_fn(self.grid, self.m, self.n, |comp, d, t| {
                    if comp != j || d > k {
                        return Complex64::new(0.0, 0.0);
                    }
                    let falling: f64 = ((k - d + 1)..=k).map(|x| x as f64).product();
                    Complex64::new(falling * t.powi((k - d) as i32), 0.0)
                })
                .expect("monomials are finite on a finite grid");
                probes.push(jet);
            }
        }
        probes
    }

    pub fn check_condition_zero(&self) -> Result<ConditionZeroReport> {
        let p = self.instantiate(0.0)?;
        let report = nonsingularity_report(&p.characteristic_matrix()?);
        Ok(ConditionZeroReport {
            pass: !report.singular,
            report,
        })
    }

    /// `‖A(ε) − A(0)‖_{n−1,∞}` along the schedule.
    pub fn check_condition_i(&self) -> Result<ConvergenceReport> {
        self.require_schedule()?;
        let order = self.n - 1;
        let a0 = self.coefficients(0.0)?.a_jet(&self.grid, order)?;
        let tol = 1e-6 * (1.0 + matrix_sobolev_norm(&a0, order)?);
        let values = self
            .schedule
            .iter()
            .map(|&eps| {
                let a = self.coefficients(eps)?.a_jet(&self.grid, order)?;
                matrix_sobolev_norm(&a.difference(&a0)?, order)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConvergenceReport::new(self.schedule.clone(), values, tol))
    }

    /// `max_probe |B(ε)y − B(0)y|_∞` along the schedule.
    pub fn check_condition_ii(&self, probes: &[JetFunction]) -> Result<ConvergenceReport> {
        self.require_schedule()?;
        if probes.is_empty() {
            return Err(Error::InvalidFamily("condition (II) needs at least one probe".into()));
        }
        let b0 = self.boundary(0.0)?;
        let base = probes.iter().map(|y| b0.apply(y)).collect::<Result<Vec<_>>>()?;
        let c_scale = self.c_at(0.0)?.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tol = 1e-8 * (1.0 + c_scale);
        let values = self
            .schedule
            .iter()
            .map(|&eps| {
                let b = self.boundary(eps)?;
                let mut worst = 0.0f64;
                for (y, by0) in probes.iter().zip(&base) {
                    worst = worst.max(max_modulus(&(b.apply(y)? - by0)));
                }
                Ok(worst)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConvergenceReport::new(self.schedule.clone(), values, tol))
    }

    /// All three condition checks, (II) on the default probes.
    pub fn check(&self) -> Result<CheckReport> {
        Ok(CheckReport {
            zero: self.check_condition_zero()?,
            cond_i: self.check_condition_i()?,
            cond_ii: self.check_condition_ii(&self.default_probes())?,
        })
    }

    /// `‖L(ε)y(·;0) − f(·;ε)‖_{n−1,∞} + |B(ε)y(·;0) − c(ε)|_∞`.
    pub fn discrepancy(&self, eps: f64, limit: &SolveResult) -> Result<f64> {
        let p = self.instantiate(eps)?;
        let (ode, bnd) = residual_norms(&p, &limit.y)?;
        Ok(ode + bnd)
    }

    /// Solve at `ε = 0` and at every schedule point; tabulate error and
    /// discrepancy and evaluate the two-sided bracket.
    pub fn sweep(&self) -> Result<SweepReport> {
        self.require_schedule()?;
        let check = self.check()?;
        if !check.zero.pass {
            return Err(Error::SingularCharacteristicMatrix {
                eps: 0.0,
                ratio: check.zero.report.sigma_ratio,
            });
        }
        let p0 = self.instantiate(0.0)?;
        let s0 = solve(&p0)?;
        let floor = s0
            .ode_residual
            .max(s0.boundary_residual)
            .max(integration_error_estimate(&p0.coeffs, &p0.grid)?);

        let rows = parallel_map(&self.schedule, |&eps| {
            let p = self.instantiate(eps)?;
            let s = solve(&p)?;
            let error = sobolev_norm(&(&s0.y - &s.y)?, self.n)?;
            let discrepancy = self.discrepancy(eps, &s0)?;
            Ok(SweepRow {
                eps,
                error,
                discrepancy,
                ratio: error / discrepancy,
            })
        })?;

        let cutoff = FLOOR_FACTOR * floor;
        let used: Vec<bool> = rows
            .iter()
            .map(|r| r.error >= cutoff && r.discrepancy >= cutoff && r.error > 0.0 && r.discrepancy > 0.0)
            .collect();
        let kept: Vec<&SweepRow> = rows.iter().zip(&used).filter(|(_, u)| **u).map(|(r, _)| r).collect();
        let degenerate = kept.is_empty();
        let (ratio_min, ratio_max) = if degenerate {
            (None, None)
        } else {
            let lo = kept.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
            let hi = kept.iter().map(|r| r.ratio).fold(0.0, f64::max);
            (Some(lo), Some(hi))
        };
        let bracket_ok = match (ratio_min, ratio_max) {
            (Some(lo), Some(hi)) => hi / lo <= self.r_max,
            _ => true,
        };
        let order = loglog_slope(
            &kept.iter().map(|r| r.eps).collect::<Vec<_>>(),
            &kept.iter().map(|r| r.error).collect::<Vec<_>>(),
        );
        let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
        let errors_decay = converges(&errors, cutoff);
        Ok(SweepReport {
            eps2: self.schedule[0],
            rows,
            used,
            ratio_min,
            ratio_max,
            r_max: self.r_max,
            bracket_ok,
            degenerate,
            order,
            floor,
            errors_decay,
            check,
        })
    }

    /// Strong convergence of `(L(ε), B(ε))` on jet probes and of the inverses
    /// on data probes `(f, c)`.
    pub fn operator_convergence_check(&self, probes: &[JetFunction]) -> Result<OperatorConvergenceReport> {
        self.require_schedule()?;
        if probes.is_empty() {
            return Err(Error::InvalidFamily("operator check needs at least one probe".into()));
        }
        let zero = self.check_condition_zero()?;
        if !zero.pass {
            return Err(Error::SingularCharacteristicMatrix {
                eps: 0.0,
                ratio: zero.report.sigma_ratio,
            });
        }
        let n = self.n;
        let unforced = |eps: f64| self.coefficients(eps).and_then(|c| c.with_forcing(None));

        // forward
        let l0 = unforced(0.0)?;
        let b0 = self.boundary(0.0)?;
        let base = probes
            .iter()
            .map(|y| Ok((operator_residual(&l0, &self.grid, n, y)?, b0.apply(y)?)))
            .collect::<Result<Vec<_>>>()?;
        let probe_scale = probes
            .iter()
            .map(|y| sobolev_norm(y, n))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let forward = parallel_map(&self.schedule, |&eps| {
            let l = unforced(eps)?;
            let b = self.boundary(eps)?;
            let mut worst = 0.0f64;
            for (y, (ly0, by0)) in probes.iter().zip(&base) {
                let ly = operator_residual(&l, &self.grid, n, y)?;
                let d = sobolev_norm(&(&ly - ly0)?, n - 1)? + max_modulus(&(b.apply(y)? - by0));
                worst = worst.max(d);
            }
            Ok(worst)
        })?;

        // inverse
        let data = self.data_probes();
        let problem_for = |eps: f64, probe: &DataProbe| -> Result<Problem> {
            let coeffs = unforced(eps)?.with_forcing(Some(probe.f.clone()))?;
            Problem::new(self.grid, coeffs, self.boundary(eps)?, probe.c.clone())
        };
        let limits = data
            .iter()
            .map(|d| Ok(solve(&problem_for(0.0, d)?)?.y))
            .collect::<Result<Vec<_>>>()?;
        let solution_scale = limits
            .iter()
            .map(|y| sobolev_norm(y, n))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let inverse = parallel_map(&self.schedule, |&eps| {
            let mut worst = 0.0f64;
            for (d, y0) in data.iter().zip(&limits) {
                let y = solve(&problem_for(eps, d)?)?.y;
                worst = worst.max(sobolev_norm(&(&y - y0)?, n)?);
            }
            Ok(worst)
        })?;

        let forward = ConvergenceReport::new(self.schedule.clone(), forward, 1e-8 * (1.0 + probe_scale));
        let inverse = ConvergenceReport::new(self.schedule.clone(), inverse, 1e-8 * (1.0 + solution_scale));
        Ok(OperatorConvergenceReport {
            pass: forward.pass && inverse.pass,
            equivalence_held: forward.pass == inverse.pass,
            forward,
            inverse,
        })
    }

    /// `(f, c) = (0, e_j)` and `(t^k e_j, 0)` for `k = 0..n`.
    fn data_probes(&self) -> Vec<DataProbe> {
        let m = self.m;
        let zero_f = vec![ComplexExpr::constant(0.0); m];
        let mut out = Vec::new();
        for j in 0..m {
            let mut c = vec![Complex64::new(0.0, 0.0); m];
            c[j] = Complex64::new(1.0, 0.0);
            out.push(DataProbe { f: zero_f.clone(), c });
        }
        for j in 0..m {
            for k in 0..self.n {
                let mut f = zero_f.clone();
                f[j] = ComplexExpr::real(crate::expr::Expr::Pow(Box::new(crate::expr::Expr::Var(Var::T)), k as i32));
                out.push(DataProbe {
                    f,
                    c: vec![Complex64::new(0.0, 0.0); m],
                });
            }
        }
        out
    }
}

struct DataProbe {
    f: Vec<ComplexExpr>,
    c: Vec<Complex64>,
}

fn max_modulus(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Run `f` over the schedule, in parallel when allowed, keeping schedule order.
fn parallel_map<T, F>(items: &[f64], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&f64) -> Result<T> + Sync,
{
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    let run = || items.par_iter().map(&f).collect::<Vec<Result<T>>>();
    let results = match threads {
        Some(1) => items.iter().map(&f).collect(),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(_) => items.iter().map(&f).collect(),
        },
        None => run(),
    };
    results.into_iter().collect()
}

#[derive(Clone, Debug)]
pub struct ConditionZeroReport {
    pub report: NonsingularityReport,
    pub pass: bool,
}

/// A quantity tabulated along the schedule together with its verdict.
#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub tol: f64,
    /// Log-log slope of the positive values against `eps`.
    pub slope: Option<f64>,
    pub pass: bool,
}

impl ConvergenceReport {
    fn new(eps: Vec<f64>, values: Vec<f64>, tol: f64) -> Self {
        let slope = loglog_slope(&eps, &values);
        let pass = converges(&values, tol);
        Self {
            eps,
            values,
            tol,
            slope,
            pass,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub zero: ConditionZeroReport,
    pub cond_i: ConvergenceReport,
    pub cond_ii: ConvergenceReport,
}

impl CheckReport {
    pub fn all_pass(&self) -> bool {
        self.zero.pass && self.cond_i.pass && self.cond_ii.pass
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    /// `‖y(·;0) − y(·;ε)‖_{n,∞}`.
    pub error: f64,
    pub discrepancy: f64,
    /// `error / discrepancy` (NaN when both vanish).
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    /// Ordered by decreasing `eps`, as the schedule.
    pub rows: Vec<SweepRow>,
    /// Whether each row entered the ratio statistics.
    pub used: Vec<bool>,
    pub ratio_min: Option<f64>,
    pub ratio_max: Option<f64>,
    pub r_max: f64,
    pub bracket_ok: bool,
    /// No row is above the solver floor (e.g. a family constant in ε).
    pub degenerate: bool,
    /// Log-log slope of error against `eps` over the used rows.
    pub order: Option<f64>,
    pub floor: f64,
    pub errors_decay: bool,
    /// Largest schedule point at which every solve succeeded.
    pub eps2: f64,
    pub check: CheckReport,
}

impl SweepReport {
    pub fn verdict(&self) -> bool {
        self.check.all_pass() && self.bracket_ok
    }

    /// Empirical `[γ1, γ2]` bracket, `[1/ratio_max, 1/ratio_min]`.
    pub fn gamma_bracket(&self) -> Option<(f64, f64)> {
        Some((1.0 / self.ratio_max?, 1.0 / self.ratio_min?))
    }
}

#[derive(Clone, Debug)]
pub struct OperatorConvergenceReport {
    pub forward: ConvergenceReport,
    pub inverse: ConvergenceReport,
    pub pass: bool,
    /// Both directions agree (both converge or both fail).
    pub equivalence_held: bool,
}

/// Verdict for a sequence sampled along a decreasing schedule.
pub fn converges(values: &[f64], tol: f64) -> bool {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return false;
    }
    if values.iter().all(|&v| v <= tol) {
        return true;
    }
    let monotone = values.windows(2).all(|w| w[1] <= 1.05 * w[0] + tol);
    let first = values[0];
    let last = values[values.len() - 1];
    monotone && (last <= tol || last <= 0.1 * first)
}

/// Least-squares line through `(xs, ys)`: `(slope, R²)`.
pub fn least_squares_line(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, r2))
}

/// Slope of `log value` against `log eps` over the strictly positive values.
pub fn loglog_slope(eps: &[f64], values: &[f64]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = eps
        .iter()
        .zip(values)
        .filter(|(e, v)| **e > 0.0 && **v > 0.0 && v.is_finite())
        .map(|(e, v)| (e.ln(), v.ln()))
        .unzip();
    least_squares_line(&xs, &ys).map(|(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cx(s: &str) -> ComplexExpr {
        ComplexExpr::parse_real(s).unwrap()
    }

    fn point(node: f64, coeff: &str) -> BoundaryTermSpec {
        BoundaryTermSpec::Point {
            node,
            order: 0,
            coeff: vec![cx(coeff)],
        }
    }

    fn scalar(a: &str, f: &str, c: &str, b0: Vec<BoundaryTermSpec>, intervals: usize) -> Family {
        let grid = Grid::new(0.0, 1.0, intervals).unwrap();
        Family::new(grid, 2, vec![cx(a)], vec![cx(f)], vec![cx(c)], BoundarySpec::new(b0)).unwrap()
    }

    #[test]
    fn validation() {
        let grid = Grid::new(0.0, 1.0, 10).unwrap();
        let b = BoundarySpec::new(vec![point(0.0, "1")]);
        assert!(Family::new(grid, 0, vec![cx("1")], vec![cx("0")], vec![cx("1")], b.clone()).is_err());
        assert!(Family::new(grid, 2, vec![cx("1"), cx("1")], vec![cx("0")], vec![cx("1")], b.clone()).is_err());
        assert!(Family::new(grid, 2, vec![cx("1")], vec![cx("0")], vec![cx("t")], b.clone()).is_err());
        assert!(Family::new(grid, 2, vec![cx("1")], vec![cx("0")], vec![cx("1")], BoundarySpec::default()).is_err());
        let fam = Family::new(grid, 2, vec![cx("1")], vec![cx("0")], vec![cx("1")], b).unwrap();
        assert!(fam.clone().with_schedule(vec![0.1, 0.2]).is_err());
        assert!(fam.clone().with_schedule(vec![0.2, -0.1]).is_err());
        assert!(fam.clone().with_eps0(0.1).is_err());
        let empty = fam.clone().with_schedule(vec![]).unwrap();
        assert!(matches!(empty.sweep(), Err(Error::InvalidFamily(_))));
        assert!(fam.instantiate(-0.1).is_err());
    }

    #[test]
    fn instantiate_examples() {
        let fam = scalar("1 + eps*t", "0", "1 + eps", vec![point(0.0, "1")], 10);
        let p0 = fam.instantiate(0.0).unwrap();
        let a = p0.coeffs.a_jet(&p0.grid, 1).unwrap();
        for i in 0..p0.grid.len() {
            assert_eq!(a.get(0, 0, 0, i), Complex64::new(1.0, 0.0));
            assert_eq!(a.get(0, 0, 1, i), Complex64::new(0.0, 0.0));
        }
        assert_eq!(fam.instantiate(0.5).unwrap().c, vec![Complex64::new(1.5, 0.0)]);
        assert_eq!(p0.c, vec![Complex64::new(1.0, 0.0)]);
    }

    #[test]
    fn condition_zero_examples() {
        let cauchy = scalar("t", "0", "1", vec![point(0.0, "1")], 10);
        assert!(cauchy.check_condition_zero().unwrap().pass);
        let periodic = scalar("0", "0", "0", vec![point(1.0, "1"), point(0.0, "-1")], 10);
        assert!(!periodic.check_condition_zero().unwrap().pass);
    }

    #[test]
    fn condition_i_examples() {
        let fixed = scalar("1 + t", "0", "1", vec![point(0.0, "1")], 10);
        let r = fixed.check_condition_i().unwrap();
        assert!(r.values.iter().all(|&v| v == 0.0) && r.pass);

        let affine = scalar("1 + eps*t", "0", "1", vec![point(0.0, "1")], 10);
        let r = affine.check_condition_i().unwrap();
        for (eps, v) in r.eps.iter().zip(&r.values) {
            assert!((v - 2.0 * eps).abs() <= 1e-15);
        }
        assert!((r.slope.unwrap() - 1.0).abs() < 1e-9);
        assert!(r.pass);

        let wild = scalar("1 + sin(1/eps)", "0", "1", vec![point(0.0, "1")], 10)
            .with_limit(LimitData {
                a: Some(vec![cx("1")]),
                ..Default::default()
            })
            .unwrap();
        assert!(!wild.check_condition_i().unwrap().pass);
    }

    #[test]
    fn condition_ii_examples() {
        let fixed = scalar("1", "0", "1", vec![point(0.0, "1")], 10);
        let r = fixed.check_condition_ii(&fixed.default_probes()).unwrap();
        assert!(r.values.iter().all(|&v| v == 0.0) && r.pass);

        let drifting = fixed.clone().with_b1(BoundarySpec::new(vec![point(1.0, "1")])).unwrap();
        let r = drifting.check_condition_ii(&drifting.default_probes()).unwrap();
        for (eps, v) in r.eps.iter().zip(&r.values) {
            // every monomial equals 1 at t = 1
            assert!((v - eps).abs() <= 1e-15);
        }
        assert!(r.pass);
        assert!((r.slope.unwrap() - 1.0).abs() < 1e-9);

        let blowing = scalar("1", "0", "1", vec![point(0.0, "1/eps")], 10)
            .with_limit(LimitData {
                boundary: Some(BoundarySpec::new(vec![point(0.0, "1")])),
                ..Default::default()
            })
            .unwrap();
        assert!(!blowing.check_condition_ii(&blowing.default_probes()).unwrap().pass);
    }

    #[test]
    fn probes_are_monomial_jets() {
        let fam = scalar("1", "0", "1", vec![point(0.0, "1")], 4);
        let probes = fam.default_probes();
        assert_eq!(probes.len(), 5);
        let cube = &probes[3];
        let t = fam.grid.node(2);
        assert_eq!(cube.get(0, 0, 2).re, t.powi(3));
        assert_eq!(cube.get(0, 1, 2).re, 3.0 * t * t);
        assert_eq!(cube.get(0, 2, 2).re, 6.0 * t);
    }

    #[test]
    fn discrepancy_examples() {
        // f(ε) = f(0) + ε with A, B, c fixed: d̃(ε) = sup|ε| = ε
        let fam = scalar("1", "1 + eps", "1", vec![point(0.0, "1")], 200);
        let s0 = solve(&fam.instantiate(0.0).unwrap()).unwrap();
        assert!(fam.discrepancy(0.0, &s0).unwrap() <= 1e-8);
        for &eps in &[0.25, 0.01] {
            assert!((fam.discrepancy(eps, &s0).unwrap() - eps).abs() <= 1e-12);
        }
    }

    #[test]
    fn constant_family_sweep_is_degenerate() {
        let fam = scalar("1", "t", "2", vec![point(0.0, "1")], 100);
        let r = fam.sweep().unwrap();
        assert!(r.rows.iter().all(|row| row.error == 0.0 && row.discrepancy <= 1e-12));
        assert!(r.degenerate && r.verdict());

        let ops = fam.operator_convergence_check(&fam.default_probes()).unwrap();
        assert!(ops.forward.values.iter().all(|&v| v == 0.0));
        assert!(ops.inverse.values.iter().all(|&v| v == 0.0));
        assert!(ops.pass && ops.equivalence_held);
    }

    #[test]
    fn singular_limit_rejects_sweep() {
        let periodic = scalar("0", "0", "0", vec![point(1.0, "1"), point(0.0, "-1")], 10);
        assert!(matches!(
            periodic.sweep(),
            Err(Error::SingularCharacteristicMatrix { eps, .. }) if eps == 0.0
        ));
    }

    #[test]
    fn sweep_reports_singular_schedule_point() {
        // B(ε)y = y(0) − 4ε·y(0): singular at ε = 1/4
        let fam = scalar("0", "0", "1", vec![point(0.0, "1 - 4*eps")], 10)
            .with_schedule(vec![0.5, 0.25, 0.125])
            .unwrap();
        assert!(matches!(
            fam.sweep(),
            Err(Error::SingularCharacteristicMatrix { eps, .. }) if eps == 0.25
        ));
    }

    #[test]
    fn operator_check_on_affine_family() {
        let fam = scalar("1 + eps*t", "0", "1", vec![point(0.0, "1")], 200);
        let r = fam.operator_convergence_check(&fam.default_probes()).unwrap();
        assert!(r.pass && r.equivalence_held);
        assert!((r.forward.slope.unwrap() - 1.0).abs() < 0.05);
        assert!((r.inverse.slope.unwrap() - 1.0).abs() < 0.05);
    }

    #[test]
    fn operator_check_counterexample() {
        let fam = scalar("1", "0", "1", vec![point(0.0, "1/eps")], 200)
            .with_limit(LimitData {
                boundary: Some(BoundarySpec::new(vec![point(0.0, "1")])),
                ..Default::default()
            })
            .unwrap();
        let r = fam.operator_convergence_check(&fam.default_probes()).unwrap();
        assert!(!r.forward.pass && !r.inverse.pass);
        assert!(!r.pass && r.equivalence_held);
    }

    #[test]
    fn verdict_rule() {
        assert!(converges(&[0.0, 0.0], 1e-9));
        assert!(converges(&[1.0, 0.5, 0.25, 0.05], 1e-9));
        assert!(!converges(&[1.0, 0.5, 0.9, 0.05], 1e-9));
        assert!(!converges(&[1.0, 0.9, 0.8], 1e-9));
        assert!(!converges(&[1.0, 2.0, 4.0], 1e-9));
        assert!(!converges(&[], 1e-9));
        assert!(!converges(&[f64::NAN], 1e-9));
    }

    #[test]
    fn line_fit() {
        let xs = [0.0, 1.0, 2.0];
        let (s, r2) = least_squares_line(&xs, &[1.0, 3.0, 5.0]).unwrap();
        assert!((s - 2.0).abs() < 1e-15 && (r2 - 1.0).abs() < 1e-15);
        assert!(least_squares_line(&[1.0], &[1.0]).is_none());
        assert_eq!(loglog_slope(&[0.1, 0.01], &[0.0, 0.0]), None);
    }
}
