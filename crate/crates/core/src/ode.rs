//! Fundamental matrices and Cauchy problems for `y' + A(t)y = f(t)`.
//!
//! The order-0 layer is integrated with classical fixed-step RK4 on the grid
//! (stage values of `A` and `f` are taken at the half-nodes). Higher derivative
//! layers are never obtained by numerical differentiation; they come from the
//! equation itself,
//!
//! ```text
//! y^{(k+1)} = f^{(k)} − Σ_{j=0}^{k} C(k,j) A^{(j)} y^{(k−j)},
//! ```
//!
//! evaluated nodewise with exact coefficient jets.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::expr::ComplexExpr;
use crate::sobolev::{binomial_row, Grid, JetFunction, MatrixJet};

/// Entries above this magnitude abort integration.
pub const BLOW_UP_THRESHOLD: f64 = 1e300;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `A(t)` and optionally `f(t)` with `eps` already bound.
///
/// `max_order` is the Sobolev index `n` of the solution space; the coefficients
/// are differentiated up to order `n − 1`.
#[derive(Clone, Debug)]
pub struct CoefficientProvider {
    m: usize,
    a: Vec<ComplexExpr>,
    f: Option<Vec<ComplexExpr>>,
    eps: f64,
    max_order: usize,
}

impl CoefficientProvider {
    /// `a` is row-major `m×m`; `f`, when present, has `m` entries.
    pub fn new(
        m: usize,
        a: Vec<ComplexExpr>,
        f: Option<Vec<ComplexExpr>>,
        eps: f64,
        max_order: usize,
    ) -> Result<Self> {
        if m == 0 || a.len() != m * m {
            return Err(Error::ShapeMismatch(format!(
                "A needs {} entries for m={m}, got {}",
                m * m,
                a.len()
            )));
        }
        if let Some(f) = &f {
            if f.len() != m {
                return Err(Error::ShapeMismatch(format!(
                    "f needs {m} entries, got {}",
                    f.len()
                )));
            }
        }
        Ok(Self {
            m,
            a,
            f,
            eps,
            max_order,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn a_entries(&self) -> &[ComplexExpr] {
        &self.a
    }

    pub fn f_entries(&self) -> Option<&[ComplexExpr]> {
        self.f.as_deref()
    }

    /// Same `A`, different forcing.
    pub fn with_forcing(&self, f: Option<Vec<ComplexExpr>>) -> Result<Self> {
        Self::new(self.m, self.a.clone(), f, self.eps, self.max_order)
    }

    /// Row-major `A(t)`.
    pub fn a_at(&self, t: f64) -> Result<Vec<Complex64>> {
        self.a.iter().map(|e| e.eval(t, self.eps)).collect()
    }

    pub fn f_at(&self, t: f64) -> Result<Option<Vec<Complex64>>> {
        self.f
            .as_ref()
            .map(|f| f.iter().map(|e| e.eval(t, self.eps)).collect())
            .transpose()
    }

    fn check_jet_order(&self, order: usize) -> Result<()> {
        if order + 1 > self.max_order {
            return Err(Error::InsufficientOrder {
                needed: order + 1,
                available: self.max_order,
            });
        }
        Ok(())
    }

    /// Jet of `A` with layers `0..=order` (requires `order ≤ n − 1`).
    pub fn a_jet(&self, grid: &Grid, order: usize) -> Result<MatrixJet> {
        self.check_jet_order(order)?;
        let m = self.m;
        let mut out = MatrixJet::zeros(*grid, m, order);
        for (idx, entry) in self.a.iter().enumerate() {
            let jet = entry.jet(order);
            let (r, c) = (idx / m, idx % m);
            for (i, t) in grid.nodes().enumerate() {
                for (k, v) in jet.eval(t, self.eps)?.into_iter().enumerate() {
                    out.set(r, c, k, i, v);
                }
            }
        }
        Ok(out)
    }

    /// Jet of `f` with layers `0..=order`; zero when no forcing is present.
    pub fn f_jet(&self, grid: &Grid, order: usize) -> Result<JetFunction> {
        self.check_jet_order(order)?;
        let mut out = JetFunction::zeros(*grid, self.m, order);
        if let Some(f) = &self.f {
            for (r, entry) in f.iter().enumerate() {
                let jet = entry.jet(order);
                for (i, t) in grid.nodes().enumerate() {
                    for (k, v) in jet.eval(t, self.eps)?.into_iter().enumerate() {
                        out.set(r, k, i, v);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Coefficient values at nodes (even indices) and half-nodes (odd indices).
struct StageSamples {
    a: Vec<Vec<Complex64>>,
    f: Option<Vec<Vec<Complex64>>>,
}

fn sample_stages(coeffs: &CoefficientProvider, grid: &Grid, forcing: bool) -> Result<StageSamples> {
    let h = grid.step();
    let points: Vec<f64> = (0..2 * grid.intervals() + 1)
        .map(|s| {
            if s % 2 == 0 {
                grid.node(s / 2)
            } else {
                grid.node(s / 2) + 0.5 * h
            }
        })
        .collect();
    let a = points
        .iter()
        .map(|&t| coeffs.a_at(t))
        .collect::<Result<Vec<_>>>()?;
    let f = if forcing && coeffs.f.is_some() {
        Some(
            points
                .iter()
                .map(|&t| coeffs.f_at(t).map(|v| v.unwrap_or_default()))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(StageSamples { a, f })
}

/// `−A·Y (+ f in every column)` for an `m×p` row-major state.
fn rhs(m: usize, p: usize, a: &[Complex64], f: Option<&[Complex64]>, y: &[Complex64], out: &mut [Complex64]) {
    for r in 0..m {
        for c in 0..p {
            let mut acc = f.map_or(ZERO, |f| f[r]);
            for s in 0..m {
                acc -= a[r * m + s] * y[s * p + c];
            }
            out[r * p + c] = acc;
        }
    }
}

/// Classical RK4 for `Y' = −A Y + f`, returning the state at every node.
///
/// The state update is accumulated with compensated summation so that
/// rounding does not swamp the O(h^4) truncation error on fine grids.
fn rk4_linear(
    grid: &Grid,
    m: usize,
    p: usize,
    y0: Vec<Complex64>,
    samples: &StageSamples,
) -> Result<Vec<Vec<Complex64>>> {
    let h = grid.step();
    let len = m * p;
    let mut states = Vec::with_capacity(grid.len());
    let mut y = y0;
    let mut comp = vec![ZERO; len];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]);
    let mut tmp = vec![ZERO; len];
    states.push(y.clone());
    let f_at = |s: usize| samples.f.as_ref().map(|f| f[s].as_slice());
    for step in 0..grid.intervals() {
        let (s0, s1, s2) = (2 * step, 2 * step + 1, 2 * step + 2);
        rhs(m, p, &samples.a[s0], f_at(s0), &y, &mut k1);
        for q in 0..len {
            tmp[q] = y[q] + 0.5 * h * k1[q];
        }
        rhs(m, p, &samples.a[s1], f_at(s1), &tmp, &mut k2);
        for q in 0..len {
            tmp[q] = y[q] + 0.5 * h * k2[q];
        }
        rhs(m, p, &samples.a[s1], f_at(s1), &tmp, &mut k3);
        for q in 0..len {
            tmp[q] = y[q] + h * k3[q];
        }
        rhs(m, p, &samples.a[s2], f_at(s2), &tmp, &mut k4);
        for q in 0..len {
            let incr = h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]) - comp[q];
            let next = y[q] + incr;
            comp[q] = (next - y[q]) - incr;
            y[q] = next;
            if !(y[q].re.is_finite() && y[q].im.is_finite()) || y[q].norm() > BLOW_UP_THRESHOLD {
                return Err(Error::BlowUp {
                    t: grid.node(step + 1),
                });
            }
        }
        states.push(y.clone());
    }
    Ok(states)
}

fn identity_state(m: usize) -> Vec<Complex64> {
    let mut y = vec![ZERO; m * m];
    for r in 0..m {
        y[r * m + r] = Complex64::new(1.0, 0.0);
    }
    y
}

fn fundamental_layer0(coeffs: &CoefficientProvider, grid: &Grid) -> Result<Vec<Vec<Complex64>>> {
    let samples = sample_stages(coeffs, grid, false)?;
    rk4_linear(grid, coeffs.m, coeffs.m, identity_state(coeffs.m), &samples)
}

fn cauchy_layer0(coeffs: &CoefficientProvider, grid: &Grid) -> Result<Vec<Vec<Complex64>>> {
    let samples = sample_stages(coeffs, grid, true)?;
    rk4_linear(grid, coeffs.m, 1, vec![ZERO; coeffs.m], &samples)
}

/// Fill layers `1..=n` by the equation's recursion, given layer 0 and the
/// coefficient jets of order `n − 1`.
fn lift_with_jets(y: &mut JetFunction, a: &MatrixJet, f: Option<&JetFunction>) {
    let m = y.m();
    let n = y.order();
    for k in 0..n {
        let binom = binomial_row(k);
        for i in 0..y.grid().len() {
            for r in 0..m {
                let mut acc = f.map_or(ZERO, |f| f.get(r, k, i));
                for (j, &cj) in binom.iter().enumerate() {
                    for c in 0..m {
                        acc -= cj * a.get(r, c, j, i) * y.get(c, k - j, i);
                    }
                }
                y.set(r, k + 1, i, acc);
            }
        }
    }
}

fn jet_from_layer0(grid: &Grid, m: usize, n: usize, column: usize, p: usize, states: &[Vec<Complex64>]) -> JetFunction {
    let mut jet = JetFunction::zeros(*grid, m, n);
    for (i, state) in states.iter().enumerate() {
        for r in 0..m {
            jet.set(r, 0, i, state[r * p + column]);
        }
    }
    jet
}

/// Fundamental matrix of `Y' = −A Y`, `Y(a) = I`, as a jet of order `n`.
pub fn fundamental_matrix(coeffs: &CoefficientProvider, grid: &Grid) -> Result<MatrixJet> {
    let m = coeffs.m;
    let n = coeffs.max_order;
    let states = fundamental_layer0(coeffs, grid)?;
    let a = coeffs.a_jet(grid, n.saturating_sub(1))?;
    let columns: Vec<JetFunction> = (0..m)
        .map(|c| {
            let mut col = jet_from_layer0(grid, m, n, c, m, &states);
            lift_with_jets(&mut col, &a, None);
            col
        })
        .collect();
    MatrixJet::from_columns(&columns)
}

/// Solution of `x' + A x = f`, `x(a) = 0`, as a jet of order `n`. Missing
/// forcing is treated as `f ≡ 0`.
pub fn cauchy_solve(coeffs: &CoefficientProvider, grid: &Grid) -> Result<JetFunction> {
    let states = cauchy_layer0(coeffs, grid)?;
    let y0 = jet_from_layer0(grid, coeffs.m, 0, 0, 1, &states);
    lift_derivatives(&y0, coeffs, coeffs.max_order)
}

/// Extend layer 0 of `y0` to a jet of order `n` using the equation.
pub fn lift_derivatives(y0: &JetFunction, coeffs: &CoefficientProvider, n: usize) -> Result<JetFunction> {
    if y0.m() != coeffs.m {
        return Err(Error::ShapeMismatch(format!(
            "jet has {} components, coefficients have {}",
            y0.m(),
            coeffs.m
        )));
    }
    if n > coeffs.max_order {
        return Err(Error::InsufficientOrder {
            needed: n,
            available: coeffs.max_order,
        });
    }
    let grid = y0.grid();
    let mut y = JetFunction::zeros(*grid, y0.m(), n);
    for r in 0..y0.m() {
        for i in 0..grid.len() {
            y.set(r, 0, i, y0.get(r, 0, i));
        }
    }
    if n > 0 {
        let a = coeffs.a_jet(grid, n - 1)?;
        let f = coeffs.f_jet(grid, n - 1)?;
        lift_with_jets(&mut y, &a, Some(&f));
    }
    Ok(y)
}

/// Richardson indicator: max node discrepancy of the order-0 layers of the
/// fundamental matrix (and of the Cauchy solution, when forced) between the
/// grid and its 2× refinement.
pub fn integration_error_estimate(coeffs: &CoefficientProvider, grid: &Grid) -> Result<f64> {
    let fine = grid.refined(2);
    let mut worst = 0.0f64;
    let mut compare = |coarse: &[Vec<Complex64>], refined: &[Vec<Complex64>]| {
        for (i, state) in coarse.iter().enumerate() {
            for (x, y) in state.iter().zip(&refined[2 * i]) {
                worst = worst.max((x - y).norm());
            }
        }
    };
    compare(&fundamental_layer0(coeffs, grid)?, &fundamental_layer0(coeffs, &fine)?);
    if coeffs.f.is_some() {
        compare(&cauchy_layer0(coeffs, grid)?, &cauchy_layer0(coeffs, &fine)?);
    }
    Ok(worst)
}
