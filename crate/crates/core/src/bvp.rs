//! The boundary-value problem `y' + A y = f`, `B y = c` at a fixed parameter value.
//!
//! The solution is assembled from the fundamental matrix `Y` (with `Y(a) = I`)
//! and the Cauchy solution `x` (`x(a) = 0`): `y = x + Y c̃`, where
//! `[B Y] c̃ = c − B x`. The same data give the split `y = v + w` into
//! a homogeneous part `v = Y [B Y]^{-1} c` carrying the boundary data and a part
//! `w` that solves the forced equation with zero boundary data.

use num_complex::Complex64;

use crate::boundary::{numerical_rank, nonsingularity_report, BoundaryOperator, CMatrix, CVector, NonsingularityReport};
use crate::error::{Error, Result};
use crate::ode::{cauchy_solve, fundamental_matrix, CoefficientProvider};
use crate::sobolev::{jet_axpy, jet_multiply, sobolev_norm, Grid, JetFunction, MatrixJet};

#[derive(Clone, Debug)]
pub struct Problem {
    pub grid: Grid,
    pub m: usize,
    pub n: usize,
    pub coeffs: CoefficientProvider,
    pub boundary: BoundaryOperator,
    pub c: Vec<Complex64>,
}

impl Problem {
    pub fn new(
        grid: Grid,
        coeffs: CoefficientProvider,
        boundary: BoundaryOperator,
        c: Vec<Complex64>,
    ) -> Result<Self> {
        let m = coeffs.m();
        let n = coeffs.max_order();
        if n == 0 {
            return Err(Error::ShapeMismatch("Sobolev index n must be at least 1".into()));
        }
        if boundary.m() != m || boundary.n() != n {
            return Err(Error::ShapeMismatch(format!(
                "boundary operator has m={}, n={}; coefficients have m={m}, n={n}",
                boundary.m(),
                boundary.n()
            )));
        }
        if c.len() != m {
            return Err(Error::ShapeMismatch(format!("c has {} entries, expected {m}", c.len())));
        }
        Ok(Self {
            grid,
            m,
            n,
            coeffs,
            boundary,
            c,
        })
    }

    pub fn eps(&self) -> f64 {
        self.coeffs.eps()
    }

    /// Scale used to make residual tolerances relative: `1 + |c|_∞ + ‖f‖_{n−1,∞}`.
    pub fn data_scale(&self) -> Result<f64> {
        let f = self.coeffs.f_jet(&self.grid, self.n - 1)?;
        let c = self.c.iter().map(|z| z.norm()).fold(0.0, f64::max);
        Ok(1.0 + c + sobolev_norm(&f, self.n - 1)?)
    }

    pub fn fundamental_matrix(&self) -> Result<MatrixJet> {
        fundamental_matrix(&self.coeffs, &self.grid)
    }

    pub fn characteristic_matrix(&self) -> Result<CMatrix> {
        self.boundary.characteristic_matrix(&self.fundamental_matrix()?)
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub y: JetFunction,
    /// Homogeneous solution with `B v = c`.
    pub v: JetFunction,
    /// Forced solution with `B w = 0`.
    pub w: JetFunction,
    /// Cauchy solution, `x(a) = 0`.
    pub x: JetFunction,
    /// Coefficients with `y = x + Y c̃`.
    pub c_tilde: Vec<Complex64>,
    pub fundamental: MatrixJet,
    pub char_matrix: CMatrix,
    pub report: NonsingularityReport,
    pub ode_residual: f64,
    pub boundary_residual: f64,
}

fn max_modulus(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn solve(p: &Problem) -> Result<SolveResult> {
    let fundamental = p.fundamental_matrix()?;
    let char_matrix = p.boundary.characteristic_matrix(&fundamental)?;
    let report = nonsingularity_report(&char_matrix);
    if report.singular {
        return Err(Error::SingularCharacteristicMatrix {
            eps: p.eps(),
            ratio: report.sigma_ratio,
        });
    }
    let x = cauchy_solve(&p.coeffs, &p.grid)?;
    let bx = p.boundary.apply(&x)?;
    let c = CVector::from_column_slice(&p.c);

    let lu = char_matrix.clone().lu();
    let solve_for = |rhs: &CVector| {
        lu.solve(rhs).ok_or(Error::SingularCharacteristicMatrix {
            eps: p.eps(),
            ratio: report.sigma_ratio,
        })
    };
    let c_v = solve_for(&c)?;
    let c_w = solve_for(&(-&bx))?;
    let c_tilde: Vec<Complex64> = (&c_v + &c_w).iter().copied().collect();

    let one = Complex64::new(1.0, 0.0);
    let v = fundamental.apply_vector(c_v.as_slice())?;
    let w = jet_axpy(one, &fundamental.apply_vector(c_w.as_slice())?, &x)?;
    let y = jet_axpy(one, &fundamental.apply_vector(&c_tilde)?, &x)?;
    let (ode_residual, boundary_residual) = residual_norms(p, &y)?;
    Ok(SolveResult {
        y,
        v,
        w,
        x,
        c_tilde,
        fundamental,
        char_matrix,
        report,
        ode_residual,
        boundary_residual,
    })
}

/// `m − rank [B Y]`: dimension of the homogeneous problem's solution space.
pub fn homogeneous_kernel_dim(p: &Problem) -> Result<usize> {
    Ok(p.m - numerical_rank(&p.characteristic_matrix()?))
}

/// `(‖y' + A y − f‖_{n−1,∞}, |B y − c|_∞)` for a candidate jet of order `n`.
pub fn residual_norms(p: &Problem, y: &JetFunction) -> Result<(f64, f64)> {
    if y.m() != p.m || y.order() < p.n || y.grid() != &p.grid {
        return Err(Error::ShapeMismatch(format!(
            "candidate jet m={}, n={} does not fit problem m={}, n={}",
            y.m(),
            y.order(),
            p.m,
            p.n
        )));
    }
    let ode = operator_residual(&p.coeffs, &p.grid, p.n, y)?;
    let by = p.boundary.apply(y)?;
    let c = CVector::from_column_slice(&p.c);
    Ok((sobolev_norm(&ode, p.n - 1)?, max_modulus(&(by - c))))
}

/// Jet of `y' + A y − f` of order `n − 1`.
pub(crate) fn operator_residual(
    coeffs: &CoefficientProvider,
    grid: &Grid,
    n: usize,
    y: &JetFunction,
) -> Result<JetFunction> {
    let low = y.truncated(n)?;
    let dy = low.derivative()?;
    let a = coeffs.a_jet(grid, n - 1)?;
    let ay = jet_multiply(&a, &low.truncated(n - 1)?)?;
    let f = coeffs.f_jet(grid, n - 1)?;
    let lhs = jet_axpy(Complex64::new(1.0, 0.0), &dy, &ay)?;
    jet_axpy(Complex64::new(-1.0, 0.0), &f, &lhs)
}
