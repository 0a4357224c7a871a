//! Boundary operators `B: (W^n_∞)^m → C^m` built from point evaluations and
//! integral terms, and the characteristic matrix `[B Y]`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::expr::ComplexExpr;
use crate::sobolev::{Grid, JetFunction, MatrixJet};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative singular-value threshold separating rank deficiency from roundoff.
pub const SINGULARITY_THRESHOLD: f64 = 1e-10;

/// `coeff · y^{(order)}(node)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointTerm {
    pub node: f64,
    pub order: usize,
    pub coeff: CMatrix,
}

/// `scale · ∫_a^b Φ(t) y^{(order)}(t) dt`, with `Φ` evaluated at the bound `eps`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegralTerm {
    /// Row-major `m×m` kernel.
    pub kernel: Vec<ComplexExpr>,
    pub order: usize,
    pub eps: f64,
    pub scale: Complex64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryOperator {
    m: usize,
    n: usize,
    point_terms: Vec<PointTerm>,
    integral_terms: Vec<IntegralTerm>,
}

impl BoundaryOperator {
    pub fn new(
        m: usize,
        n: usize,
        point_terms: Vec<PointTerm>,
        integral_terms: Vec<IntegralTerm>,
    ) -> Result<Self> {
        if point_terms.is_empty() && integral_terms.is_empty() {
            return Err(Error::InvalidBoundary("no terms".into()));
        }
        if n == 0 {
            return Err(Error::InvalidBoundary("Sobolev index n must be at least 1".into()));
        }
        for term in &point_terms {
            if term.order >= n {
                return Err(Error::InvalidBoundary(format!(
                    "point term of order {} exceeds n−1 = {}",
                    term.order,
                    n - 1
                )));
            }
            if term.coeff.shape() != (m, m) {
                return Err(Error::InvalidBoundary(format!(
                    "point coefficient is {:?}, expected ({m}, {m})",
                    term.coeff.shape()
                )));
            }
            if !term.node.is_finite() {
                return Err(Error::InvalidBoundary(format!("non-finite node {}", term.node)));
            }
        }
        for term in &integral_terms {
            if term.order >= n {
                return Err(Error::InvalidBoundary(format!(
                    "integral term of order {} exceeds n−1 = {}",
                    term.order,
                    n - 1
                )));
            }
            if term.kernel.len() != m * m {
                return Err(Error::InvalidBoundary(format!(
                    "kernel has {} entries, expected {}",
                    term.kernel.len(),
                    m * m
                )));
            }
        }
        Ok(Self {
            m,
            n,
            point_terms,
            integral_terms,
        })
    }

    /// `y ↦ y^{(order)}(node)` with identity coefficient.
    pub fn evaluation(m: usize, n: usize, node: f64, order: usize) -> Result<Self> {
        Self::new(
            m,
            n,
            vec![PointTerm {
                node,
                order,
                coeff: CMatrix::identity(m, m),
            }],
            vec![],
        )
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn point_terms(&self) -> &[PointTerm] {
        &self.point_terms
    }

    pub fn integral_terms(&self) -> &[IntegralTerm] {
        &self.integral_terms
    }

    /// Sum of the terms of both operators.
    pub fn combined(&self, other: &BoundaryOperator) -> Result<Self> {
        if self.m != other.m || self.n != other.n {
            return Err(Error::ShapeMismatch("boundary operators of different shape".into()));
        }
        let mut out = self.clone();
        out.point_terms.extend(other.point_terms.iter().cloned());
        out.integral_terms.extend(other.integral_terms.iter().cloned());
        Ok(out)
    }

    /// Constant a priori bound: `|B y|_∞ ≤ K_B · ‖y‖_{n,∞}` with
    /// `K_B = Σ ‖α_j‖_∞ + Σ |scale|·(b−a)·max_t ‖Φ(t)‖_∞` (row-sum norms).
    pub fn bound_constant(&self, grid: &Grid) -> Result<f64> {
        let mut total: f64 = self.point_terms.iter().map(|p| row_sum_norm(&p.coeff)).sum();
        for term in &self.integral_terms {
            let mut worst = 0.0f64;
            for t in grid.nodes() {
                let mut phi = CMatrix::zeros(self.m, self.m);
                for (idx, e) in term.kernel.iter().enumerate() {
                    phi[(idx / self.m, idx % self.m)] = e.eval(t, term.eps)?;
                }
                worst = worst.max(row_sum_norm(&phi));
            }
            total += term.scale.norm() * (grid.b() - grid.a()) * worst;
        }
        Ok(total)
    }

    fn kernel_samples(&self, grid: &Grid) -> Result<Vec<Vec<Complex64>>> {
        if self.integral_terms.is_empty() {
            return Ok(vec![]);
        }
        if !grid.intervals().is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "Simpson quadrature needs an even number of subintervals, got {}",
                grid.intervals()
            )));
        }
        let weights = simpson_weights(grid);
        self.integral_terms
            .iter()
            .map(|term| {
                // Pre-multiplied by scale and quadrature weight: [node][entry].
                let mut out = Vec::with_capacity(grid.len() * self.m * self.m);
                for (i, t) in grid.nodes().enumerate() {
                    for e in &term.kernel {
                        out.push(term.scale * weights[i] * e.eval(t, term.eps)?);
                    }
                }
                Ok(out)
            })
            .collect()
    }

    fn node_indices(&self, grid: &Grid) -> Result<Vec<usize>> {
        self.point_terms
            .iter()
            .map(|p| grid.node_index(p.node).ok_or(Error::NodeOffGrid { t: p.node }))
            .collect()
    }

    fn apply_prepared(
        &self,
        y: &JetFunction,
        nodes: &[usize],
        kernels: &[Vec<Complex64>],
    ) -> Result<CVector> {
        let m = self.m;
        if y.m() != m {
            return Err(Error::ShapeMismatch(format!(
                "boundary operator for m={m} applied to a jet with m={}",
                y.m()
            )));
        }
        let needed = self
            .point_terms
            .iter()
            .map(|p| p.order)
            .chain(self.integral_terms.iter().map(|t| t.order))
            .max()
            .unwrap_or(0);
        if y.order() < needed {
            return Err(Error::OrderOutOfRange {
                requested: needed,
                available: y.order(),
            });
        }
        let mut out = CVector::zeros(m);
        for (term, &i) in self.point_terms.iter().zip(nodes) {
            for r in 0..m {
                for c in 0..m {
                    out[r] += term.coeff[(r, c)] * y.get(c, term.order, i);
                }
            }
        }
        for (term, samples) in self.integral_terms.iter().zip(kernels) {
            for i in 0..y.grid().len() {
                let phi = &samples[i * m * m..(i + 1) * m * m];
                for r in 0..m {
                    for c in 0..m {
                        out[r] += phi[r * m + c] * y.get(c, term.order, i);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `B y`: point terms plus composite-Simpson integrals over the jet's grid.
    pub fn apply(&self, y: &JetFunction) -> Result<CVector> {
        let nodes = self.node_indices(y.grid())?;
        let kernels = self.kernel_samples(y.grid())?;
        self.apply_prepared(y, &nodes, &kernels)
    }

    /// `[B Y]`: column `j` is `B` applied to column `j` of `Y`.
    pub fn characteristic_matrix(&self, fundamental: &MatrixJet) -> Result<CMatrix> {
        let grid = fundamental.grid();
        let nodes = self.node_indices(grid)?;
        let kernels = self.kernel_samples(grid)?;
        if fundamental.m() != self.m {
            return Err(Error::ShapeMismatch(format!(
                "fundamental matrix is {m}×{m}, operator expects m={}",
                self.m,
                m = fundamental.m()
            )));
        }
        let mut out = CMatrix::zeros(self.m, self.m);
        for c in 0..self.m {
            let col = self.apply_prepared(&fundamental.column(c), &nodes, &kernels)?;
            out.set_column(c, &col);
        }
        Ok(out)
    }
}

fn row_sum_norm(a: &CMatrix) -> f64 {
    a.row_iter()
        .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn col_sum_norm(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Composite Simpson weights on an even grid.
pub fn simpson_weights(grid: &Grid) -> Vec<f64> {
    let n = grid.intervals();
    let h = grid.step();
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct NonsingularityReport {
    pub det: Complex64,
    /// 1-norm condition number; infinite when singular.
    pub cond: f64,
    pub singular: bool,
    /// `σ_min / σ_max` (0 for the zero matrix).
    pub sigma_ratio: f64,
}

fn singular_values(a: &CMatrix) -> Vec<f64> {
    if a.is_empty() {
        return vec![];
    }
    a.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Rank from singular values above `SINGULARITY_THRESHOLD · σ_max`.
pub fn numerical_rank(a: &CMatrix) -> usize {
    let sv = singular_values(a);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > SINGULARITY_THRESHOLD * smax).count()
}

pub fn nonsingularity_report(a: &CMatrix) -> NonsingularityReport {
    let sv = singular_values(a);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let sigma_ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    let singular = smax == 0.0 || sigma_ratio < SINGULARITY_THRESHOLD;
    let lu = a.clone().lu();
    let det = lu.determinant();
    let cond = if singular {
        f64::INFINITY
    } else {
        match lu.try_inverse() {
            Some(inv) => col_sum_norm(a) * col_sum_norm(&inv),
            None => f64::INFINITY,
        }
    };
    NonsingularityReport {
        det,
        cond,
        singular,
        sigma_ratio,
    }
}
