//! Derivative jets on a uniform grid and the `W^n_∞` norms built on them.
//!
//! A [`JetFunction`] stores `y_j^{(k)}(t_i)` for every component `j`, derivative
//! order `k = 0..=n` and node `i`. The Sobolev norm uses the sum-of-sups
//! convention
//!
//! ```text
//! ‖y‖_{n,∞} = Σ_{k=0}^{n} max_{i,j} |y_j^{(k)}(t_i)|
//! ```
//!
//! with the essential supremum approximated by the maximum over grid nodes.
//! Under this convention the Leibniz rule gives
//! `‖uv‖_{n,∞} ≤ 2^n ‖u‖_{n,∞} ‖v‖_{n,∞}`.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    a: f64,
    b: f64,
    intervals: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, intervals: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidGrid(format!("need finite a < b, got [{a}, {b}]")));
        }
        if intervals < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 subintervals, got {intervals}"
            )));
        }
        Ok(Self { a, b, intervals })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Number of subintervals `N`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of nodes `N + 1`.
    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / self.intervals as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.intervals {
            self.b
        } else {
            self.a + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.node(i))
    }

    pub fn refined(&self, factor: usize) -> Self {
        Self {
            intervals: self.intervals * factor,
            ..*self
        }
    }

    /// Index and distance of the node closest to `t`.
    pub fn nearest_node(&self, t: f64) -> (usize, f64) {
        let raw = ((t - self.a) / self.step()).round();
        let i = raw.clamp(0.0, self.intervals as f64) as usize;
        (i, (self.node(i) - t).abs())
    }

    /// Node index of `t`, if `t` lies within `1e-12·(b−a)` of a node.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let (i, dist) = self.nearest_node(t);
        (dist <= 1e-12 * (self.b - self.a)).then_some(i)
    }

    fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch(format!(
                "grids differ: [{}, {}]/{} vs [{}, {}]/{}",
                self.a, self.b, self.intervals, other.a, other.b, other.intervals
            )));
        }
        Ok(())
    }
}

fn check_finite(data: &[Complex64]) -> Result<()> {
    if data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Vector function `[a,b] → C^m` with derivative layers `0..=order` sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct JetFunction {
    grid: Grid,
    m: usize,
    order: usize,
    data: Vec<Complex64>,
}

impl JetFunction {
    pub fn zeros(grid: Grid, m: usize, order: usize) -> Self {
        assert!(m >= 1, "component count must be positive");
        Self {
            grid,
            m,
            order,
            data: vec![Complex64::new(0.0, 0.0); m * (order + 1) * grid.len()],
        }
    }

    /// Build from raw data laid out as `[component][order][node]`.
    pub fn from_data(grid: Grid, m: usize, order: usize, data: Vec<Complex64>) -> Result<Self> {
        if m == 0 || data.len() != m * (order + 1) * grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "jet data length {} does not match m={m}, n={order}, nodes={}",
                data.len(),
                grid.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self {
            grid,
            m,
            order,
            data,
        })
    }

    /// Sample `value(component, order, t)` at every node.
    pub fn from_fn(
        grid: Grid,
        m: usize,
        order: usize,
        mut value: impl FnMut(usize, usize, f64) -> Complex64,
    ) -> Result<Self> {
        let mut jet = Self::zeros(grid, m, order);
        for j in 0..m {
            for k in 0..=order {
                for i in 0..grid.len() {
                    let v = value(j, k, grid.node(i));
                    jet.set(j, k, i, v);
                }
            }
        }
        check_finite(&jet.data)?;
        Ok(jet)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    fn idx(&self, j: usize, k: usize, i: usize) -> usize {
        (j * (self.order + 1) + k) * self.grid.len() + i
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize, i: usize) -> Complex64 {
        self.data[self.idx(j, k, i)]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, i: usize, value: Complex64) {
        let idx = self.idx(j, k, i);
        self.data[idx] = value;
    }

    /// Values of layer `k` at node `i` for all components.
    pub fn point(&self, k: usize, i: usize) -> Vec<Complex64> {
        (0..self.m).map(|j| self.get(j, k, i)).collect()
    }

    /// Keep layers `0..=order`.
    pub fn truncated(&self, order: usize) -> Result<Self> {
        self.check_order(order)?;
        Ok(Self::from_fn_unchecked(self.grid, self.m, order, |j, k, i| {
            self.get(j, k, i)
        }))
    }

    /// Jet of the derivative: layers `1..=n` relabelled `0..=n−1`.
    pub fn derivative(&self) -> Result<Self> {
        if self.order == 0 {
            return Err(Error::OrderOutOfRange {
                requested: 1,
                available: 0,
            });
        }
        Ok(Self::from_fn_unchecked(self.grid, self.m, self.order - 1, |j, k, i| {
            self.get(j, k + 1, i)
        }))
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        Self {
            data: self.data.iter().map(|z| alpha * z).collect(),
            ..self.clone()
        }
    }

    pub(crate) fn from_fn_unchecked(
        grid: Grid,
        m: usize,
        order: usize,
        value: impl Fn(usize, usize, usize) -> Complex64,
    ) -> Self {
        let mut jet = Self::zeros(grid, m, order);
        for j in 0..m {
            for k in 0..=order {
                for i in 0..grid.len() {
                    jet.set(j, k, i, value(j, k, i));
                }
            }
        }
        jet
    }

    fn check_order(&self, k: usize) -> Result<()> {
        if k > self.order {
            return Err(Error::OrderOutOfRange {
                requested: k,
                available: self.order,
            });
        }
        Ok(())
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.m != other.m || self.order != other.order {
            return Err(Error::ShapeMismatch(format!(
                "jets differ: m={}, n={} vs m={}, n={}",
                self.m, self.order, other.m, other.order
            )));
        }
        Ok(())
    }
}

impl std::ops::Sub for &JetFunction {
    type Output = Result<JetFunction>;

    fn sub(self, rhs: &JetFunction) -> Result<JetFunction> {
        jet_axpy(Complex64::new(-1.0, 0.0), rhs, self)
    }
}

/// Matrix function `[a,b] → C^{m×m}` with derivative layers on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixJet {
    grid: Grid,
    m: usize,
    order: usize,
    data: Vec<Complex64>,
}

impl MatrixJet {
    pub fn zeros(grid: Grid, m: usize, order: usize) -> Self {
        assert!(m >= 1, "matrix dimension must be positive");
        Self {
            grid,
            m,
            order,
            data: vec![Complex64::new(0.0, 0.0); m * m * (order + 1) * grid.len()],
        }
    }

    /// Constant identity matrix: layer 0 is `I_m`, higher layers vanish.
    pub fn identity(grid: Grid, m: usize, order: usize) -> Self {
        let mut jet = Self::zeros(grid, m, order);
        for r in 0..m {
            for i in 0..grid.len() {
                jet.set(r, r, 0, i, Complex64::new(1.0, 0.0));
            }
        }
        jet
    }

    pub fn from_fn(
        grid: Grid,
        m: usize,
        order: usize,
        mut value: impl FnMut(usize, usize, usize, f64) -> Complex64,
    ) -> Result<Self> {
        let mut jet = Self::zeros(grid, m, order);
        for r in 0..m {
            for c in 0..m {
                for k in 0..=order {
                    for i in 0..grid.len() {
                        let v = value(r, c, k, grid.node(i));
                        jet.set(r, c, k, i, v);
                    }
                }
            }
        }
        check_finite(&jet.data)?;
        Ok(jet)
    }

    /// 1×1 matrix jet carrying a scalar jet (`m = 1`).
    pub fn from_scalar(y: &JetFunction) -> Result<Self> {
        if y.m != 1 {
            return Err(Error::ShapeMismatch(format!(
                "scalar jet expected, got m={}",
                y.m
            )));
        }
        Ok(Self {
            grid: y.grid,
            m: 1,
            order: y.order,
            data: y.data.clone(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    fn idx(&self, r: usize, c: usize, k: usize, i: usize) -> usize {
        (((r * self.m + c) * (self.order + 1)) + k) * self.grid.len() + i
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, k: usize, i: usize) -> Complex64 {
        self.data[self.idx(r, c, k, i)]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, k: usize, i: usize, value: Complex64) {
        let idx = self.idx(r, c, k, i);
        self.data[idx] = value;
    }

    /// Column `c` as a vector jet.
    pub fn column(&self, c: usize) -> JetFunction {
        JetFunction::from_fn_unchecked(self.grid, self.m, self.order, |r, k, i| {
            self.get(r, c, k, i)
        })
    }

    /// Assemble from column jets sharing grid and order.
    pub fn from_columns(columns: &[JetFunction]) -> Result<Self> {
        let first = columns
            .first()
            .ok_or_else(|| Error::ShapeMismatch("no columns".into()))?;
        let m = first.m;
        if columns.len() != m {
            return Err(Error::ShapeMismatch(format!(
                "{} columns for an {m}×{m} matrix",
                columns.len()
            )));
        }
        let mut out = Self::zeros(first.grid, m, first.order);
        for (c, col) in columns.iter().enumerate() {
            first.check_compatible(col)?;
            for r in 0..m {
                for k in 0..=first.order {
                    for i in 0..first.grid.len() {
                        out.set(r, c, k, i, col.get(r, k, i));
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn truncated(&self, order: usize) -> Result<Self> {
        if order > self.order {
            return Err(Error::OrderOutOfRange {
                requested: order,
                available: self.order,
            });
        }
        let mut out = Self::zeros(self.grid, self.m, order);
        for r in 0..self.m {
            for c in 0..self.m {
                for k in 0..=order {
                    for i in 0..self.grid.len() {
                        out.set(r, c, k, i, self.get(r, c, k, i));
                    }
                }
            }
        }
        Ok(out)
    }

    /// `Y·v` for a constant vector `v`.
    pub fn apply_vector(&self, v: &[Complex64]) -> Result<JetFunction> {
        if v.len() != self.m {
            return Err(Error::ShapeMismatch(format!(
                "vector of length {} for an {m}×{m} matrix",
                v.len(),
                m = self.m
            )));
        }
        Ok(JetFunction::from_fn_unchecked(
            self.grid,
            self.m,
            self.order,
            |r, k, i| (0..self.m).map(|c| self.get(r, c, k, i) * v[c]).sum(),
        ))
    }

    /// Entrywise difference `self − other`.
    pub fn difference(&self, other: &MatrixJet) -> Result<MatrixJet> {
        self.grid.check_same(&other.grid)?;
        if self.m != other.m || self.order != other.order {
            return Err(Error::ShapeMismatch(format!(
                "matrix jets differ: m={}, n={} vs m={}, n={}",
                self.m, self.order, other.m, other.order
            )));
        }
        Ok(Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| x - y)
                .collect(),
            ..self.clone()
        })
    }
}

/// `max_{i,j} |y_j^{(k)}(t_i)|`.
pub fn sup_norm(y: &JetFunction, k: usize) -> Result<f64> {
    y.check_order(k)?;
    let mut best = 0.0f64;
    for j in 0..y.m {
        for i in 0..y.grid.len() {
            best = best.max(y.get(j, k, i).norm());
        }
    }
    Ok(best)
}

/// `Σ_{k=0}^{order} sup_norm(y, k)`.
pub fn sobolev_norm(y: &JetFunction, order: usize) -> Result<f64> {
    y.check_order(order)?;
    (0..=order).map(|k| sup_norm(y, k)).sum()
}

/// Sum over orders of the entrywise-max matrix norm of each derivative layer.
pub fn matrix_sobolev_norm(a: &MatrixJet, order: usize) -> Result<f64> {
    if order > a.order {
        return Err(Error::OrderOutOfRange {
            requested: order,
            available: a.order,
        });
    }
    let mut total = 0.0;
    for k in 0..=order {
        let mut best = 0.0f64;
        for r in 0..a.m {
            for c in 0..a.m {
                for i in 0..a.grid.len() {
                    best = best.max(a.get(r, c, k, i).norm());
                }
            }
        }
        total += best;
    }
    Ok(total)
}

/// `alpha·x + y`.
pub fn jet_axpy(alpha: Complex64, x: &JetFunction, y: &JetFunction) -> Result<JetFunction> {
    x.check_compatible(y)?;
    Ok(JetFunction {
        data: x
            .data
            .iter()
            .zip(&y.data)
            .map(|(xv, yv)| alpha * xv + yv)
            .collect(),
        ..y.clone()
    })
}

pub(crate) fn binomial_row(k: usize) -> Vec<f64> {
    let mut row = vec![1.0; k + 1];
    for j in 1..k {
        row[j] = row[j - 1] * (k - j + 1) as f64 / j as f64;
    }
    row
}

/// Product jet `A·y` via the Leibniz rule, layer by layer at each node.
pub fn jet_multiply(a: &MatrixJet, y: &JetFunction) -> Result<JetFunction> {
    a.grid.check_same(&y.grid)?;
    if a.m != y.m || a.order != y.order {
        return Err(Error::ShapeMismatch(format!(
            "cannot multiply m={}, n={} matrix jet by m={}, n={} jet",
            a.m, a.order, y.m, y.order
        )));
    }
    let m = a.m;
    let n = a.order;
    let mut out = JetFunction::zeros(y.grid, m, n);
    for k in 0..=n {
        let binom = binomial_row(k);
        for r in 0..m {
            for i in 0..y.grid.len() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, &cj) in binom.iter().enumerate() {
                    for c in 0..m {
                        acc += cj * a.get(r, c, j, i) * y.get(c, k - j, i);
                    }
                }
                out.set(r, k, i, acc);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn unit() -> Grid {
        Grid::new(0.0, 1.0, 10).unwrap()
    }

    /// Jet of the monomial `t` on the grid.
    fn t_jet(grid: Grid, n: usize) -> JetFunction {
        JetFunction::from_fn(grid, 1, n, |_, k, t| match k {
            0 => c(t),
            1 => c(1.0),
            _ => c(0.0),
        })
        .unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(1.0, 0.0, 10).is_err());
        assert!(Grid::new(0.0, 1.0, 1).is_err());
        let g = Grid::new(0.0, 2.0, 4).unwrap();
        assert_eq!(g.nodes().collect::<Vec<_>>(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.node_index(1.5), Some(3));
        assert_eq!(g.node_index(1.4), None);
        assert_eq!(g.nearest_node(1.4).0, 3);
    }

    #[test]
    fn sup_norm_examples() {
        let g = unit();
        assert_eq!(sup_norm(&JetFunction::zeros(g, 2, 1), 0).unwrap(), 0.0);
        for n in [2, 7, 100] {
            let grid = Grid::new(0.0, 1.0, n).unwrap();
            assert_eq!(sup_norm(&t_jet(grid, 1), 0).unwrap(), 1.0);
        }
        let grid = Grid::new(0.0, std::f64::consts::PI, 1000).unwrap();
        let s = JetFunction::from_fn(grid, 1, 0, |_, _, t| c(t.sin())).unwrap();
        let bound = std::f64::consts::PI.powi(2) / (8.0 * 1000.0f64.powi(2));
        let v = sup_norm(&s, 0).unwrap();
        assert!((v - 1.0).abs() <= 5e-6 && (v - 1.0).abs() <= bound);
        assert!(matches!(sup_norm(&s, 1), Err(Error::OrderOutOfRange { .. })));
    }

    #[test]
    fn sobolev_norm_examples() {
        assert_eq!(sobolev_norm(&t_jet(unit(), 1), 1).unwrap(), 2.0);

        let constant = JetFunction::from_fn(unit(), 1, 3, |_, k, _| if k == 0 { c(-2.5) } else { c(0.0) }).unwrap();
        assert_eq!(sobolev_norm(&constant, 3).unwrap(), 2.5);

        let decay = JetFunction::from_fn(unit(), 1, 2, |_, k, t| {
            c(if k % 2 == 0 { 1.0 } else { -1.0 } * (-t).exp())
        })
        .unwrap();
        assert!((sobolev_norm(&decay, 2).unwrap() - 3.0).abs() <= 1e-9);
        assert!(sobolev_norm(&decay, 3).is_err());
    }

    #[test]
    fn matrix_norm_examples() {
        let g = unit();
        assert_eq!(matrix_sobolev_norm(&MatrixJet::identity(g, 3, 0), 0).unwrap(), 1.0);
        assert_eq!(matrix_sobolev_norm(&MatrixJet::zeros(g, 2, 2), 2).unwrap(), 0.0);
        let eps = 0.3;
        let a = MatrixJet::from_fn(g, 2, 1, |r, col, k, t| {
            if r != col {
                c(0.0)
            } else if k == 0 {
                c(eps * t)
            } else {
                c(eps)
            }
        })
        .unwrap();
        assert!((matrix_sobolev_norm(&a, 1).unwrap() - 2.0 * eps).abs() < 1e-15);
    }

    #[test]
    fn axpy_examples() {
        let g = unit();
        let x = t_jet(g, 1);
        let y = t_jet(g, 1).scaled(c(0.5));
        assert_eq!(jet_axpy(c(0.0), &x, &y).unwrap(), y);
        let zero = jet_axpy(c(1.0), &x, &x.scaled(c(-1.0))).unwrap();
        assert_eq!(sobolev_norm(&zero, 1).unwrap(), 0.0);
        let three = jet_axpy(c(2.0), &x, &x).unwrap();
        assert_eq!(three, x.scaled(c(3.0)));
        assert!(jet_axpy(c(1.0), &x, &t_jet(g, 2)).is_err());
    }

    #[test]
    fn multiply_examples() {
        let g = unit();
        let y = JetFunction::from_fn(g, 2, 2, |j, k, t| c((j + 1) as f64 * t.powi(2 - k.min(2) as i32))).unwrap();
        assert_eq!(jet_multiply(&MatrixJet::identity(g, 2, 2), &y).unwrap(), y);
        let z = jet_multiply(&MatrixJet::zeros(g, 2, 2), &y).unwrap();
        assert_eq!(sobolev_norm(&z, 2).unwrap(), 0.0);

        let t = t_jet(g, 2);
        let prod = jet_multiply(&MatrixJet::from_scalar(&t).unwrap(), &t).unwrap();
        for (i, ti) in g.nodes().enumerate() {
            assert!((prod.get(0, 0, i) - c(ti * ti)).norm() < 1e-15);
            assert!((prod.get(0, 1, i) - c(2.0 * ti)).norm() < 1e-15);
            assert!((prod.get(0, 2, i) - c(2.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn refinement_converges_quadratically() {
        // y = sin(3t) on [0,1]: sup|y| = 1 at t = π/6 (off-node), sup|y'| = 3 at t = 0.
        let norm_at = |n: usize| {
            let g = Grid::new(0.0, 1.0, n).unwrap();
            let y = JetFunction::from_fn(g, 1, 1, |_, k, t| {
                c(if k == 0 { (3.0 * t).sin() } else { 3.0 * (3.0 * t).cos() })
            })
            .unwrap();
            sobolev_norm(&y, 1).unwrap()
        };
        let truth = 4.0;
        let e1 = (norm_at(16) - truth).abs();
        let e2 = (norm_at(32) - truth).abs();
        let e3 = (norm_at(64) - truth).abs();
        assert!(e1 <= 9.0 / (8.0 * 16.0f64.powi(2)));
        assert!(e2 <= 9.0 / (8.0 * 32.0f64.powi(2)));
        assert!(e3 <= 9.0 / (8.0 * 64.0f64.powi(2)));
    }

    fn random_jet(n: usize) -> impl Strategy<Value = JetFunction> {
        prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), (n + 1) * 5).prop_map(move |vals| {
            let g = Grid::new(0.0, 1.0, 4).unwrap();
            let data = vals.into_iter().map(|(re, im)| Complex64::new(re, im)).collect();
            JetFunction::from_data(g, 1, n, data).unwrap()
        })
    }

    proptest! {
        #[test]
        fn norm_axioms(x in random_jet(2), y in random_jet(2), alpha in -4.0f64..4.0) {
            let nx = sobolev_norm(&x, 2).unwrap();
            let ny = sobolev_norm(&y, 2).unwrap();
            let sum = jet_axpy(c(1.0), &x, &y).unwrap();
            prop_assert!(sobolev_norm(&sum, 2).unwrap() <= nx + ny + 1e-12);
            let scaled = x.scaled(c(alpha));
            prop_assert!((sobolev_norm(&scaled, 2).unwrap() - alpha.abs() * nx).abs() <= 1e-12 * (1.0 + nx));
            prop_assert_eq!(nx == 0.0, x.data().iter().all(|z| z.norm() == 0.0));
        }

        #[test]
        fn leibniz_submultiplicative(n in 0usize..4, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::new(0.0, 1.0, 4).unwrap();
            let mut draw = || JetFunction::from_fn(g, 1, n, |_, _, _| Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))).unwrap();
            let u = draw();
            let v = draw();
            let prod = jet_multiply(&MatrixJet::from_scalar(&u).unwrap(), &v).unwrap();
            let bound = 2f64.powi(n as i32) * sobolev_norm(&u, n).unwrap() * sobolev_norm(&v, n).unwrap();
            prop_assert!(sobolev_norm(&prod, n).unwrap() <= bound * (1.0 + 1e-12));
        }
    }
}
