//! Uniform symmetric discretization of the line and the field containers
//! used everywhere else.
//!
//! Nonlocal operators need to know how a field behaves beyond the truncated
//! domain, so every `ScalarField` carries a far-field model `c0 + c1/x`
//! fitted over the outermost samples. Fields on a grid flagged periodic skip
//! the model (their far field is the wrap-around).

use crate::{Error, Result};
use std::fmt::Write as _;

/// Uniform grid of `point_count` nodes on `[-half_width, half_width]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub half_width: f64,
    pub point_count: usize,
    pub spacing: f64,
    /// Spectral backend treats the samples as one period; tail corrections
    /// are disabled on periodic grids.
    pub periodic: bool,
}

/// `make_grid`: uniform symmetric grid with `h = 2L/(N-1)`.
pub fn make_grid(half_width: f64, point_count: usize) -> Result<GridSpec> {
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "grid half-width must be positive and finite, got {half_width}"
        )));
    }
    if point_count < 4 {
        return Err(Error::InvalidArgument(format!(
            "grid needs at least 4 points, got {point_count}"
        )));
    }
    Ok(GridSpec {
        half_width,
        point_count,
        spacing: 2.0 * half_width / (point_count - 1) as f64,
        periodic: false,
    })
}

impl GridSpec {
    pub fn periodic(mut self) -> Self {
        self.periodic = true;
        self
    }

    pub fn point(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.point_count).map(move |i| self.point(i))
    }

    /// Index of the node nearest to `x` (clamped to the grid).
    pub fn nearest_index(&self, x: f64) -> usize {
        let raw = (x + self.half_width) / self.spacing;
        (raw.round().max(0.0) as usize).min(self.point_count - 1)
    }

    /// Number of points per side used for the far-field fit.
    fn tail_band(&self) -> usize {
        ((self.point_count as f64 * 0.05).round() as usize).max(2)
    }
}

/// Far-field model `f(x) ≈ c0 + c1/x + c2/x²` for `|x|` beyond the grid.
///
/// The reported pair of `fit_tail` is `(c0, c1)`; the curvature term `c2`
/// absorbs the next-order decay so that nonlocal tail corrections stay
/// accurate for even profiles like `1/(1+x²)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TailModel {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Real-valued samples on a grid plus the fitted far-field model.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub tail: TailModel,
}

impl ScalarField {
    /// Wrap samples, fitting the tail model (identically zero on periodic grids).
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.point_count {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                grid.point_count,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite sample at x = {}",
                grid.point(i)
            )));
        }
        let tail = if grid.periodic {
            TailModel::default()
        } else {
            fit_tail_values(&grid, &values)?
        };
        Ok(Self { grid, values, tail })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.point_count],
            tail: TailModel::default(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoid rule over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.grid.spacing)
    }

    /// Cubic (Catmull-Rom) interpolation at `x`; the far-field model is used
    /// beyond the grid.
    pub fn eval(&self, x: f64) -> f64 {
        if x < -self.grid.half_width || x > self.grid.half_width {
            return self.tail.c0 + self.tail.c1 / x + self.tail.c2 / (x * x);
        }
        cubic_interp(&self.values, &self.grid, x)
    }

    /// CSV serialization: header `x,value`, one row per node, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 48);
        out.push_str("x,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{:.16e},{:.16e}", self.grid.point(i), v);
        }
        out
    }
}

/// `sample`: pointwise evaluation of a closed-form function on the grid.
pub fn sample<F: Fn(f64) -> f64>(f: F, grid: GridSpec) -> Result<ScalarField> {
    let values: Vec<f64> = grid.points().map(&f).collect();
    ScalarField::new(grid, values)
}

/// `fit_tail`: least-squares `c0 + c1/x` over the outer band of samples.
pub fn fit_tail(field: &ScalarField) -> Result<(f64, f64)> {
    let t = fit_tail_values(&field.grid, &field.values)?;
    Ok((t.c0, t.c1))
}

fn fit_tail_values(grid: &GridSpec, values: &[f64]) -> Result<TailModel> {
    let band = grid.tail_band();
    if 2 * band > grid.point_count {
        return Err(Error::InvalidArgument(format!(
            "tail fit needs at least {} points, grid has {}",
            2 * band,
            grid.point_count
        )));
    }
    // Normal equations for the basis {1, 1/x, 1/x²} over both outer bands.
    // The odd/even split over symmetric bands keeps this well conditioned.
    let mut a = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    let n = grid.point_count;
    for i in (0..band).chain(n - band..n) {
        let x = grid.point(i);
        let phi = [1.0, 1.0 / x, 1.0 / (x * x)];
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] += phi[r] * phi[c];
            }
            rhs[r] += phi[r] * values[i];
        }
    }
    let c = solve3(a, rhs)
        .ok_or_else(|| Error::Numeric("degenerate tail fit".into()))?;
    Ok(TailModel {
        c0: c[0],
        c1: c[1],
        c2: c[2],
    })
}

/// 3x3 linear solve by Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in row + 1..3 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Map into the circle: two components with `u1² + u2² = 1` at every node.
#[derive(Debug, Clone)]
pub struct SphereMapField {
    pub grid: GridSpec,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl SphereMapField {
    /// Rejects data off the circle by more than 1e-12.
    pub fn new(grid: GridSpec, u1: Vec<f64>, u2: Vec<f64>) -> Result<Self> {
        check_len(&grid, u1.len())?;
        check_len(&grid, u2.len())?;
        for i in 0..grid.point_count {
            let norm2 = u1[i] * u1[i] + u2[i] * u2[i];
            if (norm2 - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "|u| deviates from 1 by {:.3e} at x = {}",
                    (norm2 - 1.0).abs(),
                    grid.point(i)
                )));
            }
        }
        Ok(Self { grid, u1, u2 })
    }

    /// Projects the data onto the circle pointwise; zero vectors are an error.
    pub fn new_renormalized(grid: GridSpec, mut u1: Vec<f64>, mut u2: Vec<f64>) -> Result<Self> {
        check_len(&grid, u1.len())?;
        check_len(&grid, u2.len())?;
        for i in 0..grid.point_count {
            let norm = (u1[i] * u1[i] + u2[i] * u2[i]).sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::Numeric(format!(
                    "cannot renormalize vector of length {} at x = {}",
                    norm,
                    grid.point(i)
                )));
            }
            u1[i] /= norm;
            u2[i] /= norm;
        }
        Ok(Self { grid, u1, u2 })
    }

    pub fn constant(grid: GridSpec, u: [f64; 2]) -> Result<Self> {
        Self::new(
            grid,
            vec![u[0]; grid.point_count],
            vec![u[1]; grid.point_count],
        )
    }

    pub fn sample<F: Fn(f64) -> [f64; 2]>(grid: GridSpec, f: F) -> Result<Self> {
        let mut u1 = Vec::with_capacity(grid.point_count);
        let mut u2 = Vec::with_capacity(grid.point_count);
        for x in grid.points() {
            let v = f(x);
            u1.push(v[0]);
            u2.push(v[1]);
        }
        Self::new(grid, u1, u2)
    }

    pub fn at(&self, i: usize) -> [f64; 2] {
        [self.u1[i], self.u2[i]]
    }

    /// Largest deviation of `|u|` from 1 over the grid.
    pub fn constraint_defect(&self) -> f64 {
        (0..self.grid.point_count).fold(0.0f64, |m, i| {
            m.max(((self.u1[i].powi(2) + self.u2[i].powi(2)).sqrt() - 1.0).abs())
        })
    }

    /// CSV serialization: header `x,u1,u2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.u1.len() * 72);
        out.push_str("x,u1,u2\n");
        for i in 0..self.grid.point_count {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e}",
                self.grid.point(i),
                self.u1[i],
                self.u2[i]
            );
        }
        out
    }
}

/// General two-component field (not constrained to the circle).
#[derive(Debug, Clone)]
pub struct VectorField {
    pub grid: GridSpec,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

impl VectorField {
    pub fn new(grid: GridSpec, c1: Vec<f64>, c2: Vec<f64>) -> Result<Self> {
        check_len(&grid, c1.len())?;
        check_len(&grid, c2.len())?;
        Ok(Self { grid, c1, c2 })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            c1: vec![0.0; grid.point_count],
            c2: vec![0.0; grid.point_count],
        }
    }

    pub fn sample<F: Fn(f64) -> [f64; 2]>(grid: GridSpec, f: F) -> Self {
        let (c1, c2) = grid.points().map(|x| { let v = f(x); (v[0], v[1]) }).unzip();
        Self { grid, c1, c2 }
    }

    pub fn at(&self, i: usize) -> [f64; 2] {
        [self.c1[i], self.c2[i]]
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.grid.point_count).fold(0.0f64, |m, i| {
            m.max(self.c1[i].abs()).max(self.c2[i].abs())
        })
    }
}

/// Tangent vector field along a sphere map: `v · u = 0` pointwise.
#[derive(Debug, Clone)]
pub struct TangentField {
    pub grid: GridSpec,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub base: SphereMapField,
}

impl TangentField {
    /// Rejects data with `|v·u| > 1e-10` anywhere.
    pub fn new(base: SphereMapField, v1: Vec<f64>, v2: Vec<f64>) -> Result<Self> {
        let grid = base.grid;
        check_len(&grid, v1.len())?;
        check_len(&grid, v2.len())?;
        for i in 0..grid.point_count {
            let dot = v1[i] * base.u1[i] + v2[i] * base.u2[i];
            if dot.abs() > 1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "tangency defect {:.3e} at x = {}",
                    dot.abs(),
                    grid.point(i)
                )));
            }
        }
        Ok(Self { grid, v1, v2, base })
    }

    pub fn zeros(base: SphereMapField) -> Self {
        let n = base.grid.point_count;
        Self {
            grid: base.grid,
            v1: vec![0.0; n],
            v2: vec![0.0; n],
            base,
        }
    }

    pub fn at(&self, i: usize) -> [f64; 2] {
        [self.v1[i], self.v2[i]]
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.grid.point_count).fold(0.0f64, |m, i| {
            m.max(self.v1[i].abs()).max(self.v2[i].abs())
        })
    }
}

fn check_len(grid: &GridSpec, len: usize) -> Result<()> {
    if len != grid.point_count {
        return Err(Error::InvalidArgument(format!(
            "expected {} samples, got {}",
            grid.point_count, len
        )));
    }
    Ok(())
}

/// Flat midpoint-consistent sum `h·Σ values` (each node carries one cell of
/// width `h`, so the covered window is `[-L-h/2, L+h/2]`).
pub fn cell_sum(values: &[f64], h: f64) -> f64 {
    values.iter().sum::<f64>() * h
}

pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[values.len() - 1]))
}

/// Cubic Lagrange interpolation of uniform samples at `x` (exact on cubics;
/// the 4-point stencil is clamped inside the grid).
pub fn cubic_interp(values: &[f64], grid: &GridSpec, x: f64) -> f64 {
    let n = values.len();
    let pos = (x + grid.half_width) / grid.spacing;
    let cell = (pos.floor() as isize).clamp(0, n as isize - 2) as usize;
    let start = cell.saturating_sub(1).min(n - 4);
    let t = pos - start as f64;
    let mut acc = 0.0;
    for (k, &v) in values[start..start + 4].iter().enumerate() {
        let mut w = 1.0;
        for m in 0..4 {
            if m != k {
                w *= (t - m as f64) / (k as f64 - m as f64);
            }
        }
        acc += w * v;
    }
    acc
}
