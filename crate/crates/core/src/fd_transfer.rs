//! Finite-difference Riesz transforms on `hZ^N`, solved on a periodic embedding.
//!
//! A grid of step `h` over the box `[−R, R]^N` is embedded in a periodic grid
//! with `M = 2^⌈log₂(4R/h)⌉` points per axis, coordinates `x = (j − M/2) h`.
//! For a dyadic list of steps the embedding period `M h` is the same at every
//! `h`, so nested grids approximate one continuum problem.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group_lattice::{Domain, GroupSpec, LatticeFunction};
use crate::spectral_ops::{apply_riesz2, RieszCoefficients};
use crate::C64;

/// Largest embedding the harness will allocate.
pub const MAX_EMBED_POINTS: usize = 1 << 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FDGrid {
    h: f64,
    dim: usize,
    box_radius: f64,
    embed: usize,
}

impl FDGrid {
    pub fn new(h: f64, dim: usize, box_radius: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::param("h", format!("need finite h > 0, got {h}")));
        }
        if dim == 0 || dim > 3 {
            return Err(Error::param("dim", format!("need 1 <= N <= 3, got {dim}")));
        }
        if !(box_radius > 0.0) || !box_radius.is_finite() {
            return Err(Error::param(
                "R",
                format!("need finite R > 0, got {box_radius}"),
            ));
        }
        let cells = (4.0 * box_radius / h - 1e-9).ceil().max(2.0) as usize;
        let embed = cells.next_power_of_two();
        if embed
            .checked_pow(dim as u32)
            .is_none_or(|n| n > MAX_EMBED_POINTS)
        {
            return Err(Error::param(
                "h",
                format!("embedding {embed}^{dim} is too large"),
            ));
        }
        Ok(Self {
            h,
            dim,
            box_radius,
            embed,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn box_radius(&self) -> f64 {
        self.box_radius
    }

    /// Points per axis of the periodic embedding.
    pub fn embed(&self) -> usize {
        self.embed
    }

    pub fn len(&self) -> usize {
        self.embed.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `h^N`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn coordinate(&self, j: usize) -> f64 {
        (j as f64 - (self.embed / 2) as f64) * self.h
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for i in (0..self.dim).rev() {
            idx[i] = flat % self.embed;
            flat /= self.embed;
        }
        idx
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat)
            .into_iter()
            .map(|j| self.coordinate(j))
            .collect()
    }

    /// `|x_i| ≤ R` for every axis, with a `1e-9 h` margin.
    pub fn in_box(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.abs() <= self.box_radius + 1e-9 * self.h)
    }

    pub fn box_mask(&self) -> Vec<bool> {
        (0..self.len())
            .map(|k| self.in_box(&self.point(k)))
            .collect()
    }

    /// Same index grid with unit step, i.e. the relabeling to `Z^N`.
    pub fn unit_relabel(&self) -> Self {
        Self {
            h: 1.0,
            dim: self.dim,
            box_radius: self.box_radius / self.h,
            embed: self.embed,
        }
    }

    fn group(&self) -> GroupSpec {
        GroupSpec::discrete(&vec![self.embed; self.dim]).expect("validated size")
    }

    fn stride(&self, axis: usize) -> usize {
        self.embed.pow((self.dim - 1 - axis) as u32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FDField {
    grid: FDGrid,
    values: Vec<f64>,
}

impl FDField {
    pub fn new(grid: FDGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: FDGrid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            grid,
        }
    }

    pub fn sample(grid: FDGrid, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|k| f(&grid.point(k)))
            .collect();
        Self { grid, values }
    }

    /// Sample of `f` on the box, zero elsewhere on the embedding.
    pub fn sample_in_box(grid: FDGrid, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        Self::sample(grid, |x| if grid.in_box(x) { f(x) } else { 0.0 })
    }

    pub fn grid(&self) -> &FDGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn restrict_to_box(&self) -> Self {
        let mask = self.grid.box_mask();
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&mask)
                .map(|(&v, &m)| if m { v } else { 0.0 })
                .collect(),
        }
    }

    /// `(Σ |v|^p h^N)^{1/p}`.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::param("p", format!("need p >= 1, got {p}")));
        }
        let scale = self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if scale == 0.0 {
            return Ok(0.0);
        }
        let s: f64 = self.values.iter().map(|v| (v.abs() / scale).powf(p)).sum();
        Ok(scale * (s * self.grid.cell_volume()).powf(1.0 / p))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `max |v|` over points outside the box; nonzero input there wraps around
    /// the embedding and contaminates the solution.
    pub fn outside_box_max(&self) -> f64 {
        let mask = self.grid.box_mask();
        self.values
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| !m)
            .fold(0.0, |a, (v, _)| a.max(v.abs()))
    }

    fn to_lattice(&self) -> LatticeFunction {
        LatticeFunction::new(
            self.grid.group(),
            self.values.iter().map(|&v| C64::new(v, 0.0)).collect(),
            Domain::Spatial,
        )
        .expect("matching sizes")
    }
}

/// `(v(x + h e_i) − 2 v(x) + v(x − h e_i)) / h²`, periodic on the embedding.
pub fn second_diff(field: &FDField, axis: usize) -> Result<FDField> {
    let g = field.grid;
    if axis >= g.dim {
        return Err(Error::param(
            "axis",
            format!("{axis} out of range for N = {}", g.dim),
        ));
    }
    let m = g.embed;
    let s = g.stride(axis);
    let inv = 1.0 / (g.h * g.h);
    let v = &field.values;
    let out = (0..v.len())
        .map(|k| {
            let j = (k / s) % m;
            let up = if j + 1 == m { k + s - m * s } else { k + s };
            let down = if j == 0 { k + (m - 1) * s } else { k - s };
            (v[up] - 2.0 * v[k] + v[down]) * inv
        })
        .collect();
    FDField::new(g, out)
}

/// `Δ_h v = Σ_i ∂²_{i,h} v`.
pub fn discrete_laplacian(field: &FDField) -> Result<FDField> {
    let mut acc = vec![0.0; field.values.len()];
    for i in 0..field.grid.dim {
        for (a, b) in acc.iter_mut().zip(second_diff(field, i)?.values) {
            *a += b;
        }
    }
    FDField::new(field.grid, acc)
}

/// Solves `Δ_h u = Σ_i α_i ∂²_{i,h} f` on the embedding (mean-free part) and
/// restricts `u` to the box.
pub fn fd_riesz2_combination(f: &FDField, alpha: &[f64]) -> Result<FDField> {
    let g = f.grid;
    if alpha.len() != g.dim {
        return Err(Error::Shape(format!(
            "{} weights for N = {}",
            alpha.len(),
            g.dim
        )));
    }
    if f.max_abs() == 0.0 {
        return Ok(FDField::zeros(g));
    }
    let coeffs = RieszCoefficients::real(alpha, &[])?;
    let u = apply_riesz2(&coeffs, &f.to_lattice())?;
    let values = u.values().iter().map(|v| v.re).collect();
    Ok(FDField::new(g, values)?.restrict_to_box())
}

/// The discrete `R_i²` with symbol `−sin²(πk_i/M) / Σ_j sin²(πk_j/M)`.
pub fn fd_riesz2(f: &FDField, axis: usize) -> Result<FDField> {
    let n = f.grid.dim;
    if axis >= n {
        return Err(Error::param(
            "axis",
            format!("{axis} out of range for N = {n}"),
        ));
    }
    let mut alpha = vec![0.0; n];
    alpha[axis] = 1.0;
    fd_riesz2_combination(f, &alpha)
}

/// Built-in smooth functions with closed-form second derivatives where needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothFn {
    /// `exp(−|x|²/(2σ²))`.
    Gaussian { sigma: f64 },
    /// `Π_j cos(k_j x_j)`.
    CosProduct { k: Vec<f64> },
    /// `b + a·x`.
    Affine { a: Vec<f64>, b: f64 },
    /// `(N − |x|²/σ²) exp(−|x|²/(2σ²))`, radial with zero integral.
    MexicanHat { sigma: f64 },
    /// `(cos(k x_1) − cos(k x_2)) exp(−|x|²/(2w²))`, for `N = 2`.
    WindowedCos { k: f64, w: f64 },
}

impl SmoothFn {
    pub fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match self {
            Self::Gaussian { sigma } => (-r2 / (2.0 * sigma * sigma)).exp(),
            Self::CosProduct { k } => x.iter().zip(k).map(|(x, k)| (k * x).cos()).product(),
            Self::Affine { a, b } => b + x.iter().zip(a).map(|(x, a)| x * a).sum::<f64>(),
            Self::MexicanHat { sigma } => {
                let s2 = sigma * sigma;
                (x.len() as f64 - r2 / s2) * (-r2 / (2.0 * s2)).exp()
            }
            Self::WindowedCos { k, w } => {
                ((k * x[0]).cos() - (k * x[1]).cos()) * (-r2 / (2.0 * w * w)).exp()
            }
        }
    }

    /// `∂²_i f(x)` when available in closed form.
    pub fn second_derivative(&self, x: &[f64], i: usize) -> Option<f64> {
        match self {
            Self::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                Some((x[i] * x[i] / (s2 * s2) - 1.0 / s2) * self.value(x))
            }
            Self::CosProduct { k } => Some(-k[i] * k[i] * self.value(x)),
            Self::Affine { .. } => Some(0.0),
            _ => None,
        }
    }

    pub fn laplacian(&self, x: &[f64]) -> Option<f64> {
        (0..x.len()).map(|i| self.second_derivative(x, i)).sum()
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        let ok = match self {
            Self::CosProduct { k } => k.len() == dim,
            Self::Affine { a, .. } => a.len() == dim,
            Self::WindowedCos { .. } => dim == 2,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!("function does not match N = {dim}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub h: Vec<f64>,
    /// Max-norm error of `∂²_{i,h}` and `Δ_h` on the box, worst over axes.
    pub errors: Vec<f64>,
    /// Least-squares slope of `log e` against `log h`; `None` when exact.
    pub slope: Option<f64>,
    pub exact: bool,
}

fn check_h_list(h_list: &[f64], min: usize) -> Result<()> {
    if h_list.len() < min {
        return Err(Error::param("h_list", format!("need at least {min} steps")));
    }
    if h_list.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::param("h_list", "steps must be positive"));
    }
    Ok(())
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Fitted order of the 3-point stencil against closed-form derivatives.
pub fn consistency_order(
    f: &SmoothFn,
    dim: usize,
    box_radius: f64,
    h_list: &[f64],
) -> Result<ConsistencyReport> {
    check_h_list(h_list, 3)?;
    f.check_dim(dim)?;
    let origin = vec![0.0; dim];
    if f.second_derivative(&origin, 0).is_none() {
        return Err(Error::Unsupported(
            "no closed-form derivatives for this function".into(),
        ));
    }
    let errors = h_list
        .par_iter()
        .map(|&h| -> Result<f64> {
            let grid = FDGrid::new(h, dim, box_radius)?;
            let field = FDField::sample(grid, |x| f.value(x));
            let mask = grid.box_mask();
            let mut worst: f64 = 0.0;
            let lap = discrete_laplacian(&field)?;
            for i in 0..=dim {
                let d = if i < dim {
                    second_diff(&field, i)?
                } else {
                    lap.clone()
                };
                for (k, v) in d.values.iter().enumerate() {
                    if !mask[k] {
                        continue;
                    }
                    let x = grid.point(k);
                    let exact = if i < dim {
                        f.second_derivative(&x, i)
                    } else {
                        f.laplacian(&x)
                    }
                    .expect("checked above");
                    worst = worst.max((v - exact).abs());
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    let exact = errors.iter().all(|&e| e < 1e-9);
    let slope = (!exact).then(|| loglog_slope(h_list, &errors));
    Ok(ConsistencyReport {
        h: h_list.to_vec(),
        errors,
        slope,
        exact,
    })
}

/// `|r_h − r_1| / r_1` for `r = ‖u‖_p / ‖f‖_p` computed on the grid of step `h`
/// and on its relabeling to unit step.
pub fn scale_invariance_check(f: &FDField, axis: usize, p: f64) -> Result<f64> {
    if f.max_abs() == 0.0 {
        return Err(Error::param("f", "must be nonzero"));
    }
    let u = fd_riesz2(f, axis)?;
    let r_h = u.lp_norm(p)? / f.lp_norm(p)?;
    let unit = FDField::new(f.grid.unit_relabel(), f.values.clone())?;
    let u1 = fd_riesz2(&unit, axis)?;
    let r_1 = u1.lp_norm(p)? / unit.lp_norm(p)?;
    Ok((r_h - r_1).abs() / r_1.abs().max(f64::MIN_POSITIVE))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub h: f64,
    pub ratio: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioStudy {
    pub p: f64,
    pub alpha: Vec<f64>,
    pub rows: Vec<RatioRow>,
    pub h_ref: f64,
    pub reference: f64,
}

impl RatioStudy {
    /// `gap(h) / gap(2h)` for consecutive rows with steps sorted descending.
    pub fn gap_ratios(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[1].gap / w[0].gap).collect()
    }

    pub fn max_ratio(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.ratio)
            .fold(self.reference, f64::max)
    }

    /// Gaps shrink as `h` shrinks, allowing 5% non-monotonicity.
    pub fn monotone_gaps(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].gap <= 1.05 * w[0].gap)
    }
}

/// `‖R_α² f_h‖_{L^p_h(box)} / ‖f_h‖_{L^p_h}` for `f` sampled on the box at each
/// step, against a reference at `min(h) / 4`.
pub fn ratio_convergence_study(
    f: &SmoothFn,
    dim: usize,
    box_radius: f64,
    alpha: &[f64],
    p: f64,
    h_list: &[f64],
) -> Result<RatioStudy> {
    check_h_list(h_list, 1)?;
    f.check_dim(dim)?;
    let mut hs = h_list.to_vec();
    hs.sort_by(|a, b| b.total_cmp(a));
    let h_ref = hs.last().copied().expect("nonempty") / 4.0;
    let ratio_at = |h: f64| -> Result<f64> {
        let grid = FDGrid::new(h, dim, box_radius)?;
        let field = FDField::sample_in_box(grid, |x| f.value(x));
        let u = fd_riesz2_combination(&field, alpha)?;
        Ok(u.lp_norm(p)? / field.lp_norm(p)?)
    };
    let reference = ratio_at(h_ref)?;
    let ratios = hs
        .iter()
        .map(|&h| ratio_at(h))
        .collect::<Result<Vec<f64>>>()?;
    let rows = hs
        .iter()
        .zip(ratios)
        .map(|(&h, ratio)| RatioRow {
            h,
            ratio,
            gap: (ratio - reference).abs(),
        })
        .collect();
    Ok(RatioStudy {
        p,
        alpha: alpha.to_vec(),
        rows,
        h_ref,
        reference,
    })
}

/// A superlevel set `{|u| ≥ level}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevelSpec {
    /// Level as a fraction of `max |u|` on the finest grid.
    FractionOfMax(f64),
    Absolute(f64),
    /// The whole box.
    All,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetTransferRow {
    pub h: f64,
    /// `μ_h(E_h)`, cubes centered at grid points in `E`.
    pub measure: f64,
    /// `∫_{E_h} |u_h|`.
    pub integral: f64,
    /// Measure of the cubes whose corners straddle the level; a first-order
    /// bound on the distance between `μ_h(E_h)` and `μ(E)`.
    pub straddle: f64,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetTransferStudy {
    pub level: f64,
    pub rows: Vec<SetTransferRow>,
    pub reference: SetTransferRow,
}

impl SetTransferStudy {
    pub fn relative_measure_gap(&self, row: &SetTransferRow) -> f64 {
        (row.measure - self.reference.measure).abs() / self.reference.measure.max(f64::MIN_POSITIVE)
    }

    pub fn relative_integral_gap(&self, row: &SetTransferRow) -> f64 {
        (row.integral - self.reference.integral).abs()
            / self.reference.integral.max(f64::MIN_POSITIVE)
    }

    pub fn finest(&self) -> &SetTransferRow {
        self.rows.last().expect("nonempty study")
    }
}

/// Outer cube approximations `E_h` of a superlevel set of `|u|` on the box.
pub fn weak_type_set_transfer(
    u: &SmoothFn,
    dim: usize,
    box_radius: f64,
    level: LevelSpec,
    h_list: &[f64],
) -> Result<SetTransferStudy> {
    check_h_list(h_list, 1)?;
    u.check_dim(dim)?;
    let mut hs = h_list.to_vec();
    hs.sort_by(|a, b| b.total_cmp(a));
    let h_ref = hs.last().copied().expect("nonempty") / 4.0;
    let lvl = match level {
        LevelSpec::FractionOfMax(c) => {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::param("level", "fraction must lie in (0, 1]"));
            }
            let g = FDGrid::new(h_ref, dim, box_radius)?;
            c * FDField::sample_in_box(g, |x| u.value(x).abs()).max_abs()
        }
        LevelSpec::Absolute(l) => l,
        LevelSpec::All => f64::NEG_INFINITY,
        LevelSpec::Empty => f64::INFINITY,
    };
    let row_at = |h: f64| -> Result<SetTransferRow> {
        let grid = FDGrid::new(h, dim, box_radius)?;
        let vol = grid.cell_volume();
        let corners: Vec<Vec<f64>> = (0..1usize << dim)
            .map(|c| {
                (0..dim)
                    .map(|i| if c >> i & 1 == 1 { 0.5 * h } else { -0.5 * h })
                    .collect()
            })
            .collect();
        let (count, integral, straddle) = (0..grid.len())
            .into_par_iter()
            .filter_map(|k| {
                let x = grid.point(k);
                if !grid.in_box(&x) {
                    return None;
                }
                let v = u.value(&x).abs();
                let inside = v >= lvl;
                let (mut lo, mut hi) = (v, v);
                for c in &corners {
                    let y: Vec<f64> = x.iter().zip(c).map(|(a, b)| a + b).collect();
                    let w = u.value(&y).abs();
                    lo = lo.min(w);
                    hi = hi.max(w);
                }
                let crosses = lo < lvl && lvl <= hi;
                Some((inside as u64, if inside { v } else { 0.0 }, crosses as u64))
            })
            .reduce(|| (0, 0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
        Ok(SetTransferRow {
            h,
            measure: count as f64 * vol,
            integral: integral * vol,
            straddle: straddle as f64 * vol,
            empty: count == 0,
        })
    };
    let reference = row_at(h_ref)?;
    let rows = hs.iter().map(|&h| row_at(h)).collect::<Result<Vec<_>>>()?;
    Ok(SetTransferStudy {
        level: lvl,
        rows,
        reference,
    })
}

/// Area of `{exp(−r²/(2σ²)) ≥ c}` in the plane: `2π σ² log(1/c)`.
pub fn gaussian_superlevel_area(sigma: f64, c: f64) -> f64 {
    2.0 * PI * sigma * sigma * (1.0 / c).ln()
}
