//! Fourier-side operators on the product group.
//!
//! Characters are `e_idx(x, s) = exp(2πi(Σ k_i x_i / N_i + Σ q_j s_j))`. On a
//! character the discrete differences act by
//!
//! - `X_i^+ e = (ω_i^{k_i} − 1) e`, `X_i^- e = (1 − ω_i^{−k_i}) e`,
//! - `X_i^+ X_i^- e = −4 sin²(π k_i / N_i) e`,
//!
//! and the torus derivatives by `Y_j e = 2πi q_j e`, so that
//! `−Δ_z e = λ(idx) e` with `λ = Σ 4 sin²(πk_i/N_i) + Σ 4π² q_j²`.
//!
//! Frequency-domain functions store `f̂(idx) = ∫ f conj(e_idx) dμ` in FFT order;
//! torus frequencies are read in the signed range `(−M/2, M/2]`.

use std::f64::consts::PI;
use std::io::Write;

use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::group_lattice::{Domain, GroupSpec, LatticeFunction};
use crate::{linalg, C64};

/// Mean-zero tolerance relative to the function's sup norm.
pub const MEAN_ZERO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyIndex {
    /// Discrete frequencies, `0 ≤ k_i < N_i`.
    pub k: Vec<usize>,
    /// Torus frequencies, `−M_j/2 < q_j ≤ M_j/2`.
    pub q: Vec<i64>,
}

impl FrequencyIndex {
    pub fn zero(group: &GroupSpec) -> Self {
        Self {
            k: vec![0; group.m()],
            q: vec![0; group.n()],
        }
    }

    pub fn new(group: &GroupSpec, k: Vec<usize>, q: Vec<i64>) -> Result<Self> {
        let idx = Self { k, q };
        idx.validate(group)?;
        Ok(idx)
    }

    pub fn validate(&self, group: &GroupSpec) -> Result<()> {
        if self.k.len() != group.m() || self.q.len() != group.n() {
            return Err(Error::Shape("frequency index rank".into()));
        }
        for (&k, &n) in self.k.iter().zip(group.discrete_cycles()) {
            if k >= n {
                return Err(Error::param("idx", format!("k={k} out of range for Z_{n}")));
            }
        }
        for (&q, &m) in self.q.iter().zip(group.torus_resolutions()) {
            let half = (m / 2) as i64;
            if q <= -half || q > half {
                return Err(Error::param("idx", format!("q={q} out of range for M={m}")));
            }
        }
        Ok(())
    }

    /// Index decoded from a storage slot.
    pub fn from_flat(group: &GroupSpec, flat: usize) -> Self {
        let idx = group.unravel(flat);
        let m = group.m();
        Self {
            k: idx[..m].to_vec(),
            q: idx[m..]
                .iter()
                .zip(group.torus_resolutions())
                .map(|(&s, &r)| signed_frequency(s, r))
                .collect(),
        }
    }

    pub fn to_flat(&self, group: &GroupSpec) -> usize {
        let mut idx = self.k.clone();
        idx.extend(
            self.q
                .iter()
                .zip(group.torus_resolutions())
                .map(|(&q, &m)| q.rem_euclid(m as i64) as usize),
        );
        group.ravel(&idx)
    }

    pub fn is_zero(&self) -> bool {
        self.k.iter().all(|&k| k == 0) && self.q.iter().all(|&q| q == 0)
    }
}

pub(crate) fn signed_frequency(slot: usize, m: usize) -> i64 {
    if slot <= m / 2 {
        slot as i64
    } else {
        slot as i64 - m as i64
    }
}

/// Per-axis symbol tables for one group.
#[derive(Debug, Clone)]
pub struct Symbols {
    /// `4 sin²(πk/N_i)` per discrete axis.
    pub discrete_eig: Vec<Vec<f64>>,
    /// `ω^k − 1` per discrete axis.
    pub forward: Vec<Vec<C64>>,
    /// `1 − ω^{−k}` per discrete axis.
    pub backward: Vec<Vec<C64>>,
    /// Signed torus frequency `q` per storage slot.
    pub torus_q: Vec<Vec<i64>>,
}

impl Symbols {
    pub fn new(group: &GroupSpec) -> Self {
        let mut discrete_eig = Vec::new();
        let mut forward = Vec::new();
        let mut backward = Vec::new();
        for &n in group.discrete_cycles() {
            let nf = n as f64;
            discrete_eig.push(
                (0..n)
                    .map(|k| 4.0 * (PI * k as f64 / nf).sin().powi(2))
                    .collect(),
            );
            forward.push(
                (0..n)
                    .map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / nf) - 1.0)
                    .collect(),
            );
            backward.push(
                (0..n)
                    .map(|k| 1.0 - C64::from_polar(1.0, -2.0 * PI * k as f64 / nf))
                    .collect(),
            );
        }
        let torus_q = group
            .torus_resolutions()
            .iter()
            .map(|&m| (0..m).map(|s| signed_frequency(s, m)).collect())
            .collect();
        Self {
            discrete_eig,
            forward,
            backward,
            torus_q,
        }
    }

    /// `λ` at a storage index tuple.
    pub fn eigenvalue(&self, idx: &[usize]) -> f64 {
        let m = self.discrete_eig.len();
        let d: f64 = (0..m).map(|i| self.discrete_eig[i][idx[i]]).sum();
        let t: f64 = self
            .torus_q
            .iter()
            .zip(&idx[m..])
            .map(|(qs, &s)| 4.0 * PI * PI * (qs[s] as f64).powi(2))
            .sum();
        d + t
    }
}

/// `λ(idx)`, the eigenvalue of `−Δ_z` on the character `e_idx`.
pub fn laplacian_eigenvalue(group: &GroupSpec, idx: &FrequencyIndex) -> Result<f64> {
    idx.validate(group)?;
    let d: f64 = idx
        .k
        .iter()
        .zip(group.discrete_cycles())
        .map(|(&k, &n)| 4.0 * (PI * k as f64 / n as f64).sin().powi(2))
        .sum();
    let t: f64 = idx.q.iter().map(|&q| 4.0 * PI * PI * (q * q) as f64).sum();
    Ok(d + t)
}

/// The character `e_idx`, sampled on the grid.
pub fn character(group: &GroupSpec, idx: &FrequencyIndex) -> Result<LatticeFunction> {
    idx.validate(group)?;
    let m = group.m();
    Ok(LatticeFunction::from_fn(group, |x| {
        let mut phase = 0.0;
        for i in 0..m {
            phase += (idx.k[i] * x[i]) as f64 / group.discrete_cycles()[i] as f64;
        }
        for j in 0..group.n() {
            phase += idx.q[j] as f64 * group.torus_coordinate(j, x[m + j]);
        }
        C64::from_polar(1.0, 2.0 * PI * phase)
    }))
}

pub fn transform(f: &LatticeFunction) -> Result<LatticeFunction> {
    f.require_spatial()?;
    let mut v = f.values().to_vec();
    fft_nd(&mut v, &f.group().dims(), FftDirection::Forward);
    let w = f.group().point_weight();
    v.iter_mut().for_each(|x| *x *= w);
    Ok(f.with_values(v, Domain::Frequency))
}

pub fn inverse_transform(f: &LatticeFunction) -> Result<LatticeFunction> {
    if f.domain() != Domain::Frequency {
        return Err(Error::Domain {
            expected: "frequency",
            found: f.domain().name(),
        });
    }
    let mut v = f.values().to_vec();
    fft_nd(&mut v, &f.group().dims(), FftDirection::Inverse);
    let w = f.group().frequency_weight();
    v.iter_mut().for_each(|x| *x *= w);
    Ok(f.with_values(v, Domain::Spatial))
}

/// Index `α = (α^x, α^y)` of the combination `Σ α^x_i R_i² + Σ α^y_{jk} R_j R_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RieszCoefficients {
    pub alpha_x: Vec<C64>,
    pub alpha_y: Vec<Vec<C64>>,
}

impl RieszCoefficients {
    pub fn new(alpha_x: Vec<C64>, alpha_y: Vec<Vec<C64>>) -> Result<Self> {
        let n = alpha_y.len();
        if alpha_y.iter().any(|row| row.len() != n) {
            return Err(Error::Shape("alpha_y must be square".into()));
        }
        if alpha_x
            .iter()
            .chain(alpha_y.iter().flatten())
            .any(|z| !z.is_finite())
        {
            return Err(Error::param("alpha", "non-finite coefficient"));
        }
        Ok(Self { alpha_x, alpha_y })
    }

    pub fn real(alpha_x: &[f64], alpha_y: &[Vec<f64>]) -> Result<Self> {
        Self::new(
            alpha_x.iter().map(|&a| C64::new(a, 0.0)).collect(),
            alpha_y
                .iter()
                .map(|r| r.iter().map(|&a| C64::new(a, 0.0)).collect())
                .collect(),
        )
    }

    pub fn zero(m: usize, n: usize) -> Self {
        Self {
            alpha_x: vec![C64::new(0.0, 0.0); m],
            alpha_y: vec![vec![C64::new(0.0, 0.0); n]; n],
        }
    }

    /// All `α^x_i = 1`, `α^y = I`; the operator is `−(I − mean)`.
    pub fn identity(m: usize, n: usize) -> Self {
        let mut c = Self::zero(m, n);
        c.alpha_x.iter_mut().for_each(|a| *a = C64::new(1.0, 0.0));
        for j in 0..n {
            c.alpha_y[j][j] = C64::new(1.0, 0.0);
        }
        c
    }

    /// A single square `R_i²` along axis `axis` (discrete axes first).
    pub fn single_axis(m: usize, n: usize, axis: usize) -> Self {
        let mut c = Self::zero(m, n);
        if axis < m {
            c.alpha_x[axis] = C64::new(1.0, 0.0);
        } else {
            c.alpha_y[axis - m][axis - m] = C64::new(1.0, 0.0);
        }
        c
    }

    pub fn m(&self) -> usize {
        self.alpha_x.len()
    }

    pub fn n(&self) -> usize {
        self.alpha_y.len()
    }

    pub fn check_group(&self, group: &GroupSpec) -> Result<()> {
        if self.m() != group.m() || self.n() != group.n() {
            return Err(Error::Shape(format!(
                "coefficients for (m={}, n={}) applied on {}",
                self.m(),
                self.n(),
                group
            )));
        }
        Ok(())
    }

    /// `‖A_α‖₂ = max(max_i |α^x_i|, ‖α^y‖₂)`.
    pub fn matrix_norm(&self) -> f64 {
        let x = self.alpha_x.iter().map(|a| a.norm()).fold(0.0, f64::max);
        x.max(linalg::spectral_norm(&self.alpha_y))
    }

    /// True iff every `α^x_i` is real and `α^y` is real symmetric.
    pub fn real_symmetric(&self) -> bool {
        let n = self.n();
        self.alpha_x.iter().all(|a| a.im == 0.0)
            && (0..n).all(|j| {
                (0..n).all(|k| {
                    self.alpha_y[j][k].im == 0.0 && self.alpha_y[j][k] == self.alpha_y[k][j]
                })
            })
    }

    /// `(a, b)` with `a I ≤ A_α ≤ b I`, when `A_α` is real symmetric.
    pub fn quadratic_form_bounds(&self) -> Option<(f64, f64)> {
        if !self.real_symmetric() {
            return None;
        }
        let ev = linalg::hermitian_eigenvalues(&self.alpha_y);
        let all = self.alpha_x.iter().map(|a| a.re).chain(ev);
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        lo.is_finite().then_some((lo, hi))
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            alpha_x: self.alpha_x.iter().map(|a| a * c).collect(),
            alpha_y: self
                .alpha_y
                .iter()
                .map(|r| r.iter().map(|a| a * c).collect())
                .collect(),
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            alpha_x: self.alpha_x.iter().map(|a| a.conj()).collect(),
            alpha_y: self
                .alpha_y
                .iter()
                .map(|r| r.iter().map(|a| a.conj()).collect())
                .collect(),
        }
    }

    /// Numerator of the multiplier at a storage index tuple, i.e. the symbol of
    /// `Σ α^x_i X_i^+X_i^- + Σ α^y_{jk} Y_j Y_k`.
    fn numerator(&self, sym: &Symbols, idx: &[usize]) -> C64 {
        let m = self.m();
        let mut num = C64::new(0.0, 0.0);
        for i in 0..m {
            num -= self.alpha_x[i] * sym.discrete_eig[i][idx[i]];
        }
        let q: Vec<f64> = sym
            .torus_q
            .iter()
            .zip(&idx[m..])
            .map(|(qs, &s)| qs[s] as f64)
            .collect();
        for (j, row) in self.alpha_y.iter().enumerate() {
            for (k, a) in row.iter().enumerate() {
                num -= a * (4.0 * PI * PI * q[j] * q[k]);
            }
        }
        num
    }
}

/// `m_α(idx)`; zero at `idx = 0`.
pub fn riesz2_multiplier(
    group: &GroupSpec,
    coeffs: &RieszCoefficients,
    idx: &FrequencyIndex,
) -> Result<C64> {
    coeffs.check_group(group)?;
    idx.validate(group)?;
    if idx.is_zero() {
        return Ok(C64::new(0.0, 0.0));
    }
    let sym = Symbols::new(group);
    let flat = group.unravel(idx.to_flat(group));
    Ok(coeffs.numerator(&sym, &flat) / sym.eigenvalue(&flat))
}

/// The multiplier on every storage slot.
pub fn multiplier_table(group: &GroupSpec, coeffs: &RieszCoefficients) -> Result<Vec<C64>> {
    coeffs.check_group(group)?;
    let sym = Symbols::new(group);
    Ok((0..group.len())
        .map(|flat| {
            let idx = group.unravel(flat);
            let lam = sym.eigenvalue(&idx);
            if flat == 0 || lam == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                coeffs.numerator(&sym, &idx) / lam
            }
        })
        .collect())
}

/// CSV rows `(k..., q..., re, im)` of the multiplier table.
pub fn write_multiplier_csv<W: Write>(
    group: &GroupSpec,
    coeffs: &RieszCoefficients,
    mut w: W,
) -> Result<()> {
    let table = multiplier_table(group, coeffs)?;
    let mut cols: Vec<String> = (1..=group.m()).map(|i| format!("k{i}")).collect();
    cols.extend((1..=group.n()).map(|j| format!("q{j}")));
    cols.extend(["re".to_string(), "im".to_string()]);
    writeln!(w, "{}", cols.join(","))?;
    for (flat, v) in table.iter().enumerate() {
        let idx = FrequencyIndex::from_flat(group, flat);
        let mut fields: Vec<String> = idx.k.iter().map(|k| k.to_string()).collect();
        fields.extend(idx.q.iter().map(|q| q.to_string()));
        writeln!(w, "{},{:e},{:e}", fields.join(","), v.re, v.im)?;
    }
    Ok(())
}

/// Applies a precomputed multiplier table to a spatial function.
pub fn apply_multiplier(table: &[C64], f: &LatticeFunction) -> Result<LatticeFunction> {
    if table.len() != f.values().len() {
        return Err(Error::Shape("multiplier table length".into()));
    }
    let mut hat = transform(f)?;
    hat.values_mut()
        .iter_mut()
        .zip(table)
        .for_each(|(v, m)| *v *= m);
    inverse_transform(&hat)
}

/// `R_α² f`.
pub fn apply_riesz2(coeffs: &RieszCoefficients, f: &LatticeFunction) -> Result<LatticeFunction> {
    let table = multiplier_table(f.group(), coeffs)?;
    apply_multiplier(&table, f)
}

/// A reusable `R_α²` with its multiplier table and the adjoint's.
#[derive(Debug, Clone)]
pub struct RieszOperator {
    group: GroupSpec,
    coeffs: RieszCoefficients,
    table: Vec<C64>,
}

impl RieszOperator {
    pub fn new(group: &GroupSpec, coeffs: &RieszCoefficients) -> Result<Self> {
        Ok(Self {
            table: multiplier_table(group, coeffs)?,
            group: group.clone(),
            coeffs: coeffs.clone(),
        })
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn coeffs(&self) -> &RieszCoefficients {
        &self.coeffs
    }

    pub fn table(&self) -> &[C64] {
        &self.table
    }

    pub fn apply(&self, f: &LatticeFunction) -> Result<LatticeFunction> {
        self.check(f)?;
        apply_multiplier(&self.table, f)
    }

    /// The `L²(μ)` adjoint, whose symbol is the conjugate.
    pub fn apply_adjoint(&self, f: &LatticeFunction) -> Result<LatticeFunction> {
        self.check(f)?;
        let conj: Vec<C64> = self.table.iter().map(|m| m.conj()).collect();
        apply_multiplier(&conj, f)
    }

    /// `sup_idx |m_α(idx)|`, the `L² → L²` norm.
    pub fn l2_norm(&self) -> f64 {
        self.table.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }

    fn check(&self, f: &LatticeFunction) -> Result<()> {
        if f.group() != &self.group {
            return Err(Error::Shape(format!(
                "operator on {} applied to function on {}",
                self.group,
                f.group()
            )));
        }
        Ok(())
    }
}

/// `P_t f = e^{tΔ_z} f`.
pub fn heat_semigroup(f: &LatticeFunction, t: f64) -> Result<LatticeFunction> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::param("t", format!("need finite t >= 0, got {t}")));
    }
    let group = f.group();
    let sym = Symbols::new(group);
    let mut hat = transform(f)?;
    for (flat, v) in hat.values_mut().iter_mut().enumerate() {
        *v *= (-sym.eigenvalue(&group.unravel(flat)) * t).exp();
    }
    inverse_transform(&hat)
}

pub(crate) fn require_mean_zero(name: &'static str, f: &LatticeFunction) -> Result<()> {
    let scale = f.sup_norm().max(1.0);
    if f.mean().norm() > MEAN_ZERO_TOL * scale {
        return Err(Error::param(
            name,
            format!("must have vanishing mean (mean = {:e})", f.mean().norm()),
        ));
    }
    Ok(())
}

/// Compares `(R_α² f, g)` computed in physical space with the heat-flow
/// bilinear form `−2 ∫₀^∞ (A_α ∇̂ P_t f, ∇̂ P_t g) dt`, the latter assembled
/// mode by mode from the difference symbols with the pairing
/// `½ Σ_{i,τ} α^x_i (X_i^τ ·)(X_i^τ ·) + Σ_{jk} α^y_{jk} (Y_j ·)(Y_k ·)` and
/// `∫₀^∞ e^{−2λt} dt = 1/(2λ)`. Returns `|LHS − RHS| / (1 + |LHS|)`.
pub fn weak_form_residual(
    coeffs: &RieszCoefficients,
    f: &LatticeFunction,
    g: &LatticeFunction,
) -> Result<f64> {
    let group = f.group();
    coeffs.check_group(group)?;
    if g.group() != group {
        return Err(Error::Shape("f and g on different groups".into()));
    }
    require_mean_zero("f", f)?;
    require_mean_zero("g", g)?;

    let lhs = apply_riesz2(coeffs, f)?.inner_product(g)?;

    let sym = Symbols::new(group);
    let fh = transform(f)?;
    let gh = transform(g)?;
    let m = group.m();
    let mut rhs = C64::new(0.0, 0.0);
    for flat in 1..group.len() {
        let idx = group.unravel(flat);
        let lam = sym.eigenvalue(&idx);
        let a = fh.values()[flat];
        let b = gh.values()[flat].conj();
        let mut pairing = C64::new(0.0, 0.0);
        for i in 0..m {
            let sp = sym.forward[i][idx[i]];
            let sm = sym.backward[i][idx[i]];
            let diff = sp * sp.conj() + sm * sm.conj();
            pairing += coeffs.alpha_x[i] * 0.5 * diff;
        }
        for (j, row) in coeffs.alpha_y.iter().enumerate() {
            let yj = C64::new(0.0, 2.0 * PI * sym.torus_q[j][idx[m + j]] as f64);
            for (k, alpha) in row.iter().enumerate() {
                let yk = C64::new(0.0, 2.0 * PI * sym.torus_q[k][idx[m + k]] as f64);
                pairing += alpha * yj * yk.conj();
            }
        }
        let time_integral = 1.0 / (2.0 * lam);
        rhs += -2.0 * time_integral * pairing * a * b;
    }
    rhs *= group.frequency_weight();
    Ok((lhs - rhs).norm() / (1.0 + lhs.norm()))
}

/// Forward difference `X_i^+ f (x) = f(x + g_i) − f(x)` by grid shift.
pub fn forward_difference(f: &LatticeFunction, axis: usize) -> Result<LatticeFunction> {
    shift_difference(f, axis, true)
}

/// Backward difference `X_i^- f (x) = f(x) − f(x − g_i)` by grid shift.
pub fn backward_difference(f: &LatticeFunction, axis: usize) -> Result<LatticeFunction> {
    shift_difference(f, axis, false)
}

fn shift_difference(f: &LatticeFunction, axis: usize, forward: bool) -> Result<LatticeFunction> {
    f.require_spatial()?;
    let group = f.group();
    if axis >= group.m() {
        return Err(Error::param(
            "axis",
            format!("{axis} is not a discrete axis"),
        ));
    }
    let n = group.discrete_cycles()[axis];
    let vals = f.values();
    let out = (0..vals.len())
        .map(|flat| {
            let mut idx = group.unravel(flat);
            idx[axis] = if forward {
                (idx[axis] + 1) % n
            } else {
                (idx[axis] + n - 1) % n
            };
            let other = vals[group.ravel(&idx)];
            if forward {
                other - vals[flat]
            } else {
                vals[flat] - other
            }
        })
        .collect();
    LatticeFunction::new(group.clone(), out, Domain::Spatial)
}

/// Torus derivative `Y_j f`, applied spectrally.
pub fn torus_derivative(f: &LatticeFunction, j: usize) -> Result<LatticeFunction> {
    let group = f.group();
    if j >= group.n() {
        return Err(Error::param("axis", format!("{j} is not a torus axis")));
    }
    let sym = Symbols::new(group);
    let m = group.m();
    let mut hat = transform(f)?;
    for (flat, v) in hat.values_mut().iter_mut().enumerate() {
        let idx = group.unravel(flat);
        *v *= C64::new(0.0, 2.0 * PI * sym.torus_q[j][idx[m + j]] as f64);
    }
    inverse_transform(&hat)
}

/// `max_D ‖D P_t e_idx − P_t D e_idx‖_∞` over `D ∈ {X_i^±, Y_j}`. Discrete
/// differences act by grid shifts, `P_t` and `Y_j` spectrally.
pub fn commutation_check(group: &GroupSpec, idx: &FrequencyIndex, t: f64) -> Result<f64> {
    let e = character(group, idx)?;
    let heat_first = heat_semigroup(&e, t)?;
    let mut worst: f64 = 0.0;
    for i in 0..group.m() {
        for forward in [true, false] {
            let d = |h: &LatticeFunction| shift_difference(h, i, forward);
            let a = d(&heat_first)?;
            let b = heat_semigroup(&d(&e)?, t)?;
            worst = worst.max(a.max_abs_diff(&b));
        }
    }
    for j in 0..group.n() {
        let a = torus_derivative(&heat_first, j)?;
        let b = heat_semigroup(&torus_derivative(&e, j)?, t)?;
        worst = worst.max(a.max_abs_diff(&b));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn z4() -> GroupSpec {
        GroupSpec::discrete(&[4]).unwrap()
    }

    #[test]
    fn laplacian_eigenvalue_examples() {
        let g = z4();
        let idx = FrequencyIndex::new(&g, vec![1], vec![]).unwrap();
        assert!((laplacian_eigenvalue(&g, &idx).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(
            laplacian_eigenvalue(&g, &FrequencyIndex::zero(&g)).unwrap(),
            0.0
        );
        let t = GroupSpec::torus(&[8]).unwrap();
        let idx = FrequencyIndex::new(&t, vec![], vec![1]).unwrap();
        let lam = laplacian_eigenvalue(&t, &idx).unwrap();
        assert!((lam - 4.0 * PI * PI).abs() < 1e-12);
        assert!((lam - 39.478).abs() < 1e-3);
        assert!(FrequencyIndex::new(&t, vec![], vec![-4]).is_err());
        assert!(FrequencyIndex::new(&t, vec![], vec![4]).is_ok());
    }

    #[test]
    fn eigenvalue_matches_difference_operators() {
        // −(X⁻X⁺ e) = λ e, computed with grid shifts.
        let g = GroupSpec::discrete(&[4, 6]).unwrap();
        let idx = FrequencyIndex::new(&g, vec![1, 2], vec![]).unwrap();
        let e = character(&g, &idx).unwrap();
        let mut lap = LatticeFunction::zeros(&g);
        for i in 0..2 {
            let second = backward_difference(&forward_difference(&e, i).unwrap(), i).unwrap();
            lap = lap.add(&second).unwrap();
        }
        let lam = laplacian_eigenvalue(&g, &idx).unwrap();
        assert!(lap.add(&e.scale(lam)).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn transform_examples() {
        let g = z4();
        let delta = LatticeFunction::point_indicator(&g, &[0]);
        let hat = transform(&delta).unwrap();
        assert!(hat
            .values()
            .iter()
            .all(|v| (v - hat.values()[0]).norm() < 1e-15));

        let e1 = character(&g, &FrequencyIndex::new(&g, vec![1], vec![]).unwrap()).unwrap();
        let hat = transform(&e1).unwrap();
        let nonzero = hat.values().iter().filter(|v| v.norm() > 1e-12).count();
        assert_eq!(nonzero, 1);
        assert!((hat.values()[1] - c(4.0)).norm() < 1e-12);

        let mixed = GroupSpec::new(vec![3], vec![8]).unwrap();
        let f = LatticeFunction::random(&mixed, 5);
        let hat = transform(&f).unwrap();
        let a = f.lp_norm(2.0).unwrap();
        let b = hat.lp_norm(2.0).unwrap();
        assert!((a - b).abs() < 1e-10);
        let back = inverse_transform(&hat).unwrap();
        assert!(back.max_abs_diff(&f) <= 1e-12 * f.sup_norm());

        assert!(inverse_transform(&f).is_err());
        assert!(transform(&hat).is_err());
    }

    #[test]
    fn transform_matches_direct_coefficient_sum() {
        let g = GroupSpec::new(vec![3], vec![4]).unwrap();
        let f = LatticeFunction::random(&g, 9);
        let hat = transform(&f).unwrap();
        for flat in 0..g.len() {
            let idx = FrequencyIndex::from_flat(&g, flat);
            let e = character(&g, &idx).unwrap();
            let direct = f.inner_product(&e).unwrap();
            assert!((direct - hat.values()[flat]).norm() < 1e-12);
        }
    }

    #[test]
    fn multiplier_examples() {
        let g = GroupSpec::discrete(&[4, 4]).unwrap();
        let id = RieszCoefficients::identity(2, 0);
        for flat in 1..g.len() {
            let idx = FrequencyIndex::from_flat(&g, flat);
            assert!((riesz2_multiplier(&g, &id, &idx).unwrap() + 1.0).norm() < 1e-14);
        }
        let r1 = RieszCoefficients::real(&[1.0, 0.0], &[]).unwrap();
        let at = |k: Vec<usize>| {
            riesz2_multiplier(&g, &r1, &FrequencyIndex::new(&g, k, vec![]).unwrap()).unwrap()
        };
        assert!((at(vec![1, 0]) + 1.0).norm() < 1e-15);
        assert!(at(vec![0, 1]).norm() < 1e-15);
        assert_eq!(at(vec![0, 0]), c(0.0));

        let t2 = GroupSpec::torus(&[8, 8]).unwrap();
        let diff = RieszCoefficients::real(&[], &[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        let at = |q: Vec<i64>| {
            riesz2_multiplier(&t2, &diff, &FrequencyIndex::new(&t2, vec![], q).unwrap()).unwrap()
        };
        assert!(at(vec![1, 1]).norm() < 1e-15);
        assert!((at(vec![1, 0]) + 1.0).norm() < 1e-15);
        assert!((at(vec![0, 3]) - 1.0).norm() < 1e-15);
    }

    #[test]
    fn apply_examples() {
        let g = GroupSpec::discrete(&[4, 4]).unwrap();
        let r1 = RieszCoefficients::real(&[1.0, 0.0], &[]).unwrap();
        let k = LatticeFunction::constant(&g, c(3.0));
        assert!(apply_riesz2(&r1, &k).unwrap().sup_norm() < 1e-14);

        let e = character(&g, &FrequencyIndex::new(&g, vec![1, 0], vec![]).unwrap()).unwrap();
        let out = apply_riesz2(&r1, &e).unwrap();
        assert!(out.add(&e).unwrap().sup_norm() < 1e-14);

        let mixed = GroupSpec::new(vec![5], vec![8]).unwrap();
        let a = RieszCoefficients::real(&[0.7], &[vec![-1.3]]).unwrap();
        let f = LatticeFunction::random(&mixed, 2);
        let u = apply_riesz2(&a, &f).unwrap();
        assert!(u.mean().norm() < 1e-14);
        assert!(
            u.lp_norm(2.0).unwrap() <= a.matrix_norm() * f.lp_norm(2.0).unwrap() * (1.0 + 1e-12)
        );

        let fr = LatticeFunction::random_real(&mixed, 2);
        let ur = apply_riesz2(&a, &fr).unwrap();
        assert!(ur.is_real(1e-12));
    }

    #[test]
    fn heat_examples() {
        let g = z4();
        let f = LatticeFunction::random(&g, 1);
        assert!(heat_semigroup(&f, 0.0).unwrap().max_abs_diff(&f) < 1e-14);
        assert!(heat_semigroup(&f, -1.0).is_err());

        let e = character(&g, &FrequencyIndex::new(&g, vec![1], vec![]).unwrap()).unwrap();
        let pt = heat_semigroup(&e, 0.5).unwrap();
        assert!(pt.sub(&e.scale((-1.0f64).exp())).unwrap().sup_norm() < 1e-14);

        let mixed = GroupSpec::new(vec![3], vec![8]).unwrap();
        let f = LatticeFunction::random(&mixed, 4);
        for t in [0.01, 0.3, 2.0] {
            let pt = heat_semigroup(&f, t).unwrap();
            assert!((pt.mean() - f.mean()).norm() < 1e-14);
        }
        let two = heat_semigroup(&heat_semigroup(&f, 0.2).unwrap(), 0.3).unwrap();
        let one = heat_semigroup(&f, 0.5).unwrap();
        assert!(two.max_abs_diff(&one) < 1e-12);
    }

    #[test]
    fn weak_form_examples() {
        let g = GroupSpec::discrete(&[3, 5]).unwrap();
        let e = character(&g, &FrequencyIndex::new(&g, vec![1, 2], vec![]).unwrap()).unwrap();
        let a = RieszCoefficients::real(&[0.4, -2.0], &[]).unwrap();
        assert!(weak_form_residual(&a, &e, &e).unwrap() < 1e-12);

        let f = LatticeFunction::random_real(&g, 1).mean_zero_project();
        let h = LatticeFunction::random_real(&g, 2).mean_zero_project();
        assert!(weak_form_residual(&a, &f, &h).unwrap() < 1e-10);
        assert!(weak_form_residual(&RieszCoefficients::zero(2, 0), &f, &h).unwrap() == 0.0);

        let not_mean_zero = LatticeFunction::random_real(&g, 3);
        assert!(matches!(
            weak_form_residual(&a, &not_mean_zero, &h),
            Err(Error::InvalidParameter { name: "f", .. })
        ));
    }

    #[test]
    fn commutation_examples() {
        let g = z4();
        assert!(commutation_check(&g, &FrequencyIndex::zero(&g), 1.0).unwrap() < 1e-15);
        let idx = FrequencyIndex::new(&g, vec![1], vec![]).unwrap();
        assert!(commutation_check(&g, &idx, 1.0).unwrap() < 1e-12);
        let t = GroupSpec::torus(&[8]).unwrap();
        let idx = FrequencyIndex::new(&t, vec![], vec![2]).unwrap();
        assert!(commutation_check(&t, &idx, 0.1).unwrap() < 1e-12);
    }

    #[test]
    fn coefficient_norms_and_flags() {
        let a = RieszCoefficients::real(&[0.5, -3.0], &[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!((a.matrix_norm() - 3.0).abs() < 1e-13);
        assert!(a.real_symmetric());
        let (lo, hi) = a.quadratic_form_bounds().unwrap();
        assert!((lo + 3.0).abs() < 1e-13 && (hi - 3.0).abs() < 1e-13);
        let b = RieszCoefficients::new(vec![C64::new(0.0, 1.0)], vec![]).unwrap();
        assert!(!b.real_symmetric());
        assert!(b.quadratic_form_bounds().is_none());
        assert!(RieszCoefficients::real(&[], &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn multiplier_csv_has_one_row_per_mode() {
        let g = GroupSpec::new(vec![2], vec![4]).unwrap();
        let mut out = Vec::new();
        write_multiplier_csv(&g, &RieszCoefficients::identity(1, 1), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next(), Some("k1,q1,re,im"));
        assert_eq!(text.lines().count(), 9);
    }
}
