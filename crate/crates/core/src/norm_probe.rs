//! Lower bounds for operator norms of `R_α²` and direct checks of the
//! endpoint estimates on concrete functions.

use rayon::prelude::*;
use serde::Serialize;

use crate::constants::{self, young_phi, young_psi};
use crate::error::{Error, Result};
use crate::group_lattice::LatticeFunction;
use crate::spectral_ops::{apply_riesz2, RieszCoefficients, RieszOperator};
use crate::C64;

/// Power iterations stop once consecutive ratios differ by less than this.
pub const POWER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct ProbeResult {
    /// Running lower bounds; nondecreasing by construction.
    pub bound_sequence: Vec<f64>,
    #[serde(skip)]
    pub witness: LatticeFunction,
    pub theorem_cap: f64,
    pub satisfied: bool,
    /// Iterations actually performed (power method) or levels swept.
    pub steps: usize,
    /// True when the stopping tolerance was met before the cap.
    pub converged: bool,
}

impl ProbeResult {
    pub fn bound(&self) -> f64 {
        self.bound_sequence.last().copied().unwrap_or(0.0)
    }

    fn finish(
        bounds: Vec<f64>,
        witness: LatticeFunction,
        cap: f64,
        steps: usize,
        converged: bool,
    ) -> Self {
        let last = bounds.last().copied().unwrap_or(0.0);
        Self {
            satisfied: last <= cap * (1.0 + 1e-9),
            bound_sequence: bounds,
            witness,
            theorem_cap: cap,
            steps,
            converged,
        }
    }
}

/// `ψ_r(y) = |y|^{r−2} y`, the duality map of `L^r` up to normalization.
fn duality_map(f: &LatticeFunction, r: f64) -> LatticeFunction {
    f.map(|y| {
        let a = y.norm();
        if a == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            y * a.powf(r - 2.0)
        }
    })
}

fn require_nonzero(name: &'static str, f: &LatticeFunction) -> Result<()> {
    if f.sup_norm() == 0.0 {
        return Err(Error::param(name, "must be nonzero"));
    }
    Ok(())
}

/// Nonlinear power method for `‖R_α²‖_{p→p}`: with `y = T x`, the update is
/// `x ← ψ_{p'}(T* ψ_p(y))` followed by normalization in `L^p`. Each recorded
/// `r_k = ‖T x_k‖_p / ‖x_k‖_p` is a lower bound for the norm.
pub fn power_iterate_lp(
    coeffs: &RieszCoefficients,
    p: f64,
    init: &LatticeFunction,
    iters: usize,
) -> Result<ProbeResult> {
    let p_conj = constants::conjugate(p)?;
    let group = init.group();
    let op = RieszOperator::new(group, coeffs)?;
    require_nonzero("init", init)?;
    let mut x = init.mean_zero_project();
    if x.sup_norm() <= 1e-14 * init.sup_norm() {
        return Err(Error::param("init", "vanishes after removing its mean"));
    }
    let cap = constants::sharp_lp_constant(p)? * coeffs.matrix_norm();

    let mut bounds: Vec<f64> = Vec::with_capacity(iters.max(1));
    let mut best = 0.0f64;
    let mut witness = x.clone();
    let mut prev = f64::NAN;
    let mut steps = 0;
    let converged;
    loop {
        let nx = x.lp_norm(p)?;
        x = x.scale(1.0 / nx);
        let y = op.apply(&x)?;
        let r = y.lp_norm(p)?;
        steps += 1;
        if r > best {
            best = r;
            witness = x.clone();
        }
        bounds.push(best);
        if (r - prev).abs() < POWER_TOL {
            converged = true;
            break;
        }
        if steps >= iters.max(1) || r == 0.0 {
            converged = r == 0.0;
            break;
        }
        prev = r;
        let z = op.apply_adjoint(&duality_map(&y, p))?;
        if z.sup_norm() == 0.0 {
            converged = true;
            break;
        }
        x = duality_map(&z, p_conj);
    }
    Ok(ProbeResult::finish(bounds, witness, cap, steps, converged))
}

/// Runs independent power iterations in parallel; results keep input order.
pub fn power_iterate_batch(
    jobs: &[(RieszCoefficients, f64, LatticeFunction)],
    iters: usize,
) -> Vec<Result<ProbeResult>> {
    jobs.par_iter()
        .map(|(c, p, init)| power_iterate_lp(c, *p, init, iters))
        .collect()
}

/// `‖R_α² f‖_p / ‖f‖_p`.
pub fn lp_ratio(coeffs: &RieszCoefficients, p: f64, f: &LatticeFunction) -> Result<f64> {
    require_nonzero("f", f)?;
    let u = apply_riesz2(coeffs, f)?;
    Ok(u.lp_norm(p)? / f.lp_norm(p)?)
}

/// Weak-type lower bound `sup_t μ(E_t)^{1/p−1} ∫_{E_t} |u| dμ / ‖f‖_p` over the
/// superlevel sets `E_t = {|u| ≥ t}` of `u = R_α² f`. The quotient is
/// homogeneous of degree zero in `f`, so rescaling `f` leaves it unchanged.
pub fn weak_type_lower_bound(
    coeffs: &RieszCoefficients,
    p: f64,
    f: &LatticeFunction,
) -> Result<ProbeResult> {
    constants::conjugate(p)?;
    require_nonzero("f", f)?;
    let cap = constants::weak_type_constant(p)? * coeffs.matrix_norm();
    let u = apply_riesz2(coeffs, f)?;
    let fp = f.lp_norm(p)?;
    let w = f.group().point_weight();

    let mut mags: Vec<f64> = u.values().iter().map(|v| v.norm()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut bounds = Vec::new();
    let mut best = 0.0f64;
    let mut count = 0usize;
    let mut mass = 0.0f64;
    let mut i = 0;
    while i < mags.len() {
        let t = mags[i];
        if t == 0.0 {
            break;
        }
        while i < mags.len() && mags[i] == t {
            mass += mags[i];
            count += 1;
            i += 1;
        }
        let measure = count as f64 * w;
        let value = measure.powf(1.0 / p - 1.0) * mass * w / fp;
        best = best.max(value);
        bounds.push(best);
    }
    if bounds.is_empty() {
        bounds.push(0.0);
    }
    let steps = bounds.len();
    Ok(ProbeResult::finish(bounds, f.clone(), cap, steps, true))
}

/// Two sides of an inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

impl EstimateCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        let slack = rhs - lhs;
        Self {
            lhs,
            rhs,
            slack,
            holds: slack >= -1e-10,
        }
    }
}

fn check_k(k: f64) -> Result<()> {
    if !(k > 1.0) || !k.is_finite() {
        return Err(Error::param("K", format!("need finite K > 1, got {k}")));
    }
    Ok(())
}

fn check_mask(f: &LatticeFunction, e: &[bool]) -> Result<()> {
    if e.len() != f.values().len() {
        return Err(Error::Shape(format!(
            "set mask has {} entries, grid has {}",
            e.len(),
            f.values().len()
        )));
    }
    Ok(())
}

fn measure(f: &LatticeFunction, e: &[bool]) -> f64 {
    e.iter().filter(|&&b| b).count() as f64 * f.group().point_weight()
}

/// `∫_E |R_α² f| ≤ ‖A_α‖ (K ∫ Ψ(|f|) + μ(E) / (2(K−1)))`.
pub fn check_log_estimate(
    coeffs: &RieszCoefficients,
    f: &LatticeFunction,
    e: &[bool],
    k: f64,
) -> Result<EstimateCheck> {
    check_k(k)?;
    check_mask(f, e)?;
    let u = apply_riesz2(coeffs, f)?;
    let lhs = u.lp_norm_on(e, 1.0)?;
    let w = f.group().point_weight();
    let psi: f64 = f
        .values()
        .iter()
        .map(|v| young_psi(v.norm()))
        .sum::<Result<f64>>()?
        * w;
    let rhs = coeffs.matrix_norm() * (k * psi + measure(f, e) / (2.0 * (k - 1.0)));
    Ok(EstimateCheck::new(lhs, rhs))
}

/// `∫ Φ(|R_α² f| / (K‖A_α‖)) ≤ ‖f‖_1 / (2K(K−1))` for `‖f‖_∞ ≤ 1`.
pub fn check_exp_estimate(
    coeffs: &RieszCoefficients,
    f: &LatticeFunction,
    k: f64,
) -> Result<EstimateCheck> {
    check_k(k)?;
    if f.sup_norm() > 1.0 + 1e-12 {
        return Err(Error::param(
            "f",
            format!("need sup norm <= 1, got {}", f.sup_norm()),
        ));
    }
    let norm = coeffs.matrix_norm();
    let rhs = f.lp_norm(1.0)? / (2.0 * k * (k - 1.0));
    if norm == 0.0 {
        return Ok(EstimateCheck::new(0.0, rhs));
    }
    let u = apply_riesz2(coeffs, f)?;
    let w = f.group().point_weight();
    let lhs = u
        .values()
        .iter()
        .map(|v| young_phi(v.norm() / (k * norm)))
        .sum::<Result<f64>>()?
        * w;
    Ok(EstimateCheck::new(lhs, rhs))
}

/// `‖R_α² f‖_{L^p(E)} / (‖A_α‖ ‖f‖_q μ(E)^{1/p−1/q})`; reported, not gated.
pub fn mixed_norm_ratio(
    coeffs: &RieszCoefficients,
    f: &LatticeFunction,
    e: &[bool],
    p: f64,
    q: f64,
) -> Result<f64> {
    if !(p >= 1.0) || !(q > p) || !q.is_finite() {
        return Err(Error::param(
            "p,q",
            format!("need 1 <= p < q < inf, got p={p}, q={q}"),
        ));
    }
    check_mask(f, e)?;
    require_nonzero("f", f)?;
    let mu = measure(f, e);
    if mu == 0.0 {
        return Err(Error::param("E", "must have positive measure"));
    }
    let u = apply_riesz2(coeffs, f)?;
    let num = u.lp_norm_on(e, p)?;
    if num == 0.0 {
        return Ok(0.0);
    }
    let norm = coeffs.matrix_norm();
    Ok(num / (norm * f.lp_norm(q)? * mu.powf(1.0 / p - 1.0 / q)))
}

/// Ceiling `b(p*−1)` for real symmetric `A_α` with spectrum in `[−b, b]`,
/// `b = max(|a_min|, |a_max|)`; `None` for complex or non-symmetric `α`.
pub fn symmetric_range_ceiling(coeffs: &RieszCoefficients, p: f64) -> Result<Option<f64>> {
    let Some((lo, hi)) = coeffs.quadratic_form_bounds() else {
        return Ok(None);
    };
    let b = lo.abs().max(hi.abs());
    if b == 0.0 {
        return Ok(Some(0.0));
    }
    Ok(Some(constants::burkholder_symmetric(-b, b, p)?))
}
