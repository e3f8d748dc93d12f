//! Sharp constants and the Young pair `Φ`, `Ψ`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `Γ(x)` for `x > 0` (Lanczos approximation, via statrs).
pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::param("p", format!("need 1 < p < inf, got {p}")));
    }
    Ok(())
}

/// Hölder conjugate `p/(p−1)`.
pub fn conjugate(p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(p / (p - 1.0))
}

pub fn p_star(p: f64) -> Result<f64> {
    Ok(p.max(conjugate(p)?))
}

/// `p* − 1`.
pub fn sharp_lp_constant(p: f64) -> Result<f64> {
    check_exponent(p)?;
    let d = p - 1.0;
    Ok(d.max(1.0 / d))
}

/// Both closed forms of the weak-type constant at `p`, `[p ≤ 2 branch, p ≥ 2 branch]`.
pub fn weak_type_branches(p: f64) -> Result<[f64; 2]> {
    check_exponent(p)?;
    let low = (0.5 * gamma((2.0 * p - 1.0) / (p - 1.0))).powf(1.0 - 1.0 / p);
    let high = (p.powf(p - 1.0) / 2.0).powf(1.0 / p);
    Ok([low, high])
}

/// Weak-type `(p, p)` constant.
pub fn weak_type_constant(p: f64) -> Result<f64> {
    let [low, high] = weak_type_branches(p)?;
    Ok(if p <= 2.0 { low } else { high })
}

/// Threshold `λ_p` of the weak-type special function: the best `λ` for which
/// `(|G| − λ)_+ ≤ |F|^p` is preserved along the relevant martingale pairs.
pub fn weak_type_threshold(p: f64) -> Result<f64> {
    check_exponent(p)?;
    if p <= 2.0 {
        Ok(p.powf(-1.0 / (p - 1.0)) * gamma(p / (p - 1.0)) / 2.0)
    } else {
        Ok((p - 1.0) * (2.0 * p).powf(-1.0 / (p - 1.0)))
    }
}

/// Converts a threshold `λ` for `μ(|u| ≥ 1) ≤ ∫|f|^p + λ`-type bounds into a
/// weak-type constant by optimizing over the scaling `f ↦ sf`:
/// `c = (λ p^{p/(p−1)} / (p−1))^{(p−1)/p}`.
pub fn invert_young(p: f64, lambda: f64) -> Result<f64> {
    check_exponent(p)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::param(
            "lambda",
            format!("need finite lambda >= 0, got {lambda}"),
        ));
    }
    Ok((lambda * p.powf(p / (p - 1.0)) / (p - 1.0)).powf((p - 1.0) / p))
}

/// `min_{s>0} (s^{p−1} a + b/s) = p (p−1)^{1/p−1} a^{1/p} b^{1−1/p}`.
pub fn scaling_minimum(p: f64, a: f64, b: f64) -> Result<f64> {
    check_exponent(p)?;
    if a < 0.0 || b < 0.0 {
        return Err(Error::param("a,b", "scaling weights must be nonnegative"));
    }
    Ok(p * (p - 1.0).powf(1.0 / p - 1.0) * a.powf(1.0 / p) * b.powf(1.0 - 1.0 / p))
}

/// The weak-type constant rebuilt from its threshold by the scaling argument.
pub fn weak_type_constant_via_scaling(p: f64) -> Result<f64> {
    invert_young(p, weak_type_threshold(p)?)
}

/// `log((1 + e^{−2})/2)`.
fn choi_log() -> f64 {
    ((1.0 + (-2.0f64).exp()) / 2.0).ln()
}

/// Second coefficient of the large-`p` expansion of `𝔠_{0,1,p}`.
pub fn choi_beta2() -> f64 {
    let l = choi_log();
    let r = (-2.0f64).exp() / (1.0 + (-2.0f64).exp());
    l * l + 0.5 * l - 2.0 * r * r
}

/// Three-term large-`p` approximation `p/2 + ½ log((1+e^{−2})/2) + β₂/p`.
pub fn choi_01_approx(p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(p / 2.0 + 0.5 * choi_log() + choi_beta2() / p)
}

/// `𝔠_{a,b,p}` for the symmetric range `a = −b`, where it equals `b(p*−1)`.
pub fn burkholder_symmetric(a: f64, b: f64, p: f64) -> Result<f64> {
    if !(b > 0.0) || a != -b {
        return Err(Error::Unsupported(format!(
            "constant for a={a}, b={b} has no closed form; only a = -b, b > 0 is supported"
        )));
    }
    Ok(b * sharp_lp_constant(p)?)
}

fn check_t(t: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(Error::param("t", format!("need t >= 0, got {t}")));
    }
    Ok(())
}

/// `Φ(t) = e^t − 1 − t`.
pub fn young_phi(t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(t.exp_m1() - t)
}

/// `Ψ(t) = (t+1) log(t+1) − t`.
pub fn young_psi(t: f64) -> Result<f64> {
    check_t(t)?;
    Ok((t + 1.0) * t.ln_1p() - t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantName {
    SharpLp,
    WeakType,
    Choi01Approx,
    BurkholderSymmetric,
    YoungPhi,
    YoungPsi,
}

impl ConstantName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SharpLp => "sharp_lp",
            Self::WeakType => "weak_type",
            Self::Choi01Approx => "choi_01_approx",
            Self::BurkholderSymmetric => "burkholder_symmetric",
            Self::YoungPhi => "young_phi",
            Self::YoungPsi => "young_psi",
        }
    }
}

impl fmt::Display for ConstantName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of a constants table. For the Young functions `p` holds the
/// argument `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantReport {
    pub p: f64,
    pub q: Option<f64>,
    pub name: ConstantName,
    pub value: f64,
}

/// Rows for every norm constant at each `p`, then `Φ` and `Ψ` at each `t`.
pub fn report(ps: &[f64], ts: &[f64]) -> Result<Vec<ConstantReport>> {
    let mut out = Vec::new();
    for &p in ps {
        let rows = [
            (ConstantName::SharpLp, sharp_lp_constant(p)?),
            (ConstantName::WeakType, weak_type_constant(p)?),
            (ConstantName::Choi01Approx, choi_01_approx(p)?),
            (
                ConstantName::BurkholderSymmetric,
                burkholder_symmetric(-1.0, 1.0, p)?,
            ),
        ];
        out.extend(rows.into_iter().map(|(name, value)| ConstantReport {
            p,
            q: None,
            name,
            value,
        }));
    }
    for &t in ts {
        out.push(ConstantReport {
            p: t,
            q: None,
            name: ConstantName::YoungPhi,
            value: young_phi(t)?,
        });
        out.push(ConstantReport {
            p: t,
            q: None,
            name: ConstantName::YoungPsi,
            value: young_psi(t)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn p_star_examples() {
        assert_eq!(p_star(2.0).unwrap(), 2.0);
        assert_eq!(p_star(4.0).unwrap(), 4.0);
        assert!((p_star(4.0 / 3.0).unwrap() - 4.0).abs() < 1e-14);
        assert!((p_star(1.5).unwrap() - 3.0).abs() < 1e-15);
        assert!(p_star(1.0).is_err());
        assert!(p_star(0.5).is_err());
        assert!(p_star(f64::NAN).is_err());
    }

    #[test]
    fn sharp_lp_examples() {
        assert_eq!(sharp_lp_constant(2.0).unwrap(), 1.0);
        assert_eq!(sharp_lp_constant(3.0).unwrap(), 2.0);
        assert_eq!(sharp_lp_constant(1.25).unwrap(), 4.0);
    }

    #[test]
    fn gamma_factorials() {
        let mut fact = 1.0;
        for n in 2..=10 {
            fact *= (n - 1) as f64;
            assert!(rel(gamma(n as f64), fact) < 1e-13, "n={n}");
        }
        // Γ(1/2) = √π, Γ(2.5) = 3√π/4
        assert!(rel(gamma(0.5), std::f64::consts::PI.sqrt()) < 1e-13);
        assert!(rel(gamma(2.5), 0.75 * std::f64::consts::PI.sqrt()) < 1e-13);
    }

    #[test]
    fn weak_type_examples() {
        // 50-digit reference values.
        assert!((weak_type_constant(2.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(rel(weak_type_constant(3.0).unwrap(), 1.6509636244473133) < 1e-13);
        assert!(rel(weak_type_constant(1.5).unwrap(), 1.4422495703074084) < 1e-13);
        assert!(rel(weak_type_constant(4.0).unwrap(), 2.3784142300054421) < 1e-13);
        let lo = weak_type_constant(2.0).unwrap();
        let hi = weak_type_constant(2.0 + 1e-12).unwrap();
        assert!((lo - hi).abs() < 1e-10);
    }

    #[test]
    fn weak_type_from_threshold() {
        assert!(rel(weak_type_threshold(1.5).unwrap(), 4.0 / 9.0) < 1e-13);
        assert!(rel(weak_type_threshold(1.25).unwrap(), 4.9152) < 1e-12);
        assert!(rel(weak_type_threshold(1.75).unwrap(), 0.28229260664860623) < 1e-12);
        assert!(rel(weak_type_threshold(2.0).unwrap(), 0.25) < 1e-14);
        for p in [1.1, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 6.0] {
            let a = weak_type_constant(p).unwrap();
            let b = weak_type_constant_via_scaling(p).unwrap();
            assert!(rel(a, b) < 1e-12, "p={p}: {a} vs {b}");
        }
    }

    #[test]
    fn scaling_minimum_matches_grid() {
        let (p, a, b) = (1.7, 0.3, 2.0);
        let closed = scaling_minimum(p, a, b).unwrap();
        let grid = (1..200_000)
            .map(|i| i as f64 * 1e-4)
            .map(|s| s.powf(p - 1.0) * a + b / s)
            .fold(f64::INFINITY, f64::min);
        assert!(closed <= grid + 1e-12);
        assert!(grid - closed < 1e-6);
    }

    #[test]
    fn choi_examples() {
        // The printed three-term formula, evaluated at 50 digits.
        assert!(rel(choi_beta2(), 0.0090758899327819) < 1e-12);
        assert!(rel(choi_01_approx(10.0).unwrap(), 4.7177980042347918) < 1e-14);
        let asym = -0.2831095847584864;
        let big = 1e6;
        assert!((choi_01_approx(big).unwrap() - big / 2.0 - asym).abs() < 1e-5);
        assert!(choi_01_approx(1.0).is_err());
    }

    #[test]
    fn burkholder_examples() {
        assert_eq!(burkholder_symmetric(-1.0, 1.0, 2.0).unwrap(), 1.0);
        assert_eq!(burkholder_symmetric(-2.0, 2.0, 3.0).unwrap(), 4.0);
        assert!(matches!(
            burkholder_symmetric(0.0, 1.0, 2.0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn young_examples() {
        assert_eq!(young_phi(0.0).unwrap(), 0.0);
        assert_eq!(young_psi(0.0).unwrap(), 0.0);
        let series: f64 = (2..30)
            .map(|k| 1.0 / (1..=k).map(|j| j as f64).product::<f64>())
            .sum();
        assert!((young_phi(1.0).unwrap() - series).abs() < 1e-15);
        assert!((young_phi(1.0).unwrap() - 0.71828182845904524).abs() < 1e-15);
        assert!(young_phi(-0.1).is_err());
        assert!(young_psi(-0.1).is_err());
        for i in 0..=50 {
            for j in 0..=50 {
                let (t, s) = (i as f64 * 0.1, j as f64 * 0.1);
                assert!(t * s <= young_phi(t).unwrap() + young_psi(s).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn report_layout() {
        let rows = report(&[2.0, 3.0], &[1.0]).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[0].name, ConstantName::SharpLp);
        assert_eq!(rows[9].name, ConstantName::YoungPsi);
        assert!(rows.iter().all(|r| r.value.is_finite() && r.value >= 0.0));
        assert!(report(&[1.0], &[]).is_err());
    }
}
