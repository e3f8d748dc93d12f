//! The product group `G = Z_{N_1} × … × Z_{N_m} × T^n`, functions sampled on
//! its grid, and the measures and norms they carry.
//!
//! Discrete coordinates use the counting measure. Each torus circle has
//! circumference 1 and is sampled at `M_j` equispaced points carrying weight
//! `1/M_j`, so the torus factor has total mass 1.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{seed, C64};

/// Grids above this many points are refused at construction.
pub const MAX_GRID_POINTS: usize = 1 << 26;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupSpec {
    discrete_cycles: Vec<usize>,
    torus_resolutions: Vec<usize>,
}

impl GroupSpec {
    pub fn new(discrete_cycles: Vec<usize>, torus_resolutions: Vec<usize>) -> Result<Self> {
        if discrete_cycles.is_empty() && torus_resolutions.is_empty() {
            return Err(Error::param("group", "needs at least one factor"));
        }
        if let Some(n) = discrete_cycles.iter().find(|&&n| n < 2) {
            return Err(Error::param("group", format!("cycle length {n} < 2")));
        }
        if let Some(m) = torus_resolutions.iter().find(|&&m| m < 2 || m % 2 != 0) {
            return Err(Error::param(
                "group",
                format!("torus resolution {m} must be even and >= 2"),
            ));
        }
        let mut total: usize = 1;
        for &d in discrete_cycles.iter().chain(&torus_resolutions) {
            total = total
                .checked_mul(d)
                .filter(|&t| t <= MAX_GRID_POINTS)
                .ok_or_else(|| Error::param("group", "grid too large"))?;
        }
        Ok(Self {
            discrete_cycles,
            torus_resolutions,
        })
    }

    pub fn discrete(cycles: &[usize]) -> Result<Self> {
        Self::new(cycles.to_vec(), Vec::new())
    }

    pub fn torus(resolutions: &[usize]) -> Result<Self> {
        Self::new(Vec::new(), resolutions.to_vec())
    }

    pub fn discrete_cycles(&self) -> &[usize] {
        &self.discrete_cycles
    }

    pub fn torus_resolutions(&self) -> &[usize] {
        &self.torus_resolutions
    }

    /// Number of discrete generators.
    pub fn m(&self) -> usize {
        self.discrete_cycles.len()
    }

    /// Number of torus dimensions.
    pub fn n(&self) -> usize {
        self.torus_resolutions.len()
    }

    pub fn rank(&self) -> usize {
        self.m() + self.n()
    }

    /// Grid extents, discrete axes first.
    pub fn dims(&self) -> Vec<usize> {
        self.discrete_cycles
            .iter()
            .chain(&self.torus_resolutions)
            .copied()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Measure of a single grid point.
    pub fn point_weight(&self) -> f64 {
        self.torus_resolutions
            .iter()
            .map(|&m| 1.0 / m as f64)
            .product()
    }

    /// Weight of a single frequency under the dual measure, which makes the
    /// transform an isometry.
    pub fn frequency_weight(&self) -> f64 {
        self.discrete_cycles
            .iter()
            .map(|&n| 1.0 / n as f64)
            .product()
    }

    /// `μ_z(G)`.
    pub fn total_measure(&self) -> f64 {
        self.discrete_cycles.iter().map(|&n| n as f64).product()
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let dims = self.dims();
        let mut idx = vec![0; dims.len()];
        for (slot, &d) in idx.iter_mut().zip(&dims).rev() {
            *slot = flat % d;
            flat /= d;
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        self.dims()
            .iter()
            .zip(idx)
            .fold(0, |acc, (&d, &i)| acc * d + (i % d))
    }

    /// Position of grid sample `s` on torus axis `j`, in `[0, 1)`.
    pub fn torus_coordinate(&self, j: usize, s: usize) -> f64 {
        s as f64 / self.torus_resolutions[j] as f64
    }

    /// The header line used by the binary serialization.
    pub fn header(&self) -> String {
        let join = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "group: {} ; {}",
            join(&self.discrete_cycles),
            join(&self.torus_resolutions)
        )
    }

    /// Parses either a header line (`group: 4,4 ; 16`) or its body (`4,4;16`).
    pub fn parse(text: &str) -> Result<Self> {
        let body = text.trim();
        let body = body.strip_prefix("group:").unwrap_or(body);
        let (d, t) = match body.split_once(';') {
            Some((d, t)) => (d, t),
            None => (body, ""),
        };
        let list = |s: &str| -> Result<Vec<usize>> {
            s.split(',')
                .map(str::trim)
                .filter(|x| !x.is_empty())
                .map(|x| {
                    x.parse::<usize>()
                        .map_err(|e| Error::Parse(format!("group entry `{x}`: {e}")))
                })
                .collect()
        };
        Self::new(list(d)?, list(t)?)
    }
}

impl std::fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .discrete_cycles
            .iter()
            .map(|n| format!("Z{n}"))
            .chain(self.torus_resolutions.iter().map(|m| format!("T({m})")))
            .collect();
        write!(f, "{}", parts.join("x"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Spatial,
    Frequency,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Spatial => "spatial",
            Domain::Frequency => "frequency",
        }
    }
}

/// Complex samples over the full grid, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFunction {
    group: GroupSpec,
    values: Vec<C64>,
    domain: Domain,
}

impl LatticeFunction {
    pub fn new(group: GroupSpec, values: Vec<C64>, domain: Domain) -> Result<Self> {
        if values.len() != group.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} points",
                values.len(),
                group.len()
            )));
        }
        Ok(Self {
            group,
            values,
            domain,
        })
    }

    pub fn zeros(group: &GroupSpec) -> Self {
        Self {
            values: vec![C64::new(0.0, 0.0); group.len()],
            group: group.clone(),
            domain: Domain::Spatial,
        }
    }

    pub fn constant(group: &GroupSpec, c: C64) -> Self {
        Self {
            values: vec![c; group.len()],
            group: group.clone(),
            domain: Domain::Spatial,
        }
    }

    /// Samples `f` at every grid index tuple.
    pub fn from_fn(group: &GroupSpec, mut f: impl FnMut(&[usize]) -> C64) -> Self {
        let values = (0..group.len()).map(|i| f(&group.unravel(i))).collect();
        Self {
            group: group.clone(),
            values,
            domain: Domain::Spatial,
        }
    }

    pub fn from_real(group: &GroupSpec, values: &[f64]) -> Result<Self> {
        Self::new(
            group.clone(),
            values.iter().map(|&v| C64::new(v, 0.0)).collect(),
            Domain::Spatial,
        )
    }

    /// Indicator of the grid point with index tuple `idx`.
    pub fn point_indicator(group: &GroupSpec, idx: &[usize]) -> Self {
        let mut f = Self::zeros(group);
        f.values[group.ravel(idx)] = C64::new(1.0, 0.0);
        f
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub(crate) fn with_values(&self, values: Vec<C64>, domain: Domain) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            group: self.group.clone(),
            values,
            domain,
        }
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect(), self.domain)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn weight(&self) -> f64 {
        match self.domain {
            Domain::Spatial => self.group.point_weight(),
            Domain::Frequency => self.group.frequency_weight(),
        }
    }

    pub fn require_spatial(&self) -> Result<()> {
        match self.domain {
            Domain::Spatial => Ok(()),
            d => Err(Error::Domain {
                expected: "spatial",
                found: d.name(),
            }),
        }
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.values.iter().all(|v| v.im.abs() <= tol)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `(Σ |f|^p w)^{1/p}` with the weights of the function's domain.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::param("p", format!("need finite p >= 1, got {p}")));
        }
        Ok(weighted_lp(
            self.values.iter().map(|v| v.norm()),
            self.weight(),
            p,
        ))
    }

    /// `L^p` norm over the points where `mask` is set.
    pub fn lp_norm_on(&self, mask: &[bool], p: f64) -> Result<f64> {
        if mask.len() != self.values.len() {
            return Err(Error::Shape("mask length".into()));
        }
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::param("p", format!("need finite p >= 1, got {p}")));
        }
        let it = self
            .values
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| v.norm());
        Ok(weighted_lp(it, self.weight(), p))
    }

    /// `Σ f(z) conj(g(z)) w(z)`.
    pub fn inner_product(&self, other: &Self) -> Result<C64> {
        if self.group != other.group {
            return Err(Error::Shape(format!(
                "inner product of functions on {} and {}",
                self.group, other.group
            )));
        }
        if self.domain != other.domain {
            return Err(Error::Domain {
                expected: self.domain.name(),
                found: other.domain.name(),
            });
        }
        let s: C64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b.conj())
            .sum();
        Ok(s * self.weight())
    }

    /// `∫ f dμ`.
    pub fn integral(&self) -> C64 {
        self.values.iter().sum::<C64>() * self.weight()
    }

    /// `∫ f dμ / μ(G)`.
    pub fn mean(&self) -> C64 {
        self.values.iter().sum::<C64>() / self.values.len() as f64
    }

    pub fn mean_zero_project(&self) -> Self {
        let m = self.mean();
        self.map(|v| v - m)
    }

    /// Pseudo-random complex values in the unit square, a pure function of `seed`.
    pub fn random(group: &GroupSpec, seed: u64) -> Self {
        let mut rng = seed::rng(seed, "lattice.random", 0);
        let values = (0..group.len())
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        Self {
            group: group.clone(),
            values,
            domain: Domain::Spatial,
        }
    }

    /// Pseudo-random real values in `[-1, 1)`.
    pub fn random_real(group: &GroupSpec, seed: u64) -> Self {
        let mut rng = seed::rng(seed, "lattice.random_real", 0);
        let values = (0..group.len())
            .map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0))
            .collect();
        Self {
            group: group.clone(),
            values,
            domain: Domain::Spatial,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.group != other.group || self.domain != other.domain {
            return Err(Error::Shape("sum of incompatible functions".into()));
        }
        Ok(self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
            self.domain,
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Header line, newline, then interleaved little-endian `(re, im)` f64 pairs.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        self.require_spatial()?;
        writeln!(w, "{}", self.group.header())?;
        for v in &self.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: BufRead>(mut r: R) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        if !header.starts_with("group:") {
            return Err(Error::Parse("missing `group:` header line".into()));
        }
        let group = GroupSpec::parse(&header)?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != group.len() * 16 {
            return Err(Error::Shape(format!(
                "{} payload bytes for {} points",
                bytes.len(),
                group.len()
            )));
        }
        let values = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                C64::new(re, im)
            })
            .collect();
        Self::new(group, values, Domain::Spatial)
    }

    /// One row per grid point: index tuple, `re`, `im`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut cols: Vec<String> = (1..=self.group.m()).map(|i| format!("k{i}")).collect();
        cols.extend((1..=self.group.n()).map(|j| format!("s{j}")));
        cols.push("re".into());
        cols.push("im".into());
        writeln!(w, "{}", cols.join(","))?;
        for (flat, v) in self.values.iter().enumerate() {
            let idx = self.group.unravel(flat);
            let idx: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            writeln!(w, "{},{:e},{:e}", idx.join(","), v.re, v.im)?;
        }
        Ok(())
    }
}

fn weighted_lp(moduli: impl Iterator<Item = f64>, weight: f64, p: f64) -> f64 {
    if p == 1.0 {
        return moduli.sum::<f64>() * weight;
    }
    if p == 2.0 {
        return (moduli.map(|a| a * a).sum::<f64>() * weight).sqrt();
    }
    let v: Vec<f64> = moduli.collect();
    let scale = v.iter().copied().fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = v.iter().map(|a| (a / scale).powf(p)).sum();
    scale * (s * weight).powf(1.0 / p)
}
