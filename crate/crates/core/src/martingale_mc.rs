//! Monte Carlo for the walk `Z_t = (X_t, Y_t)` and the martingales
//! `M_t^f = P_{T−t} f(Z_t)` and its transform `M^{α,f}`.
//!
//! Each discrete axis carries a Poisson clock of rate `λ` (default 2) whose
//! rings move the coordinate by `±1` with probability ½; torus coordinates
//! follow a Brownian motion with `Var(dY) = 2 dt`. With these normalizations
//! the generator of the walk is the full Laplacian `Δ_x + Δ_y`.
//!
//! The transform multiplies each jump of `M^f` on axis `i` by `α^x_i`, carries
//! the compensator drift `−α^x_i (X_i²P f) dt` and uses `Σ α^y_{jk} (Y_j P f) dY^k`
//! for the continuous part. Heat extensions are summed mode by mode at the
//! exact (wrapped) position, so jumps and drifts are exact and only the
//! stochastic integral over `dY` is discretized (left-point Euler).

use std::f64::consts::PI;
use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants;
use crate::error::{Error, Result};
use crate::group_lattice::{Domain, GroupSpec, LatticeFunction};
use crate::seed;
use crate::spectral_ops::{
    inverse_transform, multiplier_table, require_mean_zero, signed_frequency, transform,
    RieszCoefficients, Symbols,
};
use crate::C64;

/// Paths per deterministic reduction chunk.
const CHUNK: u64 = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StartLaw {
    /// `Z_0` uniform on the group.
    Uniform,
    /// Deterministic start.
    Fixed { x: Vec<usize>, y: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub group: GroupSpec,
    pub horizon: f64,
    pub dt: f64,
    pub jump_rate: f64,
    pub seed: u64,
    pub paths: u64,
    pub start: StartLaw,
}

impl WalkConfig {
    pub fn new(group: GroupSpec, horizon: f64, dt: f64, seed: u64, paths: u64) -> Result<Self> {
        let c = Self {
            group,
            horizon,
            dt,
            jump_rate: 2.0,
            seed,
            paths,
            start: StartLaw::Uniform,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_jump_rate(mut self, rate: f64) -> Result<Self> {
        self.jump_rate = rate;
        self.validate()?;
        Ok(self)
    }

    pub fn with_start(mut self, start: StartLaw) -> Result<Self> {
        self.start = start;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::param(
                "T",
                format!("need finite T > 0, got {}", self.horizon),
            ));
        }
        if !(self.dt > 0.0) || self.dt > self.horizon {
            return Err(Error::param(
                "dt",
                format!("need 0 < dt <= T, got {}", self.dt),
            ));
        }
        if !(self.jump_rate > 0.0) || !self.jump_rate.is_finite() {
            return Err(Error::param(
                "jump_rate",
                format!("need > 0, got {}", self.jump_rate),
            ));
        }
        if self.paths == 0 {
            return Err(Error::param("paths", "need at least one path"));
        }
        if let StartLaw::Fixed { x, y } = &self.start {
            if x.len() != self.group.m() || y.len() != self.group.n() {
                return Err(Error::Shape("start point rank".into()));
            }
            if x.iter()
                .zip(self.group.discrete_cycles())
                .any(|(&a, &n)| a >= n)
            {
                return Err(Error::param("start", "discrete coordinate out of range"));
            }
        }
        Ok(())
    }

    /// Number of Euler steps; zero on fully discrete groups.
    pub fn steps(&self) -> usize {
        if self.group.n() == 0 {
            0
        } else {
            (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize
        }
    }

    /// `[t_k, t_{k+1}]` of Euler step `k`.
    pub fn step_interval(&self, k: usize) -> (f64, f64) {
        let a = k as f64 * self.dt;
        let b = ((k + 1) as f64 * self.dt).min(self.horizon);
        (
            a,
            if k + 1 == self.steps() {
                self.horizon
            } else {
                b
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub axis: usize,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub index: u64,
    pub x0: Vec<usize>,
    pub y0: Vec<f64>,
    /// Sorted by time.
    pub jump_times: Vec<Jump>,
    /// One `n`-vector per Euler step.
    pub brownian_increments: Vec<Vec<f64>>,
}

impl PathSample {
    /// Positions right after each event, starting with `(0, Z_0)`.
    pub fn trajectory(&self, config: &WalkConfig) -> Vec<(f64, Vec<usize>, Vec<f64>)> {
        let mut out = vec![(0.0, self.x0.clone(), self.y0.clone())];
        let (mut x, mut y) = (self.x0.clone(), self.y0.clone());
        for ev in merged_events(config, self) {
            match ev {
                Event::Jump(j) => {
                    step_discrete(&config.group, &mut x, j.axis, j.sign);
                    out.push((j.time, x.clone(), y.clone()));
                }
                Event::Step(k) => {
                    let (t, _) = config.step_interval(k);
                    wrap_add(&mut y, &self.brownian_increments[k]);
                    out.push((t, x.clone(), y.clone()));
                }
            }
        }
        out
    }

    pub fn endpoint(&self, config: &WalkConfig) -> (Vec<usize>, Vec<f64>) {
        let t = self.trajectory(config);
        let last = t.last().expect("nonempty");
        (last.1.clone(), last.2.clone())
    }

    pub fn jump_count(&self, axis: usize) -> usize {
        self.jump_times.iter().filter(|j| j.axis == axis).count()
    }
}

fn step_discrete(group: &GroupSpec, x: &mut [usize], axis: usize, sign: i8) {
    let n = group.discrete_cycles()[axis];
    x[axis] = if sign > 0 {
        (x[axis] + 1) % n
    } else {
        (x[axis] + n - 1) % n
    };
}

fn wrap_add(y: &mut [f64], dy: &[f64]) {
    for (a, d) in y.iter_mut().zip(dy) {
        *a = (*a + d).rem_euclid(1.0);
    }
}

/// Path `index` of the walk; deterministic in `(config.seed, index)`.
pub fn sample_path(config: &WalkConfig, index: u64) -> PathSample {
    let mut rng = seed::rng(config.seed, "walk", index);
    let group = &config.group;
    let (x0, y0) = match &config.start {
        StartLaw::Uniform => (
            group
                .discrete_cycles()
                .iter()
                .map(|&n| rng.random_range(0..n))
                .collect(),
            (0..group.n()).map(|_| rng.random::<f64>()).collect(),
        ),
        StartLaw::Fixed { x, y } => (x.clone(), y.clone()),
    };
    let exp = Exp::new(config.jump_rate).expect("validated rate");
    let mut jumps = Vec::new();
    for axis in 0..group.m() {
        let mut t = exp.sample(&mut rng);
        while t < config.horizon {
            let sign = if rng.random::<bool>() { 1 } else { -1 };
            jumps.push(Jump {
                time: t,
                axis,
                sign,
            });
            t += exp.sample(&mut rng);
        }
    }
    jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
    let steps = config.steps();
    let mut incs = Vec::with_capacity(steps);
    for k in 0..steps {
        let (a, b) = config.step_interval(k);
        let normal = Normal::new(0.0, (2.0 * (b - a)).sqrt()).expect("positive step");
        incs.push((0..group.n()).map(|_| normal.sample(&mut rng)).collect());
    }
    PathSample {
        index,
        x0,
        y0,
        jump_times: jumps,
        brownian_increments: incs,
    }
}

/// The walk's paths in index order.
pub fn simulate_walk(config: &WalkConfig) -> impl Iterator<Item = PathSample> + '_ {
    (0..config.paths).map(move |i| sample_path(config, i))
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Jump(Jump),
    Step(usize),
}

impl Event {
    fn time(&self, config: &WalkConfig) -> f64 {
        match self {
            Event::Jump(j) => j.time,
            Event::Step(k) => config.step_interval(*k).0,
        }
    }
}

fn merged_events(config: &WalkConfig, path: &PathSample) -> Vec<Event> {
    let mut ev: Vec<Event> = path.jump_times.iter().copied().map(Event::Jump).collect();
    ev.extend((0..path.brownian_increments.len()).map(Event::Step));
    ev.sort_by(|a, b| a.time(config).total_cmp(&b.time(config)));
    ev
}

#[derive(Debug, Clone)]
struct Mode {
    k: Vec<usize>,
    /// `2π q_j`.
    w: Vec<f64>,
    coef: C64,
    lambda: f64,
    /// `Σ_i 4 sin²(π k_i / N_i)`, the discrete part of `λ`.
    lambda_x: f64,
}

/// A mean-zero function as a finite Fourier series with heat evaluation.
#[derive(Debug, Clone)]
struct ModalField {
    modes: Vec<Mode>,
    roots: Vec<Vec<C64>>,
    cycles: Vec<usize>,
    sin4: Vec<Vec<f64>>,
}

impl ModalField {
    fn new(f: &LatticeFunction) -> Result<Self> {
        let group = f.group();
        let hat = transform(f)?;
        let fw = group.frequency_weight();
        let cycles = group.discrete_cycles().to_vec();
        let roots = cycles
            .iter()
            .map(|&n| {
                (0..n)
                    .map(|j| C64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64))
                    .collect()
            })
            .collect();
        let sin4: Vec<Vec<f64>> = cycles
            .iter()
            .map(|&n| {
                (0..n)
                    .map(|k| 4.0 * (PI * k as f64 / n as f64).sin().powi(2))
                    .collect()
            })
            .collect();
        let m = group.m();
        let mut modes = Vec::new();
        for (flat, &v) in hat.values().iter().enumerate() {
            if flat == 0 || v == C64::new(0.0, 0.0) {
                continue;
            }
            let idx = group.unravel(flat);
            let k = idx[..m].to_vec();
            let w: Vec<f64> = idx[m..]
                .iter()
                .zip(group.torus_resolutions())
                .map(|(&s, &r)| 2.0 * PI * signed_frequency(s, r) as f64)
                .collect();
            let lambda_x: f64 = k.iter().enumerate().map(|(i, &ki)| sin4[i][ki]).sum();
            let lambda = lambda_x + w.iter().map(|a| a * a).sum::<f64>();
            modes.push(Mode {
                k,
                w,
                coef: v * fw,
                lambda,
                lambda_x,
            });
        }
        Ok(Self {
            modes,
            roots,
            cycles,
            sin4,
        })
    }

    fn character(&self, mode: &Mode, x: &[usize], y: &[f64]) -> C64 {
        let mut e = C64::new(1.0, 0.0);
        for i in 0..x.len() {
            e *= self.roots[i][(mode.k[i] * x[i]) % self.cycles[i]];
        }
        if !y.is_empty() {
            let phase: f64 = mode.w.iter().zip(y).map(|(w, y)| w * y).sum();
            e *= C64::from_polar(1.0, phase);
        }
        e
    }

    /// `e^{−λ s}` per mode.
    fn decay(&self, s: f64) -> Vec<f64> {
        self.modes.iter().map(|m| (-m.lambda * s).exp()).collect()
    }

    /// Mode characters at `(x, y)`.
    fn characters(&self, x: &[usize], y: &[f64]) -> Vec<C64> {
        self.modes.iter().map(|m| self.character(m, x, y)).collect()
    }

    /// Updates cached characters for a unit step along a discrete axis.
    fn shift_characters(&self, chars: &mut [C64], axis: usize, sign: i8) {
        let n = self.cycles[axis];
        for (c, m) in chars.iter_mut().zip(&self.modes) {
            let k = if sign > 0 {
                m.k[axis]
            } else {
                (n - m.k[axis]) % n
            };
            *c *= self.roots[axis][k];
        }
    }

    fn value(&self, decay: &[f64], chars: &[C64]) -> C64 {
        self.modes
            .iter()
            .zip(decay)
            .zip(chars)
            .map(|((m, d), c)| m.coef * *d * c)
            .sum()
    }

    fn gradient_y(&self, decay: &[f64], chars: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|g| *g = C64::new(0.0, 0.0));
        for ((m, d), c) in self.modes.iter().zip(decay).zip(chars) {
            let v = m.coef * *d * c;
            for (g, w) in out.iter_mut().zip(&m.w) {
                *g += v * C64::new(0.0, *w);
            }
        }
    }

    /// `Σ_i c_i 4 sin²(πk_i/N_i)` per mode.
    fn weighted_symbols(&self, c: &[C64]) -> Vec<C64> {
        self.modes
            .iter()
            .map(|m| {
                m.k.iter()
                    .enumerate()
                    .map(|(i, &k)| c[i] * self.sin4[i][k])
                    .sum()
            })
            .collect()
    }

    /// `∫_{t_a}^{t_b} (−Σ_i X_i² P_{T−s} f)(x, y) ds` and the same with per-axis
    /// weights, whose symbols are `weighted`; `y` is frozen.
    fn drift_pair(
        &self,
        before: &[f64],
        after: &[f64],
        chars: &[C64],
        weighted: &[C64],
    ) -> (C64, C64) {
        let mut plain = C64::new(0.0, 0.0);
        let mut alpha = C64::new(0.0, 0.0);
        for (idx, m) in self.modes.iter().enumerate() {
            if m.lambda_x == 0.0 {
                continue;
            }
            let v = m.coef * ((after[idx] - before[idx]) / m.lambda) * chars[idx];
            plain += v * m.lambda_x;
            alpha += v * weighted[idx];
        }
        (plain, alpha)
    }
}

/// Path values of `M^f`, `M^{α,f}` and their brackets at each event.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MartingalePair {
    pub times: Vec<f64>,
    /// `P_{T−t} f(Z_t)`, evaluated directly.
    pub m_f: Vec<C64>,
    /// `M^f` accumulated from its increments.
    pub m_f_accumulated: Vec<C64>,
    pub m_alpha: Vec<C64>,
    pub qv_f: Vec<f64>,
    pub qv_alpha: Vec<f64>,
    /// `[M^f, M^g]` when a second function was supplied.
    pub qcov_fg: Vec<C64>,
    /// Per-increment `(d[M^{α,f}], d[M^f])`.
    pub increments: Vec<(f64, f64)>,
    pub endpoint: Vec<usize>,
}

impl MartingalePair {
    pub fn terminal_alpha(&self) -> C64 {
        *self.m_alpha.last().expect("nonempty")
    }

    pub fn terminal_f(&self) -> C64 {
        *self.m_f.last().expect("nonempty")
    }

    /// `max_t |M^f_t − accumulated M^f_t|`.
    pub fn accumulation_error(&self) -> f64 {
        self.m_f
            .iter()
            .zip(&self.m_f_accumulated)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Terminal quantities without the per-event record.
#[derive(Debug, Clone, Copy)]
struct Terminal {
    m_alpha: C64,
    qcov: C64,
}

struct Evolver<'a> {
    config: &'a WalkConfig,
    f: ModalField,
    g: Option<ModalField>,
    alpha: RieszCoefficients,
    weighted: Vec<C64>,
}

impl<'a> Evolver<'a> {
    fn new(
        config: &'a WalkConfig,
        f: &LatticeFunction,
        g: Option<&LatticeFunction>,
        alpha: &RieszCoefficients,
    ) -> Result<Self> {
        config.validate()?;
        if f.group() != &config.group {
            return Err(Error::Shape(format!(
                "f lives on {}, walk on {}",
                f.group(),
                config.group
            )));
        }
        alpha.check_group(&config.group)?;
        require_mean_zero("f", f)?;
        let g = match g {
            Some(g) => {
                if g.group() != &config.group {
                    return Err(Error::Shape("g lives on a different group".into()));
                }
                require_mean_zero("g", g)?;
                Some(ModalField::new(g)?)
            }
            None => None,
        };
        let f = ModalField::new(f)?;
        let weighted = f.weighted_symbols(&alpha.alpha_x);
        Ok(Self {
            config,
            f,
            g,
            alpha: alpha.clone(),
            weighted,
        })
    }

    fn run(&self, path: &PathSample, mut rec: Option<&mut MartingalePair>) -> Terminal {
        let cfg = self.config;
        let big_t = cfg.horizon;
        let n = cfg.group.n();
        let (mut x, mut y) = (path.x0.clone(), path.y0.clone());
        let mut dec_f = self.f.decay(big_t);
        let mut dec_g = self.g.as_ref().map(|g| g.decay(big_t));
        let mut ch_f = self.f.characters(&x, &y);
        let mut ch_g = self.g.as_ref().map(|g| g.characters(&x, &y));
        let m0 = self.f.value(&dec_f, &ch_f);
        let mut m_f_acc = m0;
        let mut m_alpha = m0;
        let (mut qv_f, mut qv_a) = (0.0f64, 0.0f64);
        let mut qcov = C64::new(0.0, 0.0);
        let mut t = 0.0;
        let mut grad_f = vec![C64::new(0.0, 0.0); n];
        let mut grad_g = vec![C64::new(0.0, 0.0); n];

        let push = |rec: &mut Option<&mut MartingalePair>,
                    t: f64,
                    direct: C64,
                    acc: C64,
                    ma: C64,
                    qf: f64,
                    qa: f64,
                    qc: C64,
                    inc: Option<(f64, f64)>| {
            if let Some(r) = rec.as_deref_mut() {
                r.times.push(t);
                r.m_f.push(direct);
                r.m_f_accumulated.push(acc);
                r.m_alpha.push(ma);
                r.qv_f.push(qf);
                r.qv_alpha.push(qa);
                r.qcov_fg.push(qc);
                if let Some(i) = inc {
                    r.increments.push(i);
                }
            }
        };
        push(&mut rec, 0.0, m0, m0, m0, 0.0, 0.0, qcov, None);

        let mut events = merged_events(cfg, path);
        events.push(Event::Step(usize::MAX));
        for ev in events {
            let t_e = match ev {
                Event::Step(usize::MAX) => big_t,
                e => e.time(cfg),
            };
            if t_e > t {
                let new_f = self.f.decay(big_t - t_e);
                let (plain, weighted) = self.f.drift_pair(&dec_f, &new_f, &ch_f, &self.weighted);
                m_f_acc += plain;
                m_alpha += weighted;
                dec_f = new_f;
                if let (Some(g), Some(d)) = (&self.g, dec_g.as_mut()) {
                    *d = g.decay(big_t - t_e);
                }
                t = t_e;
            }
            let inc = match ev {
                Event::Jump(j) => {
                    let before = self.f.value(&dec_f, &ch_f);
                    let gb = self
                        .g
                        .as_ref()
                        .map(|g| g.value(dec_g.as_ref().unwrap(), ch_g.as_ref().unwrap()));
                    step_discrete(&cfg.group, &mut x, j.axis, j.sign);
                    self.f.shift_characters(&mut ch_f, j.axis, j.sign);
                    if let (Some(g), Some(c)) = (&self.g, ch_g.as_mut()) {
                        g.shift_characters(c, j.axis, j.sign);
                    }
                    let delta = self.f.value(&dec_f, &ch_f) - before;
                    let da = self.alpha.alpha_x[j.axis] * delta;
                    m_f_acc += delta;
                    m_alpha += da;
                    let (df, dq) = (delta.norm_sqr(), da.norm_sqr());
                    qv_f += df;
                    qv_a += dq;
                    if let (Some(g), Some(gb)) = (&self.g, gb) {
                        let dg = g.value(dec_g.as_ref().unwrap(), ch_g.as_ref().unwrap()) - gb;
                        qcov += delta * dg.conj();
                    }
                    Some((dq, df))
                }
                Event::Step(usize::MAX) => None,
                Event::Step(k) => {
                    let (a, b) = cfg.step_interval(k);
                    let h = b - a;
                    let dy = &path.brownian_increments[k];
                    self.f.gradient_y(&dec_f, &ch_f, &mut grad_f);
                    let mut df = C64::new(0.0, 0.0);
                    let mut da = C64::new(0.0, 0.0);
                    let mut qa_rate = 0.0;
                    for kk in 0..n {
                        df += grad_f[kk] * dy[kk];
                        let col: C64 = (0..n).map(|j| self.alpha.alpha_y[j][kk] * grad_f[j]).sum();
                        da += col * dy[kk];
                        qa_rate += col.norm_sqr();
                    }
                    let qf_inc = 2.0 * grad_f.iter().map(|g| g.norm_sqr()).sum::<f64>() * h;
                    let qa_inc = 2.0 * qa_rate * h;
                    if let (Some(g), Some(d)) = (&self.g, dec_g.as_ref()) {
                        g.gradient_y(d, ch_g.as_ref().unwrap(), &mut grad_g);
                        let dot: C64 = grad_f.iter().zip(&grad_g).map(|(a, b)| a * b.conj()).sum();
                        qcov += 2.0 * dot * h;
                    }
                    m_f_acc += df;
                    m_alpha += da;
                    qv_f += qf_inc;
                    qv_a += qa_inc;
                    wrap_add(&mut y, dy);
                    if n > 0 {
                        ch_f = self.f.characters(&x, &y);
                        ch_g = self.g.as_ref().map(|g| g.characters(&x, &y));
                    }
                    Some((qa_inc, qf_inc))
                }
            };
            if rec.is_some() {
                let direct = self.f.value(&dec_f, &ch_f);
                push(&mut rec, t, direct, m_f_acc, m_alpha, qv_f, qv_a, qcov, inc);
            }
        }
        if let Some(r) = rec {
            r.endpoint = x.clone();
        }
        Terminal { m_alpha, qcov }
    }
}

/// Runs `M^f` and `M^{α,f}` along one path. `M_0^{α,f} = P_T f(Z_0)`.
pub fn evolve_martingales(
    config: &WalkConfig,
    f: &LatticeFunction,
    alpha: &RieszCoefficients,
    path: &PathSample,
) -> Result<MartingalePair> {
    evolve_with_second(config, f, None, alpha, path)
}

/// As [`evolve_martingales`], also tracking `[M^f, M^g]`.
pub fn evolve_with_second(
    config: &WalkConfig,
    f: &LatticeFunction,
    g: Option<&LatticeFunction>,
    alpha: &RieszCoefficients,
    path: &PathSample,
) -> Result<MartingalePair> {
    let ev = Evolver::new(config, f, g, alpha)?;
    let mut pair = MartingalePair::default();
    ev.run(path, Some(&mut pair));
    Ok(pair)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubordinationReport {
    pub compliant: u64,
    pub total: u64,
}

impl SubordinationReport {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.compliant as f64 / self.total as f64
        }
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            compliant: self.compliant + other.compliant,
            total: self.total + other.total,
        }
    }
}

/// Checks `d[M^{α,f}] ≤ ‖A_α‖² d[M^f]` at every recorded increment.
pub fn check_subordination(
    pair: &MartingalePair,
    alpha: &RieszCoefficients,
) -> SubordinationReport {
    let a2 = alpha.matrix_norm().powi(2);
    let compliant = pair
        .increments
        .iter()
        .filter(|(da, df)| *da <= a2 * df + 1e-9 * (1.0 + df))
        .count() as u64;
    SubordinationReport {
        compliant,
        total: pair.increments.len() as u64,
    }
}

/// Subordination over `config.paths` paths.
pub fn subordination_compliance(
    config: &WalkConfig,
    f: &LatticeFunction,
    alpha: &RieszCoefficients,
) -> Result<SubordinationReport> {
    let ev = Evolver::new(config, f, None, alpha)?;
    let parts = chunked(config.paths, |range| {
        range.fold(
            SubordinationReport {
                compliant: 0,
                total: 0,
            },
            |acc, i| {
                let mut pair = MartingalePair::default();
                ev.run(&sample_path(config, i), Some(&mut pair));
                acc.merge(check_subordination(&pair, alpha))
            },
        )
    });
    Ok(parts.into_iter().fold(
        SubordinationReport {
            compliant: 0,
            total: 0,
        },
        SubordinationReport::merge,
    ))
}

/// Runs `f` over path-index chunks in parallel and returns results in chunk order.
fn chunked<A: Send>(paths: u64, f: impl Fn(Range<u64>) -> A + Sync) -> Vec<A> {
    let chunks = paths.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(paths)))
        .collect()
}

/// Running sums for a complex sample mean.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub sum: C64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, v: C64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v.norm_sqr();
    }

    pub fn merge(&mut self, o: &Self) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    pub fn mean(&self) -> C64 {
        if self.n == 0 {
            C64::new(f64::NAN, f64::NAN)
        } else {
            self.sum / self.n as f64
        }
    }

    /// Standard error of the mean, pooling real and imaginary parts.
    pub fn se(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        let n = self.n as f64;
        let var = (self.sum_sq - self.sum.norm_sqr() / n) / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadraticCovariationReport {
    pub monte_carlo: C64,
    pub se: f64,
    pub analytic: C64,
    pub residual: f64,
    pub within_3se: bool,
}

/// `E[M^f, M^g]_T` over the walk's law, in closed form. Mode `idx` contributes
/// `f̂ conj(ĝ) · rate · (1 − e^{−2λT}) / (2λ)` with jump rate
/// `Σ_i λ_J 4 sin²(πk_i/N_i)` and continuous rate `2 |2πq|²`.
pub fn analytic_quadratic_covariation(
    config: &WalkConfig,
    f: &LatticeFunction,
    g: &LatticeFunction,
) -> Result<C64> {
    if config.start != StartLaw::Uniform {
        return Err(Error::Unsupported(
            "closed form assumes a uniform start".into(),
        ));
    }
    let ff = ModalField::new(f)?;
    let gh = transform(g)?;
    let group = f.group();
    let fw = group.frequency_weight();
    let mut total = C64::new(0.0, 0.0);
    for m in &ff.modes {
        let mut idx = m.k.clone();
        idx.extend(
            m.w.iter()
                .zip(group.torus_resolutions())
                .map(|(w, &r)| ((w / (2.0 * PI)).round() as i64).rem_euclid(r as i64) as usize),
        );
        let gk = gh.values()[group.ravel(&idx)] * fw;
        let rate = config.jump_rate * m.lambda_x + 2.0 * m.w.iter().map(|w| w * w).sum::<f64>();
        let time = (1.0 - (-2.0 * m.lambda * config.horizon).exp()) / (2.0 * m.lambda);
        total += m.coef * gk.conj() * rate * time;
    }
    // With coefficients scaled by ∏1/N_i the sum is already the uniform expectation.
    Ok(total)
}

/// Monte Carlo `E[M^f, M^g]_T` against the closed form.
pub fn check_quadratic_covariation(
    config: &WalkConfig,
    f: &LatticeFunction,
    g: &LatticeFunction,
) -> Result<QuadraticCovariationReport> {
    let analytic = analytic_quadratic_covariation(config, f, g)?;
    let zero = RieszCoefficients::zero(config.group.m(), config.group.n());
    let ev = Evolver::new(config, f, Some(g), &zero)?;
    let parts = chunked(config.paths, |range| {
        let mut mo = Moments::default();
        for i in range {
            mo.push(ev.run(&sample_path(config, i), None).qcov);
        }
        mo
    });
    let mut mo = Moments::default();
    parts.iter().for_each(|p| mo.merge(p));
    let mc = mo.mean();
    let se = mo.se();
    let residual = (mc - analytic).norm();
    Ok(QuadraticCovariationReport {
        monte_carlo: mc,
        se,
        analytic,
        residual,
        within_3se: residual <= 3.0 * se,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RepresentationEstimate {
    /// `−E[M_T^{α,f} | Z_T = z]` per grid point.
    #[serde(skip)]
    pub estimate: LatticeFunction,
    pub se: Vec<f64>,
    pub counts: Vec<u64>,
}

impl RepresentationEstimate {
    pub fn empty_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c == 0).count()
    }

    /// `max_z (|estimate − reference| − max(3 se, floor))` over nonempty
    /// bins; nonpositive means every bin is within tolerance.
    pub fn worst_excess(&self, reference: &LatticeFunction, floor: f64) -> f64 {
        self.estimate
            .values()
            .iter()
            .zip(reference.values())
            .zip(self.se.iter().zip(&self.counts))
            .filter(|(_, (_, &c))| c > 0)
            .map(|((e, r), (se, _))| (e - r).norm() - (3.0 * se).max(floor))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Estimates `R_α² f` as `−E[M_T^{α,f} | Z_T = z]` with `Z_0` uniform, binning
/// by the terminal grid point. With the transform normalized so that `α = I`
/// reproduces `M^f`, the conditional expectation converges to `−R_α² f`.
pub fn estimate_representation(
    config: &WalkConfig,
    f: &LatticeFunction,
    alpha: &RieszCoefficients,
    bin_by_endpoint: bool,
) -> Result<RepresentationEstimate> {
    if !bin_by_endpoint {
        return Err(Error::Unsupported(
            "only endpoint binning is implemented".into(),
        ));
    }
    if config.group.n() != 0 {
        return Err(Error::Unsupported(
            "endpoint binning needs a fully discrete group".into(),
        ));
    }
    if config.start != StartLaw::Uniform {
        return Err(Error::param(
            "start",
            "representation needs a uniform start",
        ));
    }
    let ev = Evolver::new(config, f, None, alpha)?;
    let group = &config.group;
    let bins = group.len();
    let parts = chunked(config.paths, |range| {
        let mut acc = vec![Moments::default(); bins];
        for i in range {
            let path = sample_path(config, i);
            let mut end = path.x0.clone();
            for j in &path.jump_times {
                step_discrete(group, &mut end, j.axis, j.sign);
            }
            let term = ev.run(&path, None);
            acc[group.ravel(&end)].push(-term.m_alpha);
        }
        acc
    });
    let mut acc = vec![Moments::default(); bins];
    for part in &parts {
        acc.iter_mut().zip(part).for_each(|(a, p)| a.merge(p));
    }
    let values = acc
        .iter()
        .map(|m| {
            if m.n == 0 {
                C64::new(0.0, 0.0)
            } else {
                m.mean()
            }
        })
        .collect();
    Ok(RepresentationEstimate {
        estimate: LatticeFunction::new(group.clone(), values, Domain::Spatial)?,
        se: acc.iter().map(Moments::se).collect(),
        counts: acc.iter().map(|m| m.n).collect(),
    })
}

/// Exact `−E[M_T^{α,f} | Z_T = ·]` at finite `T` for a uniform start: mode
/// `idx` carries `−(e^{−2λT} − m_α (1 − e^{−2λT})) f̂`.
pub fn representation_oracle(
    f: &LatticeFunction,
    alpha: &RieszCoefficients,
    horizon: f64,
) -> Result<LatticeFunction> {
    let group = f.group();
    let table = multiplier_table(group, alpha)?;
    let sym = Symbols::new(group);
    let mut hat = transform(f)?;
    for (flat, v) in hat.values_mut().iter_mut().enumerate() {
        if flat == 0 {
            continue;
        }
        let lam = sym.eigenvalue(&group.unravel(flat));
        let e = (-2.0 * lam * horizon).exp();
        *v *= -(e - table[flat] * (1.0 - e));
    }
    inverse_transform(&hat)
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleCheck {
    pub times: Vec<f64>,
    pub means: Vec<C64>,
    pub ses: Vec<f64>,
    /// `P_T f(Z_0)` averaged over the start law.
    pub expected: C64,
    pub within_3se: bool,
}

/// Estimates `E[M_t^f]` at `checkpoints` evenly spaced times in `(0, T]`.
pub fn check_martingale_property(
    config: &WalkConfig,
    f: &LatticeFunction,
    checkpoints: usize,
) -> Result<MartingaleCheck> {
    if checkpoints == 0 {
        return Err(Error::param("checkpoints", "need at least one"));
    }
    let zero = RieszCoefficients::zero(config.group.m(), config.group.n());
    let ev = Evolver::new(config, f, None, &zero)?;
    let times: Vec<f64> = (1..=checkpoints)
        .map(|c| config.horizon * c as f64 / checkpoints as f64)
        .collect();
    let parts = chunked(config.paths, |range| {
        let mut acc = vec![Moments::default(); checkpoints];
        for i in range {
            let traj = sample_path(config, i).trajectory(config);
            let mut e = 0;
            for (c, &t) in times.iter().enumerate() {
                while e + 1 < traj.len() && traj[e + 1].0 <= t {
                    e += 1;
                }
                let (_, x, y) = &traj[e];
                acc[c].push(ev.f.value(&ev.f.decay(config.horizon - t), &ev.f.characters(x, y)));
            }
        }
        acc
    });
    let mut acc = vec![Moments::default(); checkpoints];
    for part in &parts {
        acc.iter_mut().zip(part).for_each(|(a, p)| a.merge(p));
    }
    let expected = match &config.start {
        StartLaw::Uniform => f.mean(),
        StartLaw::Fixed { x, y } => {
            ev.f.value(&ev.f.decay(config.horizon), &ev.f.characters(x, y))
        }
    };
    let means: Vec<C64> = acc.iter().map(Moments::mean).collect();
    let ses: Vec<f64> = acc.iter().map(Moments::se).collect();
    let within = means
        .iter()
        .zip(&ses)
        .all(|(m, s)| (m - expected).norm() <= 3.0 * s + 1e-12);
    Ok(MartingaleCheck {
        times,
        means,
        ses,
        expected,
        within_3se: within,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct JensenReport {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub holds: bool,
}

/// Compares `‖E[M_T^{α,f} | Z_T]‖_p` with `‖A_α‖(p*−1) ‖M_T^f‖_p`, both under
/// the uniform probability on the group.
pub fn check_jensen_chain(
    config: &WalkConfig,
    f: &LatticeFunction,
    alpha: &RieszCoefficients,
    p: f64,
) -> Result<JensenReport> {
    let cap = constants::sharp_lp_constant(p)? * alpha.matrix_norm();
    let est = estimate_representation(config, f, alpha, true)?;
    let bins = est.counts.len() as f64;
    let vals: Vec<f64> = est.estimate.values().iter().map(|v| v.norm()).collect();
    let lhs = (vals.iter().map(|v| v.powf(p)).sum::<f64>() / bins).powf(1.0 / p);
    let lhs_se = if lhs == 0.0 {
        0.0
    } else {
        let g = lhs.powf(1.0 - p) / bins;
        vals.iter()
            .zip(&est.se)
            .map(|(v, s)| (g * v.powf(p - 1.0) * s).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    // M_T^f = f(Z_T) is uniform under a uniform start.
    let mut mo = Moments::default();
    for (v, &c) in f.values().iter().zip(&est.counts) {
        let a = v.norm().powf(p);
        mo.n += c;
        mo.sum += C64::new(a * c as f64, 0.0);
        mo.sum_sq += a * a * c as f64;
    }
    let mean = mo.mean().re;
    let norm = mean.powf(1.0 / p);
    let rhs = cap * norm;
    let rhs_se = if mean == 0.0 {
        0.0
    } else {
        cap * norm / (p * mean) * mo.se()
    };
    let se = (lhs_se * lhs_se + rhs_se * rhs_se).sqrt();
    Ok(JensenReport {
        lhs,
        lhs_se,
        rhs,
        rhs_se,
        holds: lhs <= rhs + 3.0 * se + 1e-12,
    })
}
