//! Finite zigzag martingales, their terminal laminates and weak-type
//! lower-bound certificates.
//!
//! A pair `(F, G)` with `dG = ±dF` is stored in the rotated coordinates
//! `(𝙵, 𝙶) = ((F+G)/2, (F−G)/2)`: a `+1` step moves `𝙵` only (horizontal), a
//! `−1` step moves `𝙶` only (vertical).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants;
use crate::error::{Error, Result};
use crate::seed;

const TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Horizontal,
    Vertical,
}

impl Axis {
    pub fn from_sign(sign: i8) -> Result<Self> {
        match sign {
            1 => Ok(Self::Horizontal),
            -1 => Ok(Self::Vertical),
            s => Err(Error::InvalidInput(format!(
                "sign must be +1 or -1, got {s}"
            ))),
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Self::Horizontal => 1,
            Self::Vertical => -1,
        }
    }

    fn shift(self, pos: [f64; 2], d: f64) -> [f64; 2] {
        match self {
            Self::Horizontal => [pos[0] + d, pos[1]],
            Self::Vertical => [pos[0], pos[1] + d],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZigzagNode {
    pub pos: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Axis>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<ZigzagChild>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZigzagChild {
    pub p: f64,
    pub d: f64,
    pub node: ZigzagNode,
}

impl ZigzagNode {
    pub fn leaf(pos: [f64; 2]) -> Self {
        Self {
            pos,
            axis: None,
            children: Vec::new(),
        }
    }

    /// A node that splits along `axis` into `(p, d, subtree)` branches; the
    /// subtrees are re-rooted at their new positions.
    pub fn split(pos: [f64; 2], axis: Axis, branches: Vec<(f64, f64, ZigzagNode)>) -> Self {
        let children = branches
            .into_iter()
            .map(|(p, d, node)| ZigzagChild {
                p,
                d,
                node: node.translated_to(axis.shift(pos, d)),
            })
            .collect();
        Self {
            pos,
            axis: Some(axis),
            children,
        }
    }

    fn translated_to(mut self, pos: [f64; 2]) -> Self {
        let delta = [pos[0] - self.pos[0], pos[1] - self.pos[1]];
        self.shift_all(delta);
        self
    }

    fn shift_all(&mut self, delta: [f64; 2]) {
        self.pos = [self.pos[0] + delta[0], self.pos[1] + delta[1]];
        for c in &mut self.children {
            c.node.shift_all(delta);
        }
    }

    fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.is_leaf() {
            return Ok(());
        }
        let axis = self
            .axis
            .ok_or_else(|| Error::InvalidInput("inner node without a move axis".into()))?;
        let total: f64 = self.children.iter().map(|c| c.p).sum();
        let mean: f64 = self.children.iter().map(|c| c.p * c.d).sum();
        if self.children.iter().any(|c| !(c.p > 0.0)) || (total - 1.0).abs() > TOL {
            return Err(Error::InvalidInput(format!(
                "child probabilities must be positive and sum to 1 (sum {total})"
            )));
        }
        let scale = self.children.iter().map(|c| c.d.abs()).fold(1.0, f64::max);
        if mean.abs() > TOL * scale {
            return Err(Error::InvalidInput(format!(
                "mean displacement {mean:e} != 0"
            )));
        }
        for c in &self.children {
            let want = axis.shift(self.pos, c.d);
            if (want[0] - c.node.pos[0]).abs() > TOL * scale
                || (want[1] - c.node.pos[1]).abs() > TOL * scale
            {
                return Err(Error::InvalidInput(
                    "child position does not match its move".into(),
                ));
            }
            c.node.validate()?;
        }
        Ok(())
    }

    fn depth(&self) -> usize {
        self.children
            .iter()
            .map(|c| 1 + c.node.depth())
            .max()
            .unwrap_or(0)
    }

    fn leaves(&self, w: f64, out: &mut Vec<Atom>) {
        if self.is_leaf() {
            out.push(Atom {
                weight: w,
                x: self.pos[0],
                y: self.pos[1],
            });
        }
        for c in &self.children {
            c.node.leaves(w * c.p, out);
        }
    }

    /// Positions at depth `k`; branches that ended earlier keep their leaf.
    fn level(&self, k: usize, w: f64, out: &mut Vec<Atom>) {
        if k == 0 || self.is_leaf() {
            out.push(Atom {
                weight: w,
                x: self.pos[0],
                y: self.pos[1],
            });
            return;
        }
        for c in &self.children {
            c.node.level(k - 1, w * c.p, out);
        }
    }
}

/// A validated zigzag martingale tree rooted at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ZigzagNode", into = "ZigzagNode")]
pub struct ZigzagTree {
    root: ZigzagNode,
}

impl TryFrom<ZigzagNode> for ZigzagTree {
    type Error = Error;

    fn try_from(root: ZigzagNode) -> Result<Self> {
        Self::new(root)
    }
}

impl From<ZigzagTree> for ZigzagNode {
    fn from(t: ZigzagTree) -> Self {
        t.root
    }
}

impl ZigzagTree {
    pub fn new(root: ZigzagNode) -> Result<Self> {
        if root.pos != [0.0, 0.0] {
            return Err(Error::InvalidInput("tree must start at (0, 0)".into()));
        }
        root.validate()?;
        Ok(Self { root })
    }

    pub fn trivial() -> Self {
        Self {
            root: ZigzagNode::leaf([0.0, 0.0]),
        }
    }

    pub fn root(&self) -> &ZigzagNode {
        &self.root
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn laminate(&self) -> LaminateMeasure {
        let mut atoms = Vec::new();
        self.root.leaves(1.0, &mut atoms);
        LaminateMeasure { atoms }
    }

    /// Terminal `(weight, F, G)` with `F = 𝙵 + 𝙶`, `G = 𝙵 − 𝙶`.
    pub fn terminal_pairs(&self) -> Vec<(f64, f64, f64)> {
        self.laminate()
            .atoms
            .iter()
            .map(|a| (a.weight, a.x + a.y, a.x - a.y))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Compact encoding used for deterministic tie-breaks.
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("tree serializes")
    }

    /// The `F`-increment tree together with the per-node signs.
    pub fn to_transform_pair(&self) -> TransformTree {
        fn go(n: &ZigzagNode) -> TransformTree {
            TransformTree {
                sign: n.axis.map(Axis::sign),
                children: n
                    .children
                    .iter()
                    .map(|c| TransformBranch {
                        p: c.p,
                        df: c.d,
                        subtree: go(&c.node),
                    })
                    .collect(),
            }
        }
        go(&self.root)
    }
}

/// A martingale tree of `F`-increments. `sign` is the multiplier relating the
/// `G`-step to the `F`-step at this node, when it is fixed per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformTree {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<i8>,
    #[serde(default)]
    pub children: Vec<TransformBranch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformBranch {
    pub p: f64,
    pub df: f64,
    pub subtree: TransformTree,
}

impl TransformTree {
    pub fn leaf() -> Self {
        Self {
            sign: None,
            children: Vec::new(),
        }
    }

    /// `±step` with probability ½ each, followed by `next` on both branches.
    pub fn symmetric_step(step: f64, next: TransformTree) -> Self {
        Self {
            sign: None,
            children: vec![
                TransformBranch {
                    p: 0.5,
                    df: step,
                    subtree: next.clone(),
                },
                TransformBranch {
                    p: 0.5,
                    df: -step,
                    subtree: next,
                },
            ],
        }
    }
}

/// Builds the zigzag tree of `(F, G)`, `dG = signs[depth] · dF`.
pub fn from_transform_pair(increments: &TransformTree, signs: &[i8]) -> Result<ZigzagTree> {
    fn go(
        t: &TransformTree,
        signs: Option<&[i8]>,
        depth: usize,
        pos: [f64; 2],
    ) -> Result<ZigzagNode> {
        if t.children.is_empty() {
            return Ok(ZigzagNode::leaf(pos));
        }
        let total: f64 = t.children.iter().map(|c| c.p).sum();
        let mean: f64 = t.children.iter().map(|c| c.p * c.df).sum();
        let scale = t.children.iter().map(|c| c.df.abs()).fold(1.0, f64::max);
        if t.children.iter().any(|c| !(c.p > 0.0))
            || (total - 1.0).abs() > TOL
            || mean.abs() > TOL * scale
        {
            return Err(Error::InvalidInput(format!(
                "F-increments at depth {depth} are not a martingale step"
            )));
        }
        let sign = match signs {
            Some(s) => *s
                .get(depth)
                .ok_or_else(|| Error::InvalidInput(format!("no sign given for depth {depth}")))?,
            None => t
                .sign
                .ok_or_else(|| Error::InvalidInput("node without a sign".into()))?,
        };
        let axis = Axis::from_sign(sign)?;
        let children = t
            .children
            .iter()
            .map(|c| {
                let child = axis.shift(pos, c.df);
                Ok(ZigzagChild {
                    p: c.p,
                    d: c.df,
                    node: go(&c.subtree, signs, depth + 1, child)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ZigzagNode {
            pos,
            axis: Some(axis),
            children,
        })
    }
    ZigzagTree::new(go(increments, Some(signs), 0, [0.0, 0.0])?)
}

/// As [`from_transform_pair`] with the signs stored on the nodes.
pub fn from_signed_transform(increments: &TransformTree) -> Result<ZigzagTree> {
    fn go(t: &TransformTree, pos: [f64; 2]) -> Result<ZigzagNode> {
        if t.children.is_empty() {
            return Ok(ZigzagNode::leaf(pos));
        }
        let axis = Axis::from_sign(
            t.sign
                .ok_or_else(|| Error::InvalidInput("node without a sign".into()))?,
        )?;
        let children = t
            .children
            .iter()
            .map(|c| {
                Ok(ZigzagChild {
                    p: c.p,
                    d: c.df,
                    node: go(&c.subtree, axis.shift(pos, c.df))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ZigzagNode {
            pos,
            axis: Some(axis),
            children,
        })
    }
    ZigzagTree::new(go(increments, [0.0, 0.0])?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub weight: f64,
    pub x: f64,
    pub y: f64,
}

/// Finitely supported measure on diagonal matrices `diag(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaminateMeasure {
    pub atoms: Vec<Atom>,
}

impl LaminateMeasure {
    pub fn dirac(x: f64, y: f64) -> Self {
        Self {
            atoms: vec![Atom { weight: 1.0, x, y }],
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn barycenter(&self) -> [f64; 2] {
        self.atoms.iter().fold([0.0, 0.0], |acc, a| {
            [acc[0] + a.weight * a.x, acc[1] + a.weight * a.y]
        })
    }

    /// Atoms merged by position and sorted lexicographically.
    pub fn normalized(&self) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        let mut out: Vec<Atom> = Vec::new();
        for a in atoms {
            match out.last_mut() {
                Some(l) if l.x == a.x && l.y == a.y => l.weight += a.weight,
                _ => out.push(a),
            }
        }
        Self { atoms: out }
    }

    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.weight * f(a.x, a.y)).sum()
    }
}

/// `E(|G_∞| − λ)_+ − E Θ(|F_∞|)` by leaf enumeration.
pub fn eval_gap(tree: &ZigzagTree, lambda: f64, theta: impl Fn(f64) -> f64) -> f64 {
    tree.terminal_pairs()
        .iter()
        .map(|&(w, f, g)| w * ((g.abs() - lambda).max(0.0) - theta(f.abs())))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneReport {
    /// `E ζ(𝙵_k, 𝙶_k)` for `k = 0..=depth`.
    pub values: Vec<f64>,
    pub monotone: bool,
}

/// Checks that `k ↦ E ζ(𝙵_k, 𝙶_k)` is nondecreasing for biconvex `ζ`.
pub fn verify_biconvex_monotone(
    tree: &ZigzagTree,
    zeta: impl Fn(f64, f64) -> f64,
) -> MonotoneReport {
    let values: Vec<f64> = (0..=tree.depth())
        .map(|k| {
            let mut atoms = Vec::new();
            tree.root.level(k, 1.0, &mut atoms);
            atoms.iter().map(|a| a.weight * zeta(a.x, a.y)).sum()
        })
        .collect();
    let tol = |v: f64| TOL * (1.0 + v.abs());
    let monotone = values.windows(2).all(|w| w[1] >= w[0] - tol(w[0]))
        && values.last().copied().unwrap_or(0.0) >= zeta(0.0, 0.0) - tol(zeta(0.0, 0.0));
    MonotoneReport { values, monotone }
}

/// The built-in biconvex test family `(|x| − c)_+ + (|y| − c)_+`.
pub fn biconvex_hinge(c: f64) -> impl Fn(f64, f64) -> f64 {
    move |x, y| (x.abs() - c).max(0.0) + (y.abs() - c).max(0.0)
}

/// `(|x| − a)_+ · (|y| − b)_+`, a product of convex one-dimensional pieces.
pub fn biconvex_product(a: f64, b: f64) -> impl Fn(f64, f64) -> f64 {
    move |x, y| (x.abs() - a).max(0.0) * (y.abs() - b).max(0.0)
}

pub type Sym2 = [[f64; 2]; 2];

/// `∫ψ dν ≥ ψ(barycenter)` for one sampled rank-one convex `ψ`.
pub fn rank_one_convexity_spot_check(
    measure: &LaminateMeasure,
    psi: impl Fn(&Sym2) -> f64,
) -> bool {
    let diag = |x: f64, y: f64| [[x, 0.0], [0.0, y]];
    let lhs = measure.integrate(|x, y| psi(&diag(x, y)));
    let b = measure.barycenter();
    let rhs = psi(&diag(b[0], b[1]));
    lhs >= rhs - TOL * (1.0 + rhs.abs())
}

/// `A ↦ |A11 − A22|`, convex, hence rank-one convex.
pub fn psi_diagonal_gap(a: &Sym2) -> f64 {
    (a[0][0] - a[1][1]).abs()
}

/// `A ↦ c·det A + ⟨B, A⟩ + d`, rank-one affine.
pub fn psi_det_affine(c: f64, b: Sym2, d: f64) -> impl Fn(&Sym2) -> f64 {
    move |a| {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        c * det + b[0][0] * a[0][0] + b[0][1] * a[0][1] + b[1][0] * a[1][0] + b[1][1] * a[1][1] + d
    }
}

/// The largest `λ` with `eval_gap(tree, λ, t ↦ t^p) ≥ 0`. The gap is
/// piecewise linear and nonincreasing in `λ`; returns 0 if the gap at 0 is
/// not positive.
pub fn gap_threshold(tree: &ZigzagTree, p: f64) -> f64 {
    let pairs = tree.terminal_pairs();
    let cost: f64 = pairs.iter().map(|&(w, f, _)| w * f.abs().powf(p)).sum();
    let mut gs: Vec<(f64, f64)> = pairs.iter().map(|&(w, _, g)| (g.abs(), w)).collect();
    gs.sort_by(|a, b| b.0.total_cmp(&a.0));
    // On [g_{j+1}, g_j] the gap is Σ_{i≤j} w_i (g_i − λ) − cost.
    let (mut wsum, mut wg) = (0.0, 0.0);
    for (j, &(g, w)) in gs.iter().enumerate() {
        wsum += w;
        wg += w * g;
        let next = gs.get(j + 1).map_or(0.0, |x| x.0);
        let root = (wg - cost) / wsum;
        if root >= next && root <= g {
            return root.max(0.0);
        }
    }
    0.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub p: f64,
    /// Exact threshold of the tree.
    pub tree_lambda: f64,
    pub epsilon: f64,
    /// `λ − ε`, at which the gap was verified positive.
    pub certified_lambda: f64,
    pub gap: f64,
    /// Implied lower bound on the weak-type constant.
    pub bound: f64,
    pub ceiling: f64,
    pub tree: ZigzagTree,
}

impl Certificate {
    pub fn ratio_to_ceiling(&self) -> f64 {
        self.bound / self.ceiling
    }
}

fn check_certify_exponent(p: f64) -> Result<()> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::param(
            "p",
            format!("certificates need 1 < p <= 2, got {p}"),
        ));
    }
    Ok(())
}

/// Certifies `c_p ≥ invert_young(p, λ)` when the gap at `λ` is positive. At
/// `λ = 0` the bound is 0 and needs no witness.
pub fn certify_at(p: f64, tree: &ZigzagTree, lambda: f64) -> Result<(f64, f64)> {
    check_certify_exponent(p)?;
    if lambda < 0.0 {
        return Err(Error::param("lambda", "must be nonnegative"));
    }
    let gap = eval_gap(tree, lambda, |t| t.powf(p));
    if lambda == 0.0 {
        return Ok((0.0, gap));
    }
    if !(gap > 0.0) {
        return Err(Error::CertificateRefused(format!(
            "gap {gap:e} at lambda = {lambda} is not positive"
        )));
    }
    Ok((constants::invert_young(p, lambda)?, gap))
}

/// Certificate at `λ − ε`, where `λ` is the tree's exact threshold.
pub fn certify_weak_type_lower(p: f64, tree: &ZigzagTree, epsilon: f64) -> Result<Certificate> {
    check_certify_exponent(p)?;
    if !(epsilon >= 0.0) {
        return Err(Error::param("epsilon", "must be nonnegative"));
    }
    let lam = gap_threshold(tree, p);
    let at = (lam - epsilon).max(0.0);
    let (bound, gap) = certify_at(p, tree, at)?;
    Ok(Certificate {
        p,
        tree_lambda: lam,
        epsilon,
        certified_lambda: at,
        gap,
        bound,
        ceiling: constants::weak_type_constant(p)?,
        tree: tree.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub depth: usize,
    /// Lattice units per 1.
    pub q: usize,
    /// Box half-width in coordinate units.
    pub r: usize,
    /// Candidate trees to keep.
    pub beam: usize,
    pub epsilon: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            depth: 8,
            q: 8,
            r: 4,
            beam: 4,
            epsilon: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    /// Threshold of the dynamic program per depth `1..=depth`.
    pub dp_lambda: Vec<f64>,
    /// Certified candidates, best first.
    pub candidates: Vec<Certificate>,
}

impl SearchResult {
    pub fn best(&self) -> Option<&Certificate> {
        self.candidates.first()
    }
}

/// Value iteration for `sup E[(|G|−λ)_+ − |F|^p]` over zigzag trees on the
/// lattice `{j/q : |j| ≤ q r}²` with at most `depth` splits per path. One
/// split along a line is optimal at the upper concave envelope of the
/// current value function restricted to that line.
struct Lattice {
    q: usize,
    n: usize,
    half: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Choice {
    Stop,
    Pass,
    Split(Axis, usize, usize),
}

impl Lattice {
    fn new(q: usize, r: usize) -> Self {
        let half = q * r;
        Self {
            q,
            n: 2 * half + 1,
            half,
        }
    }

    fn coord(&self, i: usize) -> f64 {
        (i as f64 - self.half as f64) / self.q as f64
    }

    fn at(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    fn payoff(&self, p: f64, lambda: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                let (x, y) = (self.coord(i), self.coord(j));
                v[self.at(i, j)] = ((x - y).abs() - lambda).max(0.0) - (x + y).abs().powf(p);
            }
        }
        v
    }

    /// Upper concave envelope of `u` on one line: per point, the envelope
    /// value and the hull segment `(a, b)` containing it.
    fn envelope(u: &[f64]) -> Vec<(f64, usize, usize)> {
        let mut hull: Vec<usize> = Vec::with_capacity(u.len());
        for i in 0..u.len() {
            while hull.len() >= 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                // Drop b if it lies on or below the chord a–i.
                let lhs = (u[b] - u[a]) * (i - a) as f64;
                let rhs = (u[i] - u[a]) * (b - a) as f64;
                if lhs <= rhs {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(i);
        }
        let mut out = Vec::with_capacity(u.len());
        let mut s = 0;
        for i in 0..u.len() {
            while s + 1 < hull.len() && hull[s + 1] <= i {
                s += 1;
            }
            if hull[s] == i || s + 1 >= hull.len() {
                out.push((u[i], i, i));
            } else {
                let (a, b) = (hull[s], hull[s + 1]);
                let t = (i - a) as f64 / (b - a) as f64;
                out.push(((1.0 - t) * u[a] + t * u[b], a, b));
            }
        }
        out
    }

    /// Value functions `U_0..=U_depth` and the choices behind them.
    fn solve(&self, p: f64, lambda: f64, depth: usize) -> (Vec<Vec<f64>>, Vec<Vec<Choice>>) {
        let v = self.payoff(p, lambda);
        let n = self.n;
        let mut values = vec![v.clone()];
        let mut choices = vec![vec![Choice::Stop; n * n]];
        for _ in 0..depth {
            let prev = values.last().expect("nonempty");
            let mut next = prev.clone();
            let mut choice: Vec<Choice> = (0..n * n)
                .map(|k| {
                    if prev[k] > v[k] {
                        Choice::Pass
                    } else {
                        Choice::Stop
                    }
                })
                .collect();
            for j in 0..n {
                let line: Vec<f64> = (0..n).map(|i| prev[self.at(i, j)]).collect();
                for (i, (e, a, b)) in Self::envelope(&line).into_iter().enumerate() {
                    let k = self.at(i, j);
                    if a != b && e > next[k] {
                        next[k] = e;
                        choice[k] = Choice::Split(Axis::Horizontal, a, b);
                    }
                }
            }
            for i in 0..n {
                let line: Vec<f64> = (0..n).map(|j| prev[self.at(i, j)]).collect();
                for (j, (e, a, b)) in Self::envelope(&line).into_iter().enumerate() {
                    let k = self.at(i, j);
                    if a != b && e > next[k] {
                        next[k] = e;
                        choice[k] = Choice::Split(Axis::Vertical, a, b);
                    }
                }
            }
            values.push(next);
            choices.push(choice);
        }
        (values, choices)
    }

    fn extract(&self, choices: &[Vec<Choice>], k: usize, i: usize, j: usize) -> ZigzagNode {
        let pos = [self.coord(i), self.coord(j)];
        if k == 0 {
            return ZigzagNode::leaf(pos);
        }
        match choices[k][self.at(i, j)] {
            Choice::Stop => ZigzagNode::leaf(pos),
            Choice::Pass => self.extract(choices, k - 1, i, j),
            Choice::Split(axis, a, b) => {
                let c = match axis {
                    Axis::Horizontal => i,
                    Axis::Vertical => j,
                };
                let w_b = (c - a) as f64 / (b - a) as f64;
                let w_a = (b - c) as f64 / (b - a) as f64;
                let (na, nb) = match axis {
                    Axis::Horizontal => ((a, j), (b, j)),
                    Axis::Vertical => ((i, a), (i, b)),
                };
                let da = (a as f64 - c as f64) / self.q as f64;
                let db = (b as f64 - c as f64) / self.q as f64;
                ZigzagNode {
                    pos,
                    axis: Some(axis),
                    children: vec![
                        ZigzagChild {
                            p: w_b,
                            d: db,
                            node: self.extract(choices, k - 1, nb.0, nb.1),
                        },
                        ZigzagChild {
                            p: w_a,
                            d: da,
                            node: self.extract(choices, k - 1, na.0, na.1),
                        },
                    ],
                }
            }
        }
    }

    fn root_value(&self, p: f64, lambda: f64, depth: usize) -> f64 {
        let (values, _) = self.solve(p, lambda, depth);
        values[depth][self.at(self.half, self.half)]
    }
}

/// Largest `λ` (to bisection accuracy) at which the lattice program at
/// `depth` has a positive root value.
fn dp_threshold(lat: &Lattice, p: f64, depth: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, 2.0 * lat.coord(lat.n - 1));
    if lat.root_value(p, 0.0, depth) <= 0.0 {
        return 0.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if lat.root_value(p, mid, depth) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Searches for gap-positive trees at every depth up to `params.depth`,
/// certifies each exactly and keeps the best `params.beam`. Ties break on the
/// tree encoding.
pub fn search_witness(p: f64, params: &SearchParams) -> Result<SearchResult> {
    check_certify_exponent(p)?;
    if params.q == 0 || params.r == 0 || params.depth == 0 || params.beam == 0 {
        return Err(Error::param(
            "search",
            "depth, q, r and beam must be positive",
        ));
    }
    if params.q * params.r > 4096 {
        return Err(Error::param("search", "lattice too large"));
    }
    let lat = Lattice::new(params.q, params.r);
    let per_depth: Vec<(f64, Option<Certificate>)> = (1..=params.depth)
        .into_par_iter()
        .map(|d| {
            let lam = dp_threshold(&lat, p, d);
            if lam <= 0.0 {
                return (lam, None);
            }
            let (_, choices) = lat.solve(p, lam, d);
            let root = lat.extract(&choices, d, lat.half, lat.half);
            let cert = ZigzagTree::new(root)
                .ok()
                .and_then(|t| certify_weak_type_lower(p, &t, params.epsilon).ok())
                .filter(|c| c.bound > 0.0);
            (lam, cert)
        })
        .collect();
    let dp_lambda = per_depth.iter().map(|(l, _)| *l).collect();
    let mut candidates: Vec<Certificate> = per_depth.into_iter().filter_map(|(_, c)| c).collect();
    candidates.sort_by(|a, b| {
        b.bound
            .total_cmp(&a.bound)
            .then_with(|| a.tree.encode().cmp(&b.tree.encode()))
    });
    candidates.dedup_by(|a, b| a.tree == b.tree);
    candidates.truncate(params.beam);
    Ok(SearchResult {
        dp_lambda,
        candidates,
    })
}

/// A random valid tree: each node stops with probability `1/4` (never at the
/// root) or splits along a random axis into two dyadic displacements.
pub fn random_tree(seed_value: u64, max_depth: usize) -> ZigzagTree {
    fn grow(rng: &mut impl Rng, pos: [f64; 2], left: usize, root: bool) -> ZigzagNode {
        if left == 0 || (!root && rng.random_bool(0.25)) {
            return ZigzagNode::leaf(pos);
        }
        let axis = if rng.random::<bool>() {
            Axis::Horizontal
        } else {
            Axis::Vertical
        };
        let a = rng.random_range(1..=16) as f64 / 8.0;
        let b = rng.random_range(1..=16) as f64 / 8.0;
        let (pa, pb) = (b / (a + b), a / (a + b));
        let ca = grow(rng, axis.shift(pos, a), left - 1, false);
        let cb = grow(rng, axis.shift(pos, -b), left - 1, false);
        ZigzagNode {
            pos,
            axis: Some(axis),
            children: vec![
                ZigzagChild {
                    p: pa,
                    d: a,
                    node: ca,
                },
                ZigzagChild {
                    p: pb,
                    d: -b,
                    node: cb,
                },
            ],
        }
    }
    let mut rng = seed::rng(seed_value, "zigzag", 0);
    ZigzagTree::new(grow(&mut rng, [0.0, 0.0], max_depth, true)).expect("valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_step(sign: i8) -> ZigzagTree {
        from_transform_pair(
            &TransformTree::symmetric_step(1.0, TransformTree::leaf()),
            &[sign],
        )
        .unwrap()
    }

    #[test]
    fn transform_pair_examples() {
        let h = one_step(1).laminate().normalized();
        assert_eq!(
            h.atoms,
            vec![
                Atom {
                    weight: 0.5,
                    x: -1.0,
                    y: 0.0
                },
                Atom {
                    weight: 0.5,
                    x: 1.0,
                    y: 0.0
                }
            ]
        );
        let v = one_step(-1).laminate().normalized();
        assert_eq!(
            v.atoms,
            vec![
                Atom {
                    weight: 0.5,
                    x: 0.0,
                    y: -1.0
                },
                Atom {
                    weight: 0.5,
                    x: 0.0,
                    y: 1.0
                }
            ]
        );
        let two = TransformTree::symmetric_step(
            1.0,
            TransformTree::symmetric_step(1.0, TransformTree::leaf()),
        );
        let t = from_transform_pair(&two, &[1, -1]).unwrap();
        let lam = t.laminate().normalized();
        assert_eq!(lam.atoms.len(), 4);
        assert!(lam
            .atoms
            .iter()
            .all(|a| a.weight == 0.25 && a.x.abs() == 1.0 && a.y.abs() == 1.0));
        assert_eq!(lam.barycenter(), [0.0, 0.0]);
    }

    #[test]
    fn transform_pair_errors() {
        let bad = TransformTree {
            sign: None,
            children: vec![
                TransformBranch {
                    p: 0.5,
                    df: 1.0,
                    subtree: TransformTree::leaf(),
                },
                TransformBranch {
                    p: 0.5,
                    df: -0.5,
                    subtree: TransformTree::leaf(),
                },
            ],
        };
        assert!(matches!(
            from_transform_pair(&bad, &[1]),
            Err(Error::InvalidInput(_))
        ));
        let ok = TransformTree::symmetric_step(1.0, TransformTree::leaf());
        assert!(from_transform_pair(&ok, &[0]).is_err());
        assert!(from_transform_pair(&ok, &[]).is_err());
    }

    #[test]
    fn terminal_pairs_recover_f_and_g() {
        // sign +1: G = F.
        let pairs = one_step(1).terminal_pairs();
        assert!(pairs.iter().all(|&(_, f, g)| f == g && f.abs() == 1.0));
        let pairs = one_step(-1).terminal_pairs();
        assert!(pairs.iter().all(|&(_, f, g)| f == -g && f.abs() == 1.0));
    }

    #[test]
    fn round_trip_through_signed_transform() {
        for s in 0..20 {
            let t = random_tree(s, 5);
            let back = from_signed_transform(&t.to_transform_pair()).unwrap();
            assert_eq!(back.laminate().normalized(), t.laminate().normalized());
            assert_eq!(back, t);
        }
    }

    #[test]
    fn gap_examples() {
        let trivial = ZigzagTree::trivial();
        for lam in [0.0, 0.5, 3.0] {
            assert_eq!(eval_gap(&trivial, lam, |t| t.powf(1.5)), 0.0);
        }
        assert_eq!(eval_gap(&one_step(1), 0.0, |t| t.powf(1.5)), 0.0);
    }

    #[test]
    fn gap_threshold_is_exact_root() {
        for s in 0..30 {
            let t = random_tree(s, 4);
            let lam = gap_threshold(&t, 1.5);
            if lam > 0.0 {
                let g = eval_gap(&t, lam, |x| x.powf(1.5));
                assert!(g.abs() < 1e-12, "gap at root {g}");
                assert!(eval_gap(&t, lam * (1.0 - 1e-6), |x| x.powf(1.5)) > 0.0);
            }
        }
    }

    #[test]
    fn biconvex_examples() {
        let t = random_tree(7, 4);
        assert!(verify_biconvex_monotone(&t, |x, y| x * x + y * y).monotone);
        assert!(verify_biconvex_monotone(&t, biconvex_hinge(1.0)).monotone);
        assert!(verify_biconvex_monotone(&t, biconvex_product(0.5, 0.25)).monotone);
        // |x| is flat along vertical-only moves.
        let r = verify_biconvex_monotone(&one_step(-1), |x, _| x.abs());
        assert_eq!(r.values, vec![0.0, 0.0]);
        let r = verify_biconvex_monotone(&one_step(1), |x, _| x.abs());
        assert_eq!(r.values, vec![0.0, 1.0]);
    }

    #[test]
    fn laminate_spot_checks() {
        let dirac = LaminateMeasure::dirac(0.0, 0.0);
        assert!(rank_one_convexity_spot_check(&dirac, psi_diagonal_gap));
        let two = TransformTree::symmetric_step(
            1.0,
            TransformTree::symmetric_step(1.0, TransformTree::leaf()),
        );
        let nu = from_transform_pair(&two, &[1, -1]).unwrap().laminate();
        let lhs = nu.integrate(|x, y| (x - y).abs());
        assert!(lhs > 0.0);
        assert!(rank_one_convexity_spot_check(&nu, psi_diagonal_gap));
        let aff = psi_det_affine(3.0, [[1.0, 0.0], [0.0, -2.0]], 0.5);
        assert!(rank_one_convexity_spot_check(&nu, &aff));
        let t = random_tree(3, 6).laminate();
        let lhs = t.integrate(|x, y| aff(&[[x, 0.0], [0.0, y]]));
        let b = t.barycenter();
        assert!((lhs - aff(&[[b[0], 0.0], [0.0, b[1]]])).abs() < 1e-12);
    }

    #[test]
    fn certificate_examples() {
        let t = one_step(1);
        let (b, _) = certify_at(1.5, &t, 0.0).unwrap();
        assert_eq!(b, 0.0);
        assert!(matches!(
            certify_at(1.5, &t, 0.1),
            Err(Error::CertificateRefused(_))
        ));
        assert!(certify_at(2.5, &t, 0.1).is_err());
        let lam2 = constants::weak_type_threshold(2.0).unwrap();
        assert!((constants::invert_young(2.0, lam2).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn depth_one_witness() {
        // F = ±1 fair step with G = F; pay (1 − λ) against 1, so no gain at
        // depth one. Lopsided splits along the G axis do better.
        let lat = Lattice::new(8, 4);
        let lam = dp_threshold(&lat, 1.5, 1);
        assert!(lam > 0.0 && lam < constants::weak_type_threshold(1.5).unwrap());
    }

    #[test]
    fn envelope_is_concave_majorant() {
        let u = [0.0, -1.0, 2.0, 0.5, 0.5, 3.0, -2.0];
        let env = Lattice::envelope(&u);
        for (i, &(e, a, b)) in env.iter().enumerate() {
            assert!(e >= u[i] - 1e-15);
            assert!(a <= i && i <= b);
        }
        assert_eq!(env[1].0, 1.0);
        assert_eq!(env[2], (2.0, 2, 2));
        assert_eq!(env[6], (-2.0, 6, 6));
    }

    #[test]
    fn search_finds_certified_tree() {
        let params = SearchParams {
            depth: 3,
            beam: 2,
            ..SearchParams::default()
        };
        let r = search_witness(1.5, &params).unwrap();
        let best = r.best().expect("a certificate");
        assert!(best.bound > 0.0 && best.bound <= best.ceiling * (1.0 + 1e-9));
        assert!(best.gap > 0.0);
        assert!(r.dp_lambda.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        let again = search_witness(1.5, &params).unwrap();
        assert_eq!(again.best().unwrap().tree, best.tree);
    }

    #[test]
    fn json_round_trip() {
        let t = random_tree(5, 4);
        let text = t.to_json().unwrap();
        assert_eq!(ZigzagTree::from_json(&text).unwrap(), t);
        assert!(ZigzagTree::from_json(r#"{"pos":[1.0,0.0]}"#).is_err());
    }
}
