//! One function per command; each returns its summary, tables and gates.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use rand::Rng;
use riesz_lab::constants::{self, sharp_lp_constant};
use riesz_lab::fd_transfer::{
    consistency_order, ratio_convergence_study, weak_type_set_transfer, LevelSpec, SmoothFn,
};
use riesz_lab::martingale_mc::{
    check_martingale_property, check_quadratic_covariation, estimate_representation,
    evolve_martingales, sample_path, subordination_compliance, WalkConfig,
};
use riesz_lab::norm_probe::{
    check_exp_estimate, check_log_estimate, mixed_norm_ratio, power_iterate_lp,
    weak_type_lower_bound,
};
use riesz_lab::spectral_ops::apply_riesz2;
use riesz_lab::zigzag_laminate::{
    certify_weak_type_lower, search_witness, Certificate, SearchParams, ZigzagTree,
};
use riesz_lab::{seed, GroupSpec, LatticeFunction, RieszCoefficients};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    default_alpha, parse_alpha, parse_complex, parse_group, Command, Format, ProbeMode, RunConfig,
    Study,
};
use crate::error::CliError;
use crate::output::{csv_bytes, Gate, RunOutput};

const MAX_TRACE_PATHS: usize = 1000;

pub fn dispatch(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    match cfg.command() {
        Command::Constants => constants_cmd(cfg),
        Command::Probe => probe_cmd(cfg),
        Command::Mc => mc_cmd(cfg),
        Command::Zigzag => zigzag_cmd(cfg),
        Command::Fd => fd_cmd(cfg),
        Command::Report => report_cmd(cfg),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn ps(cfg: &RunConfig, default: f64) -> Vec<f64> {
    cfg.p.clone().unwrap_or_else(|| vec![default])
}

fn format(cfg: &RunConfig) -> Format {
    cfg.format.unwrap_or(Format::Csv)
}

fn read_function(path: &str) -> Result<LatticeFunction, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Io(format!("f: {path}: {e}")))?;
    LatticeFunction::read_binary(BufReader::new(file)).map_err(|e| match e {
        riesz_lab::Error::Io(e) => CliError::Io(format!("f: {path}: {e}")),
        other => CliError::Config(format!("f: {path}: {other}")),
    })
}

/// Group and input function: the file fixes the group unless `--group` is
/// also given, in which case the two must agree.
fn group_and_function(
    cfg: &RunConfig,
    default_group: &str,
    label: &str,
) -> Result<(GroupSpec, Option<LatticeFunction>), CliError> {
    let file = cfg.f.as_deref().map(read_function).transpose()?;
    let group = match (&cfg.group, &file) {
        (Some(g), Some(f)) => {
            let g = parse_group(g)?;
            if &g != f.group() {
                return Err(CliError::Config(format!(
                    "group: {label} file is on {}, --group says {g}",
                    f.group()
                )));
            }
            g
        }
        (Some(g), None) => parse_group(g)?,
        (None, Some(f)) => f.group().clone(),
        (None, None) => parse_group(default_group)?,
    };
    Ok((group, file))
}

fn alpha_for(cfg: &RunConfig, group: &GroupSpec) -> Result<RieszCoefficients, CliError> {
    match &cfg.alpha {
        Some(a) => parse_alpha(a, group),
        None => Ok(default_alpha(group)),
    }
}

#[derive(Serialize)]
struct ConstantRow {
    p: f64,
    q: Option<f64>,
    name: &'static str,
    value: f64,
}

fn constants_cmd(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let ts = cfg.q.clone().unwrap_or_default();
    let rows = constants::report(&ps(cfg, 2.0), &ts)?;
    let mut out = RunOutput::new(json!({ "rows": rows.len() }));
    match format(cfg) {
        Format::Json => out.json("constants.json", to_value(&rows)),
        Format::Csv => {
            let table = rows.iter().map(|r| ConstantRow {
                p: r.p,
                q: r.q,
                name: r.name.as_str(),
                value: r.value,
            });
            out.csv("constants.csv", csv_bytes(table)?);
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct TraceRow {
    p: f64,
    step: usize,
    bound: f64,
}

#[derive(Serialize)]
struct EstimateRow {
    mode: &'static str,
    p: Option<f64>,
    q: Option<f64>,
    k: Option<f64>,
    lhs: f64,
    rhs: f64,
    slack: f64,
    holds: Option<bool>,
}

fn probe_cmd(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let (group, file) = group_and_function(cfg, "8,8", "f")?;
    let alpha = alpha_for(cfg, &group)?;
    let root = cfg.seed();
    let f =
        file.unwrap_or_else(|| LatticeFunction::random(&group, seed::derive(root, "probe.f", 0)));
    let iters = cfg.iters.unwrap_or(50);
    let mode = cfg.mode.unwrap_or(ProbeMode::Lp);
    let norm = alpha.matrix_norm();
    let mut out = RunOutput::new(Value::Null);
    let mut summary = Vec::new();
    match mode {
        ProbeMode::Lp | ProbeMode::Weak => {
            let mut trace = Vec::new();
            for p in ps(cfg, 2.0) {
                let r = power_iterate_lp(&alpha, p, &f, iters)?;
                trace.extend(r.bound_sequence.iter().enumerate().map(|(i, &b)| TraceRow {
                    p,
                    step: i + 1,
                    bound: b,
                }));
                if mode == ProbeMode::Lp {
                    out.gate(Gate::new(
                        &format!("lp_ceiling(p={p})"),
                        r.satisfied,
                        format!("bound {} vs ceiling {}", r.bound(), r.theorem_cap),
                    ));
                    summary.push(json!({ "p": p, "result": to_value(&r) }));
                } else {
                    let w = weak_type_lower_bound(&alpha, p, &r.witness)?;
                    out.gate(Gate::new(
                        &format!("weak_type_ceiling(p={p})"),
                        w.satisfied,
                        format!("bound {} vs ceiling {}", w.bound(), w.theorem_cap),
                    ));
                    summary.push(
                        json!({ "p": p, "result": to_value(&w), "witness_lp_bound": r.bound() }),
                    );
                }
            }
            out.csv("trace.csv", csv_bytes(trace)?);
        }
        ProbeMode::Log | ProbeMode::Exp => {
            let density = cfg.density.unwrap_or(0.25);
            let mut rng = seed::rng(root, "probe.set", 0);
            let e: Vec<bool> = (0..group.len())
                .map(|_| rng.random::<f64>() < density)
                .collect();
            let bounded = f.scale(1.0 / f.sup_norm().max(f64::MIN_POSITIVE));
            let mut rows = Vec::new();
            for k in cfg.k.clone().unwrap_or_else(|| vec![2.0]) {
                let (name, c) = if mode == ProbeMode::Log {
                    ("log", check_log_estimate(&alpha, &f, &e, k)?)
                } else {
                    ("exp", check_exp_estimate(&alpha, &bounded, k)?)
                };
                out.gate(Gate::new(
                    &format!("{name}_estimate(K={k})"),
                    c.holds,
                    format!("slack {}", c.slack),
                ));
                rows.push(EstimateRow {
                    mode: name,
                    p: None,
                    q: None,
                    k: Some(k),
                    lhs: c.lhs,
                    rhs: c.rhs,
                    slack: c.slack,
                    holds: Some(c.holds),
                });
            }
            summary.push(to_value(
                &rows
                    .iter()
                    .map(|r| json!({"K": r.k, "lhs": r.lhs, "rhs": r.rhs, "slack": r.slack}))
                    .collect::<Vec<_>>(),
            ));
            out.csv("estimates.csv", csv_bytes(rows)?);
        }
        ProbeMode::Mixed => {
            let density = cfg.density.unwrap_or(0.25);
            let mut rng = seed::rng(root, "probe.set", 0);
            let e: Vec<bool> = (0..group.len())
                .map(|_| rng.random::<f64>() < density)
                .collect();
            let mut rows = Vec::new();
            for p in ps(cfg, 2.0) {
                for &q in cfg.q.as_deref().unwrap_or(&[]) {
                    let r = mixed_norm_ratio(&alpha, &f, &e, p, q)?;
                    rows.push(EstimateRow {
                        mode: "mixed",
                        p: Some(p),
                        q: Some(q),
                        k: None,
                        lhs: r,
                        rhs: f64::NAN,
                        slack: f64::NAN,
                        holds: None,
                    });
                    summary.push(json!({ "p": p, "q": q, "ratio": r }));
                }
            }
            out.csv("estimates.csv", csv_bytes(rows)?);
        }
    }
    out.summary = json!({
        "group": group.header(),
        "alpha_norm": norm,
        "mode": mode,
        "results": summary,
    });
    Ok(out)
}

#[derive(Serialize)]
struct BinRow {
    bin: String,
    count: u64,
    estimate_re: f64,
    estimate_im: f64,
    spectral_re: f64,
    spectral_im: f64,
    se: f64,
}

#[derive(Serialize)]
struct PathRow {
    path: u64,
    time: f64,
    m_f_re: f64,
    m_f_im: f64,
    m_alpha_re: f64,
    m_alpha_im: f64,
    qv_f: f64,
    qv_alpha: f64,
}

fn spectral_gap(group: &GroupSpec) -> f64 {
    let d = group
        .discrete_cycles()
        .iter()
        .map(|&n| 4.0 * (std::f64::consts::PI / n as f64).sin().powi(2));
    let t = group
        .torus_resolutions()
        .iter()
        .map(|_| 4.0 * std::f64::consts::PI.powi(2));
    d.chain(t).fold(f64::INFINITY, f64::min)
}

fn mc_cmd(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let (group, file) = group_and_function(cfg, "4,4", "f")?;
    let alpha = alpha_for(cfg, &group)?;
    let root = cfg.seed();
    let f = match file {
        Some(f) => f,
        None => {
            LatticeFunction::random_real(&group, seed::derive(root, "mc.f", 0)).mean_zero_project()
        }
    };
    let horizon = cfg.horizon.unwrap_or(4.0);
    let dt = cfg.dt.unwrap_or(if group.n() == 0 {
        horizon
    } else {
        horizon / 80.0
    });
    let paths = cfg.paths.unwrap_or(100_000);
    let config = WalkConfig::new(group.clone(), horizon, dt, root, paths)?;
    let mut out = RunOutput::new(Value::Null);

    // Validates f (mean zero, group) before any path is simulated.
    evolve_martingales(&config, &f, &alpha, &sample_path(&config, 0))?;

    let sub = subordination_compliance(&config, &f, &alpha)?;
    out.gate(Gate::new(
        "subordination",
        sub.compliant == sub.total,
        format!("{}/{} increments compliant", sub.compliant, sub.total),
    ));

    let mut representation = Value::Null;
    if group.n() == 0 {
        let est = estimate_representation(&config, &f, &alpha, true)?;
        let spectral = apply_riesz2(&alpha, &f)?;
        let floor = (-spectral_gap(&group) * horizon).exp() * f.lp_norm(2.0)?;
        let excess = est.worst_excess(&spectral, floor);
        out.gate(Gate::new(
            "representation",
            excess <= 0.0 && est.empty_bins() == 0,
            format!(
                "worst excess {excess:e} over max(3se, {floor:e}); {} empty bins",
                est.empty_bins()
            ),
        ));
        let rows: Vec<BinRow> = (0..group.len())
            .map(|b| {
                let e = est.estimate.values()[b];
                let s = spectral.values()[b];
                let idx: Vec<String> = group.unravel(b).iter().map(|i| i.to_string()).collect();
                BinRow {
                    bin: idx.join(" "),
                    count: est.counts[b],
                    estimate_re: e.re,
                    estimate_im: e.im,
                    spectral_re: s.re,
                    spectral_im: s.im,
                    se: est.se[b],
                }
            })
            .collect();
        out.csv("representation.csv", csv_bytes(rows)?);
        representation =
            json!({ "worst_excess": excess, "floor": floor, "empty_bins": est.empty_bins() });
    }

    let mart = check_martingale_property(&config, &f, 10)?;
    let qv = check_quadratic_covariation(&config, &f, &f)?;

    let trace = cfg.trace.unwrap_or(0).min(MAX_TRACE_PATHS) as u64;
    if trace > 0 {
        let mut rows = Vec::new();
        for i in 0..trace.min(paths) {
            let pair = evolve_martingales(&config, &f, &alpha, &sample_path(&config, i))?;
            for k in 0..pair.times.len() {
                rows.push(PathRow {
                    path: i,
                    time: pair.times[k],
                    m_f_re: pair.m_f[k].re,
                    m_f_im: pair.m_f[k].im,
                    m_alpha_re: pair.m_alpha[k].re,
                    m_alpha_im: pair.m_alpha[k].im,
                    qv_f: pair.qv_f[k],
                    qv_alpha: pair.qv_alpha[k],
                });
            }
        }
        out.csv("paths.csv", csv_bytes(rows)?);
    }

    out.summary = json!({
        "group": group.header(),
        "alpha_norm": alpha.matrix_norm(),
        "T": horizon,
        "dt": dt,
        "paths": paths,
        "subordination": to_value(&sub),
        "representation": representation,
        "martingale": {
            "expected": [mart.expected.re, mart.expected.im],
            "within_3se": mart.within_3se,
        },
        "quadratic_variation": to_value(&qv),
    });
    Ok(out)
}

fn certificate_gate(out: &mut RunOutput, c: &Certificate) {
    out.gate(Gate::new(
        "weak_type_certificate",
        c.gap > 0.0 && c.bound <= c.ceiling * (1.0 + 1e-12),
        format!(
            "bound {} vs ceiling {}, gap {:e}",
            c.bound, c.ceiling, c.gap
        ),
    ));
}

fn zigzag_cmd(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let p = *ps(cfg, 1.5).first().expect("nonempty");
    let defaults = SearchParams::default();
    let params = SearchParams {
        depth: cfg.depth.unwrap_or(defaults.depth),
        q: cfg.resolution.unwrap_or(defaults.q),
        r: cfg.radius.unwrap_or(defaults.r),
        beam: cfg.beam.unwrap_or(defaults.beam),
        epsilon: cfg.epsilon.unwrap_or(defaults.epsilon),
    };
    let mut out = RunOutput::new(Value::Null);
    if cfg.search == Some(true) {
        let res = search_witness(p, &params)?;
        let best = res
            .best()
            .ok_or_else(|| CliError::Violation("search found no certified tree".into()))?;
        certificate_gate(&mut out, best);
        out.json("tree.json", to_value(&best.tree));
        out.summary = json!({
            "p": p,
            "params": to_value(&params),
            "dp_lambda": res.dp_lambda,
            "best": certificate_summary(best),
            "candidates": res.candidates.iter().map(certificate_summary).collect::<Vec<_>>(),
        });
    } else {
        let path = cfg.tree.as_ref().expect("validated");
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("tree: {}: {e}", path.display())))?;
        let tree =
            ZigzagTree::from_json(&text).map_err(|e| CliError::Config(format!("tree: {e}")))?;
        let c = certify_weak_type_lower(p, &tree, params.epsilon)?;
        certificate_gate(&mut out, &c);
        out.summary = json!({ "p": p, "certificate": certificate_summary(&c) });
    }
    Ok(out)
}

fn certificate_summary(c: &Certificate) -> Value {
    json!({
        "depth": c.tree.depth(),
        "tree_lambda": c.tree_lambda,
        "certified_lambda": c.certified_lambda,
        "gap": c.gap,
        "bound": c.bound,
        "ceiling": c.ceiling,
        "ratio_to_ceiling": c.ratio_to_ceiling(),
    })
}

/// `name:a,b;c` with positional parameters.
fn parse_smooth(spec: &str, dim: Option<usize>) -> Result<(SmoothFn, usize), CliError> {
    let (name, args) = spec.split_once(':').unwrap_or((spec, ""));
    let groups: Vec<Vec<f64>> = args
        .split(';')
        .map(|g| {
            g.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    parse_complex(s)
                        .filter(|c| c.im == 0.0)
                        .map(|c| c.re)
                        .ok_or_else(|| CliError::Config(format!("f: cannot parse `{s}`")))
                })
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let first = groups.first().cloned().unwrap_or_default();
    let scalar = |default: f64| first.first().copied().unwrap_or(default);
    let bad = |msg: &str| CliError::Config(format!("f: {msg}"));
    let (f, d) = match name.trim() {
        "gaussian" => (SmoothFn::Gaussian { sigma: scalar(1.0) }, dim.unwrap_or(2)),
        "mexican_hat" => (
            SmoothFn::MexicanHat { sigma: scalar(1.0) },
            dim.unwrap_or(2),
        ),
        "cos" => {
            let k = if first.is_empty() {
                vec![1.0; dim.unwrap_or(2)]
            } else {
                first.clone()
            };
            let d = k.len();
            (SmoothFn::CosProduct { k }, d)
        }
        "affine" => {
            let a = if first.is_empty() {
                vec![1.0; dim.unwrap_or(2)]
            } else {
                first.clone()
            };
            let b = groups
                .get(1)
                .and_then(|g| g.first())
                .copied()
                .unwrap_or(0.0);
            let d = a.len();
            (SmoothFn::Affine { a, b }, d)
        }
        "windowed_cos" => {
            let k = scalar(30.0);
            let w = first.get(1).copied().unwrap_or(1.2);
            (SmoothFn::WindowedCos { k, w }, 2)
        }
        other => return Err(bad(&format!("unknown built-in `{other}`"))),
    };
    if let Some(n) = dim {
        if n != d {
            return Err(CliError::Config(format!(
                "dim: {n} does not match f, which needs {d}"
            )));
        }
    }
    if let SmoothFn::Gaussian { sigma } | SmoothFn::MexicanHat { sigma } = f {
        if !(sigma > 0.0) {
            return Err(bad("sigma must be positive"));
        }
    }
    Ok((f, d))
}

#[derive(Serialize)]
struct ConsistencyRow {
    h: f64,
    error: f64,
}

#[derive(Serialize)]
struct RatioRowOut {
    p: f64,
    h: f64,
    ratio: f64,
    gap: f64,
    reference: f64,
}

#[derive(Serialize)]
struct SetRow {
    h: f64,
    measure: f64,
    integral: f64,
    straddle: f64,
    empty: bool,
}

fn fd_cmd(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let (f, dim) = parse_smooth(cfg.f.as_deref().unwrap_or("gaussian:1"), cfg.dim)?;
    let hs = cfg.h.clone().unwrap_or_else(|| vec![0.2, 0.1, 0.05]);
    let radius = cfg.box_radius.unwrap_or(4.0);
    let study = cfg.study.unwrap_or(Study::Ratio);
    let mut out = RunOutput::new(Value::Null);
    match study {
        Study::Consistency => {
            let r = consistency_order(&f, dim, radius, &hs)?;
            let ok = r.exact || r.slope.is_some_and(|s| (1.9..=2.1).contains(&s));
            out.gate(Gate::new(
                "consistency_order",
                ok,
                match r.slope {
                    Some(s) => format!("slope {s}"),
                    None => "exact".to_string(),
                },
            ));
            let rows =
                r.h.iter()
                    .zip(&r.errors)
                    .map(|(&h, &error)| ConsistencyRow { h, error });
            out.csv("consistency.csv", csv_bytes(rows)?);
            out.summary = json!({ "study": study, "slope": r.slope, "exact": r.exact });
        }
        Study::Ratio => {
            let weights: Vec<f64> = match &cfg.alpha {
                Some(a) => {
                    let (xs, _) = a.split_once('|').unwrap_or((a, ""));
                    xs.split(',')
                        .map(|s| parse_complex(s).filter(|c| c.im == 0.0).map(|c| c.re))
                        .collect::<Option<Vec<f64>>>()
                        .ok_or_else(|| {
                            CliError::Config("alpha: fd needs real per-axis weights".into())
                        })?
                }
                None => (0..dim)
                    .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
                    .collect(),
            };
            let norm = weights.iter().fold(0.0f64, |a, w| a.max(w.abs()));
            let mut rows = Vec::new();
            let mut studies = Vec::new();
            for p in ps(cfg, 2.0) {
                let s = ratio_convergence_study(&f, dim, radius, &weights, p, &hs)?;
                let cap = norm * sharp_lp_constant(p)?;
                out.gate(Gate::new(
                    &format!("fd_ratio_ceiling(p={p})"),
                    s.max_ratio() <= cap * (1.0 + 1e-6),
                    format!("max ratio {} vs ceiling {cap}", s.max_ratio()),
                ));
                rows.extend(s.rows.iter().map(|r| RatioRowOut {
                    p,
                    h: r.h,
                    ratio: r.ratio,
                    gap: r.gap,
                    reference: s.reference,
                }));
                studies.push(json!({
                    "p": p,
                    "h_ref": s.h_ref,
                    "reference": s.reference,
                    "max_ratio": s.max_ratio(),
                    "gap_ratios": s.gap_ratios(),
                }));
            }
            out.csv("ratio.csv", csv_bytes(rows)?);
            out.summary = json!({ "study": study, "alpha": weights, "results": studies });
        }
        Study::Weaktype => {
            let level = cfg.level.unwrap_or(0.5);
            let s = weak_type_set_transfer(&f, dim, radius, LevelSpec::FractionOfMax(level), &hs)?;
            let rows = s.rows.iter().map(|r| SetRow {
                h: r.h,
                measure: r.measure,
                integral: r.integral,
                straddle: r.straddle,
                empty: r.empty,
            });
            out.csv("weaktype.csv", csv_bytes(rows)?);
            out.summary = json!({
                "study": study,
                "level": s.level,
                "reference": to_value(&s.reference),
                "finest_measure_gap": s.relative_measure_gap(s.finest()),
                "finest_integral_gap": s.relative_integral_gap(s.finest()),
            });
        }
    }
    Ok(out)
}

/// Collects `summary.json` from `dir` and its immediate subdirectories.
fn report_cmd(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let dir = cfg.input.clone().unwrap_or_else(|| ".".into());
    let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
    let mut candidates = vec![dir.join("summary.json")];
    let mut entries: Vec<_> = fs::read_dir(&dir)
        .map_err(|e| io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    candidates.extend(entries.into_iter().map(|p| p.join("summary.json")));
    let mut runs = Vec::new();
    let mut failed = 0;
    for path in candidates.into_iter().filter(|p| p.is_file()) {
        let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("input: {}: {e}", path.display())))?;
        let passed = value["gates"]
            .as_array()
            .is_none_or(|gs| gs.iter().all(|g| g["passed"].as_bool() == Some(true)));
        failed += usize::from(!passed);
        let rel = path
            .parent()
            .and_then(|p| p.strip_prefix(&dir).ok())
            .map(|p| p.display().to_string());
        runs.push(json!({ "run": rel.unwrap_or_default(), "passed": passed, "record": value }));
    }
    let mut out = RunOutput::new(json!({ "runs": runs.len(), "failed": failed }));
    out.json("report.json", json!({ "runs": runs }));
    Ok(out)
}
