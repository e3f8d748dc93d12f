//! Flags, config files and their merge into a validated [`RunConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use riesz_lab::constants::conjugate;
use riesz_lab::{GroupSpec, RieszCoefficients, C64};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "riesz-lab",
    version,
    about = "Experiments with semi-discrete second-order Riesz transforms"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandLine,
}

#[derive(Debug, Subcommand)]
pub enum CommandLine {
    /// Table of sharp constants and Young-function values.
    Constants(Flags),
    /// Operator-norm lower bounds and inequality checks.
    Probe(Flags),
    /// Monte Carlo martingale experiments.
    Mc(Flags),
    /// Zigzag witness search and weak-type certificates.
    Zigzag(Flags),
    /// Finite-difference transfer studies.
    Fd(Flags),
    /// Merge the summaries of a directory of runs.
    Report(Flags),
}

impl CommandLine {
    pub fn split(self) -> (Command, Flags) {
        match self {
            Self::Constants(f) => (Command::Constants, f),
            Self::Probe(f) => (Command::Probe, f),
            Self::Mc(f) => (Command::Mc, f),
            Self::Zigzag(f) => (Command::Zigzag, f),
            Self::Fd(f) => (Command::Fd, f),
            Self::Report(f) => (Command::Report, f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Constants,
    Probe,
    Mc,
    Zigzag,
    Fd,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    Lp,
    Weak,
    Log,
    Exp,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Consistency,
    Ratio,
    Weaktype,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

/// Flags shared by every command. Unset flags fall back to the config file,
/// then to the per-command defaults listed here.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML or JSON file with the same keys as the long flags (`.json` selects JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Group `N1,..,Nm;M1,..,Mn` [probe: 8,8; mc: 4,4].
    #[arg(long)]
    pub group: Option<String>,
    /// Coefficients `αx_1,..,αx_m|αy_11,..;αy_21,..`; entries may be complex, e.g. `1-0.5i`
    /// [alternating signs, `1,-1,..`].
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    /// Exponent list [2; zigzag 1.5].
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
    /// constants: Young-function arguments t; probe --mode mixed: target exponents q > p.
    #[arg(long, value_delimiter = ',')]
    pub q: Option<Vec<f64>>,
    /// Constants K > 1 for --mode log|exp [2].
    #[arg(long = "K", alias = "k", value_delimiter = ',')]
    pub k: Option<Vec<f64>>,
    /// Horizon [4].
    #[arg(long = "T", alias = "horizon")]
    pub horizon: Option<f64>,
    /// Brownian step [T/80; T on discrete groups].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Monte Carlo paths [100000].
    #[arg(long)]
    pub paths: Option<u64>,
    /// Root seed [0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Power-method iterations [50].
    #[arg(long)]
    pub iters: Option<usize>,
    /// Step list [0.2,0.1,0.05].
    #[arg(long, value_delimiter = ',')]
    pub h: Option<Vec<f64>>,
    /// Probe mode [lp].
    #[arg(long, value_enum)]
    pub mode: Option<ProbeMode>,
    /// Input function: binary lattice file (probe, mc) or built-in spec (fd), e.g.
    /// `gaussian:1`, `cos:1,2`, `affine:1,-2;0.5`, `mexican_hat:0.7`, `windowed_cos:30,1.2`.
    #[arg(long, allow_hyphen_values = true)]
    pub f: Option<String>,
    /// FD study [ratio].
    #[arg(long, value_enum)]
    pub study: Option<Study>,
    /// zigzag: search for a witness instead of certifying --tree.
    #[arg(long)]
    pub search: bool,
    /// zigzag: tree file to certify.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// zigzag: maximum depth [8].
    #[arg(long)]
    pub depth: Option<usize>,
    /// zigzag: candidate trees kept [4].
    #[arg(long)]
    pub beam: Option<usize>,
    /// zigzag: lattice points per unit [8].
    #[arg(long)]
    pub resolution: Option<usize>,
    /// zigzag: lattice half-width [4].
    #[arg(long)]
    pub radius: Option<usize>,
    /// zigzag: certification margin below the tree threshold [1e-9].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// fd: box half-width R [4].
    #[arg(long = "box")]
    pub box_radius: Option<f64>,
    /// fd: dimension N [from --f, else 2].
    #[arg(long)]
    pub dim: Option<usize>,
    /// fd --study weaktype: level as a fraction of max |u| [0.5].
    #[arg(long)]
    pub level: Option<f64>,
    /// probe: density of the random set E [0.25].
    #[arg(long)]
    pub density: Option<f64>,
    /// mc: number of per-path traces to emit [0].
    #[arg(long)]
    pub trace: Option<usize>,
    /// report: directory of runs [.].
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Table format [csv].
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// The merged configuration, echoed verbatim in the run header.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(rename = "K", alias = "k", skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
    #[serde(
        rename = "T",
        alias = "horizon",
        skip_serializing_if = "Option::is_none"
    )]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ProbeMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub study: Option<Study>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beam: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
    pub box_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

macro_rules! overlay {
    ($cfg:ident, $flags:ident; $($field:ident),*) => {
        $( if $flags.$field.is_some() { $cfg.$field = $flags.$field.clone(); } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config: {e}")))
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("config: {}", e.message())))
        }
    }

    /// File values, overridden by any flag given on the command line.
    pub fn merge(command: Command, flags: &Flags) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if let Some(c) = cfg.command {
            if c != command {
                return Err(CliError::Config(format!(
                    "command: config file is for `{}`, invoked `{}`",
                    command_name(c),
                    command_name(command)
                )));
            }
        }
        cfg.command = Some(command);
        overlay!(cfg, flags; group, alpha, p, q, k, horizon, dt, paths, seed, iters, h, mode, f,
            study, tree, depth, beam, resolution, radius, epsilon, box_radius, dim, level, density,
            trace, input, out, format);
        if flags.search {
            cfg.search = Some(true);
        }
        if cfg.seed.is_none() {
            cfg.seed = Some(0);
        }
        cfg.validate()?;
        cfg.fill_defaults()?;
        Ok(cfg)
    }

    /// Resolves every default the command uses so the header alone reproduces
    /// the run. The group and `dt` stay unset when they come from an input file.
    fn fill_defaults(&mut self) -> Result<(), CliError> {
        fn set<T>(slot: &mut Option<T>, v: T) {
            if slot.is_none() {
                *slot = Some(v);
            }
        }
        match self.command() {
            Command::Constants => {
                set(&mut self.p, vec![2.0]);
                set(&mut self.q, Vec::new());
                set(&mut self.format, Format::Csv);
            }
            Command::Probe | Command::Mc => {
                let probe = self.command() == Command::Probe;
                if self.f.is_none() {
                    set(
                        &mut self.group,
                        if probe { "8,8" } else { "4,4" }.to_string(),
                    );
                }
                if let Some(g) = &self.group {
                    let g = parse_group(g)?;
                    set(&mut self.alpha, default_alpha_text(&g));
                    if !probe {
                        let t = self.horizon.unwrap_or(4.0);
                        set(&mut self.dt, if g.n() == 0 { t } else { t / 80.0 });
                    }
                }
                if probe {
                    let mode = *self.mode.get_or_insert(ProbeMode::Lp);
                    set(&mut self.p, vec![2.0]);
                    match mode {
                        ProbeMode::Lp | ProbeMode::Weak => set(&mut self.iters, 50),
                        ProbeMode::Log | ProbeMode::Exp => {
                            set(&mut self.k, vec![2.0]);
                            set(&mut self.density, 0.25);
                        }
                        ProbeMode::Mixed => set(&mut self.density, 0.25),
                    }
                } else {
                    set(&mut self.horizon, 4.0);
                    set(&mut self.paths, 100_000);
                    set(&mut self.trace, 0);
                }
            }
            Command::Zigzag => {
                set(&mut self.p, vec![1.5]);
                set(&mut self.search, false);
                let d = riesz_lab::zigzag_laminate::SearchParams::default();
                set(&mut self.epsilon, d.epsilon);
                if self.search == Some(true) {
                    set(&mut self.depth, d.depth);
                    set(&mut self.beam, d.beam);
                    set(&mut self.resolution, d.q);
                    set(&mut self.radius, d.r);
                }
            }
            Command::Fd => {
                let study = *self.study.get_or_insert(Study::Ratio);
                set(&mut self.f, "gaussian:1".to_string());
                set(&mut self.h, vec![0.2, 0.1, 0.05]);
                set(&mut self.box_radius, 4.0);
                match study {
                    Study::Ratio => set(&mut self.p, vec![2.0]),
                    Study::Weaktype => set(&mut self.level, 0.5),
                    Study::Consistency => {}
                }
            }
            Command::Report => set(&mut self.input, PathBuf::from(".")),
        }
        Ok(())
    }

    pub fn command(&self) -> Command {
        self.command.expect("set by merge")
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Checks that do not need the target module's data.
    pub fn validate(&self) -> Result<(), CliError> {
        let cmd = self.command();
        let p_needed = matches!(
            cmd,
            Command::Constants | Command::Probe | Command::Fd | Command::Zigzag
        );
        if p_needed {
            for &p in self.p.as_deref().unwrap_or(&[]) {
                conjugate(p)
                    .map_err(|_| CliError::Config(format!("p: need p > 1 (finite), got {p}")))?;
            }
        }
        if let Some(ks) = &self.k {
            if let Some(k) = ks.iter().find(|k| !(**k > 1.0) || !k.is_finite()) {
                return Err(CliError::Config(format!("K: need K > 1, got {k}")));
            }
        }
        positive("T", self.horizon)?;
        positive("dt", self.dt)?;
        positive("epsilon", self.epsilon.map(|e| e + f64::MIN_POSITIVE))?;
        positive("box", self.box_radius)?;
        if let Some(hs) = &self.h {
            if hs.is_empty() || hs.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
                return Err(CliError::Config(
                    "h: need a nonempty list of steps h > 0".into(),
                ));
            }
        }
        if self.paths == Some(0) {
            return Err(CliError::Config("paths: need at least one path".into()));
        }
        if self.iters == Some(0) {
            return Err(CliError::Config(
                "iters: need at least one iteration".into(),
            ));
        }
        if let Some(d) = self.density {
            if !(0.0..=1.0).contains(&d) {
                return Err(CliError::Config(format!(
                    "density: need 0 <= density <= 1, got {d}"
                )));
            }
        }
        if let Some(l) = self.level {
            if !(l > 0.0 && l <= 1.0) {
                return Err(CliError::Config(format!(
                    "level: need 0 < level <= 1, got {l}"
                )));
            }
        }
        if let Some(g) = &self.group {
            parse_group(g)?;
        }
        if cmd == Command::Zigzag && self.search != Some(true) && self.tree.is_none() {
            return Err(CliError::Config(
                "tree: zigzag needs --search or --tree <file>".into(),
            ));
        }
        if cmd == Command::Probe && self.mode == Some(ProbeMode::Mixed) && self.q.is_none() {
            return Err(CliError::Config("q: --mode mixed needs --q".into()));
        }
        Ok(())
    }
}

fn positive(name: &str, v: Option<f64>) -> Result<(), CliError> {
    match v {
        Some(x) if !(x > 0.0) || !x.is_finite() => Err(CliError::Config(format!(
            "{name}: need a finite value > 0, got {x}"
        ))),
        _ => Ok(()),
    }
}

pub fn command_name(c: Command) -> &'static str {
    match c {
        Command::Constants => "constants",
        Command::Probe => "probe",
        Command::Mc => "mc",
        Command::Zigzag => "zigzag",
        Command::Fd => "fd",
        Command::Report => "report",
    }
}

pub fn parse_group(text: &str) -> Result<GroupSpec, CliError> {
    GroupSpec::parse(text).map_err(|e| CliError::Config(format!("group: {e}")))
}

/// `1.5`, `-2i`, `0.5-0.25i`, `1e-3+2i`.
pub fn parse_complex(text: &str) -> Option<C64> {
    let s = text.trim();
    if s.is_empty() {
        return None;
    }
    let Some(body) = s.strip_suffix('i') else {
        return s.parse().ok().map(|re| C64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&j| (bytes[j] == b'+' || bytes[j] == b'-') && !matches!(bytes[j - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(j) => (body[..j].parse().ok()?, &body[j..]),
        None => (0.0, body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        t => t.parse().ok()?,
    };
    Some(C64::new(re, im))
}

fn parse_list(text: &str) -> Result<Vec<C64>, CliError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| {
            parse_complex(t)
                .ok_or_else(|| CliError::Config(format!("alpha: cannot parse entry `{t}`")))
        })
        .collect()
}

/// Parses `αx|αy` for `group`; a missing `αy` part is zero.
pub fn parse_alpha(text: &str, group: &GroupSpec) -> Result<RieszCoefficients, CliError> {
    let (xs, ys) = text.split_once('|').unwrap_or((text, ""));
    let ax = parse_list(xs)?;
    let rows: Vec<Vec<C64>> = if ys.trim().is_empty() {
        vec![vec![C64::new(0.0, 0.0); group.n()]; group.n()]
    } else {
        ys.split(';').map(parse_list).collect::<Result<_, _>>()?
    };
    if ax.len() != group.m() || rows.len() != group.n() || rows.iter().any(|r| r.len() != group.n())
    {
        return Err(CliError::Config(format!(
            "alpha: need {} discrete weights and a {n}x{n} torus block for group {}",
            group.m(),
            group.header(),
            n = group.n()
        )));
    }
    RieszCoefficients::new(ax, rows).map_err(|e| CliError::Config(format!("alpha: {e}")))
}

/// Alternating signs `+1, −1, ...` across all axes, discrete first.
pub fn default_alpha_text(group: &GroupSpec) -> String {
    let sign = |i: usize| if i % 2 == 0 { "1" } else { "-1" };
    let m = group.m();
    let xs: Vec<&str> = (0..m).map(sign).collect();
    let rows: Vec<String> = (0..group.n())
        .map(|j| {
            (0..group.n())
                .map(|k| if j == k { sign(m + j) } else { "0" })
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    format!("{}|{}", xs.join(","), rows.join(";"))
}

pub fn default_alpha(group: &GroupSpec) -> RieszCoefficients {
    parse_alpha(&default_alpha_text(group), group).expect("well-formed default")
}
