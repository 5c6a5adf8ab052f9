//! Flat `key = value` run configuration with typed validation.
//!
//! ```text
//! # comment
//! map = veronese2
//! theta = 0.3, 0.7
//! t_list = 6..11
//! eps_rule = fixed:0.1; power:0.25
//! sampler = grid:4096
//! seed = 7
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::counting::{EpsRule, InhomShift, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::khintchine::ApproxFunction;
use crate::manifold::{builtin, parse_map_file, Ball, ManifoldMap};
use crate::sampling::Sampler;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CountSweep,
    QndMeasure,
    GenericSplit,
    LowerBound,
    KhintchineMc,
    ExponentSpectrum,
    LatticeSelftest,
    Calibrate,
    ReportRender,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::CountSweep,
        Experiment::QndMeasure,
        Experiment::GenericSplit,
        Experiment::LowerBound,
        Experiment::KhintchineMc,
        Experiment::ExponentSpectrum,
        Experiment::LatticeSelftest,
        Experiment::Calibrate,
        Experiment::ReportRender,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::CountSweep => "count-sweep",
            Experiment::QndMeasure => "qnd-measure",
            Experiment::GenericSplit => "generic-split",
            Experiment::LowerBound => "lower-bound",
            Experiment::KhintchineMc => "khintchine-mc",
            Experiment::ExponentSpectrum => "exponent-spectrum",
            Experiment::LatticeSelftest => "lattice-selftest",
            Experiment::Calibrate => "calibrate",
            Experiment::ReportRender => "report-render",
        }
    }

    fn uses_t_list(self) -> bool {
        matches!(
            self,
            Experiment::CountSweep | Experiment::GenericSplit | Experiment::LowerBound | Experiment::Calibrate
        )
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::param(format!("unknown experiment {s:?}")))
    }
}

/// Which parameter family `qnd-measure` evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QndFamily {
    /// (c e^{−t}, c ε^{−1/2} e^{−t/2}, c ε^{−1}) along t_list
    Scaled,
    /// The single box (delta, k, t_box).
    Fixed,
    /// The one-dimensional set of a univariate polynomial.
    S1,
}

impl FromStr for QndFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scaled" => Ok(QndFamily::Scaled),
            "fixed" => Ok(QndFamily::Fixed),
            "s1" => Ok(QndFamily::S1),
            _ => Err(Error::param(format!("unknown qnd family {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    /// Built-in name (veronese<n>, paraboloid) or path to a map file.
    pub map: String,
    pub theta: Option<Vec<f64>>,
    pub ball_center: Option<Vec<f64>>,
    pub ball_radius: Option<f64>,
    /// Radius of the counting ball around the same center (generic-split).
    pub count_radius: Option<f64>,
    pub t_list: Vec<f64>,
    pub eps_rules: Vec<EpsRule>,
    pub eps_slack: f64,
    pub v: f64,
    pub psi: Option<ApproxFunction>,
    pub qnd_family: QndFamily,
    pub c_family: f64,
    pub delta: Option<f64>,
    pub k: Option<f64>,
    pub t_box: Option<Vec<f64>>,
    pub s1_poly: Option<Vec<f64>>,
    pub s1_order: u32,
    pub s1_theta: f64,
    pub s1_interval: (f64, f64),
    pub sampler: Sampler,
    pub per_axis: Option<u64>,
    pub g_points: u64,
    pub lower_t_list: Vec<f64>,
    pub c0: Option<f64>,
    pub seed: Option<u64>,
    pub budget: u64,
    pub n_samples: u64,
    pub q_max: u64,
    pub tail_q: Option<u64>,
    pub window_lo: Option<u64>,
    pub bins: usize,
    pub hist_range: (f64, f64),
    pub share_range: (f64, f64),
    pub expect_last_block_min: Option<f64>,
    pub expect_tail_max: Option<f64>,
    pub expect_share_min: Option<f64>,
    pub selftest_bases: u64,
    pub record_timings: bool,
    pub fit_date: String,
    pub inputs: Vec<PathBuf>,
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub calibration: Option<PathBuf>,
    /// Directory relative paths in the file resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: None,
            map: "veronese2".into(),
            theta: None,
            ball_center: None,
            ball_radius: None,
            count_radius: None,
            t_list: Vec::new(),
            eps_rules: vec![EpsRule::Fixed(0.1)],
            eps_slack: 1.0,
            v: 0.25,
            psi: None,
            qnd_family: QndFamily::Scaled,
            c_family: 1.0,
            delta: None,
            k: None,
            t_box: None,
            s1_poly: None,
            s1_order: 2,
            s1_theta: 1.0,
            s1_interval: (0.0, 1.0),
            sampler: Sampler::Grid { per_axis: 1024 },
            per_axis: None,
            g_points: 256,
            lower_t_list: Vec::new(),
            c0: None,
            seed: None,
            budget: DEFAULT_BUDGET,
            n_samples: 200,
            q_max: 100_000,
            tail_q: None,
            window_lo: None,
            bins: 20,
            hist_range: (0.0, 2.0),
            share_range: (0.45, 0.60),
            expect_last_block_min: None,
            expect_tail_max: None,
            expect_share_min: None,
            selftest_bases: 500,
            record_timings: false,
            fit_date: "unrecorded".into(),
            inputs: Vec::new(),
            workers: 1,
            out: PathBuf::from("out"),
            calibration: None,
            base_dir: PathBuf::from("."),
        }
    }
}

/// Values from flags or environment that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub budget: Option<u64>,
    pub out: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
}

fn num(line: usize, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("not finite: {s:?}")));
    }
    Ok(v)
}

fn uint(line: usize, s: &str) -> Result<u64> {
    let s = s.trim().replace('_', "");
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    // 1e7 style
    let f = num(line, &s)?;
    if f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64 {
        Ok(f as u64)
    } else {
        Err(Error::parse(line, format!("not a nonnegative integer: {s:?}")))
    }
}

fn list(line: usize, s: &str) -> Result<Vec<f64>> {
    let s = s.trim().trim_start_matches('[').trim_end_matches(']').trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    // integer range a..b, inclusive
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (uint(line, a)?, uint(line, b)?);
        if a > b || b - a > 10_000 {
            return Err(Error::parse(line, format!("bad range {s:?}")));
        }
        return Ok((a..=b).map(|v| v as f64).collect());
    }
    s.split(',').map(|x| num(line, x)).collect()
}

fn pair(line: usize, s: &str) -> Result<(f64, f64)> {
    match list(line, s)?[..] {
        [a, b] if a < b => Ok((a, b)),
        _ => Err(Error::parse(line, format!("expected two increasing numbers, got {s:?}"))),
    }
}

fn boolean(line: usize, s: &str) -> Result<bool> {
    match s.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::parse(line, format!("expected true or false, got {s:?}"))),
    }
}

fn eps_rule(line: usize, s: &str) -> Result<EpsRule> {
    let (kind, v) = s
        .trim()
        .split_once(':')
        .ok_or_else(|| Error::parse(line, format!("eps rule must be fixed:EPS or power:RHO, got {s:?}")))?;
    let v = num(line, v)?;
    match kind.trim() {
        "fixed" if v > 0.0 && v <= 1.0 => Ok(EpsRule::Fixed(v)),
        "power" if v >= 0.0 => Ok(EpsRule::Power(v)),
        _ => Err(Error::parse(line, format!("bad eps rule {s:?}"))),
    }
}

pub fn format_eps_rule(rule: &EpsRule) -> String {
    match rule {
        EpsRule::Fixed(e) => format!("fixed:{e}"),
        EpsRule::Power(r) => format!("power:{r}"),
    }
}

fn sampler(line: usize, s: &str) -> Result<Sampler> {
    let (kind, v) = s
        .trim()
        .split_once(':')
        .ok_or_else(|| Error::parse(line, format!("sampler must be grid:N or mc:N, got {s:?}")))?;
    let v = uint(line, v)?;
    if v == 0 {
        return Err(Error::parse(line, "sampler size must be positive"));
    }
    match kind.trim() {
        "grid" => Ok(Sampler::Grid { per_axis: v }),
        // the seed is attached at validation time
        "mc" => Ok(Sampler::Mc { n_pts: v, seed: 0 }),
        _ => Err(Error::parse(line, format!("unknown sampler {kind:?}"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::parse(line, format!("expected key = value, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(Error::parse(line, format!("duplicate key {key:?}")));
            }
            seen.push(key.to_string());
            cfg.set(line, key, value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = RunConfig::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        let opt_pos = |v: f64, what: &str| -> Result<f64> {
            if v > 0.0 {
                Ok(v)
            } else {
                Err(Error::parse(line, format!("{what} must be positive")))
            }
        };
        match key {
            "experiment" => self.experiment = Some(value.parse().map_err(|_| Error::parse(line, format!("unknown experiment {value:?}")))?),
            "map" => {
                if value.is_empty() {
                    return Err(Error::parse(line, "map is empty"));
                }
                self.map = value.to_string();
            }
            "theta" => self.theta = Some(list(line, value)?),
            "ball_center" => self.ball_center = Some(list(line, value)?),
            "ball_radius" => self.ball_radius = Some(num(line, value)?),
            "count_radius" => self.count_radius = Some(opt_pos(num(line, value)?, key)?),
            "t_list" => self.t_list = list(line, value)?,
            "lower_t_list" => self.lower_t_list = list(line, value)?,
            "eps_rule" => {
                self.eps_rules = value
                    .split(';')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| eps_rule(line, s))
                    .collect::<Result<_>>()?
            }
            "eps_slack" => self.eps_slack = opt_pos(num(line, value)?, key)?,
            "v" => {
                let v = num(line, value)?;
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::parse(line, "v must lie in (0, 1]"));
                }
                self.v = v;
            }
            "psi" => self.psi = Some(value.parse().map_err(|e: Error| Error::parse(line, e.to_string()))?),
            "qnd_family" => self.qnd_family = value.parse().map_err(|e: Error| Error::parse(line, e.to_string()))?,
            "c_family" => self.c_family = opt_pos(num(line, value)?, key)?,
            "delta" => self.delta = Some(opt_pos(num(line, value)?, key)?),
            "k" => self.k = Some(opt_pos(num(line, value)?, key)?),
            "t_box" => self.t_box = Some(list(line, value)?),
            "s1_poly" => self.s1_poly = Some(list(line, value)?),
            "s1_order" => self.s1_order = uint(line, value)?.try_into().map_err(|_| Error::parse(line, "order too large"))?,
            "s1_theta" => self.s1_theta = num(line, value)?,
            "s1_interval" => self.s1_interval = pair(line, value)?,
            "sampler" => self.sampler = sampler(line, value)?,
            "per_axis" => self.per_axis = Some(uint(line, value)?),
            "g_points" => self.g_points = uint(line, value)?,
            "c0" => self.c0 = Some(opt_pos(num(line, value)?, key)?),
            "seed" => self.seed = Some(uint(line, value)?),
            "budget" => self.budget = uint(line, value)?,
            "workers" => self.workers = uint(line, value)? as usize,
            "out" => self.out = PathBuf::from(value),
            "calibration" => self.calibration = Some(PathBuf::from(value)),
            "n_samples" => self.n_samples = uint(line, value)?,
            "q_max" => self.q_max = uint(line, value)?,
            "tail_q" => self.tail_q = Some(uint(line, value)?),
            "window_lo" => self.window_lo = Some(uint(line, value)?),
            "bins" => self.bins = uint(line, value)? as usize,
            "hist_range" => self.hist_range = pair(line, value)?,
            "share_range" => self.share_range = pair(line, value)?,
            "expect_last_block_min" => self.expect_last_block_min = Some(num(line, value)?),
            "expect_tail_max" => self.expect_tail_max = Some(num(line, value)?),
            "expect_share_min" => self.expect_share_min = Some(num(line, value)?),
            "selftest_bases" => self.selftest_bases = uint(line, value)?,
            "record_timings" => self.record_timings = boolean(line, value)?,
            "fit_date" => self.fit_date = value.to_string(),
            "inputs" => {
                self.inputs = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            _ => return Err(Error::parse(line, format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Flags and environment take precedence over the file.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(b) = o.budget {
            self.budget = b;
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if let Some(p) = &o.calibration {
            self.calibration = Some(p.clone());
        }
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn map_path(&self) -> Option<PathBuf> {
        match builtin(&self.map) {
            Some(_) => None,
            None => Some(self.resolve_path(Path::new(&self.map))),
        }
    }

    /// Checks the invariants that do not depend on running anything.
    pub fn validate(&mut self, exp: Experiment) -> Result<()> {
        if let Some(e) = self.experiment {
            if e != exp {
                return Err(Error::Schema(format!(
                    "config is for {} but the subcommand is {}",
                    e.name(),
                    exp.name()
                )));
            }
        }
        if self.workers == 0 {
            return Err(Error::param("workers must be at least 1"));
        }
        if let Some(p) = self.map_path() {
            if !p.is_file() {
                return Err(Error::Schema(format!("map {:?} is neither built in nor an existing file", self.map)));
            }
        }
        if let Some(p) = &self.calibration {
            if !self.resolve_path(p).is_file() {
                return Err(Error::Schema(format!("calibration manifest {} does not exist", p.display())));
            }
        }
        for p in &self.inputs {
            if !self.resolve_path(p).is_file() {
                return Err(Error::Schema(format!("input {} does not exist", p.display())));
            }
        }
        if exp.uses_t_list() || (exp == Experiment::QndMeasure && self.qnd_family == QndFamily::Scaled) {
            if self.t_list.is_empty() {
                return Err(Error::Schema(format!("{} needs a nonempty t_list", exp.name())));
            }
            if self.t_list.iter().any(|&t| !(t > 0.0)) {
                return Err(Error::Schema("t values must be positive".into()));
            }
        }
        if self.eps_rules.is_empty() {
            return Err(Error::Schema("eps_rule is empty".into()));
        }
        let mc = matches!(self.sampler, Sampler::Mc { .. }) && exp == Experiment::QndMeasure;
        let needs_seed = mc
            || matches!(
                exp,
                Experiment::KhintchineMc | Experiment::ExponentSpectrum | Experiment::Calibrate
            );
        if needs_seed && self.seed.is_none() {
            return Err(Error::Schema(format!("{} uses a random sampler and needs a seed", exp.name())));
        }
        if let Sampler::Mc { n_pts, .. } = self.sampler {
            self.sampler = Sampler::Mc {
                n_pts,
                seed: self.seed.unwrap_or(0),
            };
        }
        if exp == Experiment::KhintchineMc && self.psi.is_none() {
            return Err(Error::Schema("khintchine-mc needs psi".into()));
        }
        if exp == Experiment::QndMeasure {
            match self.qnd_family {
                QndFamily::Fixed if self.delta.is_none() || self.k.is_none() || self.t_box.is_none() => {
                    return Err(Error::Schema("the fixed family needs delta, k and t_box".into()))
                }
                QndFamily::S1 if self.s1_poly.is_none() || self.delta.is_none() => {
                    return Err(Error::Schema("the s1 family needs s1_poly and delta".into()))
                }
                _ => {}
            }
        }
        // fail early on a bad map, theta or ball
        let map = self.manifold()?;
        self.shift(&map)?;
        self.ball(&map)?;
        Ok(())
    }

    pub fn manifold(&self) -> Result<ManifoldMap> {
        match builtin(&self.map) {
            Some(m) => Ok(m),
            None => {
                let path = self.map_path().expect("not built in");
                parse_map_file(&std::fs::read_to_string(path)?)
            }
        }
    }

    pub fn shift(&self, map: &ManifoldMap) -> Result<InhomShift> {
        let shift = match &self.theta {
            Some(t) => InhomShift::new(t.clone())?,
            None => InhomShift::zero(map.n()),
        };
        shift.check(map)?;
        Ok(shift)
    }

    /// The configured ball, or the working domain of the map.
    pub fn ball(&self, map: &ManifoldMap) -> Result<Ball> {
        let dom = map.domain();
        let ball = Ball::new(
            self.ball_center.clone().unwrap_or_else(|| dom.center.clone()),
            self.ball_radius.unwrap_or(dom.radius),
        )?;
        if ball.dim() != map.d() {
            return Err(Error::InvalidDimension(format!(
                "ball has dimension {} but the map has d = {}",
                ball.dim(),
                map.d()
            )));
        }
        if !dom.contains_ball(&ball) {
            return Err(Error::Precondition("the ball must lie inside the working domain".into()));
        }
        Ok(ball)
    }

    /// Canonical hash of everything that can change results.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        sha256_hex(json.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
