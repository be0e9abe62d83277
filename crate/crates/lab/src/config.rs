//! Flat `key = value` experiment configuration.
//!
//! Keys are grouped by dotted prefixes (`lattice.*`, `rates.*`, `init.*`,
//! `sim.*`, `sde.*`, `experiment.*`, `invariant.*`). Unknown and repeated
//! keys are rejected. Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use branco_core::duality::resem_to_branco;
use branco_core::{DualityParams, FrequencyState, Lattice, OccupancyState, RateParams, ResemParams};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("`{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] branco_core::Error),
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

const KEYS: &[&str] = &[
    "lattice.type",
    "lattice.n",
    "lattice.rows",
    "lattice.cols",
    "lattice.edges",
    "rates.a",
    "rates.b",
    "rates.c",
    "rates.d",
    "resem.alpha",
    "resem.r",
    "resem.s",
    "resem.m",
    "init.type",
    "init.counts",
    "init.lambda",
    "init.p",
    "sim.t_grid",
    "sim.replicates",
    "sim.master_seed",
    "sim.n_cap",
    "sim.cap",
    "sde.h",
    "sde.t_max",
    "experiment.phi_panel",
    "experiment.phi0",
    "experiment.beta",
    "invariant.dual_replicates",
    "invariant.max_censored",
];

#[derive(Debug, Clone, PartialEq)]
pub enum LatticeSpec {
    Torus1d(usize),
    Torus2d(usize, usize),
    Complete(usize),
    Custom {
        sites: usize,
        edges: Vec<(usize, usize, f64)>,
    },
}

impl LatticeSpec {
    pub fn build(&self) -> Result<Lattice, ConfigError> {
        Ok(match self {
            LatticeSpec::Torus1d(n) => Lattice::torus_1d(*n)?,
            LatticeSpec::Torus2d(r, c) => Lattice::torus_2d(*r, *c)?,
            LatticeSpec::Complete(n) => Lattice::complete(*n)?,
            LatticeSpec::Custom { sites, edges } => Lattice::custom(*sites, edges)?,
        })
    }

    /// `torus1d:4`, `torus2d:2x3`, `complete:3` or `custom:<edge file>`.
    pub fn parse_shorthand(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let key = "--lattice";
        let (kind, arg) = text
            .split_once(':')
            .ok_or_else(|| invalid(key, "expected `<type>:<size>`"))?;
        match kind {
            "torus1d" => Ok(LatticeSpec::Torus1d(parse_num(key, arg)?)),
            "complete" => Ok(LatticeSpec::Complete(parse_num(key, arg)?)),
            "torus2d" => {
                let (r, c) = arg
                    .split_once('x')
                    .ok_or_else(|| invalid(key, "expected `torus2d:<rows>x<cols>`"))?;
                Ok(LatticeSpec::Torus2d(parse_num(key, r)?, parse_num(key, c)?))
            }
            "custom" => Self::from_edge_file(&base.join(arg)),
            other => Err(invalid(key, format!("unknown lattice type `{other}`"))),
        }
    }

    /// Edge file: one `from to rate` triple per line; the site count is one
    /// more than the largest index.
    pub fn from_edge_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let key = "lattice.edges";
        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(invalid(key, format!("bad edge line `{line}`")));
            }
            edges.push((parse_num(key, parts[0])?, parse_num(key, parts[1])?, parse_num(key, parts[2])?));
        }
        let sites = edges.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0);
        Ok(LatticeSpec::Custom { sites, edges })
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, LatticeSpec::Torus1d(_) | LatticeSpec::Torus2d(..))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// One count per site, or a single count used on every site.
    Counts(Vec<u64>),
    Poisson(f64),
    Bernoulli(f64),
}

impl InitSpec {
    /// The fixed start of a deterministic initial law.
    pub fn counts(&self, sites: usize) -> Option<OccupancyState> {
        match self {
            InitSpec::Counts(c) if c.len() == 1 => Some(OccupancyState::uniform(sites, c[0])),
            InitSpec::Counts(c) => Some(OccupancyState::new(c.clone())),
            _ => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, sites: usize, rng: &mut R) -> OccupancyState {
        match self {
            InitSpec::Counts(_) => self.counts(sites).expect("deterministic"),
            InitSpec::Poisson(lambda) => {
                if *lambda == 0.0 {
                    return OccupancyState::zeros(sites);
                }
                let dist = Poisson::new(*lambda).expect("validated intensity");
                OccupancyState::new((0..sites).map(|_| dist.sample(rng) as u64).collect())
            }
            InitSpec::Bernoulli(p) => OccupancyState::new((0..sites).map(|_| u64::from(rng.random::<f64>() < *p)).collect()),
        }
    }

    fn check(&self, sites: usize) -> Result<(), ConfigError> {
        match self {
            InitSpec::Counts(c) if c.len() != 1 && c.len() != sites => Err(invalid(
                "init.counts",
                format!("need 1 or {sites} counts, got {}", c.len()),
            )),
            InitSpec::Poisson(l) if !(*l >= 0.0 && l.is_finite()) => Err(invalid("init.lambda", "must be ≥ 0")),
            InitSpec::Bernoulli(p) if !(0.0..=1.0).contains(p) => Err(invalid("init.p", "must lie in [0,1]")),
            _ => Ok(()),
        }
    }
}

/// A test function `φ`: a constant field, or `value` at one site and zero
/// elsewhere. Written `v` or `v@site`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiEntry {
    pub value: f64,
    pub site: Option<usize>,
}

impl PhiEntry {
    pub fn constant(value: f64) -> Self {
        Self { value, site: None }
    }

    pub fn at(value: f64, site: usize) -> Self {
        Self { value, site: Some(site) }
    }

    pub fn field(&self, sites: usize) -> Vec<f64> {
        match self.site {
            None => vec![self.value; sites],
            Some(s) => {
                let mut v = vec![0.0; sites];
                v[s] = self.value;
                v
            }
        }
    }

    pub fn frequency(&self, sites: usize) -> Result<FrequencyState, ConfigError> {
        Ok(FrequencyState::new(self.field(sites))?)
    }

    pub fn label(&self) -> String {
        match self.site {
            None => format!("{}", self.value),
            Some(s) => format!("{}@{}", self.value, s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub lattice: LatticeSpec,
    pub rates: RateParams,
    pub init: InitSpec,
    pub t_grid: Vec<f64>,
    pub replicates: u64,
    pub master_seed: u64,
    /// Euler step of the diffusion.
    pub h: f64,
    /// Horizon of the extinction search.
    pub t_max: f64,
    pub phi_panel: Vec<PhiEntry>,
    /// Initial frequency field of the Poissonization experiment.
    pub phi0: PhiEntry,
    /// Annihilation fraction of the thinning partner.
    pub beta: f64,
    /// Per-site start of the process "started at infinity".
    pub n_cap: u64,
    /// Per-site truncation of the exact oracle.
    pub cap: u64,
    pub dual_replicates: u64,
    pub max_censored: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            lattice: LatticeSpec::Torus1d(3),
            rates: RateParams {
                annihilation: 1.0,
                branching: 3.0,
                coalescence: 1.0,
                death: 0.0,
            },
            init: InitSpec::Counts(vec![2]),
            t_grid: vec![0.25, 0.5, 1.0],
            replicates: 10_000,
            master_seed: 0,
            h: 1e-3,
            t_max: 60.0,
            phi_panel: vec![PhiEntry::constant(0.3), PhiEntry::at(0.5, 0)],
            phi0: PhiEntry::constant(0.4),
            beta: 0.0,
            n_cap: 50,
            cap: 12,
            dual_replicates: 10_000,
            max_censored: 0.01,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.trim()
        .parse()
        .map_err(|_| invalid(key, format!("cannot parse `{}`", v.trim())))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',').map(|p| parse_num(key, p)).collect()
}

fn parse_phi(key: &str, v: &str) -> Result<PhiEntry, ConfigError> {
    match v.split_once('@') {
        Some((val, site)) => Ok(PhiEntry::at(parse_num(key, val)?, parse_num(key, site)?)),
        None => Ok(PhiEntry::constant(parse_num(key, v)?)),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey { line, key: k.into() });
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::Duplicate { line, key: k.into() });
            }
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let mut cfg = Self::default();

        if let Some(kind) = get("lattice.type") {
            let size = |k: &str| -> Result<usize, ConfigError> {
                parse_num(k, get(k).ok_or_else(|| invalid(k, "required by lattice.type"))?)
            };
            cfg.lattice = match kind {
                "torus1d" => LatticeSpec::Torus1d(size("lattice.n")?),
                "torus2d" => LatticeSpec::Torus2d(size("lattice.rows")?, size("lattice.cols")?),
                "complete" => LatticeSpec::Complete(size("lattice.n")?),
                "custom" => {
                    let file = get("lattice.edges").ok_or_else(|| invalid("lattice.edges", "required for custom"))?;
                    LatticeSpec::from_edge_file(&base.join(file))?
                }
                other => return Err(invalid("lattice.type", format!("unknown type `{other}`"))),
            };
        }

        let rate_keys = ["rates.a", "rates.b", "rates.c", "rates.d"];
        let resem_keys = ["resem.alpha", "resem.r", "resem.s", "resem.m"];
        let any_rates = rate_keys.iter().any(|k| map.contains_key(*k));
        let any_resem = resem_keys.iter().any(|k| map.contains_key(*k));
        if any_rates && any_resem {
            return Err(invalid("resem.*", "give either rates.* or resem.*, not both"));
        }
        if any_rates {
            let mut v = [
                cfg.rates.annihilation,
                cfg.rates.branching,
                cfg.rates.coalescence,
                cfg.rates.death,
            ];
            for (slot, k) in v.iter_mut().zip(rate_keys) {
                if let Some(s) = get(k) {
                    *slot = parse_num(k, s)?;
                }
            }
            cfg.rates = RateParams::new(v[0], v[1], v[2], v[3])?;
        }
        if any_resem {
            let mut v = [0.0; 4];
            for (slot, k) in v.iter_mut().zip(resem_keys) {
                *slot = parse_num(k, get(k).ok_or_else(|| invalid(k, "all four resem.* keys are required"))?)?;
            }
            cfg.rates = resem_to_branco(DualityParams::new(v[0])?, &ResemParams::new(v[1], v[2], v[3])?)?;
        }

        if let Some(kind) = get("init.type") {
            cfg.init = match kind {
                "counts" => InitSpec::Counts(parse_list("init.counts", get("init.counts").unwrap_or("0"))?),
                "poisson" => InitSpec::Poisson(parse_num(
                    "init.lambda",
                    get("init.lambda").ok_or_else(|| invalid("init.lambda", "required for poisson"))?,
                )?),
                "bernoulli" => InitSpec::Bernoulli(parse_num(
                    "init.p",
                    get("init.p").ok_or_else(|| invalid("init.p", "required for bernoulli"))?,
                )?),
                other => return Err(invalid("init.type", format!("unknown type `{other}`"))),
            };
        } else if let Some(c) = get("init.counts") {
            cfg.init = InitSpec::Counts(parse_list("init.counts", c)?);
        }

        if let Some(v) = get("sim.t_grid") {
            cfg.t_grid = parse_list("sim.t_grid", v)?;
        }
        if let Some(v) = get("sim.replicates") {
            cfg.replicates = parse_num("sim.replicates", v)?;
            cfg.dual_replicates = cfg.replicates;
        }
        if let Some(v) = get("sim.master_seed") {
            cfg.master_seed = parse_num("sim.master_seed", v)?;
        }
        if let Some(v) = get("sim.n_cap") {
            cfg.n_cap = parse_num("sim.n_cap", v)?;
        }
        if let Some(v) = get("sim.cap") {
            cfg.cap = parse_num("sim.cap", v)?;
        }
        if let Some(v) = get("sde.h") {
            cfg.h = parse_num("sde.h", v)?;
        }
        if let Some(v) = get("sde.t_max") {
            cfg.t_max = parse_num("sde.t_max", v)?;
        }
        if let Some(v) = get("experiment.phi_panel") {
            cfg.phi_panel = v
                .split(',')
                .map(|p| parse_phi("experiment.phi_panel", p.trim()))
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = get("experiment.phi0") {
            cfg.phi0 = parse_phi("experiment.phi0", v)?;
        }
        if let Some(v) = get("experiment.beta") {
            cfg.beta = parse_num("experiment.beta", v)?;
        }
        if let Some(v) = get("invariant.dual_replicates") {
            cfg.dual_replicates = parse_num("invariant.dual_replicates", v)?;
        }
        if let Some(v) = get("invariant.max_censored") {
            cfg.max_censored = parse_num("invariant.max_censored", v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that does not depend on which experiment runs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let lat = self.lattice.build()?;
        let report = lat.validate();
        if !report.passed() {
            return Err(invalid(
                "lattice",
                format!(
                    "kernel must be irreducible and preserve counting measure (imbalance {})",
                    report.max_flow_imbalance
                ),
            ));
        }
        self.rates.validate()?;
        self.init.check(lat.len())?;
        if self.replicates == 0 {
            return Err(invalid("sim.replicates", "must be at least 1"));
        }
        if self.dual_replicates == 0 {
            return Err(invalid("invariant.dual_replicates", "must be at least 1"));
        }
        if self.t_grid.is_empty() || self.t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(invalid("sim.t_grid", "need nonnegative finite times"));
        }
        if self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("sim.t_grid", "times must increase strictly"));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(invalid("sde.h", "must be positive"));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(invalid("sde.t_max", "must be positive"));
        }
        for phi in self.phi_panel.iter().chain(std::iter::once(&self.phi0)) {
            if phi.site.is_some_and(|s| s >= lat.len()) {
                return Err(invalid("experiment.phi_panel", format!("site out of range in `{}`", phi.label())));
            }
            if !(0.0..=1.0).contains(&phi.value) {
                return Err(invalid("experiment.phi_panel", format!("`{}` is outside [0,1]", phi.label())));
            }
        }
        if self.phi_panel.is_empty() {
            return Err(invalid("experiment.phi_panel", "must not be empty"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(invalid("experiment.beta", "must lie in [0,1]"));
        }
        if !(0.0..=1.0).contains(&self.max_censored) {
            return Err(invalid("invariant.max_censored", "must lie in [0,1]"));
        }
        Ok(())
    }

    pub fn sites(&self) -> Result<usize, ConfigError> {
        Ok(self.lattice.build()?.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse(text, Path::new("."))
    }

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
        assert_eq!(parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn full_file() {
        let cfg = parse(
            "# duality run\n\
             lattice.type = torus2d\nlattice.rows = 2\nlattice.cols = 3\n\
             rates.a = 0.5\nrates.d = 2\n\
             init.type = bernoulli\ninit.p = 0.5\n\
             sim.t_grid = 0, 0.5, 1\nsim.replicates = 7\nsim.master_seed = 9\n\
             experiment.phi_panel = 0.2, 0.7@4  # trailing comment\n",
        )
        .unwrap();
        assert_eq!(cfg.lattice, LatticeSpec::Torus2d(2, 3));
        assert_eq!(cfg.rates.annihilation, 0.5);
        assert_eq!(cfg.rates.branching, 3.0);
        assert_eq!(cfg.rates.death, 2.0);
        assert_eq!(cfg.init, InitSpec::Bernoulli(0.5));
        assert_eq!(cfg.t_grid, vec![0.0, 0.5, 1.0]);
        assert_eq!((cfg.replicates, cfg.dual_replicates, cfg.master_seed), (7, 7, 9));
        assert_eq!(cfg.phi_panel, vec![PhiEntry::constant(0.2), PhiEntry::at(0.7, 4)]);
    }

    #[test]
    fn resem_keys_map_to_rates() {
        let cfg = parse("resem.alpha = 0.5\nresem.r = 2\nresem.s = 4.5\nresem.m = 1.5\n").unwrap();
        let r = cfg.rates;
        assert!((r.annihilation - 1.0).abs() < 1e-12);
        assert!((r.branching - 3.0).abs() < 1e-12);
        assert!((r.coalescence - 1.0).abs() < 1e-12);
        assert!(r.death.abs() < 1e-12);
        assert!(parse("resem.alpha = 0.5\nresem.r = 2\nresem.s = 4.5\nresem.m = 1\n").is_err());
        assert!(parse("resem.alpha = 0.5\nrates.a = 1\n").is_err());
    }

    #[test]
    fn rejections() {
        assert!(matches!(parse("sim.bogus = 1"), Err(ConfigError::UnknownKey { line: 1, .. })));
        assert!(matches!(parse("rates.a = 1\nrates.a = 2"), Err(ConfigError::Duplicate { line: 2, .. })));
        assert!(matches!(parse("rates.a 1"), Err(ConfigError::Syntax { line: 1 })));
        assert!(parse("sim.replicates = 0").is_err());
        assert!(parse("rates.b = -1").is_err());
        assert!(parse("sim.t_grid = 1, 0.5").is_err());
        assert!(parse("experiment.phi_panel = 0.5@3").is_err());
        assert!(parse("experiment.phi_panel = 1.5").is_err());
        assert!(parse("init.counts = 1, 2").is_err());
        assert!(parse("lattice.type = torus1d").is_err());
    }

    #[test]
    fn shorthand_lattices() {
        let base = Path::new(".");
        assert_eq!(LatticeSpec::parse_shorthand("torus1d:4", base).unwrap(), LatticeSpec::Torus1d(4));
        assert_eq!(LatticeSpec::parse_shorthand("torus2d:2x2", base).unwrap(), LatticeSpec::Torus2d(2, 2));
        assert_eq!(LatticeSpec::parse_shorthand("complete:3", base).unwrap(), LatticeSpec::Complete(3));
        assert!(LatticeSpec::parse_shorthand("ring:3", base).is_err());
        assert!(LatticeSpec::parse_shorthand("torus2d:4", base).is_err());
    }

    #[test]
    fn phi_fields() {
        assert_eq!(PhiEntry::at(0.5, 1).field(3), vec![0.0, 0.5, 0.0]);
        assert_eq!(PhiEntry::constant(0.25).field(2), vec![0.25, 0.25]);
        assert_eq!(PhiEntry::at(0.5, 1).label(), "0.5@1");
    }
}
