//! Experiment configuration: a partially specified form that files and
//! command-line flags fill in, and the validated form runs consume.
//!
//! Indices in family strings (`point:3`) are 1-based.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{Distribution, PrivacyBudget, QueryMatrix};
use crate::error::{Error, Result};
use crate::protocols::{AdaptiveStrategy, ConstantStrategy, RandomStrategy, TrackingAdversary};
use crate::rng::{labels, SeedStream};

/// Gap of the two-spike family: masses ½ ± 0.1.
pub const TWO_SPIKE_GAP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Gauss,
    Rejsamp,
    Phr,
    Adsamp,
    Baseline,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Gauss => "gauss",
            ProtocolKind::Rejsamp => "rejsamp",
            ProtocolKind::Phr => "phr",
            ProtocolKind::Adsamp => "adsamp",
            ProtocolKind::Baseline => "baseline",
        }
    }

    fn uses_matrix(self) -> bool {
        matches!(
            self,
            ProtocolKind::Gauss | ProtocolKind::Rejsamp | ProtocolKind::Baseline
        )
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown protocol `{s}`")))
    }
}

/// Named distribution families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DistributionFamily {
    Uniform,
    Zipf(f64),
    /// 1-based element.
    Point(usize),
    /// `½ ± 0.1` on two distinct elements chosen from the instance seed.
    TwoSpike,
    File(PathBuf),
}

impl FromStr for DistributionFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = split_family(s);
        let bad = || Error::Config(format!("invalid distribution family `{s}`"));
        match (name, arg) {
            ("uniform", None) => Ok(Self::Uniform),
            ("zipf", None) => Ok(Self::Zipf(1.0)),
            ("zipf", Some(a)) => a.parse().map(Self::Zipf).map_err(|_| bad()),
            ("point", Some(a)) => match a.parse::<usize>() {
                Ok(j) if j >= 1 => Ok(Self::Point(j)),
                _ => Err(bad()),
            },
            ("two-spike", None) => Ok(Self::TwoSpike),
            ("file", Some(a)) if !a.is_empty() => Ok(Self::File(a.into())),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for DistributionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform => write!(f, "uniform"),
            Self::Zipf(s) => write!(f, "zipf:{s}"),
            Self::Point(j) => write!(f, "point:{j}"),
            Self::TwoSpike => write!(f, "two-spike"),
            Self::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// Named query-matrix families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MatrixFamily {
    Identity,
    /// Columns uniform on the sphere of radius `r`.
    RandomUnitColumns,
    File(PathBuf),
}

impl FromStr for MatrixFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match split_family(s) {
            ("identity", None) => Ok(Self::Identity),
            ("random-unit-columns", None) => Ok(Self::RandomUnitColumns),
            ("file", Some(a)) if !a.is_empty() => Ok(Self::File(a.into())),
            _ => Err(Error::Config(format!("invalid matrix family `{s}`"))),
        }
    }
}

impl fmt::Display for MatrixFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "identity"),
            Self::RandomUnitColumns => write!(f, "random-unit-columns"),
            Self::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// Named adaptive strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StrategyFamily {
    /// `r·(+1, −1, +1, …)` every round.
    Constant,
    Random,
    TrackingAdversary,
}

impl FromStr for StrategyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "random" => Ok(Self::Random),
            "tracking-adversary" => Ok(Self::TrackingAdversary),
            _ => Err(Error::Config(format!("invalid strategy `{s}`"))),
        }
    }
}

impl fmt::Display for StrategyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Constant => "constant",
            Self::Random => "random",
            Self::TrackingAdversary => "tracking-adversary",
        })
    }
}

macro_rules! string_conversions {
    ($($ty:ty),*) => {$(
        impl TryFrom<String> for $ty {
            type Error = Error;
            fn try_from(s: String) -> Result<Self> {
                s.parse()
            }
        }
        impl From<$ty> for String {
            fn from(v: $ty) -> String {
                v.to_string()
            }
        }
    )*};
}
string_conversions!(DistributionFamily, MatrixFamily, StrategyFamily);

fn split_family(s: &str) -> (&str, Option<&str>) {
    match s.split_once(':') {
        Some((name, arg)) => (name, Some(arg)),
        None => (s, None),
    }
}

/// Every field optional; sources are layered with [`PartialConfig::merge`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub protocol: Option<ProtocolKind>,
    pub n: Option<usize>,
    #[serde(rename = "J")]
    pub domain_size: Option<usize>,
    pub d: Option<usize>,
    pub r: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub dist: Option<DistributionFamily>,
    pub matrix: Option<MatrixFamily>,
    pub strategy: Option<StrategyFamily>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl PartialConfig {
    /// Reads a config file, or the config embedded in an experiment summary.
    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let invalid = |e: serde_json::Error| Error::Config(format!("{}: {e}", path.display()));
        let mut value: serde_json::Value = serde_json::from_str(&text).map_err(invalid)?;
        if let Some(embedded) = value.get_mut("config").filter(|c| c.is_object()) {
            value = embedded.take();
        }
        serde_json::from_value(value).map_err(invalid)
    }

    /// Fields set in `overrides` win.
    pub fn merge(self, overrides: PartialConfig) -> PartialConfig {
        PartialConfig {
            protocol: overrides.protocol.or(self.protocol),
            n: overrides.n.or(self.n),
            domain_size: overrides.domain_size.or(self.domain_size),
            d: overrides.d.or(self.d),
            r: overrides.r.or(self.r),
            epsilon: overrides.epsilon.or(self.epsilon),
            delta: overrides.delta.or(self.delta),
            dist: overrides.dist.or(self.dist),
            matrix: overrides.matrix.or(self.matrix),
            strategy: overrides.strategy.or(self.strategy),
            trials: overrides.trials.or(self.trials),
            seed: overrides.seed.or(self.seed),
            out: overrides.out.or(self.out),
        }
    }

    /// Fills defaults and validates.
    pub fn resolve(self) -> Result<ExperimentConfig> {
        let protocol = self.protocol.ok_or_else(|| missing("protocol"))?;
        let domain_size = self.domain_size.ok_or_else(|| missing("J"))?;
        let matrix = if protocol.uses_matrix() {
            Some(self.matrix.unwrap_or(MatrixFamily::Identity))
        } else {
            self.matrix
        };
        let d = match (&matrix, self.d) {
            (Some(MatrixFamily::Identity), None) => Some(domain_size),
            (_, d) => d,
        };
        let config = ExperimentConfig {
            protocol,
            n: self.n.ok_or_else(|| missing("n"))?,
            domain_size,
            d,
            r: self.r.unwrap_or(1.0),
            epsilon: self.epsilon,
            delta: self.delta,
            dist: self.dist.unwrap_or(DistributionFamily::Uniform),
            matrix,
            strategy: if protocol == ProtocolKind::Adsamp {
                Some(self.strategy.unwrap_or(StrategyFamily::TrackingAdversary))
            } else {
                self.strategy
            },
            trials: self.trials.unwrap_or(1),
            seed: self.seed.unwrap_or(0),
            out: self.out,
        };
        config.validate()?;
        Ok(config)
    }
}

fn missing(field: &str) -> Error {
    Error::Config(format!("missing required field `{field}`"))
}

/// A fully specified experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: ProtocolKind,
    pub n: usize,
    #[serde(rename = "J")]
    pub domain_size: usize,
    /// Number of queries (rows of the matrix, or adaptive rounds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub dist: DistributionFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyFamily>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.domain_size < 2 {
            return bad(format!("J must be at least 2, got {}", self.domain_size));
        }
        if !(self.r.is_finite() && self.r > 0.0) {
            return bad(format!("r must be positive, got {}", self.r));
        }
        if let DistributionFamily::Point(j) = self.dist {
            if j > self.domain_size {
                return bad(format!("point:{j} is outside [1, {}]", self.domain_size));
            }
        }
        if let Some(out) = &self.out {
            if out.extension().is_some_and(|e| e == "json") {
                return bad("the output path names the CSV file; the summary is written next to it as .json".into());
            }
        }

        let protocol = self.protocol;
        if protocol != ProtocolKind::Baseline {
            match self.epsilon {
                Some(e) if e.is_finite() && e > 0.0 => {}
                Some(e) => return bad(format!("epsilon must be positive, got {e}")),
                None => return bad(format!("{protocol} needs epsilon")),
            }
        }
        match (protocol, self.delta) {
            (ProtocolKind::Gauss, None) => return bad("gauss needs delta".into()),
            (ProtocolKind::Gauss, Some(d)) if !(d > 0.0 && d < 1.0) => {
                return bad(format!("delta must lie in (0, 1), got {d}"))
            }
            (ProtocolKind::Gauss, _) => {}
            (_, Some(_)) => return bad(format!("{protocol} is pure LDP and takes no delta")),
            (_, None) => {}
        }
        if protocol == ProtocolKind::Rejsamp {
            if self.epsilon.is_some_and(|e| e > 1.0) {
                return bad("rejection-sampling protocol requires ε ≤ 1".into());
            }
            if self.n < 2 {
                return bad("rejsamp needs n >= 2".into());
            }
        }
        if protocol.uses_matrix() {
            match (&self.matrix, self.d) {
                (Some(MatrixFamily::Identity), Some(d)) if d != self.domain_size => {
                    return bad(format!("identity matrix needs d = J, got d = {d}"))
                }
                (Some(MatrixFamily::RandomUnitColumns), None) => {
                    return bad("random-unit-columns needs d".into())
                }
                _ => {}
            }
        } else if self.matrix.is_some() {
            return bad(format!("{protocol} takes no query matrix"));
        }
        if protocol == ProtocolKind::Adsamp {
            if !matches!(self.d, Some(d) if d >= 1) {
                return bad("adsamp needs d >= 1 rounds".into());
            }
        } else if self.strategy.is_some() {
            return bad(format!("{protocol} takes no strategy"));
        }
        Ok(())
    }

    pub fn master_seed(&self) -> SeedStream {
        SeedStream::new(self.seed)
    }

    /// The fixed `(p, A)` instance shared by every trial.
    pub fn build_instance(&self) -> Result<Instance> {
        let instance_seed = self.master_seed().derive(labels::INSTANCE);
        let j = self.domain_size;
        let dist = match &self.dist {
            DistributionFamily::Uniform => Distribution::uniform(j)?,
            DistributionFamily::Zipf(s) => Distribution::zipf(j, *s)?,
            DistributionFamily::Point(k) => Distribution::point(j, k - 1)?,
            DistributionFamily::TwoSpike => {
                use rand::seq::index::sample;
                let pair = sample(&mut instance_seed.derive(0).rng(), j, 2);
                Distribution::two_spike(j, pair.index(0), pair.index(1), TWO_SPIKE_GAP)?
            }
            DistributionFamily::File(path) => {
                let dist = Distribution::from_json_file(path)?;
                if dist.domain_size() != j {
                    return Err(Error::Config(format!(
                        "{} has J = {}, config has J = {j}",
                        path.display(),
                        dist.domain_size()
                    )));
                }
                dist
            }
        };
        let matrix = match &self.matrix {
            None => None,
            Some(MatrixFamily::Identity) => Some(QueryMatrix::identity(j)?),
            Some(MatrixFamily::RandomUnitColumns) => {
                let d = self.d.ok_or_else(|| missing("d"))?;
                Some(QueryMatrix::random_sphere_columns(
                    d,
                    j,
                    self.r,
                    &mut instance_seed.derive(1).rng(),
                )?)
            }
            Some(MatrixFamily::File(path)) => {
                let m = QueryMatrix::from_json_file(path)?;
                if m.domain_size() != j || self.d.is_some_and(|d| d != m.num_queries()) {
                    return Err(Error::Config(format!(
                        "{} does not match the configured J or d",
                        path.display()
                    )));
                }
                if m.radius() > self.r * (1.0 + crate::domain::NORM_SLACK) {
                    return Err(Error::Config(format!(
                        "{} declares r = {}, config has r = {}",
                        path.display(),
                        m.radius(),
                        self.r
                    )));
                }
                Some(m)
            }
        };
        Ok(Instance { dist, matrix })
    }

    /// Number of queries answered per trial.
    pub fn num_queries(&self, instance: &Instance) -> usize {
        match (&instance.matrix, self.protocol) {
            (Some(m), _) => m.num_queries(),
            (None, ProtocolKind::Phr) => self.domain_size,
            (None, _) => self.d.unwrap_or(0),
        }
    }

    pub(crate) fn budget(&self) -> Result<PrivacyBudget> {
        let eps = self.epsilon.ok_or_else(|| missing("epsilon"))?;
        PrivacyBudget::new(eps, self.delta.unwrap_or(0.0))
    }

    pub(crate) fn strategy(
        &self,
        instance: &Instance,
        seed: SeedStream,
    ) -> Result<Box<dyn AdaptiveStrategy>> {
        let j = self.domain_size;
        let r = self.r;
        Ok(match self.strategy.ok_or_else(|| missing("strategy"))? {
            StrategyFamily::Constant => Box::new(ConstantStrategy::new(
                (0..j).map(|v| if v % 2 == 0 { r } else { -r }).collect(),
            )),
            StrategyFamily::Random => Box::new(RandomStrategy::new(j, r, seed)),
            StrategyFamily::TrackingAdversary => {
                Box::new(TrackingAdversary::new(&instance.dist, r, seed))
            }
        })
    }
}

/// Ground truth held fixed across trials.
#[derive(Debug, Clone)]
pub struct Instance {
    pub dist: Distribution,
    pub matrix: Option<QueryMatrix>,
}
