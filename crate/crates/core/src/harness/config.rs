//! Experiment specification and its TOML form.
//!
//! ```toml
//! [scenario]
//! num_cells = 7
//!
//! [run]
//! seeds = [0, 1, 2]
//! methods = ["max-sinr", "dcd", "two-stage:8"]
//!
//! [dcd]
//! max_sweeps = 100
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::SubgradientConfig;
use crate::dcd::DcdOptions;
use crate::error::{Error, Result};
use crate::joint::{DirectDualOptions, JointOptions};
use crate::mimo::TwoStageOptions;
use crate::netmodel::NetworkConfig;
use crate::powerctl::NewtonOptions;

/// Environment variable capping the number of seeds solved concurrently.
pub const THREADS_ENV: &str = "HETNET_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    MaxSinr,
    Dcd,
    Subgradient,
    JointDcd,
    JointMaxSinr,
    DirectDual,
    /// Two-stage MIMO scheme with this many candidates per BS per slot.
    TwoStage(usize),
    MaxSinrWmmse,
}

/// Which CLI subcommand a method belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodFamily {
    FixedPower,
    Joint,
    Mimo,
}

impl Method {
    pub const ALL_NAMES: &'static str =
        "max-sinr, dcd, subgradient, joint-dcd, joint-maxsinr, direct-dual, two-stage[:S], maxsinr-wmmse";

    pub fn family(self) -> MethodFamily {
        match self {
            Method::MaxSinr | Method::Dcd | Method::Subgradient => MethodFamily::FixedPower,
            Method::JointDcd | Method::JointMaxSinr | Method::DirectDual => MethodFamily::Joint,
            Method::TwoStage(_) | Method::MaxSinrWmmse => MethodFamily::Mimo,
        }
    }

    /// File-name friendly label.
    pub fn slug(self) -> String {
        self.to_string().replace(':', "-s")
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::MaxSinr => f.write_str("max-sinr"),
            Method::Dcd => f.write_str("dcd"),
            Method::Subgradient => f.write_str("subgradient"),
            Method::JointDcd => f.write_str("joint-dcd"),
            Method::JointMaxSinr => f.write_str("joint-maxsinr"),
            Method::DirectDual => f.write_str("direct-dual"),
            Method::TwoStage(s) => write!(f, "two-stage:{s}"),
            Method::MaxSinrWmmse => f.write_str("maxsinr-wmmse"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let m = match s.as_str() {
            "max-sinr" | "maxsinr" => Method::MaxSinr,
            "dcd" => Method::Dcd,
            "subgradient" => Method::Subgradient,
            "joint-dcd" => Method::JointDcd,
            "joint-maxsinr" | "joint-max-sinr" => Method::JointMaxSinr,
            "direct-dual" => Method::DirectDual,
            "two-stage" => Method::TwoStage(8),
            "maxsinr-wmmse" | "max-sinr-wmmse" => Method::MaxSinrWmmse,
            other => match other.strip_prefix("two-stage:").map(str::parse::<usize>) {
                Some(Ok(n)) if n > 0 => Method::TwoStage(n),
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown method {other:?}; expected one of {}",
                        Method::ALL_NAMES
                    )))
                }
            },
        };
        Ok(m)
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub out: Option<PathBuf>,
    pub trace: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seeds: vec![0], methods: vec![Method::MaxSinr, Method::Dcd], out: None, trace: false }
    }
}

/// Everything needed to reproduce a batch of runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: NetworkConfig,
    pub run: RunSection,
    pub dcd: DcdOptions,
    pub subgradient: SubgradientConfig,
    pub newton: NewtonOptions,
    pub joint: JointOptions,
    pub direct_dual: DirectDualOptions,
    pub mimo: TwoStageOptions,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Checks the scenario and the options of every requested method before
    /// anything runs.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.run.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.run.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        self.scenario.validate()?;
        let l = self.scenario.num_bs();
        for &m in &self.run.methods {
            match m {
                Method::MaxSinr => {}
                Method::Dcd => self.dcd.validate(l)?,
                Method::Subgradient => self.subgradient.validate()?,
                Method::JointDcd | Method::JointMaxSinr => {
                    self.dcd.validate(l)?;
                    self.joint.validate()?;
                    self.newton.validate()?;
                }
                Method::DirectDual => {
                    self.direct_dual.validate()?;
                    self.newton.validate()?;
                }
                Method::TwoStage(s) => {
                    if s < self.scenario.bs_antennas {
                        return bad(format!("two-stage:{s} needs at least M = {} candidates", self.scenario.bs_antennas));
                    }
                    self.mimo_checks()?;
                }
                Method::MaxSinrWmmse => self.mimo_checks()?,
            }
        }
        Ok(())
    }

    fn mimo_checks(&self) -> Result<()> {
        if !self.scenario.has_mimo() {
            return Err(Error::InvalidConfig("MIMO methods need bs_antennas * user_antennas > 1".into()));
        }
        let o = &self.mimo;
        if !(o.ema_epsilon > 0.0 && o.ema_epsilon <= 1.0) || o.max_slots == 0 || o.window == 0 {
            return Err(Error::InvalidConfig("invalid scheduler options".into()));
        }
        o.wmmse.validate()?;
        o.joint.validate()?;
        o.newton.validate()
    }

    /// Concurrency cap from [`THREADS_ENV`]; `None` leaves the choice to rayon.
    pub fn thread_cap() -> Result<Option<usize>> {
        match std::env::var(THREADS_ENV) {
            Err(_) => Ok(None),
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(Some(n)),
                _ => Err(Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
            },
        }
    }
}

/// Parses `"0,1,5"` or `"0..10"` seed lists.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || Error::InvalidConfig(format!("bad seed entry {part:?}"));
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.parse().map_err(|_| bad())?;
            let b: u64 = b.parse().map_err(|_| bad())?;
            if b <= a {
                return Err(bad());
            }
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig("empty seed list".into()));
    }
    Ok(out)
}
