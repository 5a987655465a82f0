use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use proxgraph::hnsw::{FastHnswParams, HnswParams};
use proxgraph::nsg::{FastNsgParams, NsgParams, StopRule};
use proxgraph::synth::Distribution;

use crate::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builder {
    OriNsg,
    FastNsg,
    OriHnsw,
    FastHnsw,
}

impl Builder {
    pub fn is_layered(self) -> bool {
        matches!(self, Builder::OriHnsw | Builder::FastHnsw)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistKind {
    Uniform,
    Gaussian,
    Clustered,
}

/// Where a dataset comes from: a vector file, or
/// `synthetic:<uniform|gaussian|clustered>:<n>:<d>:<seed>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    File(PathBuf),
    Synthetic {
        dist: DistKind,
        n: usize,
        d: usize,
        seed: u64,
    },
}

impl DistKind {
    pub fn distribution(self) -> Distribution {
        match self {
            DistKind::Uniform => Distribution::Uniform,
            DistKind::Gaussian => Distribution::Gaussian,
            DistKind::Clustered => Distribution::clustered(10),
        }
    }
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let Some(spec) = s.strip_prefix("synthetic:") else {
            return Ok(DataSource::File(PathBuf::from(s)));
        };
        let parts: Vec<&str> = spec.split(':').collect();
        let [dist, n, d, seed] = parts[..] else {
            return Err(format!("expected synthetic:<dist>:<n>:<d>:<seed>, got {s}"));
        };
        let dist = DistKind::from_str(dist, true)?;
        let num = |x: &str, what: &str| x.parse::<u64>().map_err(|e| format!("{what} {x:?}: {e}"));
        Ok(DataSource::Synthetic {
            dist,
            n: num(n, "n")? as usize,
            d: num(d, "d")? as usize,
            seed: num(seed, "seed")?,
        })
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::File(p) => write!(f, "{}", p.display()),
            DataSource::Synthetic { dist, n, d, seed } => {
                let name = dist.to_possible_value().unwrap();
                write!(f, "synthetic:{}:{n}:{d}:{seed}", name.get_name())
            }
        }
    }
}

/// Builder selection and parameters. Fields that a builder does not use are
/// ignored by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub builder: Builder,
    pub k0: usize,
    pub k: usize,
    pub l: usize,
    pub m: usize,
    pub alpha: f64,
    pub ef: usize,
    /// Refinement rounds (the cap when `target_recall` is set).
    pub iters: usize,
    pub target_recall: Option<f64>,
    pub epsilon: f64,
    /// Confidence exponent: estimates hold with probability `1 - n^-l_conf`.
    pub l_conf: f64,
    pub m_factor: Option<f64>,
    pub knng_iters: usize,
    pub rho: f64,
    pub cache: bool,
    pub parallel_insert: bool,
    pub seed: u64,
}

impl BuildConfig {
    pub fn new(builder: Builder) -> Self {
        BuildConfig {
            builder,
            k0: 32,
            k: 64,
            l: 64,
            m: 32,
            alpha: 66.0,
            ef: 64,
            iters: 2,
            target_recall: None,
            epsilon: 0.6,
            l_conf: 1.0,
            m_factor: None,
            knng_iters: 10,
            rho: 1.0,
            cache: true,
            parallel_insert: false,
            seed: 0,
        }
    }

    /// Checks every parameter the selected builder reads.
    pub fn validate(&self) -> Result<(), BenchError> {
        let usage = |msg: String| Err(BenchError::Usage(msg));
        if self.m == 0 {
            return usage("M must be at least 1".into());
        }
        match self.builder {
            Builder::OriNsg | Builder::FastNsg => {
                if self.k0 == 0 || self.k == 0 || self.l < self.k {
                    return usage(format!(
                        "need k0 >= 1 and 1 <= k <= L (k = {}, L = {})",
                        self.k, self.l
                    ));
                }
            }
            Builder::OriHnsw | Builder::FastHnsw => {
                if self.ef == 0 {
                    return usage("ef must be at least 1".into());
                }
                if self.builder == Builder::FastHnsw && self.k0 == 0 {
                    return usage("k0 must be at least 1".into());
                }
            }
        }
        if matches!(self.builder, Builder::FastNsg | Builder::FastHnsw) {
            if !(60.0..180.0).contains(&self.alpha) {
                return usage(format!("alpha {} outside [60, 180)", self.alpha));
            }
            if let Some(t) = self.target_recall {
                if !(0.0..=1.0).contains(&t) {
                    return usage(format!("target recall {t} outside [0, 1]"));
                }
                if !(self.epsilon > 0.0 && self.epsilon <= 1.0) || self.l_conf < 1.0 {
                    return usage("need 0 < epsilon <= 1 and l >= 1".into());
                }
            }
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return usage(format!("rho {} outside (0, 1]", self.rho));
        }
        if let Some(mf) = self.m_factor {
            if !(mf > 0.0 && mf.is_finite()) {
                return usage(format!("level multiplier {mf} must be positive"));
            }
        }
        Ok(())
    }

    fn stop(&self) -> StopRule {
        match self.target_recall {
            Some(target) => StopRule::TargetRecall {
                target,
                epsilon: self.epsilon,
                l: self.l_conf,
                max_iters: self.iters,
            },
            None => StopRule::MaxIters(self.iters),
        }
    }

    pub fn nsg_params(&self) -> NsgParams {
        let mut p = NsgParams::new(self.k0, self.k, self.l, self.m);
        p.knng_iters = self.knng_iters;
        p.knng_rho = self.rho;
        p.seed = self.seed;
        p
    }

    pub fn fastnsg_params(&self) -> FastNsgParams {
        let mut p = FastNsgParams::new(self.k0, self.k, self.l, self.m);
        p.base = self.nsg_params();
        p.alpha = self.alpha;
        p.stop = self.stop();
        p.cache = self.cache;
        p
    }

    pub fn hnsw_params(&self) -> HnswParams {
        let mut p = HnswParams::new(self.ef, self.m);
        p.m_factor = self.m_factor;
        p.seed = self.seed;
        p.parallel = self.parallel_insert;
        p
    }

    pub fn fasthnsw_params(&self) -> FastHnswParams {
        let mut p = FastHnswParams::new(self.k0, self.ef, self.m);
        p.alpha = self.alpha;
        p.m_factor = self.m_factor;
        p.stop = self.stop();
        p.knng_iters = self.knng_iters;
        p.knng_rho = self.rho;
        p.cache = self.cache;
        p.seed = self.seed;
        p
    }
}
