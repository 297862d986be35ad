//! Flat `key = value` run configuration.
//!
//! ```text
//! # proposed, s = 2, R = 3
//! dataset = w8a
//! method = proposed
//! s = 2
//! R = 3
//! coeff_bits = 16
//! ```
//!
//! `dataset` is a LIBSVM file path, resolved against `GRADCOMP_DATA_DIR` when
//! relative and that variable is set, or
//! `synthetic:<samples>:<dim>:<density>[:<seed>[:<positive rate>]]`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::baselines::LaqParams;
use crate::codec::QuantizerConfig;
use crate::error::{Error, Result};
use crate::protocol::{Method, PredictorKind, Scheme};
use crate::trigger::ScheduleSpec;
use crate::wire::Precision;
use crate::workload::{load_libsvm, partition_uniform, synthetic_sparse_binary, Dataset, LossConfig, Shard};

pub const DATA_DIR_ENV: &str = "GRADCOMP_DATA_DIR";

const KEYS: &[&str] = &[
    "dataset",
    "method",
    "K",
    "s",
    "gamma",
    "lambda",
    "R",
    "coeff_bits",
    "L",
    "schedule",
    "horizon",
    "max_iters",
    "target_gap",
    "seed",
    "probe_every",
    "probe_samples",
    "fstar",
    "fstar_gamma",
    "dim",
    "laq_window",
    "laq_factor",
    "laq_noise_weight",
    "laq_max_skip",
];

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Libsvm(PathBuf),
    Synthetic {
        samples: usize,
        dim: usize,
        density: f64,
        seed: u64,
        positive_rate: f64,
    },
}

impl DatasetSource {
    pub fn parse(value: &str) -> Result<Self> {
        if let Some(rest) = value.strip_prefix("synthetic:") {
            let parts: Vec<&str> = rest.split(':').collect();
            let bad = || Error::Config(format!("bad synthetic dataset {value:?} (synthetic:<samples>:<dim>:<density>[:<seed>[:<positive rate>]])"));
            if !(3..=5).contains(&parts.len()) {
                return Err(bad());
            }
            return Ok(DatasetSource::Synthetic {
                samples: parts[0].parse().map_err(|_| bad())?,
                dim: parts[1].parse().map_err(|_| bad())?,
                density: parts[2].parse().map_err(|_| bad())?,
                seed: parts.get(3).map_or(Ok(0), |s| s.parse()).map_err(|_| bad())?,
                positive_rate: parts.get(4).map_or(Ok(0.5), |s| s.parse()).map_err(|_| bad())?,
            });
        }
        Ok(DatasetSource::Libsvm(PathBuf::from(value)))
    }

    /// Reads or generates the dataset; relative paths go through `data_dir`.
    pub fn load(&self, data_dir: Option<&Path>, dim: Option<usize>) -> Result<Dataset> {
        match self {
            DatasetSource::Libsvm(path) => {
                let path = match data_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                load_libsvm(path, dim)
            }
            DatasetSource::Synthetic {
                samples,
                dim,
                density,
                seed,
                positive_rate,
            } => synthetic_sparse_binary(*samples, *dim, *density, *positive_rate, *seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub method: Method,
    pub agents: usize,
    /// Predictor memory; zero turns prediction off.
    pub memory: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub rate: f64,
    pub coeff_bits: u32,
    /// Top-L size for sparsifier methods.
    pub keep: Option<usize>,
    pub schedule: ScheduleSpec,
    pub horizon: f64,
    pub max_iters: usize,
    pub target_gap: f64,
    pub seed: u64,
    pub probe_every: Option<usize>,
    pub probe_samples: usize,
    pub fstar: Option<f64>,
    /// Step size of the exact reference run that produces `f*`.
    pub fstar_gamma: f64,
    pub dim: Option<usize>,
    pub laq: LaqParams,
}

impl RunConfig {
    /// Defaults of the logistic-regression benchmark.
    pub fn new(dataset: DatasetSource, method: Method) -> Self {
        Self {
            dataset,
            method,
            agents: 10,
            memory: 2,
            gamma: 0.05,
            lambda: 0.01,
            rate: 3.0,
            coeff_bits: 16,
            keep: None,
            schedule: ScheduleSpec::Linear,
            horizon: 1000.0,
            max_iters: 5000,
            target_gap: 1e-5,
            seed: 0,
            probe_every: None,
            probe_samples: 10_000,
            fstar: None,
            fstar_gamma: 0.05,
            dim: None,
            laq: LaqParams::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key {key:?}", i + 1)));
            }
            if map.insert(key, (i + 1, value.trim())).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", i + 1)));
            }
        }
        let required = |k: &str| {
            map.get(k)
                .map(|&(_, v)| v)
                .ok_or_else(|| Error::Config(format!("missing required key {k:?}")))
        };
        let mut cfg = Self::new(DatasetSource::parse(required("dataset")?)?, required("method")?.parse()?);

        fn num<T: std::str::FromStr>(map: &BTreeMap<&str, (usize, &str)>, key: &str) -> Result<Option<T>> {
            map.get(key)
                .map(|&(line, v)| {
                    v.parse::<T>()
                        .map_err(|_| Error::Config(format!("line {line}: cannot parse {key} = {v:?}")))
                })
                .transpose()
        }
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = num(&map, $key)? {
                    $field = v;
                }
            };
        }
        set!(cfg.agents, "K");
        set!(cfg.memory, "s");
        set!(cfg.gamma, "gamma");
        set!(cfg.lambda, "lambda");
        set!(cfg.rate, "R");
        set!(cfg.coeff_bits, "coeff_bits");
        set!(cfg.horizon, "horizon");
        set!(cfg.max_iters, "max_iters");
        set!(cfg.target_gap, "target_gap");
        set!(cfg.seed, "seed");
        set!(cfg.probe_samples, "probe_samples");
        set!(cfg.fstar_gamma, "fstar_gamma");
        set!(cfg.laq.window, "laq_window");
        set!(cfg.laq.factor, "laq_factor");
        set!(cfg.laq.noise_weight, "laq_noise_weight");
        set!(cfg.laq.max_skip, "laq_max_skip");
        cfg.keep = num(&map, "L")?;
        cfg.probe_every = num(&map, "probe_every")?;
        cfg.fstar = num(&map, "fstar")?;
        cfg.dim = num(&map, "dim")?;
        if let Some(&(_, v)) = map.get("schedule") {
            cfg.schedule = v.parse()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.agents == 0 {
            return fail("K must be >= 1".into());
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return fail(format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(self.fstar_gamma > 0.0) || !self.fstar_gamma.is_finite() {
            return fail(format!("fstar_gamma must be > 0, got {}", self.fstar_gamma));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return fail(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return fail(format!("R must be > 0, got {}", self.rate));
        }
        if self.coeff_bits != 16 && self.coeff_bits != 32 {
            return fail(format!("coeff_bits must be 16 or 32, got {}", self.coeff_bits));
        }
        if !(self.horizon > 0.0) {
            return fail(format!("horizon must be > 0, got {}", self.horizon));
        }
        if self.max_iters == 0 {
            return fail("max_iters must be >= 1".into());
        }
        if self.target_gap.is_nan() {
            return fail("target_gap must be a number".into());
        }
        if self.probe_every == Some(0) || self.probe_samples == 0 {
            return fail("probe_every and probe_samples must be >= 1".into());
        }
        if self.method.uses_sparsifier() && !self.keep.is_some_and(|l| l >= 1) {
            return fail(format!("method {} needs L >= 1", self.method));
        }
        if self.method == Method::ProposedTopL && self.memory == 0 {
            return fail("proposed_topl needs s >= 1".into());
        }
        if let DatasetSource::Synthetic {
            samples,
            dim,
            density,
            positive_rate,
            ..
        } = self.dataset
        {
            if samples < self.agents
                || dim == 0
                || !(density > 0.0 && density <= 1.0)
                || !(positive_rate > 0.0 && positive_rate < 1.0)
            {
                return fail(
                    "synthetic dataset needs samples >= K, dim >= 1, density in (0, 1] and positive rate in (0, 1)"
                        .into(),
                );
            }
        }
        self.laq.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn precision(&self) -> Precision {
        if self.coeff_bits == 16 {
            Precision::Bits16
        } else {
            Precision::Bits32
        }
    }

    pub fn scheme(&self) -> Result<Scheme> {
        let quantizer = QuantizerConfig::new(self.rate, self.precision())?;
        let schedule = || self.schedule.build(self.horizon, self.agents);
        let keep = self.keep.unwrap_or(1);
        Ok(match self.method {
            Method::Proposed => {
                let mut s = Scheme::proposed(self.memory, schedule()?, quantizer);
                if self.memory == 0 {
                    s.predictor = PredictorKind::Disabled;
                }
                s
            }
            Method::ProposedTopL => Scheme::proposed_topl(self.memory, keep, schedule()?, self.precision()),
            Method::GradDiff => Scheme::grad_diff(quantizer),
            Method::Laq => Scheme::laq(self.laq, quantizer),
            Method::Ef21 => Scheme::ef21(keep),
        })
    }

    pub fn loss(&self) -> Result<LossConfig> {
        LossConfig::new(self.lambda, self.agents)
    }

    pub fn data_dir() -> Option<PathBuf> {
        std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)
    }

    pub fn load_shards(&self) -> Result<Vec<Shard>> {
        let data = self.dataset.load(Self::data_dir().as_deref(), self.dim)?;
        partition_uniform(Arc::new(data), self.agents)
    }

    /// Key/value text that parses back to the same config.
    pub fn to_text(&self) -> String {
        let dataset = match &self.dataset {
            DatasetSource::Libsvm(p) => p.display().to_string(),
            DatasetSource::Synthetic {
                samples,
                dim,
                density,
                seed,
                positive_rate,
            } => {
                format!("synthetic:{samples}:{dim}:{density}:{seed}:{positive_rate}")
            }
        };
        let schedule = match &self.schedule {
            ScheduleSpec::Linear => "linear".to_string(),
            ScheduleSpec::Constant(c) => format!("const:{c}"),
            ScheduleSpec::PerAgent(cs) => {
                format!("agents:{}", cs.iter().map(f64::to_string).collect::<Vec<_>>().join(","))
            }
        };
        let mut out = format!(
            "dataset = {dataset}\nmethod = {}\nK = {}\ns = {}\ngamma = {}\nlambda = {}\nR = {}\ncoeff_bits = {}\nschedule = {schedule}\nhorizon = {}\nmax_iters = {}\ntarget_gap = {}\nseed = {}\nprobe_samples = {}\nfstar_gamma = {}\nlaq_window = {}\nlaq_factor = {}\nlaq_noise_weight = {}\nlaq_max_skip = {}\n",
            self.method,
            self.agents,
            self.memory,
            self.gamma,
            self.lambda,
            self.rate,
            self.coeff_bits,
            self.horizon,
            self.max_iters,
            self.target_gap,
            self.seed,
            self.probe_samples,
            self.fstar_gamma,
            self.laq.window,
            self.laq.factor,
            self.laq.noise_weight,
            self.laq.max_skip,
        );
        for (key, value) in [
            ("L", self.keep.map(|v| v.to_string())),
            ("probe_every", self.probe_every.map(|v| v.to_string())),
            ("fstar", self.fstar.map(|v| format!("{v:.16e}"))),
            ("dim", self.dim.map(|v| v.to_string())),
        ] {
            if let Some(v) = value {
                out.push_str(&format!("{key} = {v}\n"));
            }
        }
        out
    }
}
