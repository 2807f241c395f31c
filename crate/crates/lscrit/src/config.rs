//! Experiment configuration: TOML text or a built-in preset name.
//!
//! ```toml
//! preset = "gmm_table3"      # optional; remaining keys override it
//! seed = 1
//! n = 400
//! H_candidates = [1, 2, 3, 4]
//! beta0 = [1.0, 10.0]
//! criteria = ["WBIC", "LS", "sBIC"]
//! lambda_policy = "auto"     # auto | exact | estimated | bound
//! lambda_pair = [1.0, 1.5]
//! plug_in = "map"            # map | mle
//! output = "report.csv"
//!
//! [model]
//! family = "gmm"             # gmm | rrr | normal_mean
//! dim = 2
//! weights = [0.5, 0.5]
//! means = [[-1.0, -1.0], [1.0, 1.0]]
//!
//! [chain]
//! chains = 4
//! warmup = 2000
//! draws = 10000
//! thin = 1
//! initial_scale = 0.1
//! ```
//!
//! Without a preset, `H_candidates` is required and everything else falls
//! back to the `gmm_table3` setup.

use std::path::PathBuf;

use lscrit_core::criteria::{CriterionName, PlugIn, DEFAULT_BETA0_PAIR};
use lscrit_core::model::{mle, GmmParams, ModelFamily, NormalMeanPrior, ParameterPoint, RrrParams};
use lscrit_core::sampler::ChainConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use toml::{Table, Value};

use crate::error::{Error, Result};

pub const PRESETS: [&str; 3] = ["gmm_table3", "gmm_table4", "rrr_table2"];

/// Seed of the fixed true regression coefficients in `rrr_table2`.
pub const RRR_PARAMS_SEED: u64 = 20_240_601;

/// Singular values below this count as zero when checking the true rank.
pub const RANK_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    RrrTable2,
    GmmTable3,
    GmmTable4,
    Custom,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::RrrTable2 => "rrr_table2",
            ExperimentKind::GmmTable3 => "gmm_table3",
            ExperimentKind::GmmTable4 => "gmm_table4",
            ExperimentKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// Unit-covariance Gaussian mixture; candidates are component counts.
    Gmm {
        dim: usize,
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
    },
    /// Reduced-rank regression; candidates are ranks. True coefficients are
    /// drawn from the prior with `params_seed`.
    Rrr {
        inputs: usize,
        outputs: usize,
        true_rank: usize,
        params_seed: u64,
    },
    /// Scalar normal mean; there is a single candidate.
    NormalMean { prior: NormalMeanPrior, theta: f64 },
}

impl ModelSpec {
    fn table3() -> Self {
        ModelSpec::Gmm {
            dim: 2,
            weights: vec![0.5, 0.5],
            means: vec![vec![-1.0, -1.0], vec![1.0, 1.0]],
        }
    }

    fn family_name(&self) -> &'static str {
        match self {
            ModelSpec::Gmm { .. } => "gmm",
            ModelSpec::Rrr { .. } => "rrr",
            ModelSpec::NormalMean { .. } => "normal_mean",
        }
    }

    /// The model fitted for a candidate size.
    pub fn family(&self, candidate: usize) -> Result<ModelFamily> {
        Ok(match self {
            ModelSpec::Gmm { dim, .. } => ModelFamily::gmm(candidate, *dim)?,
            ModelSpec::Rrr { inputs, outputs, .. } => ModelFamily::rrr(*inputs, *outputs, candidate)?,
            ModelSpec::NormalMean { prior, .. } => ModelFamily::NormalMean { prior: *prior },
        })
    }

    /// The family the data are generated from.
    pub fn true_family(&self) -> Result<ModelFamily> {
        self.family(self.true_size())
    }

    /// H* for mixtures, r for regression, 1 for the normal mean.
    pub fn true_size(&self) -> usize {
        match self {
            ModelSpec::Gmm { weights, .. } => weights.len(),
            ModelSpec::Rrr { true_rank, .. } => *true_rank,
            ModelSpec::NormalMean { .. } => 1,
        }
    }

    /// The true parameter point. For regression this draws A and B from
    /// the prior and checks that B·A has the requested rank.
    pub fn truth(&self) -> Result<ParameterPoint> {
        match self {
            ModelSpec::Gmm { weights, means, .. } => {
                Ok(ParameterPoint::Gmm(GmmParams::from_rows(weights.clone(), means)?))
            }
            ModelSpec::Rrr {
                inputs,
                outputs,
                true_rank,
                params_seed,
            } => {
                if *true_rank == 0 {
                    let p = RrrParams::new(vec![0.0; *inputs], vec![0.0; *outputs], *inputs, *outputs, 1)?;
                    return Ok(ParameterPoint::Rrr(p));
                }
                let family = ModelFamily::rrr(*inputs, *outputs, *true_rank)?;
                let mut rng = ChaCha8Rng::seed_from_u64(*params_seed);
                let point = family.sample_prior(&mut rng);
                let rank = mle::coefficient_rank(point.as_rrr().expect("regression point"), RANK_TOLERANCE);
                if rank != *true_rank {
                    return Err(Error::Config(format!(
                        "true coefficients from params_seed {params_seed} have rank {rank}, not {true_rank}"
                    )));
                }
                Ok(point)
            }
            ModelSpec::NormalMean { theta, .. } => Ok(ParameterPoint::normal_mean(*theta)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaPolicy {
    /// Exact formula when one applies, else λ̂, else the mixture bound.
    Auto,
    Exact,
    Estimated,
    Bound,
}

impl LambdaPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            LambdaPolicy::Auto => "auto",
            LambdaPolicy::Exact => "exact",
            LambdaPolicy::Estimated => "estimated",
            LambdaPolicy::Bound => "bound",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [LambdaPolicy::Auto, LambdaPolicy::Exact, LambdaPolicy::Estimated, LambdaPolicy::Bound]
            .into_iter()
            .find(|p| p.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model: ModelSpec,
    /// Total sample size.
    pub n: usize,
    pub candidates: Vec<usize>,
    /// β₀ values for WBIC rows.
    pub beta0: Vec<f64>,
    pub criteria: Vec<CriterionName>,
    pub lambda_policy: LambdaPolicy,
    /// β₀ pair for λ̂.
    pub lambda_pair: (f64, f64),
    pub plug_in: PlugIn,
    /// Per-run chain settings; the seed field is ignored in favour of
    /// seeds derived from `seed`.
    pub chain: ChainConfig,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Keys that were filled from defaults rather than given.
    pub defaulted: Vec<String>,
}

/// Chain settings of the presets. The overfitted candidates mix slowly, and
/// λ̂ divides a WBIC difference by a small factor, so the default 2000 draws
/// leave too much Monte Carlo noise for the selection to be reliable.
pub fn preset_chain() -> ChainConfig {
    ChainConfig {
        draws: 10_000,
        ..ChainConfig::default()
    }
}

impl ExperimentConfig {
    fn base(kind: ExperimentKind, model: ModelSpec, n: usize, candidates: Vec<usize>, beta0: Vec<f64>) -> Self {
        Self {
            kind,
            model,
            n,
            candidates,
            beta0,
            criteria: CriterionName::ALL.to_vec(),
            lambda_policy: LambdaPolicy::Auto,
            lambda_pair: DEFAULT_BETA0_PAIR,
            plug_in: PlugIn::MapOverSamples,
            chain: ChainConfig::default(),
            seed: 0,
            output: None,
            defaulted: Vec::new(),
        }
    }

    /// Two well-separated components in the plane, 200 draws from each.
    pub fn gmm_table3() -> Self {
        let mut cfg = Self::base(ExperimentKind::GmmTable3, ModelSpec::table3(), 400, vec![1, 2, 3, 4], vec![1.0, 10.0]);
        cfg.chain = preset_chain();
        cfg
    }

    /// Three components at −2μ, 0, 2μ with μ = (1, 1), 600 draws from each.
    pub fn gmm_table4() -> Self {
        let model = ModelSpec::Gmm {
            dim: 2,
            weights: vec![1.0 / 3.0; 3],
            means: vec![vec![-2.0, -2.0], vec![0.0, 0.0], vec![2.0, 2.0]],
        };
        let mut cfg = Self::base(ExperimentKind::GmmTable4, model, 1800, vec![1, 2, 3, 4], vec![1.0, 10.0]);
        cfg.chain = preset_chain();
        cfg
    }

    /// Rank-3 regression with 3 inputs and 4 outputs fitted at H = 3.
    pub fn rrr_table2() -> Self {
        let model = ModelSpec::Rrr {
            inputs: 3,
            outputs: 4,
            true_rank: 3,
            params_seed: RRR_PARAMS_SEED,
        };
        let mut cfg = Self::base(ExperimentKind::RrrTable2, model, 100, vec![3], vec![3.0, 5.0, 7.0, 10.0]);
        cfg.lambda_policy = LambdaPolicy::Estimated;
        cfg.chain = preset_chain();
        cfg
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "gmm_table3" => Some(Self::gmm_table3()),
            "gmm_table4" => Some(Self::gmm_table4()),
            "rrr_table2" => Some(Self::rrr_table2()),
            _ => None,
        }
    }

    /// Checks every invariant the runner relies on.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n < 3 {
            return bad(format!("n must be at least 3, got {}", self.n));
        }
        if self.candidates.is_empty() {
            return bad("the candidate set is empty".into());
        }
        let mut sorted = self.candidates.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.candidates.len() || sorted[0] == 0 {
            return bad(format!("candidates must be distinct and positive: {:?}", self.candidates));
        }
        if self.beta0.is_empty() || self.beta0.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return bad(format!("beta0 must be a nonempty list of positive values: {:?}", self.beta0));
        }
        let (b1, b2) = self.lambda_pair;
        if !(b1 > 0.0 && b2 > 0.0 && b1.is_finite() && b2.is_finite()) || b1 == b2 {
            return bad(format!("lambda_pair must be two distinct positive values: ({b1}, {b2})"));
        }
        if self.criteria.is_empty() {
            return bad("criteria list is empty".into());
        }
        self.chain.validate()?;
        match &self.model {
            ModelSpec::Rrr {
                inputs,
                outputs,
                true_rank,
                ..
            } => {
                if *true_rank > (*inputs).min(*outputs) {
                    return bad(format!("true_rank {true_rank} exceeds min(inputs, outputs)"));
                }
            }
            ModelSpec::NormalMean { .. } => {
                if self.candidates.len() != 1 {
                    return bad("the normal-mean model has a single candidate".into());
                }
            }
            ModelSpec::Gmm { .. } => {}
        }
        self.model.truth()?;
        for &c in &self.candidates {
            self.model.family(c)?;
        }
        Ok(())
    }
}

const TOP_KEYS: [&str; 12] = [
    "preset",
    "seed",
    "n",
    "H_candidates",
    "beta0",
    "criteria",
    "lambda_policy",
    "lambda_pair",
    "plug_in",
    "output",
    "model",
    "chain",
];
const MODEL_KEYS: [&str; 11] = [
    "family",
    "dim",
    "weights",
    "means",
    "inputs",
    "outputs",
    "true_rank",
    "params_seed",
    "prior",
    "prior_variance",
    "theta",
];
const CHAIN_KEYS: [&str; 5] = ["chains", "warmup", "draws", "thin", "initial_scale"];

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

fn as_usize(v: &Value, key: &str) -> Result<usize> {
    match v.as_integer() {
        Some(i) if i >= 0 => Ok(i as usize),
        _ => config_err(format!("{key} must be a non-negative integer")),
    }
}

fn as_u64(v: &Value, key: &str) -> Result<u64> {
    match v.as_integer() {
        Some(i) if i >= 0 => Ok(i as u64),
        _ => config_err(format!("{key} must be a non-negative integer")),
    }
}

fn as_f64(v: &Value, key: &str) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => config_err(format!("{key} must be a number")),
    }
}

fn as_str<'a>(v: &'a Value, key: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::Config(format!("{key} must be a string")))
}

fn as_array<'a>(v: &'a Value, key: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::Config(format!("{key} must be an array")))
}

fn f64_list(v: &Value, key: &str) -> Result<Vec<f64>> {
    as_array(v, key)?.iter().map(|x| as_f64(x, key)).collect()
}

fn usize_list(v: &Value, key: &str) -> Result<Vec<usize>> {
    as_array(v, key)?.iter().map(|x| as_usize(x, key)).collect()
}

fn unknown_keys(table: &Table, known: &[&str], prefix: &str, out: &mut Vec<String>) {
    for k in table.keys() {
        if !known.contains(&k.as_str()) {
            out.push(format!("{prefix}{k}"));
        }
    }
}

/// Parses configuration text: a bare preset name or TOML.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return config_err("empty configuration");
    }
    if !trimmed.contains(['=', '[', '\n']) {
        return ExperimentConfig::preset(trimmed)
            .ok_or_else(|| Error::Config(format!("unknown preset {trimmed:?}; known: {}", PRESETS.join(", "))));
    }
    let table: Table = trimmed
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(format!("malformed configuration: {}", e.message())))?;

    let mut unknown = Vec::new();
    unknown_keys(&table, &TOP_KEYS, "", &mut unknown);
    for (section, keys) in [("model", &MODEL_KEYS[..]), ("chain", &CHAIN_KEYS[..])] {
        match table.get(section) {
            Some(Value::Table(t)) => unknown_keys(t, keys, &format!("{section}."), &mut unknown),
            Some(_) => return config_err(format!("{section} must be a table")),
            None => {}
        }
    }
    if !unknown.is_empty() {
        return config_err(format!("unknown keys: {}", unknown.join(", ")));
    }

    let mut cfg = match table.get("preset") {
        Some(v) => {
            let name = as_str(v, "preset")?;
            ExperimentConfig::preset(name).ok_or_else(|| {
                Error::Config(format!("unknown preset {name:?}; known: {}", PRESETS.join(", ")))
            })?
        }
        None => {
            if !table.contains_key("H_candidates") {
                return config_err("missing required key: H_candidates");
            }
            let mut c = ExperimentConfig::gmm_table3();
            c.kind = ExperimentKind::Custom;
            c
        }
    };

    let mut given: Vec<String> = Vec::new();
    for (key, value) in &table {
        given.push(key.clone());
        match key.as_str() {
            "preset" => {}
            "seed" => cfg.seed = as_u64(value, key)?,
            "n" => cfg.n = as_usize(value, key)?,
            "H_candidates" => cfg.candidates = usize_list(value, key)?,
            "beta0" => cfg.beta0 = f64_list(value, key)?,
            "criteria" => {
                cfg.criteria = as_array(value, key)?
                    .iter()
                    .map(|v| {
                        let s = as_str(v, key)?;
                        CriterionName::parse(s).ok_or_else(|| Error::Config(format!("unknown criterion {s:?}")))
                    })
                    .collect::<Result<_>>()?;
            }
            "lambda_policy" => {
                let s = as_str(value, key)?;
                cfg.lambda_policy =
                    LambdaPolicy::parse(s).ok_or_else(|| Error::Config(format!("unknown lambda_policy {s:?}")))?;
            }
            "lambda_pair" => {
                let pair = f64_list(value, key)?;
                if pair.len() != 2 {
                    return config_err("lambda_pair must have exactly two entries");
                }
                cfg.lambda_pair = (pair[0], pair[1]);
            }
            "plug_in" => {
                cfg.plug_in = match as_str(value, key)? {
                    "map" => PlugIn::MapOverSamples,
                    "mle" => PlugIn::Mle,
                    other => return config_err(format!("unknown plug_in {other:?}; use map or mle")),
                }
            }
            "output" => cfg.output = Some(PathBuf::from(as_str(value, key)?)),
            "model" => {
                let t = value.as_table().expect("checked above");
                cfg.model = parse_model(t, &cfg.model)?;
                given.extend(t.keys().map(|k| format!("model.{k}")));
            }
            "chain" => {
                let t = value.as_table().expect("checked above");
                parse_chain(t, &mut cfg.chain)?;
                given.extend(t.keys().map(|k| format!("chain.{k}")));
            }
            _ => unreachable!("unknown keys rejected above"),
        }
    }
    let mut defaulted: Vec<String> = TOP_KEYS
        .iter()
        .filter(|k| !matches!(**k, "preset" | "model" | "chain" | "output"))
        .map(|k| k.to_string())
        .collect();
    defaulted.extend(CHAIN_KEYS.iter().map(|k| format!("chain.{k}")));
    if !given.iter().any(|k| k == "model") {
        defaulted.push("model".into());
    }
    defaulted.retain(|k| !given.contains(k));
    cfg.defaulted = defaulted;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_model(t: &Table, current: &ModelSpec) -> Result<ModelSpec> {
    let family = match t.get("family") {
        Some(v) => as_str(v, "model.family")?,
        None => current.family_name(),
    };
    // switching family starts from that family's defaults
    let mut spec = if family == current.family_name() {
        current.clone()
    } else {
        match family {
            "gmm" => ModelSpec::table3(),
            "rrr" => ExperimentConfig::rrr_table2().model,
            "normal_mean" => ModelSpec::NormalMean {
                prior: NormalMeanPrior::Uniform,
                theta: 0.0,
            },
            other => return config_err(format!("unknown model.family {other:?}")),
        }
    };
    let allowed: &[&str] = match &spec {
        ModelSpec::Gmm { .. } => &["family", "dim", "weights", "means"],
        ModelSpec::Rrr { .. } => &["family", "inputs", "outputs", "true_rank", "params_seed"],
        ModelSpec::NormalMean { .. } => &["family", "prior", "prior_variance", "theta"],
    };
    let misplaced: Vec<&str> = t.keys().map(String::as_str).filter(|k| !allowed.contains(k)).collect();
    if !misplaced.is_empty() {
        return config_err(format!(
            "keys not used by the {family} model: {}",
            misplaced.join(", ")
        ));
    }
    match &mut spec {
        ModelSpec::Gmm { dim, weights, means } => {
            if let Some(v) = t.get("dim") {
                *dim = as_usize(v, "model.dim")?;
            }
            if let Some(v) = t.get("weights") {
                *weights = f64_list(v, "model.weights")?;
            }
            if let Some(v) = t.get("means") {
                *means = as_array(v, "model.means")?
                    .iter()
                    .map(|row| f64_list(row, "model.means"))
                    .collect::<Result<_>>()?;
            }
            if means.iter().any(|row| row.len() != *dim) || means.len() != weights.len() {
                return config_err(format!(
                    "model.means must be {} rows of length {dim}",
                    weights.len()
                ));
            }
        }
        ModelSpec::Rrr {
            inputs,
            outputs,
            true_rank,
            params_seed,
        } => {
            if let Some(v) = t.get("inputs") {
                *inputs = as_usize(v, "model.inputs")?;
            }
            if let Some(v) = t.get("outputs") {
                *outputs = as_usize(v, "model.outputs")?;
            }
            if let Some(v) = t.get("true_rank") {
                *true_rank = as_usize(v, "model.true_rank")?;
            }
            if let Some(v) = t.get("params_seed") {
                *params_seed = as_u64(v, "model.params_seed")?;
            }
        }
        ModelSpec::NormalMean { prior, theta } => {
            if let Some(v) = t.get("theta") {
                *theta = as_f64(v, "model.theta")?;
            }
            let variance = t.get("prior_variance").map(|v| as_f64(v, "model.prior_variance")).transpose()?;
            match t.get("prior").map(|v| as_str(v, "model.prior")).transpose()? {
                Some("uniform") => *prior = NormalMeanPrior::Uniform,
                Some("gaussian") => {
                    *prior = NormalMeanPrior::Gaussian {
                        variance: variance.unwrap_or(1.0),
                    }
                }
                Some(other) => return config_err(format!("unknown model.prior {other:?}")),
                None => {
                    if let Some(variance) = variance {
                        *prior = NormalMeanPrior::Gaussian { variance };
                    }
                }
            }
        }
    }
    Ok(spec)
}

fn parse_chain(t: &Table, chain: &mut ChainConfig) -> Result<()> {
    if let Some(v) = t.get("chains") {
        chain.chains = as_usize(v, "chain.chains")?;
    }
    if let Some(v) = t.get("warmup") {
        chain.warmup = as_usize(v, "chain.warmup")?;
    }
    if let Some(v) = t.get("draws") {
        chain.draws = as_usize(v, "chain.draws")?;
    }
    if let Some(v) = t.get("thin") {
        chain.thin = as_usize(v, "chain.thin")?;
    }
    if let Some(v) = t.get("initial_scale") {
        chain.initial_scale = as_f64(v, "chain.initial_scale")?;
    }
    Ok(())
}
