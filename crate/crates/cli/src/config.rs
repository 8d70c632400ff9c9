//! Plain-text `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Lists are comma separated. Unknown keys are rejected so that typos do not
//! silently fall back to defaults.

use std::collections::BTreeMap;
use std::str::FromStr;

use critperc::components::ThresholdRule;
use critperc::lattice::{EdgeModel, TorusSpec};
use critperc::rng::parse_seed;
use serde::Serialize;

use crate::CliError;

const KNOWN_KEYS: &[&str] = &[
    "d",
    "n",
    "model",
    "L",
    "volume_cap",
    "p_grid",
    "p_c",
    "lambda_grid",
    "window_scale",
    "m_rule",
    "replicates",
    "seed",
    "c_dl",
    "o_m",
    "c2",
    "kappa",
    "p",
    "p1",
    "p2",
    "eps1",
    "eps2",
    "q",
    "lambda",
    "eigen_k",
    "lambdas",
    "dt",
    "tol",
    "max_horizon",
    "j_max",
    "p_max",
    "locate_replicates",
];

pub const DEFAULT_VOLUME_CAP: u64 = 1 << 30;

/// Validated experiment configuration. `raw` keeps every key exactly as
/// written so it can be echoed into outputs.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub raw: BTreeMap<String, String>,
    pub d: usize,
    pub n: usize,
    pub model: String,
    #[serde(rename = "L")]
    pub l: u32,
    pub volume_cap: u64,
    pub p_grid: Option<Vec<f64>>,
    pub p_c: Option<f64>,
    pub lambda_grid: Option<Vec<f64>>,
    pub window_scale: f64,
    pub m_rule: String,
    pub replicates: u64,
    /// Seed text as given; parsed value in `master_seed`.
    pub seed: String,
    pub master_seed: u64,
    pub c_dl: f64,
    pub o_m: f64,
    pub c2: f64,
    pub kappa: f64,
    pub p: Option<f64>,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub eps1: f64,
    pub eps2: f64,
    pub q: Option<f64>,
    pub lambda: f64,
    pub eigen_k: usize,
    pub lambdas: Vec<f64>,
    pub dt: f64,
    pub tol: f64,
    pub max_horizon: f64,
    pub j_max: u32,
    pub p_max: Option<f64>,
    pub locate_replicates: u64,
    #[serde(skip)]
    rule: ThresholdRule,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim().parse().map_err(|_| bad(format!("cannot parse `{key} = {v}`")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_one(key, s)).collect()
}

fn parse_rule(text: &str) -> Result<ThresholdRule, CliError> {
    let t = text.trim();
    let rule = match t.split_once(':') {
        Some(("absolute", m)) => ThresholdRule::Absolute(parse_one("m_rule", m)?),
        Some(("exponent", e)) => ThresholdRule::VolumeExponent(parse_one("m_rule", e)?),
        None if t == "chi5" => ThresholdRule::ChiFifthOverVolume,
        _ => return Err(bad(format!("m_rule must be absolute:<M>, exponent:<e> or chi5, got `{t}`"))),
    };
    rule.validate().map_err(|e| bad(e.to_string()))?;
    Ok(rule)
}

/// Splits the text into key/value pairs, rejecting duplicates and unknown keys.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut raw = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected key = value", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KNOWN_KEYS.contains(&k) {
            return Err(bad(format!("line {}: unknown key `{k}`", lineno + 1)));
        }
        if raw.insert(k.to_string(), v.to_string()).is_some() {
            return Err(bad(format!("line {}: duplicate key `{k}`", lineno + 1)));
        }
    }
    Ok(raw)
}

impl ExperimentConfig {
    /// Parses config text; `seed_override` (the `--seed` flag) wins over the
    /// file's `seed` key.
    pub fn parse(text: &str, seed_override: Option<&str>) -> Result<Self, CliError> {
        let mut raw = parse_pairs(text)?;
        if let Some(s) = seed_override {
            raw.insert("seed".into(), s.to_string());
        }
        Self::from_pairs(raw)
    }

    pub fn from_pairs(raw: BTreeMap<String, String>) -> Result<Self, CliError> {
        let get = |k: &str| raw.get(k).map(String::as_str);
        fn opt<T: FromStr>(raw: &BTreeMap<String, String>, k: &str) -> Result<Option<T>, CliError> {
            raw.get(k).map(|v| parse_one(k, v)).transpose()
        }
        fn or<T: FromStr>(raw: &BTreeMap<String, String>, k: &str, default: T) -> Result<T, CliError> {
            Ok(opt(raw, k)?.unwrap_or(default))
        }
        let list = |k: &str| get(k).map(|v| parse_list(k, v)).transpose();

        let seed = get("seed").unwrap_or("0").to_string();
        let master_seed = parse_seed(&seed).ok_or_else(|| bad(format!("seed `{seed}` is not a decimal or 0x-hex u64")))?;
        let m_rule = get("m_rule").unwrap_or("exponent:0.6").to_string();
        let rule = parse_rule(&m_rule)?;

        let cfg = ExperimentConfig {
            d: or(&raw, "d", 2)?,
            n: or(&raw, "n", 8)?,
            model: get("model").unwrap_or("nn").to_string(),
            l: or(&raw, "L", 1)?,
            volume_cap: or(&raw, "volume_cap", DEFAULT_VOLUME_CAP)?,
            p_grid: list("p_grid")?,
            p_c: opt(&raw, "p_c")?,
            lambda_grid: list("lambda_grid")?,
            window_scale: or(&raw, "window_scale", 1.0)?,
            m_rule,
            replicates: or(&raw, "replicates", 1)?,
            seed,
            master_seed,
            c_dl: or(&raw, "c_dl", 1.0)?,
            o_m: or(&raw, "o_m", 0.0)?,
            c2: or(&raw, "c2", 1.0)?,
            kappa: or(&raw, "kappa", 1.0)?,
            p: opt(&raw, "p")?,
            p1: opt(&raw, "p1")?,
            p2: opt(&raw, "p2")?,
            eps1: or(&raw, "eps1", 0.2)?,
            eps2: or(&raw, "eps2", 0.1)?,
            q: opt(&raw, "q")?,
            lambda: or(&raw, "lambda", 0.0)?,
            eigen_k: or(&raw, "eigen_k", 2)?,
            lambdas: list("lambdas")?.unwrap_or_else(|| vec![0.0]),
            dt: or(&raw, "dt", critperc::zlambda::DEFAULT_DT)?,
            tol: or(&raw, "tol", critperc::zlambda::DEFAULT_TOL)?,
            max_horizon: or(&raw, "max_horizon", critperc::zlambda::DEFAULT_MAX_HORIZON)?,
            j_max: or(&raw, "j_max", 200)?,
            p_max: opt(&raw, "p_max")?,
            locate_replicates: or(&raw, "locate_replicates", 41)?,
            rule,
            raw,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.model != "nn" && self.model != "spread-out" {
            return Err(bad(format!("model must be nn or spread-out, got `{}`", self.model)));
        }
        if self.replicates == 0 || self.locate_replicates == 0 {
            return Err(bad("replicates must be positive"));
        }
        if self.p_grid.is_some() && self.lambda_grid.is_some() {
            return Err(bad("give either p_grid or lambda_grid, not both"));
        }
        if self.lambda_grid.is_some() && self.p_c.is_none() {
            return Err(bad("lambda_grid needs p_c"));
        }
        for p in [self.p, self.p1, self.p2, self.p_c, self.p_max].into_iter().flatten() {
            if !(0.0..=1.0).contains(&p) {
                return Err(bad(format!("level {p} outside [0, 1]")));
            }
        }
        if !(self.dt > 0.0 && self.tol > 0.0 && self.max_horizon > 0.0) {
            return Err(bad("dt, tol and max_horizon must be positive"));
        }
        if !(self.c2 > 0.0 && self.kappa > 0.0) {
            return Err(bad("c2 and kappa must be positive"));
        }
        if !(self.eps2 > 0.0 && self.eps2 < self.eps1) {
            return Err(bad(format!("need 0 < eps2 < eps1, got {}, {}", self.eps2, self.eps1)));
        }
        if self.eigen_k == 0 {
            return Err(bad("eigen_k must be at least 1"));
        }
        Ok(())
    }

    pub fn edge_model(&self) -> EdgeModel {
        match self.model.as_str() {
            "spread-out" => EdgeModel::SpreadOut(self.l),
            _ => EdgeModel::NearestNeighbor,
        }
    }

    pub fn spec(&self) -> Result<TorusSpec, CliError> {
        Ok(TorusSpec::with_volume_cap(self.d, self.n, self.edge_model(), self.volume_cap)?)
    }

    pub fn threshold_rule(&self) -> ThresholdRule {
        self.rule
    }

    /// Explicit `p_grid`, or `p_c + window_scale * lambda * V^{-1/3}` over
    /// `lambda_grid`, sorted ascending.
    pub fn levels(&self, volume: u64) -> Result<Vec<f64>, CliError> {
        let mut grid = match (&self.p_grid, &self.lambda_grid, self.p_c) {
            (Some(g), _, _) => g.clone(),
            (None, Some(l), Some(pc)) => {
                let scale = self.window_scale * (volume as f64).powf(-1.0 / 3.0);
                l.iter().map(|x| pc + scale * x).collect()
            }
            _ => return Err(bad("this subcommand needs p_grid, or p_c with lambda_grid")),
        };
        if grid.is_empty() {
            return Err(bad("empty level grid"));
        }
        if let Some(p) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(bad(format!("level {p} outside [0, 1]")));
        }
        grid.sort_by(|a, b| a.total_cmp(b));
        Ok(grid)
    }

    pub fn require(&self, value: Option<f64>, key: &str) -> Result<f64, CliError> {
        value.ok_or_else(|| bad(format!("this subcommand needs `{key}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = ExperimentConfig::parse("d = 3\nn = 4 # side\n\np_grid = 0.5, 0.1\n", Some("0x10")).unwrap();
        assert_eq!((c.d, c.n, c.master_seed), (3, 4, 16));
        assert_eq!(c.seed, "0x10");
        assert_eq!(c.levels(64).unwrap(), vec![0.1, 0.5]);
        assert_eq!(c.threshold_rule(), ThresholdRule::VolumeExponent(0.6));
    }

    #[test]
    fn window_levels() {
        let c = ExperimentConfig::parse("p_c = 0.5\nlambda_grid = -1, 1\nwindow_scale = 0.5", None).unwrap();
        assert_eq!(c.levels(8).unwrap(), vec![0.25, 0.75]);
        let wide = ExperimentConfig::parse("p_c = 0.5\nlambda_grid = -1, 1\nwindow_scale = 2", None).unwrap();
        assert!(matches!(wide.levels(8), Err(CliError::Config(_))));
    }

    #[test]
    fn rejects() {
        for text in [
            "bogus = 1",
            "d = x",
            "d = 2\nd = 3",
            "m_rule = exponent:0.7",
            "m_rule = absolute:0",
            "seed = -1",
            "lambda_grid = 0",
            "model = hex",
            "p = 1.5",
            "no equals sign",
        ] {
            assert!(matches!(ExperimentConfig::parse(text, None), Err(CliError::Config(_))), "{text}");
        }
        assert!(ExperimentConfig::parse("m_rule = chi5", None).is_ok());
    }
}
