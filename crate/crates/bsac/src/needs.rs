//! Agent needs hierarchy: five gated levels of expected utility computed
//! from environment-supplied probability probes, plus reward shaping toward
//! the dominant (lowest unsatisfied) level.
//!
//! A level is evaluated only when the level below it is satisfied; levels
//! above the first unsatisfied one report exactly zero. The five-level
//! union stays five separate values and is never collapsed implicitly.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// The five levels, lowest first. Ordering is load-bearing: gating walks
/// variants in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeedLevel {
    Safety,
    Basic,
    Capability,
    Teaming,
    Learning,
}

impl NeedLevel {
    pub const ALL: [NeedLevel; 5] = [
        NeedLevel::Safety,
        NeedLevel::Basic,
        NeedLevel::Capability,
        NeedLevel::Teaming,
        NeedLevel::Learning,
    ];

    pub fn index(self) -> usize {
        NeedLevel::ALL.iter().position(|&l| l == self).unwrap()
    }
}

impl fmt::Display for NeedLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NeedLevel::Safety => "safety",
            NeedLevel::Basic => "basic",
            NeedLevel::Capability => "capability",
            NeedLevel::Teaming => "teaming",
            NeedLevel::Learning => "learning",
        };
        f.write_str(s)
    }
}

/// One feature: a utility coefficient paired with the id of an environment
/// probe that supplies its probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub id: String,
    pub level: NeedLevel,
    pub utility: f64,
    pub probe_id: String,
}

/// Satisfaction threshold per level. A struct rather than a map so every
/// level is present by construction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Thresholds {
    pub safety: f64,
    pub basic: f64,
    pub capability: f64,
    pub teaming: f64,
    pub learning: f64,
}

impl Thresholds {
    pub fn get(&self, level: NeedLevel) -> f64 {
        match level {
            NeedLevel::Safety => self.safety,
            NeedLevel::Basic => self.basic,
            NeedLevel::Capability => self.capability,
            NeedLevel::Teaming => self.teaming,
            NeedLevel::Learning => self.learning,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeedsConfig {
    pub features: Vec<FeatureSpec>,
    pub thresholds: Thresholds,
    pub shaping_weight: f64,
    /// Task label threaded to probes; carries no semantics single-agent.
    #[serde(default)]
    pub task: Option<String>,
}

impl NeedsConfig {
    pub fn validate(&self) -> Result<(), NeedsError> {
        if !self.features.iter().any(|f| f.level == NeedLevel::Safety) {
            return Err(NeedsError::NoSafetyFeature);
        }
        for f in &self.features {
            if !f.utility.is_finite() {
                return Err(NeedsError::BadUtility { feature: f.id.clone(), value: f.utility });
            }
        }
        Ok(())
    }

    fn features_at(&self, level: NeedLevel) -> impl Iterator<Item = &FeatureSpec> {
        self.features.iter().filter(move |f| f.level == level)
    }
}

/// Per-level expectations with gating applied, plus the union of all five.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeedsProfile {
    pub n_s: f64,
    pub n_b: f64,
    pub n_c: f64,
    pub n_t: f64,
    pub n_l: f64,
    pub satisfied: [bool; 5],
    pub dominant_level: NeedLevel,
    /// All five level values in fixed (lowest-first) order.
    pub combined: [f64; 5],
}

impl NeedsProfile {
    pub fn value(&self, level: NeedLevel) -> f64 {
        self.combined[level.index()]
    }

    pub fn dominant_value(&self) -> f64 {
        self.value(self.dominant_level)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NeedsError {
    ProbeOutOfRange { probe: String, value: f64 },
    MissingProbe { probe: String },
    NoSafetyFeature,
    BadUtility { feature: String, value: f64 },
}

impl fmt::Display for NeedsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NeedsError::ProbeOutOfRange { probe, value } => {
                write!(f, "probe '{probe}' = {value} outside [0,1]")
            }
            NeedsError::MissingProbe { probe } => write!(f, "probe '{probe}' not supplied"),
            NeedsError::NoSafetyFeature => write!(f, "config has no safety-level feature"),
            NeedsError::BadUtility { feature, value } => {
                write!(f, "feature '{feature}' has non-finite utility {value}")
            }
        }
    }
}

impl std::error::Error for NeedsError {}

/// Expected utility of one level: sum of utility * probability over the
/// level's features.
pub fn level_expectation(
    level: NeedLevel,
    config: &NeedsConfig,
    probes: &HashMap<String, f64>,
) -> Result<f64, NeedsError> {
    let mut total = 0.0;
    for f in config.features_at(level) {
        let p = *probes
            .get(&f.probe_id)
            .ok_or_else(|| NeedsError::MissingProbe { probe: f.probe_id.clone() })?;
        if !(0.0..=1.0).contains(&p) {
            return Err(NeedsError::ProbeOutOfRange { probe: f.probe_id.clone(), value: p });
        }
        total += f.utility * p;
    }
    Ok(total)
}

/// Evaluate all levels bottom-up with hard gating: a level's probes are
/// consulted only when the previous level is satisfied; otherwise its value
/// is zero and it is unsatisfied. The dominant level is the lowest
/// unsatisfied one, or Learning when everything is satisfied.
pub fn evaluate_profile(
    config: &NeedsConfig,
    probes: &HashMap<String, f64>,
) -> Result<NeedsProfile, NeedsError> {
    let mut values = [0.0; 5];
    let mut satisfied = [false; 5];
    let mut gate_open = true;
    for (i, level) in NeedLevel::ALL.into_iter().enumerate() {
        if !gate_open {
            break;
        }
        values[i] = level_expectation(level, config, probes)?;
        satisfied[i] = values[i] >= config.thresholds.get(level);
        gate_open = satisfied[i];
    }
    let dominant_level = NeedLevel::ALL
        .into_iter()
        .find(|l| !satisfied[l.index()])
        .unwrap_or(NeedLevel::Learning);
    Ok(NeedsProfile {
        n_s: values[0],
        n_b: values[1],
        n_c: values[2],
        n_t: values[3],
        n_l: values[4],
        satisfied,
        dominant_level,
        combined: values,
    })
}

/// base + shaping_weight * value(dominant level). A zero weight returns the
/// base reward untouched, bit for bit.
pub fn shaped_reward(base_reward: f64, profile: &NeedsProfile, config: &NeedsConfig) -> f64 {
    if config.shaping_weight == 0.0 {
        return base_reward;
    }
    base_reward + config.shaping_weight * profile.dominant_value()
}
