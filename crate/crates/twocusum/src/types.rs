use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Relative tolerance below which two thresholds are declared equal and the
/// rule is classified as harmonic. Optimizer output never compares exactly.
pub const CLASS_TOLERANCE: f64 = 1e-9;

/// The two candidate post-change drift magnitudes. Both are strictly
/// positive; the sign convention lives in [`Measure`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftPair {
    pub mu1: f64,
    pub mu2: f64,
}

impl DriftPair {
    pub fn new(mu1: f64, mu2: f64) -> Result<Self> {
        for (name, value) in [("mu1", mu1), ("mu2", mu2)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    requirement: "finite and > 0",
                    value,
                });
            }
        }
        Ok(DriftPair { mu1, mu2 })
    }

    /// The pair with the roles of the two directions exchanged.
    pub fn swapped(self) -> Self {
        DriftPair {
            mu1: self.mu2,
            mu2: self.mu1,
        }
    }
}

/// Alarm thresholds for the two one-sided statistics: the rule fires when
/// y+ reaches `nu1` or y- reaches `nu2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub nu1: f64,
    pub nu2: f64,
}

impl ThresholdPair {
    pub fn new(nu1: f64, nu2: f64) -> Result<Self> {
        for (name, value) in [("nu1", nu1), ("nu2", nu2)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    requirement: "finite and > 0",
                    value,
                });
            }
        }
        Ok(ThresholdPair { nu1, nu2 })
    }

    /// The smaller threshold, written m in the closed forms.
    pub fn lower(&self) -> f64 {
        self.nu1.min(self.nu2)
    }

    /// The larger threshold, written M in the closed forms.
    pub fn upper(&self) -> f64 {
        self.nu1.max(self.nu2)
    }

    /// Classifies the rule: equal thresholds (within [`CLASS_TOLERANCE`]
    /// relative) are harmonic, otherwise the side with the larger threshold
    /// names the class.
    pub fn classify(&self) -> RuleClass {
        let scale = self.nu1.max(self.nu2);
        if (self.nu1 - self.nu2).abs() <= CLASS_TOLERANCE * scale {
            RuleClass::G
        } else if self.nu1 > self.nu2 {
            RuleClass::C1
        } else {
            RuleClass::C2
        }
    }

    /// The side whose one-sided rule at level m leads the exact expectation
    /// and the bound brackets: the side holding the smaller threshold. Ties
    /// (class G) resolve to Negative; the collapsed formulas are symmetric.
    pub fn led_side(&self) -> Side {
        if self.nu1 >= self.nu2 {
            Side::Negative
        } else {
            Side::Positive
        }
    }
}

/// Rule classes: G holds the equal-threshold (harmonic mean) rules, C1 the
/// rules with nu1 > nu2, C2 those with nu2 > nu1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleClass {
    G,
    C1,
    C2,
}

impl fmt::Display for RuleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleClass::G => write!(f, "g"),
            RuleClass::C1 => write!(f, "c1"),
            RuleClass::C2 => write!(f, "c2"),
        }
    }
}

/// The probability law governing the observations: no change ever, a change
/// to drift +mu1 at the change time, or a change to drift -mu2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    Infinity,
    PostChangePositive,
    PostChangeNegative,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::Infinity => write!(f, "infinity"),
            Measure::PostChangePositive => write!(f, "post-change-positive"),
            Measure::PostChangeNegative => write!(f, "post-change-negative"),
        }
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "infinity" | "inf" => Ok(Measure::Infinity),
            "post-change-positive" | "pos" => Ok(Measure::PostChangePositive),
            "post-change-negative" | "neg" => Ok(Measure::PostChangeNegative),
            other => Err(format!(
                "unknown measure '{other}' (expected infinity, post-change-positive, or post-change-negative)"
            )),
        }
    }
}

/// Which one-sided statistic is meant: Positive is the y+ side (threshold
/// nu1), Negative the y- side (threshold nu2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Positive,
    Negative,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Positive => Side::Negative,
            Side::Negative => Side::Positive,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Positive => write!(f, "positive"),
            Side::Negative => write!(f, "negative"),
        }
    }
}

/// A closed-form interval guaranteed to contain an expected stopping time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundBracket {
    pub lower: f64,
    pub upper: f64,
}

impl BoundBracket {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}
