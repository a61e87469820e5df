use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::numerics::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malignant,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Benign, Label::Malignant];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Malignant => "malignant",
        }
    }

    /// 0 for benign, 1 for malignant.
    pub fn bit(self) -> u8 {
        match self {
            Label::Benign => 0,
            Label::Malignant => 1,
        }
    }

    /// Inclusive-exclusive range each ABC attribute is drawn from.
    pub fn attribute_range(self) -> (f64, f64) {
        match self {
            Label::Benign => (0.0, 0.5),
            Label::Malignant => (0.4, 1.0),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "benign" => Ok(Label::Benign),
            "malignant" => Ok(Label::Malignant),
            other => Err(Error::Config(format!("unknown label {other:?}"))),
        }
    }
}

/// Three-way attribute bucket.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    Medium,
    High,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Low, Level::Medium, Level::High];

    /// `[0, 1/3)` low, `[1/3, 2/3)` medium, `[2/3, 1]` high.
    pub fn of(value: f64) -> Level {
        if value < 1.0 / 3.0 {
            Level::Low
        } else if value < 2.0 / 3.0 {
            Level::Medium
        } else {
            Level::High
        }
    }

    pub fn index(self) -> usize {
        match self {
            Level::Low => 0,
            Level::Medium => 1,
            Level::High => 2,
        }
    }
}

/// Asymmetry, border irregularity and color variation of one lesion, plus
/// its label and the seed that drives every random detail of its rendering.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LesionParams {
    pub asymmetry: f64,
    pub border_irregularity: f64,
    pub color_variation: f64,
    pub label: Label,
    pub seed: u64,
}

impl LesionParams {
    pub fn levels(&self) -> [Level; 3] {
        [
            Level::of(self.asymmetry),
            Level::of(self.border_irregularity),
            Level::of(self.color_variation),
        ]
    }

    pub fn is_valid(&self) -> bool {
        [self.asymmetry, self.border_irregularity, self.color_variation]
            .iter()
            .all(|v| (0.0..=1.0).contains(v))
    }
}

/// Draws attributes uniformly from the label's range, then a rendering seed.
pub fn sample_params(label: Label, rng: &mut Rng) -> LesionParams {
    let (lo, hi) = label.attribute_range();
    let asymmetry = rng.uniform_range(lo, hi);
    let border_irregularity = rng.uniform_range(lo, hi);
    let color_variation = rng.uniform_range(lo, hi);
    let seed = rng.next_u64();
    LesionParams {
        asymmetry,
        border_irregularity,
        color_variation,
        label,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_ranges_hold() {
        let mut rng = Rng::new(1);
        for _ in 0..2000 {
            let b = sample_params(Label::Benign, &mut rng);
            assert!(b.asymmetry <= 0.5 && b.border_irregularity <= 0.5 && b.color_variation <= 0.5);
            let m = sample_params(Label::Malignant, &mut rng);
            assert!(m.asymmetry >= 0.4 && m.border_irregularity >= 0.4 && m.color_variation >= 0.4);
            assert!(b.is_valid() && m.is_valid());
        }
    }

    #[test]
    fn fixed_seed_repeats() {
        let a = sample_params(Label::Malignant, &mut Rng::new(99));
        let b = sample_params(Label::Malignant, &mut Rng::new(99));
        assert_eq!(a, b);
    }

    #[test]
    fn bucket_thresholds_are_half_open() {
        assert_eq!(Level::of(0.1), Level::Low);
        assert_eq!(Level::of(1.0 / 3.0), Level::Medium);
        assert_eq!(Level::of(2.0 / 3.0), Level::High);
        assert_eq!(Level::of(0.0), Level::Low);
        assert_eq!(Level::of(1.0), Level::High);
    }
}
