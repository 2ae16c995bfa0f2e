use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelName;
use crate::error::{Error, Result};

/// Device configurations under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SensorCombo {
    #[serde(rename = "RE")]
    Re,
    #[serde(rename = "LE+RE")]
    LeRe,
    #[serde(rename = "LE+RE+W")]
    LeReW,
    #[serde(rename = "ALL-4ch")]
    All4,
    #[serde(rename = "ALL-6ch")]
    All6,
}

impl SensorCombo {
    pub const ALL: [SensorCombo; 5] = [Self::Re, Self::LeRe, Self::LeReW, Self::All4, Self::All6];

    /// Channels in `ChannelName` order.
    pub fn channels(self) -> Vec<ChannelName> {
        use ChannelName::*;
        let mut v = match self {
            Self::Re => vec![ReInner, ReOuter],
            Self::LeRe => vec![LeInner, LeOuter, ReInner, ReOuter],
            Self::LeReW => vec![LeOuter, ReOuter, Watch],
            Self::All4 => vec![LeOuter, ReOuter, Watch, Ring],
            Self::All6 => ChannelName::ALL.to_vec(),
        };
        v.sort();
        v
    }

    pub fn contains(self, c: ChannelName) -> bool {
        self.channels().contains(&c)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Re => "RE",
            Self::LeRe => "LE+RE",
            Self::LeReW => "LE+RE+W",
            Self::All4 => "ALL-4ch",
            Self::All6 => "ALL-6ch",
        }
    }
}

impl fmt::Display for SensorCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensorCombo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown sensor combination {s:?}")))
    }
}

/// Which channel models run, and how they are fused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelSelector {
    V,
    U,
    I,
    #[serde(rename = "V+U")]
    VU,
    #[serde(rename = "ALL-L")]
    AllL,
    #[serde(rename = "ALL-F")]
    AllF,
}

impl ModelSelector {
    pub const ALL: [ModelSelector; 6] = [Self::V, Self::U, Self::I, Self::VU, Self::AllL, Self::AllF];

    pub fn uses_vocal(self) -> bool {
        matches!(self, Self::V | Self::VU | Self::AllL | Self::AllF)
    }

    pub fn uses_ultra(self) -> bool {
        matches!(self, Self::U | Self::VU | Self::AllL | Self::AllF)
    }

    pub fn uses_imu(self) -> bool {
        matches!(self, Self::I | Self::AllL | Self::AllF)
    }

    /// Feature-level fusion; every other multi-branch selector fuses logits.
    pub fn fuses_features(self) -> bool {
        self == Self::AllF
    }

    /// Ultrasound needs the watch speaker; the IMU lives on the ring.
    pub fn valid_for(self, combo: SensorCombo) -> bool {
        (!self.uses_ultra() || combo.contains(ChannelName::Watch))
            && (!self.uses_imu() || combo.contains(ChannelName::Ring))
    }

    pub fn check(self, combo: SensorCombo) -> Result<()> {
        if self.valid_for(combo) {
            Ok(())
        } else {
            Err(Error::ComboSelectorInvalid {
                combo: combo.to_string(),
                selector: self.to_string(),
            })
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::V => "V",
            Self::U => "U",
            Self::I => "I",
            Self::VU => "V+U",
            Self::AllL => "ALL-L",
            Self::AllF => "ALL-F",
        }
    }
}

impl fmt::Display for ModelSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelSelector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown model selector {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validity_mask() {
        let valid = |c: SensorCombo| -> Vec<&str> {
            ModelSelector::ALL
                .into_iter()
                .filter(|m| m.valid_for(c))
                .map(|m| m.as_str())
                .collect()
        };
        assert_eq!(valid(SensorCombo::Re), ["V"]);
        assert_eq!(valid(SensorCombo::LeRe), ["V"]);
        assert_eq!(valid(SensorCombo::LeReW), ["V", "U", "V+U"]);
        assert_eq!(valid(SensorCombo::All4).len(), 6);
        assert_eq!(valid(SensorCombo::All6).len(), 6);
    }

    #[test]
    fn names_round_trip() {
        for c in SensorCombo::ALL {
            assert_eq!(c.as_str().parse::<SensorCombo>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{c}\""));
        }
        for m in ModelSelector::ALL {
            assert_eq!(m.as_str().parse::<ModelSelector>().unwrap(), m);
        }
        assert_eq!(SensorCombo::All6.channels().len(), 6);
    }
}
