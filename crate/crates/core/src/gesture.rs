use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the nine recognised classes (eight gestures plus "empty").
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct GestureLabel(u8);

impl GestureLabel {
    pub const COUNT: usize = 9;

    pub const PINCH_EAR_RIM: GestureLabel = GestureLabel(0);
    pub const CALLING: GestureLabel = GestureLabel(1);
    pub const SUPPORT_CHEEK_WITH_PALM: GestureLabel = GestureLabel(2);
    pub const COVER_MOUTH_WITH_PALM: GestureLabel = GestureLabel(3);
    pub const COVER_EAR_WITH_ARCHED_PALM: GestureLabel = GestureLabel(4);
    pub const THINKING_FACE: GestureLabel = GestureLabel(5);
    pub const PALM_BESIDE_NOSE_AND_MOUTH: GestureLabel = GestureLabel(6);
    pub const COVER_MOUTH_WITH_FIST: GestureLabel = GestureLabel(7);
    pub const EMPTY: GestureLabel = GestureLabel(8);

    const NAMES: [&'static str; 9] = [
        "pinch ear rim",
        "calling gesture",
        "support cheek with palm",
        "cover mouth with palm",
        "cover ear with arched palm",
        "thinking face",
        "hold up palm beside nose and mouth",
        "cover mouth with fist",
        "empty",
    ];

    pub fn new(id: u8) -> Result<Self> {
        if (id as usize) < Self::COUNT {
            Ok(GestureLabel(id))
        } else {
            Err(Error::invalid(format!("gesture label {id} outside 0..9")))
        }
    }

    pub fn all() -> impl Iterator<Item = GestureLabel> {
        (0..Self::COUNT as u8).map(GestureLabel)
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self.index()]
    }
}

impl TryFrom<u8> for GestureLabel {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        GestureLabel::new(v)
    }
}

impl From<GestureLabel> for u8 {
    fn from(l: GestureLabel) -> u8 {
        l.0
    }
}

impl fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.0, self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Posture {
    #[default]
    Sitting,
    Standing,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_bounded() {
        assert!(GestureLabel::new(8).is_ok());
        assert!(GestureLabel::new(9).is_err());
        assert_eq!(GestureLabel::all().count(), 9);
        assert_eq!(GestureLabel::EMPTY.name(), "empty");
        let json = serde_json::to_string(&GestureLabel::CALLING).unwrap();
        assert_eq!(json, "1");
        assert!(serde_json::from_str::<GestureLabel>("12").is_err());
    }
}
