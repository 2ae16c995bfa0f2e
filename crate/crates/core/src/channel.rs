use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The six microphones of the wearable set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelName {
    LeOuter,
    LeInner,
    ReOuter,
    ReInner,
    Watch,
    Ring,
}

impl ChannelName {
    pub const ALL: [ChannelName; 6] = [
        ChannelName::LeOuter,
        ChannelName::LeInner,
        ChannelName::ReOuter,
        ChannelName::ReInner,
        ChannelName::Watch,
        ChannelName::Ring,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelName::LeOuter => "le_outer",
            ChannelName::LeInner => "le_inner",
            ChannelName::ReOuter => "re_outer",
            ChannelName::ReInner => "re_inner",
            ChannelName::Watch => "watch",
            ChannelName::Ring => "ring",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_inner(self) -> bool {
        matches!(self, ChannelName::LeInner | ChannelName::ReInner)
    }
}

impl fmt::Display for ChannelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChannelName::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::MissingChannel(format!("unknown channel name {s:?}")))
    }
}
