pub mod channel;
pub mod combo;
pub mod dsp;
pub mod error;
pub mod exec;
pub mod features;
pub mod fmcw;
pub mod gesture;
pub mod harness;
pub mod model;
pub mod preprocess;
pub mod simulate;

pub use channel::ChannelName;
pub use combo::{ModelSelector, SensorCombo};
pub use error::{Error, Result};
pub use exec::Exec;
pub use gesture::{GestureLabel, Posture};
