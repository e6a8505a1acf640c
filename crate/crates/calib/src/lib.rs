//! Live calibration service.
//!
//! A processing thread replays a [`FrameSource`] through the tracker at a
//! fixed rate and broadcasts each frame with its annotation to every
//! websocket client on `GET /ws`. Clients send parameter updates on the same
//! socket; the current parameters are also served as JSON on `GET /params`.
//! The message schema is in [`protocol`].

pub mod protocol;
mod server;
mod source;
mod worker;

use std::time::Duration;

use ringtrack::TrackerConfig;

pub use server::{start, RunningService};
pub use source::FrameSource;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind: {0}")]
    Bind(std::io::Error),
    #[error("server error: {0}")]
    Serve(std::io::Error),
    #[error("frame source is empty")]
    EmptySource,
    #[error("invalid service config: {0}")]
    InvalidConfig(String),
    #[error("processing thread: {0}")]
    Worker(String),
    #[error(transparent)]
    Core(#[from] ringtrack::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Frames per second; `None` processes as fast as possible.
    pub fps: Option<f64>,
    pub tracker: TrackerConfig,
    /// Messages buffered per client before it starts dropping frames.
    pub channel_capacity: usize,
    /// Restart from the first frame at the end of the source, resetting the
    /// tracker. Otherwise processing stops after the last frame.
    pub loop_source: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            fps: Some(10.0),
            tracker: TrackerConfig::default(),
            channel_capacity: 64,
            loop_source: true,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        if let Some(fps) = self.fps {
            if !(fps > 0.0 && fps.is_finite()) {
                return Err(ServiceError::InvalidConfig(format!("fps must be positive, got {fps}")));
            }
        }
        if self.channel_capacity == 0 {
            return Err(ServiceError::InvalidConfig("channel capacity must be >= 1".into()));
        }
        self.tracker.validate()?;
        Ok(())
    }

    fn frame_period(&self) -> Option<Duration> {
        self.fps.map(|f| Duration::from_secs_f64(1.0 / f))
    }
}
