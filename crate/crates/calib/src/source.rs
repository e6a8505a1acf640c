use std::path::{Path, PathBuf};

use ringtrack::raster::io::load_gray;
use ringtrack::GrayImage;

use crate::ServiceError;

/// Frames replayed by the service.
#[derive(Debug, Clone)]
pub enum FrameSource {
    Memory(Vec<GrayImage>),
    /// Decoded on demand, in natural filename order.
    Files(Vec<PathBuf>),
}

impl FrameSource {
    /// Every PNG or PGM frame in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, ServiceError> {
        let frames = ringtrack::eval::list_frames(dir)?;
        if frames.is_empty() {
            return Err(ServiceError::EmptySource);
        }
        Ok(Self::Files(frames))
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Memory(v) => v.len(),
            Self::Files(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load(&self, i: usize) -> ringtrack::Result<GrayImage> {
        match self {
            Self::Memory(v) => Ok(v[i].clone()),
            Self::Files(v) => load_gray(&v[i]),
        }
    }
}
