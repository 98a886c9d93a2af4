//! Clip file format.
//!
//! Layout: magic `GVID`, version (u32 LE), frames/height/width (u32 LE each),
//! then frames·height·width pixel values as f32 LE in frame-major, row-major
//! order. Clips are f32-quantized when created, so write → read is exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::video::{ClipShape, VideoTensor};

pub const MAGIC: &[u8; 4] = b"GVID";
pub const VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 3 * 4;

pub fn write_clip(path: &Path, clip: &VideoTensor) -> Result<()> {
    let shape = clip.shape();
    let mut bytes = Vec::with_capacity(HEADER_LEN + 4 * shape.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [shape.frames, shape.height, shape.width] {
        let dim = u32::try_from(dim)
            .map_err(|_| Error::InvalidArgument(format!("clip dimension {dim} exceeds u32")))?;
        bytes.extend_from_slice(&dim.to_le_bytes());
    }
    for &v in clip.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_clip(path: &Path) -> Result<VideoTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let display = path.display().to_string();
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: display,
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::BadMagic {
            path: display,
            expected: "GVID",
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::BadVersion {
            path: display,
            expected: VERSION,
            found: version,
        });
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
    let shape = ClipShape::new(dim(0) as usize, dim(1) as usize, dim(2) as usize);
    let expected = HEADER_LEN as u64 + 4 * shape.len() as u64;
    if (bytes.len() as u64) != expected {
        return Err(Error::Truncated {
            path: display,
            expected,
            found: bytes.len() as u64,
        });
    }
    let data: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    for (i, &v) in data.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Format {
                path: display,
                what: "clip data",
                detail: format!("value {v} at index {i} outside [0, 1]"),
            });
        }
    }
    VideoTensor::new(shape, data)
}
