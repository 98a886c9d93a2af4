//! Clip containers. `VideoTensor` is the validated currency of the lab
//! (values in [0, 1], at least two frames); `Volume` is the same layout
//! without the range constraint, for noised latents and noise draws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClipShape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl ClipShape {
    pub const fn new(frames: usize, height: usize, width: usize) -> Self {
        ClipShape {
            frames,
            height,
            width,
        }
    }

    pub const fn pixels_per_frame(&self) -> usize {
        self.height * self.width
    }

    pub const fn len(&self) -> usize {
        self.frames * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for ClipShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.frames, self.height, self.width)
    }
}

/// A single H×W grayscale frame (used for conditioning images).
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "frame data has {} values, expected {}x{}={}",
                data.len(),
                height,
                width,
                height * width
            )));
        }
        Ok(Frame {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Unconstrained F×H×W values in frame-major, row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    shape: ClipShape,
    data: Vec<f64>,
}

impl Volume {
    pub fn zeros(shape: ClipShape) -> Self {
        Volume {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: ClipShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "volume data has {} values, expected {} for {}",
                data.len(),
                shape.len(),
                shape
            )));
        }
        Ok(Volume { shape, data })
    }

    pub fn shape(&self) -> ClipShape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.shape.pixels_per_frame();
        &self.data[i * n..(i + 1) * n]
    }
}

/// Round through f32, the storage precision of clip files. Rendered and
/// sampled clips are quantized at creation so disk round-trips are exact.
pub(crate) fn quantize_f32(v: f64) -> f64 {
    v as f32 as f64
}

/// A valid clip: every value in [0, 1], at least two frames.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoTensor(Volume);

impl VideoTensor {
    pub fn new(shape: ClipShape, data: Vec<f64>) -> Result<Self> {
        if shape.frames < 2 {
            return Err(Error::InvalidArgument(format!(
                "clip needs at least 2 frames, got {}",
                shape.frames
            )));
        }
        if shape.pixels_per_frame() == 0 {
            return Err(Error::InvalidArgument(format!("empty frames in {shape}")));
        }
        let vol = Volume::from_vec(shape, data)?;
        for (i, &v) in vol.data().iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "clip value {v} at index {i} outside [0, 1]"
                )));
            }
        }
        Ok(VideoTensor(vol))
    }

    /// Clamp an arbitrary volume into [0, 1] and quantize to f32 precision.
    /// This is the only path from model output back to clip space.
    pub fn quantize_clamped(vol: Volume) -> Result<Self> {
        let shape = vol.shape();
        let mut data = vol.data;
        for v in &mut data {
            if !v.is_finite() {
                return Err(Error::NonFinite("clip values".into()));
            }
            *v = quantize_f32(v.clamp(0.0, 1.0));
        }
        VideoTensor::new(shape, data)
    }

    pub fn shape(&self) -> ClipShape {
        self.0.shape()
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        self.0.frame(i)
    }

    pub fn as_volume(&self) -> &Volume {
        &self.0
    }

    pub fn first_frame(&self) -> Frame {
        Frame::new(
            self.shape().height,
            self.shape().width,
            self.frame(0).to_vec(),
        )
        .expect("frame slice always matches its own shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_values() {
        let shape = ClipShape::new(2, 2, 2);
        assert!(VideoTensor::new(shape, vec![0.5; 8]).is_ok());
        let mut bad = vec![0.5; 8];
        bad[3] = 1.5;
        assert!(VideoTensor::new(shape, bad).is_err());
        let mut neg = vec![0.5; 8];
        neg[0] = -0.1;
        assert!(VideoTensor::new(shape, neg).is_err());
    }

    #[test]
    fn rejects_single_frame_and_bad_length() {
        assert!(VideoTensor::new(ClipShape::new(1, 2, 2), vec![0.0; 4]).is_err());
        assert!(VideoTensor::new(ClipShape::new(2, 2, 2), vec![0.0; 7]).is_err());
    }

    #[test]
    fn quantize_clamps_and_rounds() {
        let shape = ClipShape::new(2, 1, 2);
        let vol = Volume::from_vec(shape, vec![-0.5, 1.7, 0.1 + 1e-12, 0.25]).unwrap();
        let clip = VideoTensor::quantize_clamped(vol).unwrap();
        assert_eq!(clip.data()[0], 0.0);
        assert_eq!(clip.data()[1], 1.0);
        assert_eq!(clip.data()[2], 0.1f32 as f64);
        assert_eq!(clip.data()[3], 0.25);
    }

    #[test]
    fn quantize_rejects_non_finite() {
        let shape = ClipShape::new(2, 1, 1);
        let vol = Volume::from_vec(shape, vec![f64::NAN, 0.0]).unwrap();
        assert!(VideoTensor::quantize_clamped(vol).is_err());
    }

    #[test]
    fn frame_views_index_correctly() {
        let shape = ClipShape::new(3, 2, 2);
        let data: Vec<f64> = (0..12).map(|i| i as f64 / 12.0).collect();
        let clip = VideoTensor::new(shape, data).unwrap();
        assert_eq!(clip.frame(1)[0], 4.0 / 12.0);
        assert_eq!(clip.first_frame().data()[3], 3.0 / 12.0);
    }
}
