use crate::{Error, Result};

/// A planar image with samples in `[0, 1]`.
///
/// Layout is channel-major; each channel is a row-major `height x width`
/// block. Every constructor and mutator clamps into `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!("empty image {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample {bad}")));
        }
        let mut img = ImagePlane {
            height,
            width,
            channels,
            data,
        };
        img.clamp();
        Ok(img)
    }

    /// Build from a closure `(channel, y, x) -> value`; values are clamped.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = (c * self.height + y) * self.width + x;
        self.data[i] = clamp_unit(v);
    }

    /// Replace every sample through `f`, clamping the result.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        ImagePlane {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| clamp_unit(f(v))).collect(),
        }
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::invalid(format!(
                "crop {height}x{width}@({top},{left}) outside {}x{}",
                self.height, self.width
            )));
        }
        Self::from_fn(height, width, self.channels, |c, y, x| {
            self.get(c, top + y, left + x)
        })
    }

    pub fn same_shape(&self, other: &ImagePlane) -> bool {
        self.shape() == other.shape()
    }

    /// Raw per-sample buffer that is clamped back into the unit interval.
    pub(crate) fn from_raw_clamped(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        let mut img = ImagePlane {
            height,
            width,
            channels,
            data,
        };
        img.clamp();
        img
    }

    fn clamp(&mut self) {
        for v in &mut self.data {
            *v = clamp_unit(*v);
        }
    }
}

pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(ImagePlane::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImagePlane::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(ImagePlane::new(0, 2, 1, vec![]).is_err());
        assert!(ImagePlane::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn clamps_on_write() {
        let mut img = ImagePlane::new(1, 2, 1, vec![-0.5, 1.5]).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
        img.set(0, 0, 0, 3.0);
        assert_eq!(img.get(0, 0, 0), 1.0);
    }

    #[test]
    fn crop_reads_window() {
        let img = ImagePlane::from_fn(4, 4, 1, |_, y, x| (y * 4 + x) as f64 / 16.0).unwrap();
        let c = img.crop(1, 2, 2, 2).unwrap();
        assert_eq!(c.get(0, 0, 0), img.get(0, 1, 2));
        assert_eq!(c.get(0, 1, 1), img.get(0, 2, 3));
        assert!(img.crop(3, 3, 2, 2).is_err());
    }
}
