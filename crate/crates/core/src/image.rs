use crate::error::{Result, SneError};

/// H×W×C raster of normalized intensities, stored interleaved row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        ImageBuffer { height, width, channels, data: vec![value; height * width * channels] }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(SneError::Geometry(format!(
                "{} samples do not fill a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        Ok(ImageBuffer { height, width, channels, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        ImageBuffer { height, width, channels: 1, data }
    }

    /// Stacks single-channel planes into one interleaved image.
    pub fn from_planes(planes: &[ImageBuffer]) -> Result<Self> {
        let first = planes.first().ok_or_else(|| SneError::Geometry("no planes to merge".into()))?;
        let (h, w) = (first.height, first.width);
        if planes.iter().any(|p| p.height != h || p.width != w || p.channels != 1) {
            return Err(SneError::Geometry("planes differ in size".into()));
        }
        let c = planes.len();
        let mut data = vec![0.0; h * w * c];
        for (ch, plane) in planes.iter().enumerate() {
            for (i, &v) in plane.data.iter().enumerate() {
                data[i * c + ch] = v;
            }
        }
        Ok(ImageBuffer { height: h, width: w, channels: c, data })
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

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn plane(&self, c: usize) -> ImageBuffer {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        ImageBuffer { height: self.height, width: self.width, channels: 1, data }
    }

    pub fn clamped(&self) -> ImageBuffer {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planes_round_trip() {
        let img = ImageBuffer::from_vec(2, 2, 3, (0..12).map(|v| v as f64 / 12.0).collect()).unwrap();
        let planes: Vec<_> = (0..3).map(|c| img.plane(c)).collect();
        assert_eq!(planes[1].get(1, 0, 0), img.get(1, 0, 1));
        assert_eq!(ImageBuffer::from_planes(&planes).unwrap(), img);
    }
}
