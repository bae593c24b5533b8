use crate::error::{Error, Result};

/// Image with values in `[0, 1]`, stored height × width × channels.
#[derive(Clone, Debug, PartialEq)]
pub struct InputImage {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl InputImage {
    pub const DEFAULT_SIZE: usize = 64;

    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::domain("image dimensions must be positive"));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::Shape {
                op: "image",
                lhs: vec![height, width, channels],
                rhs: vec![pixels.len()],
            });
        }
        if let Some(i) = pixels.iter().position(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::domain(format!("pixel {i} = {} outside [0, 1]", pixels[i])));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            pixels: vec![0.0; height * width * channels],
        }
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

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.pixels[(row * self.width + col) * self.channels + channel]
    }

    /// Channel-major copy (`C×H×W`) for the convolution trunk.
    pub fn to_chw(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.pixels.len()];
        for r in 0..self.height {
            for c in 0..self.width {
                for ch in 0..self.channels {
                    out[(ch * self.height + r) * self.width + c] = self.get(r, c, ch);
                }
            }
        }
        out
    }

    /// Bilinear resampling to `height × width` (pixel centres aligned).
    pub fn resized(&self, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::domain("target size must be positive"));
        }
        if (height, width) == (self.height, self.width) {
            return Ok(self.clone());
        }
        let mut pixels = vec![0.0; height * width * self.channels];
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        for r in 0..height {
            let fy = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let (y0, ty) = (fy.floor() as usize, fy - fy.floor());
            let y1 = (y0 + 1).min(self.height - 1);
            for c in 0..width {
                let fx = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let (x0, tx) = (fx.floor() as usize, fx - fx.floor());
                let x1 = (x0 + 1).min(self.width - 1);
                for ch in 0..self.channels {
                    let top = self.get(y0, x0, ch) * (1.0 - tx) + self.get(y0, x1, ch) * tx;
                    let bot = self.get(y1, x0, ch) * (1.0 - tx) + self.get(y1, x1, ch) * tx;
                    pixels[(r * width + c) * self.channels + ch] = (top * (1.0 - ty) + bot * ty).clamp(0.0, 1.0);
                }
            }
        }
        Self::new(height, width, self.channels, pixels)
    }
}
