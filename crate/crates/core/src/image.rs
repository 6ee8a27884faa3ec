//! Image and mask containers.
//!
//! Both are row-major. Multi-channel images are interleaved (`RGBRGB...`).

use crate::error::{FlareError, Result};

/// Rec.709 luma weights for linear RGB.
pub const REC709: [f64; 3] = [0.2126, 0.7152, 0.0722];

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(FlareError::Parameter(format!("channels must be 1 or 3, got {channels}")));
        }
        if width == 0 || height == 0 {
            return Err(FlareError::Dimension(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height * channels {
            return Err(FlareError::Dimension(format!(
                "data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FlareError::Parameter(format!("non-finite sample at index {i}")));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self { width, height, channels, data: vec![value; width * height * channels] }
    }

    /// Builds an image by evaluating `f(x, y, c)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = Self::zeros(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    img.data[(y * width + x) * channels + c] = f(x, y, c);
                }
            }
        }
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_dims(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn ensure_same_dims(&self, other: &ImageBuffer, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(FlareError::Dimension(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    pub fn ensure_mask_dims(&self, mask: &Mask, what: &str) -> Result<()> {
        if self.width == mask.width() && self.height == mask.height() {
            Ok(())
        } else {
            Err(FlareError::Dimension(format!(
                "{what}: image {}x{} vs mask {}x{}",
                self.width,
                self.height,
                mask.width(),
                mask.height()
            )))
        }
    }

    /// Extracts one channel as a single-channel image.
    pub fn channel(&self, c: usize) -> ImageBuffer {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        ImageBuffer { width: self.width, height: self.height, channels: 1, data }
    }

    /// Interleaves equally sized single-channel planes.
    pub fn from_planes(planes: &[ImageBuffer]) -> Result<ImageBuffer> {
        let first = planes
            .first()
            .ok_or_else(|| FlareError::Parameter("no planes given".into()))?;
        let (w, h) = (first.width, first.height);
        let channels = planes.len();
        let mut data = vec![0.0; w * h * channels];
        for (c, p) in planes.iter().enumerate() {
            if p.width != w || p.height != h || p.channels != 1 {
                return Err(FlareError::Dimension("plane dims disagree".into()));
            }
            for (i, v) in p.data.iter().enumerate() {
                data[i * channels + c] = *v;
            }
        }
        ImageBuffer::new(w, h, channels, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageBuffer {
        ImageBuffer { data: self.data.iter().map(|&v| f(v)).collect(), ..*self }
    }

    pub fn clamp01(&self) -> ImageBuffer {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn scale(&self, s: f64) -> ImageBuffer {
        self.map(|v| v * s)
    }

    /// Elementwise `self + other`.
    pub fn add(&self, other: &ImageBuffer) -> Result<ImageBuffer> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ImageBuffer) -> Result<ImageBuffer> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &ImageBuffer, f: impl Fn(f64, f64) -> f64) -> Result<ImageBuffer> {
        self.ensure_same_dims(other, "elementwise op")?;
        Ok(ImageBuffer {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            ..*self
        })
    }

    /// Multiplies every channel by the mask weight at the same pixel.
    pub fn masked(&self, mask: &Mask) -> Result<ImageBuffer> {
        self.ensure_mask_dims(mask, "masked")?;
        let ch = self.channels;
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, v)| v * mask.data()[i / ch])
            .collect();
        Ok(ImageBuffer { data, ..*self })
    }

    /// Rec.709 luminance; single-channel images pass through unchanged.
    pub fn luminance(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| REC709[0] * p[0] + REC709[1] * p[1] + REC709[2] * p[2])
            .collect();
        ImageBuffer { width: self.width, height: self.height, channels: 1, data }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Replicates a single-channel image into `channels` channels.
    pub fn broadcast(&self, channels: usize) -> ImageBuffer {
        if self.channels == channels {
            return self.clone();
        }
        assert_eq!(self.channels, 1, "can only broadcast single-channel images");
        let data = self.data.iter().flat_map(|&v| std::iter::repeat_n(v, channels)).collect();
        ImageBuffer { width: self.width, height: self.height, channels, data }
    }
}

/// Per-pixel weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(FlareError::Dimension(format!(
                "mask data length {} != {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FlareError::Parameter(format!("mask weight {v} outside [0,1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![1.0; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.data[y * width + x] = 1.0;
                }
            }
        }
        m
    }

    /// Binary mask of pixels where `img` (luminance) satisfies `pred`.
    pub fn from_luminance(img: &ImageBuffer, pred: impl Fn(f64) -> bool) -> Self {
        let lum = img.luminance();
        let data = lum.data().iter().map(|&v| if pred(v) { 1.0 } else { 0.0 }).collect();
        Self { width: img.width(), height: img.height(), data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        debug_assert!((0.0..=1.0).contains(&v));
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn is_set(&self, x: usize, y: usize) -> bool {
        self.get(x, y) > 0.5
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Number of pixels with weight above one half.
    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0.5).count()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn ensure_same_dims(&self, other: &Mask) -> Result<()> {
        if self.width == other.width && self.height == other.height {
            Ok(())
        } else {
            Err(FlareError::Dimension(format!(
                "mask {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.ensure_same_dims(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a.max(*b)).collect();
        Ok(Mask { data, ..*self })
    }

    /// Pixels of `self` not set in `other`.
    pub fn minus(&self, other: &Mask) -> Result<Mask> {
        self.ensure_same_dims(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| if b > 0.5 { 0.0 } else { a })
            .collect();
        Ok(Mask { data, ..*self })
    }

    pub fn contains(&self, other: &Mask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| b <= 0.5 || a > 0.5)
    }

    /// Binary dilation with a square (Chebyshev) structuring element of radius `r`.
    pub fn dilate(&self, r: usize) -> Mask {
        if r == 0 {
            return self.clone();
        }
        let (w, h) = (self.width, self.height);
        // separable max filter on the binarized mask
        let bin: Vec<bool> = self.data.iter().map(|&v| v > 0.5).collect();
        let mut horiz = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let lo = x.saturating_sub(r);
                let hi = (x + r).min(w - 1);
                horiz[y * w + x] = (lo..=hi).any(|xx| bin[y * w + xx]);
            }
        }
        let mut out = Mask::empty(w, h);
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r).min(h - 1);
            for x in 0..w {
                if (lo..=hi).any(|yy| horiz[yy * w + x]) {
                    out.data[y * w + x] = 1.0;
                }
            }
        }
        out
    }

    /// Area-weighted centroid `(x, y)` of the set pixels.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut n = 0.0;
        let (mut sx, mut sy) = (0.0, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = self.get(x, y);
                if v > 0.0 {
                    n += v;
                    sx += v * x as f64;
                    sy += v * y as f64;
                }
            }
        }
        (n > 0.0).then(|| (sx / n, sy / n))
    }

    /// Views the mask as a single-channel image.
    pub fn to_image(&self) -> ImageBuffer {
        ImageBuffer::new(self.width, self.height, 1, self.data.clone())
            .expect("mask dims are always valid")
    }

    /// Binarizes a single-channel image at one half.
    pub fn from_image(img: &ImageBuffer) -> Mask {
        let lum = img.luminance();
        let data = lum.data().iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect();
        Mask { width: img.width(), height: img.height(), data }
    }
}
