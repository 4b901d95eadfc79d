//! Image containers and neighborhood access.
//!
//! Intensities are stored as `f64` in row-major order with a nominal range of
//! `[0, 1]`. Neighborhoods are square windows clipped at the image border, so
//! a window never refers to a pixel that does not exist.

use crate::error::{Error, Result};

/// Single-channel 2-D intensity field.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
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
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    /// Square neighborhood of radius `radius` around `center`, clipped at the
    /// border. Members are listed in row-major scan order.
    pub fn window(&self, center: usize, radius: usize) -> Result<Window> {
        if center >= self.len() {
            return Err(Error::OutOfRange {
                index: center,
                len: self.len(),
            });
        }
        if radius == 0 {
            return Err(Error::param("radius", "must be at least 1"));
        }
        let mut members = Vec::with_capacity((2 * radius + 1).pow(2));
        for j in self.window_indices(center, radius) {
            members.push((j, self.data[j]));
        }
        Ok(Window { center, members })
    }

    /// Global indices of the clipped window around `center`, row-major.
    pub(crate) fn window_indices(&self, center: usize, radius: usize) -> impl Iterator<Item = usize> {
        let (x0, x1, y0, y1) = self.window_bounds(center, radius);
        let w = self.width;
        (y0..=y1).flat_map(move |y| (x0..=x1).map(move |x| y * w + x))
    }

    #[inline]
    pub(crate) fn window_bounds(&self, center: usize, radius: usize) -> (usize, usize, usize, usize) {
        let cx = center % self.width;
        let cy = center / self.width;
        (
            cx.saturating_sub(radius),
            (cx + radius).min(self.width - 1),
            cy.saturating_sub(radius),
            (cy + radius).min(self.height - 1),
        )
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pixelwise combination of two same-sized images.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.ensure_same_dims(other)?;
        Ok(Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> Image {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn dot(&self, other: &Image) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Image) {
        for (s, &v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.data {
            *v *= a;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Clipped square neighborhood `N(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub center: usize,
    /// `(global pixel index, intensity)` in row-major order.
    pub members: Vec<(usize, f64)>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Ordered stack of equally sized channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelImage {
    channels: Vec<Image>,
}

impl MultiChannelImage {
    pub fn new(channels: Vec<Image>) -> Result<Self> {
        let first = channels.first().ok_or(Error::Empty)?;
        for c in &channels[1..] {
            first.ensure_same_dims(c)?;
        }
        Ok(Self { channels })
    }

    pub fn single(img: Image) -> Self {
        Self {
            channels: vec![img],
        }
    }

    /// `count` copies of the same image.
    pub fn replicate(img: &Image, count: usize) -> Self {
        Self {
            channels: vec![img.clone(); count.max(1)],
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[Image] {
        &self.channels
    }

    pub fn channel(&self, c: usize) -> &Image {
        &self.channels[c]
    }

    pub fn into_channels(self) -> Vec<Image> {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    pub fn map_channels(&self, f: impl Fn(&Image) -> Image) -> MultiChannelImage {
        MultiChannelImage {
            channels: self.channels.iter().map(f).collect(),
        }
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> MultiChannelImage {
        self.map_channels(|c| c.clamped(lo, hi))
    }
}

impl From<Image> for MultiChannelImage {
    fn from(img: Image) -> Self {
        Self::single(img)
    }
}

/// Nonnegative per-channel weights `m_c` for the weighted channel average.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelWeights(Vec<f64>);

impl ChannelWeights {
    /// Standard luma weights for RGB.
    pub const RGB: [f64; 3] = [0.299, 0.587, 0.114];

    pub fn new(m: Vec<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param("channel weights", "must be finite and nonnegative"));
        }
        if !m.iter().any(|v| *v > 0.0) {
            return Err(Error::param("channel weights", "at least one weight must be positive"));
        }
        Ok(Self(m))
    }

    pub fn rgb() -> Self {
        Self(Self::RGB.to_vec())
    }

    /// All weights equal to one.
    pub fn unit(channels: usize) -> Self {
        Self(vec![1.0; channels.max(1)])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Pixelwise `sum_c m_c f_c`.
pub fn channel_average(mc: &MultiChannelImage, m: &ChannelWeights) -> Result<Image> {
    if m.len() != mc.num_channels() {
        return Err(Error::LengthMismatch {
            expected: mc.num_channels(),
            actual: m.len(),
        });
    }
    let (w, h) = mc.dims();
    let mut out = Image::zeros(w, h);
    for (ch, &mc_w) in mc.channels().iter().zip(m.as_slice()) {
        out.axpy(mc_w, ch);
    }
    Ok(out)
}
