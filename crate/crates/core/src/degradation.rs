//! Synthetic degradations: seeded noise models, replicate-boundary
//! convolution (the forward operator for deblurring), and the
//! blur/decimate/noise pipeline for depth upsampling experiments.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    /// Additive `N(0, sigma^2)`.
    Gaussian { sigma: f64 },
    /// A fraction `density` of pixels set to 0 or 1 with equal odds.
    SaltPepper { density: f64 },
    /// `k ~ Poisson(scale * f)`, output `k / scale`.
    Poisson { scale: f64 },
    /// Multiplicative `f * (1 + n)`, `n ~ N(0, sigma^2)`.
    Speckle { sigma: f64 },
    /// Gaussian followed by salt & pepper.
    GaussianSaltPepper { sigma: f64, density: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    /// The mixed Gaussian / salt & pepper setting used for the residual study.
    pub fn mixed(seed: u64) -> Self {
        Self::new(
            NoiseKind::GaussianSaltPepper {
                sigma: 0.05,
                density: 0.05,
            },
            seed,
        )
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let sigma_ok = |s: f64| s.is_finite() && s >= 0.0;
        let density_ok = |d: f64| (0.0..=1.0).contains(&d);
        match self.kind {
            NoiseKind::Gaussian { sigma } | NoiseKind::Speckle { sigma } if !sigma_ok(sigma) => {
                Err(Error::param("sigma", format!("{sigma} must be >= 0")))
            }
            NoiseKind::SaltPepper { density } if !density_ok(density) => {
                Err(Error::param("density", format!("{density} not in [0, 1]")))
            }
            NoiseKind::Poisson { scale } if !(scale > 0.0 && scale.is_finite()) => {
                Err(Error::param("scale", format!("{scale} must be > 0")))
            }
            NoiseKind::GaussianSaltPepper { sigma, density } if !sigma_ok(sigma) || !density_ok(density) => {
                Err(Error::param("mixed noise", format!("sigma {sigma}, density {density}")))
            }
            _ => Ok(()),
        }
    }
}

fn gaussian_in_place(data: &mut [f64], sigma: f64, multiplicative: bool, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    for v in data {
        let n = normal.sample(rng);
        if multiplicative {
            *v *= 1.0 + n;
        } else {
            *v += n;
        }
    }
}

fn salt_pepper_in_place(data: &mut [f64], density: f64, rng: &mut ChaCha8Rng) {
    let count = (density * data.len() as f64).round() as usize;
    for i in sample(rng, data.len(), count.min(data.len())) {
        data[i] = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
    }
}

/// Degrade `img` with the given noise model. The output is clamped to
/// `[0, 1]`; identical `(spec, img)` always gives identical output.
pub fn add_noise(img: &Image, spec: &NoiseSpec) -> Result<Image> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = img.clone();
    let data = out.data_mut();
    match spec.kind {
        NoiseKind::Gaussian { sigma } => gaussian_in_place(data, sigma, false, &mut rng),
        NoiseKind::Speckle { sigma } => gaussian_in_place(data, sigma, true, &mut rng),
        NoiseKind::SaltPepper { density } => salt_pepper_in_place(data, density, &mut rng),
        NoiseKind::GaussianSaltPepper { sigma, density } => {
            gaussian_in_place(data, sigma, false, &mut rng);
            salt_pepper_in_place(data, density, &mut rng);
        }
        NoiseKind::Poisson { scale } => {
            for v in data.iter_mut() {
                let rate = scale * v.max(0.0);
                *v = if rate > 0.0 {
                    let k: f64 = Poisson::new(rate)
                        .map_err(|e| Error::param("scale", e.to_string()))?
                        .sample(&mut rng);
                    k / scale
                } else {
                    0.0
                };
            }
        }
    }
    Ok(out.clamped(0.0, 1.0))
}

/// Odd-sized correlation kernel applied with replicate boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvOperator {
    rows: usize,
    cols: usize,
    kernel: Vec<f64>,
}

impl ConvOperator {
    pub fn new(rows: usize, cols: usize, kernel: Vec<f64>) -> Result<Self> {
        if rows % 2 == 0 || cols % 2 == 0 {
            return Err(Error::param("kernel", format!("dimensions {rows}x{cols} must be odd")));
        }
        if kernel.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: kernel.len(),
            });
        }
        if kernel.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel"));
        }
        Ok(Self { rows, cols, kernel })
    }

    pub fn delta() -> Self {
        Self {
            rows: 1,
            cols: 1,
            kernel: vec![1.0],
        }
    }

    /// Normalized `size x size` box filter.
    pub fn box_filter(size: usize) -> Result<Self> {
        let n = (size * size) as f64;
        Self::new(size, size, vec![1.0 / n; size * size])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    #[inline]
    fn taps(&self, w: usize, h: usize, x: usize, y: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (rr, rc) = ((self.rows / 2) as isize, (self.cols / 2) as isize);
        let (wi, hi) = (w as isize, h as isize);
        (0..self.rows).flat_map(move |a| {
            (0..self.cols).map(move |b| {
                let sy = (y as isize + a as isize - rr).clamp(0, hi - 1) as usize;
                let sx = (x as isize + b as isize - rc).clamp(0, wi - 1) as usize;
                (sy * w + sx, self.kernel[a * self.cols + b])
            })
        })
    }

    /// `W f`
    pub fn apply(&self, img: &Image) -> Image {
        let (w, h) = img.dims();
        let d = img.data();
        Image::from_fn(w, h, |x, y| self.taps(w, h, x, y).map(|(j, k)| k * d[j]).sum())
    }

    /// `W^T s`, the exact adjoint of [`ConvOperator::apply`].
    pub fn apply_transpose(&self, img: &Image) -> Image {
        let (w, h) = img.dims();
        let mut out = Image::zeros(w, h);
        let o = out.data_mut();
        for y in 0..h {
            for x in 0..w {
                let s = img.data()[y * w + x];
                for (j, k) in self.taps(w, h, x, y) {
                    o[j] += k * s;
                }
            }
        }
        out
    }

    /// `W^T W f`
    pub fn apply_normal(&self, img: &Image) -> Image {
        self.apply_transpose(&self.apply(img))
    }

    /// Parse the ASCII kernel format: `K <rows> <cols>` then row-major entries.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_ascii_whitespace();
        if tokens.next() != Some("K") {
            return Err(Error::MalformedHeader("kernel file must start with `K`".into()));
        }
        let mut dim = |what: &str| -> Result<usize> {
            tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::MalformedHeader(format!("kernel {what}")))
        };
        let rows = dim("rows")?;
        let cols = dim("cols")?;
        let kernel = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::MalformedHeader(format!("bad kernel entry {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if kernel.len() < rows * cols {
            return Err(Error::TruncatedPayload {
                expected: rows * cols,
                found: kernel.len(),
            });
        }
        Self::new(rows, cols, kernel)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("K {} {}\n", self.rows, self.cols);
        for row in self.kernel.chunks(self.cols) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Normalized truncated Gaussian; `radius` defaults to `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64, radius: Option<usize>) -> Result<ConvOperator> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param("sigma", format!("{sigma} must be > 0")));
    }
    let r = radius.unwrap_or((3.0 * sigma).ceil() as usize);
    let size = 2 * r + 1;
    let mut k = Vec::with_capacity(size * size);
    for a in 0..size {
        for b in 0..size {
            let (dy, dx) = (a as f64 - r as f64, b as f64 - r as f64);
            k.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
        }
    }
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    ConvOperator::new(size, size, k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecimationSpec {
    pub factor: usize,
    /// Pre-decimation Gaussian blur; 0 disables it.
    pub blur_sigma: f64,
}

impl Default for DecimationSpec {
    fn default() -> Self {
        Self {
            factor: 8,
            blur_sigma: 4.0,
        }
    }
}

/// Keep the top-left pixel of every `factor x factor` block.
pub fn decimate(img: &Image, factor: usize) -> Result<Image> {
    if factor == 0 {
        return Err(Error::param("factor", "must be positive"));
    }
    let (w, h) = img.dims();
    Ok(Image::from_fn(w.div_ceil(factor), h.div_ceil(factor), |x, y| {
        img.get(x * factor, y * factor)
    }))
}

/// Nearest-neighbor upsampling onto a `width x height` grid.
pub fn upsample_nearest(low: &Image, factor: usize, width: usize, height: usize) -> Image {
    Image::from_fn(width, height, |x, y| low.get(x / factor, y / factor))
}

/// Blur, decimate, add noise. Returns the low-resolution observation and its
/// nearest-neighbor upsampling back onto the input grid.
pub fn degrade_depth(img: &Image, spec: &DecimationSpec, noise: Option<&NoiseSpec>) -> Result<(Image, Image)> {
    if spec.factor < 2 {
        return Err(Error::param("factor", format!("{} must be >= 2", spec.factor)));
    }
    let (w, h) = img.dims();
    if w < spec.factor || h < spec.factor {
        return Err(Error::param(
            "factor",
            format!("image {w}x{h} smaller than factor {}", spec.factor),
        ));
    }
    let blurred = if spec.blur_sigma > 0.0 {
        gaussian_kernel(spec.blur_sigma, None)?.apply(img)
    } else {
        img.clone()
    };
    let mut low = decimate(&blurred, spec.factor)?;
    if let Some(n) = noise {
        low = add_noise(&low, n)?;
    }
    let up = upsample_nearest(&low, spec.factor, w, h);
    Ok((low, up))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_image(w: usize, h: usize, seed: u64) -> Image {
        let mut s = seed;
        Image::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn zero_sigma_gaussian_is_identity() {
        let img = lcg_image(9, 9, 1);
        let out = add_noise(&img, &NoiseSpec::new(NoiseKind::Gaussian { sigma: 0.0 }, 3)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn full_density_salt_pepper_is_binary() {
        let img = lcg_image(16, 16, 2);
        let out = add_noise(&img, &NoiseSpec::new(NoiseKind::SaltPepper { density: 1.0 }, 5)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(out.data().contains(&0.0) && out.data().contains(&1.0));
    }

    #[test]
    fn salt_pepper_touches_exact_fraction() {
        let img = Image::filled(20, 20, 0.5);
        let out = add_noise(&img, &NoiseSpec::new(NoiseKind::SaltPepper { density: 0.05 }, 1)).unwrap();
        assert_eq!(out.data().iter().filter(|&&v| v != 0.5).count(), 20);
    }

    #[test]
    fn speckle_keeps_zero_image() {
        let img = Image::zeros(8, 8);
        let out = add_noise(&img, &NoiseSpec::new(NoiseKind::Speckle { sigma: 0.2 }, 9)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn gaussian_sample_variance() {
        let img = Image::filled(256, 256, 0.5);
        let out = add_noise(&img, &NoiseSpec::new(NoiseKind::Gaussian { sigma: 0.1 }, 42)).unwrap();
        let n = img.len() as f64;
        let diffs: Vec<f64> = out.data().iter().map(|v| v - 0.5).collect();
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 0.01).abs() < 0.001, "variance {var}");
    }

    #[test]
    fn poisson_mean_tracks_intensity() {
        let (c, s) = (0.3, 255.0);
        let img = Image::filled(128, 128, c);
        let out = add_noise(&img, &NoiseSpec::new(NoiseKind::Poisson { scale: s }, 7)).unwrap();
        let n = img.len() as f64;
        let mean = out.data().iter().sum::<f64>() / n;
        let se = (c / (s * n)).sqrt();
        assert!((mean - c).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn noise_is_reproducible() {
        let img = lcg_image(32, 32, 3);
        for kind in [
            NoiseKind::Gaussian { sigma: 0.1 },
            NoiseKind::SaltPepper { density: 0.1 },
            NoiseKind::Poisson { scale: 100.0 },
            NoiseKind::Speckle { sigma: 0.2 },
            NoiseKind::GaussianSaltPepper { sigma: 0.05, density: 0.05 },
        ] {
            let spec = NoiseSpec::new(kind, 11);
            assert_eq!(add_noise(&img, &spec).unwrap(), add_noise(&img, &spec).unwrap());
            assert_ne!(add_noise(&img, &spec).unwrap(), add_noise(&img, &spec.with_seed(12)).unwrap());
        }
    }

    #[test]
    fn invalid_noise_specs() {
        let img = Image::zeros(2, 2);
        assert!(add_noise(&img, &NoiseSpec::new(NoiseKind::Gaussian { sigma: -1.0 }, 0)).is_err());
        assert!(add_noise(&img, &NoiseSpec::new(NoiseKind::SaltPepper { density: 1.5 }, 0)).is_err());
        assert!(add_noise(&img, &NoiseSpec::new(NoiseKind::Poisson { scale: 0.0 }, 0)).is_err());
    }

    #[test]
    fn delta_and_box_kernels() {
        let img = lcg_image(6, 5, 4);
        assert_eq!(ConvOperator::delta().apply(&img), img);
        let c = Image::filled(6, 5, 0.25);
        let out = ConvOperator::box_filter(3).unwrap().apply(&c);
        assert!(out.data().iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(ConvOperator::new(2, 3, vec![0.0; 6]).is_err());
    }

    #[test]
    fn convolution_adjoint() {
        let k = ConvOperator::new(3, 5, (0..15).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let x = lcg_image(16, 16, 5);
        let y = lcg_image(16, 16, 6);
        let lhs = k.apply(&x).dot(&y);
        let rhs = x.dot(&k.apply_transpose(&y));
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn gaussian_kernel_properties() {
        let k = gaussian_kernel(1.5, None).unwrap();
        assert_eq!(k.rows(), 11);
        let sum: f64 = k.kernel().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let n = k.rows();
        for a in 0..n {
            for b in 0..n {
                // 90 degree rotation: (a, b) -> (b, n-1-a)
                assert!((k.kernel()[a * n + b] - k.kernel()[b * n + (n - 1 - a)]).abs() < 1e-18);
            }
        }
        assert!(gaussian_kernel(0.0, None).is_err());
    }

    #[test]
    fn gaussian_kernel_center_value() {
        // center = 1 / sum_{a,b} exp(-(a^2+b^2)/(2 sigma^2)) = 1 / (sum_a exp(-a^2/32))^2
        let k = gaussian_kernel(4.0, Some(12)).unwrap();
        let s1: f64 = (-12i32..=12).map(|a| (-(a * a) as f64 / 32.0).exp()).sum();
        let center = k.kernel()[12 * 25 + 12];
        assert!((center - 1.0 / (s1 * s1)).abs() < 1e-15);
    }

    #[test]
    fn kernel_text_round_trip() {
        let k = gaussian_kernel(1.0, Some(1)).unwrap();
        let back = ConvOperator::parse(&k.to_text()).unwrap();
        for (a, b) in k.kernel().iter().zip(back.kernel()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(ConvOperator::parse("K 3 3\n1 2 3").is_err());
        assert!(ConvOperator::parse("X 1 1\n1").is_err());
    }

    #[test]
    fn block_constant_survives_decimation() {
        let img = Image::from_fn(8, 6, |x, y| ((x / 2) * 3 + (y / 2)) as f64 / 20.0);
        let spec = DecimationSpec { factor: 2, blur_sigma: 0.0 };
        let (low, up) = degrade_depth(&img, &spec, None).unwrap();
        assert_eq!(low.dims(), (4, 3));
        assert_eq!(up, img);
    }

    #[test]
    fn decimated_dims_use_ceiling() {
        let img = Image::zeros(17, 9);
        let (low, up) = degrade_depth(&img, &DecimationSpec { factor: 8, blur_sigma: 1.0 }, None).unwrap();
        assert_eq!(low.dims(), (3, 2));
        assert_eq!(up.dims(), (17, 9));
        assert!(degrade_depth(&Image::zeros(4, 4), &DecimationSpec::default(), None).is_err());
    }
}
