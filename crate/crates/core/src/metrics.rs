//! Quality metrics and quantile-residual statistics. Intensities are assumed
//! normalized, so the PSNR peak is 1.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::quantile::{apply_filter, QuantileConfig};

pub fn rmse(f: &Image, reference: &Image) -> Result<f64> {
    f.ensure_same_dims(reference)?;
    if f.is_empty() {
        return Err(Error::Empty);
    }
    let sse: f64 = f
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sse / f.len() as f64).sqrt())
}

/// Peak signal-to-noise ratio in dB; `+inf` for identical images.
pub fn psnr(f: &Image, reference: &Image) -> Result<f64> {
    let e = rmse(f, reference)?;
    Ok(if e == 0.0 { f64::INFINITY } else { -20.0 * e.log10() })
}

/// Bad matching error: fraction of pixels with `|f_i - ref_i| > delta`.
pub fn bme(f: &Image, reference: &Image, delta: f64) -> Result<f64> {
    f.ensure_same_dims(reference)?;
    if !(delta >= 0.0) {
        return Err(Error::param("delta", format!("{delta} must be >= 0")));
    }
    if f.is_empty() {
        return Err(Error::Empty);
    }
    let bad = f
        .data()
        .iter()
        .zip(reference.data())
        .filter(|(a, b)| (*a - *b).abs() > delta)
        .count();
    Ok(bad as f64 / f.len() as f64)
}

/// Uniform histogram over `[-1, 1]`; out-of-range samples go to the end bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::param("bins", format!("{bins} must be >= 2")));
        }
        let edges = (0..=bins).map(|k| -1.0 + 2.0 * k as f64 / bins as f64).collect();
        Ok(Self {
            edges,
            counts: vec![0; bins],
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_of(&self, v: f64) -> usize {
        let n = self.bins();
        let k = ((v + 1.0) / 2.0 * n as f64).floor();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(n - 1)
        }
    }

    pub fn add(&mut self, v: f64) {
        let k = self.bin_of(v);
        self.counts[k] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    /// Standard deviation of the binned distribution (bin centers).
    pub fn std(&self) -> f64 {
        let n = self.total() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let c = self.centers();
        let mean = c.iter().zip(&self.counts).map(|(x, &k)| x * k as f64).sum::<f64>() / n;
        let var = c
            .iter()
            .zip(&self.counts)
            .map(|(x, &k)| (x - mean).powi(2) * k as f64)
            .sum::<f64>()
            / n;
        var.sqrt()
    }

    /// CSV with header `bin_lo,bin_hi,count`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for (e, c) in self.edges.windows(2).zip(&self.counts) {
            s.push_str(&format!("{},{},{}\n", e[0], e[1], c));
        }
        s
    }
}

/// `r = f - Q_{p,w}(f)`
pub fn quantile_residual(img: &Image, cfg: &QuantileConfig, guidance: Option<&Image>) -> Result<Image> {
    let filtered = apply_filter(img, cfg, guidance)?;
    img.zip_map(&filtered, |a, b| a - b)
}

pub fn residual_histogram(
    img: &Image,
    cfg: &QuantileConfig,
    guidance: Option<&Image>,
    bins: usize,
) -> Result<Histogram> {
    let mut hist = Histogram::new(bins)?;
    for &r in quantile_residual(img, cfg, guidance)?.data() {
        hist.add(r);
    }
    Ok(hist)
}
