//! Guidance-weighted p-quantile filtering and its pseudo-linear form.
//!
//! For every pixel the clipped window is sorted by intensity (ties broken by
//! row-major position), the weights are accumulated in that order and the
//! first member whose cumulative weight reaches `p` times the total weight is
//! selected. Weights come from a Gaussian kernel on guidance intensities.
//!
//! Recording the selected source pixel for every output pixel yields a
//! one-hot [`SelectionOperator`] `Q` with `Q f == filter(f)` for the image it
//! was built from.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

/// Lower bound for guidance weights, so cumulative sums stay strictly increasing.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// Where the guidance image for the weights comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Guidance {
    /// All weights one: the classic order-statistic filter.
    Uniform,
    /// An external image supplied by the caller, fixed for the whole run.
    Static,
    /// The observation `g`, fixed for the whole run.
    DynamicInput,
    /// The current iterate, re-read whenever the selection is rebuilt.
    #[default]
    DynamicIterate,
}

impl Guidance {
    pub fn name(self) -> &'static str {
        match self {
            Guidance::Uniform => "uniform",
            Guidance::Static => "static",
            Guidance::DynamicInput => "dynamic-input",
            Guidance::DynamicIterate => "dynamic-iterate",
        }
    }
}

impl std::str::FromStr for Guidance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Guidance::Uniform),
            "static" => Ok(Guidance::Static),
            "dynamic-input" => Ok(Guidance::DynamicInput),
            "dynamic-iterate" | "dynamic" => Ok(Guidance::DynamicIterate),
            _ => Err(Error::param("guidance", format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileConfig {
    /// Quantile fraction in `[0, 1]`; 0.5 is the weighted median.
    pub p: f64,
    /// Window radius; the window spans `(2r+1)^2` pixels in the interior.
    pub radius: usize,
    /// Bandwidth of the Gaussian guidance kernel.
    pub sigma_w: f64,
    pub guidance: Guidance,
}

impl Default for QuantileConfig {
    fn default() -> Self {
        Self {
            p: 0.5,
            radius: 2,
            sigma_w: 0.1,
            guidance: Guidance::DynamicIterate,
        }
    }
}

impl QuantileConfig {
    pub fn median(radius: usize) -> Self {
        Self {
            radius,
            guidance: Guidance::Uniform,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::param("p", format!("{} not in [0, 1]", self.p)));
        }
        if self.radius == 0 {
            return Err(Error::param("radius", "must be at least 1"));
        }
        if !(self.sigma_w > 0.0) || !self.sigma_w.is_finite() {
            return Err(Error::param("sigma_w", format!("{} must be positive", self.sigma_w)));
        }
        Ok(())
    }
}

/// Gaussian similarity `exp(-(z_i - z_j)^2 / (2 sigma_w^2))`, floored at
/// [`WEIGHT_FLOOR`].
#[inline]
pub fn guidance_weight(z_i: f64, z_j: f64, sigma_w: f64) -> f64 {
    let d = z_i - z_j;
    (-(d * d) / (2.0 * sigma_w * sigma_w)).exp().max(WEIGHT_FLOOR)
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    value: f64,
    weight: f64,
    index: usize,
}

fn by_value_then_index(a: &Entry, b: &Entry) -> Ordering {
    a.value
        .partial_cmp(&b.value)
        .unwrap_or(Ordering::Equal)
        .then(a.index.cmp(&b.index))
}

/// Sorts `entries` and returns the sorted position of the weighted p-quantile.
fn select_sorted(entries: &mut [Entry], p: f64) -> usize {
    entries.sort_unstable_by(by_value_then_index);
    // the total is summed in the same order as the running sum, so the last
    // position always satisfies the threshold for p <= 1
    let total: f64 = entries.iter().map(|e| e.weight).sum();
    let threshold = p * total;
    let mut acc = 0.0;
    for (k, e) in entries.iter().enumerate() {
        acc += e.weight;
        if acc >= threshold {
            return k;
        }
    }
    entries.len() - 1
}

/// Weighted p-quantile of `values`. Returns the selected value and its
/// position in the input slice.
pub fn weighted_quantile(values: &[f64], weights: &[f64], p: f64) -> Result<(f64, usize)> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    if values.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: values.len(),
            actual: weights.len(),
        });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param("p", format!("{p} not in [0, 1]")));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::param("weights", "must be positive and finite"));
    }
    let mut entries: Vec<Entry> = values
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(index, (&value, &weight))| Entry { value, weight, index })
        .collect();
    let k = select_sorted(&mut entries, p);
    Ok((entries[k].value, entries[k].index))
}

fn check_inputs(img: &Image, cfg: &QuantileConfig, guidance: Option<&Image>) -> Result<()> {
    cfg.validate()?;
    if img.is_empty() {
        return Err(Error::Empty);
    }
    if let Some(z) = guidance {
        img.ensure_same_dims(z)?;
    }
    Ok(())
}

/// Global index selected for output pixel `i`.
fn select_pixel(
    img: &Image,
    z: Option<&Image>,
    cfg: &QuantileConfig,
    i: usize,
    scratch: &mut Vec<Entry>,
) -> usize {
    scratch.clear();
    let data = img.data();
    match z {
        None => scratch.extend(img.window_indices(i, cfg.radius).map(|j| Entry {
            value: data[j],
            weight: 1.0,
            index: j,
        })),
        Some(z) => {
            let zd = z.data();
            let zi = zd[i];
            scratch.extend(img.window_indices(i, cfg.radius).map(|j| Entry {
                value: data[j],
                weight: guidance_weight(zi, zd[j], cfg.sigma_w),
                index: j,
            }))
        }
    }
    let k = select_sorted(scratch, cfg.p);
    scratch[k].index
}

fn effective_guidance<'a>(img: &'a Image, cfg: &QuantileConfig, guidance: Option<&'a Image>) -> Option<&'a Image> {
    match cfg.guidance {
        Guidance::Uniform => None,
        _ => Some(guidance.unwrap_or(img)),
    }
}

fn selected_indices(img: &Image, cfg: &QuantileConfig, guidance: Option<&Image>) -> Vec<usize> {
    let z = effective_guidance(img, cfg, guidance);
    let w = img.width();
    let mut source = vec![0usize; img.len()];
    source
        .par_chunks_mut(w)
        .enumerate()
        .for_each_init(Vec::new, |scratch, (y, row)| {
            for (x, s) in row.iter_mut().enumerate() {
                *s = select_pixel(img, z, cfg, y * w + x, scratch);
            }
        });
    source
}

/// Weighted p-quantile filter of `img`.
///
/// `guidance` supplies `z` for the weights. It is ignored in
/// [`Guidance::Uniform`] mode; when `None` in any other mode the image guides
/// itself.
pub fn apply_filter(img: &Image, cfg: &QuantileConfig, guidance: Option<&Image>) -> Result<Image> {
    check_inputs(img, cfg, guidance)?;
    let z = effective_guidance(img, cfg, guidance);
    let w = img.width();
    let mut out = vec![0.0; img.len()];
    out.par_chunks_mut(w)
        .enumerate()
        .for_each_init(Vec::new, |scratch, (y, row)| {
            for (x, o) in row.iter_mut().enumerate() {
                *o = img.data()[select_pixel(img, z, cfg, y * w + x, scratch)];
            }
        });
    Image::from_vec(img.width(), img.height(), out)
}

/// Pseudo-linear form of [`apply_filter`] around `img`.
pub fn build_selection(img: &Image, cfg: &QuantileConfig, guidance: Option<&Image>) -> Result<SelectionOperator> {
    check_inputs(img, cfg, guidance)?;
    Ok(SelectionOperator {
        width: img.width(),
        height: img.height(),
        source: selected_indices(img, cfg, guidance),
    })
}

/// One-hot selection matrix: row `i` has a single one in column `source[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionOperator {
    width: usize,
    height: usize,
    source: Vec<usize>,
}

impl SelectionOperator {
    pub fn identity(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            source: (0..width * height).collect(),
        }
    }

    pub fn from_indices(width: usize, height: usize, source: Vec<usize>) -> Result<Self> {
        let n = width * height;
        if source.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: source.len(),
            });
        }
        if let Some(&bad) = source.iter().find(|&&j| j >= n) {
            return Err(Error::OutOfRange { index: bad, len: n });
        }
        Ok(Self {
            width,
            height,
            source,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn source(&self) -> &[usize] {
        &self.source
    }

    fn check(&self, img: &Image) -> Result<()> {
        if img.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: img.dims(),
            });
        }
        Ok(())
    }

    /// `Q x`: gather.
    pub fn apply(&self, img: &Image) -> Result<Image> {
        self.check(img)?;
        let d = img.data();
        Image::from_vec(self.width, self.height, self.source.iter().map(|&j| d[j]).collect())
    }

    /// `Q^T y`: scatter-add.
    pub fn apply_transpose(&self, img: &Image) -> Result<Image> {
        self.check(img)?;
        let mut out = Image::zeros(self.width, self.height);
        let o = out.data_mut();
        for (&j, &v) in self.source.iter().zip(img.data()) {
            o[j] += v;
        }
        Ok(out)
    }

    /// `(I - Q) x`
    pub fn residual(&self, img: &Image) -> Result<Image> {
        self.check(img)?;
        let d = img.data();
        Image::from_vec(
            self.width,
            self.height,
            self.source.iter().enumerate().map(|(i, &j)| d[i] - d[j]).collect(),
        )
    }

    /// `(I - Q)^T y`
    pub fn residual_transpose(&self, img: &Image) -> Result<Image> {
        let mut out = img.clone();
        out.axpy(-1.0, &self.apply_transpose(img)?);
        Ok(out)
    }

    /// How many output pixels select each source pixel.
    pub fn multiplicity(&self) -> Vec<usize> {
        let mut counts = vec![0; self.source.len()];
        for &j in &self.source {
            counts[j] += 1;
        }
        counts
    }

    /// True when every selected source lies in the clipped window of its row.
    pub fn is_within_radius(&self, radius: usize) -> bool {
        self.source.iter().enumerate().all(|(i, &j)| {
            let (xi, yi) = (i % self.width, i / self.width);
            let (xj, yj) = (j % self.width, j / self.width);
            xi.abs_diff(xj) <= radius && yi.abs_diff(yj) <= radius
        })
    }

    /// Debug serialization: `QSEL <w> <h>\n` then little-endian u64 indices.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = format!("QSEL {} {}\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + 8 * self.source.len());
        out.extend_from_slice(header.as_bytes());
        for &j in &self.source {
            out.extend_from_slice(&(j as u64).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::MalformedHeader("missing QSEL header".into()))?;
        let line = std::str::from_utf8(&bytes[..nl])
            .map_err(|_| Error::MalformedHeader("QSEL header is not ASCII".into()))?;
        let f: Vec<&str> = line.split_ascii_whitespace().collect();
        if f.len() != 3 || f[0] != "QSEL" {
            return Err(Error::MalformedHeader(format!("bad QSEL header {line:?}")));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::MalformedHeader(format!("bad QSEL dimension {s:?}")))
        };
        let (w, h) = (parse(f[1])?, parse(f[2])?);
        let payload = &bytes[nl + 1..];
        let expected = 8 * w * h;
        if payload.len() < expected {
            return Err(Error::TruncatedPayload {
                expected,
                found: payload.len(),
            });
        }
        let source = payload[..expected]
            .chunks_exact(8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("chunk of 8")) as usize)
            .collect();
        Self::from_indices(w, h, source)
    }
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
    fn guidance_weight_values() {
        assert_eq!(guidance_weight(0.5, 0.5, 0.3), 1.0);
        let w = guidance_weight(0.0, 1.0, 0.1);
        assert!((w / (-50.0f64).exp() - 1.0).abs() < 1e-12);
        assert_eq!(guidance_weight(0.2, 0.9, 0.05), guidance_weight(0.9, 0.2, 0.05));
        assert_eq!(guidance_weight(0.0, 1.0, 1e-4), WEIGHT_FLOOR);
    }

    #[test]
    fn classic_median() {
        assert_eq!(weighted_quantile(&[3.0, 1.0, 2.0], &[1.0; 3], 0.5).unwrap(), (2.0, 2));
    }

    #[test]
    fn weighted_median_by_hand() {
        // sorted (1,3,5), weights (0.2,0.5,0.3); cumsum 0.2, 0.7 >= 0.5
        let (v, i) = weighted_quantile(&[5.0, 1.0, 3.0], &[0.3, 0.2, 0.5], 0.5).unwrap();
        assert_eq!((v, i), (3.0, 2));
    }

    #[test]
    fn quantile_endpoints() {
        let vals = [0.4, -1.0, 7.0, 2.5];
        let w = [0.1, 3.0, 0.2, 1.0];
        assert_eq!(weighted_quantile(&vals, &w, 0.0).unwrap().0, -1.0);
        assert_eq!(weighted_quantile(&vals, &w, 1.0).unwrap().0, 7.0);
    }

    #[test]
    fn ties_resolve_to_first_position() {
        let (v, i) = weighted_quantile(&[1.0, 1.0, 1.0], &[1.0; 3], 0.0).unwrap();
        assert_eq!((v, i), (1.0, 0));
        let (_, i) = weighted_quantile(&[2.0, 1.0, 2.0], &[1.0; 3], 1.0).unwrap();
        assert_eq!(i, 2);
    }

    #[test]
    fn weighted_quantile_errors() {
        assert!(matches!(weighted_quantile(&[], &[], 0.5), Err(Error::Empty)));
        assert!(weighted_quantile(&[1.0], &[0.0], 0.5).is_err());
        assert!(weighted_quantile(&[1.0], &[-1.0], 0.5).is_err());
        assert!(weighted_quantile(&[1.0, 2.0], &[1.0], 0.5).is_err());
        assert!(weighted_quantile(&[1.0], &[1.0], 1.5).is_err());
    }

    #[test]
    fn constant_image_is_fixed() {
        let img = Image::filled(6, 5, 0.37);
        for g in [Guidance::Uniform, Guidance::DynamicIterate] {
            let cfg = QuantileConfig { guidance: g, ..QuantileConfig::default() };
            assert_eq!(apply_filter(&img, &cfg, None).unwrap(), img);
            let q = build_selection(&img, &cfg, None).unwrap();
            assert_eq!(q.apply(&img).unwrap(), img);
        }
    }

    #[test]
    fn impulse_is_removed() {
        let mut img = Image::zeros(5, 5);
        img.set(2, 2, 1.0);
        let out = apply_filter(&img, &QuantileConfig::median(1), None).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn monotone_ramp_selects_itself_in_interior() {
        // row-major ramp: the window median of a 3x3 block is its center
        let img = Image::from_fn(6, 6, |x, y| (y * 6 + x) as f64 / 36.0);
        let q = build_selection(&img, &QuantileConfig::median(1), None).unwrap();
        for y in 1..5 {
            for x in 1..5 {
                let i = y * 6 + x;
                assert_eq!(q.source()[i], i);
            }
        }
    }

    #[test]
    fn selection_matches_filter_and_stays_in_window() {
        for seed in 0..5 {
            let img = lcg_image(8, 8, seed);
            let z = lcg_image(8, 8, seed + 100);
            for guidance in [Guidance::Uniform, Guidance::Static, Guidance::DynamicIterate] {
                let cfg = QuantileConfig { p: 0.3, radius: 2, sigma_w: 0.2, guidance };
                let q = build_selection(&img, &cfg, Some(&z)).unwrap();
                assert!(q.is_within_radius(2));
                assert_eq!(q.apply(&img).unwrap(), apply_filter(&img, &cfg, Some(&z)).unwrap());
            }
        }
    }

    #[test]
    fn filter_rejects_mismatched_guidance() {
        let img = Image::zeros(4, 4);
        let z = Image::zeros(4, 3);
        let cfg = QuantileConfig::default();
        assert!(matches!(
            apply_filter(&img, &cfg, Some(&z)),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad = QuantileConfig { sigma_w: 0.0, ..cfg };
        assert!(apply_filter(&img, &bad, None).is_err());
    }

    #[test]
    fn identity_selection_is_identity_both_ways() {
        let img = lcg_image(5, 4, 9);
        let q = SelectionOperator::identity(5, 4);
        assert_eq!(q.apply(&img).unwrap(), img);
        assert_eq!(q.apply_transpose(&img).unwrap(), img);
        assert!(q.residual(&img).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transpose_of_ones_counts_multiplicity() {
        let img = lcg_image(7, 7, 3);
        let q = build_selection(&img, &QuantileConfig::median(1), None).unwrap();
        let counts = q.apply_transpose(&Image::filled(7, 7, 1.0)).unwrap();
        for (c, m) in counts.data().iter().zip(q.multiplicity()) {
            assert_eq!(*c, m as f64);
        }
    }

    #[test]
    fn qsel_round_trip_and_errors() {
        let q = SelectionOperator::from_indices(2, 2, vec![1, 1, 3, 0]).unwrap();
        let bytes = q.to_bytes();
        assert!(bytes.starts_with(b"QSEL 2 2\n"));
        assert_eq!(SelectionOperator::from_bytes(&bytes).unwrap(), q);
        assert!(SelectionOperator::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(SelectionOperator::from_indices(2, 2, vec![0, 1, 2, 4]).is_err());
    }

    #[test]
    fn guidance_names_parse_back() {
        for g in [Guidance::Uniform, Guidance::Static, Guidance::DynamicInput, Guidance::DynamicIterate] {
            assert_eq!(g.name().parse::<Guidance>().unwrap(), g);
        }
        assert!("bogus".parse::<Guidance>().is_err());
    }
}
