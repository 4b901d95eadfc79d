//! Regularization terms, their smoothed gradients, and the L1 shrinkage.
//!
//! All gradients treat the selection operator as frozen: the dependence of
//! `Q` on `f` is not differentiated.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::quantile::SelectionOperator;

/// Regularization weights: `lambda` for AQuaSI, `mu` for TV, and the
/// sign-smoothing constant `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegWeights {
    pub lambda: f64,
    pub mu: f64,
    pub epsilon: f64,
}

impl RegWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("mu", self.mu)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::param(name, format!("{v} must be finite and >= 0")));
            }
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::param("epsilon", format!("{} must be > 0", self.epsilon)));
        }
        Ok(())
    }
}

/// `u / sqrt(u^2 + eps)`
#[inline]
pub fn smoothed_sign(u: f64, epsilon: f64) -> f64 {
    u / (u * u + epsilon).sqrt()
}

/// Soft thresholding, the proximal map of `gamma * |.|`.
#[inline]
pub fn shrink(u: f64, gamma: f64) -> f64 {
    u.signum() * (u.abs() - gamma).max(0.0)
}

pub fn shrink_image(img: &Image, gamma: f64) -> Image {
    img.map(|u| shrink(u, gamma))
}

/// `||f - Q f||_1`
pub fn aquasi_value(f: &Image, q: &SelectionOperator) -> Result<f64> {
    Ok(q.residual(f)?.norm_l1())
}

/// `sum_i sqrt((f - Q f)_i^2 + eps)`, the functional whose exact gradient is
/// [`aquasi_gradient`].
pub fn aquasi_smoothed_value(f: &Image, q: &SelectionOperator, epsilon: f64) -> Result<f64> {
    Ok(q.residual(f)?.data().iter().map(|r| (r * r + epsilon).sqrt()).sum())
}

/// `(I - Q)^T s` with `s_i = smoothed_sign((f - Q f)_i)`.
pub fn aquasi_gradient(f: &Image, q: &SelectionOperator, epsilon: f64) -> Result<Image> {
    let s = q.residual(f)?.map(|r| smoothed_sign(r, epsilon));
    q.residual_transpose(&s)
}

/// Forward difference along x; zero in the last column.
pub fn diff_x(f: &Image) -> Image {
    let (w, h) = f.dims();
    Image::from_fn(w, h, |x, y| if x + 1 < w { f.get(x + 1, y) - f.get(x, y) } else { 0.0 })
}

/// Forward difference along y; zero in the last row.
pub fn diff_y(f: &Image) -> Image {
    let (w, h) = f.dims();
    Image::from_fn(w, h, |x, y| if y + 1 < h { f.get(x, y + 1) - f.get(x, y) } else { 0.0 })
}

pub fn diff_x_transpose(s: &Image) -> Image {
    let (w, h) = s.dims();
    Image::from_fn(w, h, |x, y| {
        let mut v = 0.0;
        if x >= 1 {
            v += s.get(x - 1, y);
        }
        if x + 1 < w {
            v -= s.get(x, y);
        }
        v
    })
}

pub fn diff_y_transpose(s: &Image) -> Image {
    let (w, h) = s.dims();
    Image::from_fn(w, h, |x, y| {
        let mut v = 0.0;
        if y >= 1 {
            v += s.get(x, y - 1);
        }
        if y + 1 < h {
            v -= s.get(x, y);
        }
        v
    })
}

/// Anisotropic TV: `||D_x f||_1 + ||D_y f||_1`.
pub fn tv_value(f: &Image) -> f64 {
    diff_x(f).norm_l1() + diff_y(f).norm_l1()
}

/// Smoothed TV over all difference entries (including the zero border
/// entries, which contribute the constant `sqrt(eps)`).
pub fn tv_smoothed_value(f: &Image, epsilon: f64) -> f64 {
    let s = |d: Image| d.data().iter().map(|v| (v * v + epsilon).sqrt()).sum::<f64>();
    s(diff_x(f)) + s(diff_y(f))
}

pub fn tv_gradient(f: &Image, epsilon: f64) -> Image {
    let sx = diff_x(f).map(|v| smoothed_sign(v, epsilon));
    let sy = diff_y(f).map(|v| smoothed_sign(v, epsilon));
    let mut g = diff_x_transpose(&sx);
    g.axpy(1.0, &diff_y_transpose(&sy));
    g
}

/// RED comparison term `f^T (f - Q f)`.
pub fn red_value(f: &Image, q: &SelectionOperator) -> Result<f64> {
    Ok(f.dot(&q.residual(f)?))
}

/// `(2I - Q - Q^T) f`
pub fn red_gradient(f: &Image, q: &SelectionOperator) -> Result<Image> {
    let mut g = f.clone();
    g.scale(2.0);
    g.axpy(-1.0, &q.apply(f)?);
    g.axpy(-1.0, &q.apply_transpose(f)?);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantile::{build_selection, QuantileConfig};
    use proptest::prelude::*;

    fn lcg_image(w: usize, h: usize, seed: u64) -> Image {
        let mut s = seed;
        Image::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn aquasi_value_zero_cases() {
        let c = Image::filled(5, 5, 0.3);
        let q = build_selection(&c, &QuantileConfig::median(1), None).unwrap();
        assert_eq!(aquasi_value(&c, &q).unwrap(), 0.0);
        let f = lcg_image(5, 5, 1);
        assert_eq!(aquasi_value(&f, &SelectionOperator::identity(5, 5)).unwrap(), 0.0);
    }

    #[test]
    fn aquasi_value_matches_elementwise_median_sum() {
        let f = lcg_image(6, 6, 2);
        let q = build_selection(&f, &QuantileConfig::median(1), None).unwrap();
        let mut expect = 0.0;
        for i in 0..36 {
            let mut vals: Vec<f64> = f.window(i, 1).unwrap().members.iter().map(|m| m.1).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // lower median: first k with k/n >= 0.5
            let k = (vals.len() + 1) / 2 - 1;
            expect += (f.data()[i] - vals[k]).abs();
        }
        assert!((aquasi_value(&f, &q).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn smoothed_sign_values() {
        assert_eq!(smoothed_sign(0.0, 1e-3), 0.0);
        let v = smoothed_sign(1.0, 1e-6);
        assert!((v - 1.0 / (1.0f64 + 1e-6).sqrt()).abs() < 1e-15);
        assert!((v - 0.9999995).abs() < 1e-9);
        // slope at zero is 1/sqrt(eps)
        let h = 1e-9;
        assert!(((smoothed_sign(h, 1e-4) / h) - 100.0).abs() < 1e-6);
    }

    #[test]
    fn gradients_vanish_where_expected() {
        let c = Image::filled(6, 6, 0.8);
        let q = build_selection(&c, &QuantileConfig::median(1), None).unwrap();
        assert!(aquasi_gradient(&c, &q, 1e-4).unwrap().data().iter().all(|&v| v == 0.0));
        let f = lcg_image(6, 6, 4);
        let id = SelectionOperator::identity(6, 6);
        assert!(aquasi_gradient(&f, &id, 1e-4).unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(red_value(&f, &id).unwrap(), 0.0);
        assert!(red_gradient(&f, &id).unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(red_value(&c, &q).unwrap(), 0.0);
    }

    #[test]
    fn tv_of_constant_and_step() {
        assert_eq!(tv_value(&Image::filled(7, 4, 0.5)), 0.0);
        let step = Image::from_fn(8, 5, |x, _| if x < 4 { 0.0 } else { 1.0 });
        assert_eq!(tv_value(&step), 5.0);
    }

    #[test]
    fn difference_transposes_are_adjoint() {
        let x = lcg_image(7, 5, 11);
        let y = lcg_image(7, 5, 12);
        assert!((diff_x(&x).dot(&y) - x.dot(&diff_x_transpose(&y))).abs() < 1e-12);
        assert!((diff_y(&x).dot(&y) - x.dot(&diff_y_transpose(&y))).abs() < 1e-12);
    }

    #[test]
    fn red_value_matches_direct_sum() {
        let f = lcg_image(6, 6, 5);
        let src: Vec<usize> = (0..36).map(|i| (i * 7 + 3) % 36).collect();
        let q = SelectionOperator::from_indices(6, 6, src.clone()).unwrap();
        let d = f.data();
        let expect: f64 = (0..36).map(|i| d[i] * (d[i] - d[src[i]])).sum();
        assert!((red_value(&f, &q).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn shrink_values() {
        assert_eq!(shrink(0.15, 0.2), 0.0);
        assert_eq!(shrink(-0.2, 0.2), 0.0);
        assert!((shrink(0.7, 0.2) - 0.5).abs() < 1e-15);
        assert!((shrink(-0.7, 0.2) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn reg_weights_validation() {
        assert!(RegWeights { lambda: 1.0, mu: 0.0, epsilon: 1e-4 }.validate().is_ok());
        assert!(RegWeights { lambda: -1.0, mu: 0.0, epsilon: 1e-4 }.validate().is_err());
        assert!(RegWeights { lambda: 1.0, mu: 0.0, epsilon: 0.0 }.validate().is_err());
    }

    proptest! {
        #[test]
        fn shrink_is_odd_and_nonexpansive(a in -10.0f64..10.0, b in -10.0f64..10.0, g in 0.0f64..5.0) {
            prop_assert_eq!(shrink(-a, g), -shrink(a, g));
            prop_assert!((shrink(a, g) - shrink(b, g)).abs() <= (a - b).abs() + 1e-15);
        }

        #[test]
        fn smoothed_sign_is_odd_and_bounded(u in -1e3f64..1e3, eps in 1e-8f64..1.0) {
            prop_assert_eq!(smoothed_sign(-u, eps), -smoothed_sign(u, eps));
            prop_assert!(smoothed_sign(u, eps).abs() < 1.0);
        }

        #[test]
        fn smoothed_l1_brackets_l1(u in proptest::collection::vec(-2.0f64..2.0, 1..50), eps in 1e-8f64..0.1) {
            let smooth: f64 = u.iter().map(|v| (v * v + eps).sqrt()).sum();
            let l1: f64 = u.iter().map(|v| v.abs()).sum();
            let n = u.len() as f64;
            prop_assert!(smooth - n * eps.sqrt() <= l1 + 1e-12);
            prop_assert!(l1 <= smooth + 1e-12);
        }
    }
}
