use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Image,
    pub iterations: usize,
    /// `||b - A x|| / ||b||` (absolute when `b` is zero).
    pub relative_residual: f64,
}

/// Conjugate gradients for a symmetric positive (semi)definite `apply_a`,
/// warm-started from `x0`. Stops once the relative residual drops below
/// `tol` or after `max_iters` iterations.
pub fn cg_solve(
    apply_a: impl Fn(&Image) -> Image,
    b: &Image,
    x0: &Image,
    max_iters: usize,
    tol: f64,
) -> Result<CgOutcome> {
    b.ensure_same_dims(x0)?;
    let b_norm = match b.norm_l2() {
        n if n > 0.0 => n,
        _ => 1.0,
    };
    let mut x = x0.clone();
    let mut r = b.clone();
    r.axpy(-1.0, &apply_a(&x));
    let mut rr = r.dot(&r);
    if !rr.is_finite() {
        return Err(Error::NonFinite("conjugate gradient residual"));
    }
    let mut p = r.clone();
    let mut iterations = 0;
    while iterations < max_iters && rr.sqrt() / b_norm >= tol {
        let ap = apply_a(&p);
        let pap = p.dot(&ap);
        if !pap.is_finite() {
            return Err(Error::NonFinite("conjugate gradient curvature"));
        }
        if pap <= 0.0 {
            // no descent left along p (semidefinite null direction)
            break;
        }
        let step = rr / pap;
        x.axpy(step, &p);
        r.axpy(-step, &ap);
        let rr_next = r.dot(&r);
        if !rr_next.is_finite() {
            return Err(Error::NonFinite("conjugate gradient residual"));
        }
        let beta = rr_next / rr;
        rr = rr_next;
        let mut next = r.clone();
        next.axpy(beta, &p);
        p = next;
        iterations += 1;
    }
    Ok(CgOutcome {
        x,
        iterations,
        relative_residual: rr.sqrt() / b_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantile::{build_selection, QuantileConfig};

    fn lcg_image(w: usize, h: usize, seed: u64) -> Image {
        let mut s = seed;
        Image::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn identity_system_in_one_iteration() {
        let b = lcg_image(4, 4, 1);
        let out = cg_solve(|x| x.clone(), &b, &Image::zeros(4, 4), 10, 1e-12).unwrap();
        assert_eq!(out.iterations, 1);
        for (a, e) in out.x.data().iter().zip(b.data()) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn diagonal_system_matches_closed_form() {
        let d = Image::from_vec(2, 2, vec![2.0, 3.0, 5.0, 7.0]).unwrap();
        let b = lcg_image(2, 2, 2);
        let out = cg_solve(|x| x.zip_map(&d, |a, b| a * b).unwrap(), &b, &Image::zeros(2, 2), 10, 1e-14).unwrap();
        for i in 0..4 {
            assert!((out.x.data()[i] - b.data()[i] / d.data()[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn aquasi_normal_equations_and_monotone_energy() {
        let f = lcg_image(8, 8, 3);
        let q = build_selection(&f, &QuantileConfig::median(1), None).unwrap();
        let alpha = 5.0;
        let apply = |x: &Image| {
            let mut y = x.clone();
            y.axpy(alpha, &q.residual_transpose(&q.residual(x).unwrap()).unwrap());
            y
        };
        let b = lcg_image(8, 8, 4);
        // energy 1/2 x^T A x - b^T x after k iterations
        let mut last = 0.0;
        for k in 1..=15 {
            let out = cg_solve(apply, &b, &Image::zeros(8, 8), k, 0.0).unwrap();
            let e = 0.5 * out.x.dot(&apply(&out.x)) - b.dot(&out.x);
            assert!(e <= last + 1e-12);
            last = e;
        }
        let out = cg_solve(apply, &b, &Image::zeros(8, 8), 500, 1e-12).unwrap();
        let mut res = b.clone();
        res.axpy(-1.0, &apply(&out.x));
        assert!(res.norm_l2() < 1e-8);
    }

    #[test]
    fn converged_start_does_no_work() {
        let b = lcg_image(3, 3, 5);
        let out = cg_solve(|x| x.clone(), &b, &b, 10, 1e-8).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x, b);
    }

    #[test]
    fn non_finite_operator_is_reported() {
        let b = lcg_image(3, 3, 6);
        let err = cg_solve(|x| x.map(|v| v * f64::NAN), &b, &Image::zeros(3, 3), 5, 1e-8).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }
}
