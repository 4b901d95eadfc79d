use std::time::Instant;

use super::{
    check_divergence, check_static_guidance, converged, linearize, pick_guidance, DataTerm, EnergyRecord,
    EnergyTrace, Solution, SolverConfig,
};
use crate::error::Result;
use crate::image::{Image, MultiChannelImage};
use crate::quantile::SelectionOperator;
use crate::regularizers::{aquasi_gradient, aquasi_value, red_gradient, red_value, tv_gradient, tv_value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Prior {
    Aquasi,
    Red,
}

/// Steepest descent on `L + lambda R_AQuaSI + mu TV` with a fixed step.
/// Channels are processed independently, each with its own selection.
pub fn solve_gd(data: &DataTerm, cfg: &SolverConfig, guidance: Option<&Image>) -> Result<Solution> {
    descend(data, cfg, guidance, Prior::Aquasi)
}

/// Same iteration with the RED term `lambda f^T (f - Q f)` in place of the
/// AQuaSI term, for comparison runs.
pub fn solve_red(data: &DataTerm, cfg: &SolverConfig, guidance: Option<&Image>) -> Result<Solution> {
    descend(data, cfg, guidance, Prior::Red)
}

fn prior_value(prior: Prior, f: &Image, q: &SelectionOperator) -> Result<f64> {
    match prior {
        Prior::Aquasi => aquasi_value(f, q),
        Prior::Red => red_value(f, q),
    }
}

fn descend(data: &DataTerm, cfg: &SolverConfig, guidance: Option<&Image>, prior: Prior) -> Result<Solution> {
    cfg.validate()?;
    check_static_guidance(cfg, data.dims(), guidance)?;
    let start = Instant::now();
    let qcfg = &cfg.quantile;
    let channels = data.num_channels();
    let inputs = data.observation().channels();

    let mut fs: Vec<Image> = inputs.to_vec();
    let mut builds = 0;
    let mut qs = Vec::with_capacity(channels);
    for (f, g) in fs.iter().zip(inputs) {
        qs.push(linearize(f, qcfg, pick_guidance(qcfg.guidance, guidance, g, f), &mut builds)?);
    }

    let energy = |fs: &[Image], qs: &[SelectionOperator], iter: usize| -> Result<EnergyRecord> {
        let mut rec = EnergyRecord {
            iter,
            time_s: start.elapsed().as_secs_f64(),
            data: 0.0,
            aquasi: 0.0,
            tv: 0.0,
            total: 0.0,
        };
        for (c, (f, q)) in fs.iter().zip(qs).enumerate() {
            rec.data += data.value(c, f);
            rec.aquasi += cfg.lambda * prior_value(prior, f, q)?;
            if cfg.mu > 0.0 {
                rec.tv += cfg.mu * tv_value(f);
            }
        }
        rec.total = rec.data + rec.aquasi + rec.tv;
        Ok(rec)
    };

    let mut trace = EnergyTrace::default();
    trace.records.push(energy(&fs, &qs, 0)?);
    let initial = trace.records[0].total;
    let mut iterations = 0;

    for t in 0..cfg.max_iters {
        if t > 0 && t % cfg.q_refresh_period == 0 {
            for c in 0..channels {
                let z = pick_guidance(qcfg.guidance, guidance, &inputs[c], &fs[c]);
                qs[c] = linearize(&fs[c], qcfg, z, &mut builds)?;
            }
        }
        for c in 0..channels {
            let f = &fs[c];
            let mut grad = data.gradient(c, f);
            if cfg.lambda > 0.0 {
                let reg = match prior {
                    Prior::Aquasi => aquasi_gradient(f, &qs[c], cfg.epsilon)?,
                    Prior::Red => red_gradient(f, &qs[c])?,
                };
                grad.axpy(cfg.lambda, &reg);
            }
            if cfg.mu > 0.0 {
                grad.axpy(cfg.mu, &tv_gradient(f, cfg.epsilon));
            }
            fs[c].axpy(-cfg.step_size, &grad);
        }
        iterations = t + 1;
        let rec = energy(&fs, &qs, iterations)?;
        check_divergence(iterations, rec.total, initial)?;
        trace.records.push(rec);
        if converged(&trace, cfg.energy_tol) {
            break;
        }
    }

    Ok(Solution {
        image: MultiChannelImage::new(fs)?,
        trace,
        iterations,
        selection_builds: builds,
        primal_residual: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantile::{Guidance, QuantileConfig};

    fn lcg_image(w: usize, h: usize, seed: u64) -> Image {
        let mut s = seed;
        Image::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn unregularized_identity_returns_observation() {
        let g = lcg_image(12, 10, 1);
        let cfg = SolverConfig {
            lambda: 0.0,
            mu: 0.0,
            step_size: 0.5,
            max_iters: 200,
            ..SolverConfig::gd_default()
        };
        let sol = solve_gd(&DataTerm::identity(g.clone().into()), &cfg, None).unwrap();
        let mut d = sol.image.channel(0).clone();
        d.axpy(-1.0, &g);
        assert!(d.norm_inf() < 1e-6);
    }

    #[test]
    fn fixed_point_observation_keeps_energy_flat() {
        let g = Image::from_fn(16, 16, |x, _| [0.2, 0.7, 0.4, 0.9][x / 4]);
        assert_eq!(crate::quantile::apply_filter(&g, &QuantileConfig::median(1), None).unwrap(), g);
        let cfg = SolverConfig {
            lambda: 1.0,
            mu: 0.0,
            max_iters: 30,
            energy_tol: 0.0,
            quantile: QuantileConfig::median(1),
            ..SolverConfig::gd_default()
        };
        let sol = solve_gd(&DataTerm::identity(g.into()), &cfg, None).unwrap();
        let recs = &sol.trace.records;
        for w in recs[5..].windows(2) {
            assert!(w[1].total <= w[0].total + 1e-9);
        }
    }

    #[test]
    fn refresh_period_controls_builds() {
        let g = lcg_image(8, 8, 2);
        for period in [1, 2, 3] {
            let cfg = SolverConfig {
                lambda: 0.5,
                max_iters: 12,
                energy_tol: 0.0,
                q_refresh_period: period,
                ..SolverConfig::gd_default()
            };
            let sol = solve_gd(&DataTerm::identity(g.clone().into()), &cfg, None).unwrap();
            assert_eq!(sol.selection_builds, 12usize.div_ceil(period));
        }
    }

    #[test]
    fn static_mode_requires_guidance() {
        let g = lcg_image(8, 8, 3);
        let cfg = SolverConfig {
            quantile: QuantileConfig { guidance: Guidance::Static, ..QuantileConfig::default() },
            ..SolverConfig::gd_default()
        };
        assert!(solve_gd(&DataTerm::identity(g.clone().into()), &cfg, None).is_err());
        let z = Image::zeros(4, 4);
        assert!(solve_gd(&DataTerm::identity(g.into()), &cfg, Some(&z)).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let g = lcg_image(8, 8, 4);
        let cfg = SolverConfig {
            lambda: 0.0,
            mu: 0.0,
            step_size: 5.0,
            max_iters: 100,
            ..SolverConfig::gd_default()
        };
        let doubling = crate::degradation::ConvOperator::new(1, 1, vec![2.0]).unwrap();
        let err = solve_gd(&DataTerm::linear(g.into(), doubling), &cfg, None).unwrap_err();
        assert!(matches!(err, crate::Error::Divergence { .. }));
    }
}
