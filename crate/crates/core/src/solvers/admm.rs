use std::time::Instant;

use super::{
    cg_solve, check_divergence, check_static_guidance, converged, linearize, pick_guidance, DataTerm,
    EnergyRecord, EnergyTrace, Solution, SolverConfig,
};
use crate::error::{Error, Result};
use crate::image::{ChannelWeights, Image, MultiChannelImage};
use crate::quantile::SelectionOperator;
use crate::regularizers::{diff_x, diff_x_transpose, diff_y, diff_y_transpose, shrink_image, tv_value};

/// ADMM on `L + lambda ||(I - Q) f||_1 (+ mu TV)`, one selection operator
/// per channel (channel-wise processing).
///
/// The AQuaSI term is split as `u = (I - Q) f` with Bregman variable `b`;
/// when `mu > 0` each TV direction gets its own split `d = D f` with penalty
/// `beta`. The f-step solves the normal equations by warm-started CG.
pub fn solve_admm(data: &DataTerm, cfg: &SolverConfig, guidance: Option<&Image>) -> Result<Solution> {
    let groups = (0..data.num_channels()).map(|c| (vec![c], vec![1.0])).collect();
    run(data, cfg, guidance, groups)
}

/// ADMM on `L + lambda ||M (f - Q f)||_1 (+ mu TV)` for stacked channels,
/// where a single `Q` is built per refresh from the weighted channel average
/// and applied to every channel.
pub fn solve_multichannel(
    data: &DataTerm,
    cfg: &SolverConfig,
    m: &ChannelWeights,
    guidance: Option<&Image>,
) -> Result<Solution> {
    let c = data.num_channels();
    if c < 2 {
        return Err(Error::param("channels", "multi-channel coupling needs at least two channels"));
    }
    if m.len() != c {
        return Err(Error::LengthMismatch {
            expected: c,
            actual: m.len(),
        });
    }
    run(data, cfg, guidance, vec![((0..c).collect(), m.as_slice().to_vec())])
}

/// Normalized weighted average `sum m_c x_c / sum m_c`.
fn weighted_mean(images: &[&Image], weights: &[f64]) -> Image {
    let (w, h) = images[0].dims();
    let mut acc = Image::zeros(w, h);
    for (img, &m) in images.iter().zip(weights) {
        acc.axpy(m, img);
    }
    let total: f64 = weights.iter().sum();
    acc.map(|v| v / total)
}

struct TvSplit {
    dx: Image,
    dy: Image,
    bx: Image,
    by: Image,
}

struct ChannelState {
    f: Image,
    u: Image,
    b: Image,
    tv: Option<TvSplit>,
}

/// Channels sharing one selection operator and one penalty.
struct Group {
    channels: Vec<usize>,
    weights: Vec<f64>,
    /// Average observation of the group, guidance for `DynamicInput`.
    input_mean: Image,
    q: SelectionOperator,
    alpha: f64,
}

impl Group {
    fn iterate_mean(&self, states: &[ChannelState]) -> Image {
        let fs: Vec<&Image> = self.channels.iter().map(|&c| &states[c].f).collect();
        weighted_mean(&fs, &self.weights)
    }

    fn relinearize(
        &mut self,
        states: &[ChannelState],
        cfg: &SolverConfig,
        guidance: Option<&Image>,
        builds: &mut usize,
    ) -> Result<()> {
        let mean = self.iterate_mean(states);
        let z = pick_guidance(cfg.quantile.guidance, guidance, &self.input_mean, &mean);
        self.q = linearize(&mean, &cfg.quantile, z, builds)?;
        Ok(())
    }
}

/// `m (I - Q) f`
fn split_residual(q: &SelectionOperator, m: f64, f: &Image) -> Result<Image> {
    let mut r = q.residual(f)?;
    if m != 1.0 {
        r.scale(m);
    }
    Ok(r)
}

fn run(
    data: &DataTerm,
    cfg: &SolverConfig,
    guidance: Option<&Image>,
    layout: Vec<(Vec<usize>, Vec<f64>)>,
) -> Result<Solution> {
    cfg.validate()?;
    check_static_guidance(cfg, data.dims(), guidance)?;
    let start = Instant::now();
    let inputs = data.observation().channels();
    let (w, h) = data.dims();
    let with_tv = cfg.mu > 0.0;
    let mut builds = 0;

    let mut states: Vec<ChannelState> = inputs
        .iter()
        .map(|g| ChannelState {
            f: g.clone(),
            u: Image::zeros(w, h),
            b: Image::zeros(w, h),
            tv: with_tv.then(|| TvSplit {
                dx: diff_x(g),
                dy: diff_y(g),
                bx: Image::zeros(w, h),
                by: Image::zeros(w, h),
            }),
        })
        .collect();

    let mut groups = Vec::with_capacity(layout.len());
    for (channels, weights) in layout {
        let obs: Vec<&Image> = channels.iter().map(|&c| &inputs[c]).collect();
        let input_mean = weighted_mean(&obs, &weights);
        let mut group = Group {
            channels,
            weights,
            input_mean,
            q: SelectionOperator::identity(w, h),
            alpha: cfg.alpha,
        };
        group.relinearize(&states, cfg, guidance, &mut builds)?;
        for (&c, &m) in group.channels.iter().zip(&group.weights) {
            states[c].u = split_residual(&group.q, m, &states[c].f)?;
        }
        groups.push(group);
    }

    let energy = |states: &[ChannelState], groups: &[Group], iter: usize| -> Result<EnergyRecord> {
        let mut rec = EnergyRecord {
            iter,
            time_s: start.elapsed().as_secs_f64(),
            data: 0.0,
            aquasi: 0.0,
            tv: 0.0,
            total: 0.0,
        };
        for group in groups {
            for (&c, &m) in group.channels.iter().zip(&group.weights) {
                let f = &states[c].f;
                rec.data += data.value(c, f);
                rec.aquasi += cfg.lambda * split_residual(&group.q, m, f)?.norm_l1();
                if with_tv {
                    rec.tv += cfg.mu * tv_value(f);
                }
            }
        }
        rec.total = rec.data + rec.aquasi + rec.tv;
        Ok(rec)
    };

    let mut trace = EnergyTrace::default();
    trace.records.push(energy(&states, &groups, 0)?);
    let initial = trace.records[0].total;
    let mut iterations = 0;
    let mut primal_sq = 0.0;

    for t in 0..cfg.max_iters {
        if t > 0 && t % cfg.q_refresh_period == 0 {
            for group in &mut groups {
                group.relinearize(&states, cfg, guidance, &mut builds)?;
            }
        }
        primal_sq = 0.0;
        for group in &mut groups {
            let (group_primal, group_dual) = step_group(data, cfg, group, &mut states)?;
            primal_sq += group_primal * group_primal;
            if let Some(rule) = cfg.penalty_update {
                // scaled duals b = y / alpha are rescaled with the penalty
                if group_primal > rule.ratio * group_dual {
                    group.alpha *= rule.factor;
                    for &c in &group.channels {
                        states[c].b.scale(1.0 / rule.factor);
                    }
                } else if group_dual > rule.ratio * group_primal {
                    group.alpha /= rule.factor;
                    for &c in &group.channels {
                        states[c].b.scale(rule.factor);
                    }
                }
            }
        }
        iterations = t + 1;
        let rec = energy(&states, &groups, iterations)?;
        check_divergence(iterations, rec.total, initial)?;
        trace.records.push(rec);
        if converged(&trace, cfg.energy_tol) {
            break;
        }
    }

    Ok(Solution {
        image: MultiChannelImage::new(states.into_iter().map(|s| s.f).collect())?,
        trace,
        iterations,
        selection_builds: builds,
        primal_residual: primal_sq.sqrt(),
    })
}

/// One f/u/b sweep over the channels of `group`. Returns the group's primal
/// and dual residual norms.
fn step_group(
    data: &DataTerm,
    cfg: &SolverConfig,
    group: &Group,
    states: &mut [ChannelState],
) -> Result<(f64, f64)> {
    let q = &group.q;
    let alpha = group.alpha;
    let beta = cfg.beta;
    let gamma_u = cfg.lambda / alpha;
    let gamma_d = cfg.mu / beta;
    let mut primal_sq = 0.0;
    let mut dual_sq = 0.0;

    for (&c, &m) in group.channels.iter().zip(&group.weights) {
        let st = &mut states[c];

        // f-step: (2 A^T A + alpha m^2 (I-Q)^T (I-Q) + beta D^T D) f = rhs
        let mut rhs = data.rhs(c);
        rhs.scale(2.0);
        let mut target = st.u.clone();
        target.axpy(-1.0, &st.b);
        rhs.axpy(alpha * m, &q.residual_transpose(&target)?);
        if let Some(tv) = &st.tv {
            let mut tx = tv.dx.clone();
            tx.axpy(-1.0, &tv.bx);
            let mut ty = tv.dy.clone();
            ty.axpy(-1.0, &tv.by);
            rhs.axpy(beta, &diff_x_transpose(&tx));
            rhs.axpy(beta, &diff_y_transpose(&ty));
        }
        let with_tv = st.tv.is_some();
        let apply = |x: &Image| -> Image {
            let mut y = data.apply_normal(x);
            y.scale(2.0);
            let r = q.residual(x).expect("selection dims match");
            y.axpy(alpha * m * m, &q.residual_transpose(&r).expect("selection dims match"));
            if with_tv {
                y.axpy(beta, &diff_x_transpose(&diff_x(x)));
                y.axpy(beta, &diff_y_transpose(&diff_y(x)));
            }
            y
        };
        st.f = cg_solve(apply, &rhs, &st.f, cfg.cg_iters, cfg.cg_tol)?.x;

        // u-step and Bregman update
        let residual = split_residual(q, m, &st.f)?;
        let mut shifted = residual.clone();
        shifted.axpy(1.0, &st.b);
        let u_new = shrink_image(&shifted, gamma_u);
        let mut gap = residual;
        gap.axpy(-1.0, &u_new);
        st.b.axpy(1.0, &gap);
        primal_sq += gap.dot(&gap);

        let mut du = u_new.clone();
        du.axpy(-1.0, &st.u);
        let mut dual = q.residual_transpose(&du)?;
        dual.scale(alpha * m);
        dual_sq += dual.dot(&dual);
        st.u = u_new;

        if let Some(tv) = &mut st.tv {
            for (d, b, grad) in [(&mut tv.dx, &mut tv.bx, diff_x(&st.f)), (&mut tv.dy, &mut tv.by, diff_y(&st.f))] {
                let mut v = grad.clone();
                v.axpy(1.0, b);
                *d = shrink_image(&v, gamma_d);
                b.axpy(1.0, &grad);
                b.axpy(-1.0, d);
            }
        }
    }
    Ok((primal_sq.sqrt(), dual_sq.sqrt()))
}
