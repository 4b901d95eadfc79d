//! Optimizers for `L(f, g) + lambda ||f - Q f||_1 (+ mu TV(f))`.
//!
//! [`solve_gd`] is plain gradient descent with the epsilon-smoothed sign,
//! [`solve_admm`] splits the L1 term (and optionally TV) with shrinkage and
//! Bregman updates, and [`solve_multichannel`] couples all channels through
//! one selection operator built from their weighted average. In every
//! solver the selection operator is frozen between refreshes, which happen
//! every `q_refresh_period` outer iterations.

mod admm;
mod cg;
mod gd;

use std::fmt::Write as _;

pub use admm::{solve_admm, solve_multichannel};
pub use cg::{cg_solve, CgOutcome};
pub use gd::{solve_gd, solve_red};

use crate::degradation::ConvOperator;
use crate::error::{Error, Result};
use crate::image::{Image, MultiChannelImage};
use crate::quantile::{build_selection, Guidance, QuantileConfig, SelectionOperator};
use crate::regularizers::RegWeights;

#[derive(Debug, Clone, PartialEq)]
pub enum DataKind {
    /// `||f - g||^2`
    Identity,
    /// `||c . (f - g)||^2` with a confidence map `c` in `[0, 1]`.
    Masked(Image),
    /// `||g - W f||^2`
    LinearOp(ConvOperator),
}

/// Quadratic data fidelity term over all channels of `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTerm {
    kind: DataKind,
    g: MultiChannelImage,
}

impl DataTerm {
    pub fn identity(g: MultiChannelImage) -> Self {
        Self {
            kind: DataKind::Identity,
            g,
        }
    }

    pub fn masked(g: MultiChannelImage, confidence: Image) -> Result<Self> {
        if confidence.dims() != g.dims() {
            return Err(Error::DimensionMismatch {
                expected: g.dims(),
                actual: confidence.dims(),
            });
        }
        if confidence.data().iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::param("confidence", "values must lie in [0, 1]"));
        }
        Ok(Self {
            kind: DataKind::Masked(confidence),
            g,
        })
    }

    pub fn linear(g: MultiChannelImage, op: ConvOperator) -> Self {
        Self {
            kind: DataKind::LinearOp(op),
            g,
        }
    }

    pub fn kind(&self) -> &DataKind {
        &self.kind
    }

    pub fn observation(&self) -> &MultiChannelImage {
        &self.g
    }

    pub fn num_channels(&self) -> usize {
        self.g.num_channels()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.g.dims()
    }

    pub fn value(&self, channel: usize, f: &Image) -> f64 {
        let g = self.g.channel(channel);
        let sq = |d: f64| d * d;
        match &self.kind {
            DataKind::Identity => f.data().iter().zip(g.data()).map(|(a, b)| sq(a - b)).sum(),
            DataKind::Masked(c) => f
                .data()
                .iter()
                .zip(g.data())
                .zip(c.data())
                .map(|((a, b), w)| sq(w * (a - b)))
                .sum(),
            DataKind::LinearOp(w) => w.apply(f).data().iter().zip(g.data()).map(|(a, b)| sq(a - b)).sum(),
        }
    }

    pub fn gradient(&self, channel: usize, f: &Image) -> Image {
        let mut grad = self.apply_normal(f);
        grad.axpy(-1.0, &self.rhs(channel));
        grad.scale(2.0);
        grad
    }

    /// `A^T A f` for the data operator `A` (identity, diag(c) or W).
    pub fn apply_normal(&self, f: &Image) -> Image {
        match &self.kind {
            DataKind::Identity => f.clone(),
            DataKind::Masked(c) => f.zip_map(c, |v, w| w * w * v).expect("dims checked at construction"),
            DataKind::LinearOp(w) => w.apply_normal(f),
        }
    }

    /// `A^T g_c`
    pub fn rhs(&self, channel: usize) -> Image {
        let g = self.g.channel(channel);
        match &self.kind {
            DataKind::Identity => g.clone(),
            DataKind::Masked(c) => g.zip_map(c, |v, w| w * w * v).expect("dims checked at construction"),
            DataKind::LinearOp(w) => w.apply_transpose(g),
        }
    }
}

/// Residual-balancing rule for the ADMM penalty: scale `alpha` by `factor`
/// whenever one residual exceeds `ratio` times the other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyUpdate {
    pub factor: f64,
    pub ratio: f64,
}

impl Default for PenaltyUpdate {
    fn default() -> Self {
        Self {
            factor: 2.0,
            ratio: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// AQuaSI weight.
    pub lambda: f64,
    /// TV weight.
    pub mu: f64,
    /// Sign smoothing for gradient-based solvers.
    pub epsilon: f64,
    /// Initial ADMM penalty for the AQuaSI split.
    pub alpha: f64,
    /// ADMM penalty for the TV split.
    pub beta: f64,
    /// Gradient-descent step size.
    pub step_size: f64,
    pub max_iters: usize,
    pub q_refresh_period: usize,
    pub cg_iters: usize,
    pub cg_tol: f64,
    /// `None` keeps `alpha` fixed.
    pub penalty_update: Option<PenaltyUpdate>,
    /// Relative energy change over five iterations that ends the run; 0 disables.
    pub energy_tol: f64,
    pub quantile: QuantileConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 13.0,
            mu: 0.05,
            epsilon: 1e-4,
            alpha: 1100.0,
            beta: 7.0,
            step_size: 0.05,
            max_iters: 200,
            q_refresh_period: 1,
            cg_iters: 20,
            cg_tol: 1e-6,
            penalty_update: Some(PenaltyUpdate::default()),
            energy_tol: 1e-6,
            quantile: QuantileConfig::default(),
        }
    }
}

impl SolverConfig {
    /// Defaults for gradient descent: 500 iterations.
    pub fn gd_default() -> Self {
        Self {
            max_iters: 500,
            ..Self::default()
        }
    }

    pub fn reg_weights(&self) -> RegWeights {
        RegWeights {
            lambda: self.lambda,
            mu: self.mu,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.reg_weights().validate()?;
        self.quantile.validate()?;
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("step_size", self.step_size),
            ("cg_tol", self.cg_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("{v} must be > 0")));
            }
        }
        if self.q_refresh_period == 0 {
            return Err(Error::param("q_refresh_period", "must be >= 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be >= 1"));
        }
        if self.cg_iters == 0 {
            return Err(Error::param("cg_iters", "must be >= 1"));
        }
        if !(self.energy_tol >= 0.0) {
            return Err(Error::param("energy_tol", "must be >= 0"));
        }
        if let Some(p) = self.penalty_update {
            if !(p.factor > 1.0) || !(p.ratio > 1.0) {
                return Err(Error::param("penalty_update", "factor and ratio must exceed 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub iter: usize,
    pub time_s: f64,
    pub data: f64,
    /// Weighted prior term (`lambda * ...`). Holds the RED term for RED runs.
    pub aquasi: f64,
    /// Weighted TV term (`mu * TV`).
    pub tv: f64,
    pub total: f64,
}

/// Per-iteration energy log; record 0 is the initial estimate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyTrace {
    pub records: Vec<EnergyRecord>,
}

impl EnergyTrace {
    pub fn initial(&self) -> Option<&EnergyRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&EnergyRecord> {
        self.records.last()
    }

    /// CSV with header `iter,time_s,data,aquasi,tv,total`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,time_s,data,aquasi,tv,total\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{:.6},{},{},{},{}", r.iter, r.time_s, r.data, r.aquasi, r.tv, r.total);
        }
        s
    }
}

/// Result of a solver run.
#[derive(Debug, Clone)]
pub struct Solution {
    pub image: MultiChannelImage,
    pub trace: EnergyTrace,
    /// Outer iterations performed.
    pub iterations: usize,
    /// Number of selection operators constructed.
    pub selection_builds: usize,
    /// ADMM only: `||M (I - Q) f - u||_2` at termination; 0 for gradient descent.
    pub primal_residual: f64,
}

/// Relative-energy stopping rule over a five-iteration window.
pub(crate) fn converged(trace: &EnergyTrace, tol: f64) -> bool {
    const WINDOW: usize = 5;
    if tol <= 0.0 || trace.records.len() <= WINDOW {
        return false;
    }
    let n = trace.records.len();
    let now = trace.records[n - 1].total;
    let before = trace.records[n - 1 - WINDOW].total;
    (now - before).abs() <= tol * before.abs()
}

pub(crate) fn check_divergence(iter: usize, total: f64, initial: f64) -> Result<()> {
    let limit = 1e6 * initial.abs().max(1e-12);
    if !total.is_finite() || total > limit {
        return Err(Error::Divergence {
            iter,
            energy: total,
            limit,
        });
    }
    Ok(())
}

/// Selects the guidance image for the configured mode.
pub(crate) fn pick_guidance<'a>(
    mode: Guidance,
    static_guide: Option<&'a Image>,
    input: &'a Image,
    iterate: &'a Image,
) -> Option<&'a Image> {
    match mode {
        Guidance::Uniform => None,
        Guidance::Static => static_guide,
        Guidance::DynamicInput => Some(input),
        Guidance::DynamicIterate => Some(iterate),
    }
}

pub(crate) fn check_static_guidance(cfg: &SolverConfig, dims: (usize, usize), guide: Option<&Image>) -> Result<()> {
    match (cfg.quantile.guidance, guide) {
        (Guidance::Static, None) => Err(Error::param("guidance", "static mode needs a guidance image")),
        (_, Some(z)) if z.dims() != dims => Err(Error::DimensionMismatch {
            expected: dims,
            actual: z.dims(),
        }),
        _ => Ok(()),
    }
}

/// Builds a selection operator and counts the construction.
pub(crate) fn linearize(
    img: &Image,
    cfg: &QuantileConfig,
    guidance: Option<&Image>,
    builds: &mut usize,
) -> Result<SelectionOperator> {
    *builds += 1;
    build_selection(img, cfg, guidance)
}
