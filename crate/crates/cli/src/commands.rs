use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use aquasi::degradation::{add_noise, degrade_depth, upsample_nearest, ConvOperator};
use aquasi::metrics::{bme, psnr, residual_histogram, rmse};
use aquasi::{
    channel_average, io, solve_admm, solve_multichannel, solve_red, DataTerm, Image, MultiChannelImage, Solution,
};

use crate::config::RunConfig;
use crate::CliError;

fn required<'a>(path: &'a Option<PathBuf>, flag: &'static str) -> Result<&'a Path, CliError> {
    path.as_deref().ok_or(CliError::Missing(flag))
}

fn read(path: &Path) -> Result<MultiChannelImage, CliError> {
    io::read_image(path).map_err(|e| match e {
        aquasi::Error::Io(source) => CliError::io(path, source),
        other => other.into(),
    })
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Values are clamped to `[0, 1]` here and nowhere earlier.
fn write(path: &Path, img: &MultiChannelImage) -> Result<(), CliError> {
    io::write_image(path, &img.clamped(0.0, 1.0)).map_err(|e| match e {
        aquasi::Error::Io(source) => CliError::io(path, source),
        other => other.into(),
    })
}

/// Single-channel guidance; colour guides are reduced by `channel_average`.
fn load_guidance(cfg: &RunConfig) -> Result<Option<Image>, CliError> {
    let Some(path) = &cfg.guidance else {
        return Ok(None);
    };
    let mc = read(path)?;
    let guide = match mc.num_channels() {
        1 => mc.into_channels().remove(0),
        c => channel_average(&mc, &cfg.weights(c))?,
    };
    Ok(Some(guide))
}

fn to_gray(mc: MultiChannelImage, cfg: &RunConfig) -> Result<Image, CliError> {
    Ok(match mc.num_channels() {
        1 => mc.into_channels().remove(0),
        c => channel_average(&mc, &cfg.weights(c))?,
    })
}

fn restore(cfg: &RunConfig, data: &DataTerm, guide: Option<&Image>) -> Result<Solution, CliError> {
    let solver = cfg.solver();
    Ok(if cfg.multichannel {
        solve_multichannel(data, &solver, &cfg.weights(data.num_channels()), guide)?
    } else {
        solve_admm(data, &solver, guide)?
    })
}

fn finish(cfg: &RunConfig, sol: &Solution) -> Result<String, CliError> {
    let out = required(&cfg.output, "output")?;
    write(out, &sol.image)?;
    if let Some(trace) = &cfg.trace {
        write_file(trace, sol.trace.to_csv())?;
    }
    let energy = sol.trace.last().map_or(f64::NAN, |r| r.total);
    Ok(format!(
        "{}: {} iterations, {} selection builds, final energy {energy:.6e}, wrote {}\n",
        cfg.task.name(),
        sol.iterations,
        sol.selection_builds,
        out.display()
    ))
}

pub fn denoise(cfg: &RunConfig) -> Result<String, CliError> {
    let g = read(required(&cfg.input, "input")?)?;
    let guide = load_guidance(cfg)?;
    let sol = restore(cfg, &DataTerm::identity(g), guide.as_ref())?;
    finish(cfg, &sol)
}

pub fn deblur(cfg: &RunConfig) -> Result<String, CliError> {
    let g = read(required(&cfg.input, "input")?)?;
    let kernel_path = required(&cfg.kernel, "kernel")?;
    let text = std::fs::read_to_string(kernel_path).map_err(|e| CliError::io(kernel_path, e))?;
    let kernel = ConvOperator::parse(&text)?;
    let guide = load_guidance(cfg)?;
    let sol = restore(cfg, &DataTerm::linear(g, kernel), guide.as_ref())?;
    finish(cfg, &sol)
}

/// Accepts either a low-resolution depth map (nearest-neighbour upsampled
/// by `factor` onto the guide grid) or one already on the guide grid.
pub fn upsample(cfg: &RunConfig) -> Result<String, CliError> {
    let depth = read(required(&cfg.input, "input")?)?;
    let guide = load_guidance(cfg)?.ok_or(CliError::Missing("guidance"))?;
    let (w, h) = guide.dims();
    let up = if depth.dims() == (w, h) {
        depth
    } else {
        let expected = (w.div_ceil(cfg.factor.max(1)), h.div_ceil(cfg.factor.max(1)));
        if depth.dims() != expected {
            return Err(aquasi::Error::DimensionMismatch {
                expected,
                actual: depth.dims(),
            }
            .into());
        }
        depth.map_channels(|c| upsample_nearest(c, cfg.factor, w, h))
    };
    let data = DataTerm::masked(up, Image::filled(w, h, 1.0))?;
    let sol = restore(cfg, &data, Some(&guide))?;
    finish(cfg, &sol)
}

/// Optional blur by `kernel`, then either the blur/decimate/noise depth
/// pipeline (`decimate = true`, writes the low-resolution map) or plain
/// noise. Channel `c` draws noise from seed `seed + c`.
pub fn degrade(cfg: &RunConfig) -> Result<String, CliError> {
    let input = read(required(&cfg.input, "input")?)?;
    let out = required(&cfg.output, "output")?;
    let kernel = match &cfg.kernel {
        Some(p) => Some(ConvOperator::parse(
            &std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        )?),
        None => None,
    };
    let noise = cfg.noise_spec();
    let mut channels = Vec::with_capacity(input.num_channels());
    for (c, ch) in input.channels().iter().enumerate() {
        let spec = noise.map(|n| n.with_seed(cfg.seed.wrapping_add(c as u64)));
        let blurred = match &kernel {
            Some(k) => k.apply(ch),
            None => ch.clone(),
        };
        let degraded = if cfg.decimate {
            degrade_depth(&blurred, &cfg.decimation(), spec.as_ref())?.0
        } else if let Some(spec) = spec {
            add_noise(&blurred, &spec)?
        } else {
            blurred
        };
        channels.push(degraded);
    }
    let result = MultiChannelImage::new(channels)?;
    write(out, &result)?;
    let (w, h) = result.dims();
    Ok(format!("degrade: wrote {w}x{h} image to {}\n", out.display()))
}

pub fn residual_hist(cfg: &RunConfig) -> Result<String, CliError> {
    let img = to_gray(read(required(&cfg.input, "input")?)?, cfg)?;
    let guide = load_guidance(cfg)?;
    let hist = residual_histogram(&img, &cfg.quantile(), guide.as_ref(), cfg.bins)?;
    let csv = hist.to_csv();
    match &cfg.output {
        Some(out) => {
            write_file(out, &csv)?;
            Ok(format!("residual-hist: std {:.6}, wrote {}\n", hist.std(), out.display()))
        }
        None => Ok(csv),
    }
}

/// All channels stacked vertically, so metrics pool every sample.
fn stacked(mc: &MultiChannelImage) -> Result<Image, CliError> {
    let (w, h) = mc.dims();
    let data = mc.channels().iter().flat_map(|c| c.data().iter().copied()).collect();
    Ok(Image::from_vec(w, h * mc.num_channels(), data)?)
}

pub fn compare(cfg: &RunConfig) -> Result<String, CliError> {
    let g = read(required(&cfg.input, "input")?)?;
    let reference = read(required(&cfg.reference, "reference")?)?;
    let out_dir = required(&cfg.output, "output")?;
    if g.dims() != reference.dims() || g.num_channels() != reference.num_channels() {
        return Err(aquasi::Error::DimensionMismatch {
            expected: reference.dims(),
            actual: g.dims(),
        }
        .into());
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let guide = load_guidance(cfg)?;
    let data = DataTerm::identity(g.clone());

    let aquasi = restore(cfg, &data, guide.as_ref())?;
    if let Some(trace) = &cfg.trace {
        write_file(trace, aquasi.trace.to_csv())?;
    }
    let tv_cfg = aquasi::SolverConfig {
        lambda: 0.0,
        ..cfg.solver()
    };
    let tv = solve_admm(&data, &tv_cfg, guide.as_ref())?;
    let red_cfg = aquasi::SolverConfig {
        lambda: cfg.red_lambda,
        mu: 0.0,
        step_size: cfg.red_step_size,
        max_iters: cfg.red_max_iters,
        ..cfg.solver()
    };
    let red = solve_red(&data, &red_cfg, guide.as_ref())?;

    let truth = stacked(&reference)?;
    let mut csv = String::from("method,psnr,rmse,bme\n");
    let rows = [
        ("input", g),
        ("aquasi", aquasi.image),
        ("tv", tv.image),
        ("red", red.image),
    ];
    for (name, img) in &rows {
        if *name != "input" {
            write(&out_dir.join(format!("{name}.f32")), img)?;
        }
        // score what is written to disk
        let s = stacked(&img.clamped(0.0, 1.0))?;
        let _ = writeln!(
            csv,
            "{name},{},{},{}",
            psnr(&s, &truth)?,
            rmse(&s, &truth)?,
            bme(&s, &truth, cfg.bme_delta)?
        );
    }
    write_file(&out_dir.join("metrics.csv"), &csv)?;
    Ok(csv)
}
