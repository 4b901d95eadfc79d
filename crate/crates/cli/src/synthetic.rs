//! Small synthetic scenes for smoke runs and regression tests.
//!
//! All scenes share one four-region layout: a disk, a lower-left block, a
//! top band, and the background.

use aquasi::{Image, MultiChannelImage};

/// Region label (0..4) of pixel `(x, y)` in a `w x h` scene.
pub fn region(x: usize, y: usize, w: usize, h: usize) -> usize {
    let (xf, yf) = (x as f64 / w as f64, y as f64 / h as f64);
    let d = ((xf - 0.6).powi(2) + (yf - 0.4).powi(2)).sqrt();
    if d < 0.22 {
        0
    } else if xf < 0.35 && yf > 0.5 {
        1
    } else if yf < 0.25 {
        2
    } else {
        3
    }
}

fn painted(w: usize, h: usize, levels: [f64; 4]) -> Image {
    Image::from_fn(w, h, |x, y| levels[region(x, y, w, h)])
}

/// High-contrast piecewise-constant intensity image.
pub fn scene(w: usize, h: usize) -> Image {
    painted(w, h, [0.85, 0.15, 0.6, 0.35])
}

/// Depth layers on the same layout, with moderate discontinuities.
pub fn depth(w: usize, h: usize) -> Image {
    painted(w, h, [0.55, 0.3, 0.45, 0.38])
}

/// Color image whose luminance separates every region of the layout.
pub fn rgb_guide(w: usize, h: usize) -> MultiChannelImage {
    const COLORS: [[f64; 3]; 4] = [[0.95, 0.9, 0.8], [0.1, 0.15, 0.3], [0.8, 0.6, 0.2], [0.2, 0.5, 0.6]];
    let channels = (0..3)
        .map(|c| painted(w, h, [COLORS[0][c], COLORS[1][c], COLORS[2][c], COLORS[3][c]]))
        .collect();
    MultiChannelImage::new(channels).expect("channels share dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use aquasi::{channel_average, ChannelWeights};

    #[test]
    fn every_region_is_present() {
        let mut seen = [false; 4];
        for y in 0..64 {
            for x in 0..64 {
                seen[region(x, y, 64, 64)] = true;
            }
        }
        assert_eq!(seen, [true; 4]);
    }

    #[test]
    fn guide_luminance_separates_regions() {
        let (w, h) = (64, 64);
        let lum = channel_average(&rgb_guide(w, h), &ChannelWeights::rgb()).unwrap();
        let mut level = [f64::NAN; 4];
        for y in 0..h {
            for x in 0..w {
                level[region(x, y, w, h)] = lum.get(x, y);
            }
        }
        for i in 0..4 {
            for j in i + 1..4 {
                assert!((level[i] - level[j]).abs() > 0.15, "{i} {j}");
            }
        }
    }
}
