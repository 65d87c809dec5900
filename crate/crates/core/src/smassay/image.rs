//! Fluorescence frames: synthesis and spot detection.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

#[allow(unused_imports)] // inherent when std is linked
use crate::math::Float;
use crate::{Error, Result};

/// 60× objective on 13 µm camera pixels.
pub const DEFAULT_PIXEL_PITCH_UM: f64 = 0.22;
/// Diffraction-limited spot at 520 nm, NA 1.49, on the default pitch.
pub const DEFAULT_PSF_SIGMA_PX: f64 = 1.3;

/// Row-major intensity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    /// µm per pixel.
    pub pixel_pitch: f64,
    /// Seconds.
    pub exposure: f64,
}

impl ImageFrame {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<f64>,
        pixel_pitch: f64,
        exposure: f64,
    ) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::invalid("pixel count does not match frame shape"));
        }
        if !(pixel_pitch > 0.0) || !pixel_pitch.is_finite() {
            return Err(Error::invalid("pixel pitch must be positive"));
        }
        if pixels.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid(
                "pixel values must be non-negative and finite",
            ));
        }
        Ok(ImageFrame {
            width,
            height,
            pixels,
            pixel_pitch,
            exposure,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Frame area, µm².
    pub fn area(&self) -> f64 {
        (self.width * self.height) as f64 * self.pixel_pitch * self.pixel_pitch
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    /// Emitters per µm².
    pub density: f64,
    /// Field of view, µm² (square).
    pub fov_area: f64,
    pub pixel_pitch: f64,
    pub psf_sigma_px: f64,
    /// Expected photons per emitter per frame.
    pub photons_per_spot: f64,
    /// Expected background photons per pixel.
    pub bg_per_px: f64,
    pub exposure: f64,
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        let ok = self.density >= 0.0
            && self.fov_area > 0.0
            && self.pixel_pitch > 0.0
            && self.psf_sigma_px > 0.0
            && self.photons_per_spot >= 0.0
            && self.bg_per_px >= 0.0
            && self.exposure > 0.0;
        let finite = [
            self.density,
            self.fov_area,
            self.pixel_pitch,
            self.psf_sigma_px,
            self.photons_per_spot,
            self.bg_per_px,
        ]
        .iter()
        .all(|v| v.is_finite());
        if ok && finite {
            Ok(())
        } else {
            Err(Error::invalid(
                "synthesis parameters must be finite, positive sizes and non-negative rates",
            ))
        }
    }

    /// Fraction of a centred spot's photons landing in its brightest pixel.
    pub fn peak_pixel_fraction(&self) -> f64 {
        let e = libm::erf(0.5 / (SQRT_2 * self.psf_sigma_px));
        e * e
    }

    /// Expected peak-pixel signal over background shot noise.
    pub fn spot_snr(&self) -> f64 {
        self.photons_per_spot * self.peak_pixel_fraction() / self.bg_per_px.max(1e-300).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImage {
    pub frame: ImageFrame,
    /// True emitter positions `[x, y]`, µm from the frame corner.
    pub emitters: Vec<[f64; 2]>,
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .map(|d| d.sample(rng) as u64)
        .unwrap_or(0)
}

/// Pixel-integrated Gaussian weights of a spot centred at `c` (pixel units)
/// over pixels `first..first + w.len()`.
fn pixel_weights(c: f64, sigma: f64, first: isize, w: &mut [f64]) {
    let s = SQRT_2 * sigma;
    let mut prev = libm::erf((first as f64 - c) / s);
    for (k, out) in w.iter_mut().enumerate() {
        let next = libm::erf((first as f64 + k as f64 + 1.0 - c) / s);
        *out = 0.5 * (next - prev);
        prev = next;
    }
}

/// Poisson emitters, uniform positions, pixel-integrated Gaussian PSF and
/// per-pixel Poisson noise.
pub fn synth_image(params: &SynthParams, seed: u64) -> Result<SyntheticImage> {
    params.validate()?;
    let side = params.fov_area.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = poisson(&mut rng, params.density * params.fov_area);
    let emitters: Vec<[f64; 2]> = (0..count)
        .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
        .collect();
    let frame = render_image(&emitters, params, seed)?;
    Ok(SyntheticImage { frame, emitters })
}

/// Frame for emitters at given positions (µm); `density` is ignored.
pub fn render_image(emitters: &[[f64; 2]], params: &SynthParams, seed: u64) -> Result<ImageFrame> {
    params.validate()?;
    let n_px = (params.fov_area.sqrt() / params.pixel_pitch).ceil() as usize;
    let mut mean = vec![params.bg_per_px; n_px * n_px];
    let reach = (5.0 * params.psf_sigma_px).ceil() as isize + 1;
    let mut wx = vec![0.0; (2 * reach + 1) as usize];
    let mut wy = wx.clone();
    for e in emitters {
        let (cx, cy) = (e[0] / params.pixel_pitch, e[1] / params.pixel_pitch);
        let (x0, y0) = (cx.floor() as isize - reach, cy.floor() as isize - reach);
        pixel_weights(cx, params.psf_sigma_px, x0, &mut wx);
        pixel_weights(cy, params.psf_sigma_px, y0, &mut wy);
        for (j, &gy) in wy.iter().enumerate() {
            let y = y0 + j as isize;
            if y < 0 || y >= n_px as isize {
                continue;
            }
            for (i, &gx) in wx.iter().enumerate() {
                let x = x0 + i as isize;
                if x < 0 || x >= n_px as isize {
                    continue;
                }
                mean[y as usize * n_px + x as usize] += params.photons_per_spot * gx * gy;
            }
        }
    }
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(1);
    let pixels = mean
        .iter()
        .map(|&m| poisson(&mut noise, m) as f64)
        .collect();
    ImageFrame::new(n_px, n_px, pixels, params.pixel_pitch, params.exposure)
}

const SIGMA_LOCATE: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    /// Inner (smoothing) Gaussian of the bandpass, px.
    pub sigma_inner: f64,
    /// Outer (background) Gaussian of the bandpass, px.
    pub sigma_outer: f64,
    /// Detection threshold in robust background σ of the filtered frame.
    pub threshold: f64,
    /// Minimum distance between accepted maxima, px.
    pub min_separation: f64,
    /// PSF width used for the aggregate footprint, px.
    pub psf_sigma: f64,
    /// Apply the Anscombe transform first, treating pixels as photon counts.
    pub stabilize: bool,
    /// Width of the sharper bandpass used to place maxima, px; values at or
    /// above `sigma_inner` place them on the detection bandpass itself.
    pub sigma_locate: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            sigma_inner: 1.0,
            sigma_outer: 4.0 * DEFAULT_PSF_SIGMA_PX,
            threshold: 5.0,
            min_separation: 2.0,
            psf_sigma: DEFAULT_PSF_SIGMA_PX,
            stabilize: true,
            sigma_locate: SIGMA_LOCATE,
        }
    }
}

impl DetectParams {
    fn validate(&self) -> Result<()> {
        if self.sigma_inner > 0.0
            && self.sigma_outer > self.sigma_inner
            && self.threshold.is_finite()
            && self.min_separation >= 0.0
            && self.psf_sigma > 0.0
            && self.sigma_outer.is_finite()
            && self.sigma_locate > 0.0
        {
            Ok(())
        } else {
            Err(Error::invalid(
                "bandpass needs 0 < inner < outer, finite threshold, non-negative separation",
            ))
        }
    }

    /// Area above which a spot counts as an aggregate: three PSF footprints
    /// of radius 2σ, px².
    pub fn aggregate_area(&self) -> f64 {
        3.0 * PI * 4.0 * self.psf_sigma * self.psf_sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spot {
    /// Position in µm from the frame corner.
    pub x: f64,
    pub y: f64,
    /// Bandpassed peak value.
    pub peak: f64,
    /// Connected pixels at or above half the bandpassed peak.
    pub area_px: usize,
    pub aggregate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// All accepted maxima, brightest first; aggregates included and flagged.
    pub spots: Vec<Spot>,
    /// Robust σ of the bandpassed frame.
    pub background_sigma: f64,
}

impl Detection {
    /// Single-molecule spots (aggregates excluded).
    pub fn count(&self) -> usize {
        self.spots.iter().filter(|s| !s.aggregate).count()
    }

    pub fn n_aggregates(&self) -> usize {
        self.spots.iter().filter(|s| s.aggregate).count()
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * r)
        .map(|i| {
            let x = i as f64 - r as f64;
            (-0.5 * x * x / (sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian blur with mirrored edges.
fn blur(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * src[y * w + reflect(x as isize + j as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * tmp[reflect(y as isize + j as isize - r, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn median(v: &mut [f64]) -> f64 {
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Pixels 4-connected to `start` with value ≥ `level`, capped at `cap`.
fn blob_area(img: &[f64], w: usize, h: usize, start: usize, level: f64, cap: usize) -> usize {
    let mut seen = alloc::collections::BTreeSet::new();
    let mut stack = vec![start];
    seen.insert(start);
    while let Some(p) = stack.pop() {
        if seen.len() >= cap {
            break;
        }
        let (x, y) = (p % w, p / w);
        let mut push = |q: usize| {
            if img[q] >= level && seen.insert(q) {
                stack.push(q);
            }
        };
        if x > 0 {
            push(p - 1);
        }
        if x + 1 < w {
            push(p + 1);
        }
        if y > 0 {
            push(p - w);
        }
        if y + 1 < h {
            push(p + w);
        }
    }
    seen.len()
}

/// Difference-of-Gaussians bandpass, local maxima above `median + k·σ` (σ
/// from the median absolute deviation), greedy non-maximum suppression and
/// aggregate flagging.
pub fn detect_spots(frame: &ImageFrame, params: &DetectParams) -> Result<Detection> {
    params.validate()?;
    let (w, h) = (frame.width, frame.height);
    if w < 3 || h < 3 {
        return Ok(Detection {
            spots: Vec::new(),
            background_sigma: 0.0,
        });
    }
    let stabilized;
    let src = if params.stabilize {
        stabilized = frame
            .pixels
            .iter()
            .map(|&v| 2.0 * (v.max(0.0) + 0.375).sqrt())
            .collect::<Vec<_>>();
        &stabilized
    } else {
        &frame.pixels
    };
    let inner = blur(src, w, h, params.sigma_inner);
    let outer = blur(src, w, h, params.sigma_outer);
    let dog: Vec<f64> = inner.iter().zip(&outer).map(|(a, b)| a - b).collect();

    let mut scratch = dog.clone();
    let med = median(&mut scratch);
    scratch
        .iter_mut()
        .zip(&dog)
        .for_each(|(s, d)| *s = (d - med).abs());
    let sigma = 1.482_602_218_505_602 * median(&mut scratch);
    if !(sigma > 0.0) {
        // A noiseless uniform frame has nothing to detect.
        return Ok(Detection {
            spots: Vec::new(),
            background_sigma: 0.0,
        });
    }
    let level = med + params.threshold * sigma;
    let sharp = if params.sigma_locate < params.sigma_inner {
        let fine = blur(src, w, h, params.sigma_locate);
        fine.iter().zip(&outer).map(|(a, b)| a - b).collect()
    } else {
        dog.clone()
    };

    let mut candidates = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if dog[p] < level {
                continue;
            }
            let v = sharp[p];
            let mut is_max = true;
            'nb: for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let q = ny * w + nx;
                    // Ties resolve to the first pixel in raster order.
                    if q != p && (sharp[q] > v || (sharp[q] == v && q < p)) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push(p);
            }
        }
    }
    candidates.sort_by(|&a, &b| dog[b].total_cmp(&dog[a]).then(a.cmp(&b)));

    let sep2 = params.min_separation * params.min_separation;
    let cap = (4.0 * params.aggregate_area()) as usize + 1;
    let mut accepted: Vec<(f64, f64)> = Vec::new();
    let mut spots = Vec::new();
    for p in candidates {
        let (x, y) = (p % w, p / w);
        // Sub-pixel centroid of the positive bandpass in the 3×3 window.
        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                let v = (dog[ny * w + nx] - med).max(0.0);
                sx += v * (nx as f64 - x as f64);
                sy += v * (ny as f64 - y as f64);
                sw += v;
            }
        }
        let cx = x as f64 + 0.5 + sx / sw;
        let cy = y as f64 + 0.5 + sy / sw;
        if accepted
            .iter()
            .any(|&(ax, ay)| (ax - cx).powi(2) + (ay - cy).powi(2) < sep2)
        {
            continue;
        }
        accepted.push((cx, cy));
        let half = med + 0.5 * (dog[p] - med);
        let area = blob_area(&dog, w, h, p, half, cap);
        spots.push(Spot {
            x: cx * frame.pixel_pitch,
            y: cy * frame.pixel_pitch,
            peak: dog[p],
            area_px: area,
            aggregate: area as f64 > params.aggregate_area(),
        });
    }
    Ok(Detection {
        spots,
        background_sigma: sigma,
    })
}
