//! Procedural lesion rendering.
//!
//! A lesion is a star-shaped region about an off-center point. Its boundary in
//! polar form is
//!
//! ```text
//! r(θ) = R₀ · (1 + 0.5·a·cos(θ − φₐ)) · (1 + b · Σₖ₌₂..₆ (wₖ/k)·sin(kθ + φₖ))
//! ```
//!
//! with `R₀ = 0.30·width`, so asymmetry stretches one side and border
//! irregularity adds low-order harmonics. Color variation scales value noise
//! inside the lesion and, above 0.5, adds two dark spots.

use std::f64::consts::TAU;

use super::image::Image;
use super::params::LesionParams;
use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const SUPPORTED_RESOLUTIONS: [usize; 2] = [16, 32];

pub const SKIN_TONE: [f64; 3] = [224.0, 198.0, 170.0];
pub const LESION_BROWN: [f64; 3] = [101.0, 67.0, 48.0];
const BACKGROUND_NOISE: f64 = 6.0;
const COLOR_NOISE: f64 = 70.0;
const SPOT_DARKENING: f64 = 0.45;

/// Smoothly interpolated lattice noise with values in `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct ValueNoise {
    cells: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    pub fn new(rng: &mut Rng, cells: usize) -> Self {
        let n = (cells + 1) * (cells + 1);
        let lattice = (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        ValueNoise { cells, lattice }
    }

    /// Sample at `(u, v)` in the unit square.
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let fx = (u * self.cells as f64).clamp(0.0, self.cells as f64);
        let fy = (v * self.cells as f64).clamp(0.0, self.cells as f64);
        let x0 = (fx.floor() as usize).min(self.cells - 1);
        let y0 = (fy.floor() as usize).min(self.cells - 1);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let tx = smooth(fx - x0 as f64);
        let ty = smooth(fy - y0 as f64);
        let at = |x: usize, y: usize| self.lattice[y * (self.cells + 1) + x];
        let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
        let bottom = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

/// Geometry of one lesion, derived from its params and the image width.
#[derive(Clone, Debug)]
pub struct LesionShape {
    pub center: (f64, f64),
    pub base_radius: f64,
    pub asymmetry: f64,
    pub asymmetry_angle: f64,
    pub border: f64,
    pub harmonic_weights: [f64; 5],
    pub harmonic_phases: [f64; 5],
}

impl LesionShape {
    fn draw(params: &LesionParams, width: usize, rng: &mut Rng) -> Self {
        let w = width as f64;
        let asymmetry_angle = rng.uniform_range(0.0, TAU);
        let mut harmonic_weights = [0.0; 5];
        let mut harmonic_phases = [0.0; 5];
        for i in 0..5 {
            harmonic_weights[i] = rng.uniform_range(-1.0, 1.0);
            harmonic_phases[i] = rng.uniform_range(0.0, TAU);
        }
        let offset = 0.15 * params.asymmetry * w;
        LesionShape {
            center: (
                w / 2.0 + offset * asymmetry_angle.cos(),
                w / 2.0 + offset * asymmetry_angle.sin(),
            ),
            base_radius: 0.30 * w,
            asymmetry: params.asymmetry,
            asymmetry_angle,
            border: params.border_irregularity,
            harmonic_weights,
            harmonic_phases,
        }
    }

    /// Shape that [`render_lesion`] uses for these params.
    pub fn of(params: &LesionParams, width: usize) -> Self {
        Self::draw(params, width, &mut Rng::new(params.seed))
    }

    /// Boundary radius at absolute angle `theta`.
    pub fn radius(&self, theta: f64) -> f64 {
        let stretch = 1.0 + 0.5 * self.asymmetry * (theta - self.asymmetry_angle).cos();
        let ripple: f64 = (2..=6)
            .zip(self.harmonic_weights.iter().zip(&self.harmonic_phases))
            .map(|(k, (w, phi))| (w / k as f64) * (k as f64 * theta + phi).sin())
            .sum();
        self.base_radius * stretch * (1.0 + self.border * ripple)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        (dx * dx + dy * dy).sqrt() <= self.radius(dy.atan2(dx))
    }
}

fn check_resolution(resolution: usize) -> Result<()> {
    if SUPPORTED_RESOLUTIONS.contains(&resolution) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "unsupported resolution {resolution}; expected one of {SUPPORTED_RESOLUTIONS:?}"
        )))
    }
}

fn to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Deterministic rendering of `params` at `resolution × resolution`.
pub fn render_lesion(params: &LesionParams, resolution: usize) -> Result<Image> {
    check_resolution(resolution)?;
    let w = resolution as f64;
    let mut rng = Rng::new(params.seed);
    let shape = LesionShape::draw(params, resolution, &mut rng);
    let background = ValueNoise::new(&mut rng, 4);
    let interior = ValueNoise::new(&mut rng, resolution / 4);
    // Spot positions are always drawn so the stream does not depend on c.
    let spots: Vec<(f64, f64, f64)> = (0..2)
        .map(|_| {
            let angle = rng.uniform_range(0.0, TAU);
            let reach = rng.uniform_range(0.0, 0.5) * shape.base_radius;
            let radius = rng.uniform_range(0.06, 0.10) * w;
            (
                shape.center.0 + reach * angle.cos(),
                shape.center.1 + reach * angle.sin(),
                radius,
            )
        })
        .collect();
    let color = params.color_variation;

    let mut img = Image::new(resolution, resolution);
    for y in 0..resolution {
        for x in 0..resolution {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let (u, v) = (px / w, py / w);
            let rgb = if shape.contains(px, py) {
                let shift = COLOR_NOISE * color * interior.sample(u, v);
                let darken = color > 0.5
                    && spots
                        .iter()
                        .any(|&(sx, sy, sr)| (px - sx).hypot(py - sy) <= sr);
                let factor = if darken { SPOT_DARKENING } else { 1.0 };
                LESION_BROWN.map(|c| to_byte((c + shift).clamp(0.0, 255.0) * factor))
            } else {
                let shift = BACKGROUND_NOISE * background.sample(u, v);
                SKIN_TONE.map(|c| to_byte(c + shift))
            };
            img.set(x, y, rgb);
        }
    }
    Ok(img)
}
