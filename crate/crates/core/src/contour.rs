//! Argument-principle counting and contour moments for entire functions.
//!
//! Circles use the periodic trapezoid rule (nodes are reused when the level
//! doubles); rectangles use composite 8-point Gauss–Legendre panels. The log
//! derivative comes from central differences with a step proportional to the
//! contour size. Each level is also checked against the unwrapped phase
//! increment, which must agree with the rounded quadrature value.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{HillError, Result};
use crate::par::{try_map, Execution};
use crate::special::gauss_legendre;
use crate::C64;

/// Acceptance distance of a winding value from the nearest integer.
pub const WINDING_TOL: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Contour {
    Circle { center: C64, radius: f64 },
    Rect { re0: f64, re1: f64, im0: f64, im1: f64 },
}

impl Contour {
    pub fn circle(center: C64, radius: f64) -> Self {
        Contour::Circle { center, radius }
    }

    pub fn rect(re0: f64, re1: f64, im0: f64, im1: f64) -> Self {
        Contour::Rect { re0: re0.min(re1), re1: re0.max(re1), im0: im0.min(im1), im1: im0.max(im1) }
    }

    pub fn center(&self) -> C64 {
        match *self {
            Contour::Circle { center, .. } => center,
            Contour::Rect { re0, re1, im0, im1 } => C64::new(0.5 * (re0 + re1), 0.5 * (im0 + im1)),
        }
    }

    /// Radius of the smallest centred disc containing the contour.
    pub fn size(&self) -> f64 {
        match *self {
            Contour::Circle { radius, .. } => radius,
            Contour::Rect { re0, re1, im0, im1 } => 0.5 * (re1 - re0).hypot(im1 - im0),
        }
    }

    pub fn contains(&self, z: C64) -> bool {
        match *self {
            Contour::Circle { center, radius } => (z - center).norm() < radius,
            Contour::Rect { re0, re1, im0, im1 } => z.re > re0 && z.re < re1 && z.im > im0 && z.im < im1,
        }
    }

    /// Distance from `z` to the boundary.
    pub fn boundary_distance(&self, z: C64) -> f64 {
        match *self {
            Contour::Circle { center, radius } => ((z - center).norm() - radius).abs(),
            Contour::Rect { re0, re1, im0, im1 } => {
                let dx = if z.re < re0 { re0 - z.re } else if z.re > re1 { z.re - re1 } else { 0.0 };
                let dy = if z.im < im0 { im0 - z.im } else if z.im > im1 { z.im - im1 } else { 0.0 };
                if dx > 0.0 || dy > 0.0 {
                    dx.hypot(dy)
                } else {
                    (z.re - re0).min(re1 - z.re).min(z.im - im0).min(im1 - z.im)
                }
            }
        }
    }

    /// Same shape grown by `factor` about its centre.
    pub fn inflated(&self, factor: f64) -> Self {
        match *self {
            Contour::Circle { center, radius } => Contour::Circle { center, radius: radius * factor },
            Contour::Rect { re0, re1, im0, im1 } => {
                let (cx, cy) = (0.5 * (re0 + re1), 0.5 * (im0 + im1));
                let (hx, hy) = (0.5 * (re1 - re0) * factor, 0.5 * (im1 - im0) * factor);
                Contour::Rect { re0: cx - hx, re1: cx + hx, im0: cy - hy, im1: cy + hy }
            }
        }
    }

    /// Split a rectangle across its longer side at fraction `t`.
    pub fn split(&self, t: f64) -> Option<[Contour; 2]> {
        match *self {
            Contour::Circle { .. } => None,
            Contour::Rect { re0, re1, im0, im1 } => {
                if re1 - re0 >= im1 - im0 {
                    let x = re0 + t * (re1 - re0);
                    Some([Contour::rect(re0, x, im0, im1), Contour::rect(x, re1, im0, im1)])
                } else {
                    let y = im0 + t * (im1 - im0);
                    Some([Contour::rect(re0, re1, im0, y), Contour::rect(re0, re1, y, im1)])
                }
            }
        }
    }

    /// Quadrature nodes `(z_k, dz_k)` in boundary order at refinement level
    /// `level`, with `∮ g dz ≈ Σ g(z_k) dz_k`.
    pub fn nodes(&self, level: u32) -> Vec<(C64, C64)> {
        match *self {
            Contour::Circle { center, radius } => {
                let n = 32usize << level;
                (0..n)
                    .map(|k| {
                        let e = C64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64);
                        (center + e * radius, C64::new(0.0, 1.0) * e * radius * (2.0 * PI / n as f64))
                    })
                    .collect()
            }
            Contour::Rect { re0, re1, im0, im1 } => {
                let corners = [C64::new(re0, im0), C64::new(re1, im0), C64::new(re1, im1), C64::new(re0, im1)];
                let perimeter = 2.0 * ((re1 - re0) + (im1 - im0));
                let (x, w) = gauss_legendre(8);
                let mut out = Vec::new();
                for s in 0..4 {
                    let (a, b) = (corners[s], corners[(s + 1) % 4]);
                    let len = (b - a).norm();
                    let panels = ((len / perimeter * 8.0 * (1u64 << level) as f64).ceil() as usize).max(1);
                    let d = (b - a) / panels as f64;
                    for p in 0..panels {
                        let p0 = a + d * p as f64;
                        for (xi, wi) in x.iter().zip(&w) {
                            out.push((p0 + d * (0.5 * (xi + 1.0)), d * (0.5 * wi)));
                        }
                    }
                }
                out
            }
        }
    }
}

/// Value, log derivative and rounding scale of the target at one node.
#[derive(Clone, Copy, Debug)]
pub struct Sample {
    pub z: C64,
    pub dz: C64,
    pub f: C64,
    pub dlog: C64,
    pub scale: f64,
}

/// Integer winding with its diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContourCount {
    pub contour: Contour,
    pub target: String,
    pub count: usize,
    /// Unrounded `(1/2πi)∮ f′/f`.
    pub raw: C64,
    pub nodes: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CountOptions {
    pub max_level: u32,
    /// `|f| ≤ zero_floor · scale` at a node rejects the contour.
    pub zero_floor: f64,
    pub exec: Execution,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions { max_level: 8, zero_floor: 1e-12, exec: Execution::Parallel }
    }
}

/// Samples of the target `f(z) -> (value, scale)` on a contour, refined
/// until the winding is resolved.
pub struct Resolved {
    pub samples: Vec<Sample>,
    pub count: usize,
    pub raw: C64,
}

fn sample_nodes<F>(f: &F, nodes: &[(C64, C64)], h: f64, opts: &CountOptions) -> Result<Vec<Sample>>
where
    F: Fn(C64) -> Result<(C64, f64)> + Sync,
{
    try_map(opts.exec, nodes, |&(z, dz)| {
        let (v, scale) = f(z)?;
        let (vp, _) = f(z + h)?;
        let (vm, _) = f(z - h)?;
        let d = (vp - vm) / (2.0 * h);
        Ok(Sample { z, dz, f: v, dlog: if v.norm() == 0.0 { C64::new(f64::INFINITY, 0.0) } else { d / v }, scale })
    })
}

fn phase_winding(samples: &[Sample]) -> (f64, f64) {
    let n = samples.len();
    let mut total = 0.0;
    let mut max_step: f64 = 0.0;
    for k in 0..n {
        let step = (samples[(k + 1) % n].f / samples[k].f).arg();
        total += step;
        max_step = max_step.max(step.abs());
    }
    (total / (2.0 * PI), max_step)
}

/// Refine until the quadrature winding is within [`WINDING_TOL`] of an
/// integer, stable between levels and consistent with the phase increment.
pub fn resolve<F>(f: &F, contour: &Contour, opts: &CountOptions) -> Result<Resolved>
where
    F: Fn(C64) -> Result<(C64, f64)> + Sync,
{
    let h = 1e-4 * contour.size().max(1e-3);
    let mut samples: Vec<Sample> = Vec::new();
    let mut prev: Option<C64> = None;
    let mut last = C64::new(f64::NAN, 0.0);
    for level in 0..=opts.max_level {
        let nodes = contour.nodes(level);
        samples = match contour {
            Contour::Circle { .. } if level > 0 => {
                // reuse the even nodes
                let odd: Vec<(C64, C64)> = nodes.iter().skip(1).step_by(2).copied().collect();
                let fresh = sample_nodes(f, &odd, h, opts)?;
                let mut merged = Vec::with_capacity(nodes.len());
                for (k, s) in fresh.into_iter().enumerate() {
                    let mut even = samples[k];
                    even.dz = nodes[2 * k].1;
                    merged.push(even);
                    merged.push(s);
                }
                merged
            }
            _ => sample_nodes(f, &nodes, h, opts)?,
        };
        let top = samples.iter().map(|s| s.scale).fold(1.0, f64::max);
        if samples.iter().all(|s| s.f.norm() <= 1e-13 * s.scale) {
            return Err(HillError::IdenticallyZero);
        }
        if let Some(s) = samples.iter().find(|s| s.f.norm() <= opts.zero_floor * s.scale.min(top)) {
            return Err(HillError::ZeroOnContour(s.z));
        }
        let raw: C64 = samples.iter().map(|s| s.dlog * s.dz).sum::<C64>() / C64::new(0.0, 2.0 * PI);
        last = raw;
        let rounded = raw.re.round();
        let (phase, max_step) = phase_winding(&samples);
        let stable = prev.is_some_and(|p| (raw - p).norm() < 1e-2);
        if stable
            && (raw.re - rounded).abs() < WINDING_TOL
            && raw.im.abs() < WINDING_TOL
            && max_step < PI / 2.0
            && (phase - rounded).abs() < 1e-6
            && rounded >= 0.0
        {
            return Ok(Resolved { samples, count: rounded as usize, raw });
        }
        prev = Some(raw);
    }
    Err(HillError::NonIntegerWinding { value: last.re, tol: WINDING_TOL })
}

/// Number of zeros of `f` inside `contour`, counted with multiplicity.
pub fn count_zeros<F>(f: &F, contour: &Contour, target: &str, opts: &CountOptions) -> Result<ContourCount>
where
    F: Fn(C64) -> Result<(C64, f64)> + Sync,
{
    let r = resolve(f, contour, opts)?;
    Ok(ContourCount { contour: *contour, target: target.to_string(), count: r.count, raw: r.raw, nodes: r.samples.len() })
}

/// Normalized power sums `s_p = (1/2πi)∮ w^p f′/f dz`, `w = (z − c)/R`,
/// for `p = 0..=k`, with `c` the centre and `R` the size of the contour.
pub fn moments(samples: &[Sample], contour: &Contour, k: usize) -> Vec<C64> {
    let (c, r) = (contour.center(), contour.size());
    let mut s = vec![C64::new(0.0, 0.0); k + 1];
    for smp in samples {
        let w = (smp.z - c) / r;
        let g = smp.dlog * smp.dz;
        let mut wp = C64::new(1.0, 0.0);
        for sp in s.iter_mut() {
            *sp += g * wp;
            wp *= w;
        }
    }
    s.iter().map(|v| v / C64::new(0.0, 2.0 * PI)).collect()
}
