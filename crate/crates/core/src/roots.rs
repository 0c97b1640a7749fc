//! Zeros of entire functions inside a contour: Delves–Lyness moments,
//! Aberth iteration on the moment polynomial, Newton polishing and
//! recursive subdivision when a cell holds too many zeros.

use serde::Serialize;

use crate::contour::{moments, resolve, Contour, CountOptions};
use crate::error::{HillError, Result};
use crate::par::{try_map, Execution};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RootOptions {
    /// Relative abscissa tolerance for simple zeros.
    pub tol: f64,
    /// Largest count handled by one moment polynomial.
    pub max_per_cell: usize,
    pub max_depth: usize,
    pub count: CountOptions,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions { tol: 1e-9, max_per_cell: 4, max_depth: 14, count: CountOptions::default() }
    }
}

impl RootOptions {
    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.count.exec = exec;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Root {
    pub z: C64,
    pub multiplicity: u32,
    /// `|f(z)| / scale` at the reported point.
    pub residual: f64,
}

/// Monic polynomial `w^k − e₁w^{k−1} + …` with the given power sums
/// `s_1..s_k` (Newton identities). Coefficients highest degree first.
pub fn poly_from_power_sums(s: &[C64]) -> Vec<C64> {
    let k = s.len();
    let mut e = vec![C64::new(1.0, 0.0)];
    for j in 1..=k {
        let mut acc = C64::new(0.0, 0.0);
        for i in 1..=j {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += e[j - i] * s[i - 1] * sign;
        }
        e.push(acc / j as f64);
    }
    e.iter().enumerate().map(|(j, v)| if j % 2 == 1 { -v } else { *v }).collect()
}

fn horner(c: &[C64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &a in c {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// All roots of a monic polynomial (highest degree first) by Aberth's
/// simultaneous iteration.
pub fn aberth(c: &[C64]) -> Vec<C64> {
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let r = c.iter().skip(1).enumerate().map(|(k, a)| a.norm().powf(1.0 / (k + 1) as f64)).fold(0.0, f64::max).max(1e-3);
    let mut z: Vec<C64> = (0..n)
        .map(|k| C64::from_polar(r, 0.4 + 2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect();
    for _ in 0..500 {
        let mut moved: f64 = 0.0;
        for i in 0..n {
            let (p, dp) = horner(c, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let sum: C64 = (0..n).filter(|&j| j != i).map(|j| (z[i] - z[j]).inv()).sum();
            let w = ratio / (C64::new(1.0, 0.0) - ratio * sum);
            if w.is_finite() {
                z[i] -= w;
                moved = moved.max(w.norm() / z[i].norm().max(1.0));
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

fn derivative<F>(f: &F, z: C64, h: f64) -> Result<C64>
where
    F: Fn(C64) -> Result<(C64, f64)>,
{
    Ok((f(z + h)?.0 - f(z - h)?.0) / (2.0 * h))
}

/// Newton with step `m·f/f′` from `z0`; returns the last iterate that
/// reduced `|f|` together with its residual.
pub fn newton_polish<F>(f: &F, z0: C64, m: u32, tol: f64) -> Result<(C64, f64)>
where
    F: Fn(C64) -> Result<(C64, f64)>,
{
    let mut z = z0;
    let (mut fz, mut scale) = f(z)?;
    for _ in 0..100 {
        if fz.norm() == 0.0 {
            break;
        }
        let h = 1e-7 * z.norm().max(1.0);
        let d = derivative(f, z, h)?;
        if d.norm() == 0.0 {
            break;
        }
        let step = fz / d * m as f64;
        let cand = z - step;
        let (fc, sc) = f(cand)?;
        if fc.norm() >= fz.norm() && step.norm() > tol * z.norm().max(1.0) {
            // backtrack once before giving up
            let half = z - step * 0.5;
            let (fh, sh) = f(half)?;
            if fh.norm() >= fz.norm() {
                break;
            }
            z = half;
            fz = fh;
            scale = sh;
            continue;
        }
        let done = step.norm() <= tol * 1e-2 * z.norm().max(1.0);
        if fc.norm() <= fz.norm() {
            z = cand;
            fz = fc;
            scale = sc;
        }
        if done {
            break;
        }
    }
    Ok((z, fz.norm() / scale))
}

/// Single-linkage groups of points closer than `radius`.
fn cluster(points: &[C64], radius: f64) -> Vec<Vec<C64>> {
    let mut groups: Vec<Vec<C64>> = Vec::new();
    for &p in points {
        let hits: Vec<usize> = (0..groups.len()).filter(|&i| groups[i].iter().any(|q| (p - q).norm() < radius)).collect();
        let mut g = vec![p];
        for &i in hits.iter().rev() {
            g.extend(groups.swap_remove(i));
        }
        groups.push(g);
    }
    groups
}

/// Relative accuracy assumed for one evaluation of the target.
const EVAL_EPS: f64 = 1e-12;

/// Radius below which `k` zeros near `c` cannot be told apart: with
/// `|f(c + s)| ≈ a sᵏ`, rounding noise `ε·scale` hides a split smaller than
/// `(ε·scale/a)^{1/k}`.
/// Relative size of `|f|` at a group centre still consistent with one zero.
const MERGE_LEVEL: f64 = 100.0 * EVAL_EPS;

fn noise_radius<F>(f: &F, c: C64, k: u32, probe: f64) -> Result<f64>
where
    F: Fn(C64) -> Result<(C64, f64)>,
{
    let mut a: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for j in 0..4 {
        let (v, sc) = f(c + C64::from_polar(probe, 0.3 + j as f64 * std::f64::consts::FRAC_PI_2))?;
        a = a.max(v.norm() / probe.powi(k as i32));
        scale = scale.max(sc);
    }
    if a == 0.0 {
        return Ok(probe);
    }
    Ok((EVAL_EPS * scale / a).powf(1.0 / k as f64))
}

/// Local multiplicity of a zero of `f` at `z` by a small circle count.
pub fn local_multiplicity<F>(f: &F, z: C64, radius: f64, opts: &CountOptions) -> Result<usize>
where
    F: Fn(C64) -> Result<(C64, f64)> + Sync,
{
    let mut r = radius;
    for _ in 0..4 {
        match resolve(f, &Contour::circle(z, r), opts) {
            Ok(res) => return Ok(res.count),
            Err(HillError::ZeroOnContour(_)) | Err(HillError::NonIntegerWinding { .. }) => r *= 1.3,
            Err(e) => return Err(e),
        }
    }
    Err(HillError::RootFinding(format!("local count around {z} not resolved")))
}

/// Split polished points into zeros with multiplicity. A group counts as
/// one multiple zero when its spread is within ten noise radii and `f` at
/// its centre is below `MERGE_LEVEL`; otherwise it is re-clustered at a
/// tenth of the radius.
fn resolve_groups<F>(f: &F, points: Vec<C64>, radius: f64, tol: f64, out: &mut Vec<Root>) -> Result<()>
where
    F: Fn(C64) -> Result<(C64, f64)>,
{
    for g in cluster(&points, radius) {
        let k = g.len() as u32;
        let c = g.iter().sum::<C64>() / k as f64;
        if k == 1 {
            let (v, sc) = f(c)?;
            out.push(Root { z: c, multiplicity: 1, residual: v.norm() / sc });
            continue;
        }
        let spread = g.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
        let floor = tol * c.norm().max(1.0);
        let noise = noise_radius(f, c, k, (10.0 * spread).max(1e3 * floor))?;
        let (vc, sc) = f(c)?;
        if spread <= 10.0 * noise.max(floor) && vc.norm() <= MERGE_LEVEL * sc.max(1.0) {
            let (z, res) = newton_polish(f, c, k, tol)?;
            let z = if (z - c).norm() <= 10.0 * noise.max(floor) { z } else { c };
            out.push(Root { z, multiplicity: k, residual: res });
        } else if radius * 0.1 > floor {
            resolve_groups(f, g, radius * 0.1, tol, out)?;
        } else {
            for p in g {
                let (v, sc) = f(p)?;
                out.push(Root { z: p, multiplicity: 1, residual: v.norm() / sc });
            }
        }
    }
    Ok(())
}

fn solve_cell<F>(f: &F, cell: &Contour, samples: &[crate::contour::Sample], count: usize, opts: &RootOptions) -> Result<Option<Vec<Root>>>
where
    F: Fn(C64) -> Result<(C64, f64)> + Sync,
{
    let s = moments(samples, cell, count);
    let poly = poly_from_power_sums(&s[1..]);
    let (c, r) = (cell.center(), cell.size());
    let seeds: Vec<C64> = aberth(&poly).into_iter().map(|w| c + w * r).collect();
    let mut polished = Vec::with_capacity(seeds.len());
    for seed in seeds {
        let (z, _) = newton_polish(f, seed, 1, opts.tol)?;
        if !cell.contains(z) && cell.boundary_distance(z) > 1e-6 * r {
            return Ok(None);
        }
        polished.push(z);
    }
    let mut merged = Vec::new();
    resolve_groups(f, polished, 1e-2 * r, opts.tol, &mut merged)?;
    let total: u32 = merged.iter().map(|q| q.multiplicity).sum();
    if total as usize != count {
        return Ok(None);
    }
    for i in 0..merged.len() {
        if merged[i].multiplicity > 1 {
            let sep = merged.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, q)| (q.z - merged[i].z).norm()).fold(r, f64::min);
            // as wide as the neighbours allow so that |f| on the circle
            // stays well above evaluation noise
            let room = if cell.contains(merged[i].z) { cell.boundary_distance(merged[i].z) } else { r };
            let rad = (0.4 * sep).min(0.9 * room).max(1e-7 * merged[i].z.norm().max(1.0));
            let local = local_multiplicity(f, merged[i].z, rad, &opts.count)?;
            if local != merged[i].multiplicity as usize {
                return Ok(None);
            }
        }
    }
    Ok(Some(merged))
}

/// A rectangle around the moment-based estimates when they occupy a small
/// part of the cell. Estimates of a tight cluster carry errors of order
/// `10⁻³` of the cell size, hence the padding.
const MAX_ZOOMS: u32 = 1;

fn zoom(cell: &Contour, samples: &[crate::contour::Sample], count: usize, tol: f64) -> Option<Contour> {
    let s = moments(samples, cell, count);
    let (c, r) = (cell.center(), cell.size());
    let est: Vec<C64> = aberth(&poly_from_power_sums(&s[1..])).into_iter().map(|w| c + w * r).collect();
    let (mut lo, mut hi) = (est[0], est[0]);
    for z in &est {
        lo = C64::new(lo.re.min(z.re), lo.im.min(z.im));
        hi = C64::new(hi.re.max(z.re), hi.im.max(z.im));
    }
    let span = (hi.re - lo.re).max(hi.im - lo.im);
    if !span.is_finite() || span > 0.05 * r {
        return None;
    }
    let pad = span.max(0.01 * r);
    if pad < 1e4 * tol * c.norm().max(1.0) {
        return None;
    }
    Some(Contour::rect(lo.re - pad, hi.re + pad, lo.im - pad, hi.im + pad))
}

fn zeros_rec<F>(f: &F, cell: Contour, depth: usize, zooms: u32, opts: &RootOptions) -> Result<Vec<Root>>
where
    F: Fn(C64) -> Result<(C64, f64)> + Sync,
{
    let res = resolve(f, &cell, &opts.count)?;
    if res.count == 0 {
        return Ok(Vec::new());
    }
    if res.count <= opts.max_per_cell {
        if zooms < MAX_ZOOMS {
            if let Some(tight) = zoom(&cell, &res.samples, res.count, opts.tol) {
                match resolve(f, &tight, &opts.count) {
                    Ok(r) if r.count == res.count => match zeros_rec(f, tight, depth, zooms + 1, opts) {
                        Ok(roots) => return Ok(roots),
                        Err(HillError::ZeroOnContour(_) | HillError::NonIntegerWinding { .. } | HillError::CountMismatch { .. }) => {}
                        Err(e) => return Err(e),
                    },
                    Ok(_) | Err(HillError::ZeroOnContour(_) | HillError::NonIntegerWinding { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        if let Some(roots) = solve_cell(f, &cell, &res.samples, res.count, opts)? {
            return Ok(roots);
        }
    }
    if depth >= opts.max_depth {
        return Err(HillError::CountMismatch { expected: res.count, found: 0 });
    }
    let mut last_err = None;
    for t in [0.5, 0.4637, 0.5391, 0.4181] {
        let Some(halves) = cell.split(t) else {
            return Err(HillError::RootFinding("circle cells cannot be subdivided".into()));
        };
        let parts = try_map(opts.count.exec, &halves, |h| zeros_rec(f, *h, depth + 1, zooms, opts));
        match parts {
            Ok(p) => {
                let out: Vec<Root> = p.into_iter().flatten().collect();
                let found: u32 = out.iter().map(|q| q.multiplicity).sum();
                if found as usize != res.count {
                    return Err(HillError::CountMismatch { expected: res.count, found: found as usize });
                }
                return Ok(out);
            }
            Err(e @ (HillError::ZeroOnContour(_) | HillError::NonIntegerWinding { .. })) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap())
}

/// All zeros of `f` inside `contour` with multiplicities. A contour that
/// passes through a zero is grown or shrunk by a few percent and retried.
pub fn zeros_in<F>(f: &F, contour: &Contour, opts: &RootOptions) -> Result<Vec<Root>>
where
    F: Fn(C64) -> Result<(C64, f64)> + Sync,
{
    let mut cell = *contour;
    let factors = [1.013, 0.987, 1.029];
    for attempt in 0..4 {
        let out = match cell {
            Contour::Circle { .. } => resolve(f, &cell, &opts.count).and_then(|res| {
                if res.count == 0 {
                    return Ok(Vec::new());
                }
                solve_cell(f, &cell, &res.samples, res.count, opts)?
                    .ok_or(HillError::CountMismatch { expected: res.count, found: 0 })
            }),
            Contour::Rect { .. } => zeros_rec(f, cell, 0, 0, opts),
        };
        match out {
            Err(HillError::ZeroOnContour(_) | HillError::NonIntegerWinding { .. }) if attempt < 3 => {
                cell = contour.inflated(factors[attempt])
            }
            other => {
                let mut roots = other?;
                roots.sort_by(|a, b| a.z.re.total_cmp(&b.z.re).then(a.z.im.total_cmp(&b.z.im)));
                return Ok(roots);
            }
        }
    }
    unreachable!()
}
