//! Bands, gaps, periodic/anti-periodic eigenvalues and resonances.
//!
//! Band membership on the real axis: `ρ ≥ 0` and some `Δ_m ∈ [−1, 1]`.
//! Zeros of `D±` and `ρ` come from contour searches over cells
//! `[(π(k−½))², (π(k+½))²]` of the real line, which asymptotically hold the
//! zeros attached to `(πk)²`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::contour::{count_zeros as count_on, Contour, ContourCount};
use crate::error::{HillError, Result};
use crate::lyapunov::{HillOperator, LyapunovData, Target};
use crate::par::{try_map, Execution};
use crate::potential::NormalizedPotential;
use crate::roots::{zeros_in, Root, RootOptions};
use crate::C64;

/// Lowest accepted grid density (points per unit of `√|λ|`).
pub const MIN_GRID_DENSITY: f64 = 4.0;

/// `ρ ≥ −RHO_FLOOR · scale` counts as `ρ ≥ 0` on the real axis.
const RHO_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumOptions {
    pub grid_density: f64,
    /// Relative bisection tolerance for band edges.
    pub edge_tol: f64,
    /// Relative distance for matching gap endpoints to zeros.
    pub match_tol: f64,
    pub roots: RootOptions,
    pub exec: Execution,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            grid_density: 40.0,
            edge_tol: 1e-10,
            match_tol: 1e-6,
            roots: RootOptions::default(),
            exec: Execution::Parallel,
        }
    }
}

impl SpectrumOptions {
    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self.roots = self.roots.with_exec(exec);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeSource {
    Periodic,
    Antiperiodic,
    Resonance,
    /// Endpoint matches both a `D±` zero and a real zero of `ρ`.
    Ambiguous,
    Unmatched,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GapKind {
    Stable,
    Resonance,
    Mixed,
    Unclassified,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    /// Branches (`1` for `Δ₁ ≥ Δ₂`, `2` for `Δ₂`) inside `[−1, 1]` somewhere
    /// on the band.
    pub branches: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Gap {
    pub lo: f64,
    pub hi: f64,
    pub kind: GapKind,
    pub lo_source: EdgeSource,
    pub hi_source: EdgeSource,
    /// Local guess from the smallest of `|D₊|, |D₋|, |ρ|` at each edge.
    pub local_sources: [EdgeSource; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Eigenvalue {
    pub lambda: f64,
    pub multiplicity: u32,
    /// Position of the first copy in the sorted list counted with
    /// multiplicity.
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resonance {
    pub z: C64,
    pub multiplicity: u32,
    pub real: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Default)]
pub struct SpectralReport {
    pub window: (f64, f64),
    pub bands: Vec<Band>,
    pub gaps: Vec<Gap>,
    /// Parts of the window outside the spectrum not enclosed by bands.
    pub exterior: Vec<(f64, f64)>,
    pub periodic_eigs: Vec<Eigenvalue>,
    pub antiperiodic_eigs: Vec<Eigenvalue>,
    pub resonances: Vec<Resonance>,
    pub diagnostics: Vec<String>,
}

fn ssqrt(x: f64) -> f64 {
    x.signum() * x.abs().sqrt()
}

/// Grid uniform in `sign(λ)√|λ|`, both ends included.
pub fn signed_sqrt_grid(lo: f64, hi: f64, density: f64) -> Vec<f64> {
    let (t0, t1) = (ssqrt(lo), ssqrt(hi));
    let n = (((t1 - t0) * density).ceil() as usize).max(8);
    (0..=n)
        .map(|i| {
            if i == n {
                return hi;
            }
            let t = t0 + (t1 - t0) * i as f64 / n as f64;
            t * t.abs()
        })
        .collect()
}

/// Which branches lie in `[−1, 1]` at a real point.
pub fn branch_membership(d: &LyapunovData) -> [bool; 2] {
    let s = d.scale();
    if d.rho.re < -RHO_FLOOR * s {
        return [false, false];
    }
    let r = d.rho.re.max(0.0).sqrt();
    let mu = d.mu1.re;
    [(mu + r).abs() <= 1.0, (mu - r).abs() <= 1.0]
}

fn member(d: &LyapunovData) -> bool {
    let m = branch_membership(d);
    m[0] || m[1]
}

fn check_window(lo: f64, hi: f64) -> Result<()> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(HillError::InvalidParameter(format!("empty window [{lo}, {hi}]")));
    }
    Ok(())
}

fn real_data(op: &HillOperator, x: f64) -> Result<LyapunovData> {
    op.lyapunov_at(C64::new(x, 0.0))
}

/// Local guess of what vanishes at a band edge.
fn local_source(d: &LyapunovData) -> EdgeSource {
    let s = d.scale();
    let vals = [(d.d_plus.norm(), EdgeSource::Periodic), (d.d_minus.norm(), EdgeSource::Antiperiodic), (d.rho.norm(), EdgeSource::Resonance)];
    let best = vals.iter().min_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
    if best.0 <= 1e-6 * s {
        best.1
    } else {
        EdgeSource::Unmatched
    }
}

fn bisect_edge(op: &HillOperator, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    // membership(a) != membership(b)
    let ma = member(&real_data(op, a)?);
    while (b - a).abs() > tol * a.abs().max(b.abs()).max(1.0) {
        let m = 0.5 * (a + b);
        if member(&real_data(op, m)?) == ma {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Bands and gaps of the real window by grid scan and edge bisection.
pub fn scan_bands(op: &HillOperator, window: (f64, f64), opts: &SpectrumOptions) -> Result<SpectralReport> {
    let (lo, hi) = window;
    check_window(lo, hi)?;
    if opts.grid_density < MIN_GRID_DENSITY {
        return Err(HillError::InvalidParameter(format!("grid density {} below {MIN_GRID_DENSITY}", opts.grid_density)));
    }
    let grid = signed_sqrt_grid(lo, hi, opts.grid_density);
    let data = try_map(opts.exec, &grid, |&x| real_data(op, x))?;
    let flags: Vec<[bool; 2]> = data.iter().map(branch_membership).collect();
    let inside: Vec<bool> = flags.iter().map(|f| f[0] || f[1]).collect();

    let flips: Vec<usize> = (1..grid.len()).filter(|&i| inside[i] != inside[i - 1]).collect();
    let edges = try_map(opts.exec, &flips, |&i| bisect_edge(op, grid[i - 1], grid[i], opts.edge_tol))?;

    // boundaries of alternating segments
    let mut cuts = vec![lo];
    cuts.extend(edges.iter().copied());
    cuts.push(hi);
    let mut report = SpectralReport { window, ..Default::default() };
    let mut state = inside[0];
    let mut segs: Vec<(f64, f64, bool)> = Vec::new();
    for w in cuts.windows(2) {
        segs.push((w[0], w[1], state));
        state = !state;
    }
    for &(a, b, is_band) in &segs {
        if is_band {
            let mut branches = Vec::new();
            for (x, f) in grid.iter().zip(&flags) {
                if *x >= a && *x <= b {
                    for (k, &on) in f.iter().enumerate() {
                        let id = k as u8 + 1;
                        if on && !branches.contains(&id) {
                            branches.push(id);
                        }
                    }
                }
            }
            branches.sort();
            report.bands.push(Band { lo: a, hi: b, branches });
        }
    }
    let edge_data = try_map(opts.exec, &edges, |&e| real_data(op, e))?;
    let source_at = |x: f64| -> EdgeSource {
        edges.iter().position(|&e| e == x).map_or(EdgeSource::Unmatched, |i| local_source(&edge_data[i]))
    };
    for (i, &(a, b, is_band)) in segs.iter().enumerate() {
        if is_band {
            continue;
        }
        let bounded = i > 0 && i + 1 < segs.len();
        if bounded {
            report.gaps.push(Gap {
                lo: a,
                hi: b,
                kind: GapKind::Unclassified,
                lo_source: EdgeSource::Unmatched,
                hi_source: EdgeSource::Unmatched,
                local_sources: [source_at(a), source_at(b)],
            });
        } else {
            report.exterior.push((a, b));
        }
    }
    Ok(report)
}

/// Sample of the two real branches tracked continuously along the axis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchPoint {
    pub lambda: f64,
    /// `None` where `ρ < 0` (the pair is complex).
    pub branches: Option<[f64; 2]>,
    pub rho: f64,
    pub mu1: f64,
    pub d_plus: f64,
    pub d_minus: f64,
}

/// Real-axis sweep with `±√ρ` chosen by linear extrapolation from the two
/// previous points, so the labels pass smoothly through double zeros of `ρ`.
pub fn branch_sweep(op: &HillOperator, window: (f64, f64), density: f64, exec: Execution) -> Result<Vec<BranchPoint>> {
    check_window(window.0, window.1)?;
    let grid = signed_sqrt_grid(window.0, window.1, density.max(MIN_GRID_DENSITY));
    let data = try_map(exec, &grid, |&x| real_data(op, x))?;
    let mut out = Vec::with_capacity(grid.len());
    let mut hist: Vec<f64> = Vec::new();
    for (x, d) in grid.iter().zip(&data) {
        let rho = d.rho.re;
        let branches = if rho >= -RHO_FLOOR * d.scale() {
            let r = rho.max(0.0).sqrt();
            let predicted = match hist.len() {
                0 => r,
                1 => hist[0],
                n => 2.0 * hist[n - 1] - hist[n - 2],
            };
            let s = if (r - predicted).abs() <= (-r - predicted).abs() { r } else { -r };
            hist.push(s);
            Some([d.mu1.re + s, d.mu1.re - s])
        } else {
            hist.clear();
            None
        };
        out.push(BranchPoint { lambda: *x, branches, rho, mu1: d.mu1.re, d_plus: d.d_plus.re, d_minus: d.d_minus.re });
    }
    Ok(out)
}

/// Band-interior runs where a tracked branch stays in `[−1+δ, 1−δ]` but its
/// grid derivative changes sign. Returns the offending `λ` values.
pub fn monotonicity_violations(sweep: &[BranchPoint], delta: f64) -> Vec<f64> {
    let mut bad = Vec::new();
    for m in 0..2 {
        let mut last_sign = 0.0;
        for w in sweep.windows(2) {
            match (w[0].branches, w[1].branches) {
                (Some(a), Some(b)) if a[m].abs() <= 1.0 - delta && b[m].abs() <= 1.0 - delta => {
                    let s = (b[m] - a[m]).signum();
                    if last_sign != 0.0 && s != last_sign && b[m] != a[m] {
                        bad.push(w[1].lambda);
                    }
                    last_sign = s;
                }
                _ => last_sign = 0.0,
            }
        }
    }
    bad
}

/// Cells of the real window cut at `(π(k+½))²`.
pub fn real_cells(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut cuts = vec![lo];
    let mut k = 0usize;
    loop {
        let c = (PI * (k as f64 + 0.5)).powi(2);
        if c >= hi {
            break;
        }
        if c > lo {
            cuts.push(c);
        }
        k += 1;
    }
    cuts.push(hi);
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}

fn target_fn(op: &HillOperator, t: Target) -> impl Fn(C64) -> Result<(C64, f64)> + Sync + '_ {
    move |z| {
        let d = op.lyapunov_at(z)?;
        Ok((d.value(t), d.scale()))
    }
}

/// Zeros of `target` in the strip over the real window, cell by cell.
pub fn zeros_near_axis(op: &HillOperator, target: Target, window: (f64, f64), opts: &SpectrumOptions) -> Result<Vec<Root>> {
    check_window(window.0, window.1)?;
    let f = target_fn(op, target);
    let mut out = Vec::new();
    let cells = real_cells(window.0, window.1);
    let last = cells.len() - 1;
    // the outer edges are pushed out so a zero sitting on a window end is
    // enclosed, then kept if it lies in the window to rounding
    let inside = |x: f64| x >= window.0 - 1e-9 * window.0.abs().max(1.0) && x <= window.1 + 1e-9 * window.1.abs().max(1.0);
    for (i, &(a, b)) in cells.iter().enumerate() {
        let pad = 1e-2 * (b - a).max(1.0);
        let a = if i == 0 { a - pad } else { a };
        let b = if i == last { b + pad } else { b };
        let h = (0.25 * (b - a)).max(0.5);
        let roots = zeros_in(&f, &Contour::rect(a, b, -h, h), &opts.roots)?;
        out.extend(roots.into_iter().filter(|r| inside(r.z.re)));
    }
    out.sort_by(|x, y| x.z.re.total_cmp(&y.z.re).then(x.z.im.total_cmp(&y.z.im)));
    // a zero on a shared cell edge may be reported twice
    out.dedup_by(|x, y| (x.z - y.z).norm() <= 1e-8 * x.z.norm().max(1.0));
    Ok(out)
}

/// The cell `[(π(k−½))², (π(k+½))²]` attached to `(πk)²`; shell 0 starts
/// at `floor`.
pub fn shell_cell(k: usize, floor: f64) -> (f64, f64) {
    let hi = (PI * (k as f64 + 0.5)).powi(2);
    if k == 0 {
        (floor.min(hi - 1.0), hi)
    } else {
        ((PI * (k as f64 - 0.5)).powi(2), hi)
    }
}

/// Zeros of `target` in the strips over the given shells.
pub fn zeros_in_shells(op: &HillOperator, target: Target, shells: &[usize], floor: f64, opts: &SpectrumOptions) -> Result<Vec<Root>> {
    let f = target_fn(op, target);
    let per = try_map(opts.exec, shells, |&k| {
        let (a, b) = shell_cell(k, floor);
        let h = (0.25 * (b - a)).max(0.5);
        let roots = zeros_in(&f, &Contour::rect(a, b, -h, h), &opts.roots.with_exec(Execution::Sequential))?;
        Ok::<_, HillError>(roots.into_iter().filter(|r| r.z.re >= a && r.z.re < b).collect::<Vec<_>>())
    })?;
    let mut out: Vec<Root> = per.into_iter().flatten().collect();
    out.sort_by(|x, y| x.z.re.total_cmp(&y.z.re).then(x.z.im.total_cmp(&y.z.im)));
    Ok(out)
}

/// A value below every periodic and anti-periodic eigenvalue: minus the
/// largest `|V(x)|` on a fine grid, minus `S + S²/4` for the total delta
/// strength `S`, minus one.
pub fn spectral_floor(pot: &NormalizedPotential) -> f64 {
    let n = 4096;
    let smooth = (0..n)
        .map(|i| {
            let (e, _) = pot.evaluate_smooth((i as f64 + 0.5) / n as f64).eigen();
            e[0].abs().max(e[1].abs())
        })
        .fold(0.0, f64::max);
    let s: f64 = pot.deltas().iter().map(|d| d.strength.max_abs() * 2.0).sum();
    -(smooth + s + 0.25 * s * s) - 1.0
}

/// Highest shell whose cell can hold zeros shifted in from a neighbour:
/// below it every cell is searched for every target.
pub fn full_search_shells(pot: &NormalizedPotential) -> usize {
    let margin = pot.l1_norm + 1.0;
    (2.0 * margin / (PI * PI)).ceil() as usize
}

/// Periodic and anti-periodic eigenvalues up to shell `k_max`: every cell
/// below [`full_search_shells`], then `D₊` in even and `D₋` in odd shells.
pub fn shell_eigenvalues(op: &HillOperator, k_max: usize, floor: f64, opts: &SpectrumOptions) -> Result<(Vec<Eigenvalue>, Vec<Eigenvalue>, Vec<String>)> {
    let k_full = full_search_shells(op.potential()).min(k_max);
    let low = (floor.min(-1.0), shell_cell(k_full, floor).1);
    let even: Vec<usize> = (k_full + 1..=k_max).filter(|k| k % 2 == 0).collect();
    let odd: Vec<usize> = (k_full + 1..=k_max).filter(|k| k % 2 == 1).collect();
    let mut diag = Vec::new();
    let mut p = zeros_near_axis(op, Target::DPlus, low, opts)?;
    p.extend(zeros_in_shells(op, Target::DPlus, &even, floor, opts)?);
    let mut a = zeros_near_axis(op, Target::DMinus, low, opts)?;
    a.extend(zeros_in_shells(op, Target::DMinus, &odd, floor, opts)?);
    Ok((as_eigenvalues(p, &mut diag), as_eigenvalues(a, &mut diag), diag))
}

/// Zeros of `ρ` attached to shells `1..=k_max`, same search pattern as
/// [`shell_eigenvalues`].
pub fn shell_resonances(op: &HillOperator, k_max: usize, floor: f64, opts: &SpectrumOptions) -> Result<Vec<Resonance>> {
    let k_full = full_search_shells(op.potential()).min(k_max);
    let low = (floor.min(-1.0), shell_cell(k_full, floor).1);
    let high: Vec<usize> = (k_full + 1..=k_max).collect();
    let mut roots = zeros_near_axis(op, Target::Rho, low, opts)?;
    roots.extend(zeros_in_shells(op, Target::Rho, &high, floor, opts)?);
    let mut out: Vec<Resonance> = roots
        .into_iter()
        .map(|r| {
            let real = is_real(r.z);
            Resonance { z: if real { C64::new(r.z.re, 0.0) } else { r.z }, multiplicity: r.multiplicity, real }
        })
        .collect();
    enforce_conjugate_symmetry(&mut out);
    Ok(out)
}

fn as_eigenvalues(roots: Vec<Root>, diagnostics: &mut Vec<String>) -> Vec<Eigenvalue> {
    let mut out = Vec::new();
    let mut index = 0;
    for r in roots {
        if r.z.im.abs() > 1e-6 * r.z.re.abs().max(1.0) {
            diagnostics.push(format!("non-real eigenvalue candidate {} dropped", r.z));
            continue;
        }
        out.push(Eigenvalue { lambda: r.z.re, multiplicity: r.multiplicity, index });
        index += r.multiplicity as usize;
    }
    out
}

/// Zeros of `D₊` in the window, with multiplicity.
pub fn periodic_eigenvalues(op: &HillOperator, window: (f64, f64), opts: &SpectrumOptions) -> Result<(Vec<Eigenvalue>, Vec<String>)> {
    let mut diag = Vec::new();
    let roots = zeros_near_axis(op, Target::DPlus, window, opts)?;
    Ok((as_eigenvalues(roots, &mut diag), diag))
}

/// Zeros of `D₋` in the window, with multiplicity.
pub fn antiperiodic_eigenvalues(op: &HillOperator, window: (f64, f64), opts: &SpectrumOptions) -> Result<(Vec<Eigenvalue>, Vec<String>)> {
    let mut diag = Vec::new();
    let roots = zeros_near_axis(op, Target::DMinus, window, opts)?;
    Ok((as_eigenvalues(roots, &mut diag), diag))
}

fn is_real(z: C64) -> bool {
    z.im.abs() <= 1e-8 * z.re.abs().max(1.0)
}

/// Real zeros of `ρ` in the window.
pub fn real_resonances(op: &HillOperator, window: (f64, f64), opts: &SpectrumOptions) -> Result<Vec<Resonance>> {
    let roots = zeros_near_axis(op, Target::Rho, window, opts)?;
    Ok(roots
        .into_iter()
        .filter(|r| is_real(r.z))
        .map(|r| Resonance { z: C64::new(r.z.re, 0.0), multiplicity: r.multiplicity, real: true })
        .collect())
}

/// Pair each zero above the axis with its mirror image below and average
/// the two, when both lie in the list.
fn enforce_conjugate_symmetry(roots: &mut [Resonance]) {
    let n = roots.len();
    for i in 0..n {
        if roots[i].real || roots[i].z.im <= 0.0 {
            continue;
        }
        let target = roots[i].z.conj();
        let j = (0..n)
            .filter(|&j| j != i && !roots[j].real && roots[j].z.im < 0.0)
            .min_by(|&a, &b| (roots[a].z - target).norm().total_cmp(&(roots[b].z - target).norm()));
        if let Some(j) = j {
            if (roots[j].z - target).norm() <= 1e-6 * target.norm().max(1.0) {
                let z = (roots[i].z + roots[j].z.conj()) * 0.5;
                roots[i].z = z;
                roots[j].z = z.conj();
            }
        }
    }
}

/// All zeros of `ρ` in a rectangle, conjugate-symmetrized.
pub fn complex_resonances(op: &HillOperator, region: &Contour, opts: &SpectrumOptions) -> Result<Vec<Resonance>> {
    let f = target_fn(op, Target::Rho);
    let roots = zeros_in(&f, region, &opts.roots)?;
    let mut out: Vec<Resonance> = roots
        .into_iter()
        .map(|r| {
            let real = is_real(r.z);
            Resonance { z: if real { C64::new(r.z.re, 0.0) } else { r.z }, multiplicity: r.multiplicity, real }
        })
        .collect();
    enforce_conjugate_symmetry(&mut out);
    out.sort_by(|a, b| a.z.re.total_cmp(&b.z.re).then(a.z.im.total_cmp(&b.z.im)));
    Ok(out)
}

/// Resonances attached to the real window: all zeros of `ρ` in the strip
/// cells, real or not.
pub fn resonances_near_axis(op: &HillOperator, window: (f64, f64), opts: &SpectrumOptions) -> Result<Vec<Resonance>> {
    let roots = zeros_near_axis(op, Target::Rho, window, opts)?;
    let mut out: Vec<Resonance> = roots
        .into_iter()
        .map(|r| {
            let real = is_real(r.z);
            Resonance { z: if real { C64::new(r.z.re, 0.0) } else { r.z }, multiplicity: r.multiplicity, real }
        })
        .collect();
    enforce_conjugate_symmetry(&mut out);
    Ok(out)
}

/// Winding count of `target` along `contour`.
pub fn count_zeros(op: &HillOperator, target: Target, contour: &Contour, opts: &SpectrumOptions) -> Result<ContourCount> {
    let f = target_fn(op, target);
    count_on(&f, contour, target.name(), &opts.roots.count)
}

fn match_source(x: f64, periodic: &[Eigenvalue], antiperiodic: &[Eigenvalue], resonances: &[Resonance], tol: f64) -> EdgeSource {
    let near = |y: f64| (x - y).abs() <= tol * x.abs().max(1.0);
    let p = periodic.iter().any(|e| near(e.lambda));
    let a = antiperiodic.iter().any(|e| near(e.lambda));
    let r = resonances.iter().any(|z| z.real && near(z.z.re));
    match (p || a, r) {
        (true, true) => EdgeSource::Ambiguous,
        (true, false) => {
            if p {
                EdgeSource::Periodic
            } else {
                EdgeSource::Antiperiodic
            }
        }
        (false, true) => EdgeSource::Resonance,
        (false, false) => EdgeSource::Unmatched,
    }
}

/// Match gap endpoints against the zero lists and assign gap kinds.
pub fn classify_gaps(
    mut report: SpectralReport,
    periodic: &[Eigenvalue],
    antiperiodic: &[Eigenvalue],
    resonances: &[Resonance],
    tol: f64,
) -> SpectralReport {
    for g in report.gaps.iter_mut() {
        g.lo_source = match_source(g.lo, periodic, antiperiodic, resonances, tol);
        g.hi_source = match_source(g.hi, periodic, antiperiodic, resonances, tol);
        let is_d = |s: EdgeSource| matches!(s, EdgeSource::Periodic | EdgeSource::Antiperiodic);
        let is_r = |s: EdgeSource| s == EdgeSource::Resonance;
        g.kind = match (g.lo_source, g.hi_source) {
            (a, b) if is_d(a) && is_d(b) => GapKind::Stable,
            (a, b) if is_r(a) && is_r(b) => GapKind::Resonance,
            (a, b) if (is_d(a) && is_r(b)) || (is_r(a) && is_d(b)) => GapKind::Mixed,
            _ => GapKind::Unclassified,
        };
        if g.kind == GapKind::Unclassified {
            report.diagnostics.push(format!("gap ({}, {}) endpoints not matched: {:?}/{:?}", g.lo, g.hi, g.lo_source, g.hi_source));
        }
    }
    report.periodic_eigs = periodic.to_vec();
    report.antiperiodic_eigs = antiperiodic.to_vec();
    report.resonances = resonances.to_vec();
    report
}

/// Full pipeline on a real window: bands, zero lists and gap kinds.
pub fn analyze_window(op: &HillOperator, window: (f64, f64), opts: &SpectrumOptions) -> Result<SpectralReport> {
    let report = scan_bands(op, window, opts)?;
    let (p, mut d1) = periodic_eigenvalues(op, window, opts)?;
    let (a, d2) = antiperiodic_eigenvalues(op, window, opts)?;
    let res = match real_resonances(op, window, opts) {
        Ok(r) => r,
        Err(HillError::IdenticallyZero) => {
            d1.push("rho vanishes identically: the system splits into two scalar problems".into());
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    let mut out = classify_gaps(report, &p, &a, &res, opts.match_tol);
    out.diagnostics.extend(d1);
    out.diagnostics.extend(d2);
    Ok(out)
}

/// One shell of eigenvalue residuals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShellResidual {
    pub n: usize,
    /// `λ − (πn)² − V_{m0}` for the two eigenvalues paired with `m = 1`
    /// then the two with `m = 2`.
    pub eig: [f64; 4],
    /// `r − (πn)²` for the two resonances nearest `(πn)²`.
    pub res: [C64; 2],
    /// Sorted pairing disagrees with nearest-target pairing.
    pub ambiguous: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Residuals {
    pub shells: Vec<ShellResidual>,
    /// Partial sums `Σ_{k ≤ n} Σ |a_k|²` of the eigenvalue residuals.
    pub eig_l2: Vec<f64>,
    pub res_l2: Vec<f64>,
}

impl Residuals {
    /// Relative increase of a partial-sum sequence from shell `n0` to `n1`.
    pub fn increment(seq: &[f64], n0: usize, n1: usize) -> f64 {
        let (a, b) = (seq[n0 - 1], seq[n1 - 1]);
        if a == 0.0 {
            if b == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (b - a) / a
        }
    }
}

fn expand(eigs: &[Eigenvalue]) -> Vec<f64> {
    eigs.iter().flat_map(|e| std::iter::repeat_n(e.lambda, e.multiplicity as usize)).collect()
}

/// Residual sequences against `(πn)² + V_{m0}` and `(πn)²`, `n = 1..=n_max`.
pub fn asymptotic_residuals(
    pot: &NormalizedPotential,
    periodic: &[Eigenvalue],
    antiperiodic: &[Eigenvalue],
    resonances: &[Resonance],
    n_max: usize,
) -> Result<Residuals> {
    let (v1, v2) = (pot.mean_diag[0], pot.mean_diag[1]);
    let (ep, ea) = (expand(periodic), expand(antiperiodic));
    let rs: Vec<C64> = resonances.iter().flat_map(|r| std::iter::repeat_n(r.z, r.multiplicity as usize)).collect();
    let mut shells = Vec::new();
    for n in 1..=n_max {
        let c = (PI * n as f64).powi(2);
        let pool = if n % 2 == 0 { &ep } else { &ea };
        let mut near: Vec<f64> = pool.clone();
        near.sort_by(|a, b| (a - c).abs().total_cmp(&(b - c).abs()));
        if near.len() < 4 {
            return Err(HillError::CountMismatch { expected: 4, found: near.len() });
        }
        let mut four = [near[0], near[1], near[2], near[3]];
        four.sort_by(|a, b| a.total_cmp(b));
        let targets = [c + v1, c + v1, c + v2, c + v2];
        let eig = [four[0] - targets[0], four[1] - targets[1], four[2] - targets[2], four[3] - targets[3]];
        let ambiguous = v1 != v2 && ((four[1] - (c + v2)).abs() < (four[1] - (c + v1)).abs() || (four[2] - (c + v1)).abs() < (four[2] - (c + v2)).abs());
        let mut rnear = rs.clone();
        rnear.sort_by(|a, b| (a - c).norm().total_cmp(&(b - c).norm()));
        if rnear.len() < 2 {
            return Err(HillError::CountMismatch { expected: 2, found: rnear.len() });
        }
        shells.push(ShellResidual { n, eig, res: [rnear[0] - c, rnear[1] - c], ambiguous });
    }
    let mut eig_l2 = Vec::new();
    let mut res_l2 = Vec::new();
    let (mut se, mut sr) = (0.0, 0.0);
    for s in &shells {
        se += s.eig.iter().map(|x| x * x).sum::<f64>();
        sr += s.res.iter().map(|z| z.norm_sqr()).sum::<f64>();
        eig_l2.push(se);
        res_l2.push(sr);
    }
    Ok(Residuals { shells, eig_l2, res_l2 })
}

/// Truncated Hadamard product for `D₊` (even shells) or `D₋` (odd shells)
/// with the free operator's factors standing in beyond the truncation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HadamardProduct {
    pub periodic: bool,
    /// `λ₀,₁, λ₀,₂` for `D₊`; empty for `D₋`.
    pub lead: Vec<f64>,
    /// `(k, four zeros near (πk)²)`.
    pub shells: Vec<(usize, [f64; 4])>,
    /// Estimated relative size of the tail correction at `|λ| ≤ 1`.
    pub tail_estimate: f64,
}

const TAIL_TERMS: usize = 4096;

impl HadamardProduct {
    fn last_k(&self) -> usize {
        self.shells.last().map_or(if self.periodic { 0 } else { 0 }, |s| s.0)
    }

    /// `log ∏_{k > K, k ≡ K mod 2} (1 − λ/(πk)²)⁴`.
    fn free_tail_log(&self, lambda: C64) -> C64 {
        let k0 = if self.shells.is_empty() { if self.periodic { 0 } else { usize::MAX } } else { self.last_k() };
        let start = if k0 == usize::MAX { 1 } else { k0 + 2 };
        let x = lambda / (PI * PI);
        let mut acc = C64::new(0.0, 0.0);
        let mut k = start;
        let end = start + 2 * TAIL_TERMS;
        while k < end {
            acc += (C64::new(1.0, 0.0) - x / (k * k) as f64).ln();
            k += 2;
        }
        // Σ_{k ≥ end, step 2} 1/k² ≈ 1/(2(end − 1))
        acc -= x / (2.0 * (end as f64 - 1.0));
        acc * 4.0
    }

    pub fn eval(&self, lambda: C64) -> C64 {
        let mut v = if self.periodic { C64::new(0.25, 0.0) } else { C64::new(4.0, 0.0) };
        for &l in &self.lead {
            v *= C64::new(l, 0.0) - lambda;
        }
        for (k, zs) in &self.shells {
            let c = (PI * *k as f64).powi(2);
            for &z in zs {
                v *= (C64::new(z, 0.0) - lambda) / c;
            }
        }
        v * self.free_tail_log(lambda).exp()
    }
}

fn hadamard(eigs: &[Eigenvalue], truncation: usize, periodic: bool) -> Result<HadamardProduct> {
    let all = expand(eigs);
    let lead_n = if periodic { 2 } else { 0 };
    let need = lead_n + 4 * truncation;
    if all.len() < need {
        return Err(HillError::CountMismatch { expected: need, found: all.len() });
    }
    let lead = all[..lead_n].to_vec();
    let mut shells = Vec::new();
    for n in 1..=truncation {
        let k = if periodic { 2 * n } else { 2 * n - 1 };
        let s = &all[lead_n + 4 * (n - 1)..lead_n + 4 * n];
        shells.push((k, [s[0], s[1], s[2], s[3]]));
    }
    let tail_estimate = shells.last().map_or(0.0, |(k, zs)| {
        let c = (PI * *k as f64).powi(2);
        let drift: f64 = zs.iter().map(|z| z - c).sum::<f64>().abs();
        drift / (2.0 * PI * PI * *k as f64)
    });
    Ok(HadamardProduct { periodic, lead, shells, tail_estimate })
}

/// `D₊(λ) ≈ ((λ−λ₀,₁)(λ−λ₀,₂)/4) ∏_{n ≤ N} ∏_m (λ_{2n,m} − λ)/(2πn)²` times
/// the free tail. The sorted list (with multiplicity) is grouped as two
/// leading zeros followed by quadruples.
pub fn reconstruct_dplus(periodic: &[Eigenvalue], truncation: usize) -> Result<HadamardProduct> {
    hadamard(periodic, truncation, true)
}

/// `D₋(λ) ≈ 4 ∏_{n ≤ N} ∏_m (λ_{2n−1,m} − λ)/(π(2n−1))²` times the free tail.
pub fn reconstruct_dminus(antiperiodic: &[Eigenvalue], truncation: usize) -> Result<HadamardProduct> {
    hadamard(antiperiodic, truncation, false)
}

/// Direct and reconstructed values at one point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReconstructionRow {
    pub lambda: f64,
    pub d_plus: f64,
    pub d_plus_rec: f64,
    pub d_minus: f64,
    pub d_minus_rec: f64,
    pub mu1: f64,
    pub mu1_rec: f64,
    pub rho: f64,
    pub rho_rec: f64,
}

pub fn reconstruction_table(
    op: &HillOperator,
    dp: &HadamardProduct,
    dm: &HadamardProduct,
    grid: &[f64],
    exec: Execution,
) -> Result<Vec<ReconstructionRow>> {
    try_map(exec, grid, |&x| {
        let d = real_data(op, x)?;
        let l = C64::new(x, 0.0);
        let (p, m) = (dp.eval(l).re, dm.eval(l).re);
        let mu1 = (m - p) / 4.0;
        Ok(ReconstructionRow {
            lambda: x,
            d_plus: d.d_plus.re,
            d_plus_rec: p,
            d_minus: d.d_minus.re,
            d_minus_rec: m,
            mu1: d.mu1.re,
            mu1_rec: mu1,
            rho: d.rho.re,
            rho_rec: (mu1 - 1.0).powi(2) - p,
        })
    })
}

/// Zeros of the reconstructed `ρ = (μ₁ − 1)² − D₊` with `μ₁ = (D₋ − D₊)/4`.
pub fn reconstructed_resonances(dp: &HadamardProduct, dm: &HadamardProduct, window: (f64, f64), opts: &SpectrumOptions) -> Result<Vec<Root>> {
    let f = |z: C64| {
        let (p, m) = (dp.eval(z), dm.eval(z));
        let mu1 = (m - p) / 4.0;
        Ok(((mu1 - 1.0) * (mu1 - 1.0) - p, 1f64.max(mu1.norm_sqr())))
    };
    let mut out = Vec::new();
    for (a, b) in real_cells(window.0, window.1) {
        let h = (0.25 * (b - a)).max(0.5);
        out.extend(zeros_in(&f, &Contour::rect(a, b, -h, h), &opts.roots)?.into_iter().filter(|r| r.z.re >= window.0 && r.z.re <= window.1));
    }
    Ok(out)
}

/// Values of `Δ₁, Δ₂, ρ, D₊, D₋` on a grid for plotting.
pub fn sweep(op: &HillOperator, grid: &[f64], exec: Execution) -> Result<Vec<LyapunovData>> {
    try_map(exec, grid, |&x| real_data(op, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::{constant_resonances, delta_resonance_split, ConstantModel, DeltaModel, SplitKind};
    use crate::monodromy::PropagationConfig;
    use crate::potential::PotentialSpec;

    fn op(spec: &PotentialSpec) -> HillOperator {
        HillOperator::from_spec(spec, PropagationConfig::default()).with_cache()
    }

    #[test]
    fn free_single_band() {
        let o = op(&PotentialSpec::zero());
        let r = scan_bands(&o, (-1.0, 100.0), &SpectrumOptions::default()).unwrap();
        assert_eq!(r.bands.len(), 1);
        assert!(r.gaps.is_empty());
        assert!(r.bands[0].lo.abs() < 1e-8 && r.bands[0].hi == 100.0);
        assert_eq!(r.exterior.len(), 1);
    }

    #[test]
    fn constant_no_gaps() {
        let o = op(&PotentialSpec::constant(3.0));
        let r = scan_bands(&o, (-10.0, 300.0), &SpectrumOptions::default()).unwrap();
        assert_eq!(r.bands.len(), 1);
        assert!(r.gaps.is_empty());
        assert!((r.bands[0].lo + 3.0).abs() < 1e-8);
    }

    #[test]
    fn free_periodic_eigenvalues() {
        let o = op(&PotentialSpec::zero());
        let (p, _) = periodic_eigenvalues(&o, (-1.0, 200.0), &SpectrumOptions::default()).unwrap();
        let got: Vec<(f64, u32)> = p.iter().map(|e| (e.lambda, e.multiplicity)).collect();
        assert_eq!(got.len(), 3);
        assert_eq!(got[0].1, 2);
        assert!(got[0].0.abs() < 1e-6);
        for (n, g) in got.iter().enumerate().skip(1) {
            assert_eq!(g.1, 4);
            assert!((g.0 - (2.0 * PI * n as f64).powi(2)).abs() < 1e-4 * g.0);
        }
    }

    #[test]
    fn constant_eigenvalues_and_resonances_match_closed_form() {
        let a = 3.0;
        let o = op(&PotentialSpec::constant(a));
        let opts = SpectrumOptions::default();
        let model = constant_resonances(a, 6).unwrap();
        let (p, _) = periodic_eigenvalues(&o, (-5.0, 300.0), &opts).unwrap();
        let (q, _) = antiperiodic_eigenvalues(&o, (-5.0, 300.0), &opts).unwrap();
        let mut all: Vec<&Eigenvalue> = p.iter().chain(q.iter()).collect();
        all.sort_by(|x, y| x.lambda.total_cmp(&y.lambda));
        let expect: Vec<_> = model.eigenvalues.iter().filter(|z| z.lambda <= 300.0).collect();
        assert_eq!(all.len(), expect.len());
        for (g, e) in all.iter().zip(expect) {
            assert!((g.lambda - e.lambda).abs() < 1e-6 * e.lambda.abs().max(1.0));
            assert_eq!(g.multiplicity, e.multiplicity);
        }
        let r = real_resonances(&o, (0.0, 300.0), &opts).unwrap();
        let zs: Vec<_> = model.resonances.iter().filter(|z| z.lambda <= 300.0).collect();
        assert_eq!(r.len(), zs.len());
        for (g, e) in r.iter().zip(zs) {
            assert_eq!(g.multiplicity, 2);
            assert!((g.z.re - e.lambda).abs() < 1e-6 * e.lambda);
        }
        // z₁⁰ ≈ 10.0976
        assert!((r[0].z.re - 10.0976).abs() < 1e-4);
    }

    #[test]
    fn free_rho_is_identically_zero() {
        let o = op(&PotentialSpec::zero());
        let e = count_zeros(&o, Target::Rho, &Contour::circle(C64::new(0.0, 0.0), 50.0), &SpectrumOptions::default());
        assert!(matches!(e, Err(HillError::IdenticallyZero)));
    }

    #[test]
    fn counting_lemmas_on_models() {
        let opts = SpectrumOptions::default();
        let n = 3;
        let c = op(&PotentialSpec::constant(3.0));
        let disk = Contour::circle(C64::new(0.0, 0.0), PI * PI * (n as f64 + 0.5).powi(2));
        assert_eq!(count_zeros(&c, Target::Rho, &disk, &opts).unwrap().count, 2 * n);
        let f = op(&PotentialSpec::zero());
        let dp = Contour::circle(C64::new(0.0, 0.0), 4.0 * PI * PI * (n as f64 + 0.5).powi(2));
        let dm = Contour::circle(C64::new(0.0, 0.0), 4.0 * PI * PI * (n as f64).powi(2));
        assert_eq!(count_zeros(&f, Target::DPlus, &dp, &opts).unwrap().count, 4 * n + 2);
        assert_eq!(count_zeros(&f, Target::DMinus, &dm, &opts).unwrap().count, 4 * n);
    }

    #[test]
    fn delta_comb_gaps_classified() {
        let d = DeltaModel::new(10.0, 0.5);
        let o = op(&d.spec());
        let r = analyze_window(&o, (0.0, 150.0), &SpectrumOptions::default()).unwrap();
        assert!(!r.gaps.is_empty());
        assert!(r.gaps.iter().all(|g| g.kind != GapKind::Unclassified), "{:?}", r.gaps);
        let resonance: Vec<_> = r.gaps.iter().filter(|g| g.kind == GapKind::Resonance).collect();
        assert!(!resonance.is_empty());
        // every resonance gap sits on a pair from the closed form
        for g in resonance {
            let n = (1..6).find(|&n| {
                let s = delta_resonance_split(10.0, 0.5, n).unwrap();
                s.kind == SplitKind::RealPair && (s.minus.re - g.lo).abs() < 1e-6 * g.lo && (s.plus.re - g.hi).abs() < 1e-6 * g.hi
            });
            assert!(n.is_some(), "{g:?}");
        }
        for g in r.gaps.iter().filter(|g| g.kind == GapKind::Stable) {
            let (dl, dh) = (d.lyapunov(C64::new(g.lo, 0.0)), d.lyapunov(C64::new(g.hi, 0.0)));
            assert!(dl.d_plus.norm().min(dl.d_minus.norm()) < 1e-6 * dl.scale());
            assert!(dh.d_plus.norm().min(dh.d_minus.norm()) < 1e-6 * dh.scale());
        }
        assert_eq!(r.gaps.iter().map(|g| g.local_sources).filter(|s| s.contains(&EdgeSource::Unmatched)).count(), 0);
    }

    #[test]
    fn delta_comb_real_resonances_straddle() {
        let o = op(&PotentialSpec::delta_comb(3.0, 0.4));
        let r = real_resonances(&o, (0.0, 100.0), &SpectrumOptions::default()).unwrap();
        let m = ConstantModel::new(3.0);
        for n in 1..=3 {
            let z0 = m.z(n);
            let below = r.iter().filter(|x| x.z.re < z0 && x.z.re > z0 - 5.0).count();
            let above = r.iter().filter(|x| x.z.re > z0 && x.z.re < z0 + 5.0).count();
            assert_eq!((below, above), (1, 1), "n {n}");
        }
    }

    #[test]
    fn complex_pair_for_large_a() {
        let o = op(&PotentialSpec::delta_comb(25.0, 0.2));
        let rect = Contour::rect(0.0, 120.0, -10.0, 10.0);
        let r = complex_resonances(&o, &rect, &SpectrumOptions::default()).unwrap();
        let complex: Vec<_> = r.iter().filter(|x| !x.real).collect();
        assert_eq!(complex.len(), 2);
        assert_eq!(complex[0].z, complex[1].z.conj());
        let s = delta_resonance_split(25.0, 0.2, 1).unwrap();
        assert!((complex.iter().find(|x| x.z.im > 0.0).unwrap().z - s.plus).norm() < 1e-7);
    }

    #[test]
    fn sweep_is_monotone_on_bands() {
        let o = op(&PotentialSpec::delta_comb(10.0, 0.5));
        let s = branch_sweep(&o, (-12.0, 200.0), 60.0, Execution::Parallel).unwrap();
        assert!(monotonicity_violations(&s, 1e-3).is_empty());
        let c = op(&PotentialSpec::constant(3.0));
        let s = branch_sweep(&c, (-5.0, 200.0), 60.0, Execution::Parallel).unwrap();
        assert!(monotonicity_violations(&s, 1e-3).is_empty());
    }

    #[test]
    fn free_reconstruction() {
        let o = op(&PotentialSpec::zero());
        let opts = SpectrumOptions::default();
        let n = 8;
        let top = (2.0 * PI * n as f64 + 1.0).powi(2);
        let (p, _) = periodic_eigenvalues(&o, (-1.0, top), &opts).unwrap();
        let (q, _) = antiperiodic_eigenvalues(&o, (-1.0, top), &opts).unwrap();
        let dp = reconstruct_dplus(&p, n).unwrap();
        let dm = reconstruct_dminus(&q, n).unwrap();
        for x in [0.5, 5.0, 20.0, 45.0] {
            let l = C64::new(x, 0.0);
            let exact = 4.0 * (x.sqrt() / 2.0).sin().powi(4);
            assert!((dp.eval(l).re - exact).abs() < 1e-6 * exact.max(1e-3), "{x}");
            let exact_m = 4.0 * (x.sqrt() / 2.0).cos().powi(4);
            assert!((dm.eval(l).re - exact_m).abs() < 1e-6 * exact_m.max(1e-3), "{x}");
        }
    }

    #[test]
    fn constant_residuals_vanish() {
        let a = 3.0;
        let o = op(&PotentialSpec::constant(a));
        let opts = SpectrumOptions::default();
        let n_max = 5;
        let top = (PI * (n_max as f64 + 0.5)).powi(2);
        let (p, _) = periodic_eigenvalues(&o, (-10.0, top), &opts).unwrap();
        let (q, _) = antiperiodic_eigenvalues(&o, (-10.0, top), &opts).unwrap();
        let r = resonances_near_axis(&o, (0.0, top), &opts).unwrap();
        let res = asymptotic_residuals(o.potential(), &p, &q, &r, n_max).unwrap();
        for s in &res.shells {
            for e in s.eig {
                assert!(e.abs() < 1e-6, "{s:?}");
            }
            let b = a * a / (2.0 * PI * s.n as f64).powi(2);
            for z in s.res {
                assert!((z - b).norm() < 1e-6, "{s:?}");
            }
        }
    }
}
