//! Exactly solvable models: the free operator (`a = 0`), the constant
//! potential `aJ`, the δ-comb `aJ + γ δ_per J₁` (unit comb at the
//! half-integers) and the smoothed δ family.

use std::f64::consts::PI;

use nalgebra::Matrix4;
use serde::Serialize;

use crate::error::{HillError, Result};
use crate::lyapunov::LyapunovData;
use crate::potential::{NormalizedPotential, PotentialSpec};
use crate::special::{cos_sqrt, sinc_sqrt, sqrt_upper};
use crate::C64;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `−y″ + aJ y = λy`: two decoupled scalar channels with `η± = √(λ ∓ a)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantModel {
    pub a: f64,
}

impl ConstantModel {
    pub fn new(a: f64) -> Self {
        ConstantModel { a }
    }

    pub fn eta_plus(&self, lambda: C64) -> C64 {
        sqrt_upper(lambda - self.a)
    }

    pub fn eta_minus(&self, lambda: C64) -> C64 {
        sqrt_upper(lambda + self.a)
    }

    pub fn c_plus(&self, x: f64, lambda: C64) -> C64 {
        cos_sqrt(lambda - self.a, x)
    }

    pub fn c_minus(&self, x: f64, lambda: C64) -> C64 {
        cos_sqrt(lambda + self.a, x)
    }

    pub fn s_plus(&self, x: f64, lambda: C64) -> C64 {
        sinc_sqrt(lambda - self.a, x)
    }

    pub fn s_minus(&self, x: f64, lambda: C64) -> C64 {
        sinc_sqrt(lambda + self.a, x)
    }

    /// `μ_m⁰ = (c₊(m) + c₋(m))/2`.
    pub fn mu(&self, m: u32, lambda: C64) -> C64 {
        let x = m as f64;
        (self.c_plus(x, lambda) + self.c_minus(x, lambda)) * 0.5
    }

    pub fn rho(&self, lambda: C64) -> C64 {
        let f = self.c_plus(1.0, lambda) - self.c_minus(1.0, lambda);
        f * f * 0.25
    }

    pub fn d_plus(&self, lambda: C64) -> C64 {
        (c(1.0) - self.c_plus(1.0, lambda)) * (c(1.0) - self.c_minus(1.0, lambda))
    }

    pub fn d_minus(&self, lambda: C64) -> C64 {
        (c(1.0) + self.c_plus(1.0, lambda)) * (c(1.0) + self.c_minus(1.0, lambda))
    }

    /// Channel values `Δ₍₁₎⁰ = c₊(1)`, `Δ₍₂₎⁰ = c₋(1)` in the frame of `aJ`.
    pub fn channels(&self, lambda: C64) -> (C64, C64) {
        (self.c_plus(1.0, lambda), self.c_minus(1.0, lambda))
    }

    pub fn lyapunov(&self, lambda: C64) -> LyapunovData {
        let (d1, d2) = self.channels(lambda);
        LyapunovData::from_channels(lambda, d1, d2)
    }

    /// Monodromy in the frame of `aJ` (first channel carries `+a`).
    pub fn monodromy(&self, lambda: C64) -> Matrix4<C64> {
        self.propagator(1.0, lambda)
    }

    fn propagator(&self, x: f64, lambda: C64) -> Matrix4<C64> {
        let mut m = Matrix4::zeros();
        for (k, w) in [(0, lambda - self.a), (1, lambda + self.a)] {
            let (cc, ss) = (cos_sqrt(w, x), sinc_sqrt(w, x));
            m[(k, k)] = cc;
            m[(k, k + 2)] = ss;
            m[(k + 2, k)] = -w * ss;
            m[(k + 2, k + 2)] = cc;
        }
        m
    }

    /// `a/2π²` with its integer part `n_a`; `n_a` is undefined when the
    /// ratio is an integer.
    pub fn n_a(&self) -> Result<usize> {
        let r = self.a.abs() / (2.0 * PI * PI);
        if self.a != 0.0 && (r - r.round()).abs() < 1e-12 {
            return Err(HillError::InvalidParameter(format!("|a|/(2 pi^2) = {r} is an integer; n_a undefined")));
        }
        Ok(r.floor() as usize)
    }

    /// Double zero `z_n⁰ = (πn)² + a²/(2πn)²` of `ρ⁰`, `n ≥ 1`.
    pub fn z(&self, n: usize) -> f64 {
        let p = PI * n as f64;
        p * p + self.a * self.a / (4.0 * p * p)
    }

    /// `(πn)² + V_{m0}` with the normalized means `V₁₀ = −|a| ≤ V₂₀ = |a|`.
    pub fn lambda_mn(&self, m: u32, n: usize) -> f64 {
        let p = PI * n as f64;
        let v = if m == 1 { -self.a.abs() } else { self.a.abs() };
        p * p + v
    }

    /// True when `z_n⁰` splits into a complex pair under a small off-diagonal
    /// perturbation: `sin η₊ sin η₋ > 0` at `z_n⁰`, equivalently
    /// `n² < |a|/2π²`.
    pub fn splits_complex(&self, n: usize) -> bool {
        let nn = (n * n) as f64;
        nn < self.a.abs() / (2.0 * PI * PI)
    }
}

pub fn constant_lyapunov(a: f64, lambda: C64) -> LyapunovData {
    ConstantModel::new(a).lyapunov(lambda)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelZero {
    pub n: usize,
    /// Channel index for eigenvalues, `0` for resonances.
    pub m: u32,
    pub lambda: f64,
    pub multiplicity: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderingFacts {
    /// `z₁⁰ > … > z_{n_a}⁰`.
    pub decreasing_through_n_a: bool,
    /// `z_{n_a+1}⁰ < z_{n_a+2}⁰ < …` up to `n_max`.
    pub increasing_after_n_a: bool,
    /// Index of the smallest `z_n⁰`.
    pub argmin: usize,
    /// Largest `n` with `z_{n}⁰ < z_{n−1}⁰` (`0` if none).
    pub last_decrease: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantResonances {
    pub a: f64,
    pub n_a: usize,
    /// `z_n⁰`, `n = 1..=n_max`, each double.
    pub resonances: Vec<ModelZero>,
    /// Zeros of `D±⁰` for `n = 0..=n_max`, merged where channels coincide;
    /// even `n` periodic, odd `n` anti-periodic.
    pub eigenvalues: Vec<ModelZero>,
    /// `2a/π² ∉ ℕ`: the two channels' eigenvalues are distinct.
    pub channels_distinct: bool,
    pub ordering: OrderingFacts,
}

pub fn constant_resonances(a: f64, n_max: usize) -> Result<ConstantResonances> {
    let model = ConstantModel::new(a);
    let n_a = model.n_a()?;
    let resonances: Vec<ModelZero> = (1..=n_max).map(|n| ModelZero { n, m: 0, lambda: model.z(n), multiplicity: 2 }).collect();
    let z: Vec<f64> = resonances.iter().map(|r| r.lambda).collect();

    let decreasing_through_n_a = (1..n_a.min(n_max)).all(|k| z[k] < z[k - 1]);
    let increasing_after_n_a = (n_a + 1..n_max).all(|k| z[k] > z[k - 1]);
    let argmin = z.iter().enumerate().fold((0, f64::INFINITY), |b, (i, &v)| if v < b.1 { (i + 1, v) } else { b }).0;
    let last_decrease = (1..n_max).filter(|&k| z[k] < z[k - 1]).map(|k| k + 1).max().unwrap_or(0);

    let mut eigenvalues: Vec<ModelZero> = Vec::new();
    for n in 0..=n_max {
        for m in [1, 2] {
            let mult = if n == 0 { 1 } else { 2 };
            let lam = model.lambda_mn(m, n);
            if a == 0.0 && m == 2 {
                eigenvalues.last_mut().unwrap().multiplicity += mult;
                continue;
            }
            eigenvalues.push(ModelZero { n, m, lambda: lam, multiplicity: mult });
        }
    }
    let r = 2.0 * a.abs() / (PI * PI);
    let channels_distinct = a == 0.0 || (r - r.round()).abs() > 1e-12;
    eigenvalues.sort_by(|x, y| x.lambda.total_cmp(&y.lambda));
    Ok(ConstantResonances {
        a,
        n_a,
        resonances,
        eigenvalues,
        channels_distinct,
        ordering: OrderingFacts { decreasing_through_n_a, increasing_after_n_a, argmin, last_decrease },
    })
}

/// `aJ + γ δ_per J₁` with the comb at the half-integers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaModel {
    pub a: f64,
    pub gamma: f64,
}

impl DeltaModel {
    pub fn new(a: f64, gamma: f64) -> Self {
        DeltaModel { a, gamma }
    }

    pub fn base(&self) -> ConstantModel {
        ConstantModel::new(self.a)
    }

    pub fn spec(&self) -> PotentialSpec {
        PotentialSpec::delta_comb(self.a, self.gamma)
    }

    /// `h = (γ²/4) s₊(1) s₋(1)`.
    pub fn h(&self, lambda: C64) -> C64 {
        let b = self.base();
        b.s_plus(1.0, lambda) * b.s_minus(1.0, lambda) * (0.25 * self.gamma * self.gamma)
    }

    pub fn mu1(&self, lambda: C64) -> C64 {
        self.base().mu(1, lambda)
    }

    pub fn mu2(&self, lambda: C64) -> C64 {
        self.base().mu(2, lambda) + self.h(lambda) * 2.0
    }

    pub fn rho(&self, lambda: C64) -> C64 {
        self.base().rho(lambda) + self.h(lambda)
    }

    pub fn d_plus(&self, lambda: C64) -> C64 {
        self.base().d_plus(lambda) - self.h(lambda)
    }

    pub fn d_minus(&self, lambda: C64) -> C64 {
        self.base().d_minus(lambda) - self.h(lambda)
    }

    pub fn lyapunov(&self, lambda: C64) -> LyapunovData {
        LyapunovData::from_parts(
            lambda,
            self.mu1(lambda),
            self.mu2(lambda),
            self.rho(lambda),
            self.d_plus(lambda),
            self.d_minus(lambda),
        )
    }

    /// Jump of `(y, y′)` across a comb point: `y′ ↦ y′ + γJ₁y`.
    pub fn jump(&self) -> Matrix4<C64> {
        let mut m = Matrix4::identity();
        m[(2, 1)] = c(self.gamma);
        m[(3, 0)] = c(self.gamma);
        m
    }

    /// Closed-form monodromy in the frame of `aJ`, blocks `θ, φ, θ′, φ′`.
    pub fn monodromy(&self, lambda: C64) -> Matrix4<C64> {
        let b = self.base();
        let g = self.gamma;
        let (cp, cm) = (b.c_plus(0.5, lambda), b.c_minus(0.5, lambda));
        let (sp, sm) = (b.s_plus(0.5, lambda), b.s_minus(0.5, lambda));
        let (cp1, cm1) = (b.c_plus(1.0, lambda), b.c_minus(1.0, lambda));
        let (sp1, sm1) = (b.s_plus(1.0, lambda), b.s_minus(1.0, lambda));
        let (wp, wm) = (lambda - self.a, lambda + self.a);
        Matrix4::new(
            cp1, sp * cm * g, sp1, sp * sm * g,
            sm * cp * g, cm1, sm * sp * g, sm1,
            -wp * sp1, cp * cm * g, cp1, cp * sm * g,
            cm * cp * g, -wm * sm1, cm * sp * g, cm1,
        )
    }
}

pub fn delta_lyapunov(a: f64, gamma: f64, lambda: C64) -> LyapunovData {
    DeltaModel::new(a, gamma).lyapunov(lambda)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    RealPair,
    ComplexPair,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResonanceSplit {
    pub n: usize,
    pub z0: f64,
    pub kind: SplitKind,
    /// Real pair: the smaller zero. Complex pair: the zero in `ℂ₋`.
    pub minus: C64,
    pub plus: C64,
    pub seeds: [C64; 2],
}

impl ResonanceSplit {
    pub fn width(&self) -> f64 {
        (self.plus - self.minus).norm()
    }
}

fn newton<F: Fn(C64) -> C64>(f: F, mut z: C64, max_iter: usize) -> Option<C64> {
    for _ in 0..max_iter {
        let fz = f(z);
        if fz.norm() == 0.0 {
            return Some(z);
        }
        let dh = 1e-6 * z.norm().max(1.0);
        let df = (f(z + dh) - f(z - dh)) / (2.0 * dh);
        if df.norm() == 0.0 {
            return None;
        }
        let step = fz / df;
        z -= step;
        if step.norm() <= 1e-14 * z.norm().max(1.0) {
            return Some(z);
        }
    }
    None
}

/// The two zeros of `ρ^γ = ρ⁰ + h` that emerge from the double zero
/// `z_n⁰`. Seeds solve `f = ±2√(−h)` to first order with
/// `f = c₊ − c₋`, then Newton runs on the exact `ρ⁰ + h`.
pub fn delta_resonance_split(a: f64, gamma: f64, n: usize) -> Result<ResonanceSplit> {
    if n == 0 {
        return Err(HillError::InvalidParameter("resonance index starts at 1".into()));
    }
    let model = DeltaModel::new(a, gamma);
    let base = model.base();
    base.n_a()?;
    let z0 = base.z(n);
    let lam0 = c(z0);
    let h0 = model.h(lam0);
    // f′ = (s₋ − s₊)/2
    let df = (base.s_minus(1.0, lam0) - base.s_plus(1.0, lam0)) * 0.5;
    if df.norm() == 0.0 {
        return Err(HillError::RootFinding(format!("degenerate slope at z_{n}")));
    }
    let d = (-h0).sqrt() * 2.0 / df;
    let seeds = [lam0 - d, lam0 + d];
    let complex = h0.re > 0.0;
    let f = |z: C64| model.rho(z);
    let fail = || HillError::RootFinding(format!("Newton failed near z_{n} = {z0} for gamma = {gamma}"));
    let width_floor = 1e-3 * d.norm();
    if complex {
        let seed = if seeds[0].im > 0.0 { seeds[0] } else { seeds[1] };
        let z = newton(f, seed, 80).ok_or_else(fail)?;
        if z.im.abs() <= width_floor {
            return Err(fail());
        }
        let plus = C64::new(z.re, z.im.abs());
        Ok(ResonanceSplit { n, z0, kind: SplitKind::ComplexPair, minus: plus.conj(), plus, seeds })
    } else {
        let mut zs = [newton(f, seeds[0], 80).ok_or_else(fail)?, newton(f, seeds[1], 80).ok_or_else(fail)?];
        for z in zs.iter_mut() {
            z.im = 0.0;
        }
        zs.sort_by(|x, y| x.re.total_cmp(&y.re));
        if zs[1].re - zs[0].re <= width_floor {
            return Err(fail());
        }
        Ok(ResonanceSplit { n, z0, kind: SplitKind::RealPair, minus: zs[0], plus: zs[1], seeds })
    }
}

/// Least-squares slope of `log width` against `log γ`.
pub fn split_width_exponent(a: f64, n: usize, gammas: &[f64]) -> Result<f64> {
    let pts = gammas
        .iter()
        .map(|&g| delta_resonance_split(a, g, n).map(|s| (g.ln(), s.width().ln())))
        .collect::<Result<Vec<_>>>()?;
    Ok(loglog_slope(&pts))
}

pub fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// `aJ + γ v_ν J₁` with the normalized bump `v_ν` centred at `½`.
pub fn smoothed_delta_family(a: f64, gamma: f64, nu: f64) -> Result<NormalizedPotential> {
    Ok(NormalizedPotential::new(&PotentialSpec::smoothed_delta(a, gamma, nu)?))
}
