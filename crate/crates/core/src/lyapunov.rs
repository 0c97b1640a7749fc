//! Lyapunov data: `μ₁`, `μ₂`, `ρ`, the branch pair `Δ₁,₂ = μ₁ ± √ρ`, `D±`
//! and the four multipliers, plus branch continuation of `√ρ`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::error::{HillError, Result};
use crate::monodromy::{det4, hadamard_scale, PropagationConfig, Propagator, StateMatrix};
use crate::potential::{NormalizedPotential, PotentialSpec};
use crate::special::{cos_sqrt, sinc_sqrt};
use crate::C64;

/// Relative size of `ρ` below which a point is reported as a branch point.
pub const BRANCH_POINT_EPS: f64 = 1e-13;

/// How `√ρ` (hence the order of `Δ₁`, `Δ₂`) was fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchLabel {
    /// Real `λ`, `ρ ≥ 0`: positive root, `Δ₁ ≥ Δ₂`.
    RealOrdered,
    /// Principal square root; no sheet meaning.
    Principal,
    /// Split system: `√ρ = (Δ₍₁₎ − Δ₍₂₎)/2` from the two scalar channels.
    Channel,
    /// Continued along a path from an anchor.
    Continued,
    /// `ρ = 0` to rounding; `Δ₁ = Δ₂ = μ₁`, no sheet.
    BranchPoint,
}

/// Which entire function a root finder or contour count targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Rho,
    DPlus,
    DMinus,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Rho => "rho",
            Target::DPlus => "d_plus",
            Target::DMinus => "d_minus",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovData {
    pub lambda: C64,
    pub mu1: C64,
    pub mu2: C64,
    pub rho: C64,
    pub sqrt_rho: C64,
    pub delta1: C64,
    pub delta2: C64,
    pub d_plus: C64,
    pub d_minus: C64,
    /// `[τ₁, τ₁⁻¹, τ₂, τ₂⁻¹]`.
    pub multipliers: [C64; 4],
    pub label: BranchLabel,
}

fn realify(z: C64, real: bool) -> C64 {
    if real {
        C64::new(z.re, 0.0)
    } else {
        z
    }
}

/// Roots of `τ² − 2Δτ + 1`, larger modulus first.
fn quadratic_pair(delta: C64) -> (C64, C64) {
    let r = (delta * delta - 1.0).sqrt();
    let (a, b) = (delta + r, delta - r);
    let big = if a.norm() >= b.norm() { a } else { b };
    if big.norm() == 0.0 {
        return (C64::new(0.0, 1.0), C64::new(0.0, -1.0));
    }
    (big, big.inv())
}

impl LyapunovData {
    fn complete(lambda: C64, mu1: C64, mu2: C64, rho: C64, sqrt_rho: C64, d_plus: C64, d_minus: C64, label: BranchLabel) -> Self {
        let delta1 = mu1 + sqrt_rho;
        let delta2 = mu1 - sqrt_rho;
        let mut data = LyapunovData {
            lambda,
            mu1,
            mu2,
            rho,
            sqrt_rho,
            delta1,
            delta2,
            d_plus,
            d_minus,
            multipliers: [C64::new(0.0, 0.0); 4],
            label,
        };
        let t1 = data.newton_polish(quadratic_pair(delta1).0);
        let t2 = data.newton_polish(quadratic_pair(delta2).0);
        data.multipliers = [t1, t1.inv(), t2, t2.inv()];
        data
    }

    /// Generic assembly from the two traces.
    pub fn from_traces(lambda: C64, mu1: C64, mu2: C64) -> Self {
        let real = lambda.im == 0.0;
        let (mu1, mu2) = (realify(mu1, real), realify(mu2, real));
        let rho = realify((mu2 + 1.0) * 0.5 - mu1 * mu1, real);
        let d_plus = (mu1 - 1.0) * (mu1 - 1.0) - rho;
        let d_minus = (mu1 + 1.0) * (mu1 + 1.0) - rho;
        Self::from_parts(lambda, mu1, mu2, rho, d_plus, d_minus)
    }

    /// Assembly from independently evaluated `μ₁, μ₂, ρ, D±` (closed forms
    /// that avoid the cancellation in `(μ₂+1)/2 − μ₁²`).
    pub fn from_parts(lambda: C64, mu1: C64, mu2: C64, rho: C64, d_plus: C64, d_minus: C64) -> Self {
        let real = lambda.im == 0.0;
        let (mu1, mu2, rho) = (realify(mu1, real), realify(mu2, real), realify(rho, real));
        let (d_plus, d_minus) = (realify(d_plus, real), realify(d_minus, real));
        let scale = 1f64.max(mu1.norm_sqr()).max(mu2.norm());
        let (sqrt_rho, label) = if rho.norm() <= BRANCH_POINT_EPS * scale {
            (C64::new(0.0, 0.0), BranchLabel::BranchPoint)
        } else if real && rho.re > 0.0 {
            (C64::new(rho.re.sqrt(), 0.0), BranchLabel::RealOrdered)
        } else {
            (rho.sqrt(), BranchLabel::Principal)
        };
        Self::complete(lambda, mu1, mu2, rho, sqrt_rho, d_plus, d_minus, label)
    }

    /// Split system with scalar discriminants `Δ₍₁₎`, `Δ₍₂₎`; every derived
    /// quantity is a product or difference of channel values, so there is no
    /// cancellation.
    pub fn from_channels(lambda: C64, d1: C64, d2: C64) -> Self {
        let real = lambda.im == 0.0;
        let (mut d1, mut d2) = (realify(d1, real), realify(d2, real));
        let mut label = BranchLabel::Channel;
        if real {
            if d1.re < d2.re {
                std::mem::swap(&mut d1, &mut d2);
            }
            label = BranchLabel::RealOrdered;
        }
        let mu1 = (d1 + d2) * 0.5;
        let mu2 = d1 * d1 + d2 * d2 - 1.0;
        let sqrt_rho = (d1 - d2) * 0.5;
        let rho = sqrt_rho * sqrt_rho;
        let d_plus = (C64::new(1.0, 0.0) - d1) * (C64::new(1.0, 0.0) - d2);
        let d_minus = (d1 + 1.0) * (d2 + 1.0);
        if sqrt_rho.norm() == 0.0 {
            label = BranchLabel::BranchPoint;
        }
        Self::complete(lambda, mu1, mu2, rho, sqrt_rho, d_plus, d_minus, label)
    }

    /// Same data with `√ρ` replaced by `s` (a continued value).
    pub fn relabeled(&self, s: C64, label: BranchLabel) -> Self {
        Self::complete(self.lambda, self.mu1, self.mu2, self.rho, s, self.d_plus, self.d_minus, label)
    }

    /// Floating-point magnitude of the data, `max(1, |μ₁|², |μ₂|)`; the
    /// natural unit for absolute errors in `ρ`, `D±` and the identities.
    pub fn scale(&self) -> f64 {
        1f64.max(self.mu1.norm_sqr()).max(self.mu2.norm())
    }

    pub fn is_branch_point(&self) -> bool {
        self.label == BranchLabel::BranchPoint
    }

    pub fn value(&self, t: Target) -> C64 {
        match t {
            Target::Rho => self.rho,
            Target::DPlus => self.d_plus,
            Target::DMinus => self.d_minus,
        }
    }

    /// Characteristic quartic `τ⁴ − 4μ₁τ³ + 2(4μ₁² − μ₂)τ² − 4μ₁τ + 1`.
    pub fn quartic(&self, t: C64) -> C64 {
        let m1 = self.mu1;
        let c2 = (m1 * m1 * 4.0 - self.mu2) * 2.0;
        (((t - m1 * 4.0) * t + c2) * t - m1 * 4.0) * t + 1.0
    }

    /// `Σ |coefficient| |τ|^k`, the rounding scale of [`quartic`](Self::quartic).
    pub fn quartic_scale(&self, t: C64) -> f64 {
        let a = t.norm();
        let m1 = self.mu1.norm();
        let c2 = 2.0 * (4.0 * m1 * m1 + self.mu2.norm());
        a.powi(4) + 4.0 * m1 * a.powi(3) + c2 * a * a + 4.0 * m1 * a + 1.0
    }

    fn newton_polish(&self, t: C64) -> C64 {
        let p = self.quartic(t);
        let m1 = self.mu1;
        let c2 = (m1 * m1 * 4.0 - self.mu2) * 2.0;
        let dp = ((t * 4.0 - m1 * 12.0) * t + c2 * 2.0) * t - m1 * 4.0;
        if dp.norm() == 0.0 {
            return t;
        }
        let step = p / dp;
        if step.norm() > 1e-6 * t.norm().max(1.0) {
            return t;
        }
        let cand = t - step;
        if self.quartic(cand).norm() < p.norm() {
            cand
        } else {
            t
        }
    }
}

/// `ρ₀(λ) = c₀ sin√λ / (2√λ)`, equal to `c₀/2` at `λ = 0`.
pub fn rho0(lambda: C64, c0: f64) -> C64 {
    sinc_sqrt(lambda, 1.0) * (0.5 * c0)
}

/// Two-term model `cos√λ + V_{m0} sin√λ / (2√λ)` of `Δ_m`.
pub fn asymptotic_delta(lambda: C64, v_m0: f64) -> C64 {
    cos_sqrt(lambda, 1.0) + sinc_sqrt(lambda, 1.0) * (0.5 * v_m0)
}

/// Anchor and path for continuing `√ρ`.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchContext {
    pub anchor_lambda: C64,
    /// `√ρ` at the anchor, sign fixed there.
    pub anchor_value: C64,
    /// `+1` when the anchor value is the principal root, `−1` otherwise.
    pub anchor_sign: f64,
    /// Polyline vertices between the anchor and the evaluation point.
    pub waypoints: Vec<C64>,
    /// Relative floor on `|ρ|` along the path.
    pub floor: f64,
}

impl BranchContext {
    pub fn with_waypoints(mut self, waypoints: Vec<C64>) -> Self {
        self.waypoints = waypoints;
        self
    }
}

/// Evaluation of the spectral functions of one potential.
#[derive(Debug, Clone)]
pub struct HillOperator {
    potential: Arc<NormalizedPotential>,
    propagator: Arc<Propagator>,
    generic: bool,
    cache: Option<Arc<Mutex<HashMap<(u64, u64), LyapunovData>>>>,
}

impl HillOperator {
    pub fn new(potential: NormalizedPotential, config: PropagationConfig) -> Self {
        let potential = Arc::new(potential);
        let propagator = Arc::new(Propagator::new(potential.clone(), config));
        HillOperator { potential, propagator, generic: false, cache: None }
    }

    /// Memoize [`lyapunov_at`](Self::lyapunov_at) by the exact bits of `λ`,
    /// so searches for `ρ`, `D₊` and `D₋` on the same nodes share work.
    pub fn with_cache(mut self) -> Self {
        self.cache = Some(Arc::new(Mutex::new(HashMap::new())));
        self
    }

    pub fn cache_len(&self) -> usize {
        self.cache.as_ref().map_or(0, |c| c.lock().unwrap().len())
    }

    /// Always use the trace formulas, even for split systems.
    pub fn with_generic_traces(mut self) -> Self {
        self.generic = true;
        self
    }

    fn split(&self) -> bool {
        self.potential.is_diagonal() && !self.generic
    }

    pub fn from_spec(spec: &PotentialSpec, config: PropagationConfig) -> Self {
        Self::new(NormalizedPotential::new(spec), config)
    }

    pub fn potential(&self) -> &NormalizedPotential {
        &self.potential
    }

    pub fn config(&self) -> &PropagationConfig {
        self.propagator.config()
    }

    pub fn monodromy(&self, lambda: C64) -> Result<StateMatrix> {
        self.propagator.monodromy(lambda)
    }

    pub fn propagate(&self, lambda: C64, x_end: f64) -> Result<StateMatrix> {
        self.propagator.propagate(lambda, x_end)
    }

    /// All Lyapunov data at `λ`. Split systems use the channel formulas.
    pub fn lyapunov_at(&self, lambda: C64) -> Result<LyapunovData> {
        let key = (lambda.re.to_bits(), lambda.im.to_bits());
        if let Some(c) = &self.cache {
            if let Some(d) = c.lock().unwrap().get(&key) {
                return Ok(*d);
            }
        }
        let m = self.monodromy(lambda)?;
        let d = if self.generic { lyapunov_from_traces(&m) } else { lyapunov_from_monodromy(&self.potential, &m) };
        if let Some(c) = &self.cache {
            c.lock().unwrap().insert(key, d);
        }
        Ok(d)
    }

    pub fn eval(&self, target: Target, lambda: C64) -> Result<C64> {
        Ok(self.lyapunov_at(lambda)?.value(target))
    }

    /// `det(M ∓ I)/4` straight from the monodromy, as a cross-check of the
    /// trace formulas. Returns `(D₊, D₋, rounding scale)`.
    pub fn d_pm_direct(&self, lambda: C64) -> Result<(C64, C64, f64)> {
        let m = self.monodromy(lambda)?.entries;
        let id = nalgebra::Matrix4::<C64>::identity();
        let (a, b) = (m - id, m + id);
        let scale = hadamard_scale(&a).max(hadamard_scale(&b)) / 4.0;
        Ok((det4(&a) / 4.0, det4(&b) / 4.0, scale))
    }

    /// Anchor in the high-energy region at `λ = (π(n + ½))²`, the first
    /// `n ≥ n_start` where the sign of `√ρ` agreeing with `ρ₀` is clear.
    pub fn asymptotic_anchor(&self, n_start: usize) -> Result<BranchContext> {
        let c0 = self.potential.c0;
        if c0 == 0.0 {
            return Err(HillError::NoAnchor(
                "c0 = 0: the high-energy comparison function vanishes; use a real-axis anchor".into(),
            ));
        }
        for n in n_start..n_start + 64 {
            let lam = C64::new((PI * (n as f64 + 0.5)).powi(2), 0.0);
            let d = self.lyapunov_at(lam)?;
            let r0 = rho0(lam, c0);
            let s = self.sqrt_rho_raw(&d);
            let val = if (s - r0).norm() <= (s + r0).norm() { s } else { -s };
            if (val - r0).norm() <= 0.5 * r0.norm() {
                let floor = 1e-10;
                let principal = d.rho.sqrt();
                let anchor_sign = if (val - principal).norm() <= (val + principal).norm() { 1.0 } else { -1.0 };
                return Ok(BranchContext { anchor_lambda: lam, anchor_value: val, anchor_sign, waypoints: Vec::new(), floor });
            }
        }
        Err(HillError::NoAnchor(format!("sign of sqrt(rho) not resolved for n in [{n_start}, {})", n_start + 64)))
    }

    /// Anchor on the real axis at `λ₀` with `ρ(λ₀) > 0`, positive root.
    pub fn real_anchor(&self, lambda0: f64) -> Result<BranchContext> {
        let lam = C64::new(lambda0, 0.0);
        let d = self.lyapunov_at(lam)?;
        if !(d.rho.re > 0.0) {
            return Err(HillError::NoAnchor(format!("rho({lambda0}) = {} is not positive", d.rho.re)));
        }
        Ok(BranchContext {
            anchor_lambda: lam,
            anchor_value: C64::new(d.rho.re.sqrt(), 0.0),
            anchor_sign: 1.0,
            waypoints: Vec::new(),
            floor: 1e-10,
        })
    }

    fn sqrt_rho_raw(&self, d: &LyapunovData) -> C64 {
        if self.split() {
            d.sqrt_rho
        } else {
            d.rho.sqrt()
        }
    }

    /// `√ρ(λ)` continued from the anchor along
    /// `anchor → waypoints → λ`. Each step keeps `|ρ_new/ρ_old − 1| < ½`
    /// (so `|Δ arg ρ| < π/6`) and picks the root nearest the previous value.
    pub fn branch_sqrt_rho(&self, lambda: C64, ctx: &BranchContext) -> Result<C64> {
        if self.split() {
            // entire: (Δ₍₁₎ − Δ₍₂₎)/2 in channel order
            let m = self.monodromy(lambda)?;
            let (d1, d2) = channel_discriminants(&m);
            return Ok((d1 - d2) * 0.5);
        }
        let mut verts = vec![ctx.anchor_lambda];
        verts.extend(ctx.waypoints.iter().copied());
        verts.push(lambda);
        let mut value = ctx.anchor_value;
        let mut rho_prev = value * value;
        for w in verts.windows(2) {
            let (p, q) = (w[0], w[1]);
            let mut t: f64 = 0.0;
            let mut dt: f64 = 1.0 / 16.0;
            while t < 1.0 {
                let tn = (t + dt).min(1.0);
                let lam = p + (q - p) * tn;
                let d = self.lyapunov_at(lam)?;
                if d.rho.norm() <= ctx.floor * d.scale() {
                    return Err(HillError::BranchPointOnPath(lam));
                }
                if (d.rho / rho_prev - 1.0).norm() >= 0.5 {
                    dt *= 0.5;
                    if dt < 1e-9 {
                        return Err(HillError::BranchPointOnPath(lam));
                    }
                    continue;
                }
                let s = d.rho.sqrt();
                value = if (s - value).norm() <= (s + value).norm() { s } else { -s };
                rho_prev = d.rho;
                t = tn;
                dt = (dt * 1.5).min(0.25);
            }
        }
        Ok(value)
    }

    /// Lyapunov data with `√ρ` continued along the context path.
    pub fn lyapunov_continued(&self, lambda: C64, ctx: &BranchContext) -> Result<LyapunovData> {
        let d = self.lyapunov_at(lambda)?;
        let s = self.branch_sqrt_rho(lambda, ctx)?;
        Ok(d.relabeled(s, BranchLabel::Continued))
    }
}

/// `Δ₍ₘ₎ = (θ_mm + φ′_mm)/2` of a split monodromy.
pub fn channel_discriminants(m: &StateMatrix) -> (C64, C64) {
    let e = &m.entries;
    ((e[(0, 0)] + e[(2, 2)]) * 0.5, (e[(1, 1)] + e[(3, 3)]) * 0.5)
}

/// Lyapunov data for a precomputed monodromy.
pub fn lyapunov_from_monodromy(pot: &NormalizedPotential, m: &StateMatrix) -> LyapunovData {
    if pot.is_diagonal() {
        let (d1, d2) = channel_discriminants(m);
        LyapunovData::from_channels(m.lambda, d1, d2)
    } else {
        lyapunov_from_traces(m)
    }
}

/// Trace formulas regardless of structure.
pub fn lyapunov_from_traces(m: &StateMatrix) -> LyapunovData {
    let mu1 = m.trace() / 4.0;
    let mu2 = (m.entries * m.entries).trace() / 4.0;
    LyapunovData::from_traces(m.lambda, mu1, mu2)
}

/// One-shot convenience wrapper.
pub fn lyapunov_at(potential: &NormalizedPotential, lambda: C64) -> Result<LyapunovData> {
    HillOperator::new(potential.clone(), PropagationConfig::default()).lyapunov_at(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{FourierSeries, Harmonic};
    use proptest::prelude::*;

    fn op(spec: &PotentialSpec) -> HillOperator {
        HillOperator::from_spec(spec, PropagationConfig::default())
    }

    fn smooth() -> PotentialSpec {
        PotentialSpec::fourier(FourierSeries {
            v1: vec![Harmonic { k: 0, cos: -1.0, sin: 0.0 }, Harmonic { k: 1, cos: 0.5, sin: 0.2 }],
            v2: vec![Harmonic { k: 0, cos: 1.5, sin: 0.0 }, Harmonic { k: 2, cos: -0.3, sin: 0.4 }],
            v3: vec![Harmonic { k: 1, cos: 0.4, sin: 0.0 }, Harmonic { k: 3, cos: 0.0, sin: 0.2 }],
        })
    }

    fn check_identities(d: &LyapunovData, tol: f64) {
        let s = d.scale();
        let one = C64::new(1.0, 0.0);
        assert!((d.rho - ((d.mu2 + 1.0) * 0.5 - d.mu1 * d.mu1)).norm() <= tol * s);
        assert!((d.delta1 - d.mu1 - d.sqrt_rho).norm() <= tol * s);
        assert!((d.d_plus - d.d_minus + d.mu1 * 4.0).norm() <= tol * s);
        assert!((d.delta1 * d.delta1 + d.delta2 * d.delta2 - (one + d.mu2)).norm() <= tol * s);
        assert!((d.delta1 * d.delta2 - (d.mu1 * d.mu1 * 2.0 - (d.mu2 + 1.0) * 0.5)).norm() <= tol * s);
        let prod = d.multipliers.iter().fold(one, |a, t| a * t);
        assert!((prod - one).norm() <= tol);
        for t in d.multipliers {
            assert!(d.quartic(t).norm() <= 1e-8 * d.quartic_scale(t), "quartic residual at {t}");
        }
        for (k, dm) in [(0, d.delta1), (2, d.delta2)] {
            let (t, ti) = (d.multipliers[k], d.multipliers[k + 1]);
            assert!((t * ti - one).norm() <= tol);
            assert!((t + ti - dm * 2.0).norm() <= 1e-8 * (t.norm() + 1.0));
        }
    }

    #[test]
    fn free_examples() {
        let o = op(&PotentialSpec::zero());
        for &lam in &[C64::new(7.0, 0.0), C64::new(-3.0, 2.0), C64::new(100.0, -20.0)] {
            let d = o.lyapunov_at(lam).unwrap();
            let c = cos_sqrt(lam, 1.0);
            assert!((d.mu1 - c).norm() < 1e-14 * c.norm().max(1.0));
            assert_eq!(d.rho, C64::new(0.0, 0.0));
            assert!(d.is_branch_point());
            assert!((d.delta1 - c).norm() < 1e-14 * c.norm().max(1.0));
        }
    }

    #[test]
    fn constant_examples() {
        let a = 3.0;
        let o = op(&PotentialSpec::constant(a));
        for &lam in &[C64::new(12.0, 0.0), C64::new(-20.0, 5.0), C64::new(250.0, 80.0)] {
            let d = o.lyapunov_at(lam).unwrap();
            let (cp, cm) = (cos_sqrt(lam - a, 1.0), cos_sqrt(lam + a, 1.0));
            let s = d.scale();
            assert!((d.mu1 - (cp + cm) * 0.5).norm() < 1e-13 * s);
            assert!((d.rho - (cp - cm) * (cp - cm) * 0.25).norm() < 1e-13 * s);
            let one = C64::new(1.0, 0.0);
            assert!((d.d_plus - (one - cp) * (one - cm)).norm() < 1e-13 * s);
            assert!((d.d_minus - (one + cp) * (one + cm)).norm() < 1e-13 * s);
            check_identities(&d, 1e-12);
        }
    }

    #[test]
    fn rho0_and_asymptotic_delta_examples() {
        assert_eq!(rho0(C64::new(5.0, 1.0), 0.0), C64::new(0.0, 0.0));
        assert!(rho0(C64::new(PI * PI, 0.0), 3.0).norm() < 1e-15);
        assert!((rho0(C64::new(PI * PI / 4.0, 0.0), 3.0) - 3.0 / PI).norm() < 1e-15);
        assert!((rho0(C64::new(0.0, 0.0), 3.0) - 1.5).norm() < 1e-15);
        let lam = C64::new(40.0, 3.0);
        assert!((asymptotic_delta(lam, 0.0) - lam.sqrt().cos()).norm() < 1e-14);
        assert!((asymptotic_delta(C64::new(PI * PI / 4.0, 0.0), 2.0) - 2.0 / PI).norm() < 1e-15);
        // first order in a/λ of cos √(λ − a)
        let a = 0.01;
        let lam = C64::new(900.0, 0.0);
        let exact = cos_sqrt(lam - a, 1.0);
        assert!((asymptotic_delta(lam, a) - exact).norm() < 1e-5);
    }

    #[test]
    fn smooth_identities_and_reality() {
        let o = op(&smooth());
        for &lam in &[C64::new(20.0, 0.0), C64::new(-15.0, 9.0), C64::new(300.0, -60.0), C64::new(55.0, 0.0)] {
            let d = o.lyapunov_at(lam).unwrap();
            check_identities(&d, 1e-9);
            if lam.im == 0.0 {
                assert_eq!(d.mu1.im, 0.0);
                if d.rho.re >= 0.0 {
                    assert!(d.delta1.re >= d.delta2.re && d.delta1.im == 0.0);
                }
            }
        }
    }

    #[test]
    fn d_pm_direct_agrees() {
        let o = op(&smooth());
        for &lam in &[C64::new(20.0, 1.0), C64::new(-30.0, 4.0), C64::new(150.0, 0.0)] {
            let d = o.lyapunov_at(lam).unwrap();
            let (dp, dm, scale) = o.d_pm_direct(lam).unwrap();
            assert!((dp - d.d_plus).norm() <= 1e-9 * scale.max(d.scale()));
            assert!((dm - d.d_minus).norm() <= 1e-9 * scale.max(d.scale()));
        }
    }

    #[test]
    fn rho_close_to_rho0_squared() {
        // |ρ − ρ₀²| ≤ 2κ³ e^{2|Im√λ| + 2κ}
        let o = op(&smooth());
        let pot = o.potential();
        for &lam in &[C64::new(400.0, 0.0), C64::new(-50.0, 20.0), C64::new(900.0, 100.0), C64::new(5.0, 1.0)] {
            let d = o.lyapunov_at(lam).unwrap();
            let kappa = pot.l1_norm / lam.norm().max(1.0).sqrt();
            let z = crate::special::sqrt_upper(lam);
            let bound = 2.0 * kappa.powi(3) * (2.0 * z.im.abs() + 2.0 * kappa).exp();
            let r0 = rho0(lam, pot.c0);
            assert!((d.rho - r0 * r0).norm() <= bound, "lam {lam}");
        }
    }

    #[test]
    fn anchor_matches_rho0_at_high_energy() {
        // small potential: C₀ = 4⁴‖V‖₁³/c₀², anchor estimate 3C₀/(5√|λ|)
        let spec = PotentialSpec::fourier(FourierSeries {
            v1: vec![Harmonic { k: 0, cos: -0.05, sin: 0.0 }],
            v2: vec![Harmonic { k: 0, cos: 0.05, sin: 0.0 }],
            v3: vec![Harmonic { k: 1, cos: 0.0005, sin: 0.0 }],
        });
        let o = op(&spec);
        let pot = o.potential();
        let c0 = pot.c0;
        let big_c = 256.0 * pot.l1_norm.powi(3) / (c0 * c0);
        let ctx = o.asymptotic_anchor(4).unwrap();
        let lam = C64::new((PI * 70.5).powi(2), 0.0);
        assert!(big_c < lam.norm().sqrt() / 2.0);
        let s = o.branch_sqrt_rho(lam, &ctx.with_waypoints(vec![C64::new(200.0, 400.0), C64::new(lam.re, 400.0)])).unwrap();
        let r0 = rho0(lam, c0);
        assert!((s - r0).norm() <= 0.6 * big_c / lam.norm().sqrt() * r0.norm());
    }

    #[test]
    fn continuation_around_zeros() {
        // δ-comb: ρ has simple real zeros z⁻ < z⁺ near z₁⁰ ≈ 10.0976
        let o = op(&PotentialSpec::delta_comb(3.0, 0.4));
        let ctx = o.real_anchor(4.0).unwrap();
        let loop_around = |center: f64, r: f64| -> Vec<C64> {
            (0..=24).map(|k| C64::new(center, 0.0) + C64::from_polar(r, PI + 2.0 * PI * k as f64 / 24.0)).collect()
        };
        let start = o.branch_sqrt_rho(C64::new(4.0, 0.0), &ctx).unwrap();
        assert!((start - ctx.anchor_value).norm() < 1e-14);
        // locate one zero by the closed form: scan sign change of ρ on the real line
        let f = |x: f64| o.lyapunov_at(C64::new(x, 0.0)).unwrap().rho.re;
        let mut x = 9.0;
        while f(x) > 0.0 {
            x += 1e-3;
        }
        let z_minus = x;
        let mut y = x;
        while f(y) <= 0.0 {
            y += 1e-3;
        }
        let z_plus = y;
        assert!(z_minus < 10.0976 && z_plus > 10.0976);
        // circle enclosing z⁻ only: starts at center − r on the real axis, left of z⁻
        let r = 0.3 * (z_plus - z_minus).min(1.0);
        let mut path = loop_around(z_minus, r);
        let end = path.pop().unwrap();
        let once = o.branch_sqrt_rho(end, &ctx.clone().with_waypoints(path.clone())).unwrap();
        let direct = o.branch_sqrt_rho(end, &ctx).unwrap();
        assert!((once + direct).norm() < 1e-9 * direct.norm().max(1e-3), "single zero flips");
        // circle around both zeros returns to itself
        let c = 0.5 * (z_minus + z_plus);
        let big = 0.5 * (z_plus - z_minus) + 0.5;
        let mut path = loop_around(c, big);
        let end = path.pop().unwrap();
        let both = o.branch_sqrt_rho(end, &ctx.clone().with_waypoints(path)).unwrap();
        let direct = o.branch_sqrt_rho(end, &ctx).unwrap();
        assert!((both - direct).norm() < 1e-9 * direct.norm().max(1e-3), "pair returns");
    }

    #[test]
    fn continuation_constant_model_double_zero_returns() {
        let o = op(&PotentialSpec::constant(3.0)).with_generic_traces();
        let ctx = o.real_anchor(4.0).unwrap();
        let z1 = PI * PI + 9.0 / (4.0 * PI * PI);
        let path: Vec<C64> = (0..=24).map(|k| C64::new(z1, 0.0) + C64::from_polar(2.0, PI + 2.0 * PI * k as f64 / 24.0)).collect();
        let end = *path.last().unwrap();
        let around = o.branch_sqrt_rho(end, &ctx.clone().with_waypoints(path[..24].to_vec())).unwrap();
        let direct = o.branch_sqrt_rho(end, &ctx).unwrap();
        assert!((around - direct).norm() < 1e-9 * direct.norm());
    }

    #[test]
    fn diagonal_case_uses_channels() {
        let spec = PotentialSpec::constant(3.0);
        let o = op(&spec);
        let lam = C64::new(30.0, 7.0);
        let ctx = o.real_anchor(4.0).unwrap();
        let s = o.branch_sqrt_rho(lam, &ctx).unwrap();
        let m = o.monodromy(lam).unwrap();
        let (d1, d2) = channel_discriminants(&m);
        assert_eq!(s, (d1 - d2) * 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn assembled_identities_hold(re in -400.0..400.0f64, im in -100.0..100.0f64,
                                     m1r in -50.0..50.0f64, m1i in -50.0..50.0f64,
                                     m2r in -500.0..500.0f64, m2i in -500.0..500.0f64) {
            let d = LyapunovData::from_traces(C64::new(re, im), C64::new(m1r, m1i), C64::new(m2r, m2i));
            check_identities(&d, 1e-12);
        }
    }
}
