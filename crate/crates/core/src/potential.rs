//! Periodic symmetric 2×2 potentials: schema, validation, normalization.
//!
//! A potential is a smooth part (builtin, Fourier series or midpoint samples)
//! plus a finite list of δ terms `S δ(x − x₀)` repeated with period 1.
//! [`NormalizedPotential`] rotates everything by the constant orthogonal
//! matrix that diagonalizes the mean, with ascending diagonal.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde_json::{json, Map, Value};

use crate::error::{HillError, Result};
use crate::linalg::{Orth2, Sym2};

/// Upper limit on Fourier harmonics accepted by the parser.
pub const DEFAULT_MAX_HARMONICS: u32 = 64;
/// Upper limit on the sample count of a piecewise-constant potential.
pub const MAX_SAMPLES: usize = 1 << 16;

const QUAD_POINTS: usize = 1 << 13;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Harmonic {
    pub k: u32,
    pub cos: f64,
    pub sin: f64,
}

/// `V_i(x) = Σ c_k cos 2πkx + s_k sin 2πkx` for each entry.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FourierSeries {
    pub v1: Vec<Harmonic>,
    pub v2: Vec<Harmonic>,
    pub v3: Vec<Harmonic>,
}

/// Midpoint samples on a uniform grid of `n = 2^p` cells.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleGrid {
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub v3: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SmoothPart {
    Zero,
    /// `a J`, `J = diag(1, −1)`.
    ConstantDiag { a: f64 },
    /// `a J + γ v_ν(x) J₁`, see [`bump`].
    SmoothedDelta { a: f64, gamma: f64, nu: f64 },
    Fourier(FourierSeries),
    Samples(SampleGrid),
}

/// `S δ(x − x₀)` repeated with period 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaTerm {
    pub x0: f64,
    pub strength: Sym2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialSpec {
    pub smooth: SmoothPart,
    pub delta: Vec<DeltaTerm>,
}

#[derive(Clone, Copy, Debug)]
pub struct ParseOptions {
    pub max_harmonics: u32,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { max_harmonics: DEFAULT_MAX_HARMONICS }
    }
}

fn schema(msg: impl Into<String>) -> HillError {
    HillError::Schema(msg.into())
}

fn as_f64(v: &Value, what: &str) -> Result<f64> {
    let x = v.as_f64().ok_or_else(|| schema(format!("{what}: expected a number")))?;
    if !x.is_finite() {
        return Err(schema(format!("{what}: not finite")));
    }
    Ok(x)
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, ctx: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| schema(format!("{ctx}: missing field `{key}`")))
}

fn check_keys(obj: &Map<String, Value>, allowed: &[&str], ctx: &str) -> Result<()> {
    for k in obj.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(schema(format!("{ctx}: unknown field `{k}`")));
        }
    }
    Ok(())
}

fn parse_harmonics(v: Option<&Value>, name: &str, opts: &ParseOptions) -> Result<Vec<Harmonic>> {
    let Some(v) = v else { return Ok(Vec::new()) };
    let arr = v.as_array().ok_or_else(|| schema(format!("fourier.{name}: expected a list")))?;
    let mut out = Vec::with_capacity(arr.len());
    for (i, h) in arr.iter().enumerate() {
        let t = h
            .as_array()
            .filter(|t| t.len() == 3)
            .ok_or_else(|| schema(format!("fourier.{name}[{i}]: expected [k, ck, sk]")))?;
        let k = t[0]
            .as_u64()
            .or_else(|| t[0].as_f64().filter(|x| x.fract() == 0.0 && *x >= 0.0).map(|x| x as u64))
            .ok_or_else(|| schema(format!("fourier.{name}[{i}]: k must be a nonnegative integer")))?;
        if k > opts.max_harmonics as u64 {
            return Err(schema(format!(
                "fourier.{name}[{i}]: harmonic {k} exceeds the cap {}",
                opts.max_harmonics
            )));
        }
        out.push(Harmonic {
            k: k as u32,
            cos: as_f64(&t[1], "fourier coefficient")?,
            sin: as_f64(&t[2], "fourier coefficient")?,
        });
    }
    Ok(out)
}

fn parse_samples(obj: &Map<String, Value>) -> Result<SampleGrid> {
    check_keys(obj, &["n", "V1", "V2", "V3"], "samples")?;
    let n = field(obj, "n", "samples")?
        .as_u64()
        .ok_or_else(|| schema("samples.n: expected a positive integer"))? as usize;
    if n == 0 || !n.is_power_of_two() || n > MAX_SAMPLES {
        return Err(schema(format!("samples.n = {n}: must be a power of two in [1, {MAX_SAMPLES}]")));
    }
    let read = |key: &str| -> Result<Vec<f64>> {
        match obj.get(key) {
            None => Ok(vec![0.0; n]),
            Some(v) => {
                let arr = v.as_array().ok_or_else(|| schema(format!("samples.{key}: expected a list")))?;
                if arr.len() != n {
                    return Err(schema(format!("samples.{key}: expected {n} values, got {}", arr.len())));
                }
                arr.iter().map(|x| as_f64(x, "sample")).collect()
            }
        }
    };
    Ok(SampleGrid { v1: read("V1")?, v2: read("V2")?, v3: read("V3")? })
}

fn parse_smooth(v: &Value, opts: &ParseOptions) -> Result<SmoothPart> {
    let obj = v.as_object().ok_or_else(|| schema("smooth: expected an object"))?;
    if let Some(b) = obj.get("builtin") {
        let name = b.as_str().ok_or_else(|| schema("smooth.builtin: expected a string"))?;
        return match name {
            "zero" => {
                check_keys(obj, &["builtin"], "zero")?;
                Ok(SmoothPart::Zero)
            }
            "constant_diag" => {
                check_keys(obj, &["builtin", "a"], "constant_diag")?;
                Ok(SmoothPart::ConstantDiag { a: as_f64(field(obj, "a", "constant_diag")?, "a")? })
            }
            "smoothed_delta" => {
                check_keys(obj, &["builtin", "a", "gamma", "nu"], "smoothed_delta")?;
                let a = as_f64(field(obj, "a", "smoothed_delta")?, "a")?;
                let gamma = as_f64(field(obj, "gamma", "smoothed_delta")?, "gamma")?;
                let nu = as_f64(field(obj, "nu", "smoothed_delta")?, "nu")?;
                check_nu(nu)?;
                Ok(SmoothPart::SmoothedDelta { a, gamma, nu })
            }
            other => Err(schema(format!("unknown builtin `{other}`"))),
        };
    }
    if let Some(f) = obj.get("fourier") {
        check_keys(obj, &["fourier"], "smooth")?;
        let fo = f.as_object().ok_or_else(|| schema("fourier: expected an object"))?;
        check_keys(fo, &["V1", "V2", "V3"], "fourier")?;
        return Ok(SmoothPart::Fourier(FourierSeries {
            v1: parse_harmonics(fo.get("V1"), "V1", opts)?,
            v2: parse_harmonics(fo.get("V2"), "V2", opts)?,
            v3: parse_harmonics(fo.get("V3"), "V3", opts)?,
        }));
    }
    if let Some(s) = obj.get("samples") {
        check_keys(obj, &["samples"], "smooth")?;
        let so = s.as_object().ok_or_else(|| schema("samples: expected an object"))?;
        return Ok(SmoothPart::Samples(parse_samples(so)?));
    }
    Err(schema("smooth: expected one of `builtin`, `fourier`, `samples`"))
}

fn parse_delta(v: &Value) -> Result<DeltaTerm> {
    let obj = v.as_object().ok_or_else(|| schema("delta entry: expected an object"))?;
    check_keys(obj, &["x0", "gamma", "S"], "delta")?;
    let x0 = as_f64(field(obj, "x0", "delta")?, "x0")?;
    if !(0.0..1.0).contains(&x0) {
        return Err(HillError::DeltaLocation(x0));
    }
    let strength = match (obj.get("gamma"), obj.get("S")) {
        (Some(g), None) => Sym2::new(0.0, as_f64(g, "gamma")?, 0.0),
        (None, Some(s)) => {
            let rows = s
                .as_array()
                .filter(|r| r.len() == 2)
                .ok_or_else(|| schema("delta.S: expected a 2×2 array"))?;
            let mut m = [[0.0; 2]; 2];
            for (i, row) in rows.iter().enumerate() {
                let r = row
                    .as_array()
                    .filter(|r| r.len() == 2)
                    .ok_or_else(|| schema("delta.S: expected a 2×2 array"))?;
                for j in 0..2 {
                    m[i][j] = as_f64(&r[j], "delta.S entry")?;
                }
            }
            if m[0][1] != m[1][0] {
                return Err(HillError::NonSymmetric { s12: m[0][1], s21: m[1][0] });
            }
            Sym2::new(m[0][0], m[0][1], m[1][1])
        }
        _ => return Err(schema("delta: exactly one of `gamma` or `S` is required")),
    };
    Ok(DeltaTerm { x0, strength })
}

fn check_nu(nu: f64) -> Result<()> {
    if !(nu > 0.0 && nu < 0.5) {
        return Err(HillError::InvalidParameter(format!(
            "smoothed delta width nu = {nu} must lie in (0, 1/2) to keep the support inside the period"
        )));
    }
    Ok(())
}

fn harmonics_json(hs: &[Harmonic]) -> Value {
    Value::Array(hs.iter().map(|h| json!([h.k, h.cos, h.sin])).collect())
}

impl PotentialSpec {
    pub fn zero() -> Self {
        PotentialSpec { smooth: SmoothPart::Zero, delta: Vec::new() }
    }

    pub fn constant(a: f64) -> Self {
        PotentialSpec { smooth: SmoothPart::ConstantDiag { a }, delta: Vec::new() }
    }

    /// `aJ + γ δ_per(x − ½) J₁`.
    pub fn delta_comb(a: f64, gamma: f64) -> Self {
        PotentialSpec {
            smooth: SmoothPart::ConstantDiag { a },
            delta: vec![DeltaTerm { x0: 0.5, strength: Sym2::new(0.0, gamma, 0.0) }],
        }
    }

    pub fn smoothed_delta(a: f64, gamma: f64, nu: f64) -> Result<Self> {
        check_nu(nu)?;
        Ok(PotentialSpec { smooth: SmoothPart::SmoothedDelta { a, gamma, nu }, delta: Vec::new() })
    }

    pub fn fourier(series: FourierSeries) -> Self {
        PotentialSpec { smooth: SmoothPart::Fourier(series), delta: Vec::new() }
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::parse_with(text, &ParseOptions::default())
    }

    pub fn parse_with(text: &str, opts: &ParseOptions) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        Self::from_value(&v, opts)
    }

    pub fn from_value(v: &Value, opts: &ParseOptions) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| schema("top level: expected an object"))?;
        check_keys(obj, &["smooth", "delta"], "top level")?;
        let smooth = parse_smooth(field(obj, "smooth", "top level")?, opts)?;
        let delta = match obj.get("delta") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(arr)) => arr.iter().map(parse_delta).collect::<Result<Vec<_>>>()?,
            Some(_) => return Err(schema("delta: expected a list")),
        };
        let spec = PotentialSpec { smooth, delta };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks the invariants a hand-built spec might violate.
    pub fn validate(&self) -> Result<()> {
        let mut xs: Vec<f64> = Vec::with_capacity(self.delta.len());
        for d in &self.delta {
            if !(0.0..1.0).contains(&d.x0) {
                return Err(HillError::DeltaLocation(d.x0));
            }
            if xs.contains(&d.x0) {
                return Err(HillError::DuplicateDelta(d.x0));
            }
            xs.push(d.x0);
        }
        match &self.smooth {
            SmoothPart::SmoothedDelta { nu, .. } => check_nu(*nu),
            SmoothPart::Samples(g) => {
                let n = g.v1.len();
                if n == 0 || !n.is_power_of_two() || g.v2.len() != n || g.v3.len() != n {
                    return Err(schema("samples: inconsistent grid"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn to_value(&self) -> Value {
        let smooth = match &self.smooth {
            SmoothPart::Zero => json!({"builtin": "zero"}),
            SmoothPart::ConstantDiag { a } => json!({"builtin": "constant_diag", "a": a}),
            SmoothPart::SmoothedDelta { a, gamma, nu } => {
                json!({"builtin": "smoothed_delta", "a": a, "gamma": gamma, "nu": nu})
            }
            SmoothPart::Fourier(f) => json!({"fourier": {
                "V1": harmonics_json(&f.v1), "V2": harmonics_json(&f.v2), "V3": harmonics_json(&f.v3)
            }}),
            SmoothPart::Samples(g) => json!({"samples": {
                "n": g.v1.len(), "V1": g.v1, "V2": g.v2, "V3": g.v3
            }}),
        };
        let delta: Vec<Value> = self
            .delta
            .iter()
            .map(|d| {
                let s = d.strength;
                if s.a11 == 0.0 && s.a22 == 0.0 {
                    json!({"x0": d.x0, "gamma": s.a12})
                } else {
                    json!({"x0": d.x0, "S": [[s.a11, s.a12], [s.a12, s.a22]]})
                }
            })
            .collect();
        if delta.is_empty() {
            json!({ "smooth": smooth })
        } else {
            json!({ "smooth": smooth, "delta": delta })
        }
    }

    /// True when the smooth part is piecewise constant, so the frozen
    /// propagator is exact.
    pub fn is_piecewise_constant(&self) -> bool {
        matches!(self.smooth, SmoothPart::Zero | SmoothPart::ConstantDiag { .. } | SmoothPart::Samples(_))
    }

    /// Smooth part at `x` (reduced mod 1), in the frame the spec was written in.
    pub fn evaluate_smooth(&self, x: f64) -> Sym2 {
        let x = x - x.floor();
        match &self.smooth {
            SmoothPart::Zero => Sym2::ZERO,
            SmoothPart::ConstantDiag { a } => Sym2::diag(*a, -*a),
            SmoothPart::SmoothedDelta { a, gamma, nu } => {
                Sym2::new(*a, gamma * bump(x, *nu), -*a)
            }
            SmoothPart::Fourier(f) => {
                let eval = |hs: &[Harmonic]| -> f64 {
                    hs.iter()
                        .map(|h| {
                            let (s, c) = (2.0 * PI * h.k as f64 * x).sin_cos();
                            h.cos * c + h.sin * s
                        })
                        .sum()
                };
                Sym2::new(eval(&f.v1), eval(&f.v3), eval(&f.v2))
            }
            SmoothPart::Samples(g) => {
                let n = g.v1.len();
                let j = ((x * n as f64) as usize).min(n - 1);
                Sym2::new(g.v1[j], g.v3[j], g.v2[j])
            }
        }
    }

    /// `∫₀¹` of the smooth part, exact for every representation.
    pub fn smooth_mean(&self) -> Sym2 {
        match &self.smooth {
            SmoothPart::Zero => Sym2::ZERO,
            SmoothPart::ConstantDiag { a } => Sym2::diag(*a, -*a),
            SmoothPart::SmoothedDelta { a, gamma, .. } => Sym2::new(*a, *gamma, -*a),
            SmoothPart::Fourier(f) => {
                let m = |hs: &[Harmonic]| -> f64 { hs.iter().filter(|h| h.k == 0).map(|h| h.cos).sum() };
                Sym2::new(m(&f.v1), m(&f.v3), m(&f.v2))
            }
            SmoothPart::Samples(g) => {
                let n = g.v1.len() as f64;
                let m = |v: &[f64]| -> f64 { v.iter().sum::<f64>() / n };
                Sym2::new(m(&g.v1), m(&g.v3), m(&g.v2))
            }
        }
    }

    /// Mean of the whole potential, δ terms included.
    pub fn mean(&self) -> Sym2 {
        self.delta.iter().fold(self.smooth_mean(), |acc, d| acc.add(&d.strength))
    }

    /// The potential `U V Uᵀ` with `U` the rotation by `theta`. The smoothed
    /// δ builtin has no rotated representation in the schema.
    pub fn rotated(&self, theta: f64) -> Result<PotentialSpec> {
        let ut = Orth2::rotation(theta).transpose();
        let rot = |s: Sym2| s.conjugate(&ut);
        let smooth = match &self.smooth {
            SmoothPart::Zero => SmoothPart::Zero,
            SmoothPart::ConstantDiag { a } => {
                let r = rot(Sym2::diag(*a, -*a));
                SmoothPart::Fourier(FourierSeries {
                    v1: vec![Harmonic { k: 0, cos: r.a11, sin: 0.0 }],
                    v2: vec![Harmonic { k: 0, cos: r.a22, sin: 0.0 }],
                    v3: vec![Harmonic { k: 0, cos: r.a12, sin: 0.0 }],
                })
            }
            SmoothPart::SmoothedDelta { .. } => {
                return Err(HillError::InvalidParameter(
                    "smoothed_delta builtin cannot be rotated within the schema".into(),
                ))
            }
            SmoothPart::Fourier(f) => {
                let mut ks: Vec<u32> = f.v1.iter().chain(&f.v2).chain(&f.v3).map(|h| h.k).collect();
                ks.sort_unstable();
                ks.dedup();
                let coef = |hs: &[Harmonic], k: u32| -> (f64, f64) {
                    hs.iter().filter(|h| h.k == k).fold((0.0, 0.0), |a, h| (a.0 + h.cos, a.1 + h.sin))
                };
                let mut out = FourierSeries::default();
                for k in ks {
                    let (c1, s1) = coef(&f.v1, k);
                    let (c2, s2) = coef(&f.v2, k);
                    let (c3, s3) = coef(&f.v3, k);
                    let c = rot(Sym2::new(c1, c3, c2));
                    let s = rot(Sym2::new(s1, s3, s2));
                    out.v1.push(Harmonic { k, cos: c.a11, sin: s.a11 });
                    out.v2.push(Harmonic { k, cos: c.a22, sin: s.a22 });
                    out.v3.push(Harmonic { k, cos: c.a12, sin: s.a12 });
                }
                SmoothPart::Fourier(out)
            }
            SmoothPart::Samples(g) => {
                let n = g.v1.len();
                let mut out = SampleGrid { v1: vec![0.0; n], v2: vec![0.0; n], v3: vec![0.0; n] };
                for j in 0..n {
                    let r = rot(Sym2::new(g.v1[j], g.v3[j], g.v2[j]));
                    out.v1[j] = r.a11;
                    out.v2[j] = r.a22;
                    out.v3[j] = r.a12;
                }
                SmoothPart::Samples(out)
            }
        };
        let delta = self
            .delta
            .iter()
            .map(|d| DeltaTerm { x0: d.x0, strength: rot(d.strength) })
            .collect();
        Ok(PotentialSpec { smooth, delta })
    }
}

fn bump_unnormalized(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

/// Normalizing constant `C` with `∫₋₁¹ C exp(−1/(1−t²)) dt = 1`.
pub fn bump_constant() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        // all derivatives vanish at ±1, so the trapezoid rule is spectrally accurate
        let n = 1 << 14;
        let h = 2.0 / n as f64;
        let s: f64 = (1..n).map(|i| bump_unnormalized(-1.0 + i as f64 * h)).sum();
        1.0 / (s * h)
    })
}

/// `v_ν(x) = w((x − ½)/ν)/ν` with `w(t) = C exp(−1/(1−t²))` on `(−1, 1)`.
pub fn bump(x: f64, nu: f64) -> f64 {
    bump_constant() * bump_unnormalized((x - 0.5) / nu) / nu
}

/// Potential in the frame where its mean is `diag(V₁₀, V₂₀)`, `V₁₀ ≤ V₂₀`.
#[derive(Clone, Debug)]
pub struct NormalizedPotential {
    spec: PotentialSpec,
    rotation: Orth2,
    deltas: Vec<DeltaTerm>,
    pub mean_diag: [f64; 2],
    pub c0: f64,
    pub v1: f64,
    pub v2: f64,
    pub l1_norm: f64,
    diagonal: bool,
    scalar: bool,
}

impl NormalizedPotential {
    pub fn new(spec: &PotentialSpec) -> Self {
        let mean = spec.mean();
        let (e, q) = mean.eigen();
        let mut deltas: Vec<DeltaTerm> = spec
            .delta
            .iter()
            .map(|d| DeltaTerm { x0: d.x0, strength: d.strength.conjugate(&q) })
            .collect();
        deltas.sort_by(|a, b| a.x0.total_cmp(&b.x0));
        let mut np = NormalizedPotential {
            spec: spec.clone(),
            rotation: q,
            deltas,
            mean_diag: e,
            c0: 0.5 * (e[1] - e[0]),
            v1: e[0] + e[1],
            v2: e[0] * e[0] + e[1] * e[1],
            l1_norm: 0.0,
            diagonal: false,
            scalar: false,
        };
        np.l1_norm = np.smooth_l1() + np.deltas.iter().map(|d| d.strength.l1()).sum::<f64>();
        np.classify();
        np
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    /// `Q` with rotated `V = Qᵀ V_spec Q`.
    pub fn rotation(&self) -> Orth2 {
        self.rotation
    }

    /// Rotation angle of `Q` when it is proper, for reporting.
    pub fn rotation_angle(&self) -> f64 {
        let q = self.rotation.0;
        q[1][0].atan2(q[0][0])
    }

    /// δ terms in the rotated frame, sorted by location.
    pub fn deltas(&self) -> &[DeltaTerm] {
        &self.deltas
    }

    pub fn has_deltas(&self) -> bool {
        !self.deltas.is_empty()
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.spec.is_piecewise_constant()
    }

    /// Rotated `V₃ ≡ 0` and every δ strength diagonal: the system splits
    /// into two scalar Hill equations.
    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    /// Diagonal with identical channels, so `ρ ≡ 0`.
    pub fn is_scalar(&self) -> bool {
        self.scalar
    }

    /// Smooth part at `x` in the rotated frame.
    pub fn evaluate_smooth(&self, x: f64) -> Sym2 {
        let v = self.spec.evaluate_smooth(x);
        if self.rotation.is_identity() {
            v
        } else {
            v.conjugate(&self.rotation)
        }
    }

    /// Same as [`evaluate_smooth`](Self::evaluate_smooth) but in the frame of
    /// the input spec.
    pub fn evaluate_smooth_original(&self, x: f64) -> Sym2 {
        self.spec.evaluate_smooth(x)
    }

    /// Mean of the rotated smooth part (δ terms excluded), by quadrature.
    pub fn rotated_smooth_mean(&self) -> Sym2 {
        self.spec.smooth_mean().conjugate(&self.rotation)
    }

    /// Constant cells `(x_start, x_end, V)` covering `[0, 1)` when the smooth
    /// part is piecewise constant.
    pub fn cells(&self) -> Option<Vec<(f64, f64, Sym2)>> {
        let q = &self.rotation;
        match &self.spec.smooth {
            SmoothPart::Zero => Some(vec![(0.0, 1.0, Sym2::ZERO)]),
            SmoothPart::ConstantDiag { a } => Some(vec![(0.0, 1.0, Sym2::diag(*a, -*a).conjugate(q))]),
            SmoothPart::Samples(g) => {
                let n = g.v1.len();
                let h = 1.0 / n as f64;
                Some(
                    (0..n)
                        .map(|j| {
                            let v = Sym2::new(g.v1[j], g.v3[j], g.v2[j]).conjugate(q);
                            (j as f64 * h, (j + 1) as f64 * h, v)
                        })
                        .collect(),
                )
            }
            _ => None,
        }
    }

    fn smooth_l1(&self) -> f64 {
        if let Some(cells) = self.cells() {
            return cells.iter().map(|(a, b, v)| (b - a) * v.l1()).sum();
        }
        let h = 1.0 / QUAD_POINTS as f64;
        (0..QUAD_POINTS).map(|j| self.evaluate_smooth(j as f64 * h).l1()).sum::<f64>() * h
    }

    fn classify(&mut self) {
        let scale = self.l1_norm.max(1.0);
        let tol = 1e-13 * scale;
        let samples: Vec<Sym2> = match self.cells() {
            Some(c) => c.into_iter().map(|(_, _, v)| v).collect(),
            None => (0..1024).map(|j| self.evaluate_smooth((j as f64 + 0.5) / 1024.0)).collect(),
        };
        let smooth_diag = samples.iter().all(|v| v.a12.abs() <= tol);
        let deltas_diag = self.deltas.iter().all(|d| d.strength.a12.abs() <= tol);
        self.diagonal = smooth_diag && deltas_diag;
        self.scalar = self.diagonal
            && samples.iter().all(|v| (v.a11 - v.a22).abs() <= tol)
            && self.deltas.iter().all(|d| (d.strength.a11 - d.strength.a22).abs() <= tol);
    }

    /// JSON summary for report metadata.
    pub fn metadata(&self) -> Value {
        let q = self.rotation.0;
        json!({
            "spec": self.spec.to_value(),
            "rotation": [[q[0][0], q[0][1]], [q[1][0], q[1][1]]],
            "rotation_applied": !self.rotation.is_identity(),
            "mean_diag": self.mean_diag,
            "c0": self.c0,
            "v1": self.v1,
            "v2": self.v2,
            "l1_norm": self.l1_norm,
            "diagonal": self.diagonal,
            "scalar": self.scalar,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_examples() {
        let z = PotentialSpec::parse_str(r#"{"smooth":{"builtin":"zero"}}"#).unwrap();
        assert_eq!(z, PotentialSpec::zero());
        let c = PotentialSpec::parse_str(r#"{"smooth":{"builtin":"constant_diag","a":3.0}}"#).unwrap();
        assert_eq!(c.evaluate_smooth(0.3), Sym2::diag(3.0, -3.0));
        let d = PotentialSpec::parse_str(
            r#"{"smooth":{"builtin":"constant_diag","a":10.0},"delta":[{"x0":0.5,"gamma":0.5}]}"#,
        )
        .unwrap();
        assert_eq!(d, PotentialSpec::delta_comb(10.0, 0.5));
    }

    #[test]
    fn parse_errors() {
        let bad = [
            r#"{"smooth":{"builtin":"nope"}}"#,
            r#"{"smooth":{"builtin":"zero"},"extra":1}"#,
            r#"{"smooth":{"samples":{"n":3,"V1":[0,0,0]}}}"#,
            r#"{"smooth":{"fourier":{"V1":[[1,2]]}}}"#,
            r#"{"smooth":{"fourier":{"V1":[[100,1,0]]}}}"#,
            r#"{"smooth":{"builtin":"smoothed_delta","a":1,"gamma":1,"nu":0.6}}"#,
            r#"{"delta":[]}"#,
        ];
        for b in bad {
            assert!(PotentialSpec::parse_str(b).is_err(), "{b}");
        }
        let e = PotentialSpec::parse_str(r#"{"smooth":{"builtin":"zero"},"delta":[{"x0":1.0,"gamma":1}]}"#);
        assert!(matches!(e, Err(HillError::DeltaLocation(_))));
        let e = PotentialSpec::parse_str(
            r#"{"smooth":{"builtin":"zero"},"delta":[{"x0":0.2,"S":[[1,2],[3,4]]}]}"#,
        );
        assert!(matches!(e, Err(HillError::NonSymmetric { .. })));
        let e = PotentialSpec::parse_str(
            r#"{"smooth":{"builtin":"zero"},"delta":[{"x0":0.2,"gamma":1},{"x0":0.2,"gamma":2}]}"#,
        );
        assert!(matches!(e, Err(HillError::DuplicateDelta(_))));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"smooth":{"fourier":{"V1":[[0,-1.0,0.0],[1,0.5,0.25]],"V3":[[2,0.1,0.0]]}},
                       "delta":[{"x0":0.25,"S":[[1.0,0.5],[0.5,-2.0]]}]}"#;
        let s = PotentialSpec::parse_str(text).unwrap();
        let back = PotentialSpec::from_value(&s.to_value(), &ParseOptions::default()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn normalize_examples() {
        let z = NormalizedPotential::new(&PotentialSpec::zero());
        assert_eq!((z.mean_diag, z.c0, z.l1_norm), ([0.0, 0.0], 0.0, 0.0));
        assert!(z.is_scalar());

        let c = NormalizedPotential::new(&PotentialSpec::constant(3.0));
        assert_eq!(c.mean_diag, [-3.0, 3.0]);
        assert_eq!((c.c0, c.v1, c.v2), (3.0, 0.0, 18.0));
        assert_eq!(c.evaluate_smooth(0.25), Sym2::diag(-3.0, 3.0));
        assert!(c.is_diagonal() && !c.is_scalar());

        let j1 = PotentialSpec::fourier(FourierSeries {
            v3: vec![Harmonic { k: 0, cos: 1.0, sin: 0.0 }],
            ..Default::default()
        });
        let n = NormalizedPotential::new(&j1);
        assert!((n.mean_diag[0] + 1.0).abs() < 1e-15 && (n.mean_diag[1] - 1.0).abs() < 1e-15);
        assert!((n.c0 - 1.0).abs() < 1e-15);
        assert!((n.rotation_angle().abs() - PI / 4.0).abs() < 1e-15 || (n.rotation_angle().abs() - 3.0 * PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn smoothed_delta_frames() {
        let s = PotentialSpec::smoothed_delta(10.0, 0.5, 0.1).unwrap();
        let n = NormalizedPotential::new(&s);
        // spec frame: a J plus the bump on the off-diagonal
        let v = n.evaluate_smooth_original(0.5);
        assert_eq!((v.a11, v.a22), (10.0, -10.0));
        assert!((v.a12 - 0.5 * bump(0.5, 0.1)).abs() < 1e-15);
        // rotated frame: value is the conjugate by Q, mean is diagonal
        let r = n.evaluate_smooth(0.5);
        let back = r.conjugate(&n.rotation().transpose());
        assert!((back.a11 - v.a11).abs() < 1e-12 && (back.a12 - v.a12).abs() < 1e-12);
        let m = n.rotated_smooth_mean();
        assert!(m.a12.abs() < 1e-12 && m.a11 <= m.a22);
        let expect = (100.0f64 + 0.25).sqrt();
        assert!((n.c0 - expect).abs() < 1e-12);
    }

    #[test]
    fn bump_normalized_and_symmetric() {
        assert!((bump_constant() - 2.252283621043585).abs() < 1e-12);
        for &nu in &[0.1, 0.05, 0.025] {
            let n = 1 << 14;
            let h = 1.0 / n as f64;
            let s: f64 = (0..n).map(|j| bump(j as f64 * h, nu)).sum::<f64>() * h;
            assert!((s - 1.0).abs() < 1e-12, "nu={nu} integral {s}");
            for &x in &[0.43, 0.47, 0.499, 0.3] {
                let (l, r) = (bump(x, nu), bump(1.0 - x, nu));
                assert!((l - r).abs() <= 1e-13 * l.max(1.0));
            }
        }
    }

    #[test]
    fn l1_of_delta_counts_both_offdiagonals() {
        let n = NormalizedPotential::new(&PotentialSpec::delta_comb(0.0, 0.5));
        assert!((n.l1_norm - 1.0).abs() < 1e-14);
    }

    #[test]
    fn samples_cells_exact() {
        let text = r#"{"smooth":{"samples":{"n":4,"V1":[1,2,3,4],"V2":[0,0,0,0],"V3":[0,0,0,0]}}}"#;
        let n = NormalizedPotential::new(&PotentialSpec::parse_str(text).unwrap());
        assert_eq!(n.mean_diag, [0.0, 2.5]);
        assert!((n.l1_norm - 2.5).abs() < 1e-15);
        assert_eq!(n.cells().unwrap().len(), 4);
    }

    fn fourier_strategy() -> impl Strategy<Value = PotentialSpec> {
        let h = (0u32..4, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(k, c, s)| Harmonic { k, cos: c, sin: s });
        (
            prop::collection::vec(h.clone(), 0..4),
            prop::collection::vec(h.clone(), 0..4),
            prop::collection::vec(h, 0..4),
            prop::collection::vec((0.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 0..2),
        )
            .prop_map(|(v1, v2, v3, ds)| {
                let mut delta: Vec<DeltaTerm> = Vec::new();
                for (x0, a, b, c) in ds {
                    if delta.iter().all(|d| d.x0 != x0) {
                        delta.push(DeltaTerm { x0, strength: Sym2::new(a, b, c) });
                    }
                }
                PotentialSpec { smooth: SmoothPart::Fourier(FourierSeries { v1, v2, v3 }), delta }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn rotation_invariance(spec in fourier_strategy(), theta in -3.2..3.2f64) {
            let a = NormalizedPotential::new(&spec);
            let b = NormalizedPotential::new(&spec.rotated(theta).unwrap());
            let s = a.l1_norm.max(1.0);
            prop_assert!((a.mean_diag[0] - b.mean_diag[0]).abs() < 1e-12 * s);
            prop_assert!((a.mean_diag[1] - b.mean_diag[1]).abs() < 1e-12 * s);
            prop_assert!((a.c0 - b.c0).abs() < 1e-12 * s);
            prop_assert!((a.v1 - b.v1).abs() < 1e-12 * s);
            prop_assert!((a.v2 - b.v2).abs() < 1e-12 * s * s);
        }

        #[test]
        fn normalized_mean_is_diagonal(spec in fourier_strategy()) {
            let n = NormalizedPotential::new(&spec);
            prop_assert!(n.mean_diag[0] <= n.mean_diag[1]);
            prop_assert!(n.c0 >= 0.0);
            let m = n.deltas().iter().fold(n.rotated_smooth_mean(), |acc, d| acc.add(&d.strength));
            let s = n.l1_norm.max(1.0);
            prop_assert!(m.a12.abs() < 1e-12 * s);
            prop_assert!((m.a11 - n.mean_diag[0]).abs() < 1e-12 * s);
            // quadrature of the rotated smooth V₃ agrees with the analytic mean
            let q = 2048;
            let v3: f64 = (0..q).map(|j| n.evaluate_smooth(j as f64 / q as f64).a12).sum::<f64>() / q as f64;
            prop_assert!((v3 - n.rotated_smooth_mean().a12).abs() < 1e-12 * s);
        }

        #[test]
        fn l1_subadditive_and_positive(a in fourier_strategy(), b in fourier_strategy()) {
            // diagonal means keep every normalization frame equal up to a swap,
            // which leaves the l1 norm unchanged
            let diagonalize = |s: &PotentialSpec| -> PotentialSpec {
                let mut s = s.clone();
                if let SmoothPart::Fourier(f) = &mut s.smooth {
                    f.v3.retain(|h| h.k != 0);
                }
                for d in s.delta.iter_mut() {
                    d.strength.a12 = 0.0;
                }
                s
            };
            let (a, b) = (diagonalize(&a), diagonalize(&b));
            let (SmoothPart::Fourier(fa), SmoothPart::Fourier(fb)) = (&a.smooth, &b.smooth) else { unreachable!() };
            let mut sum = fa.clone();
            sum.v1.extend(fb.v1.iter().copied());
            sum.v2.extend(fb.v2.iter().copied());
            sum.v3.extend(fb.v3.iter().copied());
            let mut delta = a.delta.clone();
            for d in &b.delta {
                match delta.iter_mut().find(|e| e.x0 == d.x0) {
                    Some(e) => e.strength = e.strength.add(&d.strength),
                    None => delta.push(*d),
                }
            }
            let ab = PotentialSpec { smooth: SmoothPart::Fourier(sum), delta };
            let (la, lb, lab) = (
                NormalizedPotential::new(&a).l1_norm,
                NormalizedPotential::new(&b).l1_norm,
                NormalizedPotential::new(&ab).l1_norm,
            );
            prop_assert!(lab <= la + lb + 1e-9, "{lab} > {la} + {lb}");
            let nonzero = a.delta.iter().any(|d| d.strength.max_abs() > 0.0)
                || (0..64).any(|j| a.evaluate_smooth(j as f64 / 64.0).max_abs() > 1e-12);
            prop_assert_eq!(la > 1e-12, nonzero);
        }
    }
}
