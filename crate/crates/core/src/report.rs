//! Run documents (`meta`, `results`, `diagnostics`) and CSV tables.
//!
//! Every float is written with 17 significant digits so that a rerun of the
//! same configuration produces byte-identical output.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Number, Value};

use crate::error::Result;
use crate::lyapunov::LyapunovData;
use crate::potential::NormalizedPotential;
use crate::spectrum::{Eigenvalue, ReconstructionRow, Resonance};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize)]
pub struct Document<R: Serialize> {
    pub meta: Value,
    pub results: R,
    pub diagnostics: Value,
}

/// `x` in scientific notation with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        return "0.0".into();
    }
    format!("{x:.16e}")
}

/// Rewrites every non-integer number in `v` through [`fmt17`].
pub fn fix_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if !n.is_i64() && !n.is_u64() => match n.as_f64() {
            Some(f) if f.is_finite() => Value::Number(Number::from_str(&fmt17(f)).unwrap_or(n)),
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(fix_floats).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, fix_floats(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with fixed float formatting and a trailing newline.
pub fn to_json<T: Serialize>(doc: &T) -> Result<String> {
    let v = fix_floats(serde_json::to_value(doc)?);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn meta(command: &str, config: Value, pot: &NormalizedPotential) -> Value {
    json!({
        "command": command,
        "version": VERSION,
        "config": config,
        "potential": pot.metadata(),
    })
}

fn row(out: &mut String, cells: &[f64]) {
    let line: Vec<String> = cells.iter().map(|&x| fmt17(x)).collect();
    let _ = writeln!(out, "{}", line.join(","));
}

/// `λ, Δ₁, Δ₂, ρ, D₊, D₋` on the real axis. The branches are complex where
/// `ρ < 0`, so both parts are written.
pub fn sweep_csv(rows: &[LyapunovData]) -> String {
    let mut out = String::from("lambda,delta1_re,delta1_im,delta2_re,delta2_im,rho,d_plus,d_minus\n");
    for d in rows {
        row(&mut out, &[d.lambda.re, d.delta1.re, d.delta1.im, d.delta2.re, d.delta2.im, d.rho.re, d.d_plus.re, d.d_minus.re]);
    }
    out
}

pub fn eigenvalues_csv(kind: &str, eigs: &[Eigenvalue]) -> String {
    let mut out = String::from("kind,lambda,multiplicity\n");
    for e in eigs {
        let _ = writeln!(out, "{kind},{},{}", fmt17(e.lambda), e.multiplicity);
    }
    out
}

pub fn resonances_csv(res: &[Resonance]) -> String {
    let mut out = String::from("re,im,multiplicity,real\n");
    for r in res {
        let _ = writeln!(out, "{},{},{},{}", fmt17(r.z.re), fmt17(r.z.im), r.multiplicity, r.real);
    }
    out
}

pub fn reconstruction_csv(rows: &[ReconstructionRow]) -> String {
    let mut out = String::from("lambda,d_plus,d_plus_rec,d_minus,d_minus_rec,mu1,mu1_rec,rho,rho_rec\n");
    for r in rows {
        row(&mut out, &[r.lambda, r.d_plus, r.d_plus_rec, r.d_minus, r.d_minus_rec, r.mu1, r.mu1_rec, r.rho, r.rho_rec]);
    }
    out
}
