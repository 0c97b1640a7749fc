//! Entire functions of the spectral parameter.
//!
//! `cos(√w x)` and `sin(√w x)/√w` are entire in `w`; near `w = 0` they are
//! evaluated from their Taylor series so that no branch of the square root
//! leaks into the result.

use crate::C64;

const SERIES_CUTOFF: f64 = 1e-2;

/// `cos(√w · x)`.
pub fn cos_sqrt(w: C64, x: f64) -> C64 {
    let u = w * (x * x);
    if u.norm() < SERIES_CUTOFF {
        // Σ (−u)^k / (2k)!
        let mut term = C64::new(1.0, 0.0);
        let mut sum = term;
        for k in 1..10 {
            let k = k as f64;
            term = -term * u / ((2.0 * k - 1.0) * (2.0 * k));
            sum += term;
        }
        sum
    } else {
        (w.sqrt() * x).cos()
    }
}

/// `sin(√w · x) / √w`, equal to `x` at `w = 0`.
pub fn sinc_sqrt(w: C64, x: f64) -> C64 {
    let u = w * (x * x);
    if u.norm() < SERIES_CUTOFF {
        let mut term = C64::new(x, 0.0);
        let mut sum = term;
        for k in 1..10 {
            let k = k as f64;
            term = -term * u / ((2.0 * k) * (2.0 * k + 1.0));
            sum += term;
        }
        sum
    } else {
        let z = w.sqrt();
        (z * x).sin() / z
    }
}

/// Principal square root with `Im ≥ 0` on the cut, used for `z = √λ`.
pub fn sqrt_upper(lambda: C64) -> C64 {
    let z = lambda.sqrt();
    if z.im < 0.0 {
        -z
    } else {
        z
    }
}

/// Relative distance helper: `|a − b| / max(1, |b|)`.
pub fn rel_err(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
            }
            dp = nf * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_matches_direct_across_cutoff() {
        for &w in &[
            C64::new(0.009, 0.0),
            C64::new(-0.011, 0.003),
            C64::new(0.0, 0.0099),
            C64::new(0.0101, -0.0001),
        ] {
            let z = w.sqrt();
            let c = (z * 1.0).cos();
            let s = if z.norm() == 0.0 { C64::new(1.0, 0.0) } else { z.sin() / z };
            assert!((cos_sqrt(w, 1.0) - c).norm() < 1e-15);
            assert!((sinc_sqrt(w, 1.0) - s).norm() < 1e-15);
        }
    }

    #[test]
    fn negative_argument_is_hyperbolic() {
        let w = C64::new(-4.0, 0.0);
        assert!((cos_sqrt(w, 0.5) - C64::new(1.0f64.cosh(), 0.0)).norm() < 1e-14);
        assert!((sinc_sqrt(w, 0.5) - C64::new(1.0f64.sinh() / 2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1usize, 2, 5, 8, 16] {
            let (x, w) = gauss_legendre(n);
            for p in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn zero_limit() {
        assert_eq!(cos_sqrt(C64::new(0.0, 0.0), 3.0), C64::new(1.0, 0.0));
        assert_eq!(sinc_sqrt(C64::new(0.0, 0.0), 3.0), C64::new(3.0, 0.0));
    }
}
