//! Small fixed-size matrix helpers.

use serde::{Deserialize, Serialize};

use crate::C64;

/// Real symmetric 2×2 matrix `[[a11, a12], [a12, a22]]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

/// Real 2×2 orthogonal matrix stored row-major; columns are eigenvectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Orth2(pub [[f64; 2]; 2]);

impl Default for Orth2 {
    fn default() -> Self {
        Orth2::identity()
    }
}

impl Orth2 {
    pub fn identity() -> Self {
        Orth2([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Orth2([[c, -s], [s, c]])
    }

    pub fn transpose(&self) -> Self {
        let m = self.0;
        Orth2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn is_identity(&self) -> bool {
        *self == Orth2::identity()
    }

    pub fn col(&self, j: usize) -> [f64; 2] {
        [self.0[0][j], self.0[1][j]]
    }
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 { a11: 0.0, a12: 0.0, a22: 0.0 };

    pub fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Sym2 { a11, a12, a22 }
    }

    pub fn diag(a11: f64, a22: f64) -> Self {
        Sym2 { a11, a12: 0.0, a22 }
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    pub fn add(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.a11 + o.a11, self.a12 + o.a12, self.a22 + o.a22)
    }

    pub fn scale(&self, s: f64) -> Sym2 {
        Sym2::new(self.a11 * s, self.a12 * s, self.a22 * s)
    }

    pub fn is_diagonal(&self) -> bool {
        self.a12 == 0.0
    }

    /// `|a11| + |a22| + 2|a12|`, the entrywise l1 norm.
    pub fn l1(&self) -> f64 {
        self.a11.abs() + self.a22.abs() + 2.0 * self.a12.abs()
    }

    pub fn max_abs(&self) -> f64 {
        self.a11.abs().max(self.a22.abs()).max(self.a12.abs())
    }

    /// `Qᵀ S Q`.
    pub fn conjugate(&self, q: &Orth2) -> Sym2 {
        let q = q.0;
        let s = [[self.a11, self.a12], [self.a12, self.a22]];
        let mut r = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        acc += q[k][i] * s[k][l] * q[l][j];
                    }
                }
                r[i][j] = acc;
            }
        }
        Sym2::new(r[0][0], 0.5 * (r[0][1] + r[1][0]), r[1][1])
    }

    /// Ascending eigenvalues and an orthogonal `Q` with `S = Q diag(e) Qᵀ`.
    /// Diagonal input keeps the identity (or a swap when the diagonal is
    /// descending), so ties never introduce a spurious rotation.
    pub fn eigen(&self) -> ([f64; 2], Orth2) {
        if self.a12 == 0.0 {
            return if self.a11 <= self.a22 {
                ([self.a11, self.a22], Orth2::identity())
            } else {
                ([self.a22, self.a11], Orth2([[0.0, 1.0], [1.0, 0.0]]))
            };
        }
        let m = 0.5 * (self.a11 + self.a22);
        let r = (0.5 * (self.a11 - self.a22)).hypot(self.a12);
        let (l1, l2) = (m - r, m + r);
        let va = [self.a12, l1 - self.a11];
        let vb = [l1 - self.a22, self.a12];
        let v = if va[0].hypot(va[1]) >= vb[0].hypot(vb[1]) { va } else { vb };
        let n = v[0].hypot(v[1]);
        let (c, s) = (v[0] / n, v[1] / n);
        // first column (c, s); second column (−s, c) keeps det = +1
        ([l1, l2], Orth2([[c, -s], [s, c]]))
    }
}

/// Complex 2×2 matrix, row-major.
pub type Cm2 = [[C64; 2]; 2];

pub fn cm2_zero() -> Cm2 {
    [[C64::new(0.0, 0.0); 2]; 2]
}

pub fn cm2_identity() -> Cm2 {
    let mut m = cm2_zero();
    m[0][0] = C64::new(1.0, 0.0);
    m[1][1] = C64::new(1.0, 0.0);
    m
}

pub fn cm2_mul(a: &Cm2, b: &Cm2) -> Cm2 {
    let mut r = cm2_zero();
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    r
}

pub fn cm2_add(a: &Cm2, b: &Cm2) -> Cm2 {
    let mut r = *a;
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] += b[i][j];
        }
    }
    r
}

pub fn cm2_scale(a: &Cm2, s: C64) -> Cm2 {
    let mut r = *a;
    for row in r.iter_mut() {
        for v in row.iter_mut() {
            *v *= s;
        }
    }
    r
}

pub fn cm2_from_sym(s: &Sym2) -> Cm2 {
    [
        [C64::new(s.a11, 0.0), C64::new(s.a12, 0.0)],
        [C64::new(s.a12, 0.0), C64::new(s.a22, 0.0)],
    ]
}

/// Spectral norm of a complex 2×2 matrix.
pub fn cm2_norm2(a: &Cm2) -> f64 {
    // largest singular value from the Hermitian Gram matrix
    let g11 = a[0][0].norm_sqr() + a[1][0].norm_sqr();
    let g22 = a[0][1].norm_sqr() + a[1][1].norm_sqr();
    let g12 = a[0][0].conj() * a[0][1] + a[1][0].conj() * a[1][1];
    let m = 0.5 * (g11 + g22);
    let d = (0.25 * (g11 - g22) * (g11 - g22) + g12.norm_sqr()).sqrt();
    (m + d).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn eigen_reconstructs(a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64) {
            let s = Sym2::new(a, b, c);
            let (e, q) = s.eigen();
            prop_assert!(e[0] <= e[1]);
            let back = Sym2::diag(e[0], e[1]).conjugate(&q.transpose());
            let scale = s.max_abs().max(1.0);
            prop_assert!((back.a11 - a).abs() < 1e-12 * scale);
            prop_assert!((back.a12 - b).abs() < 1e-12 * scale);
            prop_assert!((back.a22 - c).abs() < 1e-12 * scale);
            let d = s.conjugate(&q);
            prop_assert!(d.a12.abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn diagonal_ties_keep_identity() {
        let (e, q) = Sym2::diag(2.0, 2.0).eigen();
        assert_eq!(e, [2.0, 2.0]);
        assert!(q.is_identity());
    }

    #[test]
    fn norm2_of_diag() {
        let mut m = cm2_zero();
        m[0][0] = C64::new(0.0, 3.0);
        m[1][1] = C64::new(-2.0, 0.0);
        assert!((cm2_norm2(&m) - 3.0).abs() < 1e-14);
    }
}
