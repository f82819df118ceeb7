//! Small dense 2×2 complex matrices.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

pub type C64 = Complex64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Row-major 2×2 complex matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[C64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[C64 { re: 0.0, im: 0.0 }; 2]; 2]);

    pub fn identity() -> Self {
        Self::diag(re(1.0), re(1.0))
    }

    pub fn new(a: C64, b: C64, c_: C64, d: C64) -> Self {
        Mat2([[a, b], [c_, d]])
    }

    pub fn real(a: f64, b: f64, c_: f64, d: f64) -> Self {
        Mat2([[re(a), re(b)], [re(c_), re(d)]])
    }

    pub fn diag(a: C64, d: C64) -> Self {
        Mat2([[a, C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), d]])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[i][j]
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> C64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn scale(&self, s: C64) -> Self {
        let m = self.0;
        Mat2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d.norm() == 0.0 || !d.is_finite() {
            return None;
        }
        let m = self.0;
        Some(Mat2([[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]]).scale(d.inv()))
    }

    pub fn commutator(&self, other: &Mat2) -> Mat2 {
        *self * *other - *other * *self
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        let m = self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|z| z.is_finite())
    }

    /// Pack into 8 reals (re, im row-major) for the ODE engine.
    pub fn pack(&self, out: &mut [f64]) {
        for (k, z) in self.0.iter().flatten().enumerate() {
            out[2 * k] = z.re;
            out[2 * k + 1] = z.im;
        }
    }

    pub fn unpack(v: &[f64]) -> Self {
        Mat2([[c(v[0], v[1]), c(v[2], v[3])], [c(v[4], v[5]), c(v[6], v[7])]])
    }

    /// Eigenvalues ordered by descending real part, ties by descending imaginary part.
    pub fn eigenvalues(&self) -> [C64; 2] {
        let half_tr = self.trace() * 0.5;
        let disc = (half_tr * half_tr - self.det()).sqrt();
        let mut ev = [half_tr + disc, half_tr - disc];
        if order_key(ev[1]) > order_key(ev[0]) {
            ev.swap(0, 1);
        }
        ev
    }

    /// Eigenvector for `lambda`, normalized to unit length.
    pub fn eigenvector(&self, lambda: C64) -> [C64; 2] {
        let m = self.0;
        let a = m[0][0] - lambda;
        let d = m[1][1] - lambda;
        // Pick the better-conditioned row of (M - λ)v = 0.
        let cand1 = [m[0][1], -a];
        let cand2 = [-d, m[1][0]];
        let n1 = cand1[0].norm_sqr() + cand1[1].norm_sqr();
        let n2 = cand2[0].norm_sqr() + cand2[1].norm_sqr();
        let v = if n1 >= n2 { cand1 } else { cand2 };
        let n = n1.max(n2).sqrt();
        if n == 0.0 {
            // M is scalar: any vector works; use the standard basis by index.
            return [re(1.0), re(0.0)];
        }
        [v[0] / n, v[1] / n]
    }

    /// Eigen-decomposition `M = H diag(λ) H⁻¹` with the crate-wide ordering.
    pub fn diagonalize(&self, rel_gap: f64) -> Option<([C64; 2], Mat2)> {
        let ev = self.eigenvalues();
        let scale = self.frobenius().max(f64::MIN_POSITIVE);
        if (ev[0] - ev[1]).norm() <= rel_gap * scale {
            return None;
        }
        let (v1, v2) = if self.0[0][1].norm() == 0.0 && self.0[1][0].norm() == 0.0 {
            // Diagonal input: keep standard basis vectors attached to their entries.
            if (self.0[0][0] - ev[0]).norm() <= (self.0[1][1] - ev[0]).norm() {
                ([re(1.0), re(0.0)], [re(0.0), re(1.0)])
            } else {
                ([re(0.0), re(1.0)], [re(1.0), re(0.0)])
            }
        } else {
            (self.eigenvector(ev[0]), self.eigenvector(ev[1]))
        };
        let h = Mat2([[v1[0], v2[0]], [v1[1], v2[1]]]);
        Some((ev, h))
    }
}

fn order_key(z: C64) -> (f64, f64) {
    (z.re, z.im)
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let (a, b) = (self.0, o.0);
        Mat2([[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        self + (-o)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale(re(-1.0))
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let (a, b) = (self.0, o.0);
        let mut r = [[C64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(r)
    }
}

/// Homogeneous determinant `u₁v₂ − v₁u₂` of two lines through the origin.
pub fn bracket(a: [C64; 2], b: [C64; 2]) -> C64 {
    a[0] * b[1] - a[1] * b[0]
}
