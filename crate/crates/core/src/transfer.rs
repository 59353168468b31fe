//! Transfer matrices for the planar eigenvalue system.
//!
//! Between lattice points the solution vector `(psi', psi)` obeys the linear
//! system with coefficient matrix `[[0, q - E], [1, 0]]`; a delta of
//! strength `v` acts as the unipotent matrix `[[1, v], [0, 1]]`. All
//! propagators are symplectic, i.e. land in SL(2, R), and this module also
//! provides the polar splitting of such matrices into a positive
//! symmetric factor and a rotation.

use crate::apmodels::{GeneralizedPotential, PotentialSampler};
use crate::error::{Error, Result};
use crate::prufer::{self, wrap_angle, IntegratorConfig};

/// A real 2x2 matrix acting on column vectors `(psi', psi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2 {
    pub d11: f64,
    pub d12: f64,
    pub d21: f64,
    pub d22: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 {
        d11: 1.0,
        d12: 0.0,
        d21: 0.0,
        d22: 1.0,
    };

    pub fn new(d11: f64, d12: f64, d21: f64, d22: f64) -> Self {
        Self { d11, d12, d21, d22 }
    }

    pub fn det(&self) -> f64 {
        self.d11 * self.d22 - self.d12 * self.d21
    }

    pub fn apply(&self, v: (f64, f64)) -> (f64, f64) {
        (
            self.d11 * v.0 + self.d12 * v.1,
            self.d21 * v.0 + self.d22 * v.1,
        )
    }

    pub fn trace(&self) -> f64 {
        self.d11 + self.d22
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        (self.d11 - other.d11)
            .abs()
            .max((self.d12 - other.d12).abs())
            .max((self.d21 - other.d21).abs())
            .max((self.d22 - other.d22).abs())
    }
}

impl std::ops::Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        Mat2 {
            d11: self.d11 * rhs.d11 + self.d12 * rhs.d21,
            d12: self.d11 * rhs.d12 + self.d12 * rhs.d22,
            d21: self.d21 * rhs.d11 + self.d22 * rhs.d21,
            d22: self.d21 * rhs.d12 + self.d22 * rhs.d22,
        }
    }
}

/// The unipotent action of a delta interaction of strength `v`.
pub fn jump_matrix(v: f64) -> Mat2 {
    Mat2::new(1.0, v, 0.0, 1.0)
}

/// Fundamental matrix of the gap system over `[x_from, x_to]`, normalized to
/// the identity at `x_from`, by classical fixed-step Runge-Kutta.
pub fn propagate_gap(
    q: &PotentialSampler,
    energy: f64,
    x_from: f64,
    x_to: f64,
    cfg: &IntegratorConfig,
) -> Result<Mat2> {
    let len = x_to - x_from;
    if len == 0.0 {
        return Ok(Mat2::IDENTITY);
    }
    // Clamp stage positions into the open gap so a background jumping at the
    // right endpoint is sampled by its limit from inside the gap.
    let lo = x_from.min(x_to);
    let hi_minus = x_from.max(x_to) - (x_to - x_from).abs() * 1e-12;
    let coeff = |x: f64| -> Result<f64> {
        let qv = q.value(x.clamp(lo, hi_minus));
        if !qv.is_finite() {
            return Err(Error::NonFinitePotential { x });
        }
        Ok(qv - energy)
    };
    // M' = K(x) M with K = [[0, q - E], [1, 0]].
    let rhs = |k: f64, m: &Mat2| Mat2::new(k * m.d21, k * m.d22, m.d11, m.d12);
    let n = (len.abs() / cfg.h_max).ceil() as u64;
    let h = len / n as f64;
    let mut m = Mat2::IDENTITY;
    for step in 0..n {
        let x = x_from + len * step as f64 / n as f64;
        let c0 = coeff(x)?;
        let ch = coeff(x + h / 2.0)?;
        let c1 = coeff(x + h)?;
        let k1 = rhs(c0, &m);
        let k2 = rhs(ch, &add_scaled(&m, &k1, h / 2.0));
        let k3 = rhs(ch, &add_scaled(&m, &k2, h / 2.0));
        let k4 = rhs(c1, &add_scaled(&m, &k3, h));
        m = Mat2::new(
            m.d11 + h / 6.0 * (k1.d11 + 2.0 * k2.d11 + 2.0 * k3.d11 + k4.d11),
            m.d12 + h / 6.0 * (k1.d12 + 2.0 * k2.d12 + 2.0 * k3.d12 + k4.d12),
            m.d21 + h / 6.0 * (k1.d21 + 2.0 * k2.d21 + 2.0 * k3.d21 + k4.d21),
            m.d22 + h / 6.0 * (k1.d22 + 2.0 * k2.d22 + 2.0 * k3.d22 + k4.d22),
        );
    }
    let drift = (m.det() - 1.0).abs();
    if drift > 1e-8 {
        return Err(Error::DeterminantDrift { drift, tol: 1e-8 });
    }
    Ok(m)
}

fn add_scaled(m: &Mat2, k: &Mat2, s: f64) -> Mat2 {
    Mat2::new(
        m.d11 + s * k.d11,
        m.d12 + s * k.d12,
        m.d21 + s * k.d21,
        m.d22 + s * k.d22,
    )
}

/// Closed-form gap propagator for a constant background `q0`.
///
/// With `k^2 = E - q0` the solution is trigonometric (`k^2 > 0`), hyperbolic
/// (`k^2 < 0`) or polynomial (`k^2 = 0`); near `k^2 = 0` the entries are
/// evaluated by their power series in `k^2`, which joins the three branches
/// analytically. The determinant is 1 identically.
pub fn exact_propagator_constant(q0: f64, energy: f64, length: f64) -> Mat2 {
    let k2 = energy - q0;
    let l = length;
    let z = k2 * l * l;
    if z.abs() < 1e-9 {
        // cos(sqrt(z)) and sin(sqrt(z))/sqrt(z) as series in z.
        let c = 1.0 - z / 2.0 + z * z / 24.0 - z * z * z / 720.0;
        let s = 1.0 - z / 6.0 + z * z / 120.0 - z * z * z / 5040.0;
        return Mat2::new(c, -k2 * l * s, l * s, c);
    }
    if k2 > 0.0 {
        let k = k2.sqrt();
        let (s, c) = (k * l).sin_cos();
        Mat2::new(c, -k * s, s / k, c)
    } else {
        let kap = (-k2).sqrt();
        let (s, c) = ((kap * l).sinh(), (kap * l).cosh());
        Mat2::new(c, kap * s, s / kap, c)
    }
}

/// The factors of the splitting `D = A U` with `A` symmetric positive
/// definite symplectic and `U` a rotation: `A = [[r, z], [z, (1 + z^2)/r]]`
/// and `U` the rotation by `vartheta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarDecomp {
    pub r: f64,
    /// Rotation angle in `(-pi, pi]`.
    pub vartheta: f64,
    pub z: f64,
}

impl PolarDecomp {
    pub fn symmetric_part(&self) -> Mat2 {
        Mat2::new(self.r, self.z, self.z, (1.0 + self.z * self.z) / self.r)
    }

    pub fn rotation_part(&self) -> Mat2 {
        let (s, c) = self.vartheta.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    pub fn reconstruct(&self) -> Mat2 {
        self.symmetric_part() * self.rotation_part()
    }
}

const POLAR_DET_TOL: f64 = 1e-6;

/// Splits a matrix with determinant 1 as `D = A U`.
///
/// `A` is the principal square root of `D D^T`, computed in closed form:
/// for a symmetric positive definite `S` with `det S = 1`,
/// `sqrt(S) = (S + I) / sqrt(tr S + 2)`. Then `U = A^{-1} D`, and the
/// rotation angle is read off as `atan2(U_21, U_11)`.
pub fn polar_decompose(d: &Mat2) -> Result<PolarDecomp> {
    let drift = (d.det() - 1.0).abs();
    if drift > POLAR_DET_TOL || drift.is_nan() {
        return Err(Error::DeterminantDrift {
            drift,
            tol: POLAR_DET_TOL,
        });
    }
    let s11 = d.d11 * d.d11 + d.d12 * d.d12;
    let s12 = d.d11 * d.d21 + d.d12 * d.d22;
    let s22 = d.d21 * d.d21 + d.d22 * d.d22;
    let norm = (s11 + s22 + 2.0).sqrt();
    let r = (s11 + 1.0) / norm;
    let z = s12 / norm;
    // A^{-1} = [[a22, -a12], [-a12, a11]] since det A = 1.
    let a22 = (s22 + 1.0) / norm;
    let u11 = a22 * d.d11 - z * d.d21;
    let u21 = -z * d.d11 + r * d.d21;
    Ok(PolarDecomp {
        r,
        vartheta: u21.atan2(u11),
        z,
    })
}

/// Coordinates `(r cos vartheta, r sin vartheta, z)` of the polar splitting;
/// a bijection onto R^3 minus the z-axis.
pub fn g_map(d: &Mat2) -> Result<(f64, f64, f64)> {
    let p = polar_decompose(d)?;
    Ok((p.r * p.vartheta.cos(), p.r * p.vartheta.sin(), p.z))
}

/// Cross-validates the matrix route against the scalar angle flow.
///
/// Pushes the unit vector `(cos xi, sin xi)` through gap propagators and
/// jump matrices, reads the angle `atan2(psi, psi')` at every lattice point,
/// and returns the largest deviation (mod 2 pi) from the angles recorded by
/// [`prufer::evolve`]. The vector is renormalized after every step, so
/// hyperbolic growth cannot overflow.
pub fn matrix_vs_angle_check(
    p: &GeneralizedPotential,
    energy: f64,
    xi: f64,
    n_steps: i64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    if n_steps == 0 {
        return Ok(0.0);
    }
    let mut cfg_rec = *cfg;
    cfg_rec.record_lattice = true;
    let traj = prufer::evolve(p, energy, xi, n_steps, &cfg_rec)?;
    let origin = p.gamma().origin();
    let mut w = (xi.cos(), xi.sin());
    let mut worst = 0.0f64;
    for n in 0..n_steps {
        let a = p.gamma().position(n) + origin;
        let b = p.gamma().position(n + 1) + origin;
        let m = propagate_gap(p.q(), energy, a, b, cfg)?;
        w = m.apply(w);
        w = jump_matrix(p.strength(n + 1)).apply(w);
        let norm = (w.0 * w.0 + w.1 * w.1).sqrt();
        w = (w.0 / norm, w.1 / norm);
        let matrix_angle = w.1.atan2(w.0);
        let lift = traj.lattice_angles[(n + 1) as usize].2;
        worst = worst.max(wrap_angle(matrix_angle - lift).abs());
    }
    Ok(worst)
}
