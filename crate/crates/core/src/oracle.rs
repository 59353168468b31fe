//! Independent high-precision references.
//!
//! None of these routines reuse the Runge-Kutta angle flow: constant
//! backgrounds have closed-form rotation numbers, periodic configurations
//! reduce to the rotation number of a circle map tabulated once per period,
//! and piecewise-constant backgrounds evolve exactly through products of
//! constant-coefficient propagators and jump matrices. They exist to check
//! the production path, so they must not share its numerics.

use std::f64::consts::{FRAC_PI_2, TAU};

use crate::apmodels::{GeneralizedPotential, PotentialSampler};
use crate::error::{Error, Result};
use crate::prufer::{self, wrap_angle, AngleTrajectory, IntegratorConfig};
use crate::transfer::{exact_propagator_constant, jump_matrix};

/// Rotation number of the constant-background operator without deltas:
/// `sqrt(E - q0)` above the background level, zero below it.
pub fn closed_form_rho_constant(q0: f64, e: f64) -> f64 {
    if e > q0 {
        (e - q0).sqrt()
    } else {
        0.0
    }
}

/// Discriminant (monodromy trace) of the Kronig-Penney operator with free
/// background, spacing `length` and delta strength `v`:
/// `2 cos(k L) + v sin(k L) / k` with `k = sqrt(E)`, continued analytically
/// through `E <= 0`. Energies with `|discriminant| > 2` lie in spectral gaps.
pub fn kp_discriminant(e: f64, length: f64, v: f64) -> f64 {
    assert!(length > 0.0, "lattice spacing must be positive");
    let z = e * length * length;
    if z.abs() < 1e-9 {
        let c = 1.0 - z / 2.0 + z * z / 24.0 - z * z * z / 720.0;
        let s = 1.0 - z / 6.0 + z * z / 120.0 - z * z * z / 5040.0;
        return 2.0 * c + v * length * s;
    }
    if e > 0.0 {
        let k = e.sqrt();
        2.0 * (k * length).cos() + v * (k * length).sin() / k
    } else {
        let kap = (-e).sqrt();
        2.0 * (kap * length).cosh() + v * (kap * length).sinh() / kap
    }
}

const PERIOD_CHECK_WINDOW: i64 = 50;

/// A potential verified to be periodic: shifting by `lattice_period` lattice
/// indices reproduces it, and the corresponding spatial period is
/// `x_{lattice_period}`.
#[derive(Clone, Debug)]
pub struct PeriodicSpec {
    potential: GeneralizedPotential,
    lattice_period: i64,
    spatial_period: f64,
}

impl PeriodicSpec {
    /// Verifies periodicity pointwise on a test window: lattice positions
    /// and delta strengths to 1e-9 / 1e-12, and the background on interior
    /// samples of every windowed gap to 1e-9.
    pub fn new(potential: GeneralizedPotential, lattice_period: i64) -> Result<Self> {
        if lattice_period < 1 {
            return Err(Error::InvalidArgument(format!(
                "lattice period must be at least 1, got {lattice_period}"
            )));
        }
        let shifted = potential.shift(lattice_period);
        let gamma = potential.gamma();
        for i in -PERIOD_CHECK_WINDOW..=PERIOD_CHECK_WINDOW {
            let dx = (shifted.gamma().position(i) - gamma.position(i)).abs();
            if dx > 1e-9 {
                return Err(Error::NotPeriodic {
                    period: lattice_period,
                    reason: format!("lattice point {i} moves by {dx:e} under the shift"),
                });
            }
            let dv = (shifted.strength(i) - potential.strength(i)).abs();
            if dv > 1e-12 {
                return Err(Error::NotPeriodic {
                    period: lattice_period,
                    reason: format!("delta strength {i} changes by {dv:e} under the shift"),
                });
            }
        }
        for i in -PERIOD_CHECK_WINDOW..PERIOD_CHECK_WINDOW {
            let a = gamma.position(i);
            let g = gamma.gap(i);
            for frac in [0.21, 0.5, 0.83] {
                let x = a + frac * g;
                let dq = (shifted.q_at(x) - potential.q_at(x)).abs();
                if dq > 1e-9 {
                    return Err(Error::NotPeriodic {
                        period: lattice_period,
                        reason: format!("background changes by {dq:e} at x = {x}"),
                    });
                }
            }
        }
        let spatial_period = gamma.position(lattice_period);
        Ok(Self {
            potential,
            lattice_period,
            spatial_period,
        })
    }

    pub fn potential(&self) -> &GeneralizedPotential {
        &self.potential
    }

    pub fn lattice_period(&self) -> i64 {
        self.lattice_period
    }

    pub fn spatial_period(&self) -> f64 {
        self.spatial_period
    }
}

/// Grid value at which refinement of the circle-map tabulation stops even
/// if two consecutive grids still disagree.
const CIRCLE_GRID_CAP: usize = 1 << 14;
/// Two consecutive grid refinements must agree to this much.
const CIRCLE_GRID_STABILIZATION: f64 = 1e-6;

/// Rotation number of a periodic configuration through its one-period
/// circle map.
///
/// The map `Xi -> theta_E(x_p; Xi)` is an increasing lift of a circle
/// homeomorphism: it is tabulated once on a grid of `[0, 2 pi)`, extended by
/// equivariance, and iterated `iterations` times by monotone piecewise
/// linear interpolation. The returned value is the angle advance per unit
/// length, `(g^n(0) - 0) / (n L)`. The grid doubles until two consecutive
/// tabulations agree to 1e-6 (starting from `grid_size`, capped at 2^14).
pub fn circle_map_rho(
    spec: &PeriodicSpec,
    e: f64,
    grid_size: usize,
    iterations: usize,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    if grid_size < 16 {
        return Err(Error::InvalidArgument(format!(
            "grid_size must be at least 16, got {grid_size}"
        )));
    }
    if iterations < 1 {
        return Err(Error::InvalidArgument(
            "iterations must be at least 1".into(),
        ));
    }
    let mut tab_cfg = *cfg;
    tab_cfg.record_lattice = false;

    let mut grid = grid_size;
    let mut prev: Option<f64> = None;
    loop {
        let lift = tabulate_lift(spec, e, grid, &tab_cfg)?;
        match check_monotone(&lift) {
            Ok(()) => {}
            Err(index) => {
                if grid < CIRCLE_GRID_CAP {
                    grid *= 2;
                    continue;
                }
                return Err(Error::NonMonotoneLift { index });
            }
        }
        let mut y = 0.0f64;
        for _ in 0..iterations {
            y = interpolate_lift(&lift, y);
        }
        let rho = y / (iterations as f64 * spec.spatial_period);
        if let Some(p) = prev {
            if (rho - p).abs() < CIRCLE_GRID_STABILIZATION {
                return Ok(rho);
            }
        }
        if grid >= CIRCLE_GRID_CAP {
            return Ok(rho);
        }
        prev = Some(rho);
        grid *= 2;
    }
}

fn tabulate_lift(
    spec: &PeriodicSpec,
    e: f64,
    grid: usize,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    let mut lift = Vec::with_capacity(grid);
    for j in 0..grid {
        let xi = TAU * j as f64 / grid as f64;
        let traj = prufer::evolve(spec.potential(), e, xi, spec.lattice_period(), cfg)?;
        lift.push(traj.final_angle());
    }
    Ok(lift)
}

fn check_monotone(lift: &[f64]) -> std::result::Result<(), usize> {
    let n = lift.len();
    for j in 0..n {
        let next = if j + 1 < n {
            lift[j + 1]
        } else {
            lift[0] + TAU
        };
        if next <= lift[j] {
            return Err(j);
        }
    }
    Ok(())
}

/// Evaluates the piecewise linear extension of the tabulated lift at `y`,
/// using `g(y + 2 pi) = g(y) + 2 pi`.
fn interpolate_lift(lift: &[f64], y: f64) -> f64 {
    let n = lift.len() as f64;
    let turns = (y / TAU).floor();
    let frac = y - TAU * turns;
    let t = (frac / TAU * n).min(n - 1e-9).max(0.0);
    let j = t as usize;
    let g0 = lift[j];
    let g1 = if j + 1 < lift.len() {
        lift[j + 1]
    } else {
        lift[0] + TAU
    };
    g0 + (g1 - g0) * (t - j as f64) + TAU * turns
}

const BRANCH_SAMPLE_CAP: usize = 1 << 14;

/// Exact angle evolution for backgrounds that are constant on every lattice
/// gap (constant or piecewise-constant families).
///
/// Each gap is crossed by the closed-form constant-coefficient propagator;
/// the angle lift is recovered by evaluating the propagator at enough
/// interior positions that consecutive reduced angles differ by less than a
/// quarter turn, doubling the sampling on failure. Jumps are applied as
/// matrices and their lift contribution read off as a principal-value angle
/// difference, which is exact because a unipotent action moves the argument
/// by less than pi.
pub fn exact_piecewise_evolve(
    p: &GeneralizedPotential,
    e: f64,
    xi: f64,
    n_steps: i64,
) -> Result<AngleTrajectory> {
    if n_steps < 1 {
        return Err(Error::InvalidArgument(format!(
            "n_steps must be at least 1, got {n_steps}"
        )));
    }
    match p.q() {
        PotentialSampler::Constant { .. } | PotentialSampler::PiecewiseConstant { .. } => {}
        PotentialSampler::TrigPoly { .. } => {
            return Err(Error::OracleUnsupported {
                reason: "background must be constant on every lattice gap".into(),
            })
        }
    }
    let gamma = p.gamma();
    let mut theta = xi;
    let mut w = (xi.cos(), xi.sin());
    let mut lattice_angles = Vec::with_capacity(n_steps as usize + 1);
    lattice_angles.push((0, 0.0, xi));

    for n in 0..n_steps {
        let a = gamma.position(n);
        let gap = gamma.gap(n);
        let q_gap = gap_background(p, a, gap, n)?;

        // Branch-tracked lift across the gap.
        let mut samples = initial_samples(gap, e, q_gap);
        let crossed = loop {
            match track_gap(w, q_gap, e, gap, samples) {
                Some(dtheta) => break dtheta,
                None => {
                    samples *= 2;
                    if samples > BRANCH_SAMPLE_CAP {
                        return Err(Error::BranchTracking { x: a }.at_step(n));
                    }
                }
            }
        };
        theta += crossed;

        // Advance the vector, renormalizing to stop hyperbolic growth.
        w = exact_propagator_constant(q_gap, e, gap).apply(w);
        let norm = (w.0 * w.0 + w.1 * w.1).sqrt();
        w = (w.0 / norm, w.1 / norm);

        // Delta jump carried by the right endpoint.
        let before = w.1.atan2(w.0);
        w = jump_matrix(p.strength(n + 1)).apply(w);
        let norm = (w.0 * w.0 + w.1 * w.1).sqrt();
        w = (w.0 / norm, w.1 / norm);
        let after = w.1.atan2(w.0);
        theta += wrap_angle(after - before);

        lattice_angles.push((n + 1, gamma.position(n + 1), theta));
    }
    Ok(AngleTrajectory {
        energy: e,
        initial: xi,
        lattice_angles,
    })
}

/// Reads the constant background value on the gap starting at `a`,
/// verifying constancy on five interior samples.
fn gap_background(p: &GeneralizedPotential, a: f64, gap: f64, n: i64) -> Result<f64> {
    let q0 = p.q_at(a + 0.5 * gap);
    for frac in [0.1, 0.3, 0.7, 0.9] {
        let q = p.q_at(a + frac * gap);
        if q != q0 {
            return Err(Error::OracleUnsupported {
                reason: format!("background is not constant on gap {n}"),
            });
        }
    }
    if !q0.is_finite() {
        return Err(Error::NonFinitePotential { x: a });
    }
    Ok(q0)
}

fn initial_samples(gap: f64, e: f64, q_gap: f64) -> usize {
    let scale = gap * (1.0 + (e - q_gap).abs().sqrt()) * 4.0;
    (scale.ceil() as usize).max(8)
}

/// Accumulates the continuous angle change of `M(t) w` as `t` runs across
/// the gap; `None` when some sample-to-sample change reaches a quarter turn.
fn track_gap(w: (f64, f64), q_gap: f64, e: f64, gap: f64, samples: usize) -> Option<f64> {
    let mut prev = w.1.atan2(w.0);
    let mut acc = 0.0;
    for j in 1..=samples {
        let t = gap * j as f64 / samples as f64;
        let wj = exact_propagator_constant(q_gap, e, t).apply(w);
        let ang = wj.1.atan2(wj.0);
        let d = wrap_angle(ang - prev);
        if d.abs() >= FRAC_PI_2 {
            return None;
        }
        acc += d;
        prev = ang;
    }
    Some(acc)
}
