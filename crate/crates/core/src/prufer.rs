//! The Prüfer angle dynamics.
//!
//! Writing a solution of the eigenvalue system as `psi' + i psi = r e^{i
//! theta}`, the unwrapped angle `theta` obeys
//!
//! ```text
//! theta'(x) = cos^2 theta - (q(x) - E) sin^2 theta        off the lattice,
//! theta(x_n+) = theta(x_n-) + J(v_n, theta(x_n-))         on the lattice,
//! ```
//!
//! where `J` is the homotopy-defined jump of arguments produced by the delta
//! interaction of strength `v_n`. Solutions are taken right-continuous:
//! the recorded angle at a lattice point already includes its jump, and
//! integration then runs over the open gap to the left limit at the next
//! point.

use std::f64::consts::{PI, TAU};

use crate::apmodels::{GeneralizedPotential, PotentialSampler};
use crate::error::{Error, Result};

/// Unwrapped angle lift paired with its position: the integrator state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PruferLift {
    pub theta: f64,
    pub x: f64,
}

/// Fixed-step Runge-Kutta settings.
///
/// `h_max` must not exceed a quarter of the smallest lattice gap; the
/// default puts fifty substeps in the smallest gap. A substep whose angle
/// increment would exceed `substep_angle_cap` is halved recursively, which
/// keeps the recorded lift on its continuous branch.
#[derive(Clone, Copy, Debug)]
pub struct IntegratorConfig {
    pub h_max: f64,
    pub substep_angle_cap: f64,
    /// Record the angle at every lattice point (otherwise only endpoints).
    pub record_lattice: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self::for_spacing(1.0)
    }
}

impl IntegratorConfig {
    /// Defaults scaled to a lattice with minimum gap `min_gap`.
    pub fn for_spacing(min_gap: f64) -> Self {
        Self {
            h_max: min_gap / 50.0,
            substep_angle_cap: PI / 4.0,
            record_lattice: true,
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    fn check(&self, min_gap: f64) -> Result<()> {
        if !self.h_max.is_finite() || self.h_max <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "h_max must be positive and finite, got {}",
                self.h_max
            )));
        }
        if self.h_max > min_gap / 4.0 {
            return Err(Error::InvalidArgument(format!(
                "h_max = {} exceeds a quarter of the minimum lattice gap {}",
                self.h_max, min_gap
            )));
        }
        if self.substep_angle_cap <= 0.0 || self.substep_angle_cap.is_nan() {
            return Err(Error::InvalidArgument(
                "substep angle cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Angle trajectory sampled at lattice points, `theta(x_n) = theta(x_n+)`.
#[derive(Clone, Debug)]
pub struct AngleTrajectory {
    pub energy: f64,
    pub initial: f64,
    /// `(n, x_n, theta(x_n))`, strictly increasing in `x_n`; the angles are
    /// lift values, never reduced mod 2 pi.
    pub lattice_angles: Vec<(i64, f64, f64)>,
}

impl AngleTrajectory {
    pub fn final_entry(&self) -> (i64, f64, f64) {
        *self
            .lattice_angles
            .last()
            .expect("a trajectory records at least its initial point")
    }

    pub fn final_angle(&self) -> f64 {
        self.final_entry().2
    }

    pub fn final_x(&self) -> f64 {
        self.final_entry().1
    }

    /// Recorded angle at lattice index `n`, if present.
    pub fn angle_at(&self, n: i64) -> Option<f64> {
        self.lattice_angles.iter().find(|e| e.0 == n).map(|e| e.2)
    }
}

/// Reduce an angle difference to `(-pi, pi]`.
pub(crate) fn wrap_angle(d: f64) -> f64 {
    let mut r = d.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// Jump of arguments produced by the unipotent delta action.
///
/// The solution vector at a delta of strength `c` is mapped by
/// `(psi', psi) -> (psi' + c psi, psi)`; connecting this map to the identity
/// through `(psi', psi) -> (psi' + t c psi, psi)` keeps the second component
/// fixed, so the vector never crosses the horizontal axis unless it starts
/// there. The continuous change of its argument is therefore the
/// principal-value difference
///
/// ```text
/// J(c, Xi) = atan2(sin Xi, cos Xi + c sin Xi) - atan2(sin Xi, cos Xi),
/// ```
///
/// extended by zero where `sin Xi = 0`. `J` is continuous, vanishes at
/// multiples of pi, satisfies `|J| < pi`, and is 2 pi periodic in `Xi`.
pub fn jump_angle(c: f64, xi: f64) -> f64 {
    let s = xi.sin();
    if s == 0.0 {
        return 0.0;
    }
    let co = xi.cos();
    s.atan2(co + c * s) - s.atan2(co)
}

const HALVING_LIMIT: u32 = 40;

struct GapField<'a> {
    q: &'a PotentialSampler,
    energy: f64,
    /// Evaluation window `[lo, hi_minus]` inside the open gap. Stage
    /// positions are clamped into it so that a background with a jump at the
    /// gap's right end is always sampled by its one-sided limit from inside;
    /// for backgrounds continuous on the closed gap the clamp is a no-op up
    /// to a relative 1e-12.
    lo: f64,
    hi_minus: f64,
}

impl GapField<'_> {
    fn eval(&self, x: f64, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let xq = x.clamp(self.lo, self.hi_minus);
        c * c - (self.q.value(xq) - self.energy) * s * s
    }

    /// One classical RK4 substep; splits itself while the angle increment
    /// exceeds the cap.
    fn advance(&self, state: PruferLift, h: f64, cap: f64, depth: u32) -> Result<PruferLift> {
        let PruferLift { theta, x } = state;
        let k1 = self.eval(x, theta);
        let k2 = self.eval(x + h / 2.0, theta + h / 2.0 * k1);
        let k3 = self.eval(x + h / 2.0, theta + h / 2.0 * k2);
        let k4 = self.eval(x + h, theta + h * k3);
        let dtheta = h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !dtheta.is_finite() {
            return Err(Error::NonFinitePotential { x });
        }
        if dtheta.abs() <= cap {
            return Ok(PruferLift {
                theta: theta + dtheta,
                x: x + h,
            });
        }
        if depth >= HALVING_LIMIT {
            return Err(Error::StepCapExceeded {
                x,
                cap,
                limit: HALVING_LIMIT,
            });
        }
        let mid = self.advance(state, h / 2.0, cap, depth + 1)?;
        self.advance(mid, h / 2.0, cap, depth + 1)
    }
}

/// Integrates the angle ODE across `[x_from, x_to]`, an interval containing
/// no lattice point in its interior, and returns the left limit
/// `theta(x_to-)`. Positions are in the sampler's own coordinates.
pub fn integrate_gap(
    q: &PotentialSampler,
    energy: f64,
    theta0: f64,
    x_from: f64,
    x_to: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    integrate_directed(q, energy, theta0, x_from, x_to, cfg)
}

/// Same as [`integrate_gap`] but accepts either direction of traversal.
fn integrate_directed(
    q: &PotentialSampler,
    energy: f64,
    theta0: f64,
    x_from: f64,
    x_to: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let len = x_to - x_from;
    if len == 0.0 {
        return Ok(theta0);
    }
    let lo = x_from.min(x_to);
    let hi = x_from.max(x_to);
    let field = GapField {
        q,
        energy,
        lo,
        hi_minus: hi - (hi - lo) * 1e-12,
    };
    let n = (len.abs() / cfg.h_max).ceil() as u64;
    let h = len / n as f64;
    let mut state = PruferLift {
        theta: theta0,
        x: x_from,
    };
    for k in 0..n {
        state = field.advance(state, h, cfg.substep_angle_cap, 0)?;
        // Re-anchor position to suppress drift in long gaps.
        state.x = x_from + len * (k + 1) as f64 / n as f64;
    }
    Ok(state.theta)
}

/// Advances the right-continuous angle from lattice point `n` to `n + 1`:
/// integrates the open gap and applies the jump carried by point `n + 1`.
pub fn step_lattice(
    p: &GeneralizedPotential,
    energy: f64,
    theta_n: f64,
    n: i64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    cfg.check(p.gamma().min_gap())?;
    let origin = p.gamma().origin();
    let a = p.gamma().position(n) + origin;
    let b = p.gamma().position(n + 1) + origin;
    let left_limit = integrate_directed(p.q(), energy, theta_n, a, b, cfg)?;
    Ok(left_limit + jump_angle(p.strength(n + 1), left_limit))
}

/// Solves the angle system from `theta(x_0) = xi` through `n_steps` lattice
/// points and records the lift at each of them.
pub fn evolve(
    p: &GeneralizedPotential,
    energy: f64,
    xi: f64,
    n_steps: i64,
    cfg: &IntegratorConfig,
) -> Result<AngleTrajectory> {
    if n_steps < 1 {
        return Err(Error::InvalidArgument(format!(
            "n_steps must be at least 1, got {n_steps}"
        )));
    }
    cfg.check(p.gamma().min_gap())?;
    let mut lattice_angles = Vec::with_capacity(if cfg.record_lattice {
        n_steps as usize + 1
    } else {
        2
    });
    lattice_angles.push((0, 0.0, xi));
    let mut theta = xi;
    for n in 0..n_steps {
        theta = step_lattice(p, energy, theta, n, cfg).map_err(|e| e.at_step(n))?;
        if cfg.record_lattice || n == n_steps - 1 {
            lattice_angles.push((n + 1, p.gamma().position(n + 1), theta));
        }
    }
    Ok(AngleTrajectory {
        energy,
        initial: xi,
        lattice_angles,
    })
}

/// One-lattice-step angle increment `theta(x_1) - Xi` for an initial angle
/// with reduction `vartheta`.
///
/// Because the angle flow commutes with `Xi -> Xi + 2 k pi`, the increment
/// only depends on `vartheta = Xi mod 2 pi`, making this a well-defined
/// observable on the circle.
pub fn observable_increment(
    p: &GeneralizedPotential,
    energy: f64,
    vartheta: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let theta1 = step_lattice(p, energy, vartheta, 0, cfg).map_err(|e| e.at_step(0))?;
    Ok(theta1 - vartheta)
}

/// The `k`-th skew-product image of `(potential, reduced angle)`: the
/// potential shifted by `k` alongside the angle transported to lattice point
/// `k`, reduced mod 2 pi. Supports negative `k` by inverting jumps and
/// integrating gaps backwards; the family satisfies the group law in `k`.
pub fn skew_step(
    p: &GeneralizedPotential,
    energy: f64,
    vartheta: f64,
    k: i64,
    cfg: &IntegratorConfig,
) -> Result<(GeneralizedPotential, f64)> {
    cfg.check(p.gamma().min_gap())?;
    if k == 0 {
        return Ok((p.clone(), vartheta.rem_euclid(TAU)));
    }
    if k > 0 {
        let mut theta = vartheta;
        for n in 0..k {
            theta = step_lattice(p, energy, theta, n, cfg).map_err(|e| e.at_step(n))?;
        }
        return Ok((p.shift(k), theta.rem_euclid(TAU)));
    }
    let mut pot = p.clone();
    let mut theta = vartheta;
    for step in 0..(-k) {
        theta = step_back(&pot, energy, theta, cfg).map_err(|e| e.at_step(-step - 1))?;
        pot = pot.shift(-1);
    }
    Ok((pot, theta.rem_euclid(TAU)))
}

/// Transports the right-continuous angle at the origin of `p` back to the
/// previous lattice point.
///
/// The unipotent jump map is inverted exactly: the angle action of strength
/// `-c` undoes the action of strength `c`, since both changes are below pi
/// in magnitude.
fn step_back(
    p: &GeneralizedPotential,
    energy: f64,
    theta_at_origin: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let before_jump = theta_at_origin + jump_angle(-p.strength(0), theta_at_origin);
    let origin = p.gamma().origin();
    let a = origin; // x_0 in absolute coordinates
    let b = p.gamma().position(-1) + origin;
    integrate_directed(p.q(), energy, before_jump, a, b, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apmodels::{BiSequenceModel, PointSetModel, PotentialSampler};
    use std::f64::consts::FRAC_PI_2;

    fn free_on_integers() -> GeneralizedPotential {
        GeneralizedPotential::free(PointSetModel::integers())
    }

    fn kronig_penney(v: f64) -> GeneralizedPotential {
        GeneralizedPotential::new(
            PotentialSampler::zero(),
            BiSequenceModel::constant(v),
            PointSetModel::integers(),
        )
    }

    /// Independent jump oracle: finely sampled continuation of the argument
    /// along the connecting path.
    fn jump_by_path(c: f64, xi: f64, samples: usize) -> f64 {
        let (s, co) = (xi.sin(), xi.cos());
        let mut prev = s.atan2(co);
        let mut acc = 0.0;
        for j in 1..=samples {
            let t = j as f64 / samples as f64;
            let a = s.atan2(co + t * c * s);
            acc += wrap_angle(a - prev);
            prev = a;
        }
        acc
    }

    #[test]
    fn jump_vanishes_on_trivial_paths() {
        assert_eq!(jump_angle(0.0, 1.0), 0.0);
        assert_eq!(jump_angle(5.0, PI), 0.0);
        assert_eq!(jump_angle(-3.0, 0.0), 0.0);
    }

    #[test]
    fn jump_quarter_turn_example() {
        let j = jump_angle(1.0, FRAC_PI_2);
        assert!((j + PI / 4.0).abs() < 1e-12, "j = {j}");
    }

    #[test]
    fn jump_matches_path_continuation() {
        let mut worst = 0.0f64;
        for i in 0..60 {
            let c = -15.0 + i as f64 * 0.5;
            for k in 0..40 {
                let xi = -6.0 + 0.31 * k as f64;
                worst = worst.max((jump_angle(c, xi) - jump_by_path(c, xi, 4000)).abs());
            }
        }
        assert!(worst < 1e-10, "worst = {worst:e}");
    }

    #[test]
    fn jump_is_two_pi_periodic_and_bounded() {
        let mut x = 0.05f64;
        for i in 0..500 {
            let c = -40.0 + i as f64 * 0.16;
            x = (x * 1.37).rem_euclid(6.2) + 0.01;
            let d = (jump_angle(c, x + TAU) - jump_angle(c, x)).abs();
            assert!(d < 1e-12, "c = {c}, xi = {x}, d = {d:e}");
            assert!(jump_angle(c, x).abs() < PI);
        }
    }

    #[test]
    fn integrate_gap_free_speed_one() {
        let cfg = IntegratorConfig::default();
        let q = PotentialSampler::zero();
        let th = integrate_gap(&q, 1.0, 0.3, 0.0, 2.0, &cfg).unwrap();
        assert!((th - 2.3).abs() < 1e-11, "theta = {th}");
    }

    #[test]
    fn integrate_gap_arctan_closed_form() {
        let cfg = IntegratorConfig::default();
        let q = PotentialSampler::zero();
        let th = integrate_gap(&q, 0.0, 0.0, 0.0, 1.0, &cfg).unwrap();
        assert!((th - PI / 4.0).abs() < 1e-8, "theta = {th}");

        // Constant background at the matching energy reduces to the same flow.
        let q = PotentialSampler::constant(2.5);
        let th = integrate_gap(&q, 2.5, 0.0, 0.0, 3.0, &cfg).unwrap();
        assert!((th - 3f64.atan()).abs() < 1e-8, "theta = {th}");
    }

    #[test]
    fn integrate_gap_rejects_non_finite_background() {
        let cfg = IntegratorConfig::default();
        let q = PotentialSampler::constant(f64::NAN);
        match integrate_gap(&q, 1.0, 0.0, 0.0, 1.0, &cfg) {
            Err(Error::NonFinitePotential { .. }) => {}
            other => panic!("expected NonFinitePotential, got {other:?}"),
        }
    }

    #[test]
    fn step_lattice_composes_gap_and_jump() {
        let cfg = IntegratorConfig::default();
        // No deltas: reduces to the gap integral.
        let p = free_on_integers();
        let th = step_lattice(&p, 1.0, 0.0, 0, &cfg).unwrap();
        assert!((th - 1.0).abs() < 1e-11);

        // One delta of strength 1 hit at theta(x_1-) = pi/2.
        let p = kronig_penney(1.0);
        let th = step_lattice(&p, 1.0, FRAC_PI_2 - 1.0, 0, &cfg).unwrap();
        assert!((th - PI / 4.0).abs() < 1e-9, "theta = {th}");
    }

    #[test]
    fn evolve_free_case_is_linear() {
        let cfg = IntegratorConfig::default();
        let traj = evolve(&free_on_integers(), 1.0, 0.0, 100, &cfg).unwrap();
        for &(n, x, th) in &traj.lattice_angles {
            assert_eq!(x, n as f64);
            assert!((th - n as f64).abs() < 1e-9, "n = {n}, theta = {th}");
        }
    }

    #[test]
    fn evolve_is_equivariant_under_full_turns() {
        let cfg = IntegratorConfig::default();
        let p = kronig_penney(2.0);
        let base = evolve(&p, 2.0, 0.4, 60, &cfg).unwrap();
        for k in [-2i64, 1, 3] {
            let shifted = evolve(&p, 2.0, 0.4 + TAU * k as f64, 60, &cfg).unwrap();
            for (a, b) in base.lattice_angles.iter().zip(&shifted.lattice_angles) {
                assert!((b.2 - a.2 - TAU * k as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn evolve_preserves_initial_order() {
        let cfg = IntegratorConfig::default();
        let p = kronig_penney(2.0);
        // In-band energy: the flow rotates and keeps distinct angles apart.
        let lo = evolve(&p, 2.0, 0.0, 80, &cfg).unwrap();
        let hi = evolve(&p, 2.0, 1e-6, 80, &cfg).unwrap();
        for (a, b) in lo.lattice_angles.iter().zip(&hi.lattice_angles) {
            assert!(b.2 > a.2, "order lost at n = {}", a.0);
        }
    }

    #[test]
    fn evolve_satisfies_cocycle_identity() {
        let cfg = IntegratorConfig::default();
        let p = kronig_penney(2.0);
        let e = 2.0;
        let xi = 0.7;
        for (k1, k2) in [(5i64, 7i64), (40, 60), (13, 2)] {
            let full = evolve(&p, e, xi, k1 + k2, &cfg).unwrap().final_angle();
            let mid = evolve(&p, e, xi, k2, &cfg).unwrap().final_angle();
            let tail = evolve(&p.shift(k2), e, mid, k1, &cfg)
                .unwrap()
                .final_angle();
            assert!((full - tail).abs() < 1e-6, "k1 = {k1}, k2 = {k2}");
        }
    }

    #[test]
    fn evolve_rejects_oversized_steps() {
        let cfg = IntegratorConfig::default().with_h_max(0.3);
        match evolve(&free_on_integers(), 1.0, 0.0, 5, &cfg) {
            Err(Error::InvalidArgument(_)) => {}
            other => panic!("expected InvalidArgument, got {other:?}"),
        }
    }

    #[test]
    fn observable_is_reduction_invariant() {
        let cfg = IntegratorConfig::default();
        let p = free_on_integers();
        for k in 0..8 {
            let vt = 0.77 * k as f64;
            let f = observable_increment(&p, 1.0, vt, &cfg).unwrap();
            assert!((f - 1.0).abs() < 1e-11, "f = {f}");
            let g = observable_increment(&p, 1.0, vt + TAU, &cfg).unwrap();
            assert!((f - g).abs() < 1e-12);
        }
        let f = observable_increment(&p, 0.0, 0.0, &cfg).unwrap();
        assert!((f - PI / 4.0).abs() < 1e-8);
    }

    #[test]
    fn skew_step_group_law() {
        let cfg = IntegratorConfig::default();
        let p = kronig_penney(2.0);
        let e = 2.0;
        for (k1, k2) in [(0i64, 0i64), (3, 4), (-2, 5), (6, -6), (-3, -4)] {
            let (p2, a2) = skew_step(&p, e, 0.9, k2, &cfg).unwrap();
            let (p12, a12) = skew_step(&p2, e, a2, k1, &cfg).unwrap();
            let (pd, ad) = skew_step(&p, e, 0.9, k1 + k2, &cfg).unwrap();
            assert!((wrap_angle(a12 - ad)).abs() < 1e-6, "k1 = {k1}, k2 = {k2}");
            for i in -10..=10 {
                assert_eq!(p12.gamma().position(i), pd.gamma().position(i));
                assert_eq!(p12.strength(i), pd.strength(i));
            }
        }
    }

    #[test]
    fn skew_step_backward_inverts_forward() {
        let cfg = IntegratorConfig::default();
        let p = GeneralizedPotential::new(
            PotentialSampler::trig_poly(vec![crate::apmodels::TrigTerm {
                amplitude: 0.8,
                frequency: std::f64::consts::SQRT_2,
                phase: 0.3,
            }]),
            BiSequenceModel::alternating(0.7),
            PointSetModel::sine_perturbed(0.4, 1.0, 0.0).unwrap(),
        );
        for k in [1i64, 5, 17] {
            let (pf, af) = skew_step(&p, 3.0, 1.1, k, &cfg).unwrap();
            let (pb, ab) = skew_step(&pf, 3.0, af, -k, &cfg).unwrap();
            assert!((wrap_angle(ab - 1.1)).abs() < 1e-8, "k = {k}");
            for i in -10..=10 {
                assert_eq!(pb.gamma().position(i), p.gamma().position(i));
            }
        }
    }
}
