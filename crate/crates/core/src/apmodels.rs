//! Data model for almost periodic point sets, bounded bi-sequences and
//! generalized potentials.
//!
//! All objects here are genuinely infinite: a point set is an increasing
//! lattice `{x_i}` indexed by all of `Z`, a bi-sequence assigns a bounded
//! value to every integer, and a potential samples the real line. They are
//! therefore represented by evaluation rules (closures over parameters)
//! rather than stored arrays, and every supremum or infimum over `Z` is
//! truncated to a caller-supplied window. Diagnostics report the window they
//! were computed on.
//!
//! Shifts are tracked as integer index offsets against the construction-time
//! base rule, so the group law `(y . tau1) . tau2 = y . (tau1 + tau2)` holds
//! bit-exactly on every component.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Evaluation rule mapping an integer index to a real value.
pub type IndexRule = Arc<dyn Fn(i64) -> f64 + Send + Sync>;

/// Default number of interior sample points per lattice gap used when
/// checking the function clause of entourage membership.
pub const DEFAULT_SAMPLES_PER_GAP: usize = 64;

/// A strictly increasing lattice `{x_i}` with `x_0 = 0` and gaps confined to
/// `[min_gap, max_gap]`.
///
/// Positions are produced lazily from an index rule. The rule does not need
/// to vanish at zero: positions are reported relative to the rule's value at
/// the current shift offset, so `position(0) == 0.0` always holds exactly.
#[derive(Clone)]
pub struct PointSetModel {
    rule: IndexRule,
    min_gap: f64,
    max_gap: f64,
    offset: i64,
}

impl fmt::Debug for PointSetModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointSetModel")
            .field("min_gap", &self.min_gap)
            .field("max_gap", &self.max_gap)
            .field("offset", &self.offset)
            .finish()
    }
}

impl PointSetModel {
    /// Wraps an index rule. `min_gap`/`max_gap` must bracket every spacing
    /// the rule produces; the built-in constructors derive them analytically.
    pub fn new(rule: IndexRule, min_gap: f64, max_gap: f64) -> Result<Self> {
        if !(min_gap > 0.0 && max_gap >= min_gap && max_gap.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < min_gap <= max_gap < inf, got [{min_gap}, {max_gap}]"
            )));
        }
        Ok(Self {
            rule,
            min_gap,
            max_gap,
            offset: 0,
        })
    }

    /// The periodic lattice `{i * spacing}`.
    pub fn periodic(spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lattice spacing must be positive and finite, got {spacing}"
            )));
        }
        Self::new(Arc::new(move |i| i as f64 * spacing), spacing, spacing)
    }

    /// The integer lattice `Z`.
    pub fn integers() -> Self {
        Self::periodic(1.0).expect("unit spacing is valid")
    }

    /// The perturbed lattice `{i + a sin(w i + phi)}`.
    ///
    /// Requires `|a| * |w| < 1`, which keeps every spacing inside
    /// `[1 - 2|a sin(w/2)|, 1 + 2|a sin(w/2)|]` and in particular positive.
    pub fn sine_perturbed(amplitude: f64, frequency: f64, phase: f64) -> Result<Self> {
        let (a, w) = (amplitude, frequency);
        if !(a.is_finite() && w.is_finite() && phase.is_finite()) {
            return Err(Error::InvalidArgument(
                "sine-perturbed lattice parameters must be finite".into(),
            ));
        }
        if a.abs() * w.abs() >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "sine-perturbed lattice needs |a|*|w| < 1 to keep spacings positive, got |{a}|*|{w}|"
            )));
        }
        // Spacing is 1 + 2 a sin(w/2) cos(w(i - 1/2) + phi).
        let swing = 2.0 * (a * (w / 2.0).sin()).abs();
        Self::new(
            Arc::new(move |i| i as f64 + a * (w * i as f64 + phase).sin()),
            1.0 - swing,
            1.0 + swing,
        )
    }

    /// Position of the `i`-th lattice point. `position(0) == 0.0` exactly.
    pub fn position(&self, i: i64) -> f64 {
        (self.rule)(i + self.offset) - (self.rule)(self.offset)
    }

    /// Gap length between points `i` and `i + 1`.
    pub fn gap(&self, i: i64) -> f64 {
        self.position(i + 1) - self.position(i)
    }

    /// Absolute position of this lattice's origin relative to the unshifted
    /// base rule. Shifting a generalized potential translates its background
    /// sampler by exactly this amount.
    pub fn origin(&self) -> f64 {
        (self.rule)(self.offset) - (self.rule)(0)
    }

    /// The shifted lattice with points `x_{i + tau} - x_tau`.
    ///
    /// Shifts compose through the integer offset, so
    /// `g.shift(t1).shift(t2)` and `g.shift(t1 + t2)` evaluate identically.
    pub fn shift(&self, tau: i64) -> Self {
        Self {
            rule: Arc::clone(&self.rule),
            min_gap: self.min_gap,
            max_gap: self.max_gap,
            offset: self.offset + tau,
        }
    }

    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }

    pub fn max_gap(&self) -> f64 {
        self.max_gap
    }

    /// Smallest index `i` with `position(i) >= z`.
    pub fn index_at_or_above(&self, z: f64) -> i64 {
        // Spacing bounds give |position(i)| in [|i| min_gap, |i| max_gap],
        // which brackets the answer; the expansion loops are a safety net.
        let mut lo = if z >= 0.0 {
            (z / self.max_gap).floor() as i64 - 1
        } else {
            (z / self.min_gap).floor() as i64 - 1
        };
        let mut hi = if z >= 0.0 {
            (z / self.min_gap).ceil() as i64 + 1
        } else {
            (z / self.max_gap).ceil() as i64 + 1
        };
        let mut step = 1i64;
        while self.position(lo) >= z {
            lo -= step;
            step *= 2;
        }
        step = 1;
        while self.position(hi) < z {
            hi += step;
            step *= 2;
        }
        // Invariant: position(lo) < z <= position(hi).
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.position(mid) >= z {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Checks strict monotonicity and the spacing bounds on `[-window, window]`.
    pub fn check_window(&self, window: i64) -> Result<()> {
        let slack = 1e-9 * self.max_gap;
        for i in -window..window {
            let g = self.gap(i);
            if !(g >= self.min_gap - slack && g <= self.max_gap + slack) {
                return Err(Error::InvalidArgument(format!(
                    "spacing {g} at index {i} escapes [{}, {}]",
                    self.min_gap, self.max_gap
                )));
            }
        }
        Ok(())
    }
}

/// A bounded bi-sequence `{v_i}` over `Z`, evaluated lazily.
#[derive(Clone)]
pub struct BiSequenceModel {
    rule: IndexRule,
    bound: f64,
    offset: i64,
}

impl fmt::Debug for BiSequenceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BiSequenceModel")
            .field("bound", &self.bound)
            .field("offset", &self.offset)
            .finish()
    }
}

impl BiSequenceModel {
    /// Wraps an index rule together with a uniform bound on its values.
    pub fn new(rule: IndexRule, bound: f64) -> Result<Self> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sequence bound must be finite and nonnegative, got {bound}"
            )));
        }
        Ok(Self {
            rule,
            bound,
            offset: 0,
        })
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(Arc::new(move |_| c), c.abs()).expect("finite constant")
    }

    /// `v_i = amplitude * (-1)^i`.
    pub fn alternating(amplitude: f64) -> Self {
        Self::new(
            Arc::new(move |i| {
                if i.rem_euclid(2) == 0 {
                    amplitude
                } else {
                    -amplitude
                }
            }),
            amplitude.abs(),
        )
        .expect("finite amplitude")
    }

    /// `v_i = amplitude * sin(frequency * i + phase)`.
    pub fn sine(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self::new(
            Arc::new(move |i| amplitude * (frequency * i as f64 + phase).sin()),
            amplitude.abs(),
        )
        .expect("finite amplitude")
    }

    /// A quasi-periodic sum `v_i = sum_k a_k sin(w_k i + phi_k)`.
    pub fn quasiperiodic(terms: Vec<(f64, f64, f64)>) -> Self {
        let bound: f64 = terms.iter().map(|t| t.0.abs()).sum();
        Self::new(
            Arc::new(move |i| {
                terms
                    .iter()
                    .map(|&(a, w, phi)| a * (w * i as f64 + phi).sin())
                    .sum()
            }),
            bound,
        )
        .expect("finite bound")
    }

    pub fn value(&self, i: i64) -> f64 {
        (self.rule)(i + self.offset)
    }

    /// The shifted sequence `{v_{i + tau}}`; composes exactly like
    /// [`PointSetModel::shift`].
    pub fn shift(&self, tau: i64) -> Self {
        Self {
            rule: Arc::clone(&self.rule),
            bound: self.bound,
            offset: self.offset + tau,
        }
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }
}

/// One cosine term of a trigonometric polynomial background.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

/// The background `q`, sampled by position.
///
/// The built-in families are uniformly continuous on each lattice gap:
/// constants and trigonometric polynomials are smooth everywhere, and the
/// piecewise-constant family is constant on every gap with its jumps on the
/// lattice. Values at lattice points follow the right-continuity convention,
/// `q(x_i) = q(x_i+)`.
#[derive(Clone, Debug)]
pub enum PotentialSampler {
    Constant {
        value: f64,
    },
    TrigPoly {
        terms: Vec<TrigTerm>,
    },
    PiecewiseConstant {
        levels: BiSequenceModel,
        lattice: PointSetModel,
    },
}

impl PotentialSampler {
    pub fn constant(value: f64) -> Self {
        PotentialSampler::Constant { value }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn trig_poly(terms: Vec<TrigTerm>) -> Self {
        PotentialSampler::TrigPoly { terms }
    }

    /// `q` equal to `levels[i]` on the gap `(x_i, x_{i+1})`.
    pub fn piecewise_constant(levels: BiSequenceModel, lattice: PointSetModel) -> Self {
        PotentialSampler::PiecewiseConstant { levels, lattice }
    }

    /// Samples the background at `x` (right-continuous at lattice points).
    pub fn value(&self, x: f64) -> f64 {
        match self {
            PotentialSampler::Constant { value } => *value,
            PotentialSampler::TrigPoly { terms } => terms
                .iter()
                .map(|t| t.amplitude * (t.frequency * x + t.phase).cos())
                .sum(),
            PotentialSampler::PiecewiseConstant { levels, lattice } => {
                let j = lattice.index_at_or_above(x);
                let gap_index = if lattice.position(j) == x { j } else { j - 1 };
                levels.value(gap_index)
            }
        }
    }

    /// A uniform bound on `|q|`.
    pub fn bound(&self) -> f64 {
        match self {
            PotentialSampler::Constant { value } => value.abs(),
            PotentialSampler::TrigPoly { terms } => terms.iter().map(|t| t.amplitude.abs()).sum(),
            PotentialSampler::PiecewiseConstant { levels, .. } => levels.bound(),
        }
    }
}

/// A generalized potential: background `q`, delta strengths `v` and the
/// lattice `gamma` carrying both the jump discontinuities of `q` and the
/// delta interactions.
///
/// Shifting by `tau` relabels the lattice around its `tau`-th point,
/// translates the background by `x_tau` and shifts the strength sequence.
/// All three parts shift through the same integer offset, so the group law
/// holds exactly.
#[derive(Clone, Debug)]
pub struct GeneralizedPotential {
    q: PotentialSampler,
    v: BiSequenceModel,
    gamma: PointSetModel,
}

impl GeneralizedPotential {
    /// Assembles a potential. For the piecewise-constant background family
    /// the sampler must be built over the same base lattice as `gamma`.
    pub fn new(q: PotentialSampler, v: BiSequenceModel, gamma: PointSetModel) -> Self {
        Self { q, v, gamma }
    }

    /// The free potential over `gamma`: `q = 0`, `v = 0`.
    pub fn free(gamma: PointSetModel) -> Self {
        Self::new(PotentialSampler::zero(), BiSequenceModel::zero(), gamma)
    }

    pub fn q(&self) -> &PotentialSampler {
        &self.q
    }

    pub fn strengths(&self) -> &BiSequenceModel {
        &self.v
    }

    pub fn gamma(&self) -> &PointSetModel {
        &self.gamma
    }

    /// Delta strength at lattice point `i`.
    pub fn strength(&self, i: i64) -> f64 {
        self.v.value(i)
    }

    /// Background value at position `x` in this potential's own coordinates.
    pub fn q_at(&self, x: f64) -> f64 {
        self.q.value(x + self.gamma.origin())
    }

    /// The shifted potential `(q . x_tau, v . tau, gamma . tau)`.
    pub fn shift(&self, tau: i64) -> Self {
        Self {
            q: self.q.clone(),
            v: self.v.shift(tau),
            gamma: self.gamma.shift(tau),
        }
    }
}

/// Windowed two-sided Hausdorff distance between point sets.
///
/// Computes `max` of the two directed expressions `sup_{|i| <= window}
/// min_j |x^1_i - x^2_j|`. The inner minimum runs over all of `Z`; only the
/// outer supremum is truncated, so the result is a lower bound for the true
/// distance. Whenever the result is below `min_gap / 2` it coincides with
/// the windowed supremum of `|x^1_i - x^2_i|`.
pub fn point_set_dist(g1: &PointSetModel, g2: &PointSetModel, window: i64) -> f64 {
    assert!(window >= 1, "window must be at least 1");
    fn directed(a: &PointSetModel, b: &PointSetModel, window: i64) -> f64 {
        let mut worst = 0.0f64;
        for i in -window..=window {
            let x = a.position(i);
            let j = b.index_at_or_above(x);
            let d = (b.position(j) - x).min(x - b.position(j - 1));
            worst = worst.max(d);
        }
        worst
    }
    directed(g1, g2, window).max(directed(g2, g1, window))
}

/// Truncation slack added to the right-hand side when checking the shift
/// contraction inequality: the shifted windows see slightly different index
/// ranges than the unshifted ones.
pub const SHIFT_CONTRACTION_TOL: f64 = 1e-6;

/// Checks `dist(g1 . tau, g2 . tau) <= 2 dist(g1, g2) + tol` for every
/// listed shift.
///
/// Requires the unshifted sets to be closer than half the smaller minimum
/// gap; otherwise the index-wise comparison underlying the inequality is
/// meaningless and an error is returned.
pub fn shift_contraction_check(
    g1: &PointSetModel,
    g2: &PointSetModel,
    taus: &[i64],
    window: i64,
) -> Result<bool> {
    let base = point_set_dist(g1, g2, window);
    let half_min_gap = 0.5 * g1.min_gap().min(g2.min_gap());
    if base >= half_min_gap {
        return Err(Error::SetsTooFar {
            dist: base,
            half_min_gap,
        });
    }
    let allowed = 2.0 * base + SHIFT_CONTRACTION_TOL;
    Ok(taus
        .iter()
        .all(|&tau| point_set_dist(&g1.shift(tau), &g2.shift(tau), window) <= allowed))
}

/// Membership test for the entourage `S_r`: lattices within `r`, strengths
/// within `r` on the index window, and backgrounds within `r` outside the
/// closed `r`-neighborhood of the union of the two lattices.
///
/// The function clause is checked on `samples_per_gap` equispaced interior
/// points of every interval between consecutive points of the merged
/// lattice, restricted to the common span of the two windows.
pub fn entourage_contains(
    p1: &GeneralizedPotential,
    p2: &GeneralizedPotential,
    r: f64,
    window: i64,
    samples_per_gap: usize,
) -> bool {
    assert!(r > 0.0, "entourage radius must be positive");
    assert!(window >= 1, "window must be at least 1");

    if point_set_dist(p1.gamma(), p2.gamma(), window) >= r {
        return false;
    }
    for i in -window..=window {
        if (p1.strength(i) - p2.strength(i)).abs() >= r {
            return false;
        }
    }

    // Merged lattice breakpoints over the common span.
    let lo = p1
        .gamma()
        .position(-window)
        .max(p2.gamma().position(-window));
    let hi = p1.gamma().position(window).min(p2.gamma().position(window));
    let mut marks = Vec::with_capacity(4 * window as usize + 4);
    for g in [p1.gamma(), p2.gamma()] {
        for i in -window..=window {
            let x = g.position(i);
            if x >= lo && x <= hi {
                marks.push(x);
            }
        }
    }
    marks.sort_by(|a, b| a.partial_cmp(b).expect("lattice positions are finite"));
    marks.dedup();

    for pair in marks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for s in 1..=samples_per_gap {
            let x = a + (b - a) * s as f64 / (samples_per_gap + 1) as f64;
            // Skip the closed r-neighborhood of the merged lattice; the
            // nearest lattice points to x are exactly a and b.
            if x - a <= r || b - x <= r {
                continue;
            }
            if (p1.q_at(x) - p2.q_at(x)).abs() >= r {
                return false;
            }
        }
    }
    true
}

/// Result of an almost-periodicity search: which shifts are `eps`-almost
/// periods within the searched range, and how dense they sit in it.
#[derive(Clone, Debug, PartialEq)]
pub struct ApDiagnosticsReport {
    pub epsilon: f64,
    pub found_periods: Vec<i64>,
    /// Smallest `l >= 1` such that every integer interval `[a, a + l]`
    /// inside the search range meets `found_periods`; absent when nothing
    /// was found. A bound certifies relative denseness only on the searched
    /// range, never on all of `Z`.
    pub window_bound: Option<i64>,
    pub search_range: (i64, i64),
}

/// Scans `tau in [-tau_range, tau_range]` for shifts whose image lies in the
/// entourage `S_eps` around the unshifted potential.
pub fn epsilon_periods(
    p: &GeneralizedPotential,
    eps: f64,
    tau_range: i64,
    window: i64,
) -> ApDiagnosticsReport {
    assert!(eps > 0.0, "epsilon must be positive");
    let mut found = Vec::new();
    for tau in -tau_range..=tau_range {
        if entourage_contains(&p.shift(tau), p, eps, window, DEFAULT_SAMPLES_PER_GAP) {
            found.push(tau);
        }
    }
    let window_bound = relative_denseness_bound(&found, tau_range);
    ApDiagnosticsReport {
        epsilon: eps,
        found_periods: found,
        window_bound,
        search_range: (-tau_range, tau_range),
    }
}

fn relative_denseness_bound(found: &[i64], range: i64) -> Option<i64> {
    let (first, last) = (*found.first()?, *found.last()?);
    let mut need = 1i64;
    need = need.max(first + range);
    need = need.max(range - last);
    for pair in found.windows(2) {
        need = need.max(pair[1] - pair[0] - 1);
    }
    Some(need)
}

/// Lattice density over the first `n` gaps: `n / x_n`. Lies in
/// `[1 / max_gap, 1 / min_gap]`.
pub fn density(gamma: &PointSetModel, n: i64) -> f64 {
    assert!(n >= 1, "density needs at least one gap");
    n as f64 / gamma.position(n)
}

/// Average of `v` over the index window `[n1, n2)`.
pub fn mean_value_seq(v: &BiSequenceModel, n1: i64, n2: i64) -> f64 {
    assert!(n2 > n1, "mean value needs a nonempty index window");
    let sum: f64 = (n1..n2).map(|i| v.value(i)).sum();
    sum / (n2 - n1) as f64
}

/// Mean value of the potential over `[z1, z2)`: the background integrated by
/// composite Simpson on every lattice gap plus the delta masses carried by
/// lattice points in the window, divided by the window length.
pub fn mean_value_potential(
    p: &GeneralizedPotential,
    z1: f64,
    z2: f64,
    quad_points_per_gap: usize,
) -> f64 {
    assert!(z2 > z1, "mean value needs a nonempty interval");
    let gamma = p.gamma();
    let i0 = gamma.index_at_or_above(z1);
    let i1 = gamma.index_at_or_above(z2);

    let mut total: f64 = (i0..i1).map(|i| p.strength(i)).sum();

    // Integration segments: [z1, z2) split at interior lattice points.
    let mut cuts = Vec::with_capacity((i1 - i0) as usize + 2);
    cuts.push(z1);
    for i in i0..i1 {
        let x = gamma.position(i);
        if x > z1 && x < z2 {
            cuts.push(x);
        }
    }
    cuts.push(z2);
    for pair in cuts.windows(2) {
        total += simpson_one_sided(|x| p.q_at(x), pair[0], pair[1], quad_points_per_gap);
    }
    total / (z2 - z1)
}

/// Composite Simpson on `[a, b]` for an integrand that is smooth inside but
/// may jump at the endpoints. The right endpoint is pulled inward by a
/// relative 1e-12 so that a right-continuous sampler yields its left limit
/// there; the left endpoint already evaluates to the right limit.
fn simpson_one_sided(f: impl Fn(f64) -> f64, a: f64, b: f64, points: usize) -> f64 {
    let n = points.max(2).next_multiple_of(2);
    let h = (b - a) / n as f64;
    let pullback = (b - a) * 1e-12;
    let node = |k: usize| -> f64 {
        if k == n {
            b - pullback
        } else {
            a + h * k as f64
        }
    };
    let mut acc = f(node(0)) + f(node(n));
    for k in 1..n {
        acc += f(node(k)) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gamma_a(a: f64) -> PointSetModel {
        PointSetModel::sine_perturbed(a, 1.0, 0.0).unwrap()
    }

    fn quasi_fixture() -> GeneralizedPotential {
        GeneralizedPotential::new(
            PotentialSampler::trig_poly(vec![
                TrigTerm {
                    amplitude: 1.0,
                    frequency: 1.0,
                    phase: 0.0,
                },
                TrigTerm {
                    amplitude: 1.0,
                    frequency: std::f64::consts::SQRT_2,
                    phase: 0.0,
                },
            ]),
            BiSequenceModel::alternating(1.0),
            gamma_a(0.5),
        )
    }

    #[test]
    fn shift_zero_is_identity() {
        let g = gamma_a(0.5);
        let s = g.shift(0);
        for i in -50..=50 {
            assert_eq!(g.position(i), s.position(i));
        }
    }

    #[test]
    fn shift_group_law_is_exact() {
        let g = gamma_a(0.5);
        for (t1, t2) in [(3, 5), (-7, 2), (11, -11), (100, 23)] {
            let a = g.shift(t1).shift(t2);
            let b = g.shift(t1 + t2);
            for i in -40..=40 {
                assert_eq!(a.position(i), b.position(i));
            }
        }
    }

    #[test]
    fn shift_matches_closed_form() {
        // x_hat(i) = i + 0.5 sin(i + 1) - 0.5 sin(1) for tau = 1.
        let g = gamma_a(0.5).shift(1);
        for i in -30..=30 {
            let expect = i as f64 + 0.5 * ((i + 1) as f64).sin() - 0.5 * 1f64.sin();
            assert!((g.position(i) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn potential_shift_group_law_and_translation() {
        let p = quasi_fixture();
        for (t1, t2) in [(4, 9), (-6, 13)] {
            let a = p.shift(t1).shift(t2);
            let b = p.shift(t1 + t2);
            for i in -20..=20 {
                assert_eq!(a.gamma().position(i), b.gamma().position(i));
                assert_eq!(a.strength(i), b.strength(i));
            }
            for k in -20..=20 {
                let x = 0.37 * k as f64;
                assert_eq!(a.q_at(x), b.q_at(x));
            }
        }

        // q = cos over the integer lattice: shifting by 3 gives cos(x + 3).
        let p = GeneralizedPotential::new(
            PotentialSampler::trig_poly(vec![TrigTerm {
                amplitude: 1.0,
                frequency: 1.0,
                phase: 0.0,
            }]),
            BiSequenceModel::zero(),
            PointSetModel::integers(),
        );
        let s = p.shift(3);
        for k in -20..=20 {
            let x = 0.31 * k as f64;
            assert!((s.q_at(x) - (x + 3.0).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn index_at_or_above_is_consistent() {
        let g = gamma_a(0.45).shift(-17);
        for k in -60..=60 {
            let z = 0.73 * k as f64;
            let i = g.index_at_or_above(z);
            assert!(g.position(i) >= z);
            assert!(g.position(i - 1) < z);
        }
        // exact hits
        for i in -5..=5 {
            assert_eq!(g.index_at_or_above(g.position(i)), i);
        }
    }

    #[test]
    fn dist_of_identical_sets_is_zero() {
        let g = gamma_a(0.3);
        assert_eq!(point_set_dist(&g, &g, 200), 0.0);
    }

    #[test]
    fn dist_integer_vs_perturbed_window() {
        let z = PointSetModel::integers();
        let g = gamma_a(0.1);
        let d = point_set_dist(&z, &g, 10_000);
        assert!((d - 0.1).abs() < 1e-3, "d = {d}");
        // Never exceeds half the larger maximum spacing.
        assert!(d <= z.max_gap().max(g.max_gap()) / 2.0);
    }

    #[test]
    fn dist_below_half_gap_equals_indexwise_sup() {
        let z = PointSetModel::integers();
        let g = gamma_a(0.1);
        let window = 500;
        let d = point_set_dist(&z, &g, window);
        assert!(d < 0.5 * z.min_gap().min(g.min_gap()));
        let sup = (-window..=window)
            .map(|i| (z.position(i) - g.position(i)).abs())
            .fold(0.0f64, f64::max);
        assert!((d - sup).abs() < 1e-12);
    }

    #[test]
    fn contraction_check_on_identical_sets() {
        let g = gamma_a(0.2);
        let taus: Vec<i64> = (-100..=100).collect();
        assert!(shift_contraction_check(&g, &g, &taus, 500).unwrap());
    }

    #[test]
    fn contraction_check_integer_vs_perturbed() {
        let z = PointSetModel::integers();
        let g = gamma_a(0.1);
        let taus: Vec<i64> = (-100..=100).collect();
        assert!(shift_contraction_check(&z, &g, &taus, 1000).unwrap());
    }

    #[test]
    fn contraction_check_rejects_distant_sets() {
        let z = PointSetModel::integers();
        let far = PointSetModel::periodic(2.0).unwrap();
        match shift_contraction_check(&z, &far, &[1], 100) {
            Err(Error::SetsTooFar { .. }) => {}
            other => panic!("expected SetsTooFar, got {other:?}"),
        }
    }

    #[test]
    fn entourage_diagonal_and_symmetry() {
        let p = quasi_fixture();
        assert!(entourage_contains(&p, &p, 1e-9, 50, 16));
        let q = p.shift(44);
        for r in [0.05, 0.4] {
            assert_eq!(
                entourage_contains(&p, &q, r, 200, 16),
                entourage_contains(&q, &p, r, 200, 16)
            );
        }
    }

    #[test]
    fn entourage_detects_strength_mismatch() {
        let p = quasi_fixture();
        let bumped = GeneralizedPotential::new(
            p.q().clone(),
            BiSequenceModel::new(
                Arc::new(|i| if i.rem_euclid(2) == 0 { 1.3 } else { -1.0 }),
                1.3,
            )
            .unwrap(),
            p.gamma().clone(),
        );
        assert!(!entourage_contains(&p, &bumped, 0.2, 50, 16));
        assert!(entourage_contains(&p, &bumped, 0.4, 50, 16));
    }

    #[test]
    fn entourage_detects_background_mismatch() {
        let z = PointSetModel::integers();
        let p1 = GeneralizedPotential::new(
            PotentialSampler::constant(0.0),
            BiSequenceModel::zero(),
            z.clone(),
        );
        let p2 =
            GeneralizedPotential::new(PotentialSampler::constant(0.3), BiSequenceModel::zero(), z);
        assert!(!entourage_contains(&p1, &p2, 0.25, 50, 16));
        assert!(entourage_contains(&p1, &p2, 0.35, 50, 16));
    }

    #[test]
    fn epsilon_periods_periodic_case() {
        let p = GeneralizedPotential::new(
            PotentialSampler::zero(),
            BiSequenceModel::constant(1.0),
            PointSetModel::integers(),
        );
        let report = epsilon_periods(&p, 1e-6, 25, 50);
        let expect: Vec<i64> = (-25..=25).collect();
        assert_eq!(report.found_periods, expect);
        assert_eq!(report.window_bound, Some(1));
    }

    #[test]
    fn epsilon_periods_finds_44() {
        let p = GeneralizedPotential::free(gamma_a(0.5));
        let report = epsilon_periods(&p, 0.05, 200, 400);
        assert!(
            report.found_periods.contains(&44),
            "{:?}",
            report.found_periods
        );
        assert!(report.found_periods.contains(&0));
        assert!(!report.found_periods.contains(&43));
        assert!(report.window_bound.is_some());
    }

    #[test]
    fn epsilon_periods_driven_by_strength_clause() {
        // Integer lattice, quasi-periodic strengths: shifts near multiples
        // of 2 pi keep the strengths close; 44 is the first nonzero one
        // within eps = 0.05 (|44 - 14 pi| < 0.018), while e.g. 6 and 25 miss.
        let p = GeneralizedPotential::new(
            PotentialSampler::zero(),
            BiSequenceModel::sine(1.0, 1.0, 0.0),
            PointSetModel::integers(),
        );
        let report = epsilon_periods(&p, 0.05, 50, 100);
        assert!(report.found_periods.contains(&0));
        assert!(report.found_periods.contains(&44));
        assert!(!report.found_periods.contains(&6));
        assert!(!report.found_periods.contains(&25));
    }

    #[test]
    fn dist_uses_nearest_points_not_shared_indices() {
        // Z against 2Z: odd integers sit at distance 1 from the sparse set,
        // while every even point matches exactly. The index-wise comparison
        // would diverge; the nearest-point expression gives 1 = M/2.
        let dense = PointSetModel::integers();
        let sparse = PointSetModel::periodic(2.0).unwrap();
        let d = point_set_dist(&dense, &sparse, 300);
        assert_eq!(d, 1.0);
        assert!(d <= sparse.max_gap() / 2.0);
    }

    #[test]
    fn epsilon_above_half_max_gap_accepts_everything() {
        let p = GeneralizedPotential::free(gamma_a(0.5));
        let eps = p.gamma().max_gap() / 2.0 + 0.05;
        let report = epsilon_periods(&p, eps, 30, 200);
        assert_eq!(report.found_periods.len(), 61);
    }

    #[test]
    fn density_examples() {
        assert_eq!(density(&PointSetModel::integers(), 100), 1.0);
        assert_eq!(density(&PointSetModel::periodic(2.0).unwrap(), 100), 0.5);
        let g = gamma_a(0.5);
        assert!((density(&g, 10_000) - 1.0).abs() < 1e-4);
        let d = density(&g, 5_000);
        assert!(d >= 1.0 / g.max_gap() && d <= 1.0 / g.min_gap());
    }

    #[test]
    fn mean_value_seq_examples() {
        let alt = BiSequenceModel::alternating(1.0);
        assert_eq!(mean_value_seq(&alt, 0, 2 * 617), 0.0);
        let c = BiSequenceModel::constant(2.5);
        assert!((mean_value_seq(&c, -31, 97) - 2.5).abs() < 1e-15);
        let s = BiSequenceModel::sine(1.0, 1.0, 0.0);
        assert!(mean_value_seq(&s, 0, 100_000).abs() < 1e-4);
    }

    #[test]
    fn mean_value_potential_constant_background() {
        let p = GeneralizedPotential::new(
            PotentialSampler::constant(1.0),
            BiSequenceModel::zero(),
            gamma_a(0.5),
        );
        let m = mean_value_potential(&p, -7.3, 51.2, 32);
        assert!((m - 1.0).abs() < 1e-10, "m = {m}");
    }

    #[test]
    fn mean_value_potential_unit_masses() {
        let p = GeneralizedPotential::new(
            PotentialSampler::zero(),
            BiSequenceModel::constant(1.0),
            PointSetModel::integers(),
        );
        let m = mean_value_potential(&p, 0.0, 250.0, 8);
        assert!((m - 1.0).abs() < 1e-12, "m = {m}");
    }

    #[test]
    fn mean_value_piecewise_constant_background() {
        // Alternating levels over Z: the background integrates to zero over
        // any even number of unit gaps.
        let z = PointSetModel::integers();
        let q = PotentialSampler::piecewise_constant(BiSequenceModel::alternating(1.0), z.clone());
        let p = GeneralizedPotential::new(q, BiSequenceModel::zero(), z);
        let m = mean_value_potential(&p, 0.0, 100.0, 16);
        assert!(m.abs() < 1e-10, "m = {m}");
    }

    #[test]
    fn mean_value_constant_decomposition_is_exact() {
        // q = 2, v = 3 over Z: both routes give 5 to round-off.
        let z = PointSetModel::integers();
        let p = GeneralizedPotential::new(
            PotentialSampler::constant(2.0),
            BiSequenceModel::constant(3.0),
            z.clone(),
        );
        let lhs = mean_value_potential(&p, 0.0, 64.0, 8);
        let bg =
            GeneralizedPotential::new(PotentialSampler::constant(2.0), BiSequenceModel::zero(), z);
        let rhs = mean_value_potential(&bg, 0.0, 64.0, 8)
            + density(p.gamma(), 64) * mean_value_seq(p.strengths(), 0, 64);
        assert!((lhs - 5.0).abs() < 1e-12);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn sequences_respect_their_bound() {
        let seqs = [
            BiSequenceModel::alternating(1.3),
            BiSequenceModel::sine(0.7, std::f64::consts::SQRT_2, 0.1),
            BiSequenceModel::quasiperiodic(vec![(0.5, 1.0, 0.0), (0.25, 2.3, 1.0)]),
        ];
        for s in &seqs {
            for i in -500..=500 {
                assert!(s.value(i).abs() <= s.bound() + 1e-15);
            }
        }
    }

    #[test]
    fn mean_value_decomposes() {
        let p = quasi_fixture();
        let span = 10_000.0;
        let lhs = mean_value_potential(&p, 0.0, span, 32);
        let background_only =
            GeneralizedPotential::new(p.q().clone(), BiSequenceModel::zero(), p.gamma().clone());
        let n = p.gamma().index_at_or_above(span);
        let rhs = mean_value_potential(&background_only, 0.0, span, 32)
            + density(p.gamma(), n) * mean_value_seq(p.strengths(), 0, n);
        assert!((lhs - rhs).abs() < 1e-3, "lhs = {lhs}, rhs = {rhs}");
    }
}
