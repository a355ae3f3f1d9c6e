//! High-probability bounds on the estimation error u(θ) − û(θ).
//!
//! All bounds share the variance proxy τ² = σ̄²_wi + (Σnᵢ²/N)·σ̄²_ai and the
//! utility range C:
//!
//! * [`deviation_tail`] — one-sided Bernstein-style tail for a single
//!   configuration: P{u − û ≥ ε} ≤ exp(−Nε² / (2τ² + 2·max nᵢ·C·ε/3)).
//! * [`finite_bound`] — ε holding uniformly over a finite configuration
//!   space of size m with probability 1 − δ (union bound over the tail).
//! * [`finite_even_bound`] — the same ε specialized to the even allocation,
//!   where it is smallest.
//! * [`infinite_bound`] — ε for a continuous, Lipschitz configuration space
//!   via covering numbers ([`covering_ball`], [`covering_function_class`])
//!   and the log-inequality solver [`solve_inequality`].

use serde::{Deserialize, Serialize};

use crate::allocation::Allocation;
use crate::error::{Error, Result};
use crate::estimation::{tau_squared, MomentSummary};

/// Everything the bound evaluators may need; which fields are required
/// depends on the method.
#[derive(Debug, Clone)]
pub struct BoundInput {
    /// Failure probability, in (0, 1).
    pub delta: f64,
    /// Size of the finite configuration space (finite bounds only).
    pub m: Option<u128>,
    pub alloc: Allocation,
    /// Utility range C = u_hi − u_lo.
    pub range: f64,
    pub moments: MomentSummary,
    /// Configuration-space dimension (infinite bound only).
    pub h: Option<u32>,
    /// Lipschitz constant of configuration → utility (infinite bound only).
    pub lipschitz: Option<f64>,
    /// Radius of the configuration ball (infinite bound only).
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    Tail,
    Finite,
    FiniteEven,
    Infinite,
}

/// An evaluated bound. For every method but [`BoundMethod::Tail`], `epsilon`
/// is the high-probability bound on sup u(θ) − û(θ); for `Tail` it is the
/// probability bound itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub epsilon: f64,
    pub method: BoundMethod,
}

/// One-sided tail P{u − û ≥ ε} ≤ exp(−Nε² / (2τ² + 2nCε/3)) with n = max nᵢ.
/// A deterministic estimator (τ² = 0, nC = 0) never deviates, so the bound
/// is 0 by convention.
pub fn deviation_tail(epsilon: f64, alloc: &Allocation, tau_sq: f64, range: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive and finite (got {epsilon})")));
    }
    if !(tau_sq.is_finite() && tau_sq >= 0.0) {
        return Err(Error::invalid(format!("tau² must be finite and non-negative (got {tau_sq})")));
    }
    check_range(range)?;
    let n_total = alloc.total();
    if n_total == 0 {
        return Err(Error::invalid("allocation has an empty budget"));
    }
    let denom = 2.0 * tau_sq + 2.0 * alloc.max_count() as f64 * range * epsilon / 3.0;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((-(n_total as f64) * epsilon * epsilon / denom).exp())
}

/// ε such that sup over a finite space of m configurations of u − û stays
/// below ε with probability 1 − δ:
///
/// ```text
/// ε = 2nC·ln(m/δ)/(3N) + sqrt(2·ln(m/δ)·(σ̄²_wi/N + (Σnᵢ²/N²)·σ̄²_ai))
/// ```
pub fn finite_bound(input: &BoundInput) -> Result<BoundResult> {
    let m = input.m.ok_or_else(|| {
        Error::invalid("the finite-space bound needs the configuration count m")
    })?;
    let t = ln_m_over_delta(m, input.delta)?;
    check_range(input.range)?;
    let n = input.alloc.total();
    if n == 0 {
        return Err(Error::invalid("allocation has an empty budget"));
    }
    let n = n as f64;
    let variance = crate::estimation::estimator_variance(&input.moments, &input.alloc)?;
    let epsilon =
        2.0 * input.alloc.max_count() as f64 * input.range * t / (3.0 * n) + (2.0 * t * variance).sqrt();
    Ok(BoundResult { epsilon, method: BoundMethod::Finite })
}

/// The finite-space ε at the even allocation of N runs over K instances
/// (requires K | N, where the specialization is exact):
///
/// ```text
/// ε = 2C·ln(m/δ)/(3K) + sqrt(2·ln(m/δ)·(σ̄²_wi/N + σ̄²_ai/K))
/// ```
pub fn finite_even_bound(
    delta: f64,
    m: u128,
    n_total: u64,
    k: u64,
    range: f64,
    moments: &MomentSummary,
) -> Result<BoundResult> {
    let t = ln_m_over_delta(m, delta)?;
    check_range(range)?;
    if k == 0 || n_total == 0 {
        return Err(Error::invalid("N and K must be positive"));
    }
    if !n_total.is_multiple_of(k) {
        return Err(Error::invalid(format!(
            "the even-allocation bound requires K to divide N (N = {n_total}, K = {k})"
        )));
    }
    for (name, v) in [("within_var", moments.within_var), ("across_var", moments.across_var)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::invalid(format!("{name} must be finite and non-negative (got {v})")));
        }
    }
    let (n, k) = (n_total as f64, k as f64);
    let epsilon = 2.0 * range * t / (3.0 * k)
        + (2.0 * t * (moments.within_var / n + moments.across_var / k)).sqrt();
    Ok(BoundResult { epsilon, method: BoundMethod::FiniteEven })
}

/// Log covering number of a radius-R ball in h dimensions at scale η:
/// h·ln(3R/η).
pub fn covering_ball(eta: f64, radius: f64, h: u32) -> Result<f64> {
    for (name, v) in [("eta", eta), ("radius", radius)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("{name} must be positive and finite (got {v})")));
        }
    }
    if h == 0 {
        return Err(Error::invalid("dimension h must be at least 1"));
    }
    Ok(h as f64 * (3.0 * radius / eta).ln())
}

/// Log covering number of the induced utility class: an η-cover of the
/// functions needs only an η/L-cover of the ball, giving h·ln(3RL/η).
pub fn covering_function_class(eta: f64, radius: f64, lipschitz: f64, h: u32) -> Result<f64> {
    if !(lipschitz.is_finite() && lipschitz > 0.0) {
        return Err(Error::invalid(format!("lipschitz must be positive and finite (got {lipschitz})")));
    }
    covering_ball(eta / lipschitz, radius, h)
}

/// Smallest closed-form ε₀ with ε₀ᵏ·l + b·ln ε₀ ≥ c for positive k, l, b, c:
///
/// ```text
/// ε₀ = ((c + b·max(ln l − ln c, 0)/k) / l)^(1/k)
/// ```
pub fn solve_inequality(k: f64, l: f64, b: f64, c: f64) -> Result<f64> {
    for (name, v) in [("k", k), ("l", l), ("b", b), ("c", c)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("{name} must be positive and finite (got {v})")));
        }
    }
    Ok(((c + b * (l.ln() - c.ln()).max(0.0) / k) / l).powf(1.0 / k))
}

/// ε holding with probability 1 − δ uniformly over a continuous
/// configuration ball of radius R in h dimensions, for L-Lipschitz
/// utilities:
///
/// ```text
/// ε = sqrt((h·ln(12LR) + ln(1/δ) + (h/2)·ln(N/(8τ² + 4nC/3))) · (8τ² + 4nC/3) / N)
/// ```
///
/// Requires the hypothesis h·ln(12LR) ≥ 1. Errors when the log argument or
/// the bracket goes non-positive (budget too small for the closed form).
pub fn infinite_bound(input: &BoundInput) -> Result<BoundResult> {
    check_delta(input.delta)?;
    check_range(input.range)?;
    let h = input.h.ok_or_else(|| Error::invalid("the infinite-space bound needs the dimension h"))?;
    let lipschitz = input
        .lipschitz
        .ok_or_else(|| Error::invalid("the infinite-space bound needs a Lipschitz constant"))?;
    let radius =
        input.radius.ok_or_else(|| Error::invalid("the infinite-space bound needs a radius"))?;
    if h == 0 {
        return Err(Error::invalid("dimension h must be at least 1"));
    }
    for (name, v) in [("lipschitz", lipschitz), ("radius", radius)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("{name} must be positive and finite (got {v})")));
        }
    }
    let h = h as f64;
    let complexity = h * (12.0 * lipschitz * radius).ln();
    if complexity < 1.0 {
        return Err(Error::invalid(format!(
            "hypothesis h·ln(12·L·R) ≥ 1 violated (got {complexity})"
        )));
    }
    let n = input.alloc.total();
    if n == 0 {
        return Err(Error::invalid("allocation has an empty budget"));
    }
    let tau_sq = tau_squared(&input.moments, &input.alloc)?;
    let base = 8.0 * tau_sq + 4.0 * input.alloc.max_count() as f64 * input.range / 3.0;
    if base <= 0.0 {
        return Err(Error::invalid(
            "the infinite-space bound needs τ² > 0 or a positive range (log argument is not positive)",
        ));
    }
    let n = n as f64;
    let bracket = complexity + (1.0 / input.delta).ln() + h / 2.0 * (n / base).ln();
    let value = bracket * base / n;
    if value < 0.0 {
        return Err(Error::invalid(format!(
            "the closed form is vacuous here: N = {n} is too small relative to 8τ² + 4nC/3 = {base}"
        )));
    }
    Ok(BoundResult { epsilon: value.sqrt(), method: BoundMethod::Infinite })
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta.is_finite() && 0.0 < delta && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1) (got {delta})")));
    }
    Ok(())
}

fn check_range(range: f64) -> Result<()> {
    if !(range.is_finite() && range >= 0.0) {
        return Err(Error::invalid(format!("utility range must be finite and non-negative (got {range})")));
    }
    Ok(())
}

/// ln(m/δ), evaluated in log space so m up to 10³⁰ stays exact enough.
fn ln_m_over_delta(m: u128, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if m == 0 {
        return Err(Error::invalid("configuration count m must be at least 1"));
    }
    Ok((m as f64).ln() - delta.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::MomentSource;
    use crate::rng;

    fn counts(c: &[u64]) -> Allocation {
        Allocation::from_counts(c.to_vec())
    }

    fn moments(within: f64, across: f64) -> MomentSummary {
        MomentSummary { mean: 0.0, within_var: within, across_var: across, source: MomentSource::Exact }
    }

    fn even_input(n: u64, k: u64, m: Option<u128>, delta: f64, range: f64, mo: MomentSummary) -> BoundInput {
        let alloc = Allocation::even(n, k as usize, &mut rng::stream(0, 0)).unwrap();
        BoundInput { delta, m, alloc, range, moments: mo, h: None, lipschitz: None, radius: None }
    }

    #[test]
    fn tail_matches_frozen_value() {
        // N=100, τ²=1, max nᵢ=1, C=1, ε=0.5 → exp(−25/(2 + 1/3)).
        let p = deviation_tail(0.5, &counts(&[1; 100]), 1.0, 1.0).unwrap();
        assert!((p - 2.222515695969596e-5).abs() < 1e-17, "{p}");
    }

    #[test]
    fn tail_is_monotone_in_epsilon_and_budget() {
        let a = deviation_tail(0.2, &counts(&[1; 50]), 1.0, 1.0).unwrap();
        let b = deviation_tail(0.3, &counts(&[1; 50]), 1.0, 1.0).unwrap();
        let c = deviation_tail(0.2, &counts(&[1; 100]), 1.0, 1.0).unwrap();
        assert!(b < a && c < a);
        assert!(a < 1.0);
    }

    #[test]
    fn tail_of_a_deterministic_estimator_is_zero() {
        let p = deviation_tail(0.1, &counts(&[2, 2]), 0.0, 0.0).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn finite_bound_degenerate_case_is_exactly_one() {
        // m=1, δ=e⁻¹, N=2, K=2, C=3, zero variance: only the linear term,
        // 2·1·3·1/(3·2) = 1.
        let input = even_input(2, 2, Some(1), (-1.0f64).exp(), 3.0, moments(0.0, 0.0));
        let got = finite_bound(&input).unwrap();
        assert!((got.epsilon - 1.0).abs() < 1e-15, "{}", got.epsilon);
        assert_eq!(got.method, BoundMethod::Finite);
    }

    #[test]
    fn finite_bound_matches_frozen_solver_scale_value() {
        // m=500, δ=0.05, N=1250 over K=250 (n=5), C=50, within=1, across=2.25.
        let input = even_input(1250, 250, Some(500), 0.05, 50.0, moments(1.0, 2.25));
        let got = finite_bound(&input).unwrap();
        assert!((got.epsilon - 1.6529249791579987).abs() < 1e-12, "{}", got.epsilon);
    }

    #[test]
    fn finite_even_agrees_with_finite_on_even_allocations() {
        let input = even_input(1250, 250, Some(500), 0.05, 50.0, moments(1.0, 2.25));
        let even = finite_even_bound(0.05, 500, 1250, 250, 50.0, &moments(1.0, 2.25)).unwrap();
        assert!((even.epsilon - finite_bound(&input).unwrap().epsilon).abs() < 1e-12);
        assert_eq!(even.method, BoundMethod::FiniteEven);
    }

    #[test]
    fn finite_even_requires_divisibility() {
        let err = finite_even_bound(0.05, 10, 7, 2, 1.0, &moments(0.1, 0.1)).unwrap_err();
        assert!(err.to_string().contains("divide"), "{err}");
    }

    #[test]
    fn finite_bound_grows_with_m_and_shrinks_with_n() {
        let small_m = finite_bound(&even_input(100, 10, Some(5), 0.05, 1.0, moments(1.0, 1.0))).unwrap();
        let large_m = finite_bound(&even_input(100, 10, Some(500), 0.05, 1.0, moments(1.0, 1.0))).unwrap();
        assert!(large_m.epsilon > small_m.epsilon);
        let large_n = finite_bound(&even_input(1000, 10, Some(5), 0.05, 1.0, moments(1.0, 1.0))).unwrap();
        assert!(large_n.epsilon < small_m.epsilon);
    }

    #[test]
    fn plugging_the_finite_epsilon_back_into_the_tail_stays_below_delta() {
        for (n, k, within, across, range) in
            [(100u64, 10u64, 1.0, 2.25, 5.0), (60, 60, 0.5, 0.1, 1.0), (24, 4, 0.0, 3.0, 10.0)]
        {
            let delta = 0.1;
            let mo = moments(within, across);
            let input = even_input(n, k, Some(1), delta, range, mo);
            let eps = finite_bound(&input).unwrap().epsilon;
            let tau = tau_squared(&mo, &input.alloc).unwrap();
            let p = deviation_tail(eps, &input.alloc, tau, range).unwrap();
            assert!(p <= delta + 1e-12, "n={n} k={k}: tail {p} > delta");
        }
    }

    #[test]
    fn covering_numbers_match_frozen_values() {
        assert!((covering_ball(0.3, 1.0, 2).unwrap() - 4.605170185988092).abs() < 1e-14);
        assert_eq!(covering_ball(3.0, 1.0, 5).unwrap(), 0.0);
        assert!(
            (covering_function_class(1.0, 2.0, 5.0, 3).unwrap() - 10.203592144986466).abs() < 1e-14
        );
    }

    #[test]
    fn covering_grows_with_dimension_and_shrinks_with_scale() {
        let base = covering_ball(0.1, 1.0, 2).unwrap();
        assert!(covering_ball(0.1, 1.0, 3).unwrap() > base);
        assert!(covering_ball(0.2, 1.0, 2).unwrap() < base);
        assert!(covering_function_class(0.1, 1.0, 2.0, 2).unwrap() > base);
    }

    #[test]
    fn solver_satisfies_the_inequality_it_solves() {
        // k=2, l=4, b=1, c=1: ε₀ = sqrt((1 + ln(4)/2)/4) ≈ 0.6506…
        let e0 = solve_inequality(2.0, 4.0, 1.0, 1.0).unwrap();
        assert!((e0 - 0.6506049455237689).abs() < 1e-15, "{e0}");
        assert!(e0.powf(2.0) * 4.0 + e0.ln() >= 1.0 - 1e-12);
        // c ≥ l: the max(·, 0) branch collapses and ε₀ = (c/l)^(1/k).
        let e1 = solve_inequality(3.0, 2.0, 5.0, 2.0).unwrap();
        assert_eq!(e1, 1.0);
        assert!(e1.powf(3.0) * 2.0 + 5.0 * e1.ln() >= 2.0 - 1e-12);
    }

    fn infinite_input(n: u64, tau_like: MomentSummary) -> BoundInput {
        let mut input = even_input(n, n, None, 0.05, 1.0, tau_like);
        input.h = Some(1);
        input.lipschitz = Some(1.0);
        input.radius = Some(1.0);
        input
    }

    #[test]
    fn infinite_bound_matches_frozen_value_and_scaling() {
        // h=1, L=R=1, δ=0.05, N=10⁴, τ²=1 (within=1, across=0), n=1, C=1.
        let e1 = infinite_bound(&infinite_input(10_000, moments(1.0, 0.0))).unwrap();
        assert!((e1.epsilon - 0.09149359976889876).abs() < 1e-15, "{}", e1.epsilon);
        let e4 = infinite_bound(&infinite_input(40_000, moments(1.0, 0.0))).unwrap();
        assert!(e4.epsilon < e1.epsilon / 1.9, "{} vs {}", e4.epsilon, e1.epsilon);
    }

    #[test]
    fn infinite_bound_enforces_its_hypothesis() {
        let mut input = infinite_input(10_000, moments(1.0, 0.0));
        input.lipschitz = Some(0.05);
        let err = infinite_bound(&input).unwrap_err().to_string();
        assert!(err.contains("h·ln(12·L·R) ≥ 1"), "{err}");
    }

    #[test]
    fn infinite_bound_rejects_vacuous_budgets() {
        // N = 1 with τ² = 10⁵: N far below 8τ² + 4nC/3, the bracket goes
        // negative and the closed form has no value.
        let err = infinite_bound(&infinite_input(1, moments(1e5, 0.0))).unwrap_err();
        assert!(err.to_string().contains("too small"), "{err}");
    }
}
