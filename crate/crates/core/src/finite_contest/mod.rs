//! Finite-population machinery: winning probabilities, the undifferentiated finite
//! equilibrium, the two-agent example, best-response dynamics and simulation.

mod dynamics;
mod simulate;

pub use dynamics::{run_dynamics, DynamicsHyper, DynamicsTrace, GridPolicy};
pub use simulate::{simulate_contest, SimulationOptions, SimulationReport, SimulationPolicy};

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::densities::DensitySpec;
use crate::error::{ContestError, Result};
use crate::quadrature::{integrate_with_breaks, DEFAULT_ABS_TOL};

/// A two-group contest with explicit group sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteContest {
    pub n1: u64,
    pub n2: u64,
    pub k: u64,
    pub p1: DensitySpec,
    pub p2: DensitySpec,
    #[serde(default)]
    pub seed: u64,
}

impl FiniteContest {
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(ContestError::Validation("group sizes must be positive".into()));
        }
        if self.k == 0 || self.k > self.n1 + self.n2 {
            return Err(ContestError::Validation(format!(
                "k = {} must lie in [1, {}]",
                self.k,
                self.n1 + self.n2
            )));
        }
        self.p1.validate()?;
        self.p2.validate()
    }

    pub fn n(&self) -> u64 {
        self.n1 + self.n2
    }
}

/// Probability mass function of `Bin(n, p)`.
pub fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    if p <= 0.0 {
        let mut v = vec![0.0; n as usize + 1];
        v[0] = 1.0;
        return v;
    }
    if p >= 1.0 {
        let mut v = vec![0.0; n as usize + 1];
        v[n as usize] = 1.0;
        return v;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    (0..=n)
        .map(|i| (ln_binomial(n, i) + i as f64 * lp + (n - i) as f64 * lq).exp())
        .collect()
}

/// Cumulative sums of [`binomial_pmf`]: entry `j` is `Pr[Bin(n, p) <= j]`.
pub fn binomial_cdf(n: u64, p: f64) -> Vec<f64> {
    let mut acc = 0.0;
    binomial_pmf(n, p)
        .into_iter()
        .map(|x| {
            acc += x;
            acc.min(1.0)
        })
        .collect()
}

/// `Q^{(n,k)}(v)`: probability that `v` beats at least `n - k` of `n - 1` i.i.d. rivals.
pub fn q_p(n: u64, k: u64, p: &DensitySpec, v: f64) -> Result<f64> {
    if n == 0 || k == 0 || k > n {
        return Err(ContestError::Domain(format!("q_p needs 1 <= k <= n, got n = {n}, k = {k}")));
    }
    Ok(q_from_cdf(n, k, p.cdf(v)))
}

fn q_from_cdf(n: u64, k: u64, f: f64) -> f64 {
    let pmf = binomial_pmf(n - 1, f);
    pmf[(n - k) as usize..].iter().sum::<f64>().clamp(0.0, 1.0)
}

/// Symmetric finite equilibrium `s(v) = Q(v) v - \int_lo^v Q`.
pub fn undiff_finite_policy(n: u64, k: u64, p: &DensitySpec, v: f64) -> Result<f64> {
    if n == 0 || k == 0 || k > n {
        return Err(ContestError::Domain(format!("policy needs 1 <= k <= n, got n = {n}, k = {k}")));
    }
    p.validate()?;
    let lo = p.support().0;
    if v <= lo {
        return Ok(0.0);
    }
    let q = |x: f64| q_from_cdf(n, k, p.cdf(x));
    let area = integrate_with_breaks(&q, lo, v, &p.breakpoints(), DEFAULT_ABS_TOL * 1e-2);
    Ok((q(v) * v - area).max(0.0))
}

/// Bernstein-sum form of the finite equilibrium for `Uniform(0, 1)`.
pub fn undiff_uniform_bernstein(n: u64, k: u64, v: f64) -> f64 {
    let c = k as f64 / n as f64;
    let pmf = binomial_pmf(n, v.clamp(0.0, 1.0));
    (1.0 - c) * pmf[(n - k + 1) as usize..].iter().sum::<f64>()
}

/// Equilibrium efforts of the two-agent, one-spot contest with `v1 ~ U[0,1]`, `v2 ~ U[0,rho]`.
///
/// Returns `A1(v)` and, when `v <= rho`, `A2(v)`.
pub fn two_agent_policies(rho: f64, v: f64) -> Result<(f64, Option<f64>)> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(ContestError::Domain(format!("rho = {rho} must lie in (0, 1]")));
    }
    if !(0.0..=1.0).contains(&v) {
        return Err(ContestError::Domain(format!("valuation {v} outside [0, 1]")));
    }
    let a1 = rho / (rho + 1.0) * v.powf(rho + 1.0);
    let a2 = (v <= rho).then(|| rho.powf(-1.0 / rho) / (rho + 1.0) * v.powf(1.0 + 1.0 / rho));
    Ok((a1, a2))
}

/// Expected winning effort of the two-agent contest.
pub fn two_agent_revenue(rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(ContestError::Domain(format!("rho = {rho} must lie in (0, 1]")));
    }
    Ok(rho / (2.0 * (rho + 1.0)))
}

/// Relative overestimate of revenue when the unbiased prediction 1/4 is used.
pub fn two_agent_overestimate(rho: f64) -> Result<f64> {
    let rv = two_agent_revenue(rho)?;
    Ok((0.25 - rv) / rv)
}

/// Probability that fewer than `k` opponents beat the candidate.
///
/// Opponents from group 1 (resp. 2) beat independently with probability `p1_tail`
/// (resp. `p2_tail`). `perspective` (0 or 1) is the candidate's own group, which
/// loses one opponent.
pub fn win_prob_two_group(
    tails: (f64, f64),
    n1: u64,
    n2: u64,
    k: u64,
    perspective: usize,
) -> Result<f64> {
    let (p1, p2) = tails;
    if !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p2) {
        return Err(ContestError::Domain(format!("tail probabilities ({p1}, {p2}) outside [0, 1]")));
    }
    if k > n1 + n2 {
        return Err(ContestError::Domain(format!("k = {k} exceeds n1 + n2 = {}", n1 + n2)));
    }
    let (m1, m2) = match perspective {
        0 if n1 >= 1 => (n1 - 1, n2),
        1 if n2 >= 1 => (n1, n2 - 1),
        _ => {
            return Err(ContestError::Domain(format!(
                "perspective {perspective} invalid for group sizes ({n1}, {n2})"
            )))
        }
    };
    if k == 0 {
        return Ok(0.0);
    }
    let pmf1 = binomial_pmf(m1, p1);
    let cdf2 = binomial_cdf(m2, p2);
    Ok(convolve_tail(&pmf1, &cdf2, k))
}

/// `Pr[X + Y <= k - 1]` from the pmf of `X` and the cdf of `Y`.
pub(crate) fn convolve_tail(pmf_x: &[f64], cdf_y: &[f64], k: u64) -> f64 {
    let top = (k - 1) as usize;
    let my = cdf_y.len() - 1;
    let mut total = 0.0;
    for (b, px) in pmf_x.iter().enumerate().take(top + 1) {
        total += px * cdf_y[(top - b).min(my)];
    }
    total.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn u01() -> DensitySpec {
        DensitySpec::uniform(0.0, 1.0)
    }

    fn brute_win_prob(tails: (f64, f64), n1: u64, n2: u64, k: u64, perspective: usize) -> f64 {
        let m1 = n1 - (perspective == 0) as u64;
        let m2 = n2 - (perspective == 1) as u64;
        let m = (m1 + m2) as u32;
        let mut total = 0.0;
        for mask in 0u32..(1 << m) {
            let mut prob = 1.0;
            let mut beaten = 0;
            for j in 0..m {
                let p = if (j as u64) < m1 { tails.0 } else { tails.1 };
                if mask >> j & 1 == 1 {
                    prob *= p;
                    beaten += 1;
                } else {
                    prob *= 1.0 - p;
                }
            }
            if beaten < k {
                total += prob;
            }
        }
        total
    }

    #[test]
    fn win_prob_examples() {
        assert_eq!(win_prob_two_group((0.0, 0.0), 5, 5, 3, 0).unwrap(), 1.0);
        assert_eq!(win_prob_two_group((1.0, 1.0), 5, 5, 3, 1).unwrap(), 0.0);
        let w = win_prob_two_group((0.5, 0.25), 2, 2, 2, 0).unwrap();
        assert!((w - brute_win_prob((0.5, 0.25), 2, 2, 2, 0)).abs() < 1e-15);
        assert!(win_prob_two_group((0.5, 0.5), 2, 2, 5, 0).is_err());
    }

    #[test]
    fn q_p_examples() {
        for &v in &[0.0, 0.3, 0.7, 1.0] {
            assert!((q_p(2, 1, &u01(), v).unwrap() - v).abs() < 1e-15);
        }
        assert!((q_p(3, 1, &u01(), 0.5).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn undiff_examples() {
        assert!((undiff_finite_policy(2, 1, &u01(), 0.5).unwrap() - 0.125).abs() < 1e-12);
        assert_eq!(undiff_finite_policy(5, 2, &u01(), 0.0).unwrap(), 0.0);
        let quad = undiff_finite_policy(50, 25, &u01(), 0.5).unwrap();
        assert!((quad - undiff_uniform_bernstein(50, 25, 0.5)).abs() < 1e-10);
    }

    #[test]
    fn undiff_bernstein_agreement_on_grid() {
        for &(n, k) in &[(5u64, 1u64), (10, 3), (20, 10), (30, 29)] {
            for i in 0..=20 {
                let v = i as f64 / 20.0;
                let a = undiff_finite_policy(n, k, &u01(), v).unwrap();
                assert!((a - undiff_uniform_bernstein(n, k, v)).abs() < 1e-10, "n={n} k={k} v={v}");
            }
        }
    }

    #[test]
    fn undiff_first_order_condition() {
        let p = DensitySpec::trunc_normal(0.5, 0.2, 0.0, 1.0);
        let (n, k) = (12, 4);
        let h = 1e-5;
        for i in 1..10 {
            let v = i as f64 / 10.0;
            let s = |x| undiff_finite_policy(n, k, &p, x).unwrap();
            let q = |x| q_p(n, k, &p, x).unwrap();
            let ds = (s(v + h) - s(v - h)) / (2.0 * h);
            let dq = (q(v + h) - q(v - h)) / (2.0 * h);
            assert!((ds - dq * v).abs() < 1e-4, "v={v}");
            assert!(s(v) >= 0.0 && s(v) <= v);
        }
    }

    #[test]
    fn two_agent_examples() {
        let (a1, a2) = two_agent_policies(1.0, 0.5).unwrap();
        assert!((a1 - 0.125).abs() < 1e-15 && (a2.unwrap() - 0.125).abs() < 1e-15);
        let (_, a2) = two_agent_policies(0.8, 0.8).unwrap();
        assert!((a2.unwrap() - 0.8 / 1.8).abs() < 1e-12);
        let (a1, a2) = two_agent_policies(0.8, 1.0).unwrap();
        assert!((a1 - 0.8 / 1.8).abs() < 1e-12);
        assert!(a2.is_none());
        assert!(two_agent_policies(0.8, 1.2).is_err());
        assert_eq!(two_agent_revenue(1.0).unwrap(), 0.25);
        assert!((two_agent_overestimate(0.8).unwrap() - 0.125).abs() < 1e-12);
    }

    #[test]
    fn two_agent_stability_identity() {
        // A2'(A2^{-1}(A1(v))) = v / rho.
        for &rho in &[0.5f64, 0.8, 0.95] {
            let a2 = |x: f64| rho.powf(-1.0 / rho) / (rho + 1.0) * x.powf(1.0 + 1.0 / rho);
            let a2_inv = |y: f64| (y * (rho + 1.0) * rho.powf(1.0 / rho)).powf(rho / (rho + 1.0));
            for i in 1..10 {
                let v = i as f64 / 10.0;
                let (a1, _) = two_agent_policies(rho, v).unwrap();
                let x = a2_inv(a1);
                let h = 1e-6;
                let d = (a2(x + h) - a2(x - h)) / (2.0 * h);
                assert!((d - v / rho).abs() < 1e-8, "rho={rho} v={v}");
            }
        }
    }

    #[test]
    fn two_agent_ordering_crosses_once() {
        // A1 <= A2 exactly on [rho^{1/(1-rho)}, rho].
        for &rho in &[0.3f64, 0.6, 0.9] {
            let cross = rho.powf(1.0 / (1.0 - rho));
            for i in 1..=20 {
                let v = rho * i as f64 / 20.0;
                let (a1, a2) = two_agent_policies(rho, v).unwrap();
                let a2 = a2.unwrap();
                if v >= cross * (1.0 + 1e-9) {
                    assert!(a1 <= a2, "rho={rho} v={v}");
                } else if v <= cross * (1.0 - 1e-9) {
                    assert!(a1 >= a2, "rho={rho} v={v}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn win_prob_matches_enumeration(n1 in 1u64..7, n2 in 1u64..7, k in 0u64..13, i in 0usize..5, j in 0usize..5, persp in 0usize..2) {
            prop_assume!(k <= n1 + n2);
            let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
            let tails = (grid[i], grid[j]);
            let w = win_prob_two_group(tails, n1, n2, k, persp).unwrap();
            prop_assert!((w - brute_win_prob(tails, n1, n2, k, persp)).abs() < 1e-12);
        }

        #[test]
        fn win_prob_monotone_in_tails(p1 in 0.0..1.0f64, p2 in 0.0..1.0f64, d in 0.0..0.2f64) {
            let w = |a: f64, b: f64| win_prob_two_group((a.min(1.0), b.min(1.0)), 8, 6, 4, 0).unwrap();
            prop_assert!(w(p1 + d, p2) <= w(p1, p2) + 1e-12);
            prop_assert!(w(p1, p2 + d) <= w(p1, p2) + 1e-12);
        }

        #[test]
        fn q_p_nonincreasing_in_n(k in 1u64..10, extra in 0u64..20, v in 0.0..1.0f64) {
            let n = k + extra;
            let a = q_p(n, k, &u01(), v).unwrap();
            let b = q_p(n + 1, k, &u01(), v).unwrap();
            prop_assert!(b <= a + 1e-12);
        }

        #[test]
        fn q_p_monotone_in_v(n in 2u64..30, kk in 0u64..30, v in 0.0..0.95f64, dv in 0.0..0.05f64) {
            let k = 1 + kk % n;
            prop_assert!(q_p(n, k, &u01(), v).unwrap() <= q_p(n, k, &u01(), v + dv).unwrap() + 1e-12);
        }
    }
}
