//! Large-population equilibrium thresholds and effort policies.

use serde::{Deserialize, Serialize};

use crate::densities::{inverse_monotone, uniform_sum_cdf, DensitySpec};
use crate::error::{ContestError, Result};
use crate::quadrature::DEFAULT_ABS_TOL;
use crate::roots::{brent, inf_at_least, sup_at_most};

/// Residual tolerance on the key equation.
pub const KEY_EQUATION_TOL: f64 = 1e-12;

fn unit_cost() -> DensitySpec {
    DensitySpec::point_mass(1.0)
}

fn one() -> f64 {
    1.0
}

fn zero_ability() -> DensitySpec {
    DensitySpec::point_mass(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub weight: f64,
    pub valuation: DensitySpec,
    #[serde(default = "unit_cost")]
    pub cost: DensitySpec,
    #[serde(default = "one")]
    pub merit_scale: f64,
    #[serde(default)]
    pub merit_offset: f64,
}

impl GroupSpec {
    pub fn new(weight: f64, valuation: DensitySpec) -> Self {
        GroupSpec {
            weight,
            valuation,
            cost: unit_cost(),
            merit_scale: 1.0,
            merit_offset: 0.0,
        }
    }

    pub fn with_merit(mut self, scale: f64, offset: f64) -> Self {
        self.merit_scale = scale;
        self.merit_offset = offset;
        self
    }

    pub fn with_cost(mut self, cost: DensitySpec) -> Self {
        self.cost = cost;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContestSpec {
    pub groups: Vec<GroupSpec>,
    #[serde(default = "zero_ability")]
    pub ability: DensitySpec,
    #[serde(alias = "c")]
    pub selection_fraction: f64,
}

/// Equilibrium threshold policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub t: f64,
    pub per_group_thresholds: Vec<f64>,
    pub delta_n: Option<f64>,
    pub epsilon_n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
}

impl ContestSpec {
    pub fn new(groups: Vec<GroupSpec>, ability: DensitySpec, c: f64) -> Self {
        ContestSpec {
            groups,
            ability,
            selection_fraction: c,
        }
    }

    /// Advantaged group `p1` with weight `1 - alpha`, disadvantaged group `rho`-biased.
    pub fn two_group(p1: DensitySpec, rho: f64, alpha: f64, ability: DensitySpec, c: f64) -> Self {
        let p2 = DensitySpec::biased(p1.clone(), rho);
        ContestSpec::new(
            vec![GroupSpec::new(1.0 - alpha, p1), GroupSpec::new(alpha, p2)],
            ability,
            c,
        )
    }

    pub fn single_group(p: DensitySpec, ability: DensitySpec, c: f64) -> Self {
        ContestSpec::new(vec![GroupSpec::new(1.0, p)], ability, c)
    }

    pub fn c(&self) -> f64 {
        self.selection_fraction
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ContestError::Validation(m));
        if self.groups.is_empty() {
            return bad("contest needs at least one group".into());
        }
        let c = self.selection_fraction;
        if !(c > 0.0 && c < 1.0) {
            return bad(format!("selection fraction c = {c} must lie in (0, 1)"));
        }
        self.ability.validate()?;
        let mut total = 0.0;
        for (i, g) in self.groups.iter().enumerate() {
            let single = self.groups.len() == 1;
            if !(g.weight > 0.0 && (g.weight < 1.0 || (single && g.weight <= 1.0))) {
                return bad(format!("group {i} weight {} must lie in (0, 1)", g.weight));
            }
            total += g.weight;
            g.valuation.validate()?;
            g.cost.validate()?;
            if g.cost.support().0 <= 0.0 {
                return bad(format!("group {i} cost density must be supported on positive reals"));
            }
            if !(g.merit_scale.is_finite() && g.merit_scale > 0.0) {
                return bad(format!("group {i} merit scale {} must be positive", g.merit_scale));
            }
            if !(g.merit_offset.is_finite() && g.merit_offset >= 0.0) {
                return bad(format!("group {i} merit offset {} must be nonnegative", g.merit_offset));
            }
        }
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("group weights sum to {total}, expected 1"));
        }
        Ok(())
    }

    fn group(&self, idx: usize) -> Result<&GroupSpec> {
        self.groups.get(idx).ok_or_else(|| {
            ContestError::Domain(format!("group index {idx} out of range ({} groups)", self.groups.len()))
        })
    }

    /// `Pr[v/kappa + a <= z]` for group `idx`, before the merit map.
    pub fn type_cdf(&self, idx: usize, z: f64) -> Result<f64> {
        Ok(type_cdf_of(self.group(idx)?, &self.ability, z, DEFAULT_ABS_TOL))
    }

    /// `F_l(zeta) = Pr[x (v/kappa + a) + y <= zeta]`.
    pub fn group_cdf(&self, idx: usize, zeta: f64) -> Result<f64> {
        let g = self.group(idx)?;
        Ok(score_cdf(g, &self.ability, zeta, DEFAULT_ABS_TOL))
    }

    /// Hull of the score support of group `idx`.
    pub fn group_support(&self, idx: usize) -> Result<(f64, f64)> {
        Ok(score_support(self.group(idx)?, &self.ability))
    }

    /// Combined CDF `sum_l alpha_l F_l(zeta)`.
    pub fn combined_cdf(&self, zeta: f64) -> f64 {
        self.groups
            .iter()
            .map(|g| g.weight * score_cdf(g, &self.ability, zeta, DEFAULT_ABS_TOL))
            .sum()
    }

    /// Quantile of a group's score distribution (largest value with CDF at most `q`).
    pub fn group_quantile(&self, idx: usize, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(ContestError::Domain(format!("quantile level {q} outside [0, 1]")));
        }
        let g = self.group(idx)?;
        let support = score_support(g, &self.ability);
        Ok(inverse_monotone(
            |z| score_cdf(g, &self.ability, z, DEFAULT_ABS_TOL),
            support,
            q,
        ))
    }
}

fn type_kappa_cdf(valuation: &DensitySpec, ability: &DensitySpec, kappa: f64, z: f64, tol: f64) -> f64 {
    if let Some(a0) = ability.as_point_mass() {
        return valuation.cdf_tol(kappa * (z - a0), tol);
    }
    if let (Some((lo, hi)), Some(w)) = (valuation.as_uniform(), ability.as_uniform()) {
        return uniform_sum_cdf((lo / kappa, hi / kappa), w, z);
    }
    let breaks: Vec<f64> = valuation
        .breakpoints()
        .iter()
        .map(|b| z - b / kappa)
        .collect();
    let f = |a: f64| valuation.cdf_tol(kappa * (z - a), tol);
    ability
        .expect_dyn(f64::NEG_INFINITY, f64::INFINITY, &breaks, &f, tol)
        .clamp(0.0, 1.0)
}

fn type_cdf_of(g: &GroupSpec, ability: &DensitySpec, z: f64, tol: f64) -> f64 {
    if let Some(k) = g.cost.as_point_mass() {
        return type_kappa_cdf(&g.valuation, ability, k, z, tol);
    }
    let f = |k: f64| type_kappa_cdf(&g.valuation, ability, k, z, tol);
    g.cost
        .expect_dyn(f64::NEG_INFINITY, f64::INFINITY, &[], &f, tol)
        .clamp(0.0, 1.0)
}

fn score_cdf(g: &GroupSpec, ability: &DensitySpec, zeta: f64, tol: f64) -> f64 {
    type_cdf_of(g, ability, (zeta - g.merit_offset) / g.merit_scale, tol)
}

fn score_support(g: &GroupSpec, ability: &DensitySpec) -> (f64, f64) {
    let (vl, vh) = g.valuation.support();
    let (kl, kh) = g.cost.support();
    let (al, ah) = ability.support();
    let lo = vl / kh + al;
    let hi = vh / kl + ah;
    (
        g.merit_scale * lo + g.merit_offset,
        g.merit_scale * hi + g.merit_offset,
    )
}

fn combined_bracket(spec: &ContestSpec) -> (f64, f64) {
    spec.groups.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| {
        let (a, b) = score_support(g, &spec.ability);
        (lo.min(a), hi.max(b))
    })
}

/// Solve `sum_l alpha_l F_l(t) = 1 - c` for the equilibrium score threshold.
pub fn solve_threshold(spec: &ContestSpec) -> Result<ThresholdPolicy> {
    spec.validate()?;
    let level = 1.0 - spec.c();
    let g = |z: f64| spec.combined_cdf(z);
    let (lo, mut hi) = combined_bracket(spec);
    if hi.is_infinite() {
        hi = lo.abs().max(1.0) * 2.0;
        while g(hi) <= level {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(ContestError::NoConvergence("could not bracket the threshold".into()));
            }
        }
    }
    let xtol = 1e-15 * hi.abs().max(1.0);
    let t = match brent(|z| g(z) - level, lo, hi, xtol, KEY_EQUATION_TOL, 300) {
        Ok(t) => t,
        // A jump in the combined CDF (atoms) straddles the level; take the jump point.
        Err(_) => inf_at_least(g, lo, hi, level),
    };

    // Flat stretch of the combined CDF at the target level means the root is not unique.
    let band = 1e-11;
    let a = inf_at_least(g, lo, hi, level - band);
    let b = sup_at_most(g, lo, hi, level + band);
    if b - a > 1e-7 * t.abs().max(1.0) {
        return Err(ContestError::NonUniqueThreshold { lo: a, hi: b });
    }
    Ok(policy_from_t(spec, t))
}

/// Build a policy for an externally supplied threshold.
pub fn policy_from_t(spec: &ContestSpec, t: f64) -> ThresholdPolicy {
    ThresholdPolicy {
        t,
        per_group_thresholds: spec
            .groups
            .iter()
            .map(|g| (t - g.merit_offset) / g.merit_scale)
            .collect(),
        delta_n: None,
        epsilon_n: None,
        n: None,
    }
}

/// Threshold for uniform `p1` on `[0,1]` against its `rho`-biased copy, no ability.
pub fn uniform_closed_threshold(rho: f64, c: f64, alpha: f64) -> f64 {
    let rho_c = 1.0 - c / (1.0 - alpha);
    if rho < rho_c {
        1.0 - c / (1.0 - alpha)
    } else {
        rho * (1.0 - c) / (rho - alpha * rho + alpha)
    }
}

/// Threshold for the uniform pair with ability uniform on `[0,1]`.
pub fn uniform_ability_closed_threshold(rho: f64, c: f64, alpha: f64) -> f64 {
    let level = 1.0 - c;
    let q = 1.0 - alpha + alpha / rho;
    let g_top = (1.0 - alpha) * (1.0 - (1.0 - rho).powi(2) / 2.0) + alpha;
    let g_one = (1.0 + alpha - alpha * rho) / 2.0;
    let g_rho = (1.0 - alpha) * rho * rho / 2.0 + alpha * rho / 2.0;
    if level >= g_top {
        // Only the advantaged group's upper tail lies above t.
        2.0 - (2.0 * c / (1.0 - alpha)).sqrt()
    } else if level >= g_one {
        let disc = 2.0 * c * q - alpha * (1.0 - alpha) * (1.0 - rho).powi(2) / rho;
        (2.0 - alpha + alpha / rho) / q - disc.max(0.0).sqrt() / q
    } else if level >= g_rho {
        let disc = alpha * alpha + (1.0 - alpha) * (2.0 + alpha * rho - 2.0 * c);
        (-alpha + disc.sqrt()) / (1.0 - alpha)
    } else {
        (2.0 * level / q).sqrt()
    }
}

/// Threshold for Pareto(1, 2) `p1` against its `rho`-biased copy, no ability.
pub fn pareto_closed_threshold(rho: f64, c: f64, alpha: f64) -> f64 {
    let s = alpha + c - 1.0;
    if s > 0.0 && rho < (s / alpha).sqrt() {
        rho * (alpha / s).sqrt()
    } else {
        ((1.0 - alpha + alpha * rho * rho) / c).sqrt()
    }
}

/// Equilibrium effort with unit cost.
pub fn effort(policy: &ThresholdPolicy, group: usize, v: f64, a: f64) -> Result<f64> {
    effort_with_cost(policy, group, v, a, 1.0)
}

/// Equilibrium effort for an agent with valuation `v`, ability `a`, cost `kappa`.
pub fn effort_with_cost(policy: &ThresholdPolicy, group: usize, v: f64, a: f64, kappa: f64) -> Result<f64> {
    let theta = *policy.per_group_thresholds.get(group).ok_or_else(|| {
        ContestError::Domain(format!(
            "group index {group} out of range ({} groups)",
            policy.per_group_thresholds.len()
        ))
    })?;
    if !(kappa > 0.0) {
        return Err(ContestError::Domain(format!("cost {kappa} must be positive")));
    }
    Ok(if v / kappa + a >= theta {
        (theta - a).max(0.0)
    } else {
        0.0
    })
}

/// Effort under the finite-n shifted policy: participate once the score type clears `delta_n`.
pub fn shifted_effort(
    policy: &ThresholdPolicy,
    spec: &ContestSpec,
    group: usize,
    v: f64,
    a: f64,
    kappa: f64,
) -> Result<f64> {
    let delta = policy
        .delta_n
        .ok_or_else(|| ContestError::Domain("policy carries no finite-n shift".into()))?;
    let g = spec.group(group)?;
    let theta = *policy
        .per_group_thresholds
        .get(group)
        .ok_or_else(|| ContestError::Domain(format!("group index {group} out of range")))?;
    let score_type = g.merit_scale * (v / kappa + a) + g.merit_offset;
    Ok(if score_type >= delta {
        (theta - a).max(0.0)
    } else {
        0.0
    })
}

/// Independent within-group thresholds `F_l^{-1}(1 - c_l)`.
pub fn quota_thresholds(spec: &ContestSpec, per_group_c: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    if per_group_c.len() != spec.groups.len() {
        return Err(ContestError::Domain(format!(
            "{} quotas for {} groups",
            per_group_c.len(),
            spec.groups.len()
        )));
    }
    per_group_c
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if !(c > 0.0 && c < 1.0) {
                return Err(ContestError::Domain(format!("group {i} quota {c} outside (0, 1)")));
            }
            spec.group_quantile(i, 1.0 - c)
        })
        .collect()
}

fn concentration_gap(n: u64) -> f64 {
    let n = n as f64;
    (n.ln() / n).sqrt()
}

/// Smallest `n_t` such that every `n >= n_t` keeps `F_l(t) - sqrt(ln n / n) > 0`
/// for each group with `F_l(t) > 0`.
pub fn min_population(policy: &ThresholdPolicy, spec: &ContestSpec) -> Result<u64> {
    let mut h_min = f64::INFINITY;
    for i in 0..spec.groups.len() {
        let h = spec.group_cdf(i, policy.t)?;
        if h > 0.0 {
            h_min = h_min.min(h);
        }
    }
    if !h_min.is_finite() {
        return Err(ContestError::DegenerateMetric("no group has mass below t".into()));
    }
    // sqrt(ln n / n) peaks at n = 3 over the integers and decreases afterwards.
    if concentration_gap(3) < h_min {
        return Ok(1);
    }
    let (mut lo, mut hi) = (3u64, 4u64);
    while concentration_gap(hi) >= h_min {
        lo = hi;
        hi = hi.checked_mul(2).ok_or_else(|| {
            ContestError::NoConvergence("n_t exceeds the integer range".into())
        })?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if concentration_gap(mid) < h_min {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Finite-population shift `(Delta_n, epsilon_n)`.
pub fn finite_shift(policy: &ThresholdPolicy, spec: &ContestSpec, n: u64) -> Result<(f64, f64)> {
    spec.validate()?;
    let n_t = min_population(policy, spec)?;
    if n < n_t.max(2) {
        return Err(ContestError::PopulationTooSmall { n, n_t: n_t.max(2) });
    }
    let gap = concentration_gap(n);
    let mut delta = f64::INFINITY;
    for i in 0..spec.groups.len() {
        let h = spec.group_cdf(i, policy.t)?;
        if h > 0.0 {
            delta = delta.min(spec.group_quantile(i, h - gap)?);
        }
    }
    let delta = delta.min(policy.t).max(0.0);
    let nf = n as f64;
    let leak: f64 = spec.groups.iter().map(|g| nf.powf(-g.weight)).sum();
    let eps = (leak * delta + policy.t - delta).max(0.0);
    Ok((delta, eps))
}

/// Copy of `policy` with the finite-n fields filled in.
pub fn with_finite_shift(policy: &ThresholdPolicy, spec: &ContestSpec, n: u64) -> Result<ThresholdPolicy> {
    let (d, e) = finite_shift(policy, spec, n)?;
    Ok(ThresholdPolicy {
        delta_n: Some(d),
        epsilon_n: Some(e),
        n: Some(n),
        ..policy.clone()
    })
}
