//! Representation ratio, welfare ratio and average revenue at a threshold equilibrium.

use serde::{Deserialize, Serialize};

use crate::densities::DensitySpec;
use crate::equilibrium::{uniform_closed_threshold, ContestSpec, GroupSpec, ThresholdPolicy};
use crate::error::{ContestError, Result};
use crate::quadrature::DEFAULT_ABS_TOL;

/// Strictly increasing merit function applied to selected scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeritFn {
    #[default]
    Identity,
    Affine {
        x: f64,
        y: f64,
    },
    /// Piecewise-linear interpolation, extrapolated linearly past the ends.
    Table {
        points: Vec<(f64, f64)>,
    },
}

impl MeritFn {
    pub fn validate(&self) -> Result<()> {
        match self {
            MeritFn::Identity => Ok(()),
            MeritFn::Affine { x, y } => {
                if x.is_finite() && y.is_finite() && *x > 0.0 {
                    Ok(())
                } else {
                    Err(ContestError::Validation(format!("affine merit slope {x} must be positive")))
                }
            }
            MeritFn::Table { points } => {
                if points.len() < 2 {
                    return Err(ContestError::Validation("merit table needs two points".into()));
                }
                for w in points.windows(2) {
                    if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                        return Err(ContestError::Validation(
                            "merit table must be strictly increasing".into(),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            MeritFn::Identity => s,
            MeritFn::Affine { x, y } => x * s + y,
            MeritFn::Table { points } => {
                let last = points.len() - 1;
                let i = match points.iter().position(|p| p.0 > s) {
                    Some(0) => 0,
                    Some(i) => i - 1,
                    None => last - 1,
                };
                let (s0, m0) = points[i];
                let (s1, m1) = points[i + 1];
                m0 + (m1 - m0) * (s - s0) / (s1 - s0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "r_R")]
    pub rep_ratio: f64,
    #[serde(rename = "r_S")]
    pub welfare_ratio: f64,
    #[serde(rename = "RV")]
    pub avg_revenue: f64,
    pub per_group_selection_rate: Vec<f64>,
    pub per_group_welfare: Vec<f64>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "rho,c,alpha,t,r_R,r_S,RV";

    pub fn csv_row(&self, rho: f64, c: f64, alpha: f64, t: f64) -> String {
        [rho, c, alpha, t, self.rep_ratio, self.welfare_ratio, self.avg_revenue]
            .iter()
            .map(|x| fmt_sig(*x))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Format with 12 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.11e}")
    }
}

/// `min(a/b, b/a)`, zero when either side vanishes.
fn min_ratio(values: &[f64]) -> f64 {
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if hi <= 0.0 || lo <= 0.0 {
        0.0
    } else {
        (lo / hi).clamp(0.0, 1.0)
    }
}

/// Closed-form metrics for `p1` uniform on `[0,1]` and its `rho`-biased copy.
pub fn uniform_metrics(rho: f64, c: f64, alpha: f64, merit: &MeritFn) -> Result<MetricsReport> {
    merit.validate()?;
    if !(rho > 0.0 && rho <= 1.0 && c > 0.0 && c < 1.0 && alpha > 0.0 && alpha < 1.0) {
        return Err(ContestError::Domain(format!(
            "uniform metrics need rho in (0,1], c and alpha in (0,1); got ({rho}, {c}, {alpha})"
        )));
    }
    let t = uniform_closed_threshold(rho, c, alpha);
    let rho_c = 1.0 - c / (1.0 - alpha);
    let r_r = if rho >= rho_c {
        ((rho - alpha * rho + alpha + c - 1.0) / (alpha - alpha * rho + c * rho)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let s1 = (1.0 - t).powi(2) / 2.0;
    let s2 = if t < rho { (rho - t).powi(2) / (2.0 * rho) } else { 0.0 };
    Ok(MetricsReport {
        rep_ratio: r_r,
        welfare_ratio: rho * r_r * r_r,
        avg_revenue: merit.eval(t),
        per_group_selection_rate: vec![1.0 - t, (1.0 - t / rho).max(0.0)],
        per_group_welfare: vec![s1, s2],
    })
}

/// Metrics at threshold `t` for `p1` against its `rho`-biased copy, no ability.
pub fn biased_metrics_at(t: f64, p1: &DensitySpec, rho: f64, merit: &MeritFn) -> Result<MetricsReport> {
    p1.validate()?;
    merit.validate()?;
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(ContestError::Domain(format!("rho = {rho} must lie in (0, 1]")));
    }
    let r1 = 1.0 - p1.cdf(t);
    if !(r1 > 0.0) {
        return Err(ContestError::DegenerateMetric(format!(
            "nobody from the advantaged group clears t = {t}"
        )));
    }
    let u = t / rho;
    let r2 = 1.0 - p1.cdf(u);
    let tol = DEFAULT_ABS_TOL;
    let s1 = p1.expect_dyn(t, f64::INFINITY, &[t], &|v| v - t, tol);
    let s2 = rho * p1.expect_dyn(u, f64::INFINITY, &[u], &|v| v - u, tol);
    Ok(MetricsReport {
        rep_ratio: min_ratio(&[r1, r2]),
        welfare_ratio: min_ratio(&[s1, s2]),
        avg_revenue: merit.eval(t),
        per_group_selection_rate: vec![r1, r2],
        per_group_welfare: vec![s1, s2],
    })
}

struct GroupTotals {
    rate: f64,
    welfare: f64,
    revenue: f64,
}

/// Selection rate, welfare and merit mass for one group, for fixed cost `kappa`.
fn group_totals_kappa(
    g: &GroupSpec,
    ability: &DensitySpec,
    t: f64,
    theta: f64,
    kappa: f64,
    merit: &MeritFn,
    tol: f64,
) -> GroupTotals {
    let val = &g.valuation;
    let at_ability = |a: f64| {
        let thr = kappa * (theta - a);
        let pay = kappa * (theta - a).max(0.0);
        let sel = 1.0 - val.cdf_tol(thr, tol);
        let head = val.expect_dyn(thr, f64::INFINITY, &[thr], &|v| v, tol);
        let m = merit.eval(t.max(g.merit_scale * a + g.merit_offset));
        (sel, head - pay * sel, m * sel)
    };
    if let Some(a0) = ability.as_point_mass() {
        let (rate, welfare, revenue) = at_ability(a0);
        return GroupTotals {
            rate,
            welfare,
            revenue,
        };
    }
    let mut breaks = vec![theta];
    breaks.extend(val.breakpoints().iter().map(|b| theta - b / kappa));
    let inf = f64::INFINITY;
    let rate = ability.expect_dyn(-inf, inf, &breaks, &|a| at_ability(a).0, tol);
    let welfare = ability.expect_dyn(-inf, inf, &breaks, &|a| at_ability(a).1, tol);
    let revenue = ability.expect_dyn(-inf, inf, &breaks, &|a| at_ability(a).2, tol);
    GroupTotals {
        rate,
        welfare,
        revenue,
    }
}

fn group_totals(g: &GroupSpec, ability: &DensitySpec, t: f64, theta: f64, merit: &MeritFn) -> GroupTotals {
    let tol = DEFAULT_ABS_TOL;
    if let Some(k) = g.cost.as_point_mass() {
        return group_totals_kappa(g, ability, t, theta, k, merit, tol);
    }
    let inf = f64::INFINITY;
    let pick = |k: f64, which: usize| {
        let r = group_totals_kappa(g, ability, t, theta, k, merit, tol);
        [r.rate, r.welfare, r.revenue][which]
    };
    GroupTotals {
        rate: g.cost.expect_dyn(-inf, inf, &[], &|k| pick(k, 0), tol),
        welfare: g.cost.expect_dyn(-inf, inf, &[], &|k| pick(k, 1), tol),
        revenue: g.cost.expect_dyn(-inf, inf, &[], &|k| pick(k, 2), tol),
    }
}

/// Metrics for an arbitrary contest under a threshold policy.
///
/// Welfare of a selected agent is `v - kappa * effort`; revenue averages the merit
/// of selected scores `max(t, x a + y)`.
pub fn general_metrics(spec: &ContestSpec, policy: &ThresholdPolicy, merit: &MeritFn) -> Result<MetricsReport> {
    spec.validate()?;
    merit.validate()?;
    if policy.per_group_thresholds.len() != spec.groups.len() {
        return Err(ContestError::Domain(format!(
            "policy has {} group thresholds for {} groups",
            policy.per_group_thresholds.len(),
            spec.groups.len()
        )));
    }
    let t = policy.t;
    let totals: Vec<GroupTotals> = spec
        .groups
        .iter()
        .zip(&policy.per_group_thresholds)
        .map(|(g, &theta)| group_totals(g, &spec.ability, t, theta, merit))
        .collect();
    let rates: Vec<f64> = totals.iter().map(|x| x.rate.clamp(0.0, 1.0)).collect();
    let welfare: Vec<f64> = totals.iter().map(|x| x.welfare).collect();
    let mass: f64 = spec.groups.iter().zip(&rates).map(|(g, r)| g.weight * r).sum();
    if !(mass > 0.0) {
        return Err(ContestError::DegenerateMetric(format!("nobody clears t = {t}")));
    }
    let ability_below = spec
        .groups
        .iter()
        .zip(&policy.per_group_thresholds)
        .all(|(_, &theta)| spec.ability.support().1 <= theta);
    let avg_revenue = if ability_below {
        merit.eval(t)
    } else {
        spec.groups
            .iter()
            .zip(&totals)
            .map(|(g, x)| g.weight * x.revenue)
            .sum::<f64>()
            / mass
    };
    Ok(MetricsReport {
        rep_ratio: min_ratio(&rates),
        welfare_ratio: min_ratio(&welfare),
        avg_revenue,
        per_group_selection_rate: rates,
        per_group_welfare: welfare,
    })
}
