//! Cost-constrained fairness interventions and bias calibration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::DensitySpec;
use crate::equilibrium::{solve_threshold, uniform_closed_threshold, ContestSpec};
use crate::error::{ContestError, Result};
use crate::metrics::{biased_metrics_at, fmt_sig, uniform_metrics, MeritFn};
use crate::roots::inf_at_least;

/// Feasibility slack on the representation floor.
const FLOOR_SLACK: f64 = 1e-12;
const GRID: usize = 200;

/// Which group ratio the floor `tau` constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RatioConstraint {
    #[default]
    Representation,
    Welfare,
}

/// Valuation model behind the threshold and the representation ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValuationModel {
    /// `p1 = Uniform(0,1)`, closed forms throughout.
    #[default]
    Uniform,
    /// Arbitrary `p1` against its `rho`-biased copy, solved numerically.
    General { p1: DensitySpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub rho: f64,
    pub c: f64,
    pub alpha: f64,
    pub cost_coeff: f64,
    pub cost_exponent: f64,
    #[serde(default)]
    pub merit: MeritFn,
    pub tau: f64,
    #[serde(default)]
    pub model: ValuationModel,
    #[serde(default)]
    pub constraint: RatioConstraint,
}

impl InterventionSpec {
    pub fn uniform(rho: f64, c: f64, alpha: f64, tau: f64) -> Self {
        InterventionSpec {
            rho,
            c,
            alpha,
            cost_coeff: 5.0,
            cost_exponent: 1.1,
            merit: MeritFn::Identity,
            tau,
            model: ValuationModel::Uniform,
            constraint: RatioConstraint::Representation,
        }
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        InterventionSpec { tau, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ContestError::Validation(m));
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho = {} must lie in (0, 1]", self.rho));
        }
        if !(self.c > 0.0 && self.c < 1.0 && self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("c and alpha must lie in (0, 1)".into());
        }
        if !(self.cost_coeff >= 0.0 && self.cost_exponent >= 1.0) {
            return bad("cost needs a >= 0 and beta >= 1".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau = {} must be positive", self.tau));
        }
        self.merit.validate()?;
        if let ValuationModel::General { p1 } = &self.model {
            p1.validate()?;
        }
        Ok(())
    }

    fn threshold(&self, rho: f64, c: f64) -> f64 {
        match &self.model {
            ValuationModel::Uniform => uniform_closed_threshold(rho, c, self.alpha),
            ValuationModel::General { p1 } => {
                let spec = ContestSpec::two_group(p1.clone(), rho, self.alpha, DensitySpec::point_mass(0.0), c);
                solve_threshold(&spec).map(|p| p.t).unwrap_or(f64::NAN)
            }
        }
    }

    fn rep_ratio(&self, rho: f64, c: f64) -> f64 {
        match (&self.model, self.constraint) {
            (ValuationModel::Uniform, RatioConstraint::Representation) => uniform_rep_ratio(rho, c, self.alpha),
            (ValuationModel::Uniform, RatioConstraint::Welfare) => {
                if c >= 1.0 {
                    return 1.0;
                }
                uniform_metrics(rho, c, self.alpha, &MeritFn::Identity)
                    .map(|m| m.welfare_ratio)
                    .unwrap_or(0.0)
            }
            (ValuationModel::General { p1 }, constraint) => {
                let t = self.threshold(rho, c);
                biased_metrics_at(t, p1, rho, &MeritFn::Identity)
                    .map(|m| match constraint {
                        RatioConstraint::Representation => m.rep_ratio,
                        RatioConstraint::Welfare => m.welfare_ratio,
                    })
                    .unwrap_or(0.0)
            }
        }
    }

    /// Smallest `dc` meeting the floor at `rho + dr`, if any.
    fn min_dc(&self, dr: f64) -> Option<f64> {
        let rho = (self.rho + dr).min(1.0);
        let c_max = 1.0 - 1e-12;
        match (&self.model, self.constraint) {
            (ValuationModel::Uniform, RatioConstraint::Representation) => {
                let a = self.alpha;
                let denom = 1.0 - self.tau * rho;
                let cmin = if denom <= 0.0 {
                    if self.tau * rho <= 1.0 + 1e-15 { self.c } else { return None }
                } else {
                    (1.0 - rho) * (1.0 - a + self.tau * a) / denom
                };
                let dc = (cmin - self.c).max(0.0);
                (self.c + dc <= 1.0 + 1e-15).then_some(dc)
            }
            _ => {
                let ok = |c2: f64| self.rep_ratio(rho, c2) >= self.tau - FLOOR_SLACK;
                if ok(self.c) {
                    return Some(0.0);
                }
                if !ok(c_max) {
                    return None;
                }
                let c2 = inf_at_least(|x| if ok(x) { 1.0 } else { 0.0 }, self.c, c_max, 0.5);
                Some(c2 - self.c)
            }
        }
    }
}

/// Closed-form representation ratio of the uniform pair; zero below the breakpoint.
pub fn uniform_rep_ratio(rho: f64, c: f64, alpha: f64) -> f64 {
    if rho < 1.0 - c / (1.0 - alpha) {
        return 0.0;
    }
    let den = alpha - alpha * rho + c * rho;
    if den <= 0.0 {
        return 1.0;
    }
    ((rho - alpha * rho + alpha + c - 1.0) / den).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub objective: f64,
    pub r_r: f64,
    pub feasible: bool,
}

/// Objective `a dr^beta + m(t(rho, c)) - m(t(rho + dr, c + dc))` and feasibility.
pub fn eval_objective(spec: &InterventionSpec, dr: f64, dc: f64) -> Result<ObjectiveValue> {
    spec.validate()?;
    let eps = 1e-12;
    if !(dr >= 0.0 && dr <= 1.0 - spec.rho + eps && dc >= 0.0 && dc <= 1.0 - spec.c + eps) {
        return Err(ContestError::Domain(format!("(dr, dc) = ({dr}, {dc}) outside bounds")));
    }
    Ok(objective_unchecked(spec, dr, dc))
}

fn objective_unchecked(spec: &InterventionSpec, dr: f64, dc: f64) -> ObjectiveValue {
    let (rho2, c2) = ((spec.rho + dr).min(1.0), (spec.c + dc).min(1.0));
    let m = |t: f64| spec.merit.eval(t);
    let g = m(spec.threshold(spec.rho, spec.c)) - m(spec.threshold(rho2, c2));
    let objective = spec.cost_coeff * dr.powf(spec.cost_exponent) + g;
    let r_r = spec.rep_ratio(rho2, c2);
    let side = rho2 >= 1.0 - c2 / (1.0 - spec.alpha) - 1e-15;
    ObjectiveValue {
        objective,
        r_r,
        feasible: r_r >= spec.tau - FLOOR_SLACK && side,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSolution {
    pub delta_rho: f64,
    pub delta_c: f64,
    pub objective: f64,
    pub achieved_r_r: f64,
    /// Active constraints, among "rep_floor", "rho_lower", "rho_upper", "c_lower", "c_upper".
    pub binding: Vec<String>,
    /// Best objective found by the coarse grid.
    pub grid_objective: f64,
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs()) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Coarse 200x200 grid, then golden-section refinement along the floor manifold.
pub fn optimize(spec: &InterventionSpec) -> Result<InterventionSolution> {
    spec.validate()?;
    let dr_max = 1.0 - spec.rho;
    let dc_max = 1.0 - spec.c;
    let best_possible = spec.rep_ratio(1.0, spec.c).max(spec.rep_ratio(1.0, 1.0 - 1e-12));
    if spec.tau > best_possible + FLOOR_SLACK {
        return Err(ContestError::Infeasible {
            tau: spec.tau,
            max_r_r: best_possible,
        });
    }

    let step = |max: f64, i: usize| max * i as f64 / (GRID - 1) as f64;
    let mut grid_best: Option<(f64, f64, f64)> = None;
    for i in 0..GRID {
        let dr = step(dr_max, i);
        for j in 0..GRID {
            let dc = step(dc_max, j);
            let v = objective_unchecked(spec, dr, dc);
            if v.feasible && grid_best.map_or(true, |b| v.objective < b.2) {
                grid_best = Some((dr, dc, v.objective));
            }
        }
    }

    let on_manifold = |dr: f64| -> Option<(f64, f64)> {
        let dc = spec.min_dc(dr)?;
        let dc = dc.min(dc_max);
        let v = objective_unchecked(spec, dr, dc);
        v.feasible.then_some((dc, v.objective))
    };
    let h = |dr: f64| on_manifold(dr).map_or(f64::INFINITY, |x| x.1);

    let mut candidates: Vec<(f64, f64, f64)> = Vec::new();
    if let Some(b) = grid_best {
        candidates.push(b);
    }
    let cell = dr_max / (GRID - 1) as f64;
    let centre = grid_best.map_or(0.0, |b| b.0);
    let lo = (centre - cell).max(0.0);
    let hi = (centre + cell).min(dr_max);
    let mut probes = vec![0.0, dr_max];
    if hi > lo {
        probes.push(golden_min(&h, lo, hi).0);
    }
    // The manifold objective can be flat near dr = 0; scan the whole range coarsely too.
    let (g_dr, _) = (0..=400)
        .map(|i| dr_max * i as f64 / 400.0)
        .map(|dr| (dr, h(dr)))
        .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    if dr_max > 0.0 {
        let w = dr_max / 400.0;
        probes.push(golden_min(&h, (g_dr - w).max(0.0), (g_dr + w).min(dr_max)).0);
    }
    for dr in probes {
        if let Some((dc, obj)) = on_manifold(dr) {
            candidates.push((dr, dc, obj));
        }
    }
    let (dr, dc, objective) = candidates
        .into_iter()
        .fold(None, |acc: Option<(f64, f64, f64)>, c| match acc {
            Some(a) if a.2 <= c.2 => Some(a),
            _ => Some(c),
        })
        .ok_or(ContestError::Infeasible {
            tau: spec.tau,
            max_r_r: best_possible,
        })?;

    let v = objective_unchecked(spec, dr, dc);
    let mut binding = Vec::new();
    if (v.r_r - spec.tau).abs() <= 1e-6 {
        binding.push("rep_floor".to_string());
    }
    let at = |x: f64, b: f64| (x - b).abs() <= 1e-9;
    if at(dr, 0.0) {
        binding.push("rho_lower".to_string());
    }
    if at(dr, dr_max) {
        binding.push("rho_upper".to_string());
    }
    if at(dc, 0.0) {
        binding.push("c_lower".to_string());
    }
    if at(dc, dc_max) {
        binding.push("c_upper".to_string());
    }
    Ok(InterventionSolution {
        delta_rho: dr,
        delta_c: dc,
        objective,
        achieved_r_r: v.r_r,
        binding,
        grid_objective: grid_best.map_or(f64::INFINITY, |b| b.2),
    })
}

/// Solve for each `tau`, in parallel; order follows `taus`.
pub fn sweep_tau(spec: &InterventionSpec, taus: &[f64]) -> Vec<Result<InterventionSolution>> {
    taus.par_iter().map(|&tau| optimize(&spec.with_tau(tau))).collect()
}

/// Smallest `tau` whose optimal `delta_rho` exceeds `threshold`.
pub fn crossover_tau(taus: &[f64], solutions: &[Result<InterventionSolution>], threshold: f64) -> Option<f64> {
    taus.iter()
        .zip(solutions)
        .find(|(_, s)| matches!(s, Ok(s) if s.delta_rho > threshold))
        .map(|(t, _)| *t)
}

pub const SWEEP_CSV_HEADER: &str = "tau,delta_rho,delta_c,objective,r_R";

pub fn sweep_csv(taus: &[f64], solutions: &[Result<InterventionSolution>]) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for (tau, s) in taus.iter().zip(solutions) {
        if let Ok(s) = s {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_sig(*tau),
                fmt_sig(s.delta_rho),
                fmt_sig(s.delta_c),
                fmt_sig(s.objective),
                fmt_sig(s.achieved_r_r)
            ));
        }
    }
    out
}

/// Invert the uniform representation ratio for `rho`.
pub fn calibrate_rho(r_obs: f64, c: f64, alpha: f64) -> Result<f64> {
    if !(r_obs > 0.0 && r_obs <= 1.0) {
        return Err(ContestError::Domain(format!("r_obs = {r_obs} must lie in (0, 1]")));
    }
    if !(c > 0.0 && c < 1.0 && alpha > 0.0 && alpha < 1.0) {
        return Err(ContestError::Domain("c and alpha must lie in (0, 1)".into()));
    }
    let coeff = (1.0 - c) + (1.0 - r_obs) * (c - alpha);
    if coeff <= 0.0 {
        return Err(ContestError::Domain(format!(
            "calibration coefficient {coeff} is not positive"
        )));
    }
    let rho = ((1.0 - c) - (1.0 - r_obs) * alpha) / coeff;
    if !(rho > 0.0 && rho <= 1.0 + 1e-12) {
        return Err(ContestError::CalibrationOutOfRange { rho });
    }
    Ok(rho.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base(tau: f64) -> InterventionSpec {
        InterventionSpec::uniform(0.882, 0.268, 0.228, tau)
    }

    #[test]
    fn objective_examples() {
        let v = eval_objective(&base(0.8), 0.0, 0.0).unwrap();
        assert_eq!(v.objective, 0.0);
        assert!((v.r_r - 0.671).abs() < 1e-3);
        let v = eval_objective(&base(0.8), 1.0 - 0.882, 0.0).unwrap();
        assert!((v.r_r - 1.0).abs() < 1e-12);
        let v = eval_objective(&base(0.8), 0.0, 0.1145).unwrap();
        assert!((v.r_r - 0.8).abs() < 1e-3);
        assert!(eval_objective(&base(0.8), -0.1, 0.0).is_err());
    }

    #[test]
    fn optimize_regimes() {
        let low = optimize(&base(0.8)).unwrap();
        assert!(low.delta_c > 0.1);
        assert!(low.delta_rho < 1e-3, "{low:?}");
        assert!(low.objective <= low.grid_objective);
        let high = optimize(&base(0.95)).unwrap();
        assert!(high.delta_rho > 1e-2, "{high:?}");
        assert!(high.achieved_r_r >= 0.95 - 1e-9);
    }

    #[test]
    fn optimize_at_observed_ratio_is_essentially_idle() {
        let r_obs = uniform_rep_ratio(0.882, 0.268, 0.228);
        let s = optimize(&base(r_obs)).unwrap();
        assert!(s.delta_rho < 1e-6 && s.delta_c < 1e-9);
        assert!(s.objective.abs() < 1e-9);
    }

    #[test]
    fn infeasible_tau() {
        assert!(matches!(optimize(&base(1.2)), Err(ContestError::Infeasible { .. })));
    }

    #[test]
    fn calibration_examples() {
        assert!((calibrate_rho(0.671, 0.268, 0.228).unwrap() - 0.882).abs() < 1e-3);
        assert!((calibrate_rho(1.0, 0.3, 0.4).unwrap() - 1.0).abs() < 1e-12);
        let r = uniform_metrics(0.9, 0.1, 0.5, &MeritFn::Identity).unwrap().rep_ratio;
        assert!((r - 0.357143).abs() < 1e-6);
        assert!((calibrate_rho(r, 0.1, 0.5).unwrap() - 0.9).abs() < 1e-12);
        assert!(calibrate_rho(0.0, 0.1, 0.5).is_err());
    }

    #[test]
    fn general_model_matches_uniform() {
        let mut spec = base(0.85);
        let u = optimize(&spec).unwrap();
        spec.model = ValuationModel::General {
            p1: DensitySpec::uniform(0.0, 1.0),
        };
        let v = objective_unchecked(&spec, u.delta_rho, u.delta_c);
        assert!((v.objective - u.objective).abs() < 1e-9);
        assert!((v.r_r - u.achieved_r_r).abs() < 1e-9);
    }

    #[test]
    fn welfare_floor_is_met() {
        let mut spec = base(0.8);
        spec.constraint = RatioConstraint::Welfare;
        let r0 = objective_unchecked(&spec, 0.0, 0.0).r_r;
        assert!(r0 < 0.8);
        let s = optimize(&spec).unwrap();
        assert!(s.achieved_r_r >= 0.8 - 1e-9, "{s:?}");
    }

    #[test]
    fn sweep_csv_shape() {
        let taus = [0.7, 0.8];
        let sols = sweep_tau(&base(0.7), &taus);
        let csv = sweep_csv(&taus, &sols);
        assert!(csv.starts_with("tau,delta_rho,delta_c,objective,r_R\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn calibration_round_trip(rho in 0.3..=1.0f64, c in 0.05..0.6f64, alpha in 0.05..0.6f64) {
            prop_assume!(rho >= 1.0 - c / (1.0 - alpha));
            let r = uniform_metrics(rho, c, alpha, &MeritFn::Identity).unwrap().rep_ratio;
            prop_assume!(r > 0.0);
            let back = calibrate_rho(r, c, alpha).unwrap();
            let again = uniform_metrics(back, c, alpha, &MeritFn::Identity).unwrap().rep_ratio;
            prop_assert!((again - r).abs() < 1e-10);
        }

        #[test]
        fn feasible_set_is_upward_closed(dr in 0.0..0.118f64, dc in 0.0..0.7f64, er in 0.0..0.05f64, ec in 0.0..0.05f64) {
            let spec = base(0.8);
            let a = objective_unchecked(&spec, dr, dc);
            let b = objective_unchecked(&spec, (dr + er).min(0.118), (dc + ec).min(0.732));
            prop_assert!(!a.feasible || b.feasible);
        }

        #[test]
        fn solution_is_feasible_and_active(tau in 0.68..0.999f64) {
            let s = optimize(&base(tau)).unwrap();
            prop_assert!(s.achieved_r_r >= tau - 1e-9);
            prop_assert!(!s.binding.is_empty());
            prop_assert!(s.objective <= s.grid_objective + 1e-15);
        }
    }
}
