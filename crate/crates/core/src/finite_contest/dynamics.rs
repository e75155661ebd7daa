use serde::{Deserialize, Serialize};

use super::{binomial_cdf, binomial_pmf, convolve_tail, FiniteContest};
use crate::equilibrium::uniform_closed_threshold;
use crate::error::{ContestError, Result};
use crate::metrics::fmt_sig;

/// A policy tabulated on a valuation grid, linearly interpolated between nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPolicy {
    pub valuation_grid: Vec<f64>,
    pub efforts: Vec<f64>,
}

impl GridPolicy {
    pub fn new(valuation_grid: Vec<f64>, efforts: Vec<f64>) -> Result<Self> {
        let p = GridPolicy {
            valuation_grid,
            efforts,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ContestError::Validation(m.to_string()));
        if self.valuation_grid.len() != self.efforts.len() || self.efforts.is_empty() {
            return bad("grid and efforts must have equal, nonzero length");
        }
        if self.valuation_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("valuation grid must be strictly increasing");
        }
        if self.efforts.iter().any(|e| !(*e >= 0.0)) {
            return bad("efforts must be nonnegative");
        }
        if self.efforts.windows(2).any(|w| w[1] < w[0]) {
            return bad("efforts must be nondecreasing");
        }
        Ok(())
    }

    /// Interpolated effort, held constant beyond the grid ends.
    pub fn eval(&self, v: f64) -> f64 {
        let g = &self.valuation_grid;
        let i = g.partition_point(|x| *x <= v);
        if i == 0 {
            return self.efforts[0];
        }
        if i == g.len() {
            return *self.efforts.last().expect("non-empty policy");
        }
        let (x0, x1) = (g[i - 1], g[i]);
        let (e0, e1) = (self.efforts[i - 1], self.efforts[i]);
        e0 + (e1 - e0) * (v - x0) / (x1 - x0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsHyper {
    pub m_v: usize,
    pub m_e: usize,
    pub iterations: usize,
    /// Update step; `None` means `1 / (10 T)`.
    pub step: Option<f64>,
}

impl Default for DynamicsHyper {
    fn default() -> Self {
        DynamicsHyper {
            m_v: 101,
            m_e: 101,
            iterations: 500,
            step: None,
        }
    }
}

impl DynamicsHyper {
    pub fn step_size(&self) -> f64 {
        self.step.unwrap_or(1.0 / (10.0 * self.iterations as f64))
    }
}

/// Per-iteration policies and update magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsTrace {
    /// Large-population threshold used for initialization.
    pub t: f64,
    pub initial: [GridPolicy; 2],
    /// Policies after each iteration.
    pub policies: Vec<[GridPolicy; 2]>,
    /// `delta[t][l]`: mean absolute gap between the best response and the previous policy.
    pub delta: Vec<[f64; 2]>,
}

impl DynamicsTrace {
    pub fn final_policies(&self) -> &[GridPolicy; 2] {
        self.policies.last().unwrap_or(&self.initial)
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,group,delta\n");
        for (i, d) in self.delta.iter().enumerate() {
            for (g, x) in d.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", i + 1, g + 1, fmt_sig(*x)));
            }
        }
        out
    }

    /// Final policies on the union of both grids; group 2 is blank above its support.
    pub fn final_policies_csv(&self) -> String {
        let [s1, s2] = self.final_policies();
        let mut grid: Vec<f64> = s1
            .valuation_grid
            .iter()
            .chain(&s2.valuation_grid)
            .copied()
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let top2 = *s2.valuation_grid.last().expect("non-empty grid");
        let mut out = String::from("v,effort_g1,effort_g2\n");
        for v in grid {
            let e2 = if v <= top2 + 1e-12 {
                fmt_sig(s2.eval(v))
            } else {
                String::new()
            };
            out.push_str(&format!("{},{},{}\n", fmt_sig(v), fmt_sig(s1.eval(v)), e2));
        }
        out
    }
}

fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![lo];
    }
    (0..m)
        .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
        .collect()
}

struct Side<'a> {
    grid: &'a [f64],
    /// Probability that a rival from this group with grid valuation `v` outranks on valuation.
    tail: &'a dyn Fn(f64) -> f64,
}

/// Monotone best response of one group against the other group's current policy.
fn best_response(
    own: &Side,
    other: &Side,
    other_policy: &[f64],
    m_own: u64,
    m_other: u64,
    k: u64,
    efforts: &[f64],
) -> Vec<f64> {
    let m_v = other.grid.len();
    // First grid index whose effort reaches e; rivals from there up beat or tie e.
    let first_reaching = |e: f64| other_policy.partition_point(|s| *s < e);
    let other_tail = |j: usize| if j < m_v { (other.tail)(other.grid[j]) } else { 0.0 };
    let mut cdf_cache: Vec<Option<Vec<f64>>> = vec![None; m_v + 1];
    let effort_index: Vec<usize> = efforts.iter().map(|&e| first_reaching(e)).collect();

    let mut response = Vec::with_capacity(own.grid.len());
    let mut last_e = 0.0;
    for &v in own.grid {
        let pmf_own = binomial_pmf(m_own, (own.tail)(v).clamp(0.0, 1.0));
        let mut win_cache: Vec<Option<f64>> = vec![None; m_v + 1];
        let mut win = |j: usize| -> f64 {
            if let Some(w) = win_cache[j] {
                return w;
            }
            let cdf = cdf_cache[j].get_or_insert_with(|| binomial_cdf(m_other, other_tail(j).clamp(0.0, 1.0)));
            let w = convolve_tail(&pmf_own, cdf, k);
            win_cache[j] = Some(w);
            w
        };
        let mut best_e = last_e;
        let mut best_pay = win(first_reaching(best_e)) * v - best_e;
        let start = efforts.partition_point(|e| *e < last_e);
        for (idx, &e) in efforts.iter().enumerate().skip(start) {
            let pay = win(effort_index[idx]) * v - e;
            if pay > best_pay {
                best_e = e;
                best_pay = pay;
            }
        }
        response.push(best_e);
        last_e = best_e;
    }
    response
}

/// Alternating damped best-response dynamics for the uniform two-group contest.
pub fn run_dynamics(contest: &FiniteContest, rho: f64, c: f64, hyper: &DynamicsHyper) -> Result<DynamicsTrace> {
    contest.validate()?;
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(ContestError::Domain(format!("rho = {rho} must lie in (0, 1]")));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(ContestError::Domain(format!("c = {c} must lie in (0, 1)")));
    }
    let close = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12;
    match (contest.p1.as_uniform(), contest.p2.as_uniform()) {
        (Some(u1), Some(u2)) if close(u1, (0.0, 1.0)) && close(u2, (0.0, rho)) => {}
        _ => {
            return Err(ContestError::Unsupported(
                "dynamics require p1 = Uniform(0, 1) and p2 = Uniform(0, rho)".into(),
            ))
        }
    }
    if hyper.m_v < 2 || hyper.m_e < 1 || hyper.iterations < 1 {
        return Err(ContestError::Domain("dynamics need m_v >= 2, m_e >= 1, T >= 1".into()));
    }
    let step = hyper.step_size();
    if !(step > 0.0 && step <= 1.0) {
        return Err(ContestError::Domain(format!("step {step} must lie in (0, 1]")));
    }

    let (n1, n2, k) = (contest.n1, contest.n2, contest.k);
    let alpha = n2 as f64 / (n1 + n2) as f64;
    let t = uniform_closed_threshold(rho, c, alpha);
    let v1 = linspace(0.0, 1.0, hyper.m_v);
    let v2 = linspace(0.0, rho, hyper.m_v);
    let base_efforts = linspace(0.0, 1.0, hyper.m_e);
    let init = |v: f64| t / (1.0 + (-50.0 * (v - t)).exp());
    let mut s1: Vec<f64> = v1.iter().map(|&v| init(v)).collect();
    let mut s2: Vec<f64> = v2.iter().map(|&v| init(v)).collect();
    let initial = [
        GridPolicy {
            valuation_grid: v1.clone(),
            efforts: s1.clone(),
        },
        GridPolicy {
            valuation_grid: v2.clone(),
            efforts: s2.clone(),
        },
    ];

    let tail1 = |v: f64| 1.0 - v;
    let tail2 = move |v: f64| (rho - v) / rho;
    let g1 = Side {
        grid: &v1,
        tail: &tail1,
    };
    let g2 = Side {
        grid: &v2,
        tail: &tail2,
    };
    let m_v = hyper.m_v as f64;

    let mut policies = Vec::with_capacity(hyper.iterations);
    let mut delta = Vec::with_capacity(hyper.iterations);
    for _ in 0..hyper.iterations {
        let mut efforts: Vec<f64> = base_efforts.iter().chain(&s1).chain(&s2).copied().collect();
        efforts.sort_by(f64::total_cmp);
        efforts.dedup();

        let pi1 = best_response(&g1, &g2, &s2, n1 - 1, n2, k, &efforts);
        let d1 = pi1.iter().zip(&s1).map(|(p, s)| (p - s).abs()).sum::<f64>() / m_v;
        for (s, p) in s1.iter_mut().zip(&pi1) {
            *s += step * (p - *s);
        }

        let pi2 = best_response(&g2, &g1, &s1, n2 - 1, n1, k, &efforts);
        let d2 = pi2.iter().zip(&s2).map(|(p, s)| (p - s).abs()).sum::<f64>() / m_v;
        for (s, p) in s2.iter_mut().zip(&pi2) {
            *s += step * (p - *s);
        }

        delta.push([d1, d2]);
        policies.push([
            GridPolicy {
                valuation_grid: v1.clone(),
                efforts: s1.clone(),
            },
            GridPolicy {
                valuation_grid: v2.clone(),
                efforts: s2.clone(),
            },
        ]);
    }
    Ok(DynamicsTrace {
        t,
        initial,
        policies,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::DensitySpec;

    fn contest(n: u64, rho: f64, c: f64) -> FiniteContest {
        FiniteContest {
            n1: n / 2,
            n2: n / 2,
            k: (c * n as f64).floor() as u64,
            p1: DensitySpec::uniform(0.0, 1.0),
            p2: DensitySpec::biased(DensitySpec::uniform(0.0, 1.0), rho),
            seed: 0,
        }
    }

    #[test]
    fn grid_policy_interpolates() {
        let p = GridPolicy::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.2, 0.6]).unwrap();
        assert!((p.eval(0.25) - 0.1).abs() < 1e-15);
        assert_eq!(p.eval(2.0), 0.6);
        assert_eq!(p.eval(-1.0), 0.0);
        assert!(GridPolicy::new(vec![0.0, 1.0], vec![0.5, 0.1]).is_err());
    }

    #[test]
    fn rejects_non_uniform() {
        let mut c = contest(20, 0.8, 0.2);
        c.p1 = DensitySpec::trunc_normal(0.5, 0.1, 0.0, 1.0);
        assert!(matches!(
            run_dynamics(&c, 0.8, 0.2, &DynamicsHyper::default()),
            Err(ContestError::Unsupported(_))
        ));
    }

    #[test]
    fn short_run_keeps_invariants() {
        let hyper = DynamicsHyper {
            iterations: 20,
            ..DynamicsHyper::default()
        };
        let trace = run_dynamics(&contest(20, 0.8, 0.2), 0.8, 0.2, &hyper).unwrap();
        assert_eq!(trace.policies.len(), 20);
        assert_eq!(trace.delta.len(), 20);
        for [a, b] in &trace.policies {
            a.validate().unwrap();
            b.validate().unwrap();
        }
        assert!(trace.delta.iter().all(|d| d[0] >= 0.0 && d[1] >= 0.0));
        let csv = trace.trace_csv();
        assert!(csv.starts_with("iter,group,delta\n"));
        assert_eq!(csv.lines().count(), 41);
        assert!(trace.final_policies_csv().starts_with("v,effort_g1,effort_g2\n"));
    }
}
