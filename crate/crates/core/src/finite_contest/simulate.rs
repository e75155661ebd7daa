use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FiniteContest, GridPolicy};
use crate::densities::DensitySpec;
use crate::equilibrium::ThresholdPolicy;
use crate::error::{ContestError, Result};

/// Policies played by the simulated population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimulationPolicy {
    Grid { g1: GridPolicy, g2: GridPolicy },
    /// Equilibrium threshold; when `delta_n` is set, participation starts at `delta_n`.
    Threshold { policy: ThresholdPolicy },
}

impl SimulationPolicy {
    fn effort(&self, group: usize, v: f64) -> f64 {
        match self {
            SimulationPolicy::Grid { g1, g2 } => {
                if group == 0 {
                    g1.eval(v)
                } else {
                    g2.eval(v)
                }
            }
            SimulationPolicy::Threshold { policy } => {
                let theta = policy.per_group_thresholds[group];
                let cut = policy.delta_n.unwrap_or(theta);
                if v >= cut {
                    theta.max(0.0)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub trials: usize,
    /// Number of deviation efforts, evenly spaced on `[0, max valuation]`.
    pub deviation_grid: usize,
    /// Probe valuations per group.
    pub probe_points: usize,
    /// Extra efforts whose winning probability is reported.
    #[serde(default)]
    pub probe_efforts: Vec<f64>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            trials: 1000,
            deviation_grid: 100,
            probe_points: 25,
            probe_efforts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeWinProb {
    pub effort: f64,
    pub group: usize,
    pub win_prob: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub trials: usize,
    #[serde(rename = "r_R")]
    pub rep_ratio: f64,
    pub rep_ratio_se: f64,
    #[serde(rename = "r_S")]
    pub welfare_ratio: f64,
    pub welfare_ratio_se: f64,
    #[serde(rename = "RV")]
    pub avg_revenue: f64,
    pub avg_revenue_se: f64,
    pub selection_rate: [f64; 2],
    pub selection_counts: [u64; 2],
    pub max_regret_estimate: f64,
    pub max_regret_se: f64,
    pub max_regret_group: usize,
    pub max_regret_valuation: f64,
    pub max_regret_deviation: f64,
    /// Largest mean winning probability over deviation efforts below `t` (threshold policies).
    pub deviation_win_prob_below_t: Option<f64>,
    pub deviation_win_prob_below_t_se: Option<f64>,
    pub probe_win_probs: Vec<ProbeWinProb>,
}

struct Trial {
    rate: [f64; 2],
    welfare: [f64; 2],
    revenue: f64,
    selected: [u64; 2],
    /// Winning probability per group over the evaluation efforts.
    win: [Vec<f64>; 2],
}

fn upper_value(p: &DensitySpec) -> f64 {
    let hi = p.support().1;
    if hi.is_finite() {
        hi
    } else {
        p.inverse_cdf(0.999).unwrap_or(1.0)
    }
}

fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    match m {
        0 => vec![],
        1 => vec![hi],
        _ => (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect(),
    }
}

fn mean_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let m = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (m, 0.0);
    }
    let var = xs.map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Ratio of group means in `min(a/b, b/a)` form with a delta-method standard error.
fn ratio_se(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (num, den, xs, ys) = if ma <= mb { (ma, mb, a, b) } else { (mb, ma, b, a) };
    if !(den > 0.0) || num <= 0.0 {
        return (0.0, 0.0);
    }
    let r = num / den;
    let z: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - r * y) / den).collect();
    let (_, se) = mean_se(z.iter().copied());
    (r, se)
}

/// Monte-Carlo contest with top-`k` selection and uniformly random tie-breaking.
///
/// A probe agent's winning probability is computed exactly given the sampled rivals,
/// averaging over the random tie-break.
pub fn simulate_contest(
    contest: &FiniteContest,
    policies: &SimulationPolicy,
    options: &SimulationOptions,
) -> Result<SimulationReport> {
    contest.validate()?;
    if options.trials == 0 {
        return Err(ContestError::Domain("trials must be at least 1".into()));
    }
    if let SimulationPolicy::Threshold { policy } = policies {
        if policy.per_group_thresholds.len() != 2 {
            return Err(ContestError::Domain("threshold policy must cover two groups".into()));
        }
    }
    if let SimulationPolicy::Grid { g1, g2 } = policies {
        g1.validate()?;
        g2.validate()?;
    }

    let sizes = [contest.n1 as usize, contest.n2 as usize];
    let k = contest.k as usize;
    let dens = [&contest.p1, &contest.p2];
    let top = upper_value(&contest.p1).max(upper_value(&contest.p2));
    let deviations = linspace(0.0, top, options.deviation_grid);
    let probes: [Vec<f64>; 2] = [0, 1].map(|g| {
        let lo = dens[g].support().0;
        linspace(lo, upper_value(dens[g]), options.probe_points)
    });
    // Evaluation efforts per group: deviations, then policy efforts at probes, then extras.
    let eval_efforts: [Vec<f64>; 2] = [0, 1].map(|g| {
        deviations
            .iter()
            .copied()
            .chain(probes[g].iter().map(|&v| policies.effort(g, v)))
            .chain(options.probe_efforts.iter().copied())
            .collect()
    });

    let run_trial = |trial: usize| -> Trial {
        let mut rng = ChaCha8Rng::seed_from_u64(contest.seed.wrapping_add(trial as u64));
        let mut agents: Vec<(f64, f64, usize, f64)> = Vec::with_capacity(sizes[0] + sizes[1]);
        for g in 0..2 {
            for _ in 0..sizes[g] {
                let v = dens[g].sample(&mut rng);
                agents.push((policies.effort(g, v), v, g, rng.gen::<f64>()));
            }
        }
        let mut order: Vec<usize> = (0..agents.len()).collect();
        order.sort_by(|&i, &j| {
            agents[j]
                .0
                .total_cmp(&agents[i].0)
                .then(agents[j].3.total_cmp(&agents[i].3))
        });
        let mut selected = [0u64; 2];
        let mut welfare = [0.0; 2];
        let mut revenue = 0.0;
        let mut is_sel = vec![false; agents.len()];
        for &i in order.iter().take(k) {
            is_sel[i] = true;
            selected[agents[i].2] += 1;
            revenue += agents[i].0;
        }
        for (i, a) in agents.iter().enumerate() {
            welfare[a.2] += if is_sel[i] { a.1 } else { 0.0 } - a.0;
        }
        let rate = [0, 1].map(|g| selected[g] as f64 / sizes[g] as f64);
        let welfare = [0, 1].map(|g| welfare[g] / sizes[g] as f64);

        let mut sorted: Vec<f64> = agents.iter().map(|a| a.0).collect();
        sorted.sort_by(f64::total_cmp);
        let n_all = sorted.len();
        let win = [0, 1].map(|g| {
            // The probe replaces the first sampled agent of its own group.
            let removed_idx = if g == 0 { 0 } else { sizes[0] };
            let x0 = agents[removed_idx].0;
            eval_efforts[g]
                .iter()
                .map(|&e| {
                    let le = sorted.partition_point(|x| *x < e);
                    let leq = sorted.partition_point(|x| *x <= e);
                    let above = n_all - leq - (x0 > e) as usize;
                    let tied = leq - le - (x0 == e) as usize;
                    if above >= k {
                        0.0
                    } else {
                        ((k - above) as f64 / (tied + 1) as f64).min(1.0)
                    }
                })
                .collect()
        });
        Trial {
            rate,
            welfare,
            revenue: revenue / k as f64,
            selected,
            win,
        }
    };

    let trials: Vec<Trial> = (0..options.trials).into_par_iter().map(run_trial).collect();
    let nt = trials.len() as f64;

    let r1: Vec<f64> = trials.iter().map(|t| t.rate[0]).collect();
    let r2: Vec<f64> = trials.iter().map(|t| t.rate[1]).collect();
    let (rep_ratio, rep_ratio_se) = ratio_se(&r1, &r2);
    let w1: Vec<f64> = trials.iter().map(|t| t.welfare[0]).collect();
    let w2: Vec<f64> = trials.iter().map(|t| t.welfare[1]).collect();
    let (welfare_ratio, welfare_ratio_se) = ratio_se(&w1, &w2);
    let (avg_revenue, avg_revenue_se) = mean_se(trials.iter().map(|t| t.revenue));
    let selection_counts = [0, 1].map(|g| trials.iter().map(|t| t.selected[g]).sum::<u64>());
    let selection_rate = [0, 1].map(|g| selection_counts[g] as f64 / (nt * sizes[g] as f64));

    let nd = deviations.len();
    let mean_win: [Vec<f64>; 2] = [0, 1].map(|g| {
        (0..eval_efforts[g].len())
            .map(|j| trials.iter().map(|t| t.win[g][j]).sum::<f64>() / nt)
            .collect()
    });

    let mut best = (0.0f64, 0.0f64, 0usize, probes[0].first().copied().unwrap_or(0.0), 0.0f64);
    for g in 0..2 {
        for (p, &v) in probes[g].iter().enumerate() {
            let jp = nd + p;
            let s = eval_efforts[g][jp];
            let own = mean_win[g][jp] * v - s;
            let (jd, dev) = (0..nd)
                .map(|j| (j, mean_win[g][j] * v - deviations[j]))
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            let regret = (dev - own).max(0.0);
            if regret > best.0 || (best.0 == 0.0 && g == 0 && p == 0) {
                let per_trial = trials
                    .iter()
                    .map(|t| (t.win[g][jd] - t.win[g][jp]) * v - (deviations[jd] - s));
                let (_, se) = mean_se(per_trial);
                best = (regret, se, g, v, deviations[jd]);
            }
        }
    }

    let (below, below_se) = match policies {
        SimulationPolicy::Threshold { policy } => {
            let mut worst: Option<(f64, f64)> = None;
            for g in 0..2 {
                for j in (0..nd).filter(|&j| deviations[j] < policy.t) {
                    let (m, se) = mean_se(trials.iter().map(|t| t.win[g][j]));
                    if worst.map_or(true, |w| m > w.0) {
                        worst = Some((m, se));
                    }
                }
            }
            (worst.map(|w| w.0), worst.map(|w| w.1))
        }
        SimulationPolicy::Grid { .. } => (None, None),
    };

    let off = nd + options.probe_points;
    let probe_win_probs = (0..2)
        .flat_map(|g| {
            let trials = &trials;
            options.probe_efforts.iter().enumerate().map(move |(i, &e)| {
                let (m, se) = mean_se(trials.iter().map(|t| t.win[g][off + i]));
                ProbeWinProb {
                    effort: e,
                    group: g,
                    win_prob: m,
                    std_error: se,
                }
            })
        })
        .collect();

    Ok(SimulationReport {
        trials: options.trials,
        rep_ratio,
        rep_ratio_se,
        welfare_ratio,
        welfare_ratio_se,
        avg_revenue,
        avg_revenue_se,
        selection_rate,
        selection_counts,
        max_regret_estimate: best.0,
        max_regret_se: best.1,
        max_regret_group: best.2,
        max_regret_valuation: best.3,
        max_regret_deviation: best.4,
        deviation_win_prob_below_t: below,
        deviation_win_prob_below_t_se: below_se,
        probe_win_probs,
    })
}
