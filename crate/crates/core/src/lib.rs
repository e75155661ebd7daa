//! Equilibrium thresholds, fairness metrics, finite-population dynamics and
//! intervention design for multi-group selection contests.

pub mod cli;
pub mod densities;
pub mod equilibrium;
pub mod error;
pub mod finite_contest;
pub mod intervention;
pub mod metrics;
pub mod quadrature;
pub mod roots;

pub use densities::{convolved_cdf, stochastic_bias_density_cdf, CdfQuery, DensitySpec, MixtureComponent};
pub use equilibrium::{
    effort, effort_with_cost, finite_shift, pareto_closed_threshold, quota_thresholds, solve_threshold,
    uniform_ability_closed_threshold, uniform_closed_threshold, ContestSpec, GroupSpec, ThresholdPolicy,
};
pub use error::{ContestError, Result};
pub use intervention::{
    calibrate_rho, crossover_tau, eval_objective, optimize, sweep_tau, InterventionSolution, InterventionSpec,
    RatioConstraint, ValuationModel,
};
pub use metrics::{biased_metrics_at, general_metrics, uniform_metrics, MeritFn, MetricsReport};
pub use finite_contest::{
    q_p, run_dynamics, simulate_contest, two_agent_policies, two_agent_revenue, undiff_finite_policy,
    win_prob_two_group, DynamicsHyper, DynamicsTrace, FiniteContest, GridPolicy, SimulationOptions,
    SimulationPolicy, SimulationReport,
};
