//! Declarative valuation, ability, and cost densities.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{ContestError, Result};
use crate::quadrature::{integrate_to_infinity, integrate_with_breaks, DEFAULT_ABS_TOL};
use crate::roots::sup_at_most;

/// A density on the nonnegative reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    Uniform {
        lo: f64,
        hi: f64,
    },
    TruncNormal {
        mu: f64,
        sigma: f64,
        lo: f64,
        hi: f64,
    },
    Pareto {
        scale: f64,
        shape: f64,
    },
    PointMass {
        x: f64,
    },
    /// `rho * V` with `V ~ base`, i.e. density `(1/rho) p(v/rho)`.
    Biased {
        base: Box<DensitySpec>,
        rho: f64,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
    /// `R * V` with independent `R ~ rho_density`, `V ~ base`.
    StochasticBias {
        base: Box<DensitySpec>,
        rho_density: Box<DensitySpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub density: DensitySpec,
}

/// A CDF evaluation request with an explicit quadrature tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfQuery {
    pub point: f64,
    pub quadrature_abs_tol: f64,
}

impl CdfQuery {
    pub fn new(point: f64) -> Self {
        CdfQuery {
            point,
            quadrature_abs_tol: DEFAULT_ABS_TOL,
        }
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(ContestError::Validation(msg()))
    }
}

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

impl DensitySpec {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        DensitySpec::Uniform { lo, hi }
    }

    pub fn trunc_normal(mu: f64, sigma: f64, lo: f64, hi: f64) -> Self {
        DensitySpec::TruncNormal { mu, sigma, lo, hi }
    }

    pub fn pareto(scale: f64, shape: f64) -> Self {
        DensitySpec::Pareto { scale, shape }
    }

    pub fn point_mass(x: f64) -> Self {
        DensitySpec::PointMass { x }
    }

    pub fn biased(base: DensitySpec, rho: f64) -> Self {
        DensitySpec::Biased {
            base: Box::new(base),
            rho,
        }
    }

    pub fn mixture(components: Vec<(f64, DensitySpec)>) -> Self {
        DensitySpec::Mixture {
            components: components
                .into_iter()
                .map(|(weight, density)| MixtureComponent { weight, density })
                .collect(),
        }
    }

    pub fn stochastic_bias(base: DensitySpec, rho_density: DensitySpec) -> Self {
        DensitySpec::StochasticBias {
            base: Box::new(base),
            rho_density: Box::new(rho_density),
        }
    }

    /// Check parameter invariants recursively.
    pub fn validate(&self) -> Result<()> {
        match self {
            DensitySpec::Uniform { lo, hi } => {
                check(all_finite(&[*lo, *hi]), || "uniform bounds must be finite".into())?;
                check(*lo >= 0.0, || format!("uniform lo = {lo} is negative"))?;
                check(lo < hi, || format!("uniform requires lo < hi, got [{lo}, {hi}]"))
            }
            DensitySpec::TruncNormal { mu, sigma, lo, hi } => {
                check(all_finite(&[*mu, *sigma, *lo, *hi]), || {
                    "truncated normal parameters must be finite".into()
                })?;
                check(*sigma > 0.0, || format!("sigma = {sigma} must be positive"))?;
                check(*lo >= 0.0, || format!("truncated normal lo = {lo} is negative"))?;
                check(lo < hi, || format!("truncated normal requires lo < hi, got [{lo}, {hi}]"))?;
                let (a, b) = ((lo - mu) / sigma, (hi - mu) / sigma);
                check(std_normal_cdf(b) - std_normal_cdf(a) > 0.0, || {
                    "truncation interval carries no normal mass".into()
                })
            }
            DensitySpec::Pareto { scale, shape } => {
                check(all_finite(&[*scale, *shape]), || "pareto parameters must be finite".into())?;
                check(*scale > 0.0, || format!("pareto scale = {scale} must be positive"))?;
                check(*shape > 0.0, || format!("pareto shape = {shape} must be positive"))
            }
            DensitySpec::PointMass { x } => {
                check(x.is_finite(), || "point mass location must be finite".into())?;
                check(*x >= 0.0, || format!("point mass at {x} is negative"))
            }
            DensitySpec::Biased { base, rho } => {
                check(rho.is_finite() && *rho > 0.0 && *rho <= 1.0, || {
                    format!("rho = {rho} must lie in (0, 1]")
                })?;
                base.validate()
            }
            DensitySpec::Mixture { components } => {
                check(!components.is_empty(), || "mixture has no components".into())?;
                let mut total = 0.0;
                for c in components {
                    check(c.weight.is_finite() && c.weight > 0.0, || {
                        format!("mixture weight {} must be positive", c.weight)
                    })?;
                    total += c.weight;
                    c.density.validate()?;
                }
                check((total - 1.0).abs() <= 1e-12, || {
                    format!("mixture weights sum to {total}, expected 1")
                })
            }
            DensitySpec::StochasticBias { base, rho_density } => {
                base.validate()?;
                rho_density.validate()?;
                let (lo, hi) = rho_density.support();
                check(lo > 0.0, || "rho density support must be bounded away from 0".into())?;
                check(hi <= 1.0, || format!("rho density support reaches {hi} > 1"))
            }
        }
    }

    /// Convex hull of the support. The upper end may be infinite.
    pub fn support(&self) -> (f64, f64) {
        match self {
            DensitySpec::Uniform { lo, hi } | DensitySpec::TruncNormal { lo, hi, .. } => (*lo, *hi),
            DensitySpec::Pareto { scale, .. } => (*scale, f64::INFINITY),
            DensitySpec::PointMass { x } => (*x, *x),
            DensitySpec::Biased { base, rho } => {
                let (lo, hi) = base.support();
                (rho * lo, rho * hi)
            }
            DensitySpec::Mixture { components } => components.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), c| {
                    let (a, b) = c.density.support();
                    (lo.min(a), hi.max(b))
                },
            ),
            DensitySpec::StochasticBias { base, rho_density } => {
                let (a, b) = base.support();
                let (r, s) = rho_density.support();
                (a * r, b * s)
            }
        }
    }

    /// Points where the density may fail to be smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = match self {
            DensitySpec::Uniform { lo, hi } | DensitySpec::TruncNormal { lo, hi, .. } => {
                vec![*lo, *hi]
            }
            DensitySpec::Pareto { scale, .. } => vec![*scale],
            DensitySpec::PointMass { x } => vec![*x],
            DensitySpec::Biased { base, rho } => base.breakpoints().iter().map(|b| rho * b).collect(),
            DensitySpec::Mixture { components } => components
                .iter()
                .flat_map(|c| c.density.breakpoints())
                .collect(),
            DensitySpec::StochasticBias { base, rho_density } => {
                let rb = rho_density.breakpoints();
                base.breakpoints()
                    .iter()
                    .flat_map(|b| rb.iter().map(move |r| b * r))
                    .collect()
            }
        };
        out.retain(|x| x.is_finite());
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// `Some((lo, hi))` when the density is uniform, possibly after scaling.
    pub fn as_uniform(&self) -> Option<(f64, f64)> {
        match self {
            DensitySpec::Uniform { lo, hi } => Some((*lo, *hi)),
            DensitySpec::Biased { base, rho } => base.as_uniform().map(|(a, b)| (rho * a, rho * b)),
            _ => None,
        }
    }

    /// `Some(x)` when the density is a point mass, possibly after scaling.
    pub fn as_point_mass(&self) -> Option<f64> {
        match self {
            DensitySpec::PointMass { x } => Some(*x),
            DensitySpec::Biased { base, rho } => base.as_point_mass().map(|x| rho * x),
            _ => None,
        }
    }

    /// Cumulative distribution function `Pr[V <= z]`.
    pub fn cdf(&self, z: f64) -> f64 {
        self.cdf_tol(z, DEFAULT_ABS_TOL)
    }

    pub fn cdf_query(&self, q: &CdfQuery) -> Result<f64> {
        if !(q.quadrature_abs_tol > 0.0) {
            return Err(ContestError::Domain("quadrature tolerance must be positive".into()));
        }
        self.validate()?;
        Ok(self.cdf_tol(q.point, q.quadrature_abs_tol))
    }

    pub(crate) fn cdf_tol(&self, z: f64, tol: f64) -> f64 {
        if z.is_nan() {
            return f64::NAN;
        }
        match self {
            DensitySpec::Uniform { lo, hi } => ((z - lo) / (hi - lo)).clamp(0.0, 1.0),
            DensitySpec::TruncNormal { mu, sigma, lo, hi } => {
                if z <= *lo {
                    0.0
                } else if z >= *hi {
                    1.0
                } else {
                    let pa = std_normal_cdf((lo - mu) / sigma);
                    let pb = std_normal_cdf((hi - mu) / sigma);
                    ((std_normal_cdf((z - mu) / sigma) - pa) / (pb - pa)).clamp(0.0, 1.0)
                }
            }
            DensitySpec::Pareto { scale, shape } => {
                if z < *scale {
                    0.0
                } else {
                    1.0 - (scale / z).powf(*shape)
                }
            }
            DensitySpec::PointMass { x } => {
                if z >= *x {
                    1.0
                } else {
                    0.0
                }
            }
            DensitySpec::Biased { base, rho } => base.cdf_tol(z / rho, tol),
            DensitySpec::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.density.cdf_tol(z, tol))
                .sum::<f64>()
                .clamp(0.0, 1.0),
            DensitySpec::StochasticBias { base, rho_density } => {
                if let Some(r) = rho_density.as_point_mass() {
                    return base.cdf_tol(z / r, tol);
                }
                if z <= 0.0 {
                    return if base.support().0 == 0.0 { 0.0 } else { base.cdf_tol(0.0, tol) };
                }
                let breaks: Vec<f64> = base.breakpoints().iter().map(|b| z / b).collect();
                let f = |r: f64| base.cdf_tol(z / r, tol);
                rho_density
                    .expect_dyn(f64::NEG_INFINITY, f64::INFINITY, &breaks, &f, tol)
                    .clamp(0.0, 1.0)
            }
        }
    }

    /// Density of continuous families; zero outside the support.
    pub fn pdf(&self, v: f64) -> Option<f64> {
        match self {
            DensitySpec::Uniform { lo, hi } => Some(if v >= *lo && v <= *hi {
                1.0 / (hi - lo)
            } else {
                0.0
            }),
            DensitySpec::TruncNormal { mu, sigma, lo, hi } => Some(if v >= *lo && v <= *hi {
                let z = std_normal_cdf((hi - mu) / sigma) - std_normal_cdf((lo - mu) / sigma);
                std_normal_pdf((v - mu) / sigma) / (sigma * z)
            } else {
                0.0
            }),
            DensitySpec::Pareto { scale, shape } => Some(if v >= *scale {
                shape * scale.powf(*shape) / v.powf(shape + 1.0)
            } else {
                0.0
            }),
            DensitySpec::PointMass { .. } => None,
            DensitySpec::Biased { base, rho } => base.pdf(v / rho).map(|p| p / rho),
            DensitySpec::Mixture { components } => {
                let mut total = 0.0;
                for c in components {
                    total += c.weight * c.density.pdf(v)?;
                }
                Some(total)
            }
            DensitySpec::StochasticBias { .. } => None,
        }
    }

    /// `E[f(V); lo <= V <= hi]`.
    pub fn expect<F: Fn(f64) -> f64>(&self, lo: f64, hi: f64, f: F) -> f64 {
        self.expect_dyn(lo, hi, &[], &f, DEFAULT_ABS_TOL)
    }

    /// `E[f(V); lo <= V <= hi]` with known kinks of `f` passed as `breaks`.
    pub fn expect_dyn(
        &self,
        lo: f64,
        hi: f64,
        breaks: &[f64],
        f: &dyn Fn(f64) -> f64,
        tol: f64,
    ) -> f64 {
        match self {
            DensitySpec::Uniform { lo: a, hi: b } => {
                let (l, h) = (lo.max(*a), hi.min(*b));
                integrate_with_breaks(f, l, h, breaks, tol * (b - a)) / (b - a)
            }
            DensitySpec::TruncNormal { lo: a, hi: b, .. } => {
                let (l, h) = (lo.max(*a), hi.min(*b));
                let g = |v: f64| f(v) * self.pdf(v).unwrap_or(0.0);
                integrate_with_breaks(&g, l, h, breaks, tol)
            }
            DensitySpec::Pareto { scale, .. } => {
                let l = lo.max(*scale);
                let g = |v: f64| f(v) * self.pdf(v).unwrap_or(0.0);
                if hi.is_infinite() {
                    integrate_to_infinity(&g, l, breaks, tol)
                } else {
                    integrate_with_breaks(&g, l, hi, breaks, tol)
                }
            }
            DensitySpec::PointMass { x } => {
                if *x >= lo && *x <= hi {
                    f(*x)
                } else {
                    0.0
                }
            }
            DensitySpec::Biased { base, rho } => {
                let r = *rho;
                let scaled: Vec<f64> = breaks.iter().map(|b| b / r).collect();
                let g = |u: f64| f(r * u);
                base.expect_dyn(lo / r, hi / r, &scaled, &g, tol)
            }
            DensitySpec::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.density.expect_dyn(lo, hi, breaks, f, tol))
                .sum(),
            DensitySpec::StochasticBias { base, rho_density } => {
                let outer = |r: f64| {
                    let scaled: Vec<f64> = breaks.iter().map(|b| b / r).collect();
                    let g = |u: f64| f(r * u);
                    base.expect_dyn(lo / r, hi / r, &scaled, &g, tol)
                };
                rho_density.expect_dyn(f64::NEG_INFINITY, f64::INFINITY, &[], &outer, tol)
            }
        }
    }

    /// Quantile: the largest `z` with `cdf(z) <= q`.
    pub fn inverse_cdf(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(ContestError::Domain(format!("quantile level {q} outside [0, 1]")));
        }
        Ok(self.quantile(q))
    }

    fn quantile(&self, q: f64) -> f64 {
        match self {
            DensitySpec::Uniform { lo, hi } => lo + q * (hi - lo),
            DensitySpec::TruncNormal { mu, sigma, lo, hi } => {
                if q <= 0.0 {
                    return *lo;
                }
                if q >= 1.0 {
                    return *hi;
                }
                let guess = trunc_normal_raw_quantile(*mu, *sigma, *lo, *hi, q);
                // One bisection pass polishes the tail accuracy of the normal quantile.
                let w = 1e-6 * sigma;
                let (a, b) = ((guess - w).max(*lo), (guess + w).min(*hi));
                if self.cdf(a) <= q && self.cdf(b) > q {
                    sup_at_most(|z| self.cdf(z), a, b, q)
                } else {
                    guess
                }
            }
            DensitySpec::Pareto { scale, shape } => {
                if q >= 1.0 {
                    f64::INFINITY
                } else {
                    scale * (1.0 - q).powf(-1.0 / shape)
                }
            }
            DensitySpec::PointMass { x } => {
                if q >= 1.0 {
                    f64::INFINITY
                } else {
                    *x
                }
            }
            DensitySpec::Biased { base, rho } => rho * base.quantile(q),
            DensitySpec::Mixture { .. } | DensitySpec::StochasticBias { .. } => {
                inverse_monotone(|z| self.cdf(z), self.support(), q)
            }
        }
    }

    /// Mean of the distribution.
    pub fn mean(&self) -> Result<f64> {
        match self {
            DensitySpec::Uniform { lo, hi } => Ok(0.5 * (lo + hi)),
            DensitySpec::TruncNormal { mu, sigma, lo, hi } => {
                let (a, b) = ((lo - mu) / sigma, (hi - mu) / sigma);
                let z = std_normal_cdf(b) - std_normal_cdf(a);
                Ok(mu + sigma * (std_normal_pdf(a) - std_normal_pdf(b)) / z)
            }
            DensitySpec::Pareto { scale, shape } => {
                if *shape <= 1.0 {
                    Err(ContestError::InfiniteMean)
                } else {
                    Ok(shape * scale / (shape - 1.0))
                }
            }
            DensitySpec::PointMass { x } => Ok(*x),
            DensitySpec::Biased { base, rho } => Ok(rho * base.mean()?),
            DensitySpec::Mixture { components } => {
                let mut m = 0.0;
                for c in components {
                    m += c.weight * c.density.mean()?;
                }
                Ok(m)
            }
            DensitySpec::StochasticBias { base, rho_density } => {
                Ok(rho_density.mean()? * base.mean()?)
            }
        }
    }

    /// Draw one variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DensitySpec::Uniform { lo, hi } => lo + (hi - lo) * rng.gen::<f64>(),
            DensitySpec::TruncNormal { mu, sigma, lo, hi } => {
                trunc_normal_raw_quantile(*mu, *sigma, *lo, *hi, rng.gen::<f64>())
            }
            DensitySpec::Pareto { scale, shape } => {
                let u: f64 = rng.gen();
                scale * (1.0 - u).powf(-1.0 / shape)
            }
            DensitySpec::PointMass { x } => *x,
            DensitySpec::Biased { base, rho } => rho * base.sample(rng),
            DensitySpec::Mixture { components } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        return c.density.sample(rng);
                    }
                }
                components.last().expect("non-empty mixture").density.sample(rng)
            }
            DensitySpec::StochasticBias { base, rho_density } => {
                rho_density.sample(rng) * base.sample(rng)
            }
        }
    }
}

fn trunc_normal_raw_quantile(mu: f64, sigma: f64, lo: f64, hi: f64, q: f64) -> f64 {
    let pa = std_normal_cdf((lo - mu) / sigma);
    let pb = std_normal_cdf((hi - mu) / sigma);
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    (mu + sigma * std.inverse_cdf(pa + q * (pb - pa))).clamp(lo, hi)
}

/// Largest `z` with `g(z) <= q` for a nondecreasing CDF `g` supported on `support`.
pub fn inverse_monotone<G: Fn(f64) -> f64>(g: G, support: (f64, f64), q: f64) -> f64 {
    let (lo, mut hi) = support;
    if q >= 1.0 && hi.is_infinite() {
        return f64::INFINITY;
    }
    if hi.is_infinite() {
        hi = lo.abs().max(1.0);
        while g(hi) <= q {
            hi *= 2.0;
            if !hi.is_finite() {
                return f64::INFINITY;
            }
        }
    }
    sup_at_most(g, lo, hi, q)
}

/// `Pr[V + A <= z]` for independent valuation `V` and ability `A`.
pub fn convolved_cdf(valuation: &DensitySpec, ability: &DensitySpec, z: f64) -> f64 {
    convolved_cdf_tol(valuation, ability, z, DEFAULT_ABS_TOL)
}

pub(crate) fn convolved_cdf_tol(
    valuation: &DensitySpec,
    ability: &DensitySpec,
    z: f64,
    tol: f64,
) -> f64 {
    if let Some(a0) = ability.as_point_mass() {
        return valuation.cdf_tol(z - a0, tol);
    }
    if let Some(v0) = valuation.as_point_mass() {
        return ability.cdf_tol(z - v0, tol);
    }
    if let (Some(u), Some(w)) = (valuation.as_uniform(), ability.as_uniform()) {
        return uniform_sum_cdf(u, w, z);
    }
    let breaks: Vec<f64> = valuation.breakpoints().iter().map(|b| z - b).collect();
    let f = |a: f64| valuation.cdf_tol(z - a, tol);
    ability
        .expect_dyn(f64::NEG_INFINITY, f64::INFINITY, &breaks, &f, tol)
        .clamp(0.0, 1.0)
}

/// CDF of `U[a1, b1] + U[a2, b2]` (trapezoidal density).
pub fn uniform_sum_cdf((a1, b1): (f64, f64), (a2, b2): (f64, f64), z: f64) -> f64 {
    let r = |x: f64| {
        let p = x.max(0.0);
        0.5 * p * p
    };
    let val = (r(z - a1 - a2) - r(z - b1 - a2) - r(z - a1 - b2) + r(z - b1 - b2))
        / ((b1 - a1) * (b2 - a2));
    val.clamp(0.0, 1.0)
}

/// CDF of `R * V` with `R ~ rho_density`, `V ~ base`.
pub fn stochastic_bias_density_cdf(
    base: &DensitySpec,
    rho_density: &DensitySpec,
    z: f64,
) -> Result<f64> {
    let spec = DensitySpec::stochastic_bias(base.clone(), rho_density.clone());
    spec.validate()?;
    Ok(spec.cdf(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn u01() -> DensitySpec {
        DensitySpec::uniform(0.0, 1.0)
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(u01().cdf(0.8), 0.8);
        let p = DensitySpec::pareto(1.0, 2.0);
        assert!((p.cdf(2f64.sqrt()) - 0.5).abs() < 1e-15);
        assert_eq!(DensitySpec::biased(u01(), 0.8).cdf(0.8), 1.0);
    }

    #[test]
    fn inverse_cdf_examples() {
        assert!((u01().inverse_cdf(0.9).unwrap() - 0.9).abs() < 1e-15);
        assert!((DensitySpec::biased(u01(), 0.8).inverse_cdf(0.5).unwrap() - 0.4).abs() < 1e-15);
        let tn = DensitySpec::trunc_normal(0.5, 0.1, 0.0, 1.0);
        assert!((tn.inverse_cdf(0.5).unwrap() - 0.5).abs() < 1e-12);
        assert!(u01().inverse_cdf(1.1).is_err());
        assert!(u01().inverse_cdf(-0.1).is_err());
    }

    #[test]
    fn trunc_normal_quantile_round_trip() {
        let tn = DensitySpec::trunc_normal(0.5, 0.1, 0.0, 1.0);
        for i in 1..100 {
            let q = i as f64 / 100.0;
            let z = tn.inverse_cdf(q).unwrap();
            assert!((tn.cdf(z) - q).abs() < 1e-12, "q={q}");
        }
        // F^-1(0.9) is about 0.628.
        assert!((tn.inverse_cdf(0.9).unwrap() - 0.628155).abs() < 1e-5);
    }

    #[test]
    fn plateau_quantile_is_supremum() {
        let m = DensitySpec::mixture(vec![
            (0.5, DensitySpec::uniform(0.0, 1.0)),
            (0.5, DensitySpec::uniform(2.0, 3.0)),
        ]);
        assert!((m.inverse_cdf(0.5).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn convolution_examples() {
        assert_eq!(convolved_cdf(&u01(), &DensitySpec::point_mass(0.0), 0.7), 0.7);
        assert!((convolved_cdf(&u01(), &u01(), 1.0) - 0.5).abs() < 1e-15);
    }

    /// Piecewise CDF of `rho U + U'` for `rho <= 1`.
    fn biased_plus_uniform_oracle(rho: f64, z: f64) -> f64 {
        if z <= 0.0 {
            0.0
        } else if z <= rho {
            z * z / (2.0 * rho)
        } else if z <= 1.0 {
            z - rho / 2.0
        } else if z <= 1.0 + rho {
            1.0 - (1.0 + rho - z).powi(2) / (2.0 * rho)
        } else {
            1.0
        }
    }

    #[test]
    fn quadrature_convolution_matches_piecewise_polynomial() {
        // Force the quadrature path with a one-component mixture.
        let val = DensitySpec::mixture(vec![(1.0, DensitySpec::biased(u01(), 0.5))]);
        let abil = u01();
        for i in 0..=1000 {
            let z = 1.6 * i as f64 / 1000.0;
            let q = convolved_cdf(&val, &abil, z);
            assert!((q - biased_plus_uniform_oracle(0.5, z)).abs() < 1e-8, "z={z}");
        }
        let z = 2.0 * 0.75;
        let closed = convolved_cdf(&DensitySpec::biased(u01(), 0.5), &abil, z);
        assert!((closed - biased_plus_uniform_oracle(0.5, z)).abs() < 1e-14);
    }

    #[test]
    fn stochastic_bias_examples() {
        let pm = DensitySpec::point_mass(0.8);
        assert!((stochastic_bias_density_cdf(&u01(), &pm, 0.4).unwrap() - 0.5).abs() < 1e-15);
        let ur = DensitySpec::uniform(0.5, 1.0);
        assert!((stochastic_bias_density_cdf(&u01(), &ur, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(stochastic_bias_density_cdf(&u01(), &DensitySpec::uniform(0.0, 1.0), 0.5).is_err());

        // Closed form for z <= 0.5: E[z/R] = 2 z ln 2.
        let v = stochastic_bias_density_cdf(&u01(), &ur, 0.25).unwrap();
        assert!((v - 0.5 * 2f64.ln()).abs() < 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| ur.sample(&mut rng) * u01().sample(&mut rng) <= 0.25)
            .count();
        let p = hits as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((p - v).abs() < 3.0 * se);
    }

    #[test]
    fn mean_examples() {
        assert_eq!(u01().mean().unwrap(), 0.5);
        assert!((DensitySpec::biased(u01(), 0.8).mean().unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(DensitySpec::pareto(1.0, 1.0).mean(), Err(ContestError::InfiniteMean));

        let tn = DensitySpec::trunc_normal(0.4, 0.1, 0.0, 1.0);
        let m = tn.mean().unwrap();
        let quad = tn.expect(0.0, 1.0, |v| v);
        assert!((m - quad).abs() < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| tn.sample(&mut rng)).collect();
        let avg = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - avg).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((avg - m).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(DensitySpec::uniform(1.0, 1.0).validate().is_err());
        assert!(DensitySpec::uniform(-1.0, 1.0).validate().is_err());
        assert!(DensitySpec::uniform(0.0, f64::NAN).validate().is_err());
        assert!(DensitySpec::trunc_normal(0.5, 0.0, 0.0, 1.0).validate().is_err());
        assert!(DensitySpec::pareto(1.0, 0.0).validate().is_err());
        assert!(DensitySpec::biased(u01(), 1.5).validate().is_err());
        assert!(DensitySpec::mixture(vec![(0.5, u01()), (0.4, u01())]).validate().is_err());
        assert!(DensitySpec::mixture(vec![(0.5, u01()), (0.5, u01())]).validate().is_ok());
    }

    #[test]
    fn serde_round_trip() {
        let spec = DensitySpec::mixture(vec![
            (0.25, DensitySpec::biased(DensitySpec::trunc_normal(0.5, 0.1, 0.0, 1.0), 0.7)),
            (0.75, DensitySpec::stochastic_bias(u01(), DensitySpec::uniform(0.5, 1.0))),
        ]);
        let text = serde_json::to_string(&spec).unwrap();
        let back: DensitySpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let parsed: DensitySpec = serde_json::from_str(r#"{"kind":"uniform","lo":0,"hi":1}"#).unwrap();
        assert_eq!(parsed, u01());
        let b: DensitySpec =
            serde_json::from_str(r#"{"kind":"biased","rho":0.8,"base":{"kind":"uniform","lo":0,"hi":1}}"#)
                .unwrap();
        assert_eq!(b, DensitySpec::biased(u01(), 0.8));
    }

    fn family() -> impl Strategy<Value = DensitySpec> {
        prop_oneof![
            (0.0..1.0f64, 0.1..2.0f64).prop_map(|(lo, w)| DensitySpec::uniform(lo, lo + w)),
            (0.2..0.8f64, 0.05..0.5f64).prop_map(|(m, s)| DensitySpec::trunc_normal(m, s, 0.0, 1.0)),
            (0.5..2.0f64, 1.5..4.0f64).prop_map(|(s, k)| DensitySpec::pareto(s, k)),
        ]
    }

    proptest! {
        #[test]
        fn cdf_is_monotone_with_limits(spec in family(), z1 in -1.0..10.0f64, dz in 0.0..5.0f64) {
            let (a, b) = (spec.cdf(z1), spec.cdf(z1 + dz));
            prop_assert!(a <= b);
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert_eq!(spec.cdf(-1.0), 0.0);
            prop_assert!(spec.cdf(1e12) > 1.0 - 1e-9);
        }

        #[test]
        fn biased_scaling_law(spec in family(), rho in 0.05..=1.0f64, z in 0.0..5.0f64) {
            let b = DensitySpec::biased(spec.clone(), rho);
            prop_assert_eq!(b.cdf(z), spec.cdf(z / rho));
        }

        #[test]
        fn unit_bias_is_identity(spec in family(), z in -0.5..5.0f64) {
            prop_assert_eq!(DensitySpec::biased(spec.clone(), 1.0).cdf(z), spec.cdf(z));
        }

        #[test]
        fn point_mass_ability_is_exact(spec in family(), z in -0.5..5.0f64) {
            prop_assert_eq!(convolved_cdf(&spec, &DensitySpec::point_mass(0.0), z), spec.cdf(z));
        }

        #[test]
        fn uniform_sum_matches_quadrature(rho in 0.1..=1.0f64, z in -0.2..2.2f64) {
            let val = DensitySpec::mixture(vec![(1.0, DensitySpec::biased(u01(), rho))]);
            let q = convolved_cdf(&val, &u01(), z);
            prop_assert!((q - biased_plus_uniform_oracle(rho, z)).abs() < 1e-8);
        }
    }
}
