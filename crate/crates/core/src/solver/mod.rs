//! Optimal-bid search.
//!
//! Single-individual models reduce to minimizing a ratio
//! `(A + eta_T E[c 1]) / (c0 + eta_T P)` over a constant bid; a bid is optimal
//! exactly when it maximizes the static auction payoff against the optimal
//! ratio, so every search ends with [`smallest_argopt`] at that value.

mod population;
mod search;

use serde::{Deserialize, Serialize};

pub use population::{
    grid_pair, second_price_fixed_point, solve_row, solve_social_population, solve_social_population_with,
    value_at_p, FixedPoint, RowSolution, Schedule,
};
pub use search::{smallest_argopt, static_objective, GRID_FRACTION, TIE_TOL};

use crate::analytic::{
    social_as_purchase, uniform_firstprice_bid, value_purchase, value_social_discount, value_subscription,
};
use crate::error::{Error, Result};
use crate::model::{
    AuctionRule, Channel, IntensityProfile, PolicyTable, Purchase, Shape, SocialDiscount, Subscription,
};
use search::{argopt_counted, grid_minimize};

/// Cap on ratio-improvement steps after the grid.
const MAX_POLISH: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GridRefine,
    ClosedForm,
    FixedPoint,
    Dichotomy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solution {
    Bid(f64),
    Policy(PolicyTable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub optimal_value: f64,
    pub solution: Solution,
    pub evaluations: u64,
    pub method: Method,
}

impl SolveReport {
    pub fn bid_min(&self) -> Option<f64> {
        match self.solution {
            Solution::Bid(b) => Some(b),
            Solution::Policy(_) => None,
        }
    }

    pub fn policy(&self) -> Option<&PolicyTable> {
        match &self.solution {
            Solution::Policy(t) => Some(t),
            Solution::Bid(_) => None,
        }
    }
}

#[derive(Clone, Copy)]
enum Single {
    Purchase(Purchase),
    Social(SocialDiscount),
}

impl Single {
    fn value(&self, eta: &IntensityProfile, ch: &Channel, b: f64) -> Result<f64> {
        match self {
            Single::Purchase(s) => value_purchase(s, eta, ch, b),
            Single::Social(s) => value_social_discount(s, eta, ch, b),
        }
    }

    /// Cost view of a value: lower is better for both models.
    fn cost(&self, v: f64) -> f64 {
        match self {
            Single::Purchase(s) => s.k() - v,
            Single::Social(_) => v,
        }
    }

    fn upper(&self, eta: &IntensityProfile) -> Result<f64> {
        match self {
            Single::Purchase(s) => Ok(s.rho() * s.k() / (eta.eta_i() + s.rho())),
            Single::Social(s) => {
                let c = eta.eta_i() + s.rho();
                if c <= 0.0 {
                    return Err(Error::ZeroDenominator { what: "social discount value" });
                }
                Ok(s.k() / c)
            }
        }
    }

    fn uniform_closed_form(&self, eta: &IntensityProfile, ch: &Channel) -> Result<f64> {
        match self {
            Single::Purchase(s) => Ok(uniform_firstprice_bid(s, eta, &ch.dist)?.b_star),
            Single::Social(s) => {
                let (p, e) = social_as_purchase(s, eta)?;
                Ok(uniform_firstprice_bid(&p, &e, &ch.dist)?.b_star)
            }
        }
    }
}

fn solve_single(model: Single, eta: &IntensityProfile, ch: &Channel) -> Result<SolveReport> {
    let upper = model.upper(eta)?;
    let bid_report = |bid: f64, evaluations: u64, method: Method| -> Result<SolveReport> {
        Ok(SolveReport {
            optimal_value: model.value(eta, ch, bid)?,
            solution: Solution::Bid(bid),
            evaluations: evaluations + 1,
            method,
        })
    };

    if eta.eta_t() == 0.0 {
        return bid_report(0.0, 0, Method::ClosedForm);
    }
    match (ch.rule, ch.dist.shape()) {
        (_, Shape::Constant(a)) => {
            let at_zero = model.cost(model.value(eta, ch, 0.0)?);
            let at_atom = model.cost(model.value(eta, ch, a)?);
            let bid = if at_atom < at_zero { a } else { 0.0 };
            bid_report(bid, 2, Method::ClosedForm)
        }
        (AuctionRule::FirstPrice, Shape::Uniform { lower, .. }) => {
            let b = model.uniform_closed_form(eta, ch)?;
            // Every bid up to the lower endpoint never wins.
            let bid = if b > lower { b } else { 0.0 };
            bid_report(bid, 1, Method::ClosedForm)
        }
        (_, shape) => {
            let mut evals = 0;
            let nodes: Vec<f64> = match shape {
                Shape::Discrete { atoms, .. } => atoms.to_vec(),
                Shape::Uniform { lower, upper } => vec![lower, upper],
                Shape::Constant(a) => vec![a],
            };
            let (b0, _) = grid_minimize(|b| Ok(model.cost(model.value(eta, ch, b)?)), 0.0, upper, &nodes, &mut evals)?;
            let mut t = model.cost(model.value(eta, ch, b0)?);
            evals += 1;
            for _ in 0..MAX_POLISH {
                let b = argopt_counted(ch, t, None, &mut evals);
                let next = model.cost(model.value(eta, ch, b)?);
                evals += 1;
                if next < t - 1e-15 * t.abs().max(1.0) {
                    t = next;
                } else {
                    break;
                }
            }
            let bid = argopt_counted(ch, t, None, &mut evals);
            bid_report(bid.min(upper), evals, Method::GridRefine)
        }
    }
}

/// Maximizes the purchase value over `[0, rho K / (eta_I + rho)]`.
pub fn solve_purchase(spec: &Purchase, eta: &IntensityProfile, ch: &Channel) -> Result<SolveReport> {
    solve_single(Single::Purchase(*spec), eta, ch)
}

/// Solves the equivalent purchase problem with `K / (1 - e^{-rho})`.
pub fn solve_subscription(spec: &Subscription, eta: &IntensityProfile, ch: &Channel) -> Result<SolveReport> {
    let mut report = solve_purchase(&spec.effective_purchase(), eta, ch)?;
    if let Solution::Bid(b) = report.solution {
        report.optimal_value = value_subscription(spec, eta, ch, b)?;
    }
    Ok(report)
}

/// Minimizes the social discount cost over `[0, K / (eta_I + rho)]`.
pub fn solve_social_discount(spec: &SocialDiscount, eta: &IntensityProfile, ch: &Channel) -> Result<SolveReport> {
    solve_single(Single::Social(*spec), eta, ch)
}
