//! Closed-form values, thresholds and optimal bids.
//!
//! Every function here is a pure evaluation of an exact formula; nothing
//! samples and nothing iterates except [`meanfield_value`], which integrates
//! a caller-supplied value curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{pairwise_sum, try_map_indexed};
use crate::model::{
    AuctionRule, BidDistribution, Channel, IntensityProfile, PolicyTable, Purchase, Shape,
    SocialDiscount, SocialPopulation, Subscription,
};

/// Win probability and expected payment of one auction at a given bid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelFunctionals {
    pub win_prob: f64,
    pub expected_payment: f64,
}

/// `P[b >= B]`.
pub fn win_prob(dist: &BidDistribution, b: f64) -> f64 {
    dist.cdf(b)
}

/// `E[c(b, B) 1{b >= B}]`.
pub fn expected_payment(ch: &Channel, b: f64) -> f64 {
    match ch.rule {
        AuctionRule::FirstPrice => b * ch.dist.cdf(b),
        AuctionRule::SecondPrice => ch.dist.truncated_mean(b),
    }
}

pub fn functionals(ch: &Channel, b: f64) -> ChannelFunctionals {
    ChannelFunctionals { win_prob: win_prob(&ch.dist, b), expected_payment: expected_payment(ch, b) }
}

fn ratio(num: f64, den: f64, what: &'static str) -> Result<f64> {
    if den == 0.0 {
        return Err(Error::ZeroDenominator { what });
    }
    Ok(num / den)
}

/// Expected discounted gain of bidding `b` until the individual is informed.
pub fn value_purchase(spec: &Purchase, eta: &IntensityProfile, ch: &Channel, b: f64) -> Result<f64> {
    let f = functionals(ch, b);
    let k = spec.k();
    let num = eta.eta_i() * k + eta.eta_t() * (k * f.win_prob - f.expected_payment);
    let den = eta.eta_i() + spec.rho() + eta.eta_t() * f.win_prob;
    ratio(num, den, "purchase value")
}

/// Subscription value: the purchase value for the lump sum `K / (1 - e^{-rho})`.
pub fn value_subscription(spec: &Subscription, eta: &IntensityProfile, ch: &Channel, b: f64) -> Result<f64> {
    value_purchase(&spec.effective_purchase(), eta, ch, b)
}

/// Expected discounted cost of danger events plus advertising.
pub fn value_social_discount(
    spec: &SocialDiscount,
    eta: &IntensityProfile,
    ch: &Channel,
    b: f64,
) -> Result<f64> {
    let f = functionals(ch, b);
    let num = spec.k() + eta.eta_t() * f.expected_payment;
    let den = eta.eta_i() + spec.rho() + eta.eta_t() * f.win_prob;
    ratio(num, den, "social discount value")
}

/// Expected cost spent while the informed proportion equals `p`, bidding
/// `bid_t` on targeted and `bid_nt` on non-targeted views.
#[allow(clippy::too_many_arguments)]
pub fn value_social_pair(
    p: f64,
    eta: &IntensityProfile,
    ch_t: &Channel,
    ch_nt: &Channel,
    k: f64,
    bid_t: f64,
    bid_nt: f64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid("p", format!("must lie in [0, 1), got {p}")));
    }
    let t = functionals(ch_t, bid_t);
    let nt = functionals(ch_nt, bid_nt);
    let num = k + eta.eta_t() * t.expected_payment + eta.eta_nt() * nt.expected_payment / (1.0 - p);
    let den = eta.eta_i() + eta.eta_t() * t.win_prob + eta.eta_nt() * nt.win_prob + p * eta.eta_s();
    ratio(num, den, "social pair value")
}

/// Total expected cost of a proportion-based policy: the sum of its rows.
pub fn value_population_policy(
    spec: &SocialPopulation,
    eta: &IntensityProfile,
    ch_t: &Channel,
    ch_nt: &Channel,
    policy: &PolicyTable,
) -> Result<f64> {
    if policy.m() != spec.m() {
        return Err(Error::PolicyMismatch { expected: spec.m(), found: policy.m() });
    }
    let vs = policy
        .rows()
        .iter()
        .map(|r| value_social_pair(r.p, eta, ch_t, ch_nt, spec.k(), r.bid_t, r.bid_nt))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&vs))
}

/// Bid that is optimal against every constant competitor bid in the purchase model.
pub fn dominant_bid_constant(k: f64, rho: f64, eta_i: f64) -> f64 {
    rho * k / (eta_i + rho)
}

/// Informed proportion above which a targeted ad against constant `B^T`
/// stops paying off; `+inf` without social contacts.
pub fn threshold_constant_targeted(k: f64, eta_i: f64, eta_s: f64, b_t: f64) -> Result<f64> {
    if b_t <= 0.0 {
        return Err(Error::invalid("B_T", format!("must be > 0, got {b_t}")));
    }
    if eta_s == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((k / b_t - eta_i) / eta_s)
}

/// Informed proportion above which a non-targeted ad against constant
/// `B^NT` stops paying off. Negative means never display.
pub fn threshold_constant_nontargeted(k: f64, eta_i: f64, eta_s: f64, b_nt: f64) -> Result<f64> {
    if b_nt <= 0.0 {
        return Err(Error::invalid("B_NT", format!("must be > 0, got {b_nt}")));
    }
    Ok((k - eta_i * b_nt) / (k + eta_s * b_nt))
}

/// Composite midpoint rule for `int_0^1 v(p) dp` with `quad_n` nodes.
///
/// Nodes are evaluated in parallel and summed pairwise in node order.
pub fn meanfield_value<F>(quad_n: usize, v: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64> + Sync + Send,
{
    if quad_n < 2 {
        return Err(Error::invalid("quad_n", format!("must be >= 2, got {quad_n}")));
    }
    let h = 1.0 / quad_n as f64;
    let vals = try_map_indexed(quad_n, |j| v((j as f64 + 0.5) * h))?;
    Ok(pairwise_sum(&vals) * h)
}

/// Exact `int_0^1 v(p) dp` for targeted-only advertising against a constant
/// competitor bid `B^T`.
pub fn meanfield_closed_form_targeted(eta: &IntensityProfile, k: f64, b_t: f64) -> Result<f64> {
    let (ei, et, es) = (eta.eta_i(), eta.eta_t(), eta.eta_s());
    if es == 0.0 {
        return Err(Error::invalid("eta_S", "must be > 0"));
    }
    if eta.eta_nt() != 0.0 {
        return Err(Error::invalid("eta_NT", "must be 0 for the targeted-only closed form"));
    }
    let p_star = threshold_constant_targeted(k, ei, es, b_t)?;
    let with_ads = (k + et * b_t) / es;
    let without = k / es;
    Ok(if p_star >= 1.0 {
        with_ads * ((ei + et + es) / (ei + et)).ln()
    } else if p_star >= 0.0 {
        with_ads * ((ei + et + p_star * es) / (ei + et)).ln() - without * ((ei + p_star * es) / (ei + es)).ln()
    } else {
        without * ((ei + es) / ei).ln()
    })
}

/// Intermediates of the uniform first-price closed form.
///
/// With `y` the denominator of the purchase value, the bid is
/// `b = lambda1 + lambda2 * y` and the value reads `a0 / y + a1 + a2 * y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformClosedForm {
    pub lambda1: f64,
    pub lambda2: f64,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    /// Unconstrained maximizer in the `y` variable.
    pub b_prime_star: f64,
    pub b_bar: f64,
    pub b_star: f64,
}

/// Optimal purchase bid against a uniform competitor bid under first price.
pub fn uniform_firstprice_bid(
    spec: &Purchase,
    eta: &IntensityProfile,
    dist: &BidDistribution,
) -> Result<UniformClosedForm> {
    let Shape::Uniform { lower, upper } = dist.shape() else {
        return Err(Error::invalid("dist", "closed form needs a uniform competitor bid"));
    };
    let et = eta.eta_t();
    if et <= 0.0 {
        return Err(Error::invalid("eta_T", "must be > 0"));
    }
    let (k, rho) = (spec.k(), spec.rho());
    let c = eta.eta_i() + rho;
    let lambda2 = (upper - lower) / et;
    let lambda1 = lower - lambda2 * c;
    let a0 = lambda1 * c - k * rho;
    let a1 = k - lambda1 + lambda2 * c;
    let a2 = -lambda2;
    let b_prime_star = (-a0 / lambda2).max(0.0).sqrt();
    let b_bar = lambda1 + (lambda2 * (k * rho - lower * c + lambda2 * c * c)).max(0.0).sqrt();
    let b_star = b_bar.clamp(lower, upper);
    Ok(UniformClosedForm { lambda1, lambda2, a0, a1, a2, b_prime_star, b_bar, b_star })
}

/// The social discount cost equals `K' - V` for a purchase problem with
/// `K' = K / (eta_I + rho)`, discount `eta_I + rho` and no free channel.
pub fn social_as_purchase(spec: &SocialDiscount, eta: &IntensityProfile) -> Result<(Purchase, IntensityProfile)> {
    let c = eta.eta_i() + spec.rho();
    if c <= 0.0 {
        return Err(Error::ZeroDenominator { what: "social discount value" });
    }
    Ok((Purchase::new(spec.k() / c, c)?, IntensityProfile::new(0.0, eta.eta_t(), 0.0, 0.0)?))
}
