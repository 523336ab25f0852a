//! Per-proportion optimization for the population model.
//!
//! At a fixed informed proportion `p` the row cost is a ratio whose numerator
//! and denominator split into a targeted and a non-targeted part. Given a
//! candidate value `t`, the best bids are found independently on each channel
//! by [`argopt_counted`] at targets `t` and `(1 - p) t`; iterating
//! `t <- cost(bids(t))` decreases monotonically to `v(p)`.

use serde::{Deserialize, Serialize};

use super::search::{argopt_counted, grid_minimize};
use super::{Method, Solution, SolveReport};
use crate::analytic::value_social_pair;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, pairwise_sum, try_map_indexed};
use crate::model::{AuctionRule, Channel, IntensityProfile, PolicyRow, PolicyTable, Shape, SocialPopulation};

pub const MAX_ITERATIONS: usize = 10_000;

/// Stopping tolerance of the value iteration, relative to `max(1, v)`.
pub const FIXED_POINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Every row from scratch, rows in parallel.
    Naive,
    /// Endpoints first, then midpoints, each row bracketed by its solved neighbours.
    Dichotomy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowSolution {
    pub v: f64,
    pub bid_t: f64,
    pub bid_nt: f64,
    pub evaluations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub v: f64,
    pub iterations: usize,
    /// Set when the iteration cap was hit and the grid answered instead.
    pub fell_back: bool,
}

#[derive(Clone, Copy)]
struct Row<'a> {
    p: f64,
    eta: &'a IntensityProfile,
    ch_t: &'a Channel,
    ch_nt: &'a Channel,
    k: f64,
}

type Bracket = Option<(f64, f64)>;

impl Row<'_> {
    fn cost(&self, bid_t: f64, bid_nt: f64, evals: &mut u64) -> Result<f64> {
        *evals += 1;
        value_social_pair(self.p, self.eta, self.ch_t, self.ch_nt, self.k, bid_t, bid_nt)
    }

    fn upper(&self) -> f64 {
        self.k / (self.eta.eta_i() + self.p * self.eta.eta_s())
    }

    /// Smallest bids maximizing the parametric payoff at value `t`. A channel
    /// that never opens is left at bid 0.
    fn bids(&self, t: f64, bt: Bracket, bnt: Bracket, evals: &mut u64) -> (f64, f64) {
        let bid_t = if self.eta.eta_t() == 0.0 { 0.0 } else { argopt_counted(self.ch_t, t, bt, evals) };
        let bid_nt = if self.eta.eta_nt() == 0.0 {
            0.0
        } else {
            argopt_counted(self.ch_nt, (1.0 - self.p) * t, bnt, evals)
        };
        (bid_t, bid_nt)
    }

    fn fixed_point(&self, evals: &mut u64) -> Result<FixedPoint> {
        self.fixed_point_from(self.upper(), evals)
    }

    /// Iterates from `v`, which must not lie below `v(p)`.
    fn fixed_point_from(&self, mut v: f64, evals: &mut u64) -> Result<FixedPoint> {
        for n in 1..=MAX_ITERATIONS {
            let next = self.cost(v, (1.0 - self.p) * v, evals)?;
            if (next - v).abs() <= FIXED_POINT_TOL * v.abs().max(1.0) {
                return Ok(FixedPoint { v: next, iterations: n, fell_back: false });
            }
            v = next;
        }
        let (_, v) = grid_minimize(|b| self.cost(b, (1.0 - self.p) * b, &mut 0), 0.0, self.upper(), &[], evals)?;
        if !v.is_finite() {
            return Err(Error::FallbackExhausted { p: self.p });
        }
        Ok(FixedPoint { v, iterations: MAX_ITERATIONS, fell_back: true })
    }

    fn improve(&self, seed: (f64, f64), bt: Bracket, bnt: Bracket, evals: &mut u64) -> Result<RowSolution> {
        let mut t = self.cost(seed.0, seed.1, evals)?;
        for _ in 0..MAX_ITERATIONS {
            let (bid_t, bid_nt) = self.bids(t, bt, bnt, evals);
            let next = self.cost(bid_t, bid_nt, evals)?;
            if next >= t - FIXED_POINT_TOL * t.abs().max(1.0) {
                return Ok(RowSolution { v: next, bid_t, bid_nt, evaluations: 0 });
            }
            t = next;
        }
        let (v, bid_t, bid_nt) = grid_pair_counted(self, evals)?;
        Ok(RowSolution { v, bid_t, bid_nt, evaluations: 0 })
    }

    fn fully_second_price(&self) -> bool {
        self.ch_t.rule == AuctionRule::SecondPrice && self.ch_nt.rule == AuctionRule::SecondPrice
    }

    /// Smallest optimal bids at the converged value `v`, and their cost.
    fn settle(&self, v: f64, bt: Bracket, bnt: Bracket, evals: &mut u64) -> Result<RowSolution> {
        let (bid_t, bid_nt) = self.bids(v, bt, bnt, evals);
        Ok(RowSolution { v: self.cost(bid_t, bid_nt, evals)?, bid_t, bid_nt, evaluations: 0 })
    }

    fn solve_naive(&self) -> Result<RowSolution> {
        let mut evals = 0;
        let mut sol = if self.fully_second_price() {
            let fp = self.fixed_point(&mut evals)?;
            self.settle(fp.v, None, None, &mut evals)?
        } else {
            self.improve((0.0, 0.0), None, None, &mut evals)?
        };
        sol.evaluations = evals;
        Ok(sol)
    }

    fn solve_between(&self, left: &RowSolution, right: &RowSolution) -> Result<RowSolution> {
        let eta = self.eta;
        let bnt = Some((right.bid_nt, left.bid_nt));
        let bt = if eta.eta_nt() == 0.0 {
            Some((right.bid_t, left.bid_t))
        } else if eta.eta_s() == 0.0 {
            Some((left.bid_t, right.bid_t))
        } else {
            None
        };
        let collapsed = |b: Bracket| matches!(b, Some((lo, hi)) if lo == hi);
        let t_fixed = eta.eta_t() == 0.0 || collapsed(bt);
        let nt_fixed = eta.eta_nt() == 0.0 || collapsed(bnt);

        let mut evals = 0;
        let mut sol = if t_fixed && nt_fixed {
            let (bid_t, bid_nt) = (left.bid_t, left.bid_nt);
            RowSolution { v: self.cost(bid_t, bid_nt, &mut evals)?, bid_t, bid_nt, evaluations: 0 }
        } else if self.fully_second_price() {
            let start = self.cost(left.bid_t, left.bid_nt, &mut evals)?.min(self.upper());
            let fp = self.fixed_point_from(start, &mut evals)?;
            self.settle(fp.v, bt, bnt, &mut evals)?
        } else {
            self.improve((left.bid_t, left.bid_nt), bt, bnt, &mut evals)?
        };
        sol.evaluations = evals;
        Ok(sol)
    }
}

fn grid_pair_counted(row: &Row<'_>, evals: &mut u64) -> Result<(f64, f64, f64)> {
    let hi = row.upper();
    let nodes = |ch: &Channel| -> Vec<f64> {
        match ch.dist.shape() {
            Shape::Constant(a) => vec![a],
            Shape::Uniform { lower, upper } => vec![lower, upper],
            Shape::Discrete { atoms, .. } => atoms.to_vec(),
        }
    };
    let (nt_nodes, t_nodes) = (nodes(row.ch_nt), nodes(row.ch_t));
    let mut inner_evals = 0;
    let (bid_t, _) = grid_minimize(
        |bt| {
            let (_, v) = grid_minimize(|bnt| row.cost(bt, bnt, &mut 0), 0.0, hi, &nt_nodes, &mut inner_evals)?;
            Ok(v)
        },
        0.0,
        hi,
        &t_nodes,
        evals,
    )?;
    *evals += inner_evals;
    let (bid_nt, v) = grid_minimize(|bnt| row.cost(bid_t, bnt, &mut 0), 0.0, hi, &nt_nodes, evals)?;
    if !v.is_finite() {
        return Err(Error::FallbackExhausted { p: row.p });
    }
    Ok((v, bid_t, bid_nt))
}

/// Grid minimization of the row cost over `[0, K / (eta_I + p eta_S)]^2`.
///
/// Used as the last resort when the value iteration does not settle.
pub fn grid_pair(
    p: f64,
    eta: &IntensityProfile,
    ch_t: &Channel,
    ch_nt: &Channel,
    k: f64,
) -> Result<(f64, f64, f64)> {
    grid_pair_counted(&Row { p, eta, ch_t, ch_nt, k }, &mut 0)
}

/// `v(p)` for fully second-price channels by iterating
/// `v <- cost(v, (1 - p) v)` from `K / (eta_I + p eta_S)`.
pub fn second_price_fixed_point(
    p: f64,
    eta: &IntensityProfile,
    ch_t: &Channel,
    ch_nt: &Channel,
    k: f64,
) -> Result<FixedPoint> {
    if ch_t.rule != AuctionRule::SecondPrice || ch_nt.rule != AuctionRule::SecondPrice {
        return Err(Error::invalid("rule", "fixed point needs second-price channels"));
    }
    let row = Row { p, eta, ch_t, ch_nt, k };
    check_row(&row)?;
    row.fixed_point(&mut 0)
}

fn check_row(row: &Row<'_>) -> Result<()> {
    if !(0.0..1.0).contains(&row.p) {
        return Err(Error::invalid("p", format!("must lie in [0, 1), got {}", row.p)));
    }
    if row.eta.eta_i() + row.p * row.eta.eta_s() <= 0.0 {
        return Err(Error::invalid("eta_I", "must be > 0 for the population model"));
    }
    Ok(())
}

/// Optimal row at proportion `p`, solved without neighbour information.
pub fn solve_row(p: f64, eta: &IntensityProfile, ch_t: &Channel, ch_nt: &Channel, k: f64) -> Result<RowSolution> {
    let row = Row { p, eta, ch_t, ch_nt, k };
    check_row(&row)?;
    row.solve_naive()
}

/// `v(p)`: the minimal cost spent while the informed proportion is `p`.
pub fn value_at_p(p: f64, eta: &IntensityProfile, ch_t: &Channel, ch_nt: &Channel, k: f64) -> Result<f64> {
    Ok(solve_row(p, eta, ch_t, ch_nt, k)?.v)
}

/// Optimal proportion-based policy, scheduled by dichotomy.
pub fn solve_social_population(
    spec: &SocialPopulation,
    eta: &IntensityProfile,
    ch_t: &Channel,
    ch_nt: &Channel,
) -> Result<SolveReport> {
    solve_social_population_with(spec, eta, ch_t, ch_nt, Schedule::Dichotomy)
}

pub fn solve_social_population_with(
    spec: &SocialPopulation,
    eta: &IntensityProfile,
    ch_t: &Channel,
    ch_nt: &Channel,
    schedule: Schedule,
) -> Result<SolveReport> {
    if eta.eta_i() <= 0.0 {
        return Err(Error::invalid("eta_I", "must be > 0 for the population model"));
    }
    let m = spec.m();
    let row_at = |i: usize| Row { p: i as f64 / m as f64, eta, ch_t, ch_nt, k: spec.k() };
    let tag = |i: usize| move |e: Error| Error::Row { p: i as f64 / m as f64, source: Box::new(e) };

    let rows: Vec<RowSolution> = match schedule {
        Schedule::Naive => try_map_indexed(m, |i| row_at(i).solve_naive().map_err(tag(i)))?,
        Schedule::Dichotomy => {
            let mut slots: Vec<Option<RowSolution>> = vec![None; m];
            let ends: Vec<usize> = if m == 1 { vec![0] } else { vec![0, m - 1] };
            let solved = try_map_indexed(ends.len(), |j| row_at(ends[j]).solve_naive().map_err(tag(ends[j])))?;
            for (&i, s) in ends.iter().zip(solved) {
                slots[i] = Some(s);
            }
            let mut level: Vec<(usize, usize)> = if m > 2 { vec![(0, m - 1)] } else { Vec::new() };
            while !level.is_empty() {
                let mids: Vec<usize> = level.iter().map(|&(lo, hi)| (lo + hi) / 2).collect();
                let solved = {
                    let slots = &slots;
                    let level = &level;
                    try_map_indexed(level.len(), |j| {
                        let (lo, hi) = level[j];
                        let (left, right) = (slots[lo].as_ref().unwrap(), slots[hi].as_ref().unwrap());
                        row_at(mids[j]).solve_between(left, right).map_err(tag(mids[j]))
                    })?
                };
                for (&i, s) in mids.iter().zip(solved) {
                    slots[i] = Some(s);
                }
                level = level
                    .iter()
                    .zip(&mids)
                    .flat_map(|(&(lo, hi), &mid)| [(lo, mid), (mid, hi)])
                    .filter(|&(lo, hi)| hi - lo >= 2)
                    .collect();
            }
            slots.into_iter().map(Option::unwrap).collect()
        }
    };

    let evaluations = rows.iter().map(|r| r.evaluations).sum();
    let values = map_indexed(m, |i| rows[i].v);
    let optimal_value = pairwise_sum(&values);
    let table = PolicyTable::new(
        m,
        rows.iter()
            .enumerate()
            .map(|(i, r)| PolicyRow { p: i as f64 / m as f64, bid_t: r.bid_t, bid_nt: r.bid_nt, v: r.v })
            .collect(),
    )?;
    let method = match schedule {
        Schedule::Dichotomy => Method::Dichotomy,
        Schedule::Naive if ch_t.rule == AuctionRule::SecondPrice && ch_nt.rule == AuctionRule::SecondPrice => {
            Method::FixedPoint
        }
        Schedule::Naive => Method::GridRefine,
    };
    Ok(SolveReport { optimal_value, solution: Solution::Policy(table), evaluations, method })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BidDistribution;

    fn sp(a: f64) -> Channel {
        Channel::second_price(BidDistribution::constant(a).unwrap())
    }

    #[test]
    fn fixed_point_targeted_constant() {
        let eta = IntensityProfile::new(0.5, 1.0, 0.0, 1.0).unwrap();
        let fp = second_price_fixed_point(0.0, &eta, &sp(0.4), &sp(0.0), 1.0).unwrap();
        assert!((fp.v - 1.4 / 1.5).abs() < 1e-12);
        assert!(!fp.fell_back);
    }

    #[test]
    fn fixed_point_without_ads_is_bound() {
        let eta = IntensityProfile::new(0.5, 0.0, 0.0, 1.0).unwrap();
        let fp = second_price_fixed_point(0.25, &eta, &sp(0.4), &sp(0.4), 1.0).unwrap();
        assert_eq!(fp.v, 1.0 / 0.75);
        assert_eq!(fp.iterations, 1);
    }

    #[test]
    fn four_row_example() {
        let spec = SocialPopulation::new(1.0, 4).unwrap();
        let eta = IntensityProfile::new(0.5, 1.0, 0.0, 1.0).unwrap();
        let r = solve_social_population(&spec, &eta, &sp(0.4), &sp(0.0)).unwrap();
        let want: f64 = (0..4)
            .map(|k| {
                let p = k as f64 / 4.0;
                (1.0 / (0.5 + p)).min(1.4 / (1.5 + p))
            })
            .sum();
        assert!((r.optimal_value - want).abs() < 1e-12);
        assert!((r.optimal_value - 3.05556).abs() < 1e-5);
        for row in r.policy().unwrap().rows() {
            assert_eq!(row.bid_t, 0.4);
        }
    }

    #[test]
    fn schedules_agree() {
        let spec = SocialPopulation::new(1.0, 16).unwrap();
        let eta = IntensityProfile::new(0.3, 1.2, 0.7, 0.9).unwrap();
        let ch_t = Channel::first_price(BidDistribution::uniform(0.05, 0.6).unwrap());
        let ch_nt = Channel::second_price(BidDistribution::discrete(vec![0.1, 0.3], vec![0.5, 0.5]).unwrap());
        let a = solve_social_population_with(&spec, &eta, &ch_t, &ch_nt, Schedule::Naive).unwrap();
        let b = solve_social_population_with(&spec, &eta, &ch_t, &ch_nt, Schedule::Dichotomy).unwrap();
        for (x, y) in a.policy().unwrap().rows().iter().zip(b.policy().unwrap().rows()) {
            assert!((x.v - y.v).abs() < 1e-9);
            assert!((x.bid_t - y.bid_t).abs() < 1e-6);
            assert!((x.bid_nt - y.bid_nt).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_free_rate_rejected() {
        let spec = SocialPopulation::new(1.0, 3).unwrap();
        let eta = IntensityProfile::new(0.0, 1.0, 0.0, 1.0).unwrap();
        assert!(solve_social_population(&spec, &eta, &sp(0.4), &sp(0.0)).is_err());
    }
}
