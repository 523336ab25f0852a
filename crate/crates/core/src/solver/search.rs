//! Static auction maximization and bounded grid search.

use crate::analytic::expected_payment;
use crate::error::Result;
use crate::model::{AuctionRule, Channel, Shape};

/// Relative width of the band of near-maximal grid values treated as ties.
pub const TIE_TOL: f64 = 1e-12;

/// Coarse grid resolution as a fraction of the search interval.
pub const GRID_FRACTION: f64 = 1e-3;

fn tie_band(best: f64) -> f64 {
    TIE_TOL * best.abs().max(1.0)
}

/// `E[(t - c(b, B)) 1{b >= B}]`.
pub fn static_objective(ch: &Channel, t: f64, b: f64) -> f64 {
    t * ch.dist.cdf(b) - expected_payment(ch, b)
}

/// Smallest maximizer of `b -> E[(t - c(b, B)) 1{b >= B}]` over `b >= 0`.
///
/// An atom sitting exactly at `t` earns nothing and is never selected.
pub fn smallest_argopt(ch: &Channel, t: f64) -> f64 {
    let mut evals = 0;
    argopt_counted(ch, t, None, &mut evals)
}

/// [`smallest_argopt`] with an optional `(lo, hi)` bracket known to contain
/// the answer. Only the first-price discrete search uses the bracket, since
/// every other case is answered in constant time.
pub(crate) fn argopt_counted(ch: &Channel, t: f64, bracket: Option<(f64, f64)>, evals: &mut u64) -> f64 {
    if t <= 0.0 {
        *evals += 1;
        return 0.0;
    }
    match (ch.rule, ch.dist.shape()) {
        (_, Shape::Constant(a)) => {
            *evals += 1;
            if a < t {
                a
            } else {
                0.0
            }
        }
        (AuctionRule::SecondPrice, Shape::Uniform { lower, upper }) => {
            *evals += 1;
            if t > lower {
                t.min(upper)
            } else {
                0.0
            }
        }
        (AuctionRule::FirstPrice, Shape::Uniform { lower, upper }) => {
            *evals += 1;
            if t > lower {
                (0.5 * (t + lower)).min(upper)
            } else {
                0.0
            }
        }
        (AuctionRule::SecondPrice, Shape::Discrete { atoms, .. }) => {
            *evals += 1;
            let i = atoms.partition_point(|&a| a < t);
            if i == 0 {
                0.0
            } else {
                atoms[i - 1]
            }
        }
        (AuctionRule::FirstPrice, Shape::Discrete { atoms, .. }) => {
            let mut cands: Vec<f64> = Vec::new();
            match bracket {
                Some((lo, hi)) => {
                    cands.push(lo);
                    let start = atoms.partition_point(|&a| a <= lo);
                    cands.extend(atoms[start..].iter().copied().take_while(|&a| a <= hi && a < t));
                }
                None => cands.extend(atoms.iter().copied().take_while(|&a| a < t)),
            }
            let vals: Vec<f64> = cands.iter().map(|&b| (t - b) * ch.dist.cdf(b)).collect();
            *evals += vals.len() as u64;
            let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if best <= 0.0 {
                return 0.0;
            }
            let band = tie_band(best);
            let j = vals.iter().position(|&v| v >= best - band).unwrap();
            cands[j]
        }
    }
}

/// Leftmost near-minimizer of `f` over `[lo, hi]`.
///
/// A grid at `GRID_FRACTION` of the interval, merged with `nodes` (atoms and
/// endpoints of the competitor law), is scanned first; the best cell is then
/// rescanned twice at ten times finer resolution.
pub(crate) fn grid_minimize<F>(mut f: F, lo: f64, hi: f64, nodes: &[f64], evals: &mut u64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut h = (hi - lo) * GRID_FRACTION;
    if h <= 0.0 {
        *evals += 1;
        return Ok((lo, f(lo)?));
    }
    let coarse = (1.0 / GRID_FRACTION).round() as usize;
    let (mut best_b, mut best_v) = scan(&mut f, lo, hi, lo, h, coarse, nodes, evals)?;
    for _ in 0..2 {
        let a = (best_b - h).max(lo);
        let b = (best_b + h).min(hi);
        h /= 10.0;
        let n = ((b - a) / h).round() as usize;
        let (rb, rv) = scan(&mut f, a, b, a, h, n, nodes, evals)?;
        if rv < best_v - tie_band(best_v) || (rv <= best_v + tie_band(best_v) && rb < best_b) {
            best_b = rb;
            best_v = rv;
        }
    }
    Ok((best_b, best_v))
}

#[allow(clippy::too_many_arguments)]
fn scan<F>(
    f: &mut F,
    lo: f64,
    hi: f64,
    start: f64,
    h: f64,
    n: usize,
    nodes: &[f64],
    evals: &mut u64,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut pts: Vec<f64> = (0..=n).map(|i| (start + i as f64 * h).min(hi)).collect();
    pts.extend(nodes.iter().copied().filter(|&x| x >= lo && x <= hi));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut vals = Vec::with_capacity(pts.len());
    for &b in &pts {
        vals.push(f(b)?);
    }
    *evals += pts.len() as u64;
    let best = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let band = tie_band(best);
    let j = vals.iter().position(|&v| v <= best + band).unwrap();
    Ok((pts[j], vals[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BidDistribution;

    fn scan_argmax(ch: &Channel, t: f64, hi: f64, step: f64) -> f64 {
        let n = (hi / step).round() as usize;
        let mut best = (0.0, static_objective(ch, t, 0.0));
        for i in 1..=n {
            let b = i as f64 * step;
            let v = static_objective(ch, t, b);
            if v > best.1 + 1e-12 {
                best = (b, v);
            }
        }
        best.0
    }

    #[test]
    fn second_price_constant() {
        let ch = Channel::second_price(BidDistribution::constant(0.4).unwrap());
        assert_eq!(smallest_argopt(&ch, 1.4 / 1.5), 0.4);
        assert!((scan_argmax(&ch, 1.4 / 1.5, 1.0, 1e-4) - 0.4).abs() < 1e-9);
        assert_eq!(smallest_argopt(&ch, 0.4), 0.0);
        assert_eq!(smallest_argopt(&ch, 0.0), 0.0);
    }

    #[test]
    fn first_price_uniform() {
        let ch = Channel::first_price(BidDistribution::uniform(0.0, 1.0).unwrap());
        assert_eq!(smallest_argopt(&ch, 1.0), 0.5);
        assert!((scan_argmax(&ch, 1.0, 1.0, 1e-4) - 0.5).abs() < 1e-9);
        let ch = Channel::first_price(BidDistribution::uniform(0.2, 0.3).unwrap());
        assert_eq!(smallest_argopt(&ch, 1.0), 0.3);
        assert_eq!(smallest_argopt(&ch, 0.2), 0.0);
    }

    #[test]
    fn discrete_both_rules_match_scan() {
        let d = BidDistribution::discrete(vec![0.1, 0.25, 0.5, 0.8], vec![0.4, 0.1, 0.3, 0.2]).unwrap();
        for t in [0.05, 0.1, 0.3, 0.6, 0.9, 1.5] {
            for ch in [Channel::first_price(d.clone()), Channel::second_price(d.clone())] {
                let got = smallest_argopt(&ch, t);
                let want = scan_argmax(&ch, t, 2.0, 0.05);
                assert!((got - want).abs() < 1e-9, "{:?} t={t}: {got} vs {want}", ch.rule);
            }
        }
    }

    #[test]
    fn bracket_restricts_candidates() {
        let atoms: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        let d = BidDistribution::discrete(atoms, vec![0.01; 100]).unwrap();
        let ch = Channel::first_price(d);
        let mut full = 0;
        let mut bracketed = 0;
        let a = argopt_counted(&ch, 0.9, None, &mut full);
        let b = argopt_counted(&ch, 0.9, Some((0.4, 0.5)), &mut bracketed);
        assert_eq!(a, b);
        assert!(bracketed < full);
    }

    #[test]
    fn grid_finds_leftmost_minimum() {
        let mut evals = 0;
        let (b, v) = grid_minimize(|x| Ok(if x >= 0.37 { 1.0 } else { 2.0 }), 0.0, 1.0, &[0.37], &mut evals).unwrap();
        assert_eq!((b, v), (0.37, 1.0));
        let (b, _) = grid_minimize(|x| Ok((x - 0.123_45f64).powi(2)), 0.0, 1.0, &[], &mut evals).unwrap();
        assert!((b - 0.123_45).abs() < 1e-5);
    }
}
