//! Closed forms checked against independent computations: direct sampling,
//! brute-force grids and numerical quadrature written out here.

use adbid_core::analytic::*;
use adbid_core::model::*;
use adbid_core::solver::value_at_p;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sp(d: BidDistribution) -> Channel {
    Channel::second_price(d)
}

#[test]
fn truncated_moment_matches_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 400_000;
    let b = 0.5;
    let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let sum: f64 = xs.iter().filter(|&&x| x <= b).sum();
    let sq: f64 = xs.iter().filter(|&&x| x <= b).map(|x| x * x).sum();
    let mean = sum / n as f64;
    let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
    let exact = expected_payment(&sp(BidDistribution::uniform(0.0, 1.0).unwrap()), b);
    assert_eq!(exact, 0.125);
    assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact} (se {se})");
}

#[test]
fn win_prob_is_monotone_and_saturates() {
    let laws = [
        BidDistribution::constant(0.3).unwrap(),
        BidDistribution::uniform(0.1, 0.7).unwrap(),
        BidDistribution::discrete(vec![0.0, 0.2, 0.45], vec![0.2, 0.5, 0.3]).unwrap(),
    ];
    for d in &laws {
        let mut prev = 0.0;
        for i in 0..=1000 {
            let b = i as f64 * 1e-3;
            let w = win_prob(d, b);
            assert!((0.0..=1.0).contains(&w));
            assert!(w >= prev);
            prev = w;
        }
        assert_eq!(win_prob(d, d.support_max()), 1.0);
        assert_eq!(win_prob(d, d.support_max() + 5.0), 1.0);
    }
}

#[test]
fn payment_kernels() {
    let d = BidDistribution::discrete(vec![0.1, 0.4, 0.9], vec![0.3, 0.3, 0.4]).unwrap();
    let fp = Channel::first_price(d.clone());
    let spc = sp(d.clone());
    let mut prev = 0.0;
    for i in 0..=120 {
        let b = i as f64 / 100.0;
        assert_eq!(expected_payment(&fp, b), b * win_prob(&d, b));
        let e = expected_payment(&spc, b);
        assert!(e >= prev);
        assert!(e <= b * win_prob(&d, b) + 1e-15);
        prev = e;
    }
}

#[test]
fn single_atom_discrete_behaves_like_constant() {
    let c = BidDistribution::constant(0.35).unwrap();
    let d = BidDistribution::discrete(vec![0.35], vec![1.0]).unwrap();
    let spec = Purchase::new(1.7, 0.6).unwrap();
    let eta = IntensityProfile::individual(0.8, 1.3).unwrap();
    for i in 0..=100 {
        let b = i as f64 / 100.0;
        assert_eq!(win_prob(&c, b), win_prob(&d, b));
        for rule in [AuctionRule::FirstPrice, AuctionRule::SecondPrice] {
            let (x, y) = (Channel::new(c.clone(), rule), Channel::new(d.clone(), rule));
            assert_eq!(expected_payment(&x, b), expected_payment(&y, b));
            assert_eq!(value_purchase(&spec, &eta, &x, b).unwrap(), value_purchase(&spec, &eta, &y, b).unwrap());
        }
    }
}

#[test]
fn subscription_identity() {
    let sub = Subscription::new(0.9, 0.35).unwrap();
    let big_k = 0.9 / (1.0 - (-0.35f64).exp());
    let pur = Purchase::new(big_k, 0.35).unwrap();
    let eta = IntensityProfile::individual(0.4, 2.2).unwrap();
    let ch = Channel::first_price(BidDistribution::uniform(0.2, 1.4).unwrap());
    for i in 0..=50 {
        let b = i as f64 * 0.04;
        assert_eq!(value_subscription(&sub, &eta, &ch, b).unwrap(), value_purchase(&pur, &eta, &ch, b).unwrap());
    }
    let eta0 = IntensityProfile::individual(1.0, 0.0).unwrap();
    let sub = Subscription::new(1.0, 2f64.ln()).unwrap();
    let v = value_subscription(&sub, &eta0, &ch, 0.0).unwrap();
    assert!((v - 2.0 / (1.0 + 2f64.ln())).abs() < 1e-15);
}

#[test]
fn baselines_when_never_winning() {
    let ch = Channel::first_price(BidDistribution::uniform(0.5, 1.0).unwrap());
    let eta = IntensityProfile::individual(0.7, 3.0).unwrap();
    let p = Purchase::new(2.0, 0.4).unwrap();
    assert_eq!(value_purchase(&p, &eta, &ch, 0.3).unwrap(), 0.7 * 2.0 / 1.1);
    let s = SocialDiscount::new(2.0, 0.4).unwrap();
    assert_eq!(value_social_discount(&s, &eta, &ch, 0.3).unwrap(), 2.0 / 1.1);
    let eta = IntensityProfile::new(0.7, 3.0, 1.5, 0.9).unwrap();
    let v = value_social_pair(0.25, &eta, &ch, &ch, 2.0, 0.0, 0.0).unwrap();
    assert_eq!(v, 2.0 / (0.7 + 0.25 * 0.9));
}

#[test]
fn constant_law_gives_two_values() {
    let a = 0.42;
    let ch = sp(BidDistribution::constant(a).unwrap());
    let spec = Purchase::new(1.3, 0.8).unwrap();
    let eta = IntensityProfile::individual(0.5, 1.1).unwrap();
    let below = value_purchase(&spec, &eta, &ch, 0.0).unwrap();
    let above = value_purchase(&spec, &eta, &ch, a).unwrap();
    for i in 0..=200 {
        let b = i as f64 * 0.01;
        let v = value_purchase(&spec, &eta, &ch, b).unwrap();
        assert_eq!(v, if b < a { below } else { above }, "b = {b}");
    }
}

/// Brute-force argmax of the purchase value over `[lower, upper]`.
fn grid_argmax(spec: &Purchase, eta: &IntensityProfile, ch: &Channel, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    let mut best = (lo, f64::NEG_INFINITY);
    for i in 0..=n {
        let b = (lo + i as f64 * step).min(hi);
        let v = value_purchase(spec, eta, ch, b).unwrap();
        if v > best.1 {
            best = (b, v);
        }
    }
    best.0
}

#[test]
fn uniform_closed_form_matches_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut low, mut high) = (0, 0);
    for _ in 0..100 {
        let spec = Purchase::new(rng.random_range(0.2..4.0), rng.random_range(0.1..3.0)).unwrap();
        let eta = IntensityProfile::individual(rng.random_range(0.0..3.0), rng.random_range(0.2..5.0)).unwrap();
        let lower = rng.random_range(0.0..1.5);
        let upper = lower + rng.random_range(0.05..2.0);
        let dist = BidDistribution::uniform(lower, upper).unwrap();
        let cf = uniform_firstprice_bid(&spec, &eta, &dist).unwrap();
        let grid = grid_argmax(&spec, &eta, &Channel::first_price(dist), lower, upper, 1e-4);
        assert!((cf.b_star - grid).abs() < 2e-4, "{cf:?} grid {grid}");
        assert_eq!(cf.a2, -cf.lambda2);
        low += (cf.b_star == lower) as usize;
        high += (cf.b_star == upper) as usize;
    }
    assert!(low > 0 && high > 0, "clamp cases: {low} at lower, {high} at upper");
}

fn sum_min(eta: &IntensityProfile, k: f64, b: f64, n: usize) -> f64 {
    // Midpoint rule on the explicit two-branch integrand.
    let h = 1.0 / n as f64;
    (0..n)
        .map(|j| {
            let p = (j as f64 + 0.5) * h;
            let no_ad = k / (eta.eta_i() + p * eta.eta_s());
            let ad = (k + eta.eta_t() * b) / (eta.eta_i() + eta.eta_t() + p * eta.eta_s());
            no_ad.min(ad)
        })
        .sum::<f64>()
        * h
}

#[test]
fn meanfield_closed_form_both_branches() {
    for (eta, b, want) in [
        (IntensityProfile::new(0.5, 1.0, 0.0, 1.0).unwrap(), 0.4, 1.4 * (2.5f64 / 1.5).ln()),
        (IntensityProfile::new(0.5, 1.0, 0.0, 2.0).unwrap(), 1.0, (2.0f64 / 1.5).ln() - 0.5 * (1.0f64 / 2.5).ln()),
        (IntensityProfile::new(0.5, 1.0, 0.0, 2.0).unwrap(), 3.0, f64::NAN),
    ] {
        let cf = meanfield_closed_form_targeted(&eta, 1.0, b).unwrap();
        if !want.is_nan() {
            assert!((cf - want).abs() < 1e-14, "{cf} vs {want}");
        }
        let oracle = sum_min(&eta, 1.0, b, 200_000);
        assert!((cf - oracle).abs() < 1e-8, "{cf} vs {oracle}");
        let ch_t = Channel::second_price(BidDistribution::constant(b).unwrap());
        let ch_nt = Channel::second_price(BidDistribution::constant(0.0).unwrap());
        let quad = meanfield_value(100_000, |p| value_at_p(p, &eta, &ch_t, &ch_nt, 1.0)).unwrap();
        assert!((cf - quad).abs() < 1e-6, "{cf} vs {quad}");
    }
}

#[test]
fn meanfield_without_ads_is_flat() {
    let eta = IntensityProfile::new(0.8, 0.0, 0.0, 0.0).unwrap();
    let ch = Channel::second_price(BidDistribution::constant(0.3).unwrap());
    let v = meanfield_value(1000, |p| value_at_p(p, &eta, &ch, &ch, 2.0)).unwrap();
    assert!((v - 2.5).abs() < 1e-12);
}

#[test]
fn threshold_sign_change() {
    let (k, ei, es, b) = (1.0, 0.5, 2.0, 1.0);
    let p_star = threshold_constant_targeted(k, ei, es, b).unwrap();
    let eta = IntensityProfile::new(ei, 1.0, 0.0, es).unwrap();
    let ch = Channel::second_price(BidDistribution::constant(b).unwrap());
    for p in [0.0, 0.1, 0.2, 0.3, 0.6, 0.9] {
        let no_ad = value_social_pair(p, &eta, &ch, &ch, k, 0.0, 0.0).unwrap();
        let ad = value_social_pair(p, &eta, &ch, &ch, k, b, 0.0).unwrap();
        assert_eq!(ad < no_ad, p < p_star, "p = {p}");
    }
}
