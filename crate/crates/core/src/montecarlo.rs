//! Event-driven simulation of the browsing dynamics.
//!
//! Each path draws competing exponential clocks and stops once the
//! individual (or the whole population) is informed. Path `i` uses its own
//! ChaCha stream `i` under the configured seed, so results do not depend on
//! how paths are spread over workers, and two runs with different bids share
//! their random numbers path by path.

use std::fmt;
use std::io::Write;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::try_map_indexed;
use crate::model::{
    Accrual, Channel, IntensityProfile, ModelSpec, PolicyTable, SimConfig, SimEstimate, SocialPopulation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    InfoSite,
    TargetedView,
    NontargetedView,
    Danger,
    Social,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::InfoSite => "info_site",
            EventKind::TargetedView => "targeted_view",
            EventKind::NontargetedView => "nontargeted_view",
            EventKind::Danger => "danger",
            EventKind::Social => "social",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub path: u64,
    pub time: f64,
    pub kind: EventKind,
    pub individual: usize,
    pub won: bool,
    pub payment: f64,
}

pub const EVENT_LOG_HEADER: &str = "path\ttime\tkind\tindividual\twon\tpayment";

impl Event {
    pub fn tsv(&self) -> String {
        format!(
            "{}\t{:.17e}\t{}\t{}\t{}\t{:.17e}",
            self.path, self.time, self.kind, self.individual, self.won as u8, self.payment
        )
    }
}

fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

fn exp_draw(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    -u.ln() / rate
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}

/// Discounted gain or cost of one individual under a constant bid.
#[derive(Clone, Copy)]
struct IndividualSim<'a> {
    model: ModelSpec,
    eta: &'a IntensityProfile,
    ch: &'a Channel,
    bid: f64,
    cap: u64,
    accrual: Accrual,
}

impl IndividualSim<'_> {
    fn rho(&self) -> f64 {
        match self.model {
            ModelSpec::Purchase(s) => s.rho(),
            ModelSpec::Subscription(s) => s.rho(),
            ModelSpec::SocialDiscount(s) => s.rho(),
            ModelSpec::SocialPopulation(_) => 0.0,
        }
    }

    fn path<L: FnMut(Event)>(&self, seed: u64, path: u64, mut log: L) -> Result<f64> {
        let mut rng = path_rng(seed, path);
        let rho = self.rho();
        let (eta_i, eta_t) = (self.eta.eta_i(), self.eta.eta_t());
        let social = matches!(self.model, ModelSpec::SocialDiscount(_));
        let danger = if social && self.accrual == Accrual::Jumps { 1.0 } else { 0.0 };
        let rate = eta_i + eta_t + danger;
        let k = self.model.k();

        let mut t = 0.0;
        let mut total = 0.0;
        let mut events = 0u64;
        let informed_at = loop {
            if rate == 0.0 {
                break f64::INFINITY;
            }
            t += exp_draw(&mut rng, rate);
            let disc = (-rho * t).exp();
            if disc == 0.0 {
                break f64::INFINITY;
            }
            events += 1;
            if events > self.cap {
                return Err(Error::EventCapExceeded { path, cap: self.cap });
            }
            let u = uniform(&mut rng) * rate;
            let mut ev = Event { path, time: t, kind: EventKind::InfoSite, individual: 0, won: false, payment: 0.0 };
            if u < eta_i {
                log(ev);
                break t;
            } else if u < eta_i + eta_t {
                ev.kind = EventKind::TargetedView;
                let b = self.ch.dist.quantile(uniform(&mut rng));
                if self.bid >= b {
                    let c = self.ch.rule.payment(self.bid, b);
                    total += if social { c * disc } else { -c * disc };
                    ev.won = true;
                    ev.payment = c;
                    log(ev);
                    break t;
                }
                log(ev);
            } else {
                ev.kind = EventKind::Danger;
                total += k * disc;
                log(ev);
            }
        };

        let disc = if informed_at.is_finite() { (-rho * informed_at).exp() } else { 0.0 };
        Ok(match self.model {
            ModelSpec::Purchase(s) => total + s.k() * disc,
            ModelSpec::Subscription(s) => total + s.effective_purchase().k() * disc,
            ModelSpec::SocialDiscount(_) => match self.accrual {
                Accrual::Jumps => total,
                Accrual::Continuous if rho > 0.0 => total + k * -(-rho * informed_at).exp_m1() / rho,
                Accrual::Continuous => total + k * informed_at,
            },
            ModelSpec::SocialPopulation(_) => unreachable!("rejected before simulation"),
        })
    }
}

fn individual_sim<'a>(
    model: &ModelSpec,
    eta: &'a IntensityProfile,
    ch: &'a Channel,
    bid: f64,
    cfg: &SimConfig,
) -> Result<IndividualSim<'a>> {
    if matches!(model, ModelSpec::SocialPopulation(_)) {
        return Err(Error::invalid("model", "use simulate_population for the population model"));
    }
    if !(bid >= 0.0 && bid.is_finite()) {
        return Err(Error::invalid("bid", format!("must be a finite value >= 0, got {bid}")));
    }
    Ok(IndividualSim {
        model: *model,
        eta,
        ch,
        bid,
        cap: cfg.max_events_per_path(),
        accrual: cfg.accrual().unwrap_or(Accrual::Jumps),
    })
}

/// Monte Carlo estimate of the purchase or subscription gain, or of the
/// social discount cost, under the constant bid `bid`.
pub fn simulate_individual(
    model: &ModelSpec,
    eta: &IntensityProfile,
    ch: &Channel,
    bid: f64,
    cfg: &SimConfig,
) -> Result<SimEstimate> {
    let sim = individual_sim(model, eta, ch, bid, cfg)?;
    let seed = cfg.seed();
    let values = try_map_indexed(cfg.paths() as usize, |i| sim.path(seed, i as u64, |_| {}))?;
    Ok(SimEstimate::from_samples(&values))
}

/// [`simulate_individual`] run sequentially, writing every event as a TSV line.
pub fn simulate_individual_logged<W: Write>(
    model: &ModelSpec,
    eta: &IntensityProfile,
    ch: &Channel,
    bid: f64,
    cfg: &SimConfig,
    out: &mut W,
) -> Result<SimEstimate> {
    let sim = individual_sim(model, eta, ch, bid, cfg)?;
    let mut logger = TsvLog::new(out)?;
    let mut values = Vec::with_capacity(cfg.paths() as usize);
    for i in 0..cfg.paths() {
        values.push(sim.path(cfg.seed(), i, |e| logger.push(&e))?);
    }
    logger.finish()?;
    Ok(SimEstimate::from_samples(&values))
}

/// One estimate per bid, sharing random numbers across bids.
pub fn estimate_value_curve(
    model: &ModelSpec,
    eta: &IntensityProfile,
    ch: &Channel,
    bids: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<SimEstimate>> {
    if bids.is_empty() {
        return Err(Error::invalid("bids", "must not be empty"));
    }
    bids.iter().map(|&b| simulate_individual(model, eta, ch, b, cfg)).collect()
}

struct TsvLog<'w, W: Write> {
    out: &'w mut W,
    err: Option<std::io::Error>,
}

impl<'w, W: Write> TsvLog<'w, W> {
    fn new(out: &'w mut W) -> Result<Self> {
        writeln!(out, "{EVENT_LOG_HEADER}").map_err(io_err)?;
        Ok(Self { out, err: None })
    }

    fn push(&mut self, e: &Event) {
        if self.err.is_none() {
            if let Err(err) = writeln!(self.out, "{}", e.tsv()) {
                self.err = Some(err);
            }
        }
    }

    fn finish(self) -> Result<()> {
        match self.err {
            Some(e) => Err(io_err(e)),
            None => self.out.flush().map_err(io_err),
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::invalid("event_log", e.to_string())
}

/// Informed flags plus the list of uninformed individuals, with O(1)
/// uniform selection and removal.
struct Population {
    informed: Vec<bool>,
    uninformed: Vec<usize>,
    slot: Vec<usize>,
}

impl Population {
    fn new(m: usize) -> Self {
        Self { informed: vec![false; m], uninformed: (0..m).collect(), slot: (0..m).collect() }
    }

    fn inform(&mut self, who: usize) {
        if self.informed[who] {
            return;
        }
        self.informed[who] = true;
        let s = self.slot[who];
        let last = *self.uninformed.last().unwrap();
        self.uninformed.swap_remove(s);
        if last != who {
            self.slot[last] = s;
        }
    }

    fn pick_uninformed(&self, rng: &mut ChaCha8Rng) -> usize {
        self.uninformed[rng.random_range(0..self.uninformed.len())]
    }
}

#[derive(Clone, Copy)]
struct PopulationSim<'a> {
    spec: SocialPopulation,
    eta: &'a IntensityProfile,
    ch_t: &'a Channel,
    ch_nt: &'a Channel,
    policy: &'a PolicyTable,
    cap: u64,
    accrual: Accrual,
}

impl PopulationSim<'_> {
    fn path<L: FnMut(Event)>(&self, seed: u64, path: u64, mut log: L) -> Result<f64> {
        let mut rng = path_rng(seed, path);
        let m = self.spec.m();
        let mf = m as f64;
        let k_cost = self.spec.k();
        let (eta_i, eta_t, eta_nt, eta_s) = (self.eta.eta_i(), self.eta.eta_t(), self.eta.eta_nt(), self.eta.eta_s());
        let mut pop = Population::new(m);
        let mut t = 0.0;
        let mut cost = 0.0;
        let mut events = 0u64;

        while !pop.uninformed.is_empty() {
            let u = pop.uninformed.len() as f64;
            let k = m - pop.uninformed.len();
            let row = self.policy.rows()[k];
            let r_info = eta_i * u;
            let r_social = eta_s * (k as f64 / mf) * u;
            let r_t = eta_t * u;
            let r_nt = eta_nt * mf;
            let r_danger = if self.accrual == Accrual::Jumps { u } else { 0.0 };
            let rate = r_info + r_social + r_t + r_nt + r_danger;
            if rate == 0.0 {
                return Err(Error::ZeroDenominator { what: "population event rate" });
            }
            let dt = exp_draw(&mut rng, rate);
            if self.accrual == Accrual::Continuous {
                cost += k_cost * u * dt;
            }
            t += dt;
            events += 1;
            if events > self.cap {
                return Err(Error::EventCapExceeded { path, cap: self.cap });
            }

            let x = uniform(&mut rng) * rate;
            let mut ev = Event { path, time: t, kind: EventKind::InfoSite, individual: 0, won: false, payment: 0.0 };
            if x < r_info + r_social {
                ev.kind = if x < r_info { EventKind::InfoSite } else { EventKind::Social };
                ev.individual = pop.pick_uninformed(&mut rng);
                pop.inform(ev.individual);
            } else if x < r_info + r_social + r_t {
                ev.kind = EventKind::TargetedView;
                ev.individual = pop.pick_uninformed(&mut rng);
                let b = self.ch_t.dist.quantile(uniform(&mut rng));
                if row.bid_t >= b {
                    ev.won = true;
                    ev.payment = self.ch_t.rule.payment(row.bid_t, b);
                    cost += ev.payment;
                    pop.inform(ev.individual);
                }
            } else if x < r_info + r_social + r_t + r_nt {
                ev.kind = EventKind::NontargetedView;
                ev.individual = rng.random_range(0..m);
                let b = self.ch_nt.dist.quantile(uniform(&mut rng));
                if row.bid_nt >= b {
                    ev.won = true;
                    ev.payment = self.ch_nt.rule.payment(row.bid_nt, b);
                    cost += ev.payment;
                    pop.inform(ev.individual);
                }
            } else {
                ev.kind = EventKind::Danger;
                ev.individual = pop.pick_uninformed(&mut rng);
                cost += k_cost;
            }
            log(ev);
        }
        Ok(cost)
    }
}

fn population_sim<'a>(
    spec: &SocialPopulation,
    eta: &'a IntensityProfile,
    ch_t: &'a Channel,
    ch_nt: &'a Channel,
    policy: &'a PolicyTable,
    cfg: &SimConfig,
) -> Result<PopulationSim<'a>> {
    if policy.m() != spec.m() {
        return Err(Error::PolicyMismatch { expected: spec.m(), found: policy.m() });
    }
    Ok(PopulationSim {
        spec: *spec,
        eta,
        ch_t,
        ch_nt,
        policy,
        cap: cfg.max_events_per_path(),
        accrual: cfg.accrual().unwrap_or(Accrual::Continuous),
    })
}

/// Monte Carlo estimate of the total undiscounted cost of a population under
/// a proportion-based policy.
pub fn simulate_population(
    spec: &SocialPopulation,
    eta: &IntensityProfile,
    ch_t: &Channel,
    ch_nt: &Channel,
    policy: &PolicyTable,
    cfg: &SimConfig,
) -> Result<SimEstimate> {
    let sim = population_sim(spec, eta, ch_t, ch_nt, policy, cfg)?;
    let seed = cfg.seed();
    let values = try_map_indexed(cfg.paths() as usize, |i| sim.path(seed, i as u64, |_| {}))?;
    Ok(SimEstimate::from_samples(&values))
}

/// [`simulate_population`] run sequentially, writing every event as a TSV line.
pub fn simulate_population_logged<W: Write>(
    spec: &SocialPopulation,
    eta: &IntensityProfile,
    ch_t: &Channel,
    ch_nt: &Channel,
    policy: &PolicyTable,
    cfg: &SimConfig,
    out: &mut W,
) -> Result<SimEstimate> {
    let sim = population_sim(spec, eta, ch_t, ch_nt, policy, cfg)?;
    let mut logger = TsvLog::new(out)?;
    let mut values = Vec::with_capacity(cfg.paths() as usize);
    for i in 0..cfg.paths() {
        values.push(sim.path(cfg.seed(), i, |e| logger.push(&e))?);
    }
    logger.finish()?;
    Ok(SimEstimate::from_samples(&values))
}
