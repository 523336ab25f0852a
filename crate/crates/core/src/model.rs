//! Domain types shared by the analytic, solver and simulation layers.
//!
//! Every type with an invariant is built through a validating constructor;
//! JSON deserialization goes through the same constructors, so a value that
//! exists is a valid value. Constructors never clamp: a violation is reported
//! as [`Error::InvalidParameter`] naming the field.

use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::pairwise_sum;

/// Tolerance on the total mass of a discrete law.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

fn check_finite(field: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite, got {x}")))
    }
}

fn check_nonneg(field: &str, x: f64) -> Result<()> {
    check_finite(field, x)?;
    if x < 0.0 {
        return Err(Error::invalid(field, format!("must be >= 0, got {x}")));
    }
    Ok(())
}

fn check_positive(field: &str, x: f64) -> Result<()> {
    check_finite(field, x)?;
    if x <= 0.0 {
        return Err(Error::invalid(field, format!("must be > 0, got {x}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Competitor bid law
// ---------------------------------------------------------------------------

/// Law of the maximal competing bid `B` in one auction.
///
/// Supports exact evaluation of `P[B <= b]` and of the truncated first moment
/// `E[B 1{B <= b}]`; no functional ever samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBid", into = "RawBid")]
pub struct BidDistribution {
    law: Law,
}

#[derive(Debug, Clone, PartialEq)]
enum Law {
    Constant(f64),
    Uniform { lower: f64, upper: f64 },
    Discrete(DiscreteLaw),
}

#[derive(Debug, Clone, PartialEq)]
struct DiscreteLaw {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    /// `cdf[j] = P[B <= atoms[j]]`, built from the top so the last entry is 1.
    cdf: Vec<f64>,
    /// `moment[j] = E[B 1{B <= atoms[j]}]`.
    moment: Vec<f64>,
}

/// Borrowed view of a [`BidDistribution`] for pattern matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape<'a> {
    Constant(f64),
    Uniform { lower: f64, upper: f64 },
    Discrete { atoms: &'a [f64], weights: &'a [f64] },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawBid {
    Constant { value: f64 },
    Uniform { lower: f64, upper: f64 },
    Discrete { atoms: Vec<f64>, weights: Vec<f64> },
}

impl TryFrom<RawBid> for BidDistribution {
    type Error = Error;

    fn try_from(raw: RawBid) -> Result<Self> {
        match raw {
            RawBid::Constant { value } => Self::constant(value),
            RawBid::Uniform { lower, upper } => Self::uniform(lower, upper),
            RawBid::Discrete { atoms, weights } => Self::discrete(atoms, weights),
        }
    }
}

impl From<BidDistribution> for RawBid {
    fn from(d: BidDistribution) -> Self {
        match d.law {
            Law::Constant(value) => RawBid::Constant { value },
            Law::Uniform { lower, upper } => RawBid::Uniform { lower, upper },
            Law::Discrete(l) => RawBid::Discrete { atoms: l.atoms, weights: l.weights },
        }
    }
}

impl BidDistribution {
    pub fn constant(value: f64) -> Result<Self> {
        check_nonneg("value", value)?;
        Ok(Self { law: Law::Constant(value) })
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        check_nonneg("lower", lower)?;
        check_finite("upper", upper)?;
        if lower >= upper {
            return Err(Error::invalid("upper", format!("must exceed lower = {lower}, got {upper}")));
        }
        Ok(Self { law: Law::Uniform { lower, upper } })
    }

    pub fn discrete(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("atoms", "must not be empty"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::invalid(
                "weights",
                format!("expected {} weights, got {}", atoms.len(), weights.len()),
            ));
        }
        for &a in &atoms {
            check_nonneg("atoms", a)?;
        }
        if let Some(w) = atoms.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "atoms",
                format!("must be strictly ascending, found {} before {}", w[0], w[1]),
            ));
        }
        for &w in &weights {
            check_positive("weights", w)?;
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid("weights", format!("must sum to 1, got {total}")));
        }

        let n = atoms.len();
        let mut cdf = vec![0.0; n];
        let mut above = 0.0_f64;
        for j in (0..n).rev() {
            cdf[j] = (1.0 - above).max(0.0);
            above += weights[j];
        }
        let mut moment = Vec::with_capacity(n);
        let mut acc = 0.0;
        for (a, w) in atoms.iter().zip(&weights) {
            acc += a * w;
            moment.push(acc);
        }
        Ok(Self { law: Law::Discrete(DiscreteLaw { atoms, weights, cdf, moment }) })
    }

    /// Empirical law of observed competitor bids; repeated values are merged.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("samples", "must not be empty"));
        }
        for &s in samples {
            check_nonneg("samples", s)?;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut atoms: Vec<f64> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for x in sorted {
            match atoms.last() {
                Some(&last) if last == x => *counts.last_mut().unwrap() += 1,
                _ => {
                    atoms.push(x);
                    counts.push(1);
                }
            }
        }
        let weights = counts.into_iter().map(|c| c as f64 / n).collect();
        Self::discrete(atoms, weights)
    }

    pub fn shape(&self) -> Shape<'_> {
        match &self.law {
            Law::Constant(v) => Shape::Constant(*v),
            Law::Uniform { lower, upper } => Shape::Uniform { lower: *lower, upper: *upper },
            Law::Discrete(l) => Shape::Discrete { atoms: &l.atoms, weights: &l.weights },
        }
    }

    /// `P[B <= b]`: the agent wins ties.
    pub fn cdf(&self, b: f64) -> f64 {
        match &self.law {
            Law::Constant(v) => {
                if b >= *v {
                    1.0
                } else {
                    0.0
                }
            }
            Law::Uniform { lower, upper } => ((b - lower) / (upper - lower)).clamp(0.0, 1.0),
            Law::Discrete(l) => match l.count_at_or_below(b) {
                0 => 0.0,
                i => l.cdf[i - 1],
            },
        }
    }

    /// `E[B 1{B <= b}]`.
    pub fn truncated_mean(&self, b: f64) -> f64 {
        match &self.law {
            Law::Constant(v) => {
                if b >= *v {
                    *v
                } else {
                    0.0
                }
            }
            Law::Uniform { lower, upper } => {
                if b <= *lower {
                    0.0
                } else if b >= *upper {
                    0.5 * (lower + upper)
                } else {
                    (b - lower) * (b + lower) / (2.0 * (upper - lower))
                }
            }
            Law::Discrete(l) => match l.count_at_or_below(b) {
                0 => 0.0,
                i => l.moment[i - 1],
            },
        }
    }

    pub fn support_min(&self) -> f64 {
        match &self.law {
            Law::Constant(v) => *v,
            Law::Uniform { lower, .. } => *lower,
            Law::Discrete(l) => l.atoms[0],
        }
    }

    pub fn support_max(&self) -> f64 {
        match &self.law {
            Law::Constant(v) => *v,
            Law::Uniform { upper, .. } => *upper,
            Law::Discrete(l) => *l.atoms.last().unwrap(),
        }
    }

    /// Draws one competitor bid by inversion of a uniform variate `u` in [0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match &self.law {
            Law::Constant(v) => *v,
            Law::Uniform { lower, upper } => lower + u * (upper - lower),
            Law::Discrete(l) => {
                let j = l.cdf.partition_point(|&c| c <= u).min(l.atoms.len() - 1);
                l.atoms[j]
            }
        }
    }
}

impl DiscreteLaw {
    fn count_at_or_below(&self, b: f64) -> usize {
        self.atoms.partition_point(|&a| a <= b)
    }
}

// ---------------------------------------------------------------------------
// Auction venue
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuctionRule {
    /// The winner pays its own bid.
    FirstPrice,
    /// The winner pays the bid it beat.
    SecondPrice,
}

impl AuctionRule {
    /// Payment `c(b, B)` of a winning bid `b` against competitor bid `B`.
    pub fn payment(self, bid: f64, competitor: f64) -> f64 {
        match self {
            AuctionRule::FirstPrice => bid,
            AuctionRule::SecondPrice => competitor,
        }
    }
}

/// One auction venue: the competitor law together with its payment rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub dist: BidDistribution,
    pub rule: AuctionRule,
}

impl Channel {
    pub fn new(dist: BidDistribution, rule: AuctionRule) -> Self {
        Self { dist, rule }
    }

    pub fn first_price(dist: BidDistribution) -> Self {
        Self::new(dist, AuctionRule::FirstPrice)
    }

    pub fn second_price(dist: BidDistribution) -> Self {
        Self::new(dist, AuctionRule::SecondPrice)
    }
}

// ---------------------------------------------------------------------------
// Browsing intensities
// ---------------------------------------------------------------------------

/// Poisson rates of the browsing processes. The danger-event rate is fixed
/// to 1 and not stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntensity", into = "RawIntensity")]
pub struct IntensityProfile {
    eta_i: f64,
    eta_t: f64,
    eta_nt: f64,
    eta_s: f64,
}

#[derive(Serialize, Deserialize)]
struct RawIntensity {
    #[serde(rename = "eta_I")]
    eta_i: f64,
    #[serde(rename = "eta_T", default)]
    eta_t: f64,
    #[serde(rename = "eta_NT", default)]
    eta_nt: f64,
    #[serde(rename = "eta_S", default)]
    eta_s: f64,
}

impl TryFrom<RawIntensity> for IntensityProfile {
    type Error = Error;

    fn try_from(r: RawIntensity) -> Result<Self> {
        Self::new(r.eta_i, r.eta_t, r.eta_nt, r.eta_s)
    }
}

impl From<IntensityProfile> for RawIntensity {
    fn from(p: IntensityProfile) -> Self {
        RawIntensity { eta_i: p.eta_i, eta_t: p.eta_t, eta_nt: p.eta_nt, eta_s: p.eta_s }
    }
}

impl IntensityProfile {
    pub fn new(eta_i: f64, eta_t: f64, eta_nt: f64, eta_s: f64) -> Result<Self> {
        check_nonneg("eta_I", eta_i)?;
        check_nonneg("eta_T", eta_t)?;
        check_nonneg("eta_NT", eta_nt)?;
        check_nonneg("eta_S", eta_s)?;
        Ok(Self { eta_i, eta_t, eta_nt, eta_s })
    }

    /// Single-individual profile: no non-targeted views, no social contacts.
    pub fn individual(eta_i: f64, eta_t: f64) -> Result<Self> {
        Self::new(eta_i, eta_t, 0.0, 0.0)
    }

    pub fn eta_i(&self) -> f64 {
        self.eta_i
    }

    pub fn eta_t(&self) -> f64 {
        self.eta_t
    }

    pub fn eta_nt(&self) -> f64 {
        self.eta_nt
    }

    pub fn eta_s(&self) -> f64 {
        self.eta_s
    }

    /// Copy with one rate replaced, addressed by its JSON name.
    pub fn with(&self, name: &str, value: f64) -> Result<Self> {
        let mut r = RawIntensity::from(*self);
        match name {
            "eta_I" => r.eta_i = value,
            "eta_T" => r.eta_t = value,
            "eta_NT" => r.eta_nt = value,
            "eta_S" => r.eta_s = value,
            _ => return Err(Error::invalid(name, "not an intensity field")),
        }
        Self::try_from(r)
    }
}

// ---------------------------------------------------------------------------
// Model parameters
// ---------------------------------------------------------------------------

macro_rules! discounted_model {
    ($name:ident, $raw:literal, $rho_check:ident, $doc:literal) => {
        #[doc = $doc]
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        #[serde(try_from = $raw, into = $raw)]
        pub struct $name {
            k: f64,
            rho: f64,
        }

        impl $name {
            pub fn new(k: f64, rho: f64) -> Result<Self> {
                check_positive("K", k)?;
                $rho_check("rho", rho)?;
                Ok(Self { k, rho })
            }

            pub fn k(&self) -> f64 {
                self.k
            }

            pub fn rho(&self) -> f64 {
                self.rho
            }
        }

        impl TryFrom<RawDiscounted> for $name {
            type Error = Error;

            fn try_from(r: RawDiscounted) -> Result<Self> {
                Self::new(r.k, r.rho)
            }
        }

        impl From<$name> for RawDiscounted {
            fn from(m: $name) -> Self {
                RawDiscounted { k: m.k, rho: m.rho }
            }
        }
    };
}

#[derive(Serialize, Deserialize)]
struct RawDiscounted {
    #[serde(rename = "K")]
    k: f64,
    rho: f64,
}

discounted_model!(
    Purchase,
    "RawDiscounted",
    check_positive,
    "One-off payment `K` when the individual gets informed, discounted at rate `rho > 0`."
);
discounted_model!(
    Subscription,
    "RawDiscounted",
    check_positive,
    "Payment `K` per unit period from the time of information on, discounted at `rho > 0`."
);
discounted_model!(
    SocialDiscount,
    "RawDiscounted",
    check_nonneg,
    "Cost `K` per danger event while uninformed, discounted at `rho >= 0`."
);

impl Subscription {
    /// Lump sum equivalent to the discounted stream of payments.
    pub fn effective_purchase(&self) -> Purchase {
        Purchase { k: self.k / (1.0 - (-self.rho).exp()), rho: self.rho }
    }
}

/// `M` individuals, undiscounted danger cost `K` per uninformed individual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPopulation", into = "RawPopulation")]
pub struct SocialPopulation {
    k: f64,
    m: usize,
}

#[derive(Serialize, Deserialize)]
struct RawPopulation {
    #[serde(rename = "K")]
    k: f64,
    #[serde(rename = "M")]
    m: usize,
}

impl TryFrom<RawPopulation> for SocialPopulation {
    type Error = Error;

    fn try_from(r: RawPopulation) -> Result<Self> {
        Self::new(r.k, r.m)
    }
}

impl From<SocialPopulation> for RawPopulation {
    fn from(s: SocialPopulation) -> Self {
        RawPopulation { k: s.k, m: s.m }
    }
}

impl SocialPopulation {
    pub fn new(k: f64, m: usize) -> Result<Self> {
        check_positive("K", k)?;
        if m == 0 {
            return Err(Error::invalid("M", "must be >= 1"));
        }
        Ok(Self { k, m })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Purchase(Purchase),
    Subscription(Subscription),
    SocialDiscount(SocialDiscount),
    SocialPopulation(SocialPopulation),
}

impl ModelSpec {
    pub fn k(&self) -> f64 {
        match self {
            ModelSpec::Purchase(m) => m.k(),
            ModelSpec::Subscription(m) => m.k(),
            ModelSpec::SocialDiscount(m) => m.k(),
            ModelSpec::SocialPopulation(m) => m.k(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Purchase(_) => "purchase",
            ModelSpec::Subscription(_) => "subscription",
            ModelSpec::SocialDiscount(_) => "social_discount",
            ModelSpec::SocialPopulation(_) => "social_population",
        }
    }

    /// Copy with one parameter replaced (`K`, `rho` or `M`).
    pub fn with(&self, name: &str, value: f64) -> Result<Self> {
        let not_here = || Error::invalid(name, format!("not a parameter of the {} model", self.name()));
        Ok(match (*self, name) {
            (ModelSpec::Purchase(m), "K") => ModelSpec::Purchase(Purchase::new(value, m.rho)?),
            (ModelSpec::Purchase(m), "rho") => ModelSpec::Purchase(Purchase::new(m.k, value)?),
            (ModelSpec::Subscription(m), "K") => ModelSpec::Subscription(Subscription::new(value, m.rho)?),
            (ModelSpec::Subscription(m), "rho") => ModelSpec::Subscription(Subscription::new(m.k, value)?),
            (ModelSpec::SocialDiscount(m), "K") => ModelSpec::SocialDiscount(SocialDiscount::new(value, m.rho)?),
            (ModelSpec::SocialDiscount(m), "rho") => ModelSpec::SocialDiscount(SocialDiscount::new(m.k, value)?),
            (ModelSpec::SocialPopulation(m), "K") => ModelSpec::SocialPopulation(SocialPopulation::new(value, m.m)?),
            (ModelSpec::SocialPopulation(m), "M") => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::invalid("M", format!("must be a positive integer, got {value}")));
                }
                ModelSpec::SocialPopulation(SocialPopulation::new(m.k, value as usize)?)
            }
            _ => return Err(not_here()),
        })
    }
}

// ---------------------------------------------------------------------------
// Proportion-based policy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub p: f64,
    #[serde(rename = "bid_T")]
    pub bid_t: f64,
    #[serde(rename = "bid_NT")]
    pub bid_nt: f64,
    pub v: f64,
}

/// Bids indexed by the informed proportion `p = k / M`, `k = 0..M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy", into = "RawPolicy")]
pub struct PolicyTable {
    m: usize,
    rows: Vec<PolicyRow>,
}

#[derive(Serialize, Deserialize)]
struct RawPolicy {
    #[serde(rename = "M")]
    m: usize,
    rows: Vec<PolicyRow>,
}

impl TryFrom<RawPolicy> for PolicyTable {
    type Error = Error;

    fn try_from(r: RawPolicy) -> Result<Self> {
        Self::new(r.m, r.rows)
    }
}

impl From<PolicyTable> for RawPolicy {
    fn from(t: PolicyTable) -> Self {
        RawPolicy { m: t.m, rows: t.rows }
    }
}

pub const CSV_HEADER: [&str; 4] = ["p", "bid_T", "bid_NT", "v"];

impl PolicyTable {
    pub fn new(m: usize, rows: Vec<PolicyRow>) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("M", "must be >= 1"));
        }
        if rows.len() != m {
            return Err(Error::invalid("rows", format!("expected {m} rows, got {}", rows.len())));
        }
        for (k, row) in rows.iter().enumerate() {
            let p = k as f64 / m as f64;
            if (row.p - p).abs() > 1e-12 {
                return Err(Error::invalid("p", format!("row {k} must have p = {p}, got {}", row.p)));
            }
            check_nonneg("bid_T", row.bid_t)?;
            check_nonneg("bid_NT", row.bid_nt)?;
            check_finite("v", row.v)?;
        }
        Ok(Self { m, rows })
    }

    /// Table with the same bids at every proportion (values left at 0).
    pub fn constant(m: usize, bid_t: f64, bid_nt: f64) -> Result<Self> {
        let rows = (0..m)
            .map(|k| PolicyRow { p: k as f64 / m as f64, bid_t, bid_nt, v: 0.0 })
            .collect();
        Self::new(m, rows)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rows(&self) -> &[PolicyRow] {
        &self.rows
    }

    /// Sum of the per-row values.
    pub fn total(&self) -> f64 {
        let vs: Vec<f64> = self.rows.iter().map(|r| r.v).collect();
        pairwise_sum(&vs)
    }

    /// Copy with every bid multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let rows = self
            .rows
            .iter()
            .map(|r| PolicyRow { bid_t: r.bid_t * factor, bid_nt: r.bid_nt * factor, ..*r })
            .collect();
        Self::new(self.m, rows)
    }

    /// Checks `bid <= K / (eta_I + p eta_S)` on every row.
    pub fn check_bounds(&self, k: f64, eta: &IntensityProfile) -> Result<()> {
        for row in &self.rows {
            let bound = k / (eta.eta_i() + row.p * eta.eta_s());
            let slack = 1e-12 * bound.max(1.0);
            if row.bid_t > bound + slack {
                return Err(Error::invalid("bid_T", format!("{} exceeds {bound} at p = {}", row.bid_t, row.p)));
            }
            if row.bid_nt > bound + slack {
                return Err(Error::invalid("bid_NT", format!("{} exceeds {bound} at p = {}", row.bid_nt, row.p)));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<()> {
        let fail = |e: csv::Error| Error::PolicyFormat(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER).map_err(fail)?;
        for r in &self.rows {
            w.write_record([r.p, r.bid_t, r.bid_nt, r.v].map(format_sig17)).map_err(fail)?;
        }
        w.flush().map_err(|e| Error::PolicyFormat(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }

    /// Reads a table with header `p,bid_T,bid_NT,v`; `M` is the row count.
    pub fn read_csv<R: io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(|e| Error::PolicyFormat(e.to_string()))?.clone();
        if header.iter().map(str::trim).ne(CSV_HEADER) {
            return Err(Error::PolicyFormat(format!(
                "expected header {}, got {}",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for rec in r.deserialize::<PolicyRow>() {
            rows.push(rec.map_err(|e| Error::PolicyFormat(e.to_string()))?);
        }
        Self::new(rows.len(), rows)
    }
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn format_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------------
// Simulation settings and results
// ---------------------------------------------------------------------------

/// How the danger cost is charged in simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accrual {
    /// Simulate the rate-1 danger process and charge `K` at each jump.
    Jumps,
    /// Integrate the (discounted) cost rate `K` exactly between events.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSim", into = "RawSim")]
pub struct SimConfig {
    paths: u64,
    seed: u64,
    max_events_per_path: u64,
    accrual: Option<Accrual>,
}

#[derive(Serialize, Deserialize)]
struct RawSim {
    paths: u64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_event_cap")]
    max_events_per_path: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    accrual: Option<Accrual>,
}

fn default_event_cap() -> u64 {
    SimConfig::DEFAULT_EVENT_CAP
}

impl TryFrom<RawSim> for SimConfig {
    type Error = Error;

    fn try_from(r: RawSim) -> Result<Self> {
        Self::new(r.paths, r.seed).and_then(|c| c.with_event_cap(r.max_events_per_path)).map(|c| c.with_accrual(r.accrual))
    }
}

impl From<SimConfig> for RawSim {
    fn from(c: SimConfig) -> Self {
        RawSim { paths: c.paths, seed: c.seed, max_events_per_path: c.max_events_per_path, accrual: c.accrual }
    }
}

impl SimConfig {
    pub const DEFAULT_EVENT_CAP: u64 = 10_000_000;

    pub fn new(paths: u64, seed: u64) -> Result<Self> {
        if paths == 0 {
            return Err(Error::invalid("paths", "must be >= 1"));
        }
        Ok(Self { paths, seed, max_events_per_path: Self::DEFAULT_EVENT_CAP, accrual: None })
    }

    pub fn with_event_cap(mut self, cap: u64) -> Result<Self> {
        if cap == 0 {
            return Err(Error::invalid("max_events_per_path", "must be >= 1"));
        }
        self.max_events_per_path = cap;
        Ok(self)
    }

    /// `None` keeps each simulator's default (jumps for a single individual,
    /// continuous accrual for a population).
    pub fn with_accrual(mut self, accrual: Option<Accrual>) -> Self {
        self.accrual = accrual;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_paths(self, paths: u64) -> Result<Self> {
        Self { paths: 1, ..self }.checked_paths(paths)
    }

    fn checked_paths(mut self, paths: u64) -> Result<Self> {
        if paths == 0 {
            return Err(Error::invalid("paths", "must be >= 1"));
        }
        self.paths = paths;
        Ok(self)
    }

    pub fn paths(&self) -> u64 {
        self.paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn max_events_per_path(&self) -> u64 {
        self.max_events_per_path
    }

    pub fn accrual(&self) -> Option<Accrual> {
        self.accrual
    }
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub paths: u64,
}

impl SimEstimate {
    /// Mean and `sample std / sqrt(n)` of per-path outcomes, summed pairwise
    /// in the given order.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        assert!(n > 0, "estimate needs at least one path");
        let mean = pairwise_sum(samples) / n as f64;
        let std_error = if n > 1 {
            let sq: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
            (pairwise_sum(&sq) / (n as f64 - 1.0)).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error, paths: n as u64 }
    }

    /// `(mean - reference) / std_error`; zero when both agree exactly.
    pub fn z_score(&self, reference: f64) -> f64 {
        let diff = self.mean - reference;
        if diff == 0.0 {
            0.0
        } else {
            diff / self.std_error
        }
    }
}
