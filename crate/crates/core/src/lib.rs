//! Optimal bidding in targeted and non-targeted advertising auctions.
//!
//! Individuals browse the web at the jump times of independent Poisson
//! processes. Some visits inform them for free; others open an auction in
//! which the agent bids against the maximal bid `B` of all other bidders.
//! This crate evaluates the closed-form value of constant and
//! proportion-based bidding policies for four advertising models, searches
//! for the smallest optimal bids, and checks every analytic quantity against
//! an event-driven Monte Carlo simulation of the same dynamics.
//!
//! Module map:
//!
//! - [`model`]: validated domain types (bid laws, auction rules, intensities,
//!   model parameters, policy tables, simulation settings).
//! - [`analytic`]: exact value functions, thresholds and closed-form bids.
//! - [`solver`]: optimal-bid search for single individuals and populations.
//! - [`montecarlo`]: exact event-driven simulation used as the oracle.
//! - [`exec`]: data-parallel helpers with a sequential fallback.

pub mod analytic;
pub mod error;
pub mod exec;
pub mod model;
pub mod montecarlo;
pub mod solver;

pub use error::{Error, Result};
pub use model::{
    AuctionRule, BidDistribution, Channel, IntensityProfile, ModelSpec, PolicyRow, PolicyTable,
    Purchase, SimConfig, SimEstimate, SocialDiscount, SocialPopulation, Subscription,
};
