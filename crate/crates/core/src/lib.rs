//! Event-by-event impairment enumeration for decoy-pulse BB84 links under a
//! photon-number-splitting (PNS) attack.
//!
//! The crate computes, in closed form, how many signal and decoy pulses Eve
//! captures with two photons, how many optical pulses and photodetected bits
//! reach Bob, and from those the key generation rate `R_k` and the two ratios
//! used to judge a design: Bob's signal-to-decoy yield ratio `ρ^y_sd`, which
//! exposes Eve, and Eve's signal-to-decoy two-photon ratio `ρ^e_sd`, which
//! measures how much decoy clutter she has to sort through.
//!
//! Every analytic quantity has a stochastic counterpart in [`monte_carlo`],
//! which simulates slots, photons, splits and detections one event at a time.
//! [`design`] sweeps scenarios and picks a decoy mean; [`report`] renders
//! CSV rows, reference tables and SVG charts.
//!
//! ```
//! use decoy_pns::{enumeration, Scenario};
//!
//! let m = enumeration::metrics(&Scenario::baseline()).unwrap();
//! assert_eq!(format!("{:.2}", m.rho_e_sd), "11.82");
//! assert_eq!(format!("{:.2}", m.rho_y_sd), "6.13");
//! assert_eq!(format!("{:.2e}", m.r_k), "6.08e-5");
//! ```

pub mod config;
pub mod design;
pub mod enumeration;
pub mod monte_carlo;
pub mod photon_stats;
pub mod report;

pub use config::{LinkGeometry, ReceiverParams, Scenario, SourceParams};
pub use enumeration::{Metrics, Ratio};

#[cfg(doctest)]
mod book;
