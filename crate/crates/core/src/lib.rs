//! Quality-driven data market engine.
//!
//! Relations are scored on accuracy, completeness, timeliness and consistency;
//! query prices float with buyer-weighted quality against a market baseline;
//! and a buyer / market / trusted-third-party protocol hides exact prices
//! behind exponent encryption while keeping every charge verifiable.

pub mod quality;
pub mod relation;
pub mod pricing;
pub mod groupcrypto;
pub mod protocol;
pub mod sim;
