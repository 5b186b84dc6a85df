//! Auditing consent revocation on websites.
//!
//! The crate decodes the consent artifacts that consent-management
//! platforms leave in the browser and on the wire, then checks recorded
//! crawl sessions against the legal requirements for revoking consent.

pub mod capture;
pub mod consent;
pub mod config;
pub mod consistency;
pub mod cookies;
pub mod finding;
pub mod interface;
pub mod netlog;
pub mod onetrust;
pub mod parties;
pub mod report;
pub mod tcs;
pub mod thirdparty;
