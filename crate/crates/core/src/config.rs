//! Everything an audit run can be configured with, and loading it from
//! files.

use std::fs;
use std::path::Path;

use chrono::TimeDelta;
use thiserror::Error;

use crate::consent::{ConsentModelError, PurposeTable};
use crate::consistency::DEFAULT_GRACE_WINDOW_SECONDS;
use crate::cookies::{CookieClassMap, CookieMapError, CookieOverrides};
use crate::netlog::ScanOptions;
use crate::parties::{CmpRegistry, FirstPartyAliases, PartyError, PartyRegistry, SuffixList, TrackingDomains};

static BUNDLED_COOKIE_CLASSES: &str = include_str!("../data/cookie_classes.csv");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("grace window must be a non-negative number of seconds, got {0}")]
    BadGraceWindow(f64),
}

#[derive(Debug, Clone)]
pub struct AuditConfig {
    /// How long after a stage event stale consent in traffic is tolerated.
    pub grace_window: TimeDelta,
    pub registry: PartyRegistry,
    pub cookie_classes: CookieClassMap,
    pub cookie_overrides: CookieOverrides,
    pub purposes: PurposeTable,
    pub scan: ScanOptions,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            grace_window: TimeDelta::seconds(DEFAULT_GRACE_WINDOW_SECONDS),
            registry: PartyRegistry::default(),
            cookie_classes: bundled_cookie_classes(),
            cookie_overrides: CookieOverrides::default(),
            purposes: PurposeTable::default(),
            scan: ScanOptions::default(),
        }
    }
}

pub fn bundled_cookie_classes() -> CookieClassMap {
    CookieClassMap::parse(BUNDLED_COOKIE_CLASSES).expect("bundled cookie classes are valid")
}

pub fn grace_window_from_seconds(seconds: f64) -> Result<TimeDelta, ConfigError> {
    if !seconds.is_finite() || seconds < 0.0 {
        return Err(ConfigError::BadGraceWindow(seconds));
    }
    Ok(TimeDelta::milliseconds((seconds * 1000.0).round() as i64))
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

impl AuditConfig {
    pub fn load_cookie_classes(&mut self, path: &Path) -> Result<(), ConfigError> {
        self.cookie_classes = CookieClassMap::parse(&read(path)?).map_err(|e: CookieMapError| parse_err(path, e))?;
        Ok(())
    }

    pub fn load_cookie_overrides(&mut self, path: &Path) -> Result<(), ConfigError> {
        self.cookie_overrides = CookieOverrides::parse(&read(path)?).map_err(|e| parse_err(path, e))?;
        Ok(())
    }

    pub fn load_cmp_list(&mut self, path: &Path) -> Result<(), ConfigError> {
        self.registry.cmps = CmpRegistry::parse(&read(path)?).map_err(|e: PartyError| parse_err(path, e))?;
        Ok(())
    }

    pub fn load_suffix_list(&mut self, path: &Path) -> Result<(), ConfigError> {
        self.registry.suffixes = SuffixList::parse(&read(path)?).map_err(|e| parse_err(path, e))?;
        Ok(())
    }

    pub fn load_tracking_domains(&mut self, path: &Path) -> Result<(), ConfigError> {
        self.registry.tracking = TrackingDomains::parse(&read(path)?);
        Ok(())
    }

    pub fn load_first_party_aliases(&mut self, path: &Path) -> Result<(), ConfigError> {
        self.registry.aliases = FirstPartyAliases::parse(&read(path)?).map_err(|e| parse_err(path, e))?;
        Ok(())
    }

    pub fn load_purpose_overrides(&mut self, path: &Path) -> Result<(), ConfigError> {
        self.purposes = PurposeTable::default()
            .with_overrides(&read(path)?)
            .map_err(|e: ConsentModelError| parse_err(path, e))?;
        Ok(())
    }
}
