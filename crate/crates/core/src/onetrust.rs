//! OneTrust consent values: the `OptanonConsent` cookie and the page-global
//! `OneTrustActiveGroups` variable.

use std::collections::BTreeSet;

use percent_encoding::percent_decode_str;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OPTANON_COOKIE: &str = "OptanonConsent";
pub const ACTIVE_GROUPS_VARIABLE: &str = "OneTrustActiveGroups";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OneTrustError {
    #[error("cookie has no \"groups\" parameter")]
    NoGroupsParameter,
    #[error("malformed groups entry {0:?}")]
    MalformedGroups(String),
    #[error("group {0} is both enabled and disabled")]
    ConflictingGroup(String),
    #[error("cannot compare a {current:?} value with a {baseline:?} baseline")]
    SourceMismatch {
        current: OneTrustSource,
        baseline: OneTrustSource,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OneTrustSource {
    OptanonCookie,
    ActiveGroups,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneTrustConsent {
    pub enabled_groups: BTreeSet<String>,
    pub disabled_groups: BTreeSet<String>,
    /// Decoded `key=value` pairs of the cookie, in order. Empty for
    /// active-groups values.
    pub raw_pairs: Vec<(String, String)>,
    pub source: OneTrustSource,
}

impl OneTrustConsent {
    /// Re-joins `raw_pairs` into the decoded cookie payload.
    pub fn render_pairs(&self) -> String {
        self.raw_pairs
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("&")
    }
}

/// Result of comparing a value against the initial-landing baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineComparison {
    /// Same enabled groups as the baseline.
    Negative,
    /// Strictly more enabled groups than the baseline.
    Positive,
    /// Neither equal nor a superset.
    Changed,
}

fn valid_group_token(token: &str) -> bool {
    !token.is_empty() && !token.contains([',', ':']) && !token.chars().any(char::is_whitespace)
}

pub fn parse_optanon_cookie(value: &str) -> Result<OneTrustConsent, OneTrustError> {
    let decoded = percent_decode_str(value).decode_utf8_lossy();
    let raw_pairs: Vec<(String, String)> = decoded
        .split('&')
        .filter(|p| !p.is_empty())
        .map(|pair| match pair.split_once('=') {
            Some((k, v)) => (k.to_owned(), v.to_owned()),
            None => (pair.to_owned(), String::new()),
        })
        .collect();
    let groups = raw_pairs
        .iter()
        .find(|(k, _)| k == "groups")
        .map(|(_, v)| v.as_str())
        .ok_or(OneTrustError::NoGroupsParameter)?;

    let mut enabled_groups = BTreeSet::new();
    let mut disabled_groups = BTreeSet::new();
    for entry in groups.split(',').filter(|e| !e.is_empty()) {
        let (token, flag) = entry
            .split_once(':')
            .ok_or_else(|| OneTrustError::MalformedGroups(entry.to_owned()))?;
        if !valid_group_token(token) {
            return Err(OneTrustError::MalformedGroups(entry.to_owned()));
        }
        let target = match flag {
            "1" => &mut enabled_groups,
            "0" => &mut disabled_groups,
            _ => return Err(OneTrustError::MalformedGroups(entry.to_owned())),
        };
        target.insert(token.to_owned());
    }
    if let Some(both) = enabled_groups.intersection(&disabled_groups).next() {
        return Err(OneTrustError::ConflictingGroup(both.clone()));
    }
    Ok(OneTrustConsent {
        enabled_groups,
        disabled_groups,
        raw_pairs,
        source: OneTrustSource::OptanonCookie,
    })
}

/// Parses the comma-separated `OneTrustActiveGroups` value. Every listed
/// group is enabled; empty tokens are skipped.
pub fn parse_active_groups(value: &str) -> OneTrustConsent {
    OneTrustConsent {
        enabled_groups: value
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_owned)
            .collect(),
        disabled_groups: BTreeSet::new(),
        raw_pairs: Vec::new(),
        source: OneTrustSource::ActiveGroups,
    }
}

pub fn compare_to_baseline(
    current: &OneTrustConsent,
    baseline: &OneTrustConsent,
) -> Result<BaselineComparison, OneTrustError> {
    if current.source != baseline.source {
        return Err(OneTrustError::SourceMismatch {
            current: current.source,
            baseline: baseline.source,
        });
    }
    Ok(compare_groups(&current.enabled_groups, &baseline.enabled_groups))
}

pub(crate) fn compare_groups(current: &BTreeSet<String>, baseline: &BTreeSet<String>) -> BaselineComparison {
    if current == baseline {
        BaselineComparison::Negative
    } else if current.is_superset(baseline) {
        BaselineComparison::Positive
    } else {
        BaselineComparison::Changed
    }
}
