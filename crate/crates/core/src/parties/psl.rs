//! Registrable-domain (eTLD+1) computation under a public-suffix rule set.

use std::collections::HashSet;
use std::net::{IpAddr, Ipv6Addr};

use thiserror::Error;
use url::Url;

static BUNDLED: &str = include_str!("../../data/public_suffix_snapshot.dat");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartyError {
    #[error("cannot extract a host from {0:?}")]
    UnparsableHost(String),
    #[error("{file} line {line}: {message}")]
    BadRecord {
        file: &'static str,
        line: usize,
        message: String,
    },
    #[error("suffix list contains no rules")]
    EmptySuffixList,
    #[error("no initiator and no known CMP to attribute")]
    NoEvidence,
}

/// Parsed public-suffix rules: normal, wildcard (`*.x`) and exception (`!x`).
#[derive(Debug, Clone)]
pub struct SuffixList {
    rules: HashSet<String>,
    wildcards: HashSet<String>,
    exceptions: HashSet<String>,
}

impl Default for SuffixList {
    fn default() -> Self {
        Self::parse(BUNDLED).expect("bundled suffix snapshot is valid")
    }
}

impl SuffixList {
    /// Parses the standard list format. Only the first whitespace-delimited
    /// token of a line is read; `//` lines are comments.
    pub fn parse(text: &str) -> Result<Self, PartyError> {
        let mut list = Self {
            rules: HashSet::new(),
            wildcards: HashSet::new(),
            exceptions: HashSet::new(),
        };
        for line in text.lines() {
            let Some(token) = line.split_whitespace().next() else {
                continue;
            };
            if token.starts_with("//") {
                continue;
            }
            let rule = token.trim_end_matches('.').to_ascii_lowercase();
            if let Some(rest) = rule.strip_prefix('!') {
                list.exceptions.insert(rest.to_owned());
            } else if let Some(rest) = rule.strip_prefix("*.") {
                list.wildcards.insert(rest.to_owned());
            } else {
                list.rules.insert(rule);
            }
        }
        if list.rules.is_empty() && list.wildcards.is_empty() {
            return Err(PartyError::EmptySuffixList);
        }
        Ok(list)
    }

    pub fn len(&self) -> usize {
        self.rules.len() + self.wildcards.len() + self.exceptions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of trailing labels forming the public suffix of `labels`.
    fn suffix_len(&self, labels: &[&str]) -> usize {
        let n = labels.len();
        for i in 0..n {
            if self.exceptions.contains(&labels[i..].join(".")) {
                return n - i - 1;
            }
        }
        for i in 0..n {
            let candidate = labels[i..].join(".");
            if self.rules.contains(&candidate) {
                return n - i;
            }
            if i + 1 < n && self.wildcards.contains(&labels[i + 1..].join(".")) {
                return n - i;
            }
        }
        1
    }

    /// eTLD+1 of a host or URL. IP literals come back verbatim; a host that
    /// is itself a public suffix is returned unchanged.
    pub fn registrable_domain(&self, host_or_url: &str) -> Result<String, PartyError> {
        let host = extract_host(host_or_url)?;
        if host.parse::<IpAddr>().is_ok() {
            return Ok(host);
        }
        let labels: Vec<&str> = host.split('.').collect();
        if labels.iter().any(|l| l.is_empty()) {
            return Err(PartyError::UnparsableHost(host_or_url.to_owned()));
        }
        let suffix = self.suffix_len(&labels);
        if labels.len() <= suffix {
            return Ok(host);
        }
        Ok(labels[labels.len() - suffix - 1..].join("."))
    }
}

fn extract_host(input: &str) -> Result<String, PartyError> {
    let unparsable = || PartyError::UnparsableHost(input.to_owned());
    let trimmed = input.trim();
    if trimmed.contains("://") {
        let url = Url::parse(trimmed).map_err(|_| unparsable())?;
        return match url.host() {
            Some(url::Host::Domain(d)) => Ok(d.trim_end_matches('.').to_ascii_lowercase()),
            Some(url::Host::Ipv4(ip)) => Ok(ip.to_string()),
            Some(url::Host::Ipv6(ip)) => Ok(ip.to_string()),
            None => Err(unparsable()),
        };
    }
    let authority = trimmed
        .split(['/', '?', '#'])
        .next()
        .unwrap_or_default()
        .rsplit('@')
        .next()
        .unwrap_or_default();
    if let Some(v6) = authority.strip_prefix('[') {
        let inner = v6.split(']').next().unwrap_or_default();
        return inner
            .parse::<Ipv6Addr>()
            .map(|ip| ip.to_string())
            .map_err(|_| unparsable());
    }
    if authority.parse::<Ipv6Addr>().is_ok() {
        return Ok(authority.to_owned());
    }
    let host = authority.split(':').next().unwrap_or_default();
    let host = host.trim_start_matches('.').trim_end_matches('.').to_ascii_lowercase();
    if host.is_empty() || host.contains(char::is_whitespace) {
        return Err(unparsable());
    }
    Ok(host)
}
