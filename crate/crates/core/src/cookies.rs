//! Advertising and analytics (AA) cookies per stage, using an externally
//! produced cookie classification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::{CaptureSession, CookieRecord, Stage};
use crate::consent::LegalRule;
use crate::finding::{Finding, FindingKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CookieMapError {
    #[error("{file} line {line}: {message}")]
    BadRecord {
        file: &'static str,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CookieClass {
    Necessary,
    Functional,
    Analytics,
    Advertising,
    Unknown,
}

impl CookieClass {
    pub fn is_aa(self) -> bool {
        matches!(self, CookieClass::Analytics | CookieClass::Advertising)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CookieClass::Necessary => "necessary",
            CookieClass::Functional => "functional",
            CookieClass::Analytics => "analytics",
            CookieClass::Advertising => "advertising",
            CookieClass::Unknown => "unknown",
        }
    }
}

impl fmt::Display for CookieClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CookieClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "necessary" => CookieClass::Necessary,
            "functional" | "functionality" => CookieClass::Functional,
            "analytics" => CookieClass::Analytics,
            "advertising" => CookieClass::Advertising,
            "unknown" => CookieClass::Unknown,
            other => return Err(format!("unknown cookie class {other:?}")),
        })
    }
}

fn normalize_domain(domain: &str) -> String {
    domain.trim().trim_start_matches('.').trim_end_matches('.').to_ascii_lowercase()
}

fn domain_matches(cookie_domain: &str, pattern: &str) -> bool {
    cookie_domain == pattern
        || cookie_domain
            .strip_suffix(pattern)
            .is_some_and(|head| head.ends_with('.'))
}

/// Cookie classes keyed by name and domain pattern.
///
/// A pattern matches a cookie domain equal to it or below it. Among the
/// matching patterns for a name the longest wins; entries without a domain
/// (`*` or empty) are the fallback for that name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CookieClassMap {
    by_domain: BTreeMap<String, Vec<(String, CookieClass)>>,
    by_name: BTreeMap<String, CookieClass>,
}

fn parse_records(
    text: &str,
    file: &'static str,
    fields: usize,
) -> Result<Vec<(usize, Vec<String>)>, CookieMapError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let record: Vec<String> = line.split(',').map(|f| f.trim().to_owned()).collect();
        if record.len() != fields {
            return Err(CookieMapError::BadRecord {
                file,
                line: idx + 1,
                message: format!("expected {fields} fields, found {}", record.len()),
            });
        }
        out.push((idx + 1, record));
    }
    Ok(out)
}

impl CookieClassMap {
    /// One `name,domain_pattern,class` record per line; `#` comments.
    pub fn parse(text: &str) -> Result<Self, CookieMapError> {
        let mut map = Self::default();
        for (line, fields) in parse_records(text, "cookie classes", 3)? {
            let class = fields[2].parse().map_err(|message| CookieMapError::BadRecord {
                file: "cookie classes",
                line,
                message,
            })?;
            map.insert(&fields[0], &fields[1], class);
        }
        Ok(map)
    }

    pub fn insert(&mut self, name: &str, domain_pattern: &str, class: CookieClass) {
        let pattern = normalize_domain(domain_pattern);
        if pattern.is_empty() || pattern == "*" {
            self.by_name.insert(name.to_owned(), class);
            return;
        }
        let entries = self.by_domain.entry(name.to_owned()).or_default();
        entries.retain(|(p, _)| *p != pattern);
        entries.push((pattern, class));
        // longest first, ties broken by text for a deterministic order
        entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
    }

    pub fn classify(&self, cookie: &CookieRecord) -> CookieClass {
        let domain = normalize_domain(&cookie.domain);
        self.by_domain
            .get(&cookie.name)
            .and_then(|entries| entries.iter().find(|(p, _)| domain_matches(&domain, p)))
            .map(|(_, class)| *class)
            .or_else(|| self.by_name.get(&cookie.name).copied())
            .unwrap_or(CookieClass::Unknown)
    }

    pub fn len(&self) -> usize {
        self.by_name.len() + self.by_domain.values().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-site reclassifications, e.g. cookies a site declares necessary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CookieOverrides {
    sites: BTreeMap<String, CookieClassMap>,
}

impl CookieOverrides {
    /// One `site,name,domain_pattern,class` record per line.
    pub fn parse(text: &str) -> Result<Self, CookieMapError> {
        let mut sites: BTreeMap<String, CookieClassMap> = BTreeMap::new();
        for (line, fields) in parse_records(text, "cookie overrides", 4)? {
            let class = fields[3].parse().map_err(|message| CookieMapError::BadRecord {
                file: "cookie overrides",
                line,
                message,
            })?;
            sites
                .entry(fields[0].to_ascii_lowercase())
                .or_default()
                .insert(&fields[1], &fields[2], class);
        }
        Ok(Self { sites })
    }
}

/// Class map plus overrides, bound to one site.
#[derive(Debug, Clone, Copy)]
pub struct CookieClassifier<'a> {
    pub map: &'a CookieClassMap,
    pub overrides: Option<&'a CookieClassMap>,
}

impl<'a> CookieClassifier<'a> {
    pub fn new(map: &'a CookieClassMap, overrides: &'a CookieOverrides, site: &str) -> Self {
        Self {
            map,
            overrides: overrides.sites.get(&site.to_ascii_lowercase()),
        }
    }

    pub fn plain(map: &'a CookieClassMap) -> Self {
        Self { map, overrides: None }
    }

    /// The class and, when a site override changed it, a note saying so.
    pub fn classify(&self, cookie: &CookieRecord) -> (CookieClass, Option<String>) {
        let base = self.map.classify(cookie);
        match self.overrides.map(|o| o.classify(cookie)) {
            Some(over) if over != CookieClass::Unknown && over != base => (
                over,
                Some(format!("{} on {} reclassified {base} -> {over} by site override", cookie.name, cookie.domain)),
            ),
            _ => (base, None),
        }
    }
}

pub fn classify_cookie(cookie: &CookieRecord, map: &CookieClassMap) -> CookieClass {
    map.classify(cookie)
}

/// Distinct (name, domain, path) AA cookies at one stage, with evidence.
fn aa_at(session: &CaptureSession, stage: Stage, classifier: &CookieClassifier<'_>) -> (BTreeSet<(String, String, String)>, Vec<String>) {
    let mut seen = BTreeSet::new();
    let mut notes = Vec::new();
    if let Some(record) = session.stage(stage) {
        for cookie in &record.cookies {
            let (class, note) = classifier.classify(cookie);
            notes.extend(note);
            if class.is_aa() {
                seen.insert((cookie.name.clone(), cookie.domain.to_ascii_lowercase(), cookie.path.clone()));
            }
        }
    }
    (seen, notes)
}

/// AA cookie count for every recorded stage.
pub fn aa_counts(session: &CaptureSession, classifier: &CookieClassifier<'_>) -> BTreeMap<Stage, usize> {
    session
        .stages
        .iter()
        .map(|r| (r.stage, aa_at(session, r.stage, classifier).0.len()))
        .collect()
}

pub fn aa_present(counts: &BTreeMap<Stage, usize>) -> bool {
    counts.values().any(|&n| n > 0)
}

/// AA cookies kept or added after revocation are a violation. AA cookies
/// at initial landing or after rejection are reported for information.
pub fn aa_findings(session: &CaptureSession, classifier: &CookieClassifier<'_>) -> Vec<Finding> {
    let mut findings = Vec::new();
    for stage in [Stage::Initial, Stage::Revoked, Stage::Rejected] {
        let (cookies, notes) = aa_at(session, stage, classifier);
        if cookies.is_empty() {
            continue;
        }
        let base = match stage {
            Stage::Revoked => Finding::violation(
                FindingKind::AaCookiesAfterRevocation,
                &session.site,
                &[LegalRule::LR4, LegalRule::P1, LegalRule::P2],
            ),
            Stage::Initial => Finding::info(FindingKind::AaCookiesBeforeConsent, &session.site),
            _ => Finding::info(FindingKind::AaCookiesAfterRejection, &session.site),
        };
        let mut f = base.at(stage).evidence(format!("{} AA cookies", cookies.len()));
        for (name, domain, path) in &cookies {
            f = f.evidence(format!("{name} {domain}{path}"));
        }
        for note in notes {
            f = f.evidence(note);
        }
        findings.push(f);
    }
    findings
}
