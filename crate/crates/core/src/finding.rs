use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::capture::Stage;
use crate::consent::LegalRule;
use crate::consistency::SourceKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    PositiveConsentAtInitial,
    PositiveConsentAfterRejection,
    PositiveConsentAfterRevocation,
    ConsentNotUpdated,
    StorageApiMismatch,
    NetworkApiMismatch,
    ServerInjectedTcs,
    DelayedUpdate,
    LowConfidenceTiming,
    ThirdPartyNotInformed,
    ApiConsumerNotUpdated,
    ProcessingAfterRevocation,
    AaCookiesBeforeConsent,
    AaCookiesAfterRevocation,
    AaCookiesAfterRejection,
    RevocationRequiresExtraSteps,
    RevocationViaDifferentInterface,
    RevocationRequiresLogin,
    NoRevocationWithTracking,
    NoRevocationNoTracking,
    EffortAsymmetry,
}

impl FindingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FindingKind::PositiveConsentAtInitial => "positive_consent_at_initial",
            FindingKind::PositiveConsentAfterRejection => "positive_consent_after_rejection",
            FindingKind::PositiveConsentAfterRevocation => "positive_consent_after_revocation",
            FindingKind::ConsentNotUpdated => "consent_not_updated",
            FindingKind::StorageApiMismatch => "storage_api_mismatch",
            FindingKind::NetworkApiMismatch => "network_api_mismatch",
            FindingKind::ServerInjectedTcs => "server_injected_tcs",
            FindingKind::DelayedUpdate => "delayed_update",
            FindingKind::LowConfidenceTiming => "low_confidence_timing",
            FindingKind::ThirdPartyNotInformed => "third_party_not_informed",
            FindingKind::ApiConsumerNotUpdated => "api_consumer_not_updated",
            FindingKind::ProcessingAfterRevocation => "processing_after_revocation",
            FindingKind::AaCookiesBeforeConsent => "aa_cookies_before_consent",
            FindingKind::AaCookiesAfterRevocation => "aa_cookies_after_revocation",
            FindingKind::AaCookiesAfterRejection => "aa_cookies_after_rejection",
            FindingKind::RevocationRequiresExtraSteps => "revocation_requires_extra_steps",
            FindingKind::RevocationViaDifferentInterface => "revocation_via_different_interface",
            FindingKind::RevocationRequiresLogin => "revocation_requires_login",
            FindingKind::NoRevocationWithTracking => "no_revocation_with_tracking",
            FindingKind::NoRevocationNoTracking => "no_revocation_no_tracking",
            FindingKind::EffortAsymmetry => "effort_asymmetry",
        }
    }
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Violation,
}

/// Who is held responsible for a finding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "party", rename_all = "snake_case")]
pub enum Attribution {
    FirstParty,
    Cmp { name: String },
    ThirdParty { domain: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    /// Sub-kind, e.g. `stale_consent_sent` for network mismatches.
    pub detail: Option<String>,
    pub rules: BTreeSet<LegalRule>,
    /// `None` for site-level findings such as interface verdicts.
    pub stage: Option<Stage>,
    pub site: String,
    pub source: Option<SourceKind>,
    /// Cookie name, storage key, API name or party domain.
    pub locator: Option<String>,
    pub evidence: Vec<String>,
    pub responsible_party: Option<Attribution>,
    pub severity: Severity,
}

impl Finding {
    pub fn new(kind: FindingKind, severity: Severity, site: &str) -> Self {
        Self {
            kind,
            detail: None,
            rules: BTreeSet::new(),
            stage: None,
            site: site.to_owned(),
            source: None,
            locator: None,
            evidence: Vec::new(),
            responsible_party: None,
            severity,
        }
    }

    pub fn violation(kind: FindingKind, site: &str, rules: &[LegalRule]) -> Self {
        Self::new(kind, Severity::Violation, site).with_rules(rules)
    }

    pub fn warning(kind: FindingKind, site: &str, rules: &[LegalRule]) -> Self {
        Self::new(kind, Severity::Warning, site).with_rules(rules)
    }

    pub fn info(kind: FindingKind, site: &str) -> Self {
        Self::new(kind, Severity::Info, site)
    }

    pub fn with_rules(mut self, rules: &[LegalRule]) -> Self {
        self.rules.extend(rules.iter().copied());
        self
    }

    pub fn at(mut self, stage: Stage) -> Self {
        self.stage = Some(stage);
        self
    }

    pub fn source(mut self, source: SourceKind) -> Self {
        self.source = Some(source);
        self
    }

    pub fn locator(mut self, locator: impl Into<String>) -> Self {
        self.locator = Some(locator.into());
        self
    }

    pub fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    pub fn evidence(mut self, line: impl Into<String>) -> Self {
        self.evidence.push(line.into());
        self
    }

    pub fn responsible(mut self, party: Attribution) -> Self {
        self.responsible_party = Some(party);
        self
    }

    pub fn is_violation(&self) -> bool {
        self.severity == Severity::Violation
    }

    pub fn cites(&self, rule: LegalRule) -> bool {
        self.rules.contains(&rule)
    }

    fn key(&self) -> (Option<Stage>, FindingKind, Option<SourceKind>, Option<&str>, Option<&str>) {
        (
            self.stage,
            self.kind,
            self.source,
            self.locator.as_deref(),
            self.detail.as_deref(),
        )
    }
}

/// Merges findings sharing (stage, kind, source, locator, detail) and sorts
/// them. Evidence lines are concatenated without duplicates; the highest
/// severity and the union of rules are kept.
pub fn dedup_findings(mut findings: Vec<Finding>) -> Vec<Finding> {
    findings.sort_by(|a, b| a.key().cmp(&b.key()));
    let mut out: Vec<Finding> = Vec::with_capacity(findings.len());
    for f in findings {
        match out.last_mut() {
            Some(prev) if prev.key() == f.key() => {
                for line in f.evidence {
                    if !prev.evidence.contains(&line) {
                        prev.evidence.push(line);
                    }
                }
                prev.rules.extend(f.rules);
                prev.severity = prev.severity.max(f.severity);
                if prev.responsible_party.is_none() {
                    prev.responsible_party = f.responsible_party;
                }
            }
            _ => out.push(f),
        }
    }
    out
}
