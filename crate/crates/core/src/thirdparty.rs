//! Which third parties heard about acceptance but not about revocation,
//! over HTTP and through the consent APIs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::{ApiKind, CaptureSession, Stage};
use crate::consent::LegalRule;
use crate::consistency::ConsentSourceSnapshot;
use crate::finding::{Attribution, Finding, FindingKind};
use crate::netlog::{ConsentObservation, Direction};
use crate::parties::{PartyError, PartyRegistry};
use crate::tcs::ConsentProjection;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThirdPartyError {
    #[error("session has no {0} stage")]
    MissingStage(Stage),
    #[error("percentage {0} outside 0..=100")]
    OutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Http,
    Api,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyReport {
    pub party: String,
    pub informed_at_accept: bool,
    pub informed_at_revoke: bool,
    pub channels: BTreeSet<Channel>,
    pub set_cookie_after_revocation: bool,
    pub is_tracking_domain: bool,
}

/// Third parties that received a TC string in an outgoing request at
/// `stage`, with one evidence line per observation.
pub fn informed_parties_http(
    observations: &[ConsentObservation],
    stage: Stage,
    site: &str,
    registry: &PartyRegistry,
) -> BTreeMap<String, Vec<String>> {
    informed_where(observations, stage, site, registry, |_| true)
}

fn informed_where(
    observations: &[ConsentObservation],
    stage: Stage,
    site: &str,
    registry: &PartyRegistry,
    keep: impl Fn(&ConsentObservation) -> bool,
) -> BTreeMap<String, Vec<String>> {
    let mut parties: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for obs in observations {
        if obs.stage != stage
            || obs.direction != Direction::Outgoing
            || registry.is_first_party(site, &obs.receiver_party)
            || !keep(obs)
        {
            continue;
        }
        parties.entry(obs.receiver_party.clone()).or_default().push(format!(
            "request {} ({}) {}",
            obs.request_id,
            obs.location.as_str(),
            obs.request_url
        ));
    }
    parties
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformedDiff {
    pub reports: Vec<PartyReport>,
    pub findings: Vec<Finding>,
    /// Share of parties informed at acceptance that were not informed of
    /// the revocation, over the HTTP channel. `None` when no party was
    /// informed at acceptance.
    pub percentage_not_informed: Option<f64>,
}

/// Compares parties informed at acceptance with those informed of the
/// revocation. A revoked-stage request only informs when the string it
/// carries differs from every consent value seen at the accepted stage:
/// re-sending the old consent does not tell anyone about the revocation.
pub fn diff_informed(
    session: &CaptureSession,
    observations: &[ConsentObservation],
    snapshots: &[ConsentSourceSnapshot],
    registry: &PartyRegistry,
) -> Result<InformedDiff, ThirdPartyError> {
    for stage in [Stage::Accepted, Stage::Revoked] {
        if !session.has_stage(stage) {
            return Err(ThirdPartyError::MissingStage(stage));
        }
    }
    let site = session.site.as_str();
    let accepted_projections: BTreeSet<String> = snapshots
        .iter()
        .filter(|s| s.stage == Stage::Accepted)
        .filter_map(ConsentSourceSnapshot::projection)
        .chain(
            observations
                .iter()
                .filter(|o| o.stage == Stage::Accepted)
                .map(|o| o.value.core.projection()),
        )
        .map(|p| projection_key(&p))
        .collect();

    let at_accept = informed_parties_http(observations, Stage::Accepted, site, registry);
    let at_revoke = informed_where(observations, Stage::Revoked, site, registry, |o| {
        !accepted_projections.contains(&projection_key(&o.value.core.projection()))
    });
    let api = api_consumers(session, registry);

    let parties: BTreeSet<&String> = at_accept
        .keys()
        .chain(at_revoke.keys())
        .chain(api.accepted.keys())
        .chain(api.revoked.keys())
        .collect();
    let mut reports = Vec::new();
    let mut findings = Vec::new();
    for party in parties {
        let http_accept = at_accept.contains_key(party);
        let http_revoke = at_revoke.contains_key(party);
        let mut channels = BTreeSet::new();
        if http_accept || http_revoke || observations.iter().any(|o| &o.receiver_party == party) {
            channels.insert(Channel::Http);
        }
        if api.accepted.contains_key(party) || api.revoked.contains_key(party) {
            channels.insert(Channel::Api);
        }
        reports.push(PartyReport {
            party: party.clone(),
            informed_at_accept: http_accept || api.accepted.contains_key(party),
            informed_at_revoke: http_revoke || api.revoked.contains_key(party),
            channels,
            set_cookie_after_revocation: false,
            is_tracking_domain: registry.is_tracking_domain(party),
        });
        if http_accept && !http_revoke {
            let mut f = Finding::violation(
                FindingKind::ThirdPartyNotInformed,
                site,
                &[LegalRule::LR6, LegalRule::P1, LegalRule::P2],
            )
            .at(Stage::Revoked)
            .locator(party.clone())
            .responsible(Attribution::ThirdParty { domain: party.clone() });
            for line in &at_accept[party] {
                f = f.evidence(format!("informed at acceptance: {line}"));
            }
            findings.push(f);
        }
    }
    let informed = at_accept.len();
    let percentage_not_informed = (informed > 0).then(|| percentage(findings.len(), informed));
    Ok(InformedDiff {
        reports,
        findings,
        percentage_not_informed,
    })
}

fn projection_key(p: &ConsentProjection) -> String {
    serde_json::to_string(p).expect("projection serializes")
}

/// `100 * part / whole`. Exact whenever the true value is an integer.
pub fn percentage(part: usize, whole: usize) -> f64 {
    (part as f64 * 100.0) / whole as f64
}

#[derive(Debug, Default)]
struct ApiConsumers {
    accepted: BTreeMap<String, Vec<String>>,
    revoked: BTreeMap<String, Vec<String>>,
    listeners: BTreeSet<String>,
}

fn api_consumers(session: &CaptureSession, registry: &PartyRegistry) -> ApiConsumers {
    let mut out = ApiConsumers::default();
    for record in &session.stages {
        for access in &record.api_accesses {
            let Ok(party) = registry.registrable_domain(&access.accessor_script_url) else {
                continue;
            };
            if registry.is_first_party(&session.site, &party) {
                continue;
            }
            let reads = match (access.api, access.command.as_deref()) {
                (ApiKind::Tcfapi, Some("getTCData")) | (ApiKind::OnetrustGroupsGet, _) => true,
                (ApiKind::Tcfapi, Some("addEventListener")) => {
                    out.listeners.insert(party.clone());
                    false
                }
                _ => false,
            };
            if !reads {
                continue;
            }
            let line = format!(
                "{} {} by {}",
                access.command.as_deref().unwrap_or("groups read"),
                access.timestamp.to_rfc3339(),
                access.accessor_script_url
            );
            match record.stage {
                Stage::Accepted => out.accepted.entry(party).or_default().push(line),
                Stage::Revoked => out.revoked.entry(party).or_default().push(line),
                Stage::Initial | Stage::Rejected => {}
            }
        }
    }
    out
}

/// Third-party scripts that read consent through an API after acceptance
/// but not after revocation. Parties that registered an event listener are
/// assumed to be updated through it, which the capture cannot observe.
pub fn api_access_diff(session: &CaptureSession, registry: &PartyRegistry) -> Vec<Finding> {
    let api = api_consumers(session, registry);
    api.accepted
        .iter()
        .filter(|(party, _)| !api.revoked.contains_key(*party) && !api.listeners.contains(*party))
        .map(|(party, lines)| {
            lines.iter().fold(
                Finding::warning(FindingKind::ApiConsumerNotUpdated, &session.site, &[LegalRule::LR6])
                    .at(Stage::Revoked)
                    .locator(party.clone())
                    .responsible(Attribution::ThirdParty { domain: party.clone() }),
                |f, line| f.evidence(format!("read at acceptance: {line}")),
            )
        })
        .collect()
}

/// Parties that were not told about the revocation yet set cookies during
/// the revoked stage. Flags their reports and returns one finding each.
pub fn set_cookie_after_revocation(
    session: &CaptureSession,
    reports: &mut [PartyReport],
    registry: &PartyRegistry,
) -> Vec<Finding> {
    let Some(revoked) = session.stage(Stage::Revoked) else {
        return Vec::new();
    };
    let mut findings = Vec::new();
    for report in reports.iter_mut() {
        if !report.informed_at_accept || report.informed_at_revoke {
            continue;
        }
        let evidence: Vec<String> = revoked
            .requests
            .iter()
            .filter(|r| registry.registrable_domain(&r.url).is_ok_and(|p| p == report.party))
            .filter_map(|r| {
                let resp = r.response.as_ref()?;
                let cookie = resp.headers_named("set-cookie").next()?;
                let name = cookie.split('=').next().unwrap_or_default();
                Some(format!("request {} set cookie {name}", r.id))
            })
            .collect();
        if evidence.is_empty() {
            continue;
        }
        report.set_cookie_after_revocation = true;
        findings.push(evidence.into_iter().fold(
            Finding::violation(
                FindingKind::ProcessingAfterRevocation,
                &session.site,
                &[LegalRule::LR4, LegalRule::LR6, LegalRule::P1, LegalRule::P2],
            )
            .at(Stage::Revoked)
            .locator(report.party.clone())
            .responsible(Attribution::ThirdParty {
                domain: report.party.clone(),
            }),
            Finding::evidence,
        ));
    }
    findings
}

const MARKER_WORDS: [&str; 5] = ["privacy", "center", "consent", "cdn", "cmp"];
const CORPORATE_WORDS: [&str; 14] = [
    "gmbh", "inc", "ltd", "llc", "pte", "aps", "sa", "sas", "ag", "bv", "limited", "corp", "co", "srl",
];

fn name_tokens(name: &str) -> Vec<String> {
    name.to_ascii_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty() && !CORPORATE_WORDS.contains(t))
        .map(str::to_owned)
        .collect()
}

fn host_tokens(host: &str) -> Vec<String> {
    let labels: Vec<&str> = host.split('.').collect();
    // the last label is the TLD and never names anyone
    labels[..labels.len().saturating_sub(1)]
        .iter()
        .flat_map(|l| l.split('-'))
        .map(str::to_ascii_lowercase)
        .filter(|t| t.len() >= 2 && !MARKER_WORDS.contains(&t.as_str()))
        .collect()
}

/// Token match between a CMP display name and an initiator host: equal
/// tokens, the whole name run together, or a shared prefix of four or more
/// characters.
pub fn cmp_name_matches(cmp_name: &str, host: &str) -> bool {
    let name = name_tokens(cmp_name);
    if name.is_empty() {
        return false;
    }
    let joined = name.concat();
    host_tokens(host).iter().any(|h| {
        *h == joined
            || name.iter().any(|n| {
                n.len() >= 3 && (h == n || (h.len().min(n.len()) >= 4 && (h.starts_with(n.as_str()) || n.starts_with(h.as_str()))))
            })
    })
}

/// Decides who is responsible for traffic: the site itself, the CMP that
/// produced the string, or another third party.
pub fn attribute_responsible_party(
    site: &str,
    initiator_url: Option<&str>,
    cmp_id: Option<u16>,
    registry: &PartyRegistry,
) -> Result<Attribution, PartyError> {
    let cmp_name = cmp_id.and_then(|id| registry.cmps.name(id));
    let Some(initiator) = initiator_url else {
        return cmp_name
            .map(|name| Attribution::Cmp { name: name.to_owned() })
            .ok_or(PartyError::NoEvidence);
    };
    let domain = registry.registrable_domain(initiator)?;
    if registry.is_first_party(site, &domain) {
        return Ok(Attribution::FirstParty);
    }
    let host = url::Url::parse(initiator)
        .ok()
        .and_then(|u| u.host_str().map(str::to_owned))
        .unwrap_or_else(|| domain.clone());
    match cmp_name {
        Some(name) if cmp_name_matches(name, &host) => Ok(Attribution::Cmp { name: name.to_owned() }),
        _ => Ok(Attribution::ThirdParty { domain }),
    }
}

/// Counts over `[0,25)`, `[25,50)`, `[50,75)`, `[75,100)` and exactly 100.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub below_25: usize,
    pub from_25_to_50: usize,
    pub from_50_to_75: usize,
    pub from_75_to_100: usize,
    pub all: usize,
}

impl Histogram {
    pub const LABELS: [&'static str; 5] = ["<25", ">=25 to <50", ">=50 to <75", ">=75 to <100", "100"];

    pub fn counts(&self) -> [usize; 5] {
        [self.below_25, self.from_25_to_50, self.from_50_to_75, self.from_75_to_100, self.all]
    }

    pub fn total(&self) -> usize {
        self.counts().iter().sum()
    }
}

pub fn bucket_percentages(values: &[f64]) -> Result<Histogram, ThirdPartyError> {
    let mut h = Histogram::default();
    for &v in values {
        if !(0.0..=100.0).contains(&v) {
            return Err(ThirdPartyError::OutOfRange(v));
        }
        let slot = match v {
            v if v < 25.0 => &mut h.below_25,
            v if v < 50.0 => &mut h.from_25_to_50,
            v if v < 75.0 => &mut h.from_50_to_75,
            v if v < 100.0 => &mut h.from_75_to_100,
            _ => &mut h.all,
        };
        *slot += 1;
    }
    Ok(h)
}
