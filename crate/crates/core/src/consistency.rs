//! Whether stored, API-reported and transmitted consent is valid for the
//! stage it was recorded in, was updated by revocation, and agrees across
//! sources.

use std::collections::BTreeSet;

use chrono::TimeDelta;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::{CaptureSession, Stage};
use crate::consent::{expected_class_for_stage, ConsentClass, LegalRule, PurposeTable};
use crate::finding::{Attribution, Finding, FindingKind};
use crate::netlog::{ConsentObservation, Direction};
use crate::onetrust::{
    compare_groups, parse_active_groups, parse_optanon_cookie, BaselineComparison, OneTrustConsent,
    ACTIVE_GROUPS_VARIABLE, OPTANON_COOKIE,
};
use crate::tcs::{decode_tc_string, sniff_tcs, ConsentProjection, TcString};

pub const TCFAPI_LOCATOR: &str = "__tcfapi";
pub const DEFAULT_GRACE_WINDOW_SECONDS: i64 = 5;

const INVALID_CONSENT: [LegalRule; 2] = [LegalRule::LR5, LegalRule::P2];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsistencyError {
    #[error("no initial-stage {0} value to compare against")]
    MissingBaseline(SourceKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Tcfapi,
    TcfCookie,
    TcfLocalStorage,
    OnetrustActiveGroups,
    OptanonCookie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Tcf,
    OneTrust,
}

impl SourceKind {
    pub const ALL: [SourceKind; 5] = [
        SourceKind::Tcfapi,
        SourceKind::TcfCookie,
        SourceKind::TcfLocalStorage,
        SourceKind::OnetrustActiveGroups,
        SourceKind::OptanonCookie,
    ];

    pub fn family(self) -> Family {
        match self {
            SourceKind::Tcfapi | SourceKind::TcfCookie | SourceKind::TcfLocalStorage => Family::Tcf,
            SourceKind::OnetrustActiveGroups | SourceKind::OptanonCookie => Family::OneTrust,
        }
    }

    pub fn is_api(self) -> bool {
        matches!(self, SourceKind::Tcfapi | SourceKind::OnetrustActiveGroups)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Tcfapi => "tcfapi",
            SourceKind::TcfCookie => "tcf_cookie",
            SourceKind::TcfLocalStorage => "tcf_local_storage",
            SourceKind::OnetrustActiveGroups => "onetrust_active_groups",
            SourceKind::OptanonCookie => "optanon_cookie",
        }
    }
}

impl std::fmt::Display for SourceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SnapshotValue {
    Tcf { value: TcString },
    OneTrust { value: OneTrustConsent },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentSourceSnapshot {
    pub source: SourceKind,
    pub stage: Stage,
    /// Cookie name, storage key or API name.
    pub locator: String,
    pub value: SnapshotValue,
}

impl ConsentSourceSnapshot {
    pub fn tcf(&self) -> Option<&TcString> {
        match &self.value {
            SnapshotValue::Tcf { value } => Some(value),
            SnapshotValue::OneTrust { .. } => None,
        }
    }

    pub fn onetrust(&self) -> Option<&OneTrustConsent> {
        match &self.value {
            SnapshotValue::OneTrust { value } => Some(value),
            SnapshotValue::Tcf { .. } => None,
        }
    }

    pub fn projection(&self) -> Option<ConsentProjection> {
        self.tcf().map(|t| t.core.projection())
    }

    fn key(&self) -> (SourceKind, &str) {
        (self.source, self.locator.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Snapshots {
    pub snapshots: Vec<ConsentSourceSnapshot>,
    pub warnings: Vec<String>,
}

/// Every consent value held in storage or returned by an API, one per
/// (source, locator, stage). Later duplicates are dropped with a warning.
pub fn collect_snapshots(session: &CaptureSession) -> Snapshots {
    let mut out = Snapshots::default();
    let push = |out: &mut Snapshots, snap: ConsentSourceSnapshot| {
        let dup = out
            .snapshots
            .iter()
            .any(|s| s.stage == snap.stage && s.key() == snap.key());
        if dup {
            out.warnings.push(format!(
                "{}: duplicate {} value for {} ignored",
                snap.stage, snap.source, snap.locator
            ));
        } else {
            out.snapshots.push(snap);
        }
    };

    for record in &session.stages {
        let stage = record.stage;
        for cookie in &record.cookies {
            if cookie.name == OPTANON_COOKIE {
                match parse_optanon_cookie(&cookie.value) {
                    Ok(value) => push(
                        &mut out,
                        ConsentSourceSnapshot {
                            source: SourceKind::OptanonCookie,
                            stage,
                            locator: cookie.name.clone(),
                            value: SnapshotValue::OneTrust { value },
                        },
                    ),
                    Err(e) => out.warnings.push(format!("{stage}: cookie {}: {e}", cookie.name)),
                }
            } else if let Some(value) = sniff_tcs(&cookie.value) {
                push(
                    &mut out,
                    ConsentSourceSnapshot {
                        source: SourceKind::TcfCookie,
                        stage,
                        locator: cookie.name.clone(),
                        value: SnapshotValue::Tcf { value },
                    },
                );
            }
        }
        for entry in &record.local_storage {
            if let Some(value) = sniff_tcs(&entry.value) {
                push(
                    &mut out,
                    ConsentSourceSnapshot {
                        source: SourceKind::TcfLocalStorage,
                        stage,
                        locator: entry.key.clone(),
                        value: SnapshotValue::Tcf { value },
                    },
                );
            }
        }
        if let Some(text) = &record.api_snapshots.tcfapi_tc_string {
            match decode_tc_string(text) {
                Ok(value) => push(
                    &mut out,
                    ConsentSourceSnapshot {
                        source: SourceKind::Tcfapi,
                        stage,
                        locator: TCFAPI_LOCATOR.into(),
                        value: SnapshotValue::Tcf { value },
                    },
                ),
                Err(e) => out.warnings.push(format!("{stage}: tcf api value not decodable: {e}")),
            }
        }
        if let Some(text) = &record.api_snapshots.onetrust_active_groups {
            push(
                &mut out,
                ConsentSourceSnapshot {
                    source: SourceKind::OnetrustActiveGroups,
                    stage,
                    locator: ACTIVE_GROUPS_VARIABLE.into(),
                    value: SnapshotValue::OneTrust {
                        value: parse_active_groups(text),
                    },
                },
            );
        }
    }
    out
}

fn baseline_for<'a>(
    all: &'a [ConsentSourceSnapshot],
    snap: &ConsentSourceSnapshot,
) -> Option<&'a OneTrustConsent> {
    all.iter()
        .find(|s| s.stage == Stage::Initial && s.source == snap.source)
        .and_then(ConsentSourceSnapshot::onetrust)
}

/// Legal class of one snapshot. OneTrust values are read against the
/// initial-stage value of the same source: unchanged is negative, strictly
/// more groups is positive, anything else is indeterminate.
pub fn snapshot_class(
    snap: &ConsentSourceSnapshot,
    all: &[ConsentSourceSnapshot],
    table: &PurposeTable,
) -> Result<ConsentClass, ConsistencyError> {
    match &snap.value {
        SnapshotValue::Tcf { value } => Ok(table.classify(&value.core.projection())),
        SnapshotValue::OneTrust { value } => {
            let baseline = baseline_for(all, snap).ok_or(ConsistencyError::MissingBaseline(snap.source))?;
            Ok(match compare_groups(&value.enabled_groups, &baseline.enabled_groups) {
                BaselineComparison::Negative => ConsentClass::Negative,
                BaselineComparison::Positive => ConsentClass::Positive,
                BaselineComparison::Changed => ConsentClass::Indeterminate,
            })
        }
    }
}

fn positive_kind(stage: Stage) -> Option<FindingKind> {
    match stage {
        Stage::Initial => Some(FindingKind::PositiveConsentAtInitial),
        Stage::Rejected => Some(FindingKind::PositiveConsentAfterRejection),
        Stage::Revoked => Some(FindingKind::PositiveConsentAfterRevocation),
        Stage::Accepted => None,
    }
}

fn describe(snap: &ConsentSourceSnapshot) -> String {
    match &snap.value {
        SnapshotValue::Tcf { value } => {
            let c = &value.core;
            format!(
                "{} {}: purposes {:?}, {} vendor consents, cmp {}",
                snap.source,
                snap.locator,
                c.purposes_consent,
                c.vendor_consents.len(),
                c.cmp_id
            )
        }
        SnapshotValue::OneTrust { value } => {
            format!("{} {}: enabled groups {:?}", snap.source, snap.locator, value.enabled_groups)
        }
    }
}

/// Positive consent where none may exist: at initial landing, after
/// rejection and after revocation. `snapshots` may span all stages (the
/// OneTrust baseline is read from them); only `stage` is checked.
pub fn check_stage_validity(
    snapshots: &[ConsentSourceSnapshot],
    stage: Stage,
    site: &str,
    table: &PurposeTable,
) -> Result<Vec<Finding>, ConsistencyError> {
    let Some(kind) = positive_kind(stage) else {
        return Ok(Vec::new());
    };
    let mut findings = Vec::new();
    for snap in snapshots.iter().filter(|s| s.stage == stage) {
        if snapshot_class(snap, snapshots, table)? == ConsentClass::Positive {
            findings.push(
                Finding::violation(kind, site, &INVALID_CONSENT)
                    .at(stage)
                    .source(snap.source)
                    .locator(snap.locator.clone())
                    .evidence(describe(snap)),
            );
        }
    }
    Ok(findings)
}

/// Sources whose consent was positive after acceptance and did not change
/// on revocation. Metadata-only changes count as no change.
pub fn check_updated_after_revocation(
    snapshots: &[ConsentSourceSnapshot],
    site: &str,
    table: &PurposeTable,
) -> Vec<Finding> {
    let mut findings = Vec::new();
    for revoked in snapshots.iter().filter(|s| s.stage == Stage::Revoked) {
        let Some(accepted) = snapshots
            .iter()
            .find(|s| s.stage == Stage::Accepted && s.key() == revoked.key())
        else {
            continue;
        };
        let unchanged = match (&accepted.value, &revoked.value) {
            (SnapshotValue::Tcf { value: a }, SnapshotValue::Tcf { value: r }) => {
                a.core.projection() == r.core.projection()
            }
            (SnapshotValue::OneTrust { value: a }, SnapshotValue::OneTrust { value: r }) => {
                a.enabled_groups == r.enabled_groups
            }
            _ => false,
        };
        if !unchanged || snapshot_class(accepted, snapshots, table) != Ok(ConsentClass::Positive) {
            continue;
        }
        let mut f = Finding::violation(FindingKind::ConsentNotUpdated, site, &INVALID_CONSENT)
            .at(Stage::Revoked)
            .source(revoked.source)
            .locator(revoked.locator.clone())
            .evidence(describe(revoked));
        if let (Some(a), Some(r)) = (accepted.tcf(), revoked.tcf()) {
            if a.core != r.core {
                f = f.evidence("only metadata fields changed");
            }
        }
        findings.push(f);
    }
    findings
}

/// Storage and API disagreeing within one family at one stage. Reported
/// only when at least one side deviates from what the stage requires, so a
/// stage whose values are all of the expected class yields nothing.
pub fn check_store_api_consistency(
    snapshots: &[ConsentSourceSnapshot],
    stage: Stage,
    site: &str,
    table: &PurposeTable,
) -> Vec<Finding> {
    let expected = expected_class_for_stage(stage);
    let at_stage: Vec<&ConsentSourceSnapshot> = snapshots.iter().filter(|s| s.stage == stage).collect();
    let mut findings = Vec::new();
    for api in at_stage.iter().filter(|s| s.source.is_api()) {
        for store in at_stage
            .iter()
            .filter(|s| !s.source.is_api() && s.source.family() == api.source.family())
        {
            let differs = match (&store.value, &api.value) {
                (SnapshotValue::Tcf { value: s }, SnapshotValue::Tcf { value: a }) => {
                    s.core.projection() != a.core.projection()
                }
                (SnapshotValue::OneTrust { value: s }, SnapshotValue::OneTrust { value: a }) => {
                    s.enabled_groups != a.enabled_groups
                }
                _ => false,
            };
            if !differs {
                continue;
            }
            let store_class = snapshot_class(store, snapshots, table).ok();
            let api_class = snapshot_class(api, snapshots, table).ok();
            let deviates = |c: Option<ConsentClass>| c.is_none_or(|c| c != expected);
            if !deviates(store_class) && !deviates(api_class) {
                continue;
            }
            let positive = Some(ConsentClass::Positive);
            let detail = match (store_class == positive, api_class == positive) {
                (true, false) => "stale_store",
                (false, true) => "stale_api",
                _ => "projection_mismatch",
            };
            findings.push(
                Finding::violation(FindingKind::StorageApiMismatch, site, &INVALID_CONSENT)
                    .at(stage)
                    .source(store.source)
                    .locator(store.locator.clone())
                    .detail(detail)
                    .evidence(describe(store))
                    .evidence(describe(api)),
            );
        }
    }
    findings
}

/// Timing and reference data for comparing network traffic to the API.
#[derive(Debug, Clone, Copy)]
pub struct NetworkContext<'a> {
    pub stage: Stage,
    pub stage_event_time: Option<chrono::DateTime<chrono::Utc>>,
    pub grace_window: TimeDelta,
    pub site: &'a str,
}

/// Consent strings seen on the wire that disagree with the tcf API.
///
/// Only accepted and revoked stages are checked, and a revoked stage is
/// skipped when the API itself still reports positive consent. Traffic
/// inside the grace window after the stage event is reported as a delayed
/// update. Without a stage event time every mismatch is reported and one
/// low-confidence note is added.
pub fn check_network_vs_api(
    observations: &[ConsentObservation],
    snapshots: &[ConsentSourceSnapshot],
    ctx: &NetworkContext<'_>,
    table: &PurposeTable,
    attribute: &dyn Fn(&ConsentObservation) -> Option<Attribution>,
) -> Vec<Finding> {
    let stage = ctx.stage;
    if !matches!(stage, Stage::Accepted | Stage::Revoked) {
        return Vec::new();
    }
    let Some(api) = snapshots
        .iter()
        .find(|s| s.stage == stage && s.source == SourceKind::Tcfapi)
        .and_then(ConsentSourceSnapshot::projection)
    else {
        return Vec::new();
    };
    if stage == Stage::Revoked && table.classify(&api) == ConsentClass::Positive {
        return Vec::new();
    }

    let prior: BTreeSet<_> = snapshots
        .iter()
        .filter(|s| s.stage < stage && s.stage != Stage::Rejected)
        .filter_map(ConsentSourceSnapshot::projection)
        .map(|p| serde_json::to_string(&p).expect("projection serializes"))
        .collect();
    let known: BTreeSet<_> = snapshots
        .iter()
        .filter_map(ConsentSourceSnapshot::projection)
        .map(|p| serde_json::to_string(&p).expect("projection serializes"))
        .collect();

    let mut findings = Vec::new();
    let mut unwindowed = false;
    for obs in observations.iter().filter(|o| o.stage == stage) {
        let projection = obs.value.core.projection();
        if projection == api {
            continue;
        }
        let evidence = format!(
            "request {} to {} ({}{}) at {}",
            obs.request_id,
            obs.request_url,
            obs.location.as_str(),
            obs.field.as_deref().map(|f| format!(" {f}")).unwrap_or_default(),
            obs.timestamp.to_rfc3339()
        );
        match ctx.stage_event_time {
            Some(event) if obs.timestamp < event + ctx.grace_window => {
                findings.push(
                    Finding::info(FindingKind::DelayedUpdate, ctx.site)
                        .at(stage)
                        .locator(obs.receiver_party.clone())
                        .evidence(evidence),
                );
                continue;
            }
            Some(_) => {}
            None => unwindowed = true,
        }
        let key = serde_json::to_string(&projection).expect("projection serializes");
        let detail = if prior.contains(&key) { "stale_consent_sent" } else { "different_tcs" };
        let mut f = Finding::violation(FindingKind::NetworkApiMismatch, ctx.site, &INVALID_CONSENT)
            .at(stage)
            .locator(obs.receiver_party.clone())
            .detail(detail)
            .evidence(evidence.clone());
        if let Some(party) = attribute(obs) {
            f = f.responsible(party);
        }
        findings.push(f);
        if obs.direction == Direction::Incoming && !known.contains(&key) {
            findings.push(
                Finding::warning(FindingKind::ServerInjectedTcs, ctx.site, &INVALID_CONSENT)
                    .at(stage)
                    .locator(obs.receiver_party.clone())
                    .evidence(evidence),
            );
        }
    }
    if unwindowed {
        findings.push(
            Finding::info(FindingKind::LowConfidenceTiming, ctx.site)
                .at(stage)
                .evidence("stage event time missing; network comparison ran without a grace window"),
        );
    }
    findings
}
