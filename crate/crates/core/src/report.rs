//! Per-site analysis and corpus-level prevalence tables.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::capture::{detect_cmps, BannerKind, CaptureSession, CmpDetection, RevocationChannel, Stage};
use crate::consent::{ConsentClass, LegalRule};
use crate::config::AuditConfig;
use crate::consistency::{
    check_network_vs_api, check_stage_validity, check_store_api_consistency, check_updated_after_revocation,
    collect_snapshots, snapshot_class, ConsentSourceSnapshot, Family, NetworkContext, SourceKind,
};
use crate::cookies::{aa_counts, aa_findings, aa_present, CookieClassifier};
use crate::finding::{dedup_findings, Finding, FindingKind, Severity};
use crate::interface::{evaluate_interface, steps_asymmetry, InterfaceCategory};
use crate::netlog::{scan_stage, ConsentObservation, Location};
use crate::thirdparty::{
    api_access_diff, attribute_responsible_party, bucket_percentages, diff_informed, set_cookie_after_revocation,
    Histogram, PartyReport,
};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotApplicable {
    pub check: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotSummary {
    pub source: SourceKind,
    pub stage: Stage,
    pub locator: String,
    /// `None` when the value could not be classified (missing baseline).
    pub class: Option<ConsentClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteReport {
    pub report_version: u32,
    pub site: String,
    pub stages: Vec<Stage>,
    pub cmp_detection: CmpDetection,
    pub banner: Option<BannerKind>,
    pub revocation_channel: Option<RevocationChannel>,
    pub category: Option<InterfaceCategory>,
    pub findings: Vec<Finding>,
    pub party_reports: Vec<PartyReport>,
    pub percentage_not_informed: Option<f64>,
    pub aa_counts: BTreeMap<Stage, usize>,
    pub snapshots: Vec<SnapshotSummary>,
    pub observation_counts: BTreeMap<Location, usize>,
    pub not_applicable: Vec<NotApplicable>,
    pub warnings: Vec<String>,
}

impl SiteReport {
    pub fn has_stage(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    pub fn violations(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.is_violation())
    }

    pub fn has_violation(&self, kind: FindingKind) -> bool {
        self.violations().any(|f| f.kind == kind)
    }

    pub fn uses_source(&self, source: SourceKind) -> bool {
        self.snapshots.iter().any(|s| s.source == source)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("reports serialize");
        out.push('\n');
        out
    }
}

fn skip(out: &mut Vec<NotApplicable>, check: &str, reason: impl Into<String>) {
    out.push(NotApplicable {
        check: check.to_owned(),
        reason: reason.into(),
    });
}

/// Runs every check on one session. Failures of individual checks become
/// warnings or not-applicable entries; the analysis itself never fails.
pub fn analyze_site(session: &CaptureSession, config: &AuditConfig) -> SiteReport {
    let site = session.site.as_str();
    let registry = &config.registry;
    let table = &config.purposes;
    let mut findings = Vec::new();
    let mut warnings = Vec::new();
    let mut not_applicable = Vec::new();
    let has = |s| session.has_stage(s);

    let cmp_detection = detect_cmps(session);

    let collected = collect_snapshots(session);
    warnings.extend(collected.warnings);
    let snapshots = collected.snapshots;

    let mut observations: Vec<ConsentObservation> = Vec::new();
    for record in &session.stages {
        let scan = scan_stage(record, &registry.suffixes, &config.scan);
        warnings.extend(scan.warnings.into_iter().map(|w| format!("{}: {w}", record.stage)));
        observations.extend(scan.observations);
    }

    // stored and API consent, per family so one missing baseline does not
    // hide the other family's results
    for family in [Family::Tcf, Family::OneTrust] {
        let fam: Vec<ConsentSourceSnapshot> = snapshots
            .iter()
            .filter(|s| s.source.family() == family)
            .cloned()
            .collect();
        if fam.is_empty() {
            continue;
        }
        for stage in [Stage::Initial, Stage::Rejected, Stage::Revoked] {
            match check_stage_validity(&fam, stage, site, table) {
                Ok(f) => findings.extend(f),
                Err(e) => warnings.push(format!("{stage}: validity check skipped: {e}")),
            }
        }
    }
    if has(Stage::Accepted) && has(Stage::Revoked) {
        findings.extend(check_updated_after_revocation(&snapshots, site, table));
    } else {
        skip(&mut not_applicable, "consent_updated", "accepted and revoked stages are both required");
    }
    for record in &session.stages {
        findings.extend(check_store_api_consistency(&snapshots, record.stage, site, table));
    }

    let attribute = |obs: &ConsentObservation| {
        attribute_responsible_party(site, obs.initiator_url.as_deref(), Some(obs.value.core.cmp_id), registry).ok()
    };
    for stage in [Stage::Accepted, Stage::Revoked] {
        let Some(record) = session.stage(stage) else {
            skip(&mut not_applicable, &format!("network_vs_api_{stage}"), format!("no {stage} stage"));
            continue;
        };
        if record.api_snapshots.tcfapi_tc_string.is_none() {
            skip(&mut not_applicable, &format!("network_vs_api_{stage}"), "no tcf api value");
            continue;
        }
        let ctx = NetworkContext {
            stage,
            stage_event_time: record.stage_event_time,
            grace_window: config.grace_window,
            site,
        };
        findings.extend(check_network_vs_api(&observations, &snapshots, &ctx, table, &attribute));
    }

    let mut party_reports = Vec::new();
    let mut percentage_not_informed = None;
    match diff_informed(session, &observations, &snapshots, registry) {
        Ok(mut diff) => {
            findings.append(&mut diff.findings);
            findings.extend(set_cookie_after_revocation(session, &mut diff.reports, registry));
            findings.extend(api_access_diff(session, registry));
            party_reports = diff.reports;
            percentage_not_informed = diff.percentage_not_informed;
        }
        Err(e) => skip(&mut not_applicable, "third_parties", e.to_string()),
    }

    let classifier = CookieClassifier::new(&config.cookie_classes, &config.cookie_overrides, site);
    let counts = aa_counts(session, &classifier);
    findings.extend(aa_findings(session, &classifier));

    let mut category = None;
    match &session.interface_labels {
        Some(labels) => {
            match evaluate_interface(labels, aa_present(&counts), site) {
                Ok(verdict) => {
                    category = Some(verdict.category);
                    findings.extend(verdict.findings);
                }
                Err(e) => warnings.push(e.to_string()),
            }
            findings.extend(steps_asymmetry(labels, site));
        }
        None => skip(&mut not_applicable, "interface", "no interface labels"),
    }

    let summaries = snapshots
        .iter()
        .map(|s| SnapshotSummary {
            source: s.source,
            stage: s.stage,
            locator: s.locator.clone(),
            class: snapshot_class(s, &snapshots, table).ok(),
        })
        .collect();
    let mut observation_counts = BTreeMap::new();
    for obs in &observations {
        *observation_counts.entry(obs.location).or_insert(0) += 1;
    }

    SiteReport {
        report_version: REPORT_VERSION,
        site: site.to_owned(),
        stages: session.stages.iter().map(|s| s.stage).collect(),
        cmp_detection,
        banner: session.interface_labels.map(|l| l.banner),
        revocation_channel: session.interface_labels.map(|l| l.revocation_channel),
        category,
        findings: dedup_findings(findings),
        party_reports,
        percentage_not_informed,
        aa_counts: counts,
        snapshots: summaries,
        observation_counts,
        not_applicable,
        warnings,
    }
}

/// One prevalence row: how many sites in the applicable set violate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub id: String,
    pub title: String,
    pub count: usize,
    pub denominator: usize,
    /// `100 * count / denominator`, truncated to two decimals.
    pub percent: Option<f64>,
    pub denominator_rule: String,
}

/// `100 * count / denominator` truncated (not rounded) to two decimals.
pub fn truncated_percent(count: usize, denominator: usize) -> Option<f64> {
    (denominator > 0).then(|| ((count as u128 * 10_000) / denominator as u128) as f64 / 100.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRow {
    pub banner: BannerKind,
    pub sites: usize,
    pub channels: BTreeMap<RevocationChannel, usize>,
    /// Sites without any revocation option that also store no AA cookies.
    pub no_revocation_without_tracking: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRow {
    pub source: SourceKind,
    pub using: usize,
    pub rejection_possible: usize,
    pub revocation_possible: usize,
    pub positive_initial: usize,
    pub positive_rejected: usize,
    pub positive_revoked: usize,
    pub not_updated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub report_version: u32,
    pub sites: usize,
    pub rows: Vec<SummaryRow>,
    pub channels: Vec<ChannelRow>,
    pub sources: Vec<SourceRow>,
    /// Sites with at least one uninformed third party, by share of
    /// uninformed parties.
    pub not_informed_histogram: Histogram,
}

impl CorpusSummary {
    pub fn row(&self, id: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("summaries serialize");
        out.push('\n');
        out
    }

    /// The prevalence rows as CSV with a header line.
    pub fn rows_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "title", "count", "denominator", "percent", "denominator_rule"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.id.clone(),
                r.title.clone(),
                r.count.to_string(),
                r.denominator.to_string(),
                r.percent.map(|p| format!("{p:.2}")).unwrap_or_default(),
                r.denominator_rule.clone(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

fn positive_revoked_in(report: &SiteReport, family: Family) -> bool {
    report.violations().any(|f| {
        f.kind == FindingKind::PositiveConsentAfterRevocation && f.source.is_some_and(|s| s.family() == family)
    })
}

struct RowSpec {
    id: &'static str,
    title: &'static str,
    rule: &'static str,
    applies: fn(&SiteReport) -> bool,
    violates: fn(&SiteReport) -> bool,
}

fn revocable(r: &SiteReport) -> bool {
    r.has_stage(Stage::Revoked)
}

const ROWS: [RowSpec; 7] = [
    RowSpec {
        id: "different_interface",
        title: "Revocation via a different interface or medium",
        rule: "sites with interface labels",
        applies: |r| r.category.is_some(),
        violates: |r| {
            r.has_violation(FindingKind::RevocationViaDifferentInterface)
                || r.has_violation(FindingKind::RevocationRequiresLogin)
        },
    },
    RowSpec {
        id: "effort_asymmetry",
        title: "Two or more steps to revoke vs zero steps to accept",
        rule: "sites with interface labels",
        applies: |r| r.category.is_some(),
        violates: |r| r.violations().any(|f| f.cites(LegalRule::LR3)),
    },
    RowSpec {
        id: "no_revocation_with_tracking",
        title: "No revocation option while AA cookies are stored",
        rule: "sites with interface labels",
        applies: |r| r.category.is_some(),
        violates: |r| r.has_violation(FindingKind::NoRevocationWithTracking),
    },
    RowSpec {
        id: "aa_cookies_after_revocation",
        title: "AA cookies kept or added after revocation",
        rule: "sites where revocation is possible within the same interface and a revoked stage was recorded",
        applies: |r| r.category.is_some_and(InterfaceCategory::within_same_interface) && revocable(r),
        violates: |r| r.has_violation(FindingKind::AaCookiesAfterRevocation),
    },
    RowSpec {
        id: "tcf_positive_after_revocation",
        title: "Positive consent after revocation (TCF consent string)",
        rule: "sites with a tcf api value and a revoked stage",
        applies: |r| r.uses_source(SourceKind::Tcfapi) && revocable(r),
        violates: |r| positive_revoked_in(r, Family::Tcf),
    },
    RowSpec {
        id: "onetrust_positive_after_revocation",
        title: "Positive consent after revocation (OneTrust groups)",
        rule: "sites with a OneTrust active-groups value and a revoked stage",
        applies: |r| r.uses_source(SourceKind::OnetrustActiveGroups) && revocable(r),
        violates: |r| positive_revoked_in(r, Family::OneTrust),
    },
    RowSpec {
        id: "third_party_not_informed",
        title: "Third parties informed of acceptance over HTTP but not of revocation",
        rule: "sites with a tcf api value and a revoked stage",
        applies: |r| r.uses_source(SourceKind::Tcfapi) && revocable(r),
        violates: |r| r.has_violation(FindingKind::ThirdPartyNotInformed),
    },
];

/// Folds site reports into prevalence rows, the channel matrix, the
/// per-source matrix and the not-informed histogram. The result does not
/// depend on the order of `reports`.
pub fn aggregate_corpus(reports: &[SiteReport]) -> CorpusSummary {
    let rows = ROWS
        .iter()
        .map(|spec| {
            let applicable: Vec<&SiteReport> = reports.iter().filter(|r| (spec.applies)(r)).collect();
            let count = applicable.iter().filter(|r| (spec.violates)(r)).count();
            SummaryRow {
                id: spec.id.to_owned(),
                title: spec.title.to_owned(),
                count,
                denominator: applicable.len(),
                percent: truncated_percent(count, applicable.len()),
                denominator_rule: spec.rule.to_owned(),
            }
        })
        .collect();

    let mut channels: BTreeMap<BannerKind, ChannelRow> = BTreeMap::new();
    for r in reports {
        let (Some(banner), Some(channel)) = (r.banner, r.revocation_channel) else {
            continue;
        };
        let row = channels.entry(banner).or_insert_with(|| ChannelRow {
            banner,
            sites: 0,
            channels: BTreeMap::new(),
            no_revocation_without_tracking: 0,
        });
        row.sites += 1;
        if r.findings.iter().any(|f| f.kind == FindingKind::NoRevocationNoTracking) {
            row.no_revocation_without_tracking += 1;
        } else {
            *row.channels.entry(channel).or_insert(0) += 1;
        }
    }

    let sources = SourceKind::ALL
        .iter()
        .map(|&source| {
            let using: Vec<&SiteReport> = reports.iter().filter(|r| r.uses_source(source)).collect();
            let positive = |stage: Stage| {
                using
                    .iter()
                    .filter(|r| {
                        r.snapshots
                            .iter()
                            .any(|s| s.source == source && s.stage == stage && s.class == Some(ConsentClass::Positive))
                    })
                    .count()
            };
            SourceRow {
                source,
                using: using.len(),
                rejection_possible: using.iter().filter(|r| r.has_stage(Stage::Rejected)).count(),
                revocation_possible: using.iter().filter(|r| r.has_stage(Stage::Revoked)).count(),
                positive_initial: positive(Stage::Initial),
                positive_rejected: positive(Stage::Rejected),
                positive_revoked: positive(Stage::Revoked),
                not_updated: using
                    .iter()
                    .filter(|r| {
                        r.findings
                            .iter()
                            .any(|f| f.kind == FindingKind::ConsentNotUpdated && f.source == Some(source))
                    })
                    .count(),
            }
        })
        .collect();

    let shares: Vec<f64> = reports
        .iter()
        .filter(|r| r.uses_source(SourceKind::Tcfapi) && revocable(r))
        .filter_map(|r| r.percentage_not_informed)
        .filter(|&p| p > 0.0)
        .collect();
    let not_informed_histogram = bucket_percentages(&shares).expect("shares are percentages");

    CorpusSummary {
        report_version: REPORT_VERSION,
        sites: reports.len(),
        rows,
        channels: channels.into_values().collect(),
        sources,
        not_informed_histogram,
    }
}

/// Highest severity across reports, if any finding exists.
pub fn worst_severity<'a>(reports: impl IntoIterator<Item = &'a SiteReport>) -> Option<Severity> {
    reports.into_iter().flat_map(|r| r.findings.iter().map(|f| f.severity)).max()
}

/// Distinct sites per finding kind, for quick overviews.
pub fn sites_per_kind(reports: &[SiteReport]) -> BTreeMap<FindingKind, BTreeSet<String>> {
    let mut out: BTreeMap<FindingKind, BTreeSet<String>> = BTreeMap::new();
    for r in reports {
        for f in &r.findings {
            out.entry(f.kind).or_default().insert(r.site.clone());
        }
    }
    out
}
