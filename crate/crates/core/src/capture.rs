//! The recorded crawl-session format.
//!
//! One JSON document per site. Each document holds up to four stage records
//! (initial landing, after acceptance, after revocation, and after rejection
//! from a fresh profile) with the browser storage, consent API state, API
//! access log and network log captured at that stage.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::onetrust::OPTANON_COOKIE;
use crate::tcs::sniff_tcs;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at {path}: {message}")]
    SchemaError { path: String, message: String },
    #[error("invariant violated: {0}")]
    InvariantError(String),
    #[error("unsupported schema_version {0}")]
    VersionError(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initial,
    Accepted,
    Revoked,
    Rejected,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Initial, Stage::Accepted, Stage::Revoked, Stage::Rejected];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Initial => "initial",
            Stage::Accepted => "accepted",
            Stage::Revoked => "revoked",
            Stage::Rejected => "rejected",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureSession {
    pub schema_version: u64,
    pub site: String,
    pub crawl_time: DateTime<Utc>,
    pub interface_labels: Option<InterfaceLabels>,
    pub stages: Vec<StageRecord>,
}

impl CaptureSession {
    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn has_stage(&self, stage: Stage) -> bool {
        self.stage(stage).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRecord {
    pub stage: Stage,
    /// Completion time of the user action that started this stage. Optional
    /// for legacy captures; without it timing-based checks lose precision.
    pub stage_event_time: Option<DateTime<Utc>>,
    pub cookies: Vec<CookieRecord>,
    pub local_storage: Vec<LocalStorageEntry>,
    pub api_snapshots: ApiSnapshots,
    pub api_accesses: Vec<ApiAccess>,
    pub requests: Vec<RequestRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CookieRecord {
    pub name: String,
    /// Verbatim, percent-encoded as received.
    pub value: String,
    pub domain: String,
    pub path: String,
    pub expires: Option<DateTime<Utc>>,
    pub set_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalStorageEntry {
    pub origin: String,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiSnapshots {
    pub tcfapi_tc_string: Option<String>,
    pub tcfapi_gdpr_applies: Option<bool>,
    pub onetrust_active_groups: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiKind {
    Tcfapi,
    OnetrustGroupsGet,
    OnetrustGroupsSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiAccess {
    pub api: ApiKind,
    pub command: Option<String>,
    pub accessor_script_url: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub name: String,
    pub value: String,
}

impl Header {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyKind {
    Json,
    Html,
    Other,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseRecord {
    pub status: u16,
    pub headers: Vec<Header>,
    pub redirect_url: Option<String>,
    pub body_kind: BodyKind,
    pub body: Option<String>,
}

impl ResponseRecord {
    pub fn headers_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.headers
            .iter()
            .filter(move |h| h.name.eq_ignore_ascii_case(name))
            .map(|h| h.value.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestRecord {
    pub id: String,
    pub url: String,
    pub method: String,
    pub timestamp: DateTime<Utc>,
    pub initiator_url: Option<String>,
    pub post_data: Option<String>,
    pub request_headers: Vec<Header>,
    pub response: Option<ResponseRecord>,
}

impl RequestRecord {
    pub fn headers_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.request_headers
            .iter()
            .filter(move |h| h.name.eq_ignore_ascii_case(name))
            .map(|h| h.value.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BannerKind {
    ConsentBanner,
    NoOptionBanner,
    NoBanner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevocationChannel {
    Icon,
    Footer,
    BannerOnPolicy,
    ViaPolicy,
    SettingsOrLinks,
    ContactEmail,
    AfterLogin,
    Paywall,
    /// A revocation option is mentioned but does not work.
    OptionNotWorking,
    None,
}

impl RevocationChannel {
    pub const ALL: [RevocationChannel; 10] = [
        RevocationChannel::Icon,
        RevocationChannel::Footer,
        RevocationChannel::BannerOnPolicy,
        RevocationChannel::ViaPolicy,
        RevocationChannel::SettingsOrLinks,
        RevocationChannel::ContactEmail,
        RevocationChannel::AfterLogin,
        RevocationChannel::Paywall,
        RevocationChannel::OptionNotWorking,
        RevocationChannel::None,
    ];

    /// Channels on which a step count is meaningful.
    pub fn has_steps(self) -> bool {
        matches!(
            self,
            RevocationChannel::Icon
                | RevocationChannel::Footer
                | RevocationChannel::BannerOnPolicy
                | RevocationChannel::ViaPolicy
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RevocationChannel::Icon => "icon",
            RevocationChannel::Footer => "footer",
            RevocationChannel::BannerOnPolicy => "banner_on_policy",
            RevocationChannel::ViaPolicy => "via_policy",
            RevocationChannel::SettingsOrLinks => "settings_or_links",
            RevocationChannel::ContactEmail => "contact_email",
            RevocationChannel::AfterLogin => "after_login",
            RevocationChannel::Paywall => "paywall",
            RevocationChannel::OptionNotWorking => "option_not_working",
            RevocationChannel::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceLabels {
    pub banner: BannerKind,
    pub revocation_channel: RevocationChannel,
    pub steps_to_revoke: Option<u32>,
    pub steps_to_accept: Option<u32>,
}

pub fn load_session(path: impl AsRef<Path>) -> Result<CaptureSession, CaptureError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CaptureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_session(&text)
}

pub fn load_session_from_reader(mut reader: impl Read) -> Result<CaptureSession, CaptureError> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|source| CaptureError::Io {
        path: "<stream>".into(),
        source,
    })?;
    parse_session(&text)
}

pub fn parse_session(text: &str) -> Result<CaptureSession, CaptureError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CaptureError::SchemaError {
        path: ".".into(),
        message: e.to_string(),
    })?;
    match value.get("schema_version") {
        None => {
            return Err(CaptureError::SchemaError {
                path: "schema_version".into(),
                message: "missing field".into(),
            })
        }
        Some(v) => match v.as_u64() {
            Some(SCHEMA_VERSION) => {}
            Some(other) => return Err(CaptureError::VersionError(other)),
            None => {
                return Err(CaptureError::SchemaError {
                    path: "schema_version".into(),
                    message: format!("expected an unsigned integer, found {v}"),
                })
            }
        },
    }
    let session: CaptureSession =
        serde_path_to_error::deserialize(value).map_err(|e| CaptureError::SchemaError {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    validate(&session)?;
    Ok(session)
}

pub fn dump_session(session: &CaptureSession) -> String {
    let mut out = serde_json::to_string_pretty(session).expect("capture sessions always serialize");
    out.push('\n');
    out
}

/// Checks the invariants that the type system does not enforce.
pub fn validate(session: &CaptureSession) -> Result<(), CaptureError> {
    let fail = |msg: String| Err(CaptureError::InvariantError(msg));
    if session.site.trim().is_empty() {
        return fail("site is empty".into());
    }

    let mut seen = HashSet::new();
    let mut last_chain: Option<Stage> = None;
    for record in &session.stages {
        if !seen.insert(record.stage) {
            return fail(format!("duplicate stage {}", record.stage));
        }
        // initial -> accepted -> revoked; rejected comes from a fresh profile
        if record.stage != Stage::Rejected {
            if let Some(prev) = last_chain {
                if record.stage < prev {
                    return fail(format!("stage {} recorded after {}", record.stage, prev));
                }
            }
            last_chain = Some(record.stage);
        }
        validate_stage(record)?;
    }

    if let Some(labels) = &session.interface_labels {
        if labels.revocation_channel.has_steps() != labels.steps_to_revoke.is_some() {
            return fail(format!(
                "steps_to_revoke must be {} for revocation channel {}",
                if labels.revocation_channel.has_steps() { "present" } else { "absent" },
                labels.revocation_channel.as_str()
            ));
        }
    }
    Ok(())
}

fn validate_stage(record: &StageRecord) -> Result<(), CaptureError> {
    let stage = record.stage;
    let fail = |msg: String| Err(CaptureError::InvariantError(format!("stage {stage}: {msg}")));

    if let Some(c) = record.cookies.iter().find(|c| c.name.is_empty()) {
        return fail(format!("cookie with empty name on domain {}", c.domain));
    }
    for access in &record.api_accesses {
        if (access.api == ApiKind::Tcfapi) != access.command.is_some() {
            return fail(format!(
                "api access by {} must carry a command iff it targets the tcf api",
                access.accessor_script_url
            ));
        }
    }
    let mut ids = HashSet::new();
    for req in &record.requests {
        if !ids.insert(req.id.as_str()) {
            return fail(format!("duplicate request id {}", req.id));
        }
        if let Some(resp) = &req.response {
            if resp.body.is_some() && resp.body_kind == BodyKind::None {
                return fail(format!("request {} has a body with body_kind none", req.id));
            }
        }
        if stage != Stage::Initial {
            if let Some(event) = record.stage_event_time {
                if req.timestamp < event {
                    return fail(format!("request {} precedes the stage event", req.id));
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CmpDetection {
    pub tcf: bool,
    pub onetrust: bool,
    pub evidence: Vec<String>,
}

pub fn detect_cmps(session: &CaptureSession) -> CmpDetection {
    let mut out = CmpDetection::default();
    for record in &session.stages {
        if let Some(text) = &record.api_snapshots.tcfapi_tc_string {
            if let Some(tc) = sniff_tcs(text) {
                out.tcf = true;
                out.evidence.push(format!(
                    "{}: tcf api returned a TC string (cmp_id {})",
                    record.stage, tc.core.cmp_id
                ));
            }
        }
        if record.cookies.iter().any(|c| c.name == OPTANON_COOKIE) {
            out.onetrust = true;
            out.evidence.push(format!("{}: {OPTANON_COOKIE} cookie present", record.stage));
        }
    }
    out
}
