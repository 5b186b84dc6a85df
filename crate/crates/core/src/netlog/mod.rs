//! Consent strings travelling over the network: every TC string found in a
//! stage's requests, redirects and responses, with where it was found and
//! who received it.

mod extract;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use extract::{parse_html, parse_json, parse_raw_tokens, parse_url, HtmlHit, TcsHit};

use crate::capture::{BodyKind, RequestRecord, Stage, StageRecord};
use crate::parties::SuffixList;
use crate::tcs::{sniff_tcs, TcString};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    UrlQuery,
    PostDataJson,
    PostDataRaw,
    RequestCookieHeader,
    ResponseSetCookie,
    ResponseJson,
    ResponseHtmlUrl,
    RedirectUrl,
}

impl Location {
    pub const ALL: [Location; 8] = [
        Location::UrlQuery,
        Location::PostDataJson,
        Location::PostDataRaw,
        Location::RequestCookieHeader,
        Location::ResponseSetCookie,
        Location::ResponseJson,
        Location::ResponseHtmlUrl,
        Location::RedirectUrl,
    ];

    pub fn direction(self) -> Direction {
        match self {
            Location::UrlQuery
            | Location::PostDataJson
            | Location::PostDataRaw
            | Location::RequestCookieHeader => Direction::Outgoing,
            _ => Direction::Incoming,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Location::UrlQuery => "url_query",
            Location::PostDataJson => "post_data_json",
            Location::PostDataRaw => "post_data_raw",
            Location::RequestCookieHeader => "request_cookie_header",
            Location::ResponseSetCookie => "response_set_cookie",
            Location::ResponseJson => "response_json",
            Location::ResponseHtmlUrl => "response_html_url",
            Location::RedirectUrl => "redirect_url",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Outgoing,
    Incoming,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentObservation {
    pub value: TcString,
    pub raw: String,
    pub location: Location,
    /// Parameter name, JSON path or cookie name, when there is one.
    pub field: Option<String>,
    pub direction: Direction,
    pub stage: Stage,
    pub request_id: String,
    pub request_url: String,
    pub initiator_url: Option<String>,
    pub timestamp: DateTime<Utc>,
    /// Registrable domain of `request_url`.
    pub receiver_party: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanOptions {
    /// Response bodies longer than this are truncated before scanning.
    pub max_body_bytes: usize,
}

pub const DEFAULT_MAX_BODY_BYTES: usize = 4 * 1024 * 1024;

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StageScan {
    pub observations: Vec<ConsentObservation>,
    pub warnings: Vec<String>,
}

fn truncate_body<'a>(body: &'a str, cap: usize, req: &RequestRecord, warnings: &mut Vec<String>) -> &'a str {
    if body.len() <= cap {
        return body;
    }
    let mut end = cap;
    while !body.is_char_boundary(end) {
        end -= 1;
    }
    warnings.push(format!(
        "request {}: response body of {} bytes truncated to {end}",
        req.id,
        body.len()
    ));
    &body[..end]
}

/// Name and value of each `name=value` pair in a Cookie header.
fn cookie_pairs(header: &str) -> impl Iterator<Item = (&str, &str)> {
    header.split(';').filter_map(|pair| {
        let (name, value) = pair.split_once('=')?;
        Some((name.trim(), value.trim().trim_matches('"')))
    })
}

fn sniffed(field: &str, value: &str) -> Option<TcsHit> {
    sniff_tcs(value).map(|tcs| TcsHit {
        field: Some(field.to_owned()),
        raw: value.to_owned(),
        tcs,
    })
}

/// All TC string hits in one request, paired with their location.
pub fn scan_request(req: &RequestRecord, options: &ScanOptions, warnings: &mut Vec<String>) -> Vec<(Location, TcsHit)> {
    let mut hits = Vec::new();
    hits.extend(parse_url(&req.url).into_iter().map(|h| (Location::UrlQuery, h)));

    if let Some(post) = &req.post_data {
        if serde_json::from_str::<serde_json::Value>(post).is_ok() {
            hits.extend(parse_json(post).into_iter().map(|h| (Location::PostDataJson, h)));
        } else {
            hits.extend(parse_raw_tokens(post).into_iter().map(|h| (Location::PostDataRaw, h)));
        }
    }

    for header in req.headers_named("cookie") {
        for (name, value) in cookie_pairs(header) {
            if let Some(hit) = sniffed(name, value) {
                hits.push((Location::RequestCookieHeader, hit));
            }
        }
    }

    let Some(resp) = &req.response else {
        return hits;
    };
    if let Some(redirect) = &resp.redirect_url {
        hits.extend(parse_url(redirect).into_iter().map(|h| (Location::RedirectUrl, h)));
    }
    if let Some(body) = &resp.body {
        let body = truncate_body(body, options.max_body_bytes, req, warnings);
        match resp.body_kind {
            BodyKind::Json => hits.extend(parse_json(body).into_iter().map(|h| (Location::ResponseJson, h))),
            BodyKind::Html => hits.extend(
                parse_html(body, Some(&req.url))
                    .into_iter()
                    .map(|h| (Location::ResponseHtmlUrl, h.hit)),
            ),
            BodyKind::Other | BodyKind::None => {}
        }
    }
    // one header may carry several cookies separated by newlines
    for header in resp.headers_named("set-cookie") {
        for line in header.lines() {
            let first = line.split(';').next().unwrap_or_default();
            if let Some((name, value)) = first.split_once('=') {
                if let Some(hit) = sniffed(name.trim(), value.trim().trim_matches('"')) {
                    hits.push((Location::ResponseSetCookie, hit));
                }
            }
        }
    }
    hits
}

/// Every consent-string observation in a stage, ordered by request
/// timestamp then request id. Problems with single requests become warnings.
pub fn scan_stage(record: &StageRecord, suffixes: &SuffixList, options: &ScanOptions) -> StageScan {
    let mut scan = StageScan::default();
    for req in &record.requests {
        let hits = scan_request(req, options, &mut scan.warnings);
        if hits.is_empty() {
            continue;
        }
        let receiver_party = match suffixes.registrable_domain(&req.url) {
            Ok(party) => party,
            Err(e) => {
                scan.warnings.push(format!("request {}: {e}", req.id));
                req.url.to_ascii_lowercase()
            }
        };
        for (location, hit) in hits {
            scan.observations.push(ConsentObservation {
                value: hit.tcs,
                raw: hit.raw,
                location,
                field: hit.field,
                direction: location.direction(),
                stage: record.stage,
                request_id: req.id.clone(),
                request_url: req.url.clone(),
                initiator_url: req.initiator_url.clone(),
                timestamp: req.timestamp,
                receiver_party: receiver_party.clone(),
            });
        }
    }
    // stable sort keeps the within-request order
    scan.observations
        .sort_by(|a, b| (a.timestamp, &a.request_id).cmp(&(b.timestamp, &b.request_id)));
    scan
}
