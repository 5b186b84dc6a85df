//! Deterministic fixture corpora, shared by the integration tests and the
//! `gen_fixtures` example that writes them to `tests/fixtures`.
//!
//! Every corpus is built from a seeded RNG so regenerating gives byte-equal
//! files. Each corpus also gets a `manifest.json` recording what was planted,
//! which the tests use as the expected values.

#![allow(dead_code)]


use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeDelta, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use consent_audit::capture::{
    dump_session, ApiAccess, ApiKind, ApiSnapshots, BannerKind, BodyKind, CaptureSession, CookieRecord, Header,
    InterfaceLabels, LocalStorageEntry, RequestRecord, ResponseRecord, RevocationChannel, Stage, StageRecord,
    SCHEMA_VERSION,
};
use consent_audit::config::AuditConfig;
use consent_audit::tcs::{encode_tc_core, Alpha2, TcCore};

/// 2024-03-01T10:00:00Z, the crawl start of every generated session.
pub const T0: i64 = 1_709_287_200;
pub const ACCEPT_AT: i64 = 60;
pub const REVOKE_AT: i64 = 120;
pub const REJECT_AT: i64 = 300;

/// Purposes granted on acceptance.
pub const ALL_PURPOSES: [u8; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

pub fn at_ms(ms: i64) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(T0 * 1000 + ms).expect("timestamp in range")
}

pub fn at(secs: i64) -> DateTime<Utc> {
    at_ms(secs * 1000)
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcSpec {
    pub purposes: Vec<u8>,
    pub vendors: Vec<u16>,
    pub cmp_id: u16,
    pub screen: u8,
    /// Seconds after `T0` for `LastUpdated`.
    pub updated: i64,
}

impl TcSpec {
    pub fn new(purposes: &[u8], vendors: &[u16], cmp_id: u16) -> Self {
        Self {
            purposes: purposes.to_vec(),
            vendors: vendors.to_vec(),
            cmp_id,
            screen: 1,
            updated: 0,
        }
    }

    pub fn updated(mut self, secs: i64) -> Self {
        self.updated = secs;
        self
    }

    pub fn screen(mut self, screen: u8) -> Self {
        self.screen = screen;
        self
    }

    pub fn core(&self) -> TcCore {
        TcCore {
            created: (T0 * 10) as u64,
            last_updated: ((T0 + self.updated) * 10) as u64,
            cmp_id: self.cmp_id,
            cmp_version: 3,
            consent_screen: self.screen,
            consent_language: Alpha2::new("EN").expect("valid code"),
            vendor_list_version: 180,
            policy_version: 4,
            publisher_cc: Alpha2::new("DE").expect("valid code"),
            purposes_consent: self.purposes.iter().copied().collect(),
            vendor_consents: self.vendors.iter().copied().collect(),
            ..TcCore::default()
        }
    }

    pub fn encode(&self) -> String {
        encode_tc_core(&self.core(), &[]).expect("generated cores encode")
    }
}

pub fn cookie(name: &str, value: &str, domain: &str) -> CookieRecord {
    CookieRecord {
        name: name.into(),
        value: value.into(),
        domain: domain.into(),
        path: "/".into(),
        expires: None,
        set_at: None,
    }
}

pub fn get(url: &str, t: DateTime<Utc>) -> RequestRecord {
    RequestRecord {
        id: String::new(),
        url: url.into(),
        method: "GET".into(),
        timestamp: t,
        initiator_url: None,
        post_data: None,
        request_headers: Vec::new(),
        response: None,
    }
}

pub fn post(url: &str, body: &str, t: DateTime<Utc>) -> RequestRecord {
    RequestRecord {
        method: "POST".into(),
        post_data: Some(body.into()),
        ..get(url, t)
    }
}

pub fn response(status: u16) -> ResponseRecord {
    ResponseRecord {
        status,
        headers: Vec::new(),
        redirect_url: None,
        body_kind: BodyKind::None,
        body: None,
    }
}

pub fn body(kind: BodyKind, text: &str) -> ResponseRecord {
    ResponseRecord {
        body_kind: kind,
        body: Some(text.into()),
        ..response(200)
    }
}

/// Assembles one stage; request ids are assigned in insertion order.
pub struct StageBuilder {
    rec: StageRecord,
}

impl StageBuilder {
    pub fn new(stage: Stage, event: Option<DateTime<Utc>>) -> Self {
        Self {
            rec: StageRecord {
                stage,
                stage_event_time: event,
                cookies: Vec::new(),
                local_storage: Vec::new(),
                api_snapshots: ApiSnapshots::default(),
                api_accesses: Vec::new(),
                requests: Vec::new(),
            },
        }
    }

    /// The usual stage event times of the generated corpora.
    pub fn standard(stage: Stage) -> Self {
        let event = match stage {
            Stage::Initial => None,
            Stage::Accepted => Some(at(ACCEPT_AT)),
            Stage::Revoked => Some(at(REVOKE_AT)),
            Stage::Rejected => Some(at(REJECT_AT)),
        };
        Self::new(stage, event)
    }

    pub fn cookie(mut self, c: CookieRecord) -> Self {
        self.rec.cookies.push(c);
        self
    }

    pub fn storage(mut self, origin: &str, key: &str, value: &str) -> Self {
        self.rec.local_storage.push(LocalStorageEntry {
            origin: origin.into(),
            key: key.into(),
            value: value.into(),
        });
        self
    }

    pub fn tcfapi(mut self, value: &str) -> Self {
        self.rec.api_snapshots.tcfapi_tc_string = Some(value.into());
        self.rec.api_snapshots.tcfapi_gdpr_applies = Some(true);
        self
    }

    pub fn active_groups(mut self, value: &str) -> Self {
        self.rec.api_snapshots.onetrust_active_groups = Some(value.into());
        self
    }

    pub fn access(mut self, api: ApiKind, command: Option<&str>, script: &str, t: DateTime<Utc>) -> Self {
        self.rec.api_accesses.push(ApiAccess {
            api,
            command: command.map(str::to_owned),
            accessor_script_url: script.into(),
            timestamp: t,
        });
        self
    }

    pub fn request(mut self, mut req: RequestRecord) -> Self {
        req.id = format!("{}-{:03}", self.rec.stage, self.rec.requests.len() + 1);
        self.rec.requests.push(req);
        self
    }

    pub fn build(self) -> StageRecord {
        self.rec
    }
}

pub fn session(site: &str, labels: Option<InterfaceLabels>, stages: Vec<StageRecord>) -> CaptureSession {
    CaptureSession {
        schema_version: SCHEMA_VERSION,
        site: site.into(),
        crawl_time: at(0),
        interface_labels: labels,
        stages,
    }
}

pub fn labels(
    banner: BannerKind,
    channel: RevocationChannel,
    revoke: Option<u32>,
    accept: Option<u32>,
) -> InterfaceLabels {
    InterfaceLabels {
        banner,
        revocation_channel: channel,
        steps_to_revoke: revoke,
        steps_to_accept: accept,
    }
}

fn page(site: &str, secs: i64) -> RequestRecord {
    let mut req = get(&format!("https://www.{site}/"), at(secs));
    req.response = Some(body(BodyKind::Html, "<html><body><p>news</p></body></html>"));
    req
}

// ---------------------------------------------------------------------------
// Interface corpus: 161 labelled sites.

/// (banner, channel, sites) rows of the labelled interface corpus.
pub const INTERFACE_ROWS: [(BannerKind, RevocationChannel, usize); 15] = [
    (BannerKind::ConsentBanner, RevocationChannel::Icon, 9),
    (BannerKind::ConsentBanner, RevocationChannel::Footer, 63),
    (BannerKind::ConsentBanner, RevocationChannel::BannerOnPolicy, 6),
    (BannerKind::ConsentBanner, RevocationChannel::ViaPolicy, 21),
    (BannerKind::ConsentBanner, RevocationChannel::SettingsOrLinks, 8),
    (BannerKind::ConsentBanner, RevocationChannel::AfterLogin, 1),
    (BannerKind::NoOptionBanner, RevocationChannel::ViaPolicy, 5),
    (BannerKind::NoOptionBanner, RevocationChannel::SettingsOrLinks, 2),
    (BannerKind::NoOptionBanner, RevocationChannel::AfterLogin, 1),
    (BannerKind::NoBanner, RevocationChannel::Footer, 4),
    (BannerKind::NoBanner, RevocationChannel::BannerOnPolicy, 5),
    (BannerKind::NoBanner, RevocationChannel::ViaPolicy, 7),
    (BannerKind::NoBanner, RevocationChannel::SettingsOrLinks, 17),
    (BannerKind::NoBanner, RevocationChannel::ContactEmail, 3),
    (BannerKind::NoBanner, RevocationChannel::None, 9),
];

/// Within-same-interface sites that keep AA cookies after revocation.
pub const INTERFACE_AA_AFTER_REVOCATION: usize = 69;
/// Sites without a revocation option that store AA cookies.
pub const INTERFACE_NONE_WITH_AA: usize = 4;

#[derive(Debug, Clone)]
struct InterfaceSite {
    banner: BannerKind,
    channel: RevocationChannel,
    steps: Option<u32>,
    aa_revoked: bool,
    aa_any: bool,
}

fn same_interface(channel: RevocationChannel) -> bool {
    matches!(
        channel,
        RevocationChannel::Icon | RevocationChannel::Footer | RevocationChannel::BannerOnPolicy | RevocationChannel::ViaPolicy
    )
}

fn interface_session(site: &str, spec: &InterfaceSite) -> CaptureSession {
    let accept_steps = (spec.banner == BannerKind::ConsentBanner).then_some(0);
    let l = labels(spec.banner, spec.channel, spec.steps, accept_steps);
    let session_cookie = cookie("PHPSESSID", "8f2c1e", &format!("www.{site}"));
    let aa = [
        cookie("_ga", "GA1.2.1771.1709287", &format!(".{site}")),
        cookie("IDE", "AHWqTUk1", ".doubleclick.net"),
    ];
    let analytics = |secs| {
        let mut r = get("https://www.google-analytics.com/analytics.js", at(secs));
        r.initiator_url = Some(format!("https://www.{site}/"));
        r
    };

    let mut initial = StageBuilder::standard(Stage::Initial)
        .cookie(session_cookie.clone())
        .request(page(site, 1));
    if spec.channel == RevocationChannel::None {
        if spec.aa_any {
            initial = initial.cookie(aa[0].clone()).cookie(aa[1].clone()).request(analytics(2));
        }
        return session(site, Some(l), vec![initial.build()]);
    }

    let accepted = StageBuilder::standard(Stage::Accepted)
        .cookie(session_cookie.clone())
        .cookie(aa[0].clone())
        .cookie(aa[1].clone())
        .request(page(site, ACCEPT_AT + 2))
        .request(analytics(ACCEPT_AT + 3));
    let mut stages = vec![initial.build(), accepted.build()];
    if same_interface(spec.channel) {
        let mut revoked = StageBuilder::standard(Stage::Revoked)
            .cookie(session_cookie)
            .request(page(site, REVOKE_AT + 2));
        if spec.aa_revoked {
            revoked = revoked
                .cookie(aa[0].clone())
                .cookie(aa[1].clone())
                .request(analytics(REVOKE_AT + 3));
        }
        stages.push(revoked.build());
    }
    session(site, Some(l), stages)
}

pub fn interface_corpus() -> (Vec<CaptureSession>, Value) {
    let mut rng = ChaCha8Rng::seed_from_u64(161);
    let mut specs: Vec<InterfaceSite> = Vec::new();
    for (banner, channel, n) in INTERFACE_ROWS {
        for _ in 0..n {
            let steps = match channel {
                RevocationChannel::Icon => Some(0),
                RevocationChannel::Footer | RevocationChannel::BannerOnPolicy => Some(1),
                RevocationChannel::ViaPolicy => Some(rng.random_range(2..=4)),
                _ => None,
            };
            specs.push(InterfaceSite {
                banner,
                channel,
                steps,
                aa_revoked: false,
                aa_any: channel != RevocationChannel::None,
            });
        }
    }
    let mut same: Vec<usize> = (0..specs.len()).filter(|&i| same_interface(specs[i].channel)).collect();
    same.shuffle(&mut rng);
    for &i in same.iter().take(INTERFACE_AA_AFTER_REVOCATION) {
        specs[i].aa_revoked = true;
    }
    let mut none: Vec<usize> = (0..specs.len())
        .filter(|&i| specs[i].channel == RevocationChannel::None)
        .collect();
    none.shuffle(&mut rng);
    for (rank, &i) in none.iter().enumerate() {
        specs[i].aa_any = rank < INTERFACE_NONE_WITH_AA;
    }
    specs.shuffle(&mut rng);

    let mut sessions = Vec::new();
    let mut manifest = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let site = format!("site-{:03}.example", i + 1);
        sessions.push(interface_session(&site, spec));
        manifest.push(json!({
            "site": site,
            "banner": spec.banner,
            "revocation_channel": spec.channel,
            "steps_to_revoke": spec.steps,
            "aa_after_revocation": spec.aa_revoked,
            "aa_cookies": spec.aa_any,
        }));
    }
    (sessions, json!({ "sites": manifest }))
}

// ---------------------------------------------------------------------------
// TCF corpus: 136 sites with a revoked stage.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ApiProfile {
    /// Negative after revocation.
    Normal,
    /// Revoked value equals the accepted one.
    NotUpdated,
    /// Changed on revocation but still positive.
    ChangedPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StoreProfile {
    /// Holds the same value as the API at every stage.
    Mirror,
    /// Keeps the accepted value after revocation.
    Stale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PartyProfile {
    /// `informed` parties receive consent at acceptance, `not_informed` of
    /// them hear nothing new after revocation.
    Shares { informed: usize, not_informed: usize },
    /// Consent strings only go to the first party.
    FirstPartyOnly,
}

#[derive(Debug, Clone)]
struct TcfSite {
    api: ApiProfile,
    cookie: Option<StoreProfile>,
    storage: Option<StoreProfile>,
    positive_initial: bool,
    api_positive_rejected: bool,
    storage_positive_rejected: bool,
    rejected: bool,
    parties: PartyProfile,
}

impl TcfSite {
    fn normal() -> Self {
        Self {
            api: ApiProfile::Normal,
            cookie: None,
            storage: None,
            positive_initial: false,
            api_positive_rejected: false,
            storage_positive_rejected: false,
            rejected: true,
            parties: PartyProfile::FirstPartyOnly,
        }
    }
}

pub const PARTY_POOL: [&str; 24] = [
    "adnexio.com",
    "bidlane.net",
    "pixelhub.io",
    "tagrail.com",
    "audigrid.net",
    "clickmesh.com",
    "syncpoint.io",
    "trackwell.net",
    "admantle.com",
    "beaconry.io",
    "rtbforge.com",
    "segmently.net",
    "idbridge.io",
    "cookiesync.com",
    "datavane.net",
    "impresso.io",
    "yieldpath.com",
    "matchkit.net",
    "reachlayer.io",
    "spotbid.com",
    "metricon.net",
    "promoflux.io",
    "lookalike.com",
    "viewpulse.net",
];

/// Party domains listed as known trackers in the fixture configuration.
pub fn tracking_pool() -> Vec<&'static str> {
    PARTY_POOL.iter().copied().step_by(2).collect()
}

/// Revocation not-informed profiles (informed at acceptance, not informed
/// after revocation) besides the all-uninformed ones.
const SHARE_PROFILES: [((usize, usize), usize); 9] = [
    ((5, 1), 1),
    ((4, 1), 3),
    ((5, 2), 2),
    ((4, 2), 5),
    ((5, 3), 5),
    ((3, 2), 5),
    ((4, 3), 15),
    ((5, 4), 10),
    ((8, 7), 10),
];
const ALL_UNINFORMED_SITES: usize = 45;
const ALL_INFORMED_SITES: usize = 20;
const FIRST_PARTY_ONLY_SITES: usize = 15;

/// Sends `tcs` to `party` over one of three outgoing channels.
fn consent_request(site: &str, party: &str, channel: usize, tcs: &str, t: DateTime<Utc>) -> RequestRecord {
    let mut req = match channel % 3 {
        0 => get(&format!("https://px.{party}/sync?gdpr=1&gdpr_consent={tcs}"), t),
        1 => post(
            &format!("https://bid.{party}/openrtb2/auction"),
            &json!({"id": "a1", "regs": {"ext": {"gdpr": 1}}, "user": {"ext": {"consent": tcs}}}).to_string(),
            t,
        ),
        _ => {
            let mut r = get(&format!("https://cdn.{party}/p.gif"), t);
            r.request_headers.push(Header::new("Cookie", format!("uid=77a1; euconsent-v2={tcs}")));
            r
        }
    };
    req.initiator_url = Some(format!("https://www.{site}/"));
    req
}

fn plain_request(site: &str, party: &str, t: DateTime<Utc>, set_cookie: bool) -> RequestRecord {
    let mut req = get(&format!("https://px.{party}/sync?gdpr=1"), t);
    req.initiator_url = Some(format!("https://www.{site}/"));
    if set_cookie {
        let mut resp = response(200);
        resp.headers
            .push(Header::new("Set-Cookie", format!("uid=5e0b2; Domain=.{party}; Path=/; Max-Age=31536000")));
        req.response = Some(resp);
    }
    req
}

fn tcf_session(site: &str, spec: &TcfSite, parties: &[&str], vendors: &[u16], cmp_id: u16) -> CaptureSession {
    let empty = TcSpec::new(&[], &[], cmp_id).screen(0);
    let accepted = TcSpec::new(&ALL_PURPOSES, vendors, cmp_id).updated(ACCEPT_AT);
    let revoked = match spec.api {
        ApiProfile::Normal => TcSpec::new(&[1], &[], cmp_id).updated(REVOKE_AT),
        ApiProfile::NotUpdated => accepted.clone(),
        ApiProfile::ChangedPositive => TcSpec::new(&[1, 2, 3, 4], &vendors[..vendors.len().div_ceil(2)], cmp_id)
            .updated(REVOKE_AT),
    };
    let initial_api = if spec.positive_initial { accepted.encode() } else { empty.encode() };
    let accepted_s = accepted.encode();
    let revoked_s = revoked.encode();
    let rejected_s = if spec.api_positive_rejected {
        TcSpec::new(&ALL_PURPOSES, vendors, cmp_id).updated(REJECT_AT).encode()
    } else {
        TcSpec::new(&[1], &[], cmp_id).updated(REJECT_AT).encode()
    };
    let origin = format!("https://www.{site}");
    let session_cookie = cookie("PHPSESSID", "31d0aa", &format!("www.{site}"));
    let consent_cookie = |v: &str| cookie("euconsent-v2", v, &format!(".{site}"));
    let stored = |profile: Option<StoreProfile>, stage: Stage, api: &str| -> Option<String> {
        profile.map(|p| match (p, stage) {
            (StoreProfile::Stale, Stage::Revoked) => accepted_s.clone(),
            _ => api.to_owned(),
        })
    };
    let first_party = |tcs: &str, secs: i64| {
        let mut r = get(&format!("https://www.{site}/api/consent?tcf={tcs}"), at(secs));
        r.initiator_url = Some(format!("{origin}/"));
        r
    };

    let mut stages = Vec::new();
    for (stage, api) in [
        (Stage::Initial, &initial_api),
        (Stage::Accepted, &accepted_s),
        (Stage::Revoked, &revoked_s),
    ] {
        let base = match stage {
            Stage::Accepted => ACCEPT_AT,
            Stage::Revoked => REVOKE_AT,
            _ => 0,
        };
        let mut b = StageBuilder::standard(stage)
            .tcfapi(api)
            .cookie(session_cookie.clone())
            .request(page(site, base + 1));
        if let Some(v) = stored(spec.cookie, stage, api) {
            b = b.cookie(consent_cookie(&v));
        }
        if let Some(v) = stored(spec.storage, stage, api) {
            b = b.storage(&origin, "tcString", &v);
        }
        if stage != Stage::Initial {
            b = b.request(first_party(api, base + 2));
        }
        if let PartyProfile::Shares { informed, not_informed } = spec.parties {
            let reinformed = informed - not_informed;
            for (j, party) in parties.iter().enumerate() {
                let t = at(base + 10 + j as i64);
                let script = format!("https://cdn.{party}/tag.js");
                match stage {
                    Stage::Accepted => {
                        b = b.request(consent_request(site, party, j, api, t));
                        if j == 0 {
                            b = b.access(ApiKind::Tcfapi, Some("getTCData"), &script, at(base + 5));
                        }
                    }
                    Stage::Revoked if j < reinformed => {
                        b = b.request(consent_request(site, party, j, api, t));
                        if j == 0 {
                            b = b.access(ApiKind::Tcfapi, Some("getTCData"), &script, at(base + 5));
                        }
                    }
                    Stage::Revoked if spec.api == ApiProfile::NotUpdated => {
                        // the unchanged value keeps flowing to everyone
                        b = b.request(consent_request(site, party, j, api, t));
                    }
                    Stage::Revoked if spec.api == ApiProfile::Normal => {
                        b = b.request(plain_request(site, party, t, j % 2 == 0));
                    }
                    _ => {}
                }
            }
        }
        stages.push(b.build());
    }
    if spec.rejected {
        let mut b = StageBuilder::standard(Stage::Rejected)
            .tcfapi(&rejected_s)
            .cookie(session_cookie.clone())
            .request(page(site, REJECT_AT + 1));
        if spec.cookie.is_some() {
            b = b.cookie(consent_cookie(&rejected_s));
        }
        if spec.storage.is_some() {
            let v = if spec.storage_positive_rejected { &accepted_s } else { &rejected_s };
            b = b.storage(&origin, "tcString", v);
        }
        stages.push(b.build());
    }
    session(
        site,
        Some(labels(
            BannerKind::ConsentBanner,
            RevocationChannel::Footer,
            Some(1),
            Some(0),
        )),
        stages,
    )
}

pub fn tcf_corpus() -> (Vec<CaptureSession>, Value) {
    let mut rng = ChaCha8Rng::seed_from_u64(136);
    let mut specs: Vec<TcfSite> = Vec::new();

    // 15 sites whose API value is not updated on revocation
    for i in 0..15 {
        specs.push(TcfSite {
            api: ApiProfile::NotUpdated,
            cookie: (i < 8).then_some(StoreProfile::Mirror),
            storage: (i < 5).then_some(StoreProfile::Mirror),
            ..TcfSite::normal()
        });
    }
    // 2 sites that change the API value but stay positive
    specs.push(TcfSite {
        api: ApiProfile::ChangedPositive,
        cookie: Some(StoreProfile::Mirror),
        ..TcfSite::normal()
    });
    specs.push(TcfSite {
        api: ApiProfile::ChangedPositive,
        storage: Some(StoreProfile::Mirror),
        ..TcfSite::normal()
    });
    let special = specs.len();
    // 119 sites with a correctly updated API value
    for i in 0..119 {
        let mut s = TcfSite::normal();
        match i {
            0..=2 => s.cookie = Some(StoreProfile::Stale),
            3 | 4 => s.storage = Some(StoreProfile::Stale),
            5 => s.positive_initial = true,
            6 | 7 => s.api_positive_rejected = true,
            8 => {
                s.storage = Some(StoreProfile::Mirror);
                s.storage_positive_rejected = true;
            }
            _ => {}
        }
        if (9..98).contains(&i) {
            s.cookie = Some(StoreProfile::Mirror);
        }
        if (9..32).contains(&i) {
            s.storage = Some(StoreProfile::Mirror);
        }
        if (98..112).contains(&i) {
            s.rejected = false;
        }
        specs.push(s);
    }

    let mut party_profiles: Vec<PartyProfile> = Vec::new();
    for n in 0..ALL_UNINFORMED_SITES {
        let k = 1 + n % 4;
        party_profiles.push(PartyProfile::Shares {
            informed: k,
            not_informed: k,
        });
    }
    // the all-uninformed profiles go first so the not-updated sites get them
    let mut rest: Vec<PartyProfile> = party_profiles.split_off(special);
    for ((informed, not_informed), n) in SHARE_PROFILES {
        rest.extend(std::iter::repeat_n(PartyProfile::Shares { informed, not_informed }, n));
    }
    rest.extend(std::iter::repeat_n(
        PartyProfile::Shares {
            informed: 3,
            not_informed: 0,
        },
        ALL_INFORMED_SITES,
    ));
    rest.extend(std::iter::repeat_n(PartyProfile::FirstPartyOnly, FIRST_PARTY_ONLY_SITES));
    rest.shuffle(&mut rng);
    for (spec, profile) in specs.iter_mut().zip(party_profiles.into_iter().chain(rest)) {
        spec.parties = profile;
    }
    assert_eq!(specs.len(), 136);
    specs.shuffle(&mut rng);

    let cmp_ids = [7u16, 10, 28, 300];
    let mut sessions = Vec::new();
    let mut manifest = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let site = format!("tcf-{:03}.example", i + 1);
        let n_parties = match spec.parties {
            PartyProfile::Shares { informed, .. } => informed,
            PartyProfile::FirstPartyOnly => 0,
        };
        let parties: Vec<&str> = PARTY_POOL.choose_multiple(&mut rng, n_parties).copied().collect();
        let mut vendors: Vec<u16> = (1..=80u16).collect::<Vec<_>>().choose_multiple(&mut rng, 12).copied().collect();
        vendors.sort_unstable();
        let cmp_id = *cmp_ids.choose(&mut rng).expect("non-empty");
        sessions.push(tcf_session(&site, spec, &parties, &vendors, cmp_id));

        let api_positive = spec.api != ApiProfile::Normal;
        let store_positive = |p: Option<StoreProfile>| match p {
            Some(StoreProfile::Stale) => true,
            Some(StoreProfile::Mirror) => api_positive,
            None => false,
        };
        let (informed, not_informed) = match spec.parties {
            PartyProfile::Shares { informed, not_informed } => (informed, not_informed),
            PartyProfile::FirstPartyOnly => (0, 0),
        };
        manifest.push(json!({
            "site": site,
            "tcfapi_positive_after_revocation": api_positive,
            "tcfapi_not_updated": spec.api == ApiProfile::NotUpdated,
            "cookie_positive_after_revocation": store_positive(spec.cookie),
            "storage_positive_after_revocation": store_positive(spec.storage),
            "parties_informed_at_acceptance": informed,
            "parties_not_informed": not_informed,
            "not_informed_parties": parties[informed - not_informed..].to_vec(),
        }));
    }
    (sessions, json!({ "sites": manifest }))
}

// ---------------------------------------------------------------------------
// OneTrust corpus: 152 sites with a revoked stage.

const GROUPS: [&str; 5] = ["C0001", "C0002", "C0003", "C0004", "C0005"];

fn active_groups(enabled: &[&str]) -> String {
    format!(",{},", enabled.join(","))
}

pub fn optanon(enabled: &[&str], stamp: &str) -> String {
    let groups = GROUPS[..4]
        .iter()
        .chain(enabled.iter().filter(|g| !GROUPS[..4].contains(g)))
        .map(|g| format!("{g}%3A{}", u8::from(enabled.contains(g))))
        .collect::<Vec<_>>()
        .join("%2C");
    format!(
        "isGpcEnabled=0&datestamp=Fri+Mar+01+2024+{stamp}+GMT%2B0100&version=202310.1.0&isIABGlobal=false&consentId=4b1e&interactionCount=1&landingPath=NotLandingPage&groups={groups}"
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GroupsProfile {
    Normal,
    NotUpdated,
    ChangedAdd,
    ChangedRemove,
}

pub fn onetrust_corpus() -> (Vec<CaptureSession>, Value) {
    let mut rng = ChaCha8Rng::seed_from_u64(152);
    // (profile, has cookie, positive at rejection, has rejected stage)
    let mut specs: Vec<(GroupsProfile, bool, bool, bool)> = Vec::new();
    for i in 0..16 {
        specs.push((GroupsProfile::NotUpdated, i < 10, false, true));
    }
    for i in 0..6 {
        let p = if i < 3 { GroupsProfile::ChangedAdd } else { GroupsProfile::ChangedRemove };
        specs.push((p, i < 3, false, true));
    }
    for i in 0..130 {
        specs.push((GroupsProfile::Normal, i >= 13, i < 10, i < 120));
    }
    specs.shuffle(&mut rng);

    let baseline = ["C0001"];
    let all = ["C0001", "C0002", "C0003", "C0004"];
    let mut sessions = Vec::new();
    let mut manifest = Vec::new();
    for (i, &(profile, has_cookie, pos_rejected, rejected)) in specs.iter().enumerate() {
        let site = format!("ot-{:03}.example", i + 1);
        let revoked: Vec<&str> = match profile {
            GroupsProfile::Normal => baseline.to_vec(),
            GroupsProfile::NotUpdated => all.to_vec(),
            GroupsProfile::ChangedAdd => GROUPS.to_vec(),
            GroupsProfile::ChangedRemove => vec!["C0001", "C0002"],
        };
        let rejected_groups: Vec<&str> = if pos_rejected { vec!["C0001", "C0002"] } else { baseline.to_vec() };
        let mut stage_values: Vec<(Stage, Vec<&str>, &str)> = vec![
            (Stage::Initial, baseline.to_vec(), "10%3A00%3A02"),
            (Stage::Accepted, all.to_vec(), "10%3A01%3A00"),
            (Stage::Revoked, revoked.clone(), "10%3A02%3A00"),
        ];
        if rejected {
            stage_values.push((Stage::Rejected, rejected_groups, "10%3A05%3A00"));
        }
        let mut stages = Vec::new();
        for (stage, groups, stamp) in stage_values {
            let base = match stage {
                Stage::Initial => 0,
                Stage::Accepted => ACCEPT_AT,
                Stage::Revoked => REVOKE_AT,
                Stage::Rejected => REJECT_AT,
            };
            let not_updated_cookie = profile == GroupsProfile::NotUpdated && stage == Stage::Revoked;
            // a cookie that was not rewritten keeps its old datestamp as well
            let stamp = if not_updated_cookie { "10%3A01%3A00" } else { stamp };
            let mut b = StageBuilder::standard(stage)
                .active_groups(&active_groups(&groups))
                .cookie(cookie("sessid", "c3a9", &format!("www.{site}")))
                .request(page(&site, base + 1));
            if has_cookie {
                b = b.cookie(cookie("OptanonConsent", &optanon(&groups, stamp), &format!(".{site}")));
            }
            if stage != Stage::Initial {
                let script = "https://cdn.cookielaw.org/scripttemplates/otSDKStub.js";
                b = b.access(ApiKind::OnetrustGroupsGet, None, script, at(base + 2));
            }
            stages.push(b.build());
        }
        sessions.push(session(
            &site,
            Some(labels(
                BannerKind::ConsentBanner,
                RevocationChannel::Footer,
                Some(1),
                Some(0),
            )),
            stages,
        ));
        let positive = profile != GroupsProfile::Normal;
        manifest.push(json!({
            "site": site,
            "active_groups_positive_after_revocation": positive,
            "active_groups_not_updated": profile == GroupsProfile::NotUpdated,
            "cookie_positive_after_revocation": positive && has_cookie,
            "positive_after_rejection": pos_rejected,
        }));
    }
    (sessions, json!({ "sites": manifest }))
}

// ---------------------------------------------------------------------------
// Single-site consistency cases.

pub const PARTY: &str = "adnexio.com";

/// A TCF site whose stored cookie and API value start out in agreement.
fn tcf_case(
    site: &str,
    revoked_api: &TcSpec,
    revoked_cookie: Option<&TcSpec>,
    vendors: &[u16],
) -> CaptureSession {
    let empty = TcSpec::new(&[], &[], 7).screen(0);
    let accepted = TcSpec::new(&ALL_PURPOSES, vendors, 7).updated(ACCEPT_AT);
    let ck = |spec: &TcSpec| cookie("euconsent-v2", &spec.encode(), &format!(".{site}"));
    let mut initial = StageBuilder::standard(Stage::Initial).tcfapi(&empty.encode());
    let mut acc = StageBuilder::standard(Stage::Accepted).tcfapi(&accepted.encode());
    let mut rev = StageBuilder::standard(Stage::Revoked).tcfapi(&revoked_api.encode());
    if let Some(c) = revoked_cookie {
        initial = initial.cookie(ck(&empty));
        acc = acc.cookie(ck(&accepted));
        rev = rev.cookie(ck(c));
    }
    session(
        site,
        Some(labels(
            BannerKind::ConsentBanner,
            RevocationChannel::Footer,
            Some(1),
            Some(0),
        )),
        vec![initial.build(), acc.build(), rev.build()],
    )
}

/// Stored cookie keeps the accepted value while the API is updated.
pub fn case_stale_store() -> CaptureSession {
    let vendors = [10, 21, 52];
    let accepted = TcSpec::new(&ALL_PURPOSES, &vendors, 7).updated(ACCEPT_AT);
    let revoked = TcSpec::new(&[1], &[], 7).updated(REVOKE_AT);
    tcf_case("freep.example", &revoked, Some(&accepted), &vendors)
}

/// API keeps the accepted value while the stored cookie is updated.
pub fn case_stale_api() -> CaptureSession {
    let vendors = [10, 21, 52];
    let accepted = TcSpec::new(&ALL_PURPOSES, &vendors, 7).updated(ACCEPT_AT);
    let revoked = TcSpec::new(&[1], &[], 7).updated(REVOKE_AT);
    tcf_case("aol.example", &accepted, Some(&revoked), &vendors)
}

/// Only the consent screen and timestamp change on revocation.
pub fn case_metadata_only() -> CaptureSession {
    let vendors = [10, 21, 52];
    let revoked = TcSpec::new(&ALL_PURPOSES, &vendors, 7).updated(REVOKE_AT).screen(2);
    tcf_case("ft.example", &revoked, None, &vendors)
}

/// The API is updated but the accepted value reaches a third party `delay_ms`
/// after the revocation event.
pub fn case_grace(delay_ms: i64) -> CaptureSession {
    let site = "grace.example";
    let vendors = [10, 21, 52];
    let empty = TcSpec::new(&[], &[], 7).screen(0).encode();
    let accepted = TcSpec::new(&ALL_PURPOSES, &vendors, 7).updated(ACCEPT_AT).encode();
    let revoked = TcSpec::new(&[1], &[], 7).updated(REVOKE_AT).encode();
    let send = |tcs: &str, ms: i64| {
        let mut r = get(&format!("https://px.{PARTY}/sync?gdpr=1&gdpr_consent={tcs}"), at_ms(ms));
        r.initiator_url = Some(format!("https://www.{site}/"));
        r
    };
    session(
        site,
        Some(labels(
            BannerKind::ConsentBanner,
            RevocationChannel::Footer,
            Some(1),
            Some(0),
        )),
        vec![
            StageBuilder::standard(Stage::Initial).tcfapi(&empty).build(),
            StageBuilder::standard(Stage::Accepted)
                .tcfapi(&accepted)
                .request(send(&accepted, ACCEPT_AT * 1000 + 3000))
                .build(),
            StageBuilder::standard(Stage::Revoked)
                .tcfapi(&revoked)
                .request(send(&accepted, REVOKE_AT * 1000 + delay_ms))
                .build(),
        ],
    )
}

/// Expected consistency verdicts of the single-site cases, as
/// (kind, source, detail) triples of violation findings.
pub fn cases_manifest() -> Value {
    json!({
        "freep": {
            "file": "freep.json",
            "violations": [
                ["positive_consent_after_revocation", "tcf_cookie", null],
                ["consent_not_updated", "tcf_cookie", null],
                ["storage_api_mismatch", "tcf_cookie", "stale_store"],
            ],
        },
        "aol": {
            "file": "aol.json",
            "violations": [
                ["positive_consent_after_revocation", "tcfapi", null],
                ["consent_not_updated", "tcfapi", null],
                ["storage_api_mismatch", "tcf_cookie", "stale_api"],
            ],
        },
        "ft": {
            "file": "ft.json",
            "violations": [
                ["positive_consent_after_revocation", "tcfapi", null],
                ["consent_not_updated", "tcfapi", null],
            ],
        },
    })
}

// ---------------------------------------------------------------------------
// Configuration and the whole fixture tree.

pub const FIXTURE_COOKIE_CLASSES: &str = "\
# name,domain_pattern,class
PHPSESSID,*,necessary
sessid,*,necessary
euconsent-v2,*,necessary
OptanonConsent,*,necessary
_ga,*,analytics
_gid,*,analytics
IDE,doubleclick.net,advertising
uid,*,advertising
";

pub fn fixture_tracking_domains() -> String {
    let mut out = String::from("# known tracking domains\n");
    for d in tracking_pool() {
        out.push_str(d);
        out.push('\n');
    }
    out
}

/// Audit configuration matching the fixture corpora.
pub fn fixture_config() -> AuditConfig {
    let dir = fixtures_dir().join("config");
    let mut config = AuditConfig::default();
    config
        .load_cookie_classes(&dir.join("cookie_classes.csv"))
        .expect("fixture cookie classes");
    config
        .load_tracking_domains(&dir.join("tracking_domains.txt"))
        .expect("fixture tracking domains");
    config
}

pub fn with_grace(mut config: AuditConfig, seconds: i64) -> AuditConfig {
    config.grace_window = TimeDelta::seconds(seconds);
    config
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

/// Every fixture file as (path relative to the fixture dir, contents).
pub fn render_fixtures() -> Vec<(String, String)> {
    let mut files = Vec::new();
    for (dir, (sessions, manifest)) in [
        ("corpus161", interface_corpus()),
        ("tcf136", tcf_corpus()),
        ("onetrust152", onetrust_corpus()),
    ] {
        for s in &sessions {
            let stem = s.site.trim_end_matches(".example");
            files.push((format!("{dir}/{stem}.json"), dump_session(s)));
        }
        files.push((format!("{dir}/manifest.json"), pretty(&manifest)));
    }
    for (name, s) in [
        ("freep", case_stale_store()),
        ("aol", case_stale_api()),
        ("ft", case_metadata_only()),
        ("grace_2s", case_grace(2000)),
        ("grace_10s", case_grace(10_000)),
    ] {
        files.push((format!("cases/{name}.json"), dump_session(&s)));
    }
    files.push(("cases/manifest.json".into(), pretty(&cases_manifest())));
    files.push(("config/cookie_classes.csv".into(), FIXTURE_COOKIE_CLASSES.into()));
    files.push(("config/tracking_domains.txt".into(), fixture_tracking_domains()));
    files.sort();
    files
}

pub fn write_fixtures(root: &Path) -> std::io::Result<usize> {
    let files = render_fixtures();
    for (rel, contents) in &files {
        let path = root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, contents)?;
    }
    Ok(files.len())
}

/// Sessions of one committed corpus, sorted by file name.
pub fn load_corpus(name: &str) -> Vec<CaptureSession> {
    let dir = fixtures_dir().join(name);
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("cannot list {}: {e}", dir.display()))
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "json") && !p.ends_with("manifest.json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| consent_audit::capture::load_session(p).unwrap_or_else(|e| panic!("{}: {e}", p.display())))
        .collect()
}

pub fn load_manifest(name: &str) -> Value {
    let path = fixtures_dir().join(name).join("manifest.json");
    let text = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).expect("manifest json")
}

pub fn load_case(file: &str) -> CaptureSession {
    let path = fixtures_dir().join("cases").join(file);
    consent_audit::capture::load_session(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Distinct values, for quick set comparisons in tests.
pub fn set<T: Ord + Clone>(items: &[T]) -> BTreeSet<T> {
    items.iter().cloned().collect()
}
