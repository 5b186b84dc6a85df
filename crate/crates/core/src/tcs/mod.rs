//! IAB TCF v2 Transparency-and-Consent strings.
//!
//! A TC string is a `.`-separated list of base64url segments. The first one is
//! the core segment, decoded field by field into [`TcCore`]. Any further
//! segments (disclosed vendors, publisher TC, ...) are carried as opaque
//! [`Segment`]s and re-emitted unchanged.

mod bits;
mod codec;
mod sniff;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use codec::{decode_tc_string, encode_tc_core, encode_tc_core_with, VendorEncoding};
pub use sniff::{sniff_tcs, sniff_unescaped, MIN_CORE_CHARS};

/// The only core version this crate decodes.
pub const TCF_VERSION: u8 = 2;

/// Width of the fixed part of the core segment, up to and including `PublisherCC`.
pub const PRELUDE_BITS: usize = 213;

pub const MAX_PURPOSE_ID: u8 = 24;
pub const MAX_SPECIAL_FEATURE_ID: u8 = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TcsError {
    #[error("empty consent string")]
    Empty,
    #[error("invalid base64url character {character:?} at offset {position}")]
    MalformedBase64 { position: usize, character: char },
    #[error("empty segment at offset {position}")]
    EmptySegment { position: usize },
    #[error("core segment truncated: {needed} bits needed, {available} available")]
    TruncatedCore { needed: usize, available: usize },
    #[error("unsupported TCF version {0}")]
    UnsupportedVersion(u8),
    #[error("invalid vendor range {start}..={end} (max vendor id {max})")]
    InvalidVendorRange { start: u16, end: u16, max: u16 },
    #[error("value {value} does not fit field {field}")]
    FieldOverflow { field: &'static str, value: u64 },
}

/// Two-letter code stored as 6-bit letter indices (`0 = 'A'`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Alpha2([u8; 2]);

impl Alpha2 {
    /// Builds a code from two uppercase ASCII letters.
    pub fn new(code: &str) -> Option<Self> {
        match code.as_bytes() {
            &[a, b] if a.is_ascii_uppercase() && b.is_ascii_uppercase() => {
                Some(Self([a - b'A', b - b'A']))
            }
            _ => None,
        }
    }

    pub fn from_indices(indices: [u8; 2]) -> Self {
        Self(indices)
    }

    pub fn indices(self) -> [u8; 2] {
        self.0
    }
}

impl fmt::Display for Alpha2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in self.0 {
            let c = if i < 26 { (b'A' + i) as char } else { '?' };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl Serialize for Alpha2 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Alpha2 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Alpha2::new(&text).ok_or_else(|| serde::de::Error::custom(format!("invalid two-letter code {text:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PublisherRestriction {
    pub purpose_id: u8,
    /// 0 = not allowed, 1 = require consent, 2 = require legitimate interest.
    pub restriction_type: u8,
    pub vendors: BTreeSet<u16>,
}

/// Decoded core segment.
///
/// Timestamps are deciseconds since the Unix epoch, as stored on the wire.
/// The vendor sections' `MaxVendorId` is not kept: the encoder derives it
/// from the largest id present.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TcCore {
    pub version: u8,
    pub created: u64,
    pub last_updated: u64,
    pub cmp_id: u16,
    pub cmp_version: u16,
    pub consent_screen: u8,
    pub consent_language: Alpha2,
    pub vendor_list_version: u16,
    pub policy_version: u8,
    pub is_service_specific: bool,
    pub use_non_standard_texts: bool,
    pub special_feature_opt_ins: BTreeSet<u8>,
    pub purposes_consent: BTreeSet<u8>,
    pub purposes_li_transparency: BTreeSet<u8>,
    pub purpose_one_treatment: bool,
    pub publisher_cc: Alpha2,
    pub vendor_consents: BTreeSet<u16>,
    pub vendor_li: BTreeSet<u16>,
    pub publisher_restrictions: Vec<PublisherRestriction>,
}

impl Default for TcCore {
    fn default() -> Self {
        Self {
            version: TCF_VERSION,
            created: 0,
            last_updated: 0,
            cmp_id: 0,
            cmp_version: 0,
            consent_screen: 0,
            consent_language: Alpha2::default(),
            vendor_list_version: 0,
            policy_version: 0,
            is_service_specific: false,
            use_non_standard_texts: false,
            special_feature_opt_ins: BTreeSet::new(),
            purposes_consent: BTreeSet::new(),
            purposes_li_transparency: BTreeSet::new(),
            purpose_one_treatment: false,
            publisher_cc: Alpha2::default(),
            vendor_consents: BTreeSet::new(),
            vendor_li: BTreeSet::new(),
            publisher_restrictions: Vec::new(),
        }
    }
}

impl TcCore {
    pub fn projection(&self) -> ConsentProjection {
        project_consent(self)
    }
}

/// A segment after the core one, kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    /// First three bits of the segment.
    pub segment_type: u8,
    pub raw: String,
}

impl Segment {
    pub fn parse(raw: &str) -> Result<Self, TcsError> {
        Self::parse_at(raw, 0)
    }

    pub(crate) fn parse_at(raw: &str, offset: usize) -> Result<Self, TcsError> {
        let first = raw.bytes().next().ok_or(TcsError::EmptySegment { position: offset })?;
        for (i, c) in raw.bytes().enumerate() {
            if bits::sextet(c).is_none() {
                return Err(TcsError::MalformedBase64 {
                    position: offset + i,
                    character: c as char,
                });
            }
        }
        let segment_type = bits::sextet(first).unwrap_or(0) >> 3;
        Ok(Self {
            segment_type,
            raw: raw.to_owned(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TcString {
    pub core: TcCore,
    pub extra_segments: Vec<Segment>,
}

impl TcString {
    pub fn encode(&self) -> Result<String, TcsError> {
        encode_tc_core(&self.core, &self.extra_segments)
    }
}

impl FromStr for TcString {
    type Err = TcsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        decode_tc_string(s)
    }
}

/// The consent-bearing part of a core segment.
///
/// Two cores with equal projections express the same consent even if their
/// timestamps, consent screen or CMP metadata differ.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConsentProjection {
    pub purposes_consent: BTreeSet<u8>,
    pub purposes_li_transparency: BTreeSet<u8>,
    pub special_feature_opt_ins: BTreeSet<u8>,
    pub vendor_consents: BTreeSet<u16>,
    pub vendor_li: BTreeSet<u16>,
    pub publisher_restrictions: Vec<PublisherRestriction>,
}

pub fn project_consent(core: &TcCore) -> ConsentProjection {
    ConsentProjection {
        purposes_consent: core.purposes_consent.clone(),
        purposes_li_transparency: core.purposes_li_transparency.clone(),
        special_feature_opt_ins: core.special_feature_opt_ins.clone(),
        vendor_consents: core.vendor_consents.clone(),
        vendor_li: core.vendor_li.clone(),
        publisher_restrictions: core.publisher_restrictions.clone(),
    }
}
