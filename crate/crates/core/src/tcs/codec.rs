use std::collections::BTreeSet;

use super::bits::{BitReader, BitWriter};
use super::{
    Alpha2, PublisherRestriction, Segment, TcCore, TcString, TcsError, MAX_PURPOSE_ID,
    MAX_SPECIAL_FEATURE_ID, TCF_VERSION,
};

/// How the encoder lays out a vendor section.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum VendorEncoding {
    /// Whichever of bitfield and range encoding is shorter; bitfield on ties.
    #[default]
    Auto,
    Bitfield,
    Range,
}

/// Decodes a full TC string: the core segment plus opaque trailing segments.
pub fn decode_tc_string(text: &str) -> Result<TcString, TcsError> {
    if text.is_empty() {
        return Err(TcsError::Empty);
    }
    let mut parts = text.split('.');
    let core_text = parts.next().unwrap_or_default();
    if core_text.is_empty() {
        return Err(TcsError::EmptySegment { position: 0 });
    }
    let mut reader = BitReader::new(core_text, 0)?;
    // Validate the rest of the alphabet before reporting version problems so
    // that garbage input is classified as malformed rather than unsupported.
    let mut offset = core_text.len() + 1;
    let mut extra_segments = Vec::new();
    for part in parts {
        extra_segments.push(Segment::parse_at(part, offset)?);
        offset += part.len() + 1;
    }
    let core = read_core(&mut reader)?;
    Ok(TcString { core, extra_segments })
}

fn read_alpha2(r: &mut BitReader) -> Result<Alpha2, TcsError> {
    let a = r.read(6)? as u8;
    let b = r.read(6)? as u8;
    Ok(Alpha2::from_indices([a, b]))
}

fn read_id_set(r: &mut BitReader, width: usize) -> Result<BTreeSet<u8>, TcsError> {
    let mut set = BTreeSet::new();
    for id in 1..=width {
        if r.read_bool()? {
            set.insert(id as u8);
        }
    }
    Ok(set)
}

fn read_core(r: &mut BitReader) -> Result<TcCore, TcsError> {
    let version = r.read(6)? as u8;
    if version != TCF_VERSION {
        return Err(TcsError::UnsupportedVersion(version));
    }
    let created = r.read(36)?;
    let last_updated = r.read(36)?;
    let cmp_id = r.read(12)? as u16;
    let cmp_version = r.read(12)? as u16;
    let consent_screen = r.read(6)? as u8;
    let consent_language = read_alpha2(r)?;
    let vendor_list_version = r.read(12)? as u16;
    let policy_version = r.read(6)? as u8;
    let is_service_specific = r.read_bool()?;
    let use_non_standard_texts = r.read_bool()?;
    let special_feature_opt_ins = read_id_set(r, MAX_SPECIAL_FEATURE_ID as usize)?;
    let purposes_consent = read_id_set(r, MAX_PURPOSE_ID as usize)?;
    let purposes_li_transparency = read_id_set(r, MAX_PURPOSE_ID as usize)?;
    let purpose_one_treatment = r.read_bool()?;
    let publisher_cc = read_alpha2(r)?;
    let vendor_consents = read_vendor_section(r)?;
    let vendor_li = read_vendor_section(r)?;
    let publisher_restrictions = read_restrictions(r)?;

    Ok(TcCore {
        version,
        created,
        last_updated,
        cmp_id,
        cmp_version,
        consent_screen,
        consent_language,
        vendor_list_version,
        policy_version,
        is_service_specific,
        use_non_standard_texts,
        special_feature_opt_ins,
        purposes_consent,
        purposes_li_transparency,
        purpose_one_treatment,
        publisher_cc,
        vendor_consents,
        vendor_li,
        publisher_restrictions,
    })
}

fn read_vendor_section(r: &mut BitReader) -> Result<BTreeSet<u16>, TcsError> {
    let max = r.read(16)? as u16;
    if r.read_bool()? {
        read_range_entries(r, Some(max))
    } else {
        let mut set = BTreeSet::new();
        for id in 1..=max {
            if r.read_bool()? {
                set.insert(id);
            }
        }
        Ok(set)
    }
}

/// `NumEntries` followed by single ids or inclusive ranges.
fn read_range_entries(r: &mut BitReader, max: Option<u16>) -> Result<BTreeSet<u16>, TcsError> {
    let entries = r.read(12)?;
    let mut ranges = Vec::with_capacity(entries as usize);
    for _ in 0..entries {
        let is_range = r.read_bool()?;
        let start = r.read(16)? as u16;
        let end = if is_range { r.read(16)? as u16 } else { start };
        let limit = max.unwrap_or(u16::MAX);
        if start == 0 || start > end || end > limit {
            return Err(TcsError::InvalidVendorRange { start, end, max: limit });
        }
        ranges.push((start, end));
    }
    // merge first: overlapping ranges would otherwise cost up to
    // 4095 * 65535 insertions on hostile input
    ranges.sort_unstable();
    let mut set = BTreeSet::new();
    let mut covered: Option<u16> = None;
    for (start, end) in ranges {
        let from = match covered {
            Some(c) if c >= end => continue,
            Some(c) if c >= start => c + 1,
            _ => start,
        };
        set.extend(from..=end);
        covered = Some(end);
    }
    Ok(set)
}

fn read_restrictions(r: &mut BitReader) -> Result<Vec<PublisherRestriction>, TcsError> {
    let count = r.read(12)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let purpose_id = r.read(6)? as u8;
        let restriction_type = r.read(2)? as u8;
        let vendors = read_range_entries(r, None)?;
        out.push(PublisherRestriction {
            purpose_id,
            restriction_type,
            vendors,
        });
    }
    Ok(out)
}

/// Encodes a core with automatic vendor-section layout.
pub fn encode_tc_core(core: &TcCore, extra_segments: &[Segment]) -> Result<String, TcsError> {
    encode_tc_core_with(core, extra_segments, VendorEncoding::Auto)
}

pub fn encode_tc_core_with(
    core: &TcCore,
    extra_segments: &[Segment],
    vendor_encoding: VendorEncoding,
) -> Result<String, TcsError> {
    let mut w = BitWriter::new();
    w.write("version", u64::from(core.version), 6)?;
    w.write("created", core.created, 36)?;
    w.write("last_updated", core.last_updated, 36)?;
    w.write("cmp_id", u64::from(core.cmp_id), 12)?;
    w.write("cmp_version", u64::from(core.cmp_version), 12)?;
    w.write("consent_screen", u64::from(core.consent_screen), 6)?;
    write_alpha2(&mut w, "consent_language", core.consent_language)?;
    w.write("vendor_list_version", u64::from(core.vendor_list_version), 12)?;
    w.write("policy_version", u64::from(core.policy_version), 6)?;
    w.write_bool(core.is_service_specific);
    w.write_bool(core.use_non_standard_texts);
    write_id_set(&mut w, "special_feature_opt_ins", &core.special_feature_opt_ins, MAX_SPECIAL_FEATURE_ID)?;
    write_id_set(&mut w, "purposes_consent", &core.purposes_consent, MAX_PURPOSE_ID)?;
    write_id_set(&mut w, "purposes_li_transparency", &core.purposes_li_transparency, MAX_PURPOSE_ID)?;
    w.write_bool(core.purpose_one_treatment);
    write_alpha2(&mut w, "publisher_cc", core.publisher_cc)?;
    write_vendor_section(&mut w, "vendor_consents", &core.vendor_consents, vendor_encoding)?;
    write_vendor_section(&mut w, "vendor_li", &core.vendor_li, vendor_encoding)?;
    write_restrictions(&mut w, &core.publisher_restrictions)?;

    let mut out = w.finish();
    for segment in extra_segments {
        // re-validate: segments may have been built by hand
        Segment::parse(&segment.raw)?;
        out.push('.');
        out.push_str(&segment.raw);
    }
    Ok(out)
}

fn write_alpha2(w: &mut BitWriter, field: &'static str, code: Alpha2) -> Result<(), TcsError> {
    for i in code.indices() {
        w.write(field, u64::from(i), 6)?;
    }
    Ok(())
}

fn write_id_set(w: &mut BitWriter, field: &'static str, set: &BTreeSet<u8>, width: u8) -> Result<(), TcsError> {
    if let Some(&bad) = set.iter().find(|&&id| id == 0 || id > width) {
        return Err(TcsError::FieldOverflow { field, value: u64::from(bad) });
    }
    for id in 1..=width {
        w.write_bool(set.contains(&id));
    }
    Ok(())
}

/// Collapses a sorted id set into inclusive runs.
fn runs(set: &BTreeSet<u16>) -> Vec<(u16, u16)> {
    let mut out: Vec<(u16, u16)> = Vec::new();
    for &id in set {
        match out.last_mut() {
            Some((_, end)) if u32::from(*end) + 1 == u32::from(id) => *end = id,
            _ => out.push((id, id)),
        }
    }
    out
}

fn range_cost(runs: &[(u16, u16)]) -> usize {
    12 + runs
        .iter()
        .map(|(s, e)| if s == e { 17 } else { 33 })
        .sum::<usize>()
}

fn write_range_entries(w: &mut BitWriter, field: &'static str, runs: &[(u16, u16)]) -> Result<(), TcsError> {
    w.write(field, runs.len() as u64, 12)?;
    for &(start, end) in runs {
        w.write_bool(start != end);
        w.write(field, u64::from(start), 16)?;
        if start != end {
            w.write(field, u64::from(end), 16)?;
        }
    }
    Ok(())
}

fn write_vendor_section(
    w: &mut BitWriter,
    field: &'static str,
    set: &BTreeSet<u16>,
    encoding: VendorEncoding,
) -> Result<(), TcsError> {
    if set.contains(&0) {
        return Err(TcsError::FieldOverflow { field, value: 0 });
    }
    let max = set.last().copied().unwrap_or(0);
    let runs = runs(set);
    let use_range = match encoding {
        VendorEncoding::Bitfield => false,
        VendorEncoding::Range => true,
        VendorEncoding::Auto => runs.len() < 1 << 12 && range_cost(&runs) < usize::from(max),
    };
    w.write(field, u64::from(max), 16)?;
    w.write_bool(use_range);
    if use_range {
        write_range_entries(w, field, &runs)
    } else {
        for id in 1..=max {
            w.write_bool(set.contains(&id));
        }
        Ok(())
    }
}

fn write_restrictions(w: &mut BitWriter, restrictions: &[PublisherRestriction]) -> Result<(), TcsError> {
    w.write("publisher_restrictions", restrictions.len() as u64, 12)?;
    for restriction in restrictions {
        w.write("restriction_purpose_id", u64::from(restriction.purpose_id), 6)?;
        w.write("restriction_type", u64::from(restriction.restriction_type), 2)?;
        if restriction.vendors.contains(&0) {
            return Err(TcsError::FieldOverflow {
                field: "restriction_vendors",
                value: 0,
            });
        }
        write_range_entries(w, "restriction_vendors", &runs(&restriction.vendors))?;
    }
    Ok(())
}
