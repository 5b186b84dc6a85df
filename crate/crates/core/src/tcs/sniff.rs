use std::borrow::Cow;

use percent_encoding::percent_decode_str;

use super::bits::is_base64url;
use super::{decode_tc_string, TcString, PRELUDE_BITS};

/// Shortest core segment that can hold the fixed-width prelude.
pub const MIN_CORE_CHARS: usize = PRELUDE_BITS.div_ceil(6);

/// Recognizes a TC string inside an arbitrary value.
///
/// The value is percent-decoded at most once. Never fails: anything that is
/// not a complete, version-2 TC string yields `None`.
pub fn sniff_tcs(text: &str) -> Option<TcString> {
    let decoded: Cow<'_, str> = if text.contains('%') {
        percent_decode_str(text).decode_utf8().ok()?
    } else {
        Cow::Borrowed(text)
    };
    sniff_unescaped(&decoded)
}

/// Like [`sniff_tcs`], for values that were already unescaped by their
/// transport (URL query pairs, JSON strings).
pub fn sniff_unescaped(text: &str) -> Option<TcString> {
    let core = text.split('.').next()?;
    // version 2 in the first six bits means the string starts with 'C'
    if core.len() < MIN_CORE_CHARS || !core.starts_with('C') {
        return None;
    }
    if !text.split('.').all(is_base64url) {
        return None;
    }
    decode_tc_string(text).ok()
}
