//! Per-format TC string extractors: URL query strings, JSON documents and
//! HTML markup.

use serde_json::Value;
use url::Url;

use crate::tcs::{sniff_tcs, sniff_unescaped, TcString};

/// One TC string found inside a larger value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcsHit {
    /// Query parameter name, JSON path or cookie name holding the value.
    pub field: Option<String>,
    /// The matched text as it appeared after transport decoding.
    pub raw: String,
    pub tcs: TcString,
}

/// Every query parameter whose value is a TC string, in parameter order.
/// Malformed URLs yield nothing.
pub fn parse_url(url: &str) -> Vec<TcsHit> {
    let Ok(parsed) = Url::parse(url) else {
        return Vec::new();
    };
    parsed
        .query_pairs()
        .filter_map(|(key, value)| {
            sniff_unescaped(&value).map(|tcs| TcsHit {
                field: Some(key.into_owned()),
                raw: value.into_owned(),
                tcs,
            })
        })
        .collect()
}

/// Every string leaf of a JSON document that is a TC string, in document
/// order. Text that is not JSON is sniffed whole.
pub fn parse_json(text: &str) -> Vec<TcsHit> {
    match serde_json::from_str::<Value>(text) {
        Ok(doc) => {
            let mut out = Vec::new();
            walk_json(&doc, &mut String::from("$"), &mut out);
            out
        }
        Err(_) => sniff_tcs(text.trim())
            .map(|tcs| TcsHit {
                field: None,
                raw: text.trim().to_owned(),
                tcs,
            })
            .into_iter()
            .collect(),
    }
}

fn walk_json(value: &Value, path: &mut String, out: &mut Vec<TcsHit>) {
    match value {
        Value::String(s) => {
            if let Some(tcs) = sniff_tcs(s) {
                out.push(TcsHit {
                    field: Some(path.clone()),
                    raw: s.clone(),
                    tcs,
                });
            }
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                let len = path.len();
                path.push_str(&format!("[{i}]"));
                walk_json(item, path, out);
                path.truncate(len);
            }
        }
        Value::Object(map) => {
            for (key, item) in map {
                let len = path.len();
                path.push('.');
                path.push_str(key);
                walk_json(item, path, out);
                path.truncate(len);
            }
        }
        _ => {}
    }
}

/// Splits a non-JSON body into candidate tokens and sniffs each one.
pub fn parse_raw_tokens(text: &str) -> Vec<TcsHit> {
    text.split(|c: char| c == '&' || c == '=' || c == '"' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .filter_map(|t| {
            sniff_tcs(t).map(|tcs| TcsHit {
                field: None,
                raw: t.to_owned(),
                tcs,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HtmlHit {
    pub tag: String,
    pub source_url: String,
    pub hit: TcsHit,
}

const URL_TAGS: [&str; 3] = ["img", "iframe", "script"];

/// TC strings in the `src` (and `srcset` for images) URLs of img, iframe
/// and script elements. Relative URLs are resolved against `base` when
/// given. Broken markup never stops the scan.
pub fn parse_html(document: &str, base: Option<&str>) -> Vec<HtmlHit> {
    let base = base.and_then(|b| Url::parse(b).ok());
    let mut out = Vec::new();
    for tag in scan_tags(document) {
        if !URL_TAGS.contains(&tag.name.as_str()) {
            continue;
        }
        for (attr, value) in &tag.attrs {
            let urls: Vec<&str> = match (tag.name.as_str(), attr.as_str()) {
                (_, "src") => vec![value.as_str()],
                ("img", "srcset") => value
                    .split(',')
                    .filter_map(|candidate| candidate.split_whitespace().next())
                    .collect(),
                _ => continue,
            };
            for raw_url in urls {
                let resolved = resolve(raw_url, base.as_ref());
                for hit in parse_url(&resolved) {
                    out.push(HtmlHit {
                        tag: tag.name.clone(),
                        source_url: resolved.clone(),
                        hit,
                    });
                }
            }
        }
    }
    out
}

fn resolve(raw: &str, base: Option<&Url>) -> String {
    if Url::parse(raw).is_ok() {
        return raw.to_owned();
    }
    base.and_then(|b| b.join(raw).ok())
        .map(String::from)
        .unwrap_or_else(|| raw.to_owned())
}

struct Tag {
    name: String,
    attrs: Vec<(String, String)>,
}

fn decode_entities(value: &str) -> String {
    if !value.contains('&') {
        return value.to_owned();
    }
    value
        .replace("&amp;", "&")
        .replace("&#38;", "&")
        .replace("&#x26;", "&")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
}

/// Single pass over `<name attr=value ...>` openings. Unterminated tags end
/// at the next `<` or at end of input.
fn scan_tags(doc: &str) -> Vec<Tag> {
    let bytes = doc.as_bytes();
    let mut tags = Vec::new();
    let mut i = 0;
    while let Some(off) = doc[i..].find('<') {
        let start = i + off + 1;
        if doc[start..].starts_with("!--") {
            i = doc[start..].find("-->").map_or(doc.len(), |e| start + e + 3);
            continue;
        }
        let name_end = start
            + doc[start..]
                .find(|c: char| !c.is_ascii_alphanumeric())
                .unwrap_or(doc.len() - start);
        if name_end == start {
            i = start;
            continue;
        }
        let name = doc[start..name_end].to_ascii_lowercase();
        let mut attrs = Vec::new();
        let mut j = name_end;
        loop {
            while j < bytes.len() && (bytes[j].is_ascii_whitespace() || bytes[j] == b'/') {
                j += 1;
            }
            if j >= bytes.len() || bytes[j] == b'>' || bytes[j] == b'<' {
                break;
            }
            let an_start = j;
            while j < bytes.len() && !matches!(bytes[j], b'=' | b'>' | b'<' | b'/') && !bytes[j].is_ascii_whitespace() {
                j += 1;
            }
            let attr = doc[an_start..j].to_ascii_lowercase();
            while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                j += 1;
            }
            let mut value = String::new();
            if j < bytes.len() && bytes[j] == b'=' {
                j += 1;
                while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] == b'"' || bytes[j] == b'\'') {
                    let quote = bytes[j] as char;
                    let v_start = j + 1;
                    let v_end = doc[v_start..].find(quote).map_or(doc.len(), |e| v_start + e);
                    value = decode_entities(&doc[v_start..v_end]);
                    j = (v_end + 1).min(doc.len());
                } else {
                    let v_start = j;
                    while j < bytes.len() && !bytes[j].is_ascii_whitespace() && bytes[j] != b'>' && bytes[j] != b'<' {
                        j += 1;
                    }
                    value = decode_entities(&doc[v_start..j]);
                }
            }
            if attr.is_empty() {
                j += 1;
                continue;
            }
            attrs.push((attr, value));
        }
        tags.push(Tag { name, attrs });
        i = j.min(doc.len());
        if i < doc.len() && bytes[i] == b'>' {
            i += 1;
        }
    }
    tags
}
