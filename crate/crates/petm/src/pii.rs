//! Regex scan for personal data: e-mail addresses, URLs carrying
//! credentials, and phone numbers.

use std::sync::OnceLock;

use petm_core::filter::{DropReason, FilterError, FilterRule, SegmentPair, Verdict};
use regex::Regex;
use serde::Serialize;

pub const PII_PATTERN_VERSION: &str = "pii-v2";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PiiKind {
    Email,
    UrlUserinfo,
    Phone,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PiiMatch {
    pub kind: PiiKind,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

struct Patterns {
    url_userinfo: Regex,
    email: Regex,
    phone: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        url_userinfo: Regex::new(r"(?i)\b[a-z][a-z0-9+.\-]*://[^\s/@:]+(?::[^\s/@]*)?@[^\s/]+\S*").unwrap(),
        email: Regex::new(r"(?i)\b[a-z0-9._%+\-]+@[a-z0-9](?:[a-z0-9\-]*[a-z0-9])?(?:\.[a-z0-9](?:[a-z0-9\-]*[a-z0-9])?)*\.[a-z]{2,}\b").unwrap(),
        phone: Regex::new(r"(?:\+|\b00)?\(?\d[\d()]*(?:[ \-./]\(?\d[\d()]*)*").unwrap(),
    })
}

fn is_phone(candidate: &str) -> bool {
    let digits = candidate.chars().filter(char::is_ascii_digit).count();
    let has_separator = candidate.contains([' ', '-', '.', '/', '(']);
    let leading_plus = candidate.starts_with('+');
    let groups: Vec<&str> = candidate.split([' ', '-', '.', '/', '(', ')']).filter(|g| !g.is_empty()).collect();
    // Versions like 2.6.32 have short groups only; decimals, dotted quads,
    // ISO dates and year ranges have recognizable shapes.
    let long_group = groups.iter().any(|g| g.trim_start_matches('+').len() >= 3);
    let only_dots = !candidate.contains([' ', '-', '/', '(', '+']);
    let lens: Vec<usize> = groups.iter().map(|g| g.len()).collect();
    let not_a_number = !(only_dots && (groups.len() < 3 || (lens.len() == 4 && lens.iter().all(|&l| l <= 3))))
        && !(candidate.contains('-') && !candidate.contains([' ', '.', '/', '(', '+']) && matches!(lens.as_slice(), [4, 2, 2] | [4, 4]));
    digits >= 7 && (has_separator || leading_plus) && long_group && not_a_number
}

/// Non-overlapping matches in text order. URLs with credentials win over the
/// e-mail pattern they contain.
pub fn pii_scan(text: &str) -> Vec<PiiMatch> {
    let p = patterns();
    let mut found: Vec<PiiMatch> = Vec::new();
    let overlaps = |found: &[PiiMatch], s: usize, e: usize| found.iter().any(|m| s < m.end && m.start < e);
    for m in p.url_userinfo.find_iter(text) {
        found.push(PiiMatch { kind: PiiKind::UrlUserinfo, start: m.start(), end: m.end(), text: m.as_str().into() });
    }
    for m in p.email.find_iter(text) {
        if !overlaps(&found, m.start(), m.end()) {
            found.push(PiiMatch { kind: PiiKind::Email, start: m.start(), end: m.end(), text: m.as_str().into() });
        }
    }
    for m in p.phone.find_iter(text) {
        let candidate = m.as_str().trim_end_matches(['.', '-', '/', ' ']);
        if is_phone(candidate) && !overlaps(&found, m.start(), m.start() + candidate.len()) {
            found.push(PiiMatch { kind: PiiKind::Phone, start: m.start(), end: m.start() + candidate.len(), text: candidate.into() });
        }
    }
    found.sort_by_key(|m| m.start);
    found
}

/// Drops pairs where either side contains personal data.
#[derive(Clone, Copy, Debug, Default)]
pub struct PiiRule;

impl FilterRule for PiiRule {
    fn check(&self, pair: &SegmentPair) -> Result<Verdict, FilterError> {
        if pii_scan(&pair.source).is_empty() && pii_scan(&pair.target).is_empty() {
            Ok(Verdict::Keep)
        } else {
            Ok(Verdict::Drop(DropReason::Pii))
        }
    }
}
