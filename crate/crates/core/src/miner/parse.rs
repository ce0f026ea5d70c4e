//! Parsers for generator replies.

use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairCandidate {
    pub a: String,
    pub b: String,
    /// Bracketed tag in front of the pair, e.g. `positive`.
    pub label: Option<String>,
}

impl PairCandidate {
    pub fn is_negative(&self) -> bool {
        self.label.as_deref().is_some_and(|l| l.eq_ignore_ascii_case("negative"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternCandidate {
    pub name: String,
    pub label: Option<String>,
}

const MAX_NOUN_WORDS: usize = 4;

fn pair_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^\s*(?:(?P<index>\d+)\s*[.)]\s*)?(?:\[(?P<label>[^\]]*)\]\s*)?(?P<a>[^,]+?)\s*,\s*(?P<b>[^,]+?)\s*$",
        )
        .expect("static regex")
    })
}

fn pattern_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*(?:\d+\s*[.)]\s*)?\[(?P<label>[^\]]*)\]\s*(?P<name>.+?)\s*$|^\s*\d+\s*[.)]\s*(?P<plain>.+?)\s*$")
            .expect("static regex")
    })
}

fn plausible_noun(s: &str) -> bool {
    let words = s.split_whitespace().count();
    (1..=MAX_NOUN_WORDS).contains(&words)
        && s.chars().next().is_some_and(char::is_alphanumeric)
        && s.chars().all(|c| c.is_alphanumeric() || " -'&/".contains(c))
}

/// Extracts `index. NameA, NameB` lines. A line needs an index or a
/// bracketed tag (or both), exactly one comma, and short noun phrases on
/// either side; everything else is skipped.
pub fn parse_generator_reply(text: &str) -> Result<Vec<PairCandidate>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let Some(cap) = pair_line().captures(line) else { continue };
        if cap.name("index").is_none() && cap.name("label").is_none() {
            continue;
        }
        let a = cap["a"].trim();
        let b = cap["b"].trim();
        if !plausible_noun(a) || !plausible_noun(b) {
            continue;
        }
        out.push(PairCandidate {
            a: a.to_string(),
            b: b.to_string(),
            label: cap.name("label").map(|m| m.as_str().trim().to_lowercase()),
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyReply);
    }
    Ok(out)
}

/// Extracts pattern names from numbered or tagged lines, skipping the
/// `- Example:` style detail lines under them.
pub fn parse_pattern_reply(text: &str) -> Vec<PatternCandidate> {
    text.lines()
        .filter_map(|line| {
            let cap = pattern_line().captures(line)?;
            let (name, label) = match (cap.name("name"), cap.name("plain")) {
                (Some(n), _) => (n.as_str(), cap.name("label").map(|m| m.as_str().trim().to_lowercase())),
                (None, Some(p)) => (p.as_str(), None),
                _ => return None,
            };
            let name = name.trim().trim_end_matches(['.', ':']).trim();
            if name.is_empty() || name.starts_with('-') {
                return None;
            }
            Some(PatternCandidate {
                name: name.to_string(),
                label,
            })
        })
        .collect()
}
