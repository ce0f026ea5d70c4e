//! Cross-combination of two patterns into two new ones.

use super::{Pattern, PatternOrigin};
use crate::error::{Error, Result};

fn split(name: &str) -> Result<(&str, &str)> {
    let at = name
        .find(" and ")
        .ok_or_else(|| Error::UnsplittablePatternName(name.to_string()))?;
    let (first, second) = (name[..at].trim(), name[at + 5..].trim());
    if first.is_empty() || second.is_empty() {
        return Err(Error::UnsplittablePatternName(name.to_string()));
    }
    Ok((first, second))
}

/// Last word of the second half, the noun the rest of it qualifies.
fn head(second: &str) -> String {
    second.split_whitespace().last().unwrap_or(second).to_lowercase()
}

fn merged_name(own: (&str, &str), other: (&str, &str)) -> String {
    format!("{} and {} {}", own.0, other.0.to_lowercase(), head(other.1))
}

/// Given `X and mod Y` and `U and mod V`, yields `X and u V` and
/// `U and x Y`: each first item is paired with the other pattern's second
/// item, qualified by the other pattern's first item.
pub fn merge_patterns(p1: &Pattern, p2: &Pattern) -> Result<(Pattern, Pattern)> {
    if p1.name.eq_ignore_ascii_case(&p2.name) {
        return Err(Error::BadParameter(format!("cannot merge pattern \"{}\" with itself", p1.name)));
    }
    let (s1, s2) = (split(&p1.name)?, split(&p2.name)?);
    let parents = Some((p1.name.clone(), p2.name.clone()));
    let flag = p1.lcmis_flag && p2.lcmis_flag;
    let make = |name: String| Pattern {
        name,
        origin: PatternOrigin::MergedPhase4,
        parents: parents.clone(),
        lcmis_flag: flag,
    };
    Ok((make(merged_name(s1, s2)), make(merged_name(s2, s1))))
}
