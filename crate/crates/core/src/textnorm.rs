//! Normalization of noisy Roman Urdu microtext.
//!
//! Roman Urdu has no standard orthography: the same word shows up with
//! relaxed spellings ("acha", "achaa", "achha"), emotional stress
//! ("aaaaala") and consonant-skeleton slang ("yr" for "yar"). The pipeline
//! here is `tokenize` -> `collapse_stress` -> `apply_rules`, where the rules
//! are phonetic whole-token rewrites loaded from a plain-text file. The rule
//! file is data, not code; `rules/roman_urdu.rules` in the repository is a
//! representative set.

use std::fs;
use std::path::Path;

use regex::Regex;

use crate::error::{Error, Result};

/// Maximum number of full rule passes before a cyclic rule set is reported.
pub const MAX_PASSES: usize = 10;

/// One whole-token phonetic rewrite. The pattern must match the entire
/// token for the rewrite to fire; the replacement is a literal canonical
/// token.
#[derive(Debug, Clone)]
pub struct RewriteRule {
    pattern: Regex,
    replacement: String,
    rule_id: usize,
}

impl RewriteRule {
    /// Compile a rule. The pattern is anchored to the whole token; the
    /// replacement must itself be a canonical token (`[a-z0-9]+`, no letter
    /// run longer than two) so that rewritten output is stable under
    /// re-normalization.
    pub fn new(pattern: &str, replacement: &str, rule_id: usize) -> Result<Self> {
        let bad = |reason: String| Error::BadRule { line: rule_id + 1, reason };
        let anchored = format!("^(?:{pattern})$");
        let pattern = Regex::new(&anchored)
            .map_err(|e| bad(format!("invalid pattern: {e}")))?;
        if replacement.is_empty() {
            return Err(bad("empty replacement".into()));
        }
        if !replacement.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()) {
            return Err(bad(format!("replacement {replacement:?} must be [a-z0-9]+")));
        }
        if collapse_stress(replacement) != replacement {
            return Err(bad(format!(
                "replacement {replacement:?} has a letter run longer than two"
            )));
        }
        Ok(RewriteRule { pattern, replacement: replacement.to_string(), rule_id })
    }

    pub fn rule_id(&self) -> usize {
        self.rule_id
    }

    pub fn pattern(&self) -> &str {
        self.pattern.as_str()
    }

    pub fn replacement(&self) -> &str {
        &self.replacement
    }

    fn matches(&self, token: &str) -> bool {
        self.pattern.is_match(token)
    }
}

/// An ordered rewrite-rule list. Order is application order.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    rules: Vec<RewriteRule>,
}

impl RuleSet {
    pub fn empty() -> Self {
        RuleSet { rules: Vec::new() }
    }

    pub fn from_rules(rules: Vec<RewriteRule>) -> Self {
        RuleSet { rules }
    }

    /// Parse the rule-file format: one `pattern<TAB>replacement` per line,
    /// `#` comments and blank lines ignored. Rule ids are the zero-based
    /// positions among the parsed rules.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let pattern = parts.next().unwrap_or("").trim();
            let replacement = match parts.next() {
                Some(r) => r.trim(),
                None => {
                    return Err(Error::BadRule {
                        line: lineno + 1,
                        reason: "expected `pattern<TAB>replacement`".into(),
                    })
                }
            };
            let id = rules.len();
            let rule = RewriteRule::new(pattern, replacement, id).map_err(|e| match e {
                Error::BadRule { reason, .. } => Error::BadRule { line: lineno + 1, reason },
                other => other,
            })?;
            rules.push(rule);
        }
        Ok(RuleSet { rules })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn rules(&self) -> &[RewriteRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// A token that is a fixpoint of the normalization pipeline: lowercase
/// `[a-z0-9]+` with no letter run longer than two, stable under the rule
/// set it was produced with.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NormalizedToken(String);

impl NormalizedToken {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl AsRef<str> for NormalizedToken {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for NormalizedToken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercase and split into maximal `[a-z0-9]+` runs. Anything else —
/// punctuation, symbols, emoji, non-Latin letters — separates tokens, so
/// edge punctuation disappears and glued forms like `yr...` come out clean.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in lowered.chars() {
        if ch.is_ascii_lowercase() || ch.is_ascii_digit() {
            current.push(ch);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Shorten every maximal run of a repeated letter longer than two to exactly
/// two occurrences ("aaaaala" -> "aala"). Digit runs are kept: model names
/// and years carry meaning in review text.
pub fn collapse_stress(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    let mut prev = None;
    let mut run = 0usize;
    for ch in token.chars() {
        if prev == Some(ch) {
            run += 1;
        } else {
            prev = Some(ch);
            run = 1;
        }
        if run > 2 && ch.is_ascii_lowercase() {
            continue;
        }
        out.push(ch);
    }
    out
}

/// Apply rules in file order, repeating full passes until a pass changes
/// nothing. A token that still changes after [`MAX_PASSES`] passes is inside
/// a rule cycle and reported with the rule ids that fired most recently.
pub fn apply_rules(token: &str, rules: &RuleSet) -> Result<NormalizedToken> {
    let mut current = token.to_string();
    let mut fired_prev: Vec<usize> = Vec::new();
    for _ in 0..MAX_PASSES {
        let mut fired = Vec::new();
        let before = current.clone();
        for rule in &rules.rules {
            if rule.matches(&current) && current != rule.replacement {
                current = rule.replacement.clone();
                fired.push(rule.rule_id);
            }
        }
        if current == before {
            return Ok(NormalizedToken(current));
        }
        fired_prev.extend(fired);
    }
    let mut rule_ids = fired_prev;
    rule_ids.sort_unstable();
    rule_ids.dedup();
    Err(Error::FixpointNotReached { token: token.to_string(), passes: MAX_PASSES, rule_ids })
}

/// Full pipeline over a document: tokenize, collapse stress, rewrite.
/// Order-preserving; empty input gives an empty list.
pub fn normalize_document(text: &str, rules: &RuleSet) -> Result<Vec<NormalizedToken>> {
    tokenize(text)
        .iter()
        .map(|t| apply_rules(&collapse_stress(t), rules))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rules(specs: &[(&str, &str)]) -> RuleSet {
        RuleSet::from_rules(
            specs
                .iter()
                .enumerate()
                .map(|(i, (p, r))| RewriteRule::new(p, r, i).unwrap())
                .collect(),
        )
    }

    #[test]
    fn tokenize_strips_edges_and_lowercases() {
        assert_eq!(tokenize("Acha phone hai!"), ["acha", "phone", "hai"]);
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("yr...   KESE?"), ["yr", "kese"]);
    }

    #[test]
    fn tokenize_keeps_digits() {
        assert_eq!(tokenize("S8 ka camera"), ["s8", "ka", "camera"]);
    }

    #[test]
    fn collapse_stress_examples() {
        assert_eq!(collapse_stress("aaaaala"), "aala");
        assert_eq!(collapse_stress("acha"), "acha");
        assert_eq!(collapse_stress("sooooo"), "soo");
        // digit runs survive
        assert_eq!(collapse_stress("2000"), "2000");
    }

    #[test]
    fn apply_rules_kesi_family() {
        let rs = rules(&[("kes[iy]+", "kese")]);
        for variant in ["kesi", "kesy", "kesyy", "kesiy", "kesii"] {
            assert_eq!(apply_rules(variant, &rs).unwrap().as_str(), "kese");
        }
        assert_eq!(apply_rules("phone", &RuleSet::empty()).unwrap().as_str(), "phone");
    }

    #[test]
    fn normalize_document_traces_rules() {
        let rs = rules(&[("kes[iy]+", "kese"), ("yr", "yar")]);
        let out: Vec<String> = normalize_document("Kesi ho yr", &rs)
            .unwrap()
            .into_iter()
            .map(NormalizedToken::into_string)
            .collect();
        assert_eq!(out, ["kese", "ho", "yar"]);

        assert!(normalize_document("", &rs).unwrap().is_empty());

        let plain: Vec<String> = normalize_document("aaaaala phone", &RuleSet::empty())
            .unwrap()
            .into_iter()
            .map(NormalizedToken::into_string)
            .collect();
        assert_eq!(plain, ["aala", "phone"]);
    }

    #[test]
    fn rule_order_is_honored() {
        let a = rules(&[("abc", "foo"), ("ab.", "bar")]);
        let b = rules(&[("ab.", "bar"), ("abc", "foo")]);
        assert_eq!(apply_rules("abc", &a).unwrap().as_str(), "foo");
        assert_eq!(apply_rules("abc", &b).unwrap().as_str(), "bar");
    }

    #[test]
    fn cyclic_rules_are_reported() {
        // Pass function oscillates: a -> b -> c within one pass, then c -> a.
        let rs = rules(&[("a", "b"), ("c", "a"), ("b", "c")]);
        match apply_rules("a", &rs) {
            Err(Error::FixpointNotReached { token, passes, rule_ids }) => {
                assert_eq!(token, "a");
                assert_eq!(passes, MAX_PASSES);
                assert!(!rule_ids.is_empty());
            }
            other => panic!("expected FixpointNotReached, got {other:?}"),
        }
    }

    #[test]
    fn rule_validation_rejects_bad_replacements() {
        assert!(RewriteRule::new("x", "", 0).is_err());
        assert!(RewriteRule::new("x", "Foo", 0).is_err());
        assert!(RewriteRule::new("x", "aaa", 0).is_err());
        assert!(RewriteRule::new("(", "ok", 0).is_err());
    }

    #[test]
    fn parse_rule_file_format() {
        let rs = RuleSet::parse("# comment\nkes[iy]+\tkese\n\nyr\tyar\n").unwrap();
        assert_eq!(rs.len(), 2);
        assert_eq!(rs.rules()[1].rule_id(), 1);
        assert!(RuleSet::parse("no-tab-here").is_err());
    }

    #[test]
    fn no_change_match_is_not_a_fire() {
        // "kese" matches kes[iye]+ but the rewrite is the identity; the pass
        // must be treated as unchanged.
        let rs = rules(&[("kes[iye]+", "kese")]);
        assert_eq!(apply_rules("kese", &rs).unwrap().as_str(), "kese");
    }
}
