//! Generator adapters and the expansion / discovery steps built on them.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::parse::{parse_generator_reply, parse_pattern_reply};
use super::{normalize_noun, Binding, ConceptPair, Pattern, PatternOrigin, Provenance};
use crate::error::{Error, Result};
use crate::llm::TextCompletion;
use crate::presets::biased_world_config;
use crate::rng;
use crate::world::{ConceptClass, WorldConfig};

pub struct PairRequest<'a> {
    pub pattern: &'a Pattern,
    pub few_shot: &'a [ConceptPair],
    pub n: usize,
}

pub struct PatternRequest<'a> {
    pub existing: &'a [Pattern],
    pub n: usize,
}

/// One prompt/reply exchange, kept verbatim for the transcript log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub kind: String,
    pub request: String,
    pub reply: String,
}

pub trait Generator {
    fn pair_reply(&mut self, request: &PairRequest<'_>) -> Result<String>;
    fn pattern_reply(&mut self, request: &PatternRequest<'_>) -> Result<String>;

    /// World binding for a freshly generated pair, when the generator knows one.
    fn bind(&self, _a: &str, _b: &str) -> Option<Binding> {
        None
    }

    /// Exchanges since the last call.
    fn drain_transcript(&mut self) -> Vec<Exchange>;
}

pub fn pair_prompt(request: &PairRequest<'_>) -> String {
    let mut prompt = format!(
        "You propose noun pairs for probing a text-to-image model. Pattern: \"{}\".\n\
         In each pair the first noun is usually pictured together with some third object, so a \
         model asked for both nouns tends to draw that third object in place of the second noun.\n",
        request.pattern.name
    );
    if !request.few_shot.is_empty() {
        prompt.push_str("Known pairs:\n");
        for p in request.few_shot {
            prompt.push_str(&format!("[positive] {}, {}\n", p.a_name, p.b_name));
        }
    }
    prompt.push_str(&format!(
        "Propose {} new pairs of this pattern, one per line, formatted as \"<index>. <noun>, <noun>\", \
         each noun one to three words. A noun may appear in at most one pair.",
        request.n
    ));
    prompt
}

pub fn pattern_prompt(request: &PatternRequest<'_>) -> String {
    let mut prompt = String::from(
        "Each pattern below names a kind of noun pair \"A and B\" that a text-to-image model fails to \
         draw together: A nearly always appears with some other object C of the same kind as B, and \
         C ends up replacing B in the picture.\n",
    );
    for p in request.existing {
        let tag = if p.lcmis_flag { "positive" } else { "negative" };
        prompt.push_str(&format!("[{tag}] {}\n", p.name));
    }
    prompt.push_str(&format!(
        "Suggest {} further positive patterns. Number them and tag each one, e.g. \
         \"1. [positive] <A> and <B>\", optionally followed by lines starting with \"- Example:\".",
        request.n
    ));
    prompt
}

// ---------------------------------------------------------------------------
// LLM-backed generator
// ---------------------------------------------------------------------------

pub struct LlmGenerator<C> {
    completion: C,
    transcript: Vec<Exchange>,
}

impl<C: TextCompletion> LlmGenerator<C> {
    pub fn new(completion: C) -> Self {
        Self {
            completion,
            transcript: Vec::new(),
        }
    }

    fn ask(&mut self, kind: &str, prompt: String) -> Result<String> {
        let reply = self.completion.complete(&prompt)?;
        self.transcript.push(Exchange {
            kind: kind.into(),
            request: prompt,
            reply: reply.clone(),
        });
        Ok(reply)
    }
}

impl<C: TextCompletion> Generator for LlmGenerator<C> {
    fn pair_reply(&mut self, request: &PairRequest<'_>) -> Result<String> {
        self.ask("pairs", pair_prompt(request))
    }

    fn pattern_reply(&mut self, request: &PatternRequest<'_>) -> Result<String> {
        self.ask("patterns", pattern_prompt(request))
    }

    fn drain_transcript(&mut self) -> Vec<Exchange> {
        std::mem::take(&mut self.transcript)
    }
}

// ---------------------------------------------------------------------------
// Vocabulary and the mock generator
// ---------------------------------------------------------------------------

/// A first-position noun with the object it co-occurs with and how strongly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasedNoun {
    pub name: String,
    pub latent: String,
    /// `w(noun with latent) / w(noun with partner)` in the bound world.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NounFamily {
    pub pattern: String,
    pub a_class: ConceptClass,
    pub b_class: ConceptClass,
    pub a_nouns: Vec<BiasedNoun>,
    pub b_nouns: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Vocabulary {
    pub families: Vec<NounFamily>,
    /// Patterns the mock hands out when asked to discover new ones.
    pub discovered_patterns: Vec<String>,
}

impl Vocabulary {
    pub fn family(&self, pattern: &str) -> Option<&NounFamily> {
        self.families.iter().find(|f| f.pattern.eq_ignore_ascii_case(pattern))
    }

    fn lookup(&self, a: &str, b: &str) -> Option<(&NounFamily, &BiasedNoun)> {
        let (a, b) = (normalize_noun(a), normalize_noun(b));
        self.families.iter().find_map(|f| {
            let noun = f.a_nouns.iter().find(|n| normalize_noun(&n.name) == a)?;
            f.b_nouns.iter().any(|n| normalize_noun(n) == b).then_some((f, noun))
        })
    }

    /// World for `(a, b)`: the coke layout with the co-occurrence ratio of
    /// `a`, rotated by an angle derived from the names.
    pub fn world_for(&self, a: &str, b: &str) -> Result<WorldConfig> {
        let (family, noun) = self.lookup(a, b).ok_or_else(|| Error::UnboundPair {
            a: a.into(),
            b: b.into(),
        })?;
        if normalize_noun(&noun.latent) == normalize_noun(b) {
            return Err(Error::UnboundPair {
                a: a.into(),
                b: b.into(),
            });
        }
        let angle_seed = rng::derive_seed(0, &[fnv1a(&normalize_noun(a)), fnv1a(&normalize_noun(b))]);
        let angle = (angle_seed % 360) as f64 * std::f64::consts::PI / 180.0;
        let mut cfg = biased_world_config(noun.ratio, angle, a, b, &noun.latent);
        cfg.concepts[0].class = family.a_class;
        cfg.concepts[1].class = family.b_class;
        cfg.concepts[2].class = family.b_class;
        Ok(cfg)
    }

    /// A small built-in vocabulary over two patterns.
    pub fn demo() -> Self {
        let noun = |name: &str, latent: &str, ratio: f64| BiasedNoun {
            name: name.into(),
            latent: latent.into(),
            ratio,
        };
        Vocabulary {
            families: vec![
                NounFamily {
                    pattern: "Beverage and erroneous container".into(),
                    a_class: ConceptClass::Content,
                    b_class: ConceptClass::Container,
                    a_nouns: vec![
                        noun("iced coke", "glass", 16.0),
                        noun("coffee", "coffee mug", 8.0),
                        noun("orange juice", "juice glass", 8.0),
                        noun("iced tea", "highball glass", 4.0),
                        noun("milkshake", "milkshake glass", 16.0),
                        noun("hot chocolate", "ceramic mug", 8.0),
                        noun("lemonade", "pitcher", 4.0),
                        noun("green tea", "teapot", 16.0),
                        noun("red wine", "wine glass", 16.0),
                        noun("espresso", "demitasse", 8.0),
                        noun("beer", "beer mug", 16.0),
                        noun("mojito", "tumbler", 4.0),
                    ],
                    b_nouns: vec![
                        "tea cup".into(),
                        "champagne flute".into(),
                        "shot glass".into(),
                        "beer stein".into(),
                        "red solo cup".into(),
                        "soda can".into(),
                        "water bottle".into(),
                        "cocktail shaker".into(),
                        "martini glass".into(),
                        "paper bag".into(),
                        "flower vase".into(),
                        "bucket".into(),
                    ],
                },
                NounFamily {
                    pattern: "Jewelry and improper storage".into(),
                    a_class: ConceptClass::Content,
                    b_class: ConceptClass::Storage,
                    a_nouns: vec![
                        noun("diamond necklace", "velvet box", 16.0),
                        noun("ruby earrings", "jewelry box", 8.0),
                        noun("silver anklet", "jewelry pouch", 4.0),
                        noun("pearl bracelet", "display case", 8.0),
                        noun("gold ring", "ring box", 16.0),
                    ],
                    b_nouns: vec![
                        "toolbox".into(),
                        "bird nest".into(),
                        "toilet bowl".into(),
                        "fish tank".into(),
                        "tackle box".into(),
                    ],
                },
            ],
            discovered_patterns: vec![
                "Musical instrument and inappropriate venue".into(),
                "Fruit and unrelated seasoning".into(),
                "Spacecraft and terrestrial landscape".into(),
                "Jewelry and improper storage".into(),
                "Sports gear and wrong sport".into(),
            ],
        }
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Deterministic stand-in for a language model: shuffles the vocabulary of
/// the requested pattern and replies in the numbered-pair format, with one
/// deliberately repeated noun so the dedup path is exercised.
pub struct MockGenerator {
    vocabulary: Vocabulary,
    seed: u64,
    round: u64,
    transcript: Vec<Exchange>,
}

impl MockGenerator {
    pub fn new(vocabulary: Vocabulary, seed: u64) -> Self {
        Self {
            vocabulary,
            seed,
            round: 0,
            transcript: Vec::new(),
        }
    }

    fn log(&mut self, kind: &str, request: String, reply: &str) {
        self.transcript.push(Exchange {
            kind: kind.into(),
            request,
            reply: reply.into(),
        });
    }
}

impl Generator for MockGenerator {
    fn pair_reply(&mut self, request: &PairRequest<'_>) -> Result<String> {
        let prompt = pair_prompt(request);
        let mut rng = rng::stream(self.seed, &[self.round]);
        self.round += 1;
        let reply = match self.vocabulary.family(&request.pattern.name) {
            None => "I could not think of any pairs for that pattern.".to_string(),
            Some(family) => {
                let mut a: Vec<&str> = family.a_nouns.iter().map(|n| n.name.as_str()).collect();
                let mut b: Vec<&str> = family.b_nouns.iter().map(String::as_str).collect();
                a.shuffle(&mut rng);
                b.shuffle(&mut rng);
                let count = request.n.min(a.len()).min(b.len());
                let mut lines = vec!["Certainly, here are some pairs:".to_string(), String::new()];
                for i in 0..count {
                    lines.push(format!("{}. {}, {}", i + 1, a[i], b[i]));
                }
                if count > 1 {
                    lines.push(format!("{}. {}, {}", count + 1, a[0], b[count - 1]));
                }
                lines.push(String::new());
                lines.push("These pairs should make for some awkward pictures.".into());
                lines.join("\n")
            }
        };
        self.log("pairs", prompt, &reply);
        Ok(reply)
    }

    fn pattern_reply(&mut self, request: &PatternRequest<'_>) -> Result<String> {
        let prompt = pattern_prompt(request);
        let mut lines = vec!["Here are some new positive patterns:".to_string()];
        let mut index = 1;
        for name in &self.vocabulary.discovered_patterns {
            lines.push(format!("{index}. [positive] {name}"));
            lines.push(format!("- Example: a pair from \"{name}\""));
            index += 1;
        }
        if let Some(first) = request.existing.first() {
            lines.push(format!("{index}. [positive] {}", first.name));
        }
        let reply = lines.join("\n");
        self.log("patterns", prompt, &reply);
        Ok(reply)
    }

    fn bind(&self, a: &str, b: &str) -> Option<Binding> {
        self.vocabulary.world_for(a, b).ok().map(|_| Binding {
            world: super::VOCAB_WORLD.into(),
            a: a.into(),
            b: b.into(),
        })
    }

    fn drain_transcript(&mut self) -> Vec<Exchange> {
        std::mem::take(&mut self.transcript)
    }
}

// ---------------------------------------------------------------------------
// Expansion and discovery
// ---------------------------------------------------------------------------

/// Asks the generator for `n` pairs of `pattern`, using `few_shot` (the
/// pattern's stored pairs) as examples. Pairs reusing a noun already seen in
/// this batch or among `few_shot` of the same pattern are dropped, as are
/// candidates tagged negative.
pub fn generate_pairs<G: Generator + ?Sized>(
    generator: &mut G,
    pattern: &Pattern,
    few_shot: &[ConceptPair],
    n: usize,
) -> Result<Vec<ConceptPair>> {
    if n == 0 {
        return Err(Error::BadParameter("n must be at least 1".into()));
    }
    let reply = generator.pair_reply(&PairRequest { pattern, few_shot, n })?;
    let candidates = parse_generator_reply(&reply)?;
    let mut taken: BTreeSet<String> = few_shot
        .iter()
        .filter(|p| p.pattern == pattern.name)
        .flat_map(|p| p.nouns())
        .collect();
    let mut out = Vec::new();
    for c in candidates {
        if out.len() == n {
            break;
        }
        if c.is_negative() {
            continue;
        }
        let (na, nb) = (normalize_noun(&c.a), normalize_noun(&c.b));
        if na == nb || taken.contains(&na) || taken.contains(&nb) {
            continue;
        }
        taken.insert(na);
        taken.insert(nb);
        out.push(ConceptPair {
            binding: generator.bind(&c.a, &c.b),
            a_name: c.a,
            b_name: c.b,
            pattern: pattern.name.clone(),
            level: None,
            provenance: Provenance::Generated,
        });
    }
    Ok(out)
}

/// Asks for up to `n` new patterns; names already in `existing` (or repeated
/// within the reply) are dropped, compared case-insensitively.
pub fn discover_patterns<G: Generator + ?Sized>(generator: &mut G, existing: &[Pattern], n: usize) -> Result<Vec<Pattern>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if existing.is_empty() {
        return Err(Error::BadParameter("pattern discovery needs at least one existing pattern".into()));
    }
    let reply = generator.pattern_reply(&PatternRequest { existing, n })?;
    let mut seen: BTreeSet<String> = existing.iter().map(|p| p.name.to_lowercase()).collect();
    let mut out = Vec::new();
    for c in parse_pattern_reply(&reply) {
        if out.len() == n {
            break;
        }
        if c.label.as_deref() == Some("negative") || !seen.insert(c.name.to_lowercase()) {
            continue;
        }
        out.push(Pattern {
            name: c.name,
            origin: PatternOrigin::GeneratorPhase3,
            parents: None,
            lcmis_flag: true,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedCompletion;
    use crate::world::build_world;

    fn beverage() -> Pattern {
        Pattern::seed("Beverage and erroneous container")
    }

    #[test]
    fn mock_pairs_have_distinct_nouns() {
        let mut g = MockGenerator::new(Vocabulary::demo(), 1);
        let pairs = generate_pairs(&mut g, &beverage(), &[], 5).unwrap();
        assert_eq!(pairs.len(), 5);
        let nouns: BTreeSet<String> = pairs.iter().flat_map(|p| p.nouns()).collect();
        assert_eq!(nouns.len(), 10);
        assert!(pairs.iter().all(|p| p.binding.is_some()));
        assert_eq!(g.drain_transcript().len(), 1);
        assert!(g.drain_transcript().is_empty());
    }

    #[test]
    fn duplicate_noun_in_reply_is_dropped() {
        let reply = "1. Coffee, Tea Cup\n2. Coffee, Shot Glass\n3. Lemonade, Bucket";
        let mut g = LlmGenerator::new(ScriptedCompletion::new([reply]));
        let pairs = generate_pairs(&mut g, &beverage(), &[], 5).unwrap();
        let labels: Vec<_> = pairs.iter().map(ConceptPair::label).collect();
        assert_eq!(labels, vec!["Coffee, Tea Cup", "Lemonade, Bucket"]);
        assert!(pairs.iter().all(|p| p.binding.is_none()));
    }

    #[test]
    fn stored_nouns_block_reuse() {
        let stored = ConceptPair {
            a_name: "coffee".into(),
            b_name: "bucket".into(),
            pattern: beverage().name,
            binding: None,
            level: None,
            provenance: Provenance::HumanSeed,
        };
        let reply = "1. Coffee, Tea Cup\n2. Lemonade, Bucket\n3. Milk, Vase";
        let mut g = LlmGenerator::new(ScriptedCompletion::new([reply]));
        let pairs = generate_pairs(&mut g, &beverage(), &[stored], 5).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].a_name, "Milk");
        let transcript = g.drain_transcript();
        assert!(transcript[0].request.contains("[positive] coffee, bucket"));
        assert_eq!(transcript[0].reply, reply);
    }

    #[test]
    fn thirty_line_reply_parses_fully() {
        let reply = include_str!("../../tests/fixtures/phase2_reply.txt");
        let mut g = LlmGenerator::new(ScriptedCompletion::new([reply]));
        let parsed = parse_generator_reply(reply).unwrap();
        assert_eq!(parsed.len(), 30);
        let pairs = generate_pairs(&mut g, &beverage(), &[], 30).unwrap();
        assert!(pairs.len() <= 30);
    }

    #[test]
    fn unavailable_generator_propagates() {
        let mut g = LlmGenerator::new(ScriptedCompletion::new(Vec::<String>::new()));
        assert!(matches!(
            generate_pairs(&mut g, &beverage(), &[], 3),
            Err(Error::GeneratorUnavailable(_))
        ));
        let mut g = LlmGenerator::new(ScriptedCompletion::new(["No ideas, sorry."]));
        assert!(matches!(generate_pairs(&mut g, &beverage(), &[], 3), Err(Error::EmptyReply)));
    }

    #[test]
    fn mock_discovery_dedups_and_caps() {
        let mut g = MockGenerator::new(Vocabulary::demo(), 1);
        let existing = vec![beverage(), Pattern::seed("Jewelry and improper storage")];
        let found = discover_patterns(&mut g, &existing, 10).unwrap();
        let names: Vec<_> = found.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "Musical instrument and inappropriate venue",
                "Fruit and unrelated seasoning",
                "Spacecraft and terrestrial landscape",
                "Sports gear and wrong sport"
            ]
        );
        assert!(found.iter().all(|p| p.origin == PatternOrigin::GeneratorPhase3));
        assert!(discover_patterns(&mut g, &existing, 0).unwrap().is_empty());
        assert_eq!(discover_patterns(&mut g, &existing, 2).unwrap().len(), 2);
    }

    #[test]
    fn mock_discovery_returns_fixture() {
        let mut vocab = Vocabulary::demo();
        vocab.discovered_patterns = vec!["Jewelry and improper storage".into()];
        let mut g = MockGenerator::new(vocab, 0);
        let found = discover_patterns(&mut g, &[beverage()], 3).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].name, "Jewelry and improper storage");
    }

    #[test]
    fn vocabulary_worlds_are_valid() {
        let v = Vocabulary::demo();
        for f in &v.families {
            for a in &f.a_nouns {
                for b in &f.b_nouns {
                    let cfg = v.world_for(&a.name, b).unwrap();
                    build_world(&cfg).unwrap();
                }
            }
        }
        assert!(v.world_for("coffee", "toolbox").is_err());
    }
}
