//! Synthetic terms-of-service corpus for offline runs and tests.
//!
//! Every unfair clause contains the trigger phrase of each of its categories;
//! fair clauses never contain a trigger phrase. Some fair clauses are decoys
//! that share vocabulary with an unfair category without its trigger.

use std::collections::BTreeMap;

use super::{Clause, Corpus, Split};
use crate::label::Label;
use crate::rng::SampleRng;

/// Per category: the trigger phrase planted in unfair clauses and the cue a
/// prompt must mention for a keyword classifier to look for it.
pub struct CategoryLexicon {
    pub tag: &'static str,
    pub trigger: &'static str,
    pub cue: &'static str,
    templates: &'static [&'static str],
}

pub const LEXICON: [CategoryLexicon; 9] = [
    CategoryLexicon {
        tag: "arbitration",
        trigger: "binding arbitration",
        cue: "arbitration",
        templates: &[
            "Any dispute arising from these terms shall be resolved exclusively by binding arbitration in {city}.",
            "You and {service} agree that all claims will be settled through binding arbitration rather than in court.",
        ],
    },
    CategoryLexicon {
        tag: "content-removal",
        trigger: "at our sole discretion",
        cue: "content removal",
        templates: &[
            "{service} may remove any content you post at our sole discretion and without prior notice.",
            "We reserve the right to delete uploaded material at our sole discretion.",
        ],
    },
    CategoryLexicon {
        tag: "jurisdiction",
        trigger: "exclusive jurisdiction",
        cue: "jurisdiction",
        templates: &[
            "You agree to submit to the exclusive jurisdiction of the courts located in {city}.",
            "The courts of {city} shall have exclusive jurisdiction over any claim against {service}.",
        ],
    },
    CategoryLexicon {
        tag: "unilateral-change",
        trigger: "modify these terms at any time",
        cue: "unilateral change",
        templates: &[
            "{service} may modify these terms at any time without notifying you.",
            "We can modify these terms at any time and your continued use means you accept the changes.",
        ],
    },
    CategoryLexicon {
        tag: "choice-of-law",
        trigger: "governed by the laws of",
        cue: "governing law",
        templates: &[
            "These terms are governed by the laws of {state}, regardless of where you live.",
            "This agreement shall be governed by the laws of {state} without regard to conflict of law rules.",
        ],
    },
    CategoryLexicon {
        tag: "limitation-of-liability",
        trigger: "shall not be liable",
        cue: "liability",
        templates: &[
            "{service} shall not be liable for any damages arising from your use of the service.",
            "In no event and under no theory we shall not be liable for lost data or profits.",
        ],
    },
    CategoryLexicon {
        tag: "unilateral-termination",
        trigger: "terminate your account at any time",
        cue: "termination",
        templates: &[
            "We may suspend or terminate your account at any time for any reason.",
            "{service} can terminate your account at any time without giving a reason.",
        ],
    },
    CategoryLexicon {
        tag: "contract-by-using",
        trigger: "by using the service",
        cue: "by using",
        templates: &[
            "You agree to be bound by these terms by using the service.",
            "By using the service you accept every provision of this agreement with {service}.",
        ],
    },
    CategoryLexicon {
        tag: "privacy-included",
        trigger: "also accept our privacy policy",
        cue: "privacy",
        templates: &[
            "By accepting these terms you also accept our privacy policy.",
            "Agreeing to these terms means you also accept our privacy policy and cookie rules.",
        ],
    },
];

const FAIR_TEMPLATES: &[&str] = &[
    "You may cancel your subscription at any time from your account settings.",
    "We will notify you by email {days} days before any change to these terms takes effect.",
    "{service} provides customer support through the help center.",
    "You retain ownership of the content you upload to {service}.",
    "Refunds are issued to the original payment method within {days} days.",
    "You must be at least 13 years old to create an account with {service}.",
    "Please keep your password confidential and tell us about any unauthorized use.",
    "These terms explain how you can use the features offered by {service}.",
    "You can export your data at any time in a common file format.",
    "If any provision of these terms is found invalid, the remaining provisions stay in effect.",
    // decoys: category vocabulary without the trigger phrase
    "Any dispute may be brought before the courts of your place of residence.",
    "Our privacy notice describes which data we collect and why.",
    "You may close your account and we will delete your data within {days} days.",
    "Consumer protection laws of your country of residence continue to apply.",
];

const SERVICES: &[&str] = &["Acme", "Streamly", "PhotoNest", "Chatterbox", "CloudDesk", "Gamezone"];
const CITIES: &[&str] = &["Santa Clara", "Dublin", "Luxembourg", "Austin", "Seattle", "Singapore"];
const STATES: &[&str] = &["California", "Delaware", "Ireland", "New York", "Texas"];
const PREFIXES: &[&str] = &["", "Please note that ", "In addition, ", "Important: ", "For clarity, "];

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Share of unfair clauses per split.
    pub unfair_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 2024,
            train: 1000,
            val: 300,
            test: 200,
            unfair_fraction: 0.4,
        }
    }
}

fn pick<'a>(rng: &mut SampleRng, items: &[&'a str]) -> &'a str {
    items[rng.below(items.len())]
}

fn fill(rng: &mut SampleRng, template: &str) -> String {
    let body = template
        .replace("{service}", pick(rng, SERVICES))
        .replace("{city}", pick(rng, CITIES))
        .replace("{state}", pick(rng, STATES))
        .replace("{days}", &(7 + rng.below(54)).to_string());
    let prefix = pick(rng, PREFIXES);
    if prefix.is_empty() {
        body
    } else {
        let mut chars = body.chars();
        let first = chars.next().map(|c| c.to_lowercase().collect::<String>()).unwrap_or_default();
        format!("{prefix}{first}{}", chars.as_str())
    }
}

/// Deterministic corpus for a spec. Unfair clause `i` of a split carries
/// category `i mod 9`; every fifth also carries the next category.
pub fn generate(spec: &SyntheticSpec) -> Corpus {
    let mut rng = SampleRng::new(spec.seed);
    let mut splits = BTreeMap::new();
    let mut next_id = 0usize;
    for (split, n) in [(Split::Train, spec.train), (Split::Val, spec.val), (Split::Test, spec.test)] {
        let unfair_n = (n as f64 * spec.unfair_fraction).round() as usize;
        let mut clauses = Vec::with_capacity(n);
        for i in 0..n {
            next_id += 1;
            let id = format!("syn-{next_id:05}");
            if i < unfair_n {
                let first = &LEXICON[i % LEXICON.len()];
                let template = pick(&mut rng, first.templates);
                let mut text = fill(&mut rng, template);
                let mut tags = vec![first.tag];
                if i % 5 == 4 {
                    let second = &LEXICON[(i + 1) % LEXICON.len()];
                    text.push(' ');
                    let template = pick(&mut rng, second.templates);
                    text.push_str(&fill(&mut rng, template));
                    tags.push(second.tag);
                }
                clauses.push(Clause::new(id, text, Label::Unfair).with_categories(tags));
            } else {
                let template = pick(&mut rng, FAIR_TEMPLATES);
                let text = fill(&mut rng, template);
                clauses.push(Clause::new(id, text, Label::Fair));
            }
        }
        rng.shuffle(&mut clauses);
        splits.insert(split, clauses);
    }
    Corpus::new(splits).expect("synthetic corpus is valid")
}

/// Categories whose trigger phrase occurs in `text` (case-insensitive).
pub fn triggered_categories(text: &str) -> Vec<&'static CategoryLexicon> {
    let lower = text.to_lowercase();
    LEXICON.iter().filter(|c| lower.contains(c.trigger)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DEFAULT_CATEGORIES;

    #[test]
    fn lexicon_matches_default_scheme() {
        let tags: Vec<&str> = LEXICON.iter().map(|c| c.tag).collect();
        let mut sorted_a = tags.clone();
        let mut sorted_b = DEFAULT_CATEGORIES.to_vec();
        sorted_a.sort_unstable();
        sorted_b.sort_unstable();
        assert_eq!(sorted_a, sorted_b);
    }

    #[test]
    fn triggers_agree_with_labels() {
        let corpus = generate(&SyntheticSpec::default());
        assert_eq!(corpus.len(), 1500);
        for (_, clause) in corpus.clauses() {
            let hits = triggered_categories(&clause.text);
            match clause.fairness {
                Label::Fair => assert!(hits.is_empty(), "{}", clause.text),
                Label::Unfair => {
                    for tag in &clause.categories {
                        assert!(hits.iter().any(|h| h.tag == tag), "{} lacks {tag}", clause.text);
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic() {
        let spec = SyntheticSpec::default();
        assert_eq!(generate(&spec), generate(&spec));
    }
}
