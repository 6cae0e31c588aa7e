//! Attributes-to-text conversion: the hand-crafted template, style-pair
//! construction for language-model finetuning, and caption composition.

use thiserror::Error;

use crate::confidence::ConfidenceScore;
use crate::types::{AttributeKey, AttributeSet, CaptionSource, PseudoCaption, TextRecord};

pub mod chunker;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum A2tError {
    #[error("text {text_id:?} is empty")]
    EmptyInput { text_id: String },
    #[error("no noun phrase found in text {text_id:?}")]
    EmptyExtraction { text_id: String },
    #[error("a2t backend failure: {0}")]
    Backend(String),
}

/// He iff the gender token reads male; female tokens are matched first so
/// "woman" and "female" never substring-match "man"/"male".
fn pronoun(gender: &str) -> &'static str {
    let g = gender.to_lowercase();
    let female = ["woman", "female", "girl", "lady"];
    if female.iter().any(|t| g.contains(t)) {
        return "She";
    }
    let male = ["man", "male", "boy"];
    if male.iter().any(|t| g.contains(t)) {
        "He"
    } else {
        "She"
    }
}

/// Render the three-sentence description template.
///
/// Sentence one always carries the nine fixed attributes. Sentence two lists
/// only the accessories that are present (`a bag`, `glasses`, `a phone`,
/// `an umbrella`) and is dropped entirely when none is. Sentence three appears
/// only when the person rides a bike.
pub fn render_template(set: &AttributeSet) -> String {
    let gender = set.value(AttributeKey::Gender);
    let first = format!(
        "The {} with {} {} hair wears {} {}, {} {} and {} {}.",
        gender,
        set.value(AttributeKey::HairColor),
        set.value(AttributeKey::HairLength),
        set.value(AttributeKey::ClothesColor),
        set.value(AttributeKey::ClothesStyle),
        set.value(AttributeKey::PantsColor),
        set.value(AttributeKey::PantsStyle),
        set.value(AttributeKey::ShoesColor),
        set.value(AttributeKey::ShoesStyle),
    );

    let mut sentences = vec![first];

    let accessories: Vec<&str> = [
        (AttributeKey::Bag, "a bag"),
        (AttributeKey::Glasses, "glasses"),
        (AttributeKey::Phone, "a phone"),
        (AttributeKey::Umbrella, "an umbrella"),
    ]
    .iter()
    .filter(|(key, _)| set.is_present(*key))
    .map(|(_, item)| *item)
    .collect();
    if !accessories.is_empty() {
        sentences.push(format!(
            "{} is carrying {}.",
            pronoun(gender),
            join_items(&accessories)
        ));
    }

    if set.is_present(AttributeKey::Bike) {
        sentences.push(format!("The {gender} is riding a bike."));
    }

    sentences.join(" ")
}

/// Comma-separated list with "and" before the last item, no Oxford comma.
fn join_items(items: &[&str]) -> String {
    match items {
        [] => String::new(),
        [only] => (*only).to_string(),
        [head @ .., last] => format!("{} and {}", head.join(", "), last),
    }
}

/// A parser that returns the noun phrases of a text, each a contiguous
/// substring of the input, in order of appearance.
pub trait NounPhraseParser {
    fn noun_phrases(&self, text: &str) -> Vec<String>;
}

/// An `<attributes, text>` pair for style finetuning.
#[derive(Debug, Clone, PartialEq)]
pub struct StylePair {
    /// Noun phrases extracted from `text`, deduplicated, order of appearance.
    pub attributes: Vec<String>,
    pub text: String,
}

/// Extract the attribute word sequence of a text.
///
/// Noun phrases come back in order of appearance, deduplicated on first
/// occurrence; the single-space join of the result is the sequence handed to
/// a language model.
pub fn extract_style_attributes(
    text: &TextRecord,
    parser: &dyn NounPhraseParser,
) -> Result<Vec<String>, A2tError> {
    if text.text.trim().is_empty() {
        return Err(A2tError::EmptyInput {
            text_id: text.text_id.clone(),
        });
    }
    let mut seen = std::collections::HashSet::new();
    let phrases: Vec<String> = parser
        .noun_phrases(&text.text)
        .into_iter()
        .filter(|p| seen.insert(p.clone()))
        .collect();
    if phrases.is_empty() {
        return Err(A2tError::EmptyExtraction {
            text_id: text.text_id.clone(),
        });
    }
    Ok(phrases)
}

/// Result of building style pairs over a corpus: texts without any noun
/// phrase are skipped, not fatal.
#[derive(Debug, Clone, PartialEq)]
pub struct StylePairBuild {
    pub pairs: Vec<StylePair>,
    pub skipped: usize,
}

/// One pair per parseable text, in corpus order.
pub fn build_style_pairs(
    corpus: &[TextRecord],
    parser: &dyn NounPhraseParser,
) -> StylePairBuild {
    let mut pairs = Vec::new();
    let mut skipped = 0usize;
    for record in corpus {
        match extract_style_attributes(record, parser) {
            Ok(attributes) => pairs.push(StylePair {
                attributes,
                text: record.text.clone(),
            }),
            Err(_) => skipped += 1,
        }
    }
    StylePairBuild { pairs, skipped }
}

/// The canonical attribute word sequence of an image: its 14 normalized
/// values in prompt order. Lossless, so a backend can reconstruct the values.
pub fn attribute_word_sequence(set: &AttributeSet) -> Vec<String> {
    AttributeKey::ALL
        .iter()
        .map(|key| set.value(*key).to_string())
        .collect()
}

/// An attributes-to-text backend.
///
/// `convert` must be deterministic for a fixed backend state; `finetune`
/// updates that state from style pairs (next-token likelihood of the text
/// given its attribute sequence as prefix).
pub trait A2tBackend {
    fn convert(&self, attributes: &[String]) -> Result<String, A2tError>;
    fn finetune(&mut self, pairs: &[StylePair]) -> Result<(), A2tError>;
}

/// Reference backend: ignores style entirely and renders the template from
/// the canonical 14-token sequence, so the language-model path runs without
/// any neural model.
#[derive(Debug, Clone, Default)]
pub struct EchoTemplateBackend;

impl A2tBackend for EchoTemplateBackend {
    fn convert(&self, attributes: &[String]) -> Result<String, A2tError> {
        if attributes.len() != AttributeKey::ALL.len() {
            return Err(A2tError::Backend(format!(
                "expected {} attribute tokens, got {}",
                AttributeKey::ALL.len(),
                attributes.len()
            )));
        }
        let set = AttributeSet {
            image_id: String::new(),
            answers: AttributeKey::ALL
                .iter()
                .zip(attributes)
                .map(|(key, value)| crate::types::AttributeAnswer {
                    key: *key,
                    raw_answer: value.clone(),
                    value: value.clone(),
                    confidence: 1.0,
                })
                .collect(),
        };
        Ok(render_template(&set))
    }

    fn finetune(&mut self, _pairs: &[StylePair]) -> Result<(), A2tError> {
        Ok(())
    }
}

/// Assemble the final pseudo caption: the converted text, a single space, then
/// the coupled image-captioning description (dropped when empty).
pub fn compose_pseudo_caption(
    a2t_text: &str,
    ic_caption: &str,
    set: &AttributeSet,
    confidence: ConfidenceScore,
    source: CaptionSource,
) -> PseudoCaption {
    let text = if ic_caption.is_empty() {
        a2t_text.to_string()
    } else {
        format!("{a2t_text} {ic_caption}")
    };
    PseudoCaption {
        image_id: set.image_id.clone(),
        text,
        confidence,
        source,
        ic_caption: ic_caption.to_string(),
        attribute_set: set.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::tests::sample_set;

    fn set_with(values: &[(AttributeKey, &str)]) -> AttributeSet {
        let mut set = sample_set();
        for (key, value) in values {
            for a in &mut set.answers {
                if a.key == *key {
                    a.value = value.to_string();
                }
            }
        }
        set
    }

    #[test]
    fn renders_the_reference_example() {
        // woman, black long hair, red shirt, blue jeans, white sneakers, bag only
        let set = sample_set();
        assert_eq!(
            render_template(&set),
            "The woman with black long hair wears red shirt, blue jeans and white sneakers. \
             She is carrying a bag."
        );
    }

    #[test]
    fn all_absent_renders_one_sentence() {
        let set = set_with(&[(AttributeKey::Bag, "absent")]);
        let text = render_template(&set);
        assert_eq!(
            text,
            "The woman with black long hair wears red shirt, blue jeans and white sneakers."
        );
        assert_eq!(text.matches('.').count(), 1);
    }

    #[test]
    fn all_present_uses_the_full_article_pattern() {
        let set = set_with(&[
            (AttributeKey::Gender, "man"),
            (AttributeKey::Glasses, "present"),
            (AttributeKey::Phone, "present"),
            (AttributeKey::Umbrella, "present"),
            (AttributeKey::Bike, "present"),
        ]);
        assert_eq!(
            render_template(&set),
            "The man with black long hair wears red shirt, blue jeans and white sneakers. \
             He is carrying a bag, glasses, a phone and an umbrella. \
             The man is riding a bike."
        );
    }

    #[test]
    fn female_tokens_beat_the_embedded_male_substring() {
        for gender in ["woman", "female", "girl", "young lady"] {
            let set = set_with(&[(AttributeKey::Gender, gender)]);
            assert!(render_template(&set).contains("She is carrying"), "{gender}");
        }
        for gender in ["man", "male", "boy", "young man"] {
            let set = set_with(&[(AttributeKey::Gender, gender)]);
            assert!(render_template(&set).contains("He is carrying"), "{gender}");
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let set = sample_set();
        assert_eq!(render_template(&set), render_template(&set));
    }

    #[test]
    fn no_unresolved_slots_remain() {
        let set = sample_set();
        let text = render_template(&set);
        assert!(!text.contains('<') && !text.contains('>'));
    }

    #[test]
    fn compose_joins_with_a_single_space() {
        let set = sample_set();
        let c = ConfidenceScore::one();
        let caption =
            compose_pseudo_caption("A man in red.", "a person walking", &set, c, CaptionSource::Template);
        assert_eq!(caption.text, "A man in red. a person walking");
        assert_eq!(caption.ic_caption, "a person walking");
    }

    #[test]
    fn compose_with_empty_ic_caption_is_identity_on_text() {
        let set = sample_set();
        let c = ConfidenceScore::one();
        let caption = compose_pseudo_caption("A man in red.", "", &set, c, CaptionSource::Lm);
        assert_eq!(caption.text, "A man in red.");
        assert_eq!(caption.source, CaptionSource::Lm);
    }

    #[test]
    fn compose_is_deterministic() {
        let set = sample_set();
        let c = ConfidenceScore::from_value(0.5).unwrap();
        let a = compose_pseudo_caption("X.", "y", &set, c, CaptionSource::Template);
        let b = compose_pseudo_caption("X.", "y", &set, c, CaptionSource::Template);
        assert_eq!(a, b);
    }

    #[test]
    fn echo_template_round_trips_the_word_sequence() {
        let set = sample_set();
        let words = attribute_word_sequence(&set);
        assert_eq!(words.len(), 14);
        let backend = EchoTemplateBackend;
        assert_eq!(backend.convert(&words).unwrap(), render_template(&set));
    }

    #[test]
    fn echo_template_rejects_wrong_arity() {
        let backend = EchoTemplateBackend;
        assert!(backend.convert(&["red".to_string()]).is_err());
    }

    #[test]
    fn style_attributes_for_the_reference_sentence() {
        let parser = chunker::LexiconChunker::new();
        let record = TextRecord {
            text_id: "t1".to_string(),
            text: "The woman wears a red shirt.".to_string(),
        };
        let attrs = extract_style_attributes(&record, &parser).unwrap();
        assert_eq!(attrs, vec!["The woman".to_string(), "a red shirt".to_string()]);
    }

    #[test]
    fn empty_text_violates_the_precondition() {
        let parser = chunker::LexiconChunker::new();
        let record = TextRecord {
            text_id: "t0".to_string(),
            text: "   ".to_string(),
        };
        assert!(matches!(
            extract_style_attributes(&record, &parser),
            Err(A2tError::EmptyInput { .. })
        ));
    }

    #[test]
    fn repeated_phrases_are_deduplicated() {
        let parser = chunker::LexiconChunker::new();
        let record = TextRecord {
            text_id: "t2".to_string(),
            text: "a red shirt and a red shirt".to_string(),
        };
        let attrs = extract_style_attributes(&record, &parser).unwrap();
        assert_eq!(attrs, vec!["a red shirt".to_string()]);
    }

    #[test]
    fn build_pairs_skips_unparseable_texts() {
        let parser = chunker::LexiconChunker::new();
        let corpus = vec![
            TextRecord { text_id: "a".into(), text: "The man wears blue jeans.".into() },
            TextRecord { text_id: "b".into(), text: "!!! ???".into() },
            TextRecord { text_id: "c".into(), text: "a woman with a bag".into() },
        ];
        let build = build_style_pairs(&corpus, &parser);
        assert_eq!(build.pairs.len(), 2);
        assert_eq!(build.skipped, 1);
        for pair in &build.pairs {
            for phrase in &pair.attributes {
                assert!(pair.text.contains(phrase.as_str()));
            }
        }
    }
}
