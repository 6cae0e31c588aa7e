//! Reference noun-phrase chunker: a determiner/adjective/noun pattern over a
//! small built-in tag lexicon. Runs with zero model downloads; a constituency
//! parser can be slotted in through [`NounPhraseParser`] instead.

use std::collections::HashMap;

use super::NounPhraseParser;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Determiner,
    Adjective,
    Noun,
    Other,
}

const DETERMINERS: &[&str] = &["the", "a", "an", "his", "her", "their", "this", "that", "its"];

const ADJECTIVES: &[&str] = &[
    // colors
    "red", "blue", "green", "black", "white", "yellow", "brown", "gray", "grey", "purple",
    "orange", "pink", "beige", "tan", "navy", "dark", "light",
    // hair and shape
    "long", "short", "curly", "straight", "blonde",
    // garment qualifiers
    "striped", "plaid", "casual", "formal", "plain", "denim", "leather", "young", "old",
    "mobile",
];

const NOUNS: &[&str] = &[
    // people
    "man", "woman", "person", "boy", "girl", "lady", "male", "female", "pedestrian",
    // hair
    "hair", "ponytail",
    // upper garments
    "shirt", "t-shirt", "tshirt", "jacket", "coat", "sweater", "hoodie", "dress", "top",
    "blouse", "clothes", "uniform", "vest",
    // lower garments
    "jeans", "pants", "trousers", "shorts", "skirt", "leggings",
    // shoes
    "shoes", "sneakers", "boots", "sandals", "heels", "slippers",
    // accessories
    "bag", "backpack", "handbag", "purse", "glasses", "sunglasses", "phone", "umbrella",
    "bike", "bicycle", "hat", "cap", "watch", "scarf", "mask",
];

const OTHERS: &[&str] = &[
    "is", "are", "was", "were", "be", "has", "have", "had", "wears", "wearing", "worn",
    "carrying", "carries", "carried", "riding", "rides", "rode", "holding", "holds", "held",
    "walking", "walks", "standing", "stands", "and", "or", "with", "without", "in", "on",
    "of", "at", "to", "he", "she", "they", "it", "who", "while", "no", "not",
];

/// Shallow chunker over the built-in lexicon. Unknown words break a phrase:
/// nouns here form a closed set, so anything unrecognized cannot anchor one.
#[derive(Debug, Clone)]
pub struct LexiconChunker {
    lexicon: HashMap<&'static str, Tag>,
}

impl Default for LexiconChunker {
    fn default() -> Self {
        Self::new()
    }
}

impl LexiconChunker {
    pub fn new() -> Self {
        let mut lexicon = HashMap::new();
        for word in OTHERS {
            lexicon.insert(*word, Tag::Other);
        }
        for word in DETERMINERS {
            lexicon.insert(*word, Tag::Determiner);
        }
        for word in ADJECTIVES {
            lexicon.insert(*word, Tag::Adjective);
        }
        for word in NOUNS {
            lexicon.insert(*word, Tag::Noun);
        }
        LexiconChunker { lexicon }
    }

    fn tag(&self, word: &str) -> Tag {
        self.lexicon
            .get(word.to_lowercase().as_str())
            .copied()
            .unwrap_or(Tag::Other)
    }
}

/// A whitespace token with the byte range of its alphanumeric core and
/// whether punctuation trails it (a phrase boundary).
struct Token {
    core_start: usize,
    core_end: usize,
    tag: Tag,
    ends_clause: bool,
}

fn tokenize(chunker: &LexiconChunker, text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut start = None;
    let bytes_len = text.len();
    let mut indices = text.char_indices().peekable();
    while let Some((i, ch)) = indices.next() {
        if ch.is_whitespace() {
            continue;
        }
        if start.is_none() {
            start = Some(i);
        }
        let at_end = indices
            .peek()
            .map(|(_, next)| next.is_whitespace())
            .unwrap_or(true);
        if at_end {
            let s = start.take().expect("token start recorded");
            let e = indices.peek().map(|(j, _)| *j).unwrap_or(bytes_len);
            let raw = &text[s..e];
            // Trim leading/trailing punctuation; internal hyphens stay.
            let core_start = s + raw
                .char_indices()
                .find(|(_, c)| c.is_alphanumeric())
                .map(|(k, _)| k)
                .unwrap_or(raw.len());
            let core_end = s + raw
                .char_indices()
                .rev()
                .find(|(_, c)| c.is_alphanumeric())
                .map(|(k, c)| k + c.len_utf8())
                .unwrap_or(0);
            if core_start >= core_end {
                tokens.push(Token {
                    core_start: s,
                    core_end: s,
                    tag: Tag::Other,
                    ends_clause: true,
                });
                continue;
            }
            let trailing = &raw[core_end - s..];
            tokens.push(Token {
                core_start,
                core_end,
                tag: chunker.tag(&text[core_start..core_end]),
                ends_clause: trailing.contains(['.', ',', ';', '!', '?']),
            });
        }
    }
    tokens
}

impl NounPhraseParser for LexiconChunker {
    fn noun_phrases(&self, text: &str) -> Vec<String> {
        let tokens = tokenize(self, text);
        let mut phrases = Vec::new();
        // Current chunk: (start byte, end byte, has at least one noun).
        let mut chunk: Option<(usize, usize, bool)> = None;

        let close = |chunk: &mut Option<(usize, usize, bool)>, phrases: &mut Vec<String>| {
            if let Some((s, e, has_noun)) = chunk.take() {
                if has_noun {
                    phrases.push(text[s..e].to_string());
                }
            }
        };

        for token in &tokens {
            match token.tag {
                Tag::Determiner => {
                    close(&mut chunk, &mut phrases);
                    chunk = Some((token.core_start, token.core_end, false));
                }
                Tag::Adjective => match chunk {
                    // A noun followed by an adjective starts a new phrase.
                    Some((_, _, true)) | None => {
                        close(&mut chunk, &mut phrases);
                        chunk = Some((token.core_start, token.core_end, false));
                    }
                    Some((s, _, false)) => chunk = Some((s, token.core_end, false)),
                },
                Tag::Noun => match chunk {
                    Some((s, _, _)) => chunk = Some((s, token.core_end, true)),
                    None => chunk = Some((token.core_start, token.core_end, true)),
                },
                Tag::Other => close(&mut chunk, &mut phrases),
            }
            if token.ends_clause {
                close(&mut chunk, &mut phrases);
            }
        }
        close(&mut chunk, &mut phrases);
        phrases
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phrases(text: &str) -> Vec<String> {
        LexiconChunker::new().noun_phrases(text)
    }

    #[test]
    fn splits_the_reference_sentence() {
        assert_eq!(
            phrases("The woman wears a red shirt."),
            vec!["The woman", "a red shirt"]
        );
    }

    #[test]
    fn every_phrase_is_a_contiguous_substring() {
        let text = "The man with black short hair wears a blue jacket, gray trousers and white \
                    sneakers. He is carrying a backpack and an umbrella.";
        for phrase in phrases(text) {
            assert!(text.contains(&phrase), "{phrase:?} not in input");
        }
    }

    #[test]
    fn commas_break_phrases() {
        assert_eq!(
            phrases("red shirt, blue jeans and white sneakers"),
            vec!["red shirt", "blue jeans", "white sneakers"]
        );
    }

    #[test]
    fn adjective_after_noun_starts_a_new_phrase() {
        assert_eq!(phrases("black hair red shirt"), vec!["black hair", "red shirt"]);
    }

    #[test]
    fn punctuation_only_text_yields_nothing() {
        assert!(phrases("!!! ???").is_empty());
        assert!(phrases("").is_empty());
    }

    #[test]
    fn unknown_words_do_not_anchor_phrases() {
        assert!(phrases("qwerty asdf zxcv").is_empty());
    }

    #[test]
    fn compound_nouns_stay_together() {
        assert_eq!(phrases("a mobile phone"), vec!["a mobile phone"]);
        assert_eq!(phrases("the woman person"), vec!["the woman person"]);
    }
}
