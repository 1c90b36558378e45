//! Entity tagging for the source/question entity constraint.
//!
//! The built-in [`HeuristicTagger`] is rule based and offline. Anything
//! implementing [`EntityTagger`] can replace it.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::segment_sentences;
use crate::text::CharSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityLabel {
    Name,
    Number,
    DateToken,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub surface: String,
    pub span: CharSpan,
    pub label: EntityLabel,
    /// Additional label; the heuristic tags year-like numbers as `DateToken`
    /// here while keeping `Number` as the primary label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary: Option<EntityLabel>,
}

impl Entity {
    pub fn has_label(&self, label: EntityLabel) -> bool {
        self.label == label || self.secondary == Some(label)
    }
}

/// Tags entities in `text`. `pool` holds the surrounding texts (paragraph
/// sentences and questions) a tagger may consult for disambiguation.
pub trait EntityTagger: Sync {
    fn entities(&self, text: &str, pool: &[&str]) -> Vec<Entity>;
}

/// Rules:
/// - a maximal whitespace-separated run of capitalized word tokens is a NAME,
///   unless it starts a sentence; a sentence-initial token still counts when
///   the same word appears capitalized mid-sentence somewhere in the pool;
/// - a token containing a digit is a NUMBER; four-digit values in 1000..=2100
///   are additionally DATE_TOKEN.
///
/// Possessive `'s` is stripped from surfaces.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicTagger;

#[derive(Debug, Clone)]
struct Word {
    text: String,
    span: CharSpan,
    sentence_initial: bool,
    /// Only whitespace separates this word from the previous one.
    joined_to_previous: bool,
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn words(text: &str) -> Vec<Word> {
    let chars: Vec<char> = text.chars().collect();
    let sentence_starts: HashSet<usize> = segment_sentences(text)
        .iter()
        .map(|s| s.span.start)
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut seen_in_sentence = false;
    let mut gap_is_whitespace = false;
    while i < chars.len() {
        if sentence_starts.contains(&i) {
            seen_in_sentence = false;
        }
        let c = chars[i];
        if !c.is_alphanumeric() {
            gap_is_whitespace &= c.is_whitespace();
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() {
            let c = chars[i];
            let inner = (is_apostrophe(c) || c == '-')
                && i + 1 < chars.len()
                && chars[i + 1].is_alphanumeric()
                && i > start;
            if c.is_alphanumeric() || inner {
                i += 1;
            } else {
                break;
            }
        }
        let mut end = i;
        // possessive
        if end - start > 2 && is_apostrophe(chars[end - 2]) && matches!(chars[end - 1], 's' | 'S') {
            end -= 2;
        }
        out.push(Word {
            text: chars[start..end].iter().collect(),
            span: CharSpan::new(start, end),
            sentence_initial: !seen_in_sentence,
            joined_to_previous: gap_is_whitespace && !out.is_empty(),
        });
        seen_in_sentence = true;
        gap_is_whitespace = end == i;
    }
    out
}

fn is_capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(char::is_uppercase) && !word.chars().any(|c| c.is_ascii_digit())
}

fn has_digit(word: &str) -> bool {
    word.chars().any(|c| c.is_ascii_digit())
}

fn is_year(word: &str) -> bool {
    word.len() == 4
        && word.chars().all(|c| c.is_ascii_digit())
        && word
            .parse::<u32>()
            .is_ok_and(|y| (1000..=2100).contains(&y))
}

/// Words that occur capitalized somewhere other than a sentence start.
fn mid_sentence_capitalized(pool: &[&str]) -> HashSet<String> {
    pool.iter()
        .flat_map(|t| words(t))
        .filter(|w| !w.sentence_initial && is_capitalized(&w.text))
        .map(|w| w.text)
        .collect()
}

impl HeuristicTagger {
    fn tag(&self, text: &str, recurring: &HashSet<String>) -> Vec<Entity> {
        let chars: Vec<char> = text.chars().collect();
        let surface = |span: CharSpan| chars[span.start..span.end].iter().collect::<String>();
        let words = words(text);
        let mut entities = Vec::new();
        let mut run: Option<CharSpan> = None;
        let close = |run: &mut Option<CharSpan>, entities: &mut Vec<Entity>| {
            if let Some(span) = run.take() {
                entities.push(Entity {
                    surface: surface(span),
                    span,
                    label: EntityLabel::Name,
                    secondary: None,
                });
            }
        };
        for w in &words {
            if has_digit(&w.text) {
                close(&mut run, &mut entities);
                entities.push(Entity {
                    surface: w.text.clone(),
                    span: w.span,
                    label: EntityLabel::Number,
                    secondary: is_year(&w.text).then_some(EntityLabel::DateToken),
                });
                continue;
            }
            let qualifies =
                is_capitalized(&w.text) && (!w.sentence_initial || recurring.contains(&w.text));
            if !qualifies {
                close(&mut run, &mut entities);
                continue;
            }
            match run.as_mut() {
                Some(span) if w.joined_to_previous => span.end = w.span.end,
                _ => {
                    close(&mut run, &mut entities);
                    run = Some(w.span);
                }
            }
        }
        close(&mut run, &mut entities);
        entities
    }

    /// Tag many texts against one shared pool.
    pub fn tag_all(&self, texts: &[&str], pool: &[&str]) -> Vec<Vec<Entity>> {
        let recurring = mid_sentence_capitalized(pool);
        texts.iter().map(|t| self.tag(t, &recurring)).collect()
    }
}

impl EntityTagger for HeuristicTagger {
    fn entities(&self, text: &str, pool: &[&str]) -> Vec<Entity> {
        self.tag(text, &mid_sentence_capitalized(pool))
    }
}

/// Built-in heuristic tagging of a standalone text (its own pool).
pub fn extract_entities(text: &str) -> Vec<Entity> {
    HeuristicTagger.entities(text, &[text])
}

/// Case-insensitive surface set.
pub fn surface_set(entities: &[Entity]) -> HashSet<String> {
    entities.iter().map(|e| e.surface.to_lowercase()).collect()
}
