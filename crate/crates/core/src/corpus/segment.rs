use serde::{Deserialize, Serialize};

use crate::text::CharSpan;

/// One sentence of a paragraph: its text and where it sits in the raw text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub span: CharSpan,
}

/// Tokens that end in a period without ending a sentence. Matched against the
/// whitespace-delimited word carrying the period, case-sensitively.
const ABBREVIATIONS: &[&str] = &[
    "Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "Sr.", "Jr.", "St.", "Mt.", "Ft.", "Gen.", "Col.", "Lt.",
    "Sgt.", "Capt.", "Rev.", "Gov.", "Sen.", "Rep.", "Pres.", "Inc.", "Ltd.", "Co.", "Corp.",
    "Bros.", "No.", "Vol.", "vs.", "etc.", "e.g.", "i.e.", "cf.", "approx.", "U.S.", "U.K.",
    "U.N.", "E.U.", "D.C.", "Jan.", "Feb.", "Mar.", "Apr.", "Jun.", "Jul.", "Aug.", "Sep.",
    "Sept.", "Oct.", "Nov.", "Dec.",
];

const TERMINATORS: &[char] = &['.', '?', '!'];
const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')', ']'];
const OPENERS: &[char] = &['"', '\'', '\u{201c}', '\u{2018}', '('];

fn starts_sentence(chars: &[char], at: usize) -> bool {
    let Some(&c) = chars.get(at) else {
        return false;
    };
    if c.is_uppercase() || c.is_ascii_digit() {
        return true;
    }
    OPENERS.contains(&c)
        && chars
            .get(at + 1)
            .is_some_and(|n| n.is_uppercase() || n.is_ascii_digit())
}

fn is_abbreviation(chars: &[char], period: usize) -> bool {
    let mut start = period;
    while start > 0 && !chars[start - 1].is_whitespace() {
        start -= 1;
    }
    while start < period && OPENERS.contains(&chars[start]) {
        start += 1;
    }
    let word: String = chars[start..=period].iter().collect();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Rule-based sentence segmentation.
///
/// A boundary falls after a run of `.`, `?` or `!` (plus any closing quotes or
/// brackets) when followed by whitespace and then an uppercase letter or a
/// digit, possibly behind an opening quote. A lone period closing a known
/// abbreviation never splits. Spans exclude the whitespace between sentences.
pub fn segment_sentences(text: &str) -> Vec<Sentence> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut sentences = Vec::new();
    let push = |sentences: &mut Vec<Sentence>, start: usize, end: usize| {
        let mut end = end;
        while end > start && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        if end > start {
            sentences.push(Sentence {
                text: chars[start..end].iter().collect(),
                span: CharSpan::new(start, end),
            });
        }
    };

    let mut i = 0;
    while i < n && chars[i].is_whitespace() {
        i += 1;
    }
    let mut start = i;
    while i < n {
        if !TERMINATORS.contains(&chars[i]) {
            i += 1;
            continue;
        }
        let first = i;
        let mut end = i + 1;
        while end < n && TERMINATORS.contains(&chars[end]) {
            end += 1;
        }
        while end < n && CLOSERS.contains(&chars[end]) {
            end += 1;
        }
        let lone_period =
            chars[first] == '.' && chars[first + 1..end].iter().all(|c| CLOSERS.contains(c));
        if end < n && chars[end].is_whitespace() {
            let mut next = end;
            while next < n && chars[next].is_whitespace() {
                next += 1;
            }
            let suppressed = lone_period && is_abbreviation(&chars, first);
            if !suppressed && starts_sentence(&chars, next) {
                push(&mut sentences, start, end);
                start = next;
                i = next;
                continue;
            }
        }
        i = end;
    }
    if start < n {
        push(&mut sentences, start, n);
    }
    sentences
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::slice_chars;
    use proptest::prelude::*;

    use crate::corpus::fixtures::TESLA_PARAGRAPH as TESLA;

    #[test]
    fn empty_and_single() {
        assert!(segment_sentences("").is_empty());
        assert!(segment_sentences("  \n ").is_empty());
        let one = segment_sentences("Hello.");
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].text, "Hello.");
    }

    #[test]
    fn tesla_paragraph_has_six_sentences() {
        let s = segment_sentences(TESLA);
        assert_eq!(s.len(), 6);
        assert_eq!(s[0].text, "Tesla was the fourth of five children.");
        assert_eq!(
            s[2].text,
            "Dane was killed in a horse-riding accident when Nikola was five."
        );
        assert!(s[5].text.starts_with("Nikola completed"));
    }

    #[test]
    fn abbreviations_suppress_splits() {
        let s =
            segment_sentences("Mr. Smith went to Washington. He met Dr. Jones in Jan. 1901 there.");
        assert_eq!(s.len(), 2);
        let s = segment_sentences("They moved to the U.S. Army base. Then it rained.");
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn requires_capital_or_digit_after_boundary() {
        assert_eq!(
            segment_sentences("It was 3 p.m. and cold. so what").len(),
            1
        );
        assert_eq!(
            segment_sentences("Who? 42 people! \"Really.\" Yes.").len(),
            4
        );
    }

    proptest! {
        #[test]
        fn sentences_reconstruct_raw_text(text in "[A-Za-z0-9 .?!\"\n]{0,120}") {
            let sentences = segment_sentences(&text);
            let chars: Vec<char> = text.chars().collect();
            let mut cursor = 0;
            for s in &sentences {
                prop_assert!(s.span.start >= cursor);
                prop_assert!(s.span.end <= chars.len());
                prop_assert!(chars[cursor..s.span.start].iter().all(|c| c.is_whitespace()));
                prop_assert_eq!(slice_chars(&text, s.span), Some(s.text.as_str()));
                cursor = s.span.end;
            }
            prop_assert!(chars[cursor..].iter().all(|c| c.is_whitespace()));
            prop_assert_eq!(segment_sentences(&text), sentences);
        }
    }
}
