//! Small fixed inputs used by tests, examples and the CLI smoke checks.

use crate::text::{char_len, CharSpan};

use super::{CanonicalQa, CanonicalRecord};

/// The Tesla paragraph from the standard-QA training data, with plain quotes.
pub const TESLA_PARAGRAPH: &str = "Tesla was the fourth of five children. He had an older brother named Dane and three sisters, Milka, Angelina and Marica. Dane was killed in a horse-riding accident when Nikola was five. In 1861, Tesla attended the \"Lower\" or \"Primary\" School in Smiljan where he studied German, arithmetic, and religion. In 1862, the Tesla family moved to Gospić, Austrian Empire, where Tesla's father worked as a pastor. Nikola completed \"Lower\" or \"Primary\" School, followed by the \"Lower Real Gymnasium\" or \"Normal School.";

pub const TESLA_FILTERED_QUESTION: &str = "What happened to Dane?";
pub const TESLA_KEPT_QUESTION: &str = "What was Tesla's brother's name?";

/// Code-point span of the first occurrence of `needle`, plus the needle.
pub fn find_span<'a>(haystack: &str, needle: &'a str) -> Option<(CharSpan, &'a str)> {
    let byte = haystack.find(needle)?;
    let start = char_len(&haystack[..byte]);
    Some((CharSpan::new(start, start + char_len(needle)), needle))
}

fn qa(paragraph: &str, question: &str, answer: &str, turn_index: Option<usize>) -> CanonicalQa {
    let (span, _) = find_span(paragraph, answer).expect("fixture answer must occur in paragraph");
    CanonicalQa {
        question: question.to_string(),
        answer_text: answer.to_string(),
        answer_start: span.start,
        answer_end: span.end,
        turn_index,
    }
}

/// The Tesla paragraph with the two questions whose answers sit in the third
/// (Dane) and second (brother) sentences.
pub fn tesla_record() -> CanonicalRecord {
    CanonicalRecord {
        article_id: "nikola_tesla".into(),
        title: "Nikola Tesla".into(),
        paragraph: TESLA_PARAGRAPH.into(),
        qas: vec![
            qa(
                TESLA_PARAGRAPH,
                TESLA_FILTERED_QUESTION,
                "killed in a horse-riding accident",
                None,
            ),
            qa(TESLA_PARAGRAPH, TESLA_KEPT_QUESTION, "Dane", None),
        ],
    }
}

/// A three-sentence dialogue paragraph with one question per sentence.
pub fn conversational_record() -> CanonicalRecord {
    let paragraph = "The Seekers were offered a twelve-month position on a cruise ship in March 1964. In May, they travelled to the U.K. and had intended to return after ten weeks. Upon arrival they were offered work by a London booking agency, the Grade Organisation.";
    CanonicalRecord {
        article_id: "the_seekers".into(),
        title: "The Seekers".into(),
        paragraph: paragraph.into(),
        qas: vec![
            qa(
                paragraph,
                "what was their first job?",
                "on a cruise ship",
                Some(0),
            ),
            qa(paragraph, "where did they go next?", "the U.K.", Some(1)),
            qa(
                paragraph,
                "what else can you tell me about their discovery?",
                "offered work by a London booking agency",
                Some(2),
            ),
        ],
    }
}
