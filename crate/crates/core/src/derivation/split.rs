use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Split};

use super::DerivationError;

/// Hold out `n_articles` randomly chosen articles (seeded). Returns
/// `(remaining, held_out)`; both keep the original article order.
pub fn make_article_split(
    corpus: &Corpus,
    n_articles: usize,
    seed: u64,
) -> Result<(Corpus, Corpus), DerivationError> {
    let available = corpus.articles.len();
    if n_articles > 0 && n_articles >= available {
        return Err(DerivationError::SplitTooLarge {
            requested: n_articles,
            available,
        });
    }
    let mut order: Vec<usize> = (0..available).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut held = vec![false; available];
    for &i in &order[..n_articles] {
        held[i] = true;
    }
    let mut remaining = Corpus::empty(corpus.origin, corpus.split);
    let mut held_out = Corpus::empty(corpus.origin, Split::Validation);
    for (article, is_held) in corpus.articles.iter().zip(held) {
        if is_held {
            held_out.articles.push(article.clone());
        } else {
            remaining.articles.push(article.clone());
        }
    }
    Ok((remaining, held_out))
}
