//! Acceptance suite: thirteen end-to-end criteria, each printed as one
//! PASS/FAIL line with its runtime and time bound. Runs without the libtest
//! harness so the lines are always visible.

use std::error::Error;
use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use candle_core::{Tensor, Var};
use curiosity::analysis::{beam_divergence_report, prefix_rate, BeamInput};
use curiosity::corpus::fixtures::{tesla_record, TESLA_FILTERED_QUESTION, TESLA_KEPT_QUESTION};
use curiosity::corpus::import::to_jsonl;
use curiosity::corpus::{parse_records, CanonicalQa, CanonicalRecord, Corpus, Origin, Split};
use curiosity::derivation::entities::surface_set;
use curiosity::derivation::{
    derive_conversational, derive_standard, CuriosityTriplet, EntityTagger, HeuristicTagger,
};
use curiosity::metrics::{
    corpus_bleu, curiosity_reward, qa_context, qa_source, self_bleu, sentence_bleu, spearman,
    BleuConfig, EvalConfig,
};
use curiosity::model::decode::{beam, greedy, StepDistribution};
use curiosity::model::{CopyTransformer, ModelConfig, ModelError, Precision, Vocabulary};
use curiosity::qa_scorer::{serve_stub, QaScorer, RemoteConfig, RemoteScorer, StubScorer};
use curiosity::training::{
    greedy_bleu, loss_mixed, loss_ml, loss_rl, loss_rl_from_rollout, scalar, AdamConfig,
    EncodedExample, EncodedSet, Example, Generated, Objective, Policy, RlItem, Rollout,
    TrainConfig, Trainer, TrainingBatch, TrainingError,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(), Box<dyn Error>>;

/// Name, time bound in seconds, check.
type Criterion = (&'static str, u64, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($arg)+).into());
        }
    };
}

const CHILD_ENV: &str = "CQG_STUB_CHILD";

fn main() -> ExitCode {
    if std::env::var_os(CHILD_ENV).is_some() {
        for line in stub_probe_lines() {
            println!("{line}");
        }
        return ExitCode::SUCCESS;
    }
    let criteria: [Criterion; 13] = [
        ("BLEU hand-derived oracle", 1, bleu_oracle),
        (
            "Self-BLEU extremes and permutation invariance",
            5,
            self_bleu_properties,
        ),
        (
            "derivation properties on synthetic paragraphs",
            10,
            derivation_properties,
        ),
        ("Tesla entity-constraint fixture", 1, tesla_fixture),
        ("curiosity reward identity and bounds", 5, reward_identity),
        ("teacher-forcing gradient check", 60, gradient_check),
        ("mixed-loss degeneracies and linearity", 30, mixed_loss),
        ("REINFORCE sign check", 10, reinforce_sign),
        ("beam search against greedy and brute force", 60, decoding),
        ("overfit capacity", 600, overfit_capacity),
        ("beam divergence in vitro", 600, beam_divergence),
        ("Spearman against a rank oracle", 5, spearman_oracle),
        (
            "stub scorer determinism, monotonicity and wire protocol",
            30,
            stub_scorer,
        ),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run));
        let elapsed = start.elapsed();
        let verdict = match result {
            Ok(Ok(())) if elapsed <= Duration::from_secs(*limit) => Ok(()),
            Ok(Ok(())) => Err(format!("exceeded the {limit} s bound")),
            Ok(Err(e)) => Err(e.to_string()),
            Err(_) => Err("panicked".to_string()),
        };
        let secs = elapsed.as_secs_f64();
        match verdict {
            Ok(()) => println!(
                "criterion {:>2} PASS  {name} ({secs:.2} s, bound {limit} s)",
                i + 1
            ),
            Err(reason) => {
                failed += 1;
                println!(
                    "criterion {:>2} FAIL  {name} ({secs:.2} s, bound {limit} s): {reason}",
                    i + 1
                );
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn toks(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// 1 -------------------------------------------------------------------------

fn bleu_oracle() -> Outcome {
    let unsmoothed = BleuConfig::default();
    let sentence =
        |h: &str, r: &str, n: usize| sentence_bleu(&toks(h), &[&toks(r)[..]], n, &unsmoothed);
    // (hyp, ref, n, expected from the definition)
    let cases: [(&str, &str, usize, f64); 6] = [
        // p1 = 1, brevity penalty exp(1 - 3/2)
        ("the cat", "the cat sat", 1, (-0.5f64).exp()),
        // p1 = p2 = 1, brevity penalty exp(1 - 4/3)
        ("the cat sat", "the cat sat down", 2, (-1.0f64 / 3.0).exp()),
        // clipped unigram matches 1 of 4, no penalty
        ("the the the the", "the cat", 1, 0.25),
        // p1 = 1, p2 = 1/3
        ("a b c d", "a b d c", 2, (1.0f64 / 3.0).sqrt()),
        // p1 = 2/4, p2 = 1/3, hypothesis longer than reference
        ("the cat is on", "the cat sat", 2, (0.5f64 / 3.0).sqrt()),
        // p1 = 5/6, p2 = 3/5, p3 = 1/4, p4 = 0 gives 0 unsmoothed
        ("the cat sat on the mat", "the cat lay on the mat", 4, 0.0),
    ];
    for (h, r, n, expected) in cases {
        let got = sentence(h, r, n)?;
        ensure!(
            close(got, expected, 1e-9),
            "BLEU-{n}({h:?}, {r:?}) = {got}, expected {expected}"
        );
    }
    // BLEU-3 of the same pair: (5/6 · 3/5 · 1/4)^(1/3)
    let got = sentence("the cat sat on the mat", "the cat lay on the mat", 3)?;
    let expected = (5.0f64 / 6.0 * 3.0 / 5.0 * 0.25).cbrt();
    ensure!(
        close(got, expected, 1e-9),
        "BLEU-3 = {got}, expected {expected}"
    );

    let identity = "the quick brown fox jumps over the lazy dog";
    for n in 1..=4 {
        ensure!(
            sentence(identity, identity, n)? == 1.0,
            "identity BLEU-{n} is not 1"
        );
    }
    ensure!(
        sentence("a b c", "d e f", 1)? == 0.0,
        "disjoint BLEU-1 is not 0"
    );

    // corpus level pools counts: p1 = 3/3, r = 4, c = 3
    let hyps = vec![toks("a b"), toks("c")];
    let refs = vec![toks("a b"), toks("c d")];
    let got = corpus_bleu(&hyps, &refs, 1)?;
    let expected = (1.0f64 - 4.0 / 3.0).exp();
    ensure!(
        close(got, expected, 1e-9),
        "corpus BLEU-1 = {got}, expected {expected}"
    );
    Ok(())
}

// 2 -------------------------------------------------------------------------

fn self_bleu_properties() -> Outcome {
    let config = BleuConfig::default();
    let same = vec![toks("what was the name of his brother ?"); 6];
    let v = self_bleu(&same, 4, 1000, 0, &config)?;
    ensure!(v == 1.0, "identical set Self-BLEU-4 = {v}");

    let disjoint: Vec<Vec<String>> = (0..6)
        .map(|i| (0..5).map(|j| format!("w{i}x{j}")).collect())
        .collect();
    for n in 1..=4 {
        let v = self_bleu(&disjoint, n, 1000, 0, &config)?;
        ensure!(v == 0.0, "disjoint set Self-BLEU-{n} = {v}");
    }

    let words = [
        "what", "was", "the", "name", "of", "his", "brother", "who", "where", "did", "go", "?",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sentences: Vec<Vec<&str>> = (0..30)
        .map(|_| {
            (0..rng.random_range(3..10))
                .map(|_| words[rng.random_range(0..words.len())])
                .collect()
        })
        .collect();
    for n in 1..=4 {
        let base = self_bleu(&sentences, n, 1000, 0, &config)?;
        for shuffle in 0..20u64 {
            let mut shuffled = sentences.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(100 + shuffle));
            let v = self_bleu(&shuffled, n, 1000, 0, &config)?;
            ensure!(
                close(v, base, 1e-12),
                "Self-BLEU-{n} changed under shuffle {shuffle}: {v} vs {base}"
            );
        }
    }
    Ok(())
}

// 3 -------------------------------------------------------------------------

const NAMES: [&str; 10] = [
    "Tesla", "Dane", "Milka", "Angelina", "Marica", "Graz", "Smiljan", "Gospic", "Vienna", "Edison",
];
const WORDS: [&str; 12] = [
    "visited", "studied", "left", "admired", "the", "river", "school", "quietly", "church", "near",
    "with", "often",
];

/// A paragraph of 2..=6 generated sentences plus 1..=3 questions; returns
/// the record and its sentence count.
fn synthetic_record(
    rng: &mut ChaCha8Rng,
    id: usize,
    conversational: bool,
) -> (CanonicalRecord, usize) {
    let n = rng.random_range(2..=6);
    let mut sentences = Vec::new();
    for _ in 0..n {
        let mut words = vec![NAMES[rng.random_range(0..NAMES.len())].to_string()];
        for _ in 0..rng.random_range(2..6) {
            if rng.random_bool(0.25) {
                words.push(NAMES[rng.random_range(0..NAMES.len())].to_string());
            } else {
                words.push(WORDS[rng.random_range(0..WORDS.len())].to_string());
            }
        }
        sentences.push(format!("{}.", words.join(" ")));
    }
    let paragraph = sentences.join(" ");
    let mut starts = Vec::new();
    let mut offset = 0;
    for s in &sentences {
        starts.push(offset);
        offset += s.chars().count() + 1;
    }
    let qas = (0..rng.random_range(1..=3))
        .map(|turn| {
            let a = rng.random_range(0..n);
            let answer = sentences[a].split(' ').next().unwrap().to_string();
            let mention = if rng.random_bool(0.5) {
                NAMES[rng.random_range(0..NAMES.len())]
            } else {
                "them"
            };
            CanonicalQa {
                question: format!("what did {mention} do there?"),
                answer_start: starts[a],
                answer_end: starts[a] + answer.chars().count(),
                answer_text: answer,
                turn_index: conversational.then_some(turn),
            }
        })
        .collect();
    let record = CanonicalRecord {
        article_id: format!("a{id}"),
        title: format!("Article {id}"),
        paragraph,
        qas,
    };
    (record, n)
}

fn synthetic_corpus(seed: u64, origin: Origin) -> Result<(Corpus, Vec<usize>), Box<dyn Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (records, counts): (Vec<_>, Vec<_>) = (0..200)
        .map(|i| synthetic_record(&mut rng, i, origin == Origin::Conversational))
        .unzip();
    let (corpus, report) = parse_records(&to_jsonl(&records), origin, Split::Train)?;
    ensure!(
        report.rejected() == 0,
        "{} synthetic QA pairs rejected",
        report.rejected()
    );
    Ok((corpus, counts))
}

fn same_triplet(a: &CuriosityTriplet, b: &CuriosityTriplet) -> bool {
    a.source == b.source
        && a.context == b.context
        && a.target == b.target
        && a.meta.article_id == b.meta.article_id
        && a.meta.paragraph_index == b.meta.paragraph_index
        && a.meta.source_sentence_indices == b.meta.source_sentence_indices
        && a.meta.answer_sentence_index == b.meta.answer_sentence_index
}

fn derivation_properties() -> Outcome {
    let (conv, _) = synthetic_corpus(3, Origin::Conversational)?;
    let d = derive_conversational(&conv)?;
    ensure!(!d.triplets.is_empty(), "no conversational triplets");
    for t in &d.triplets {
        let max = t.meta.source_sentence_indices.iter().max().copied();
        ensure!(
            max.is_some_and(|m| m < t.meta.answer_sentence_index),
            "source index not before answer: {t:?}"
        );
    }

    let (standard, counts) = synthetic_corpus(4, Origin::Standard)?;
    let mut expected = 0;
    for (article, n) in standard.articles.iter().zip(&counts) {
        let p = &article.paragraphs[0];
        ensure!(
            p.sentences.len() == *n,
            "{}: segmented into {} sentences, built {n}",
            article.id,
            p.sentences.len()
        );
        expected += p.qa_pairs.len() * (n - 1);
    }
    let unconstrained = derive_standard(&standard, false, &HeuristicTagger)?;
    ensure!(
        unconstrained.triplets.len() == expected,
        "unconstrained count {} != sum of (n - 1) = {expected}",
        unconstrained.triplets.len()
    );
    let constrained = derive_standard(&standard, true, &HeuristicTagger)?;
    ensure!(
        constrained.triplets.len() < unconstrained.triplets.len(),
        "the constraint filtered nothing on the synthetic corpus"
    );
    for t in &constrained.triplets {
        ensure!(
            unconstrained.triplets.iter().any(|u| same_triplet(t, u)),
            "constrained triplet missing from the unconstrained set: {t:?}"
        );
        let article = standard
            .articles
            .iter()
            .find(|a| a.id == t.meta.article_id)
            .unwrap();
        let p = &article.paragraphs[t.meta.paragraph_index];
        let mut pool: Vec<&str> = p.sentence_texts().collect();
        pool.extend(p.qa_pairs.iter().map(|q| q.question.as_str()));
        let q = surface_set(&HeuristicTagger.entities(&t.target, &pool));
        let s = surface_set(&HeuristicTagger.entities(&t.source, &pool));
        ensure!(
            q.is_subset(&s),
            "question entities {q:?} not within source entities {s:?}"
        );
    }
    Ok(())
}

// 4 -------------------------------------------------------------------------

fn tesla_fixture() -> Outcome {
    let (corpus, _) = parse_records(&to_jsonl(&[tesla_record()]), Origin::Standard, Split::Train)?;
    let first = "Tesla was the fourth of five children.";
    let d = derive_standard(&corpus, true, &HeuristicTagger)?;
    let kept = |q: &str| {
        d.triplets
            .iter()
            .any(|t| t.target == q && t.source == first)
    };
    ensure!(
        !kept(TESLA_FILTERED_QUESTION),
        "{TESLA_FILTERED_QUESTION:?} survived with the first sentence"
    );
    ensure!(
        kept(TESLA_KEPT_QUESTION),
        "{TESLA_KEPT_QUESTION:?} was filtered for the first sentence"
    );
    Ok(())
}

// 5 -------------------------------------------------------------------------

const STUB_WORDS: [&str; 20] = [
    "the", "a", "of", "was", "who", "what", "tesla", "dane", "brother", "killed", "accident",
    "horse", "graz", "school", "father", "priest", "in", "an", "gospic", "it",
];

/// (question, context, extension) cases over a small shared vocabulary.
fn stub_cases(seed: u64, count: usize) -> Vec<(String, String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phrase = |lo: usize, hi: usize| -> String {
        let n = rng.random_range(lo..=hi);
        (0..n)
            .map(|_| STUB_WORDS[rng.random_range(0..STUB_WORDS.len())])
            .collect::<Vec<_>>()
            .join(" ")
    };
    (0..count)
        .map(|_| {
            let q = format!("{}?", phrase(1, 7));
            (q, phrase(0, 15), phrase(1, 10))
        })
        .collect()
}

fn reward_identity() -> Outcome {
    // empty sources are rejected by the metric, so draw non-empty ones
    let cases: Vec<_> = stub_cases(5, 1500)
        .into_iter()
        .filter(|(_, s, _)| !s.is_empty())
        .take(1000)
        .collect();
    ensure!(cases.len() == 1000, "only {} non-empty cases", cases.len());
    ensure!(
        qa_source("who was dane?", "", &StubScorer).is_err(),
        "empty source accepted"
    );
    for (q, source, context) in cases {
        let r = curiosity_reward(&q, &source, &context, &StubScorer)?;
        let expected =
            qa_context(&q, &context, &StubScorer)? - qa_source(&q, &source, &StubScorer)?;
        ensure!(
            close(r, expected, 1e-12),
            "reward {r} != {expected} for {q:?}"
        );
        let direct = StubScorer.score(&q, &context)?.probability
            - StubScorer.score(&q, &source)?.probability;
        ensure!(
            close(r, direct, 1e-12),
            "reward {r} != scorer difference {direct}"
        );
        ensure!((-1.0..=1.0).contains(&r), "reward {r} out of [-1, 1]");
    }
    Ok(())
}

// 6 -------------------------------------------------------------------------

fn tiny_model(
    seed: u64,
    precision: Precision,
    texts: &[&str],
) -> Result<CopyTransformer, ModelError> {
    let vocab = Vocabulary::build(texts.iter().copied(), 1, 100);
    let config = ModelConfig {
        num_blocks: 1,
        d_model: 8,
        d_ff: 16,
        num_heads: 2,
        vocab_size: vocab.len(),
        max_source_len: 12,
        max_target_len: 6,
        seed,
        precision,
    };
    CopyTransformer::new(config, vocab)
}

const TINY_TEXTS: [&str; 2] = ["dane was killed in an accident", "who was killed ?"];

fn tiny_examples() -> Vec<Example> {
    vec![
        Example {
            source: "dane was killed in an accident".into(),
            context: "tesla had a brother".into(),
            target: "who was killed ?".into(),
        },
        Example {
            source: "tesla was in graz".into(),
            context: "dane was killed".into(),
            target: "who was in graz ?".into(),
        },
    ]
}

fn gradient_check() -> Outcome {
    let model = tiny_model(6, Precision::F64, &TINY_TEXTS)?;
    ensure!(
        model.vocab().len() <= 20,
        "vocabulary of {} exceeds 20",
        model.vocab().len()
    );
    let data = tiny_examples();
    let set = EncodedSet::new(&model, &data);
    let items: Vec<&EncodedExample> = set.examples.iter().collect();
    let batch = TrainingBatch::new(&model, &items);
    let loss = |m: &CopyTransformer| -> Result<f64, TrainingError> { scalar(&loss_ml(m, &batch)?) };

    let grads = loss_ml(&model, &batch)?.backward()?;
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut checked, mut informative, mut worst) = (0, 0, 0.0f64);
    for (name, var) in model.params().iter() {
        let Some(grad) = grads.get(var.as_tensor()) else {
            continue;
        };
        let analytic = grad.flatten_all()?.to_vec1::<f64>()?;
        let original = var.as_tensor().flatten_all()?.to_vec1::<f64>()?;
        for _ in 0..2 {
            let i = rng.random_range(0..original.len());
            let at = |delta: f64| -> Result<f64, Box<dyn Error>> {
                let mut values = original.clone();
                values[i] += delta;
                set_var(var, values)?;
                Ok(loss(&model)?)
            };
            let numeric = (at(h)? - at(-h)?) / (2.0 * h);
            set_var(var, original.clone())?;
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            ensure!(
                rel <= 1e-3,
                "{name}[{i}]: analytic {a:e} vs numeric {numeric:e} (relative error {rel:e})"
            );
            worst = worst.max(rel);
            checked += 1;
            if a.abs() > 1e-6 {
                informative += 1;
            }
        }
    }
    ensure!(checked >= 20, "only {checked} parameters checked");
    ensure!(
        informative >= 10,
        "only {informative} checked gradients are non-negligible"
    );
    eprintln!("  gradient check: {checked} parameters, worst relative error {worst:.2e}");
    Ok(())
}

fn set_var(var: &Var, values: Vec<f64>) -> candle_core::Result<()> {
    let t = Tensor::from_vec(values, var.shape(), var.device())?;
    var.set(&t)
}

// 7 -------------------------------------------------------------------------

fn mixed_loss() -> Outcome {
    let model = tiny_model(7, Precision::F64, &TINY_TEXTS)?;
    let data = tiny_examples();
    let set = EncodedSet::new(&model, &data);
    let items: Vec<&EncodedExample> = set.examples.iter().collect();
    let batch = TrainingBatch::new(&model, &items);
    let ml = loss_ml(&model, &batch)?;
    let rl_items: Vec<RlItem<_>> = set
        .examples
        .iter()
        .map(|e| RlItem {
            input: &e.source,
            source: &e.example.source,
            context: &e.example.context,
        })
        .collect();
    let (rl, _) = loss_rl(
        &model,
        &rl_items,
        &StubScorer,
        &mut ChaCha8Rng::seed_from_u64(7),
    )?;
    let (ml_v, rl_v) = (scalar(&ml)?, scalar(&rl)?);

    let at_zero = scalar(&loss_mixed(&ml, &rl, 0.0)?)?;
    let at_one = scalar(&loss_mixed(&ml, &rl, 1.0)?)?;
    ensure!(
        at_zero.to_bits() == ml_v.to_bits(),
        "gamma 0 gives {at_zero}, L_ml is {ml_v}"
    );
    ensure!(
        at_one.to_bits() == rl_v.to_bits(),
        "gamma 1 gives {at_one}, L_rl is {rl_v}"
    );

    let grads_eq = |a: &Tensor, b: &Tensor| -> Result<bool, Box<dyn Error>> {
        let (ga, gb) = (a.backward()?, b.backward()?);
        for (_, var) in model.params().iter() {
            let x = ga
                .get(var.as_tensor())
                .map(|g| g.flatten_all()?.to_vec1::<f64>())
                .transpose()?;
            let y = gb
                .get(var.as_tensor())
                .map(|g| g.flatten_all()?.to_vec1::<f64>())
                .transpose()?;
            let zero =
                |v: &Option<Vec<f64>>| v.as_ref().is_none_or(|v| v.iter().all(|x| *x == 0.0));
            if x != y && !(zero(&x) && zero(&y)) {
                return Ok(false);
            }
        }
        Ok(true)
    };
    ensure!(
        grads_eq(&loss_mixed(&ml, &rl, 0.0)?, &ml)?,
        "gamma 0 gradients differ from L_ml"
    );
    ensure!(
        grads_eq(&loss_mixed(&ml, &rl, 1.0)?, &rl)?,
        "gamma 1 gradients differ from L_rl"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(70);
    for _ in 0..5 {
        let gamma: f64 = rng.random();
        let got = scalar(&loss_mixed(&ml, &rl, gamma)?)?;
        let expected = gamma * rl_v + (1.0 - gamma) * ml_v;
        ensure!(
            close(got, expected, 1e-9),
            "gamma {gamma}: {got} vs {expected}"
        );
    }
    Ok(())
}

// 8 -------------------------------------------------------------------------

/// Two one-token sequences, "dane" (id 0) with probability sigmoid(theta)
/// and "tesla" (id 1) otherwise.
struct Coin {
    theta: Var,
}

const COIN_WORDS: [&str; 2] = ["dane", "tesla"];

impl Coin {
    fn theta(&self) -> f64 {
        self.theta
            .as_tensor()
            .flatten_all()
            .unwrap()
            .to_vec1::<f64>()
            .unwrap()[0]
    }

    fn log_p(&self, id: u32) -> f64 {
        let p0 = 1.0 / (1.0 + (-self.theta()).exp());
        if id == 0 {
            p0.ln()
        } else {
            (1.0 - p0).ln()
        }
    }

    fn generated(id: u32) -> Generated {
        Generated {
            tokens: vec![id],
            text: COIN_WORDS[id as usize].into(),
        }
    }
}

impl Policy for Coin {
    type Input = ();

    fn greedy(&self, _: &()) -> Result<Generated, TrainingError> {
        Ok(Self::generated(if self.theta() >= 0.0 { 0 } else { 1 }))
    }

    fn sample(&self, _: &(), rng: &mut ChaCha8Rng) -> Result<Generated, TrainingError> {
        let p0 = 1.0 / (1.0 + (-self.theta()).exp());
        Ok(Self::generated(if rng.random::<f64>() < p0 {
            0
        } else {
            1
        }))
    }

    fn sequence_log_probs(
        &self,
        _: &[&()],
        sequences: &[Vec<u32>],
    ) -> Result<Tensor, TrainingError> {
        let t = self.theta.as_tensor();
        // log sigmoid(t) and log sigmoid(-t)
        let log_p0 = (t.neg()?.exp()? + 1.0)?.log()?.neg()?;
        let log_p1 = (t.exp()? + 1.0)?.log()?.neg()?;
        let rows: Vec<Tensor> = sequences
            .iter()
            .map(|s| {
                if s[0] == 0 {
                    log_p0.clone()
                } else {
                    log_p1.clone()
                }
            })
            .collect();
        Ok(Tensor::cat(&rows, 0)?)
    }
}

fn reinforce_sign() -> Outcome {
    let source = "tesla lived in graz";
    let context = "dane was killed in an accident";
    let reward = |id: u32| {
        curiosity_reward(
            &format!("who was {}?", COIN_WORDS[id as usize]),
            source,
            context,
            &StubScorer,
        )
    };
    let rewards = [reward(0)?, reward(1)?];
    ensure!(
        rewards[0] > rewards[1],
        "stub rewards {rewards:?} do not separate the two tokens"
    );
    let lr = 0.1;
    for theta in [-1.5, -0.2, 0.0, 0.4, 2.0] {
        for (sampled, greedy) in [(0u32, 1u32), (1, 0)] {
            let coin = Coin {
                theta: Var::new(&[theta], &candle_core::Device::Cpu)?,
            };
            let rollout = Rollout {
                greedy: vec![Coin::generated(greedy)],
                sampled: vec![Coin::generated(sampled)],
                reward_greedy: vec![rewards[greedy as usize]],
                reward_sample: vec![rewards[sampled as usize]],
            };
            let before = coin.log_p(sampled);
            let loss = loss_rl_from_rollout(&coin, &[&()], &rollout)?;
            let grads = loss.backward()?;
            let g = grads
                .get(coin.theta.as_tensor())
                .ok_or("no gradient for theta")?;
            coin.theta.set(&(coin.theta.as_tensor() - (g * lr)?)?)?;
            let after = coin.log_p(sampled);
            let sample_better = rewards[sampled as usize] > rewards[greedy as usize];
            ensure!(
                (after > before) == sample_better && after != before,
                "theta {theta}, sampled {sampled}: log p went {before} -> {after}"
            );
        }
    }
    Ok(())
}

// 9 -------------------------------------------------------------------------

/// Hand-built three-step distribution over EOS (0), a, b, c.
struct Table;

impl Table {
    fn probs(prefix: &[u32]) -> [f64; 4] {
        match prefix {
            [] => [0.01, 0.44, 0.35, 0.2],
            [1] => [0.2, 0.3, 0.3, 0.2],
            [2] => [0.05, 0.05, 0.85, 0.05],
            [3] => [0.9, 0.04, 0.03, 0.03],
            [2, 2] => [0.9, 0.03, 0.04, 0.03],
            _ => [0.4, 0.2, 0.2, 0.2],
        }
    }
}

impl StepDistribution for Table {
    fn step_log_probs(&self, prefix: &[u32]) -> Result<Vec<f64>, ModelError> {
        Ok(Self::probs(prefix).iter().map(|p| p.ln()).collect())
    }

    fn eos(&self) -> u32 {
        0
    }
}

/// Best EOS-terminated sequence of at most `max_len` tokens, by exhaustive
/// enumeration.
fn brute_force(max_len: usize) -> (Vec<u32>, f64) {
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    let mut frontier = vec![(Vec::<u32>::new(), 0.0f64)];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for (prefix, lp) in &frontier {
            for (id, p) in Table::probs(prefix).iter().enumerate() {
                let mut seq = prefix.clone();
                seq.push(id as u32);
                let score = lp + p.ln();
                if id == 0 {
                    if score > best.1 {
                        best = (seq, score);
                    }
                } else {
                    next.push((seq, score));
                }
            }
        }
        frontier = next;
    }
    best
}

fn decoding() -> Outcome {
    let sources = [
        "dane was killed in a horse-riding accident",
        "tesla studied in graz",
        "who was killed in the accident",
        "milutin was a priest in smiljan",
        "the family moved to gospic",
    ];
    let texts = [
        "what was the name of the brother ?",
        "who was killed in the accident ?",
    ];
    for seed in 0..50u64 {
        let model = tiny_model(seed, Precision::F32, &texts)?;
        let source = model.encode_source(sources[seed as usize % sources.len()]);
        let g = model.greedy_decode(&source, 6)?;
        let b = model.beam_search(&source, 1, 6)?;
        ensure!(
            g.token_ids == b.token_ids && g.log_prob.to_bits() == b.log_prob.to_bits(),
            "seed {seed}: greedy {:?} ({}) vs beam-1 {:?} ({})",
            g.token_ids,
            g.log_prob,
            b.token_ids,
            b.log_prob
        );
    }

    let (oracle, oracle_lp) = brute_force(3);
    let b3 = beam(&Table, 3, 3)?;
    ensure!(
        b3.tokens == oracle,
        "beam-3 {:?} vs exhaustive optimum {oracle:?}",
        b3.tokens
    );
    ensure!(
        close(b3.log_prob, oracle_lp, 1e-12),
        "beam-3 log p {} vs {oracle_lp}",
        b3.log_prob
    );
    let g = greedy(&Table, 3)?;
    ensure!(
        g.tokens != oracle,
        "the fixture does not separate greedy from the optimum"
    );
    let b1 = beam(&Table, 1, 3)?;
    ensure!(
        b1 == g,
        "beam-1 {:?} vs greedy {:?} on the table",
        b1.tokens,
        g.tokens
    );
    Ok(())
}

// 10 ------------------------------------------------------------------------

const PEOPLE: [&str; 8] = [
    "tesla", "dane", "milka", "angelina", "marica", "milutin", "duka", "nikola",
];
const PLACES: [&str; 4] = ["graz", "smiljan", "gospic", "vienna"];

fn overfit_corpus() -> Vec<Example> {
    (0..32)
        .map(|i| {
            let person = PEOPLE[i % PEOPLE.len()];
            let place = PLACES[i / PEOPLE.len()];
            Example {
                source: format!("{person} moved to {place} with the family ."),
                context: format!("{place} had a famous school ."),
                target: format!("why did {person} leave {place} ?"),
            }
        })
        .collect()
}

fn small_model(seed: u64, data: &[Example], d_model: usize) -> Result<CopyTransformer, ModelError> {
    let vocab = Vocabulary::build(
        data.iter()
            .flat_map(|e| [e.source.as_str(), e.target.as_str()]),
        1,
        1000,
    );
    let config = ModelConfig {
        num_blocks: 1,
        d_model,
        d_ff: 2 * d_model,
        num_heads: 2,
        vocab_size: vocab.len(),
        max_source_len: 16,
        max_target_len: 10,
        seed,
        precision: Precision::F32,
    };
    CopyTransformer::new(config, vocab)
}

fn train_config(epochs: usize, batch_size: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        batch_size,
        adam: AdamConfig {
            lr,
            ..AdamConfig::default()
        },
        epochs,
        patience: None,
        eval_bleu: false,
        ..TrainConfig::default()
    }
}

fn train_supervised(
    model: &CopyTransformer,
    data: &[Example],
    config: TrainConfig,
) -> Result<Vec<f64>, TrainingError> {
    let set = EncodedSet::new(model, data);
    let empty = EncodedSet::new(model, &[]);
    let mut trainer = Trainer::new(model, config, None)?;
    Ok(trainer
        .train(&set, &empty, &Objective::Supervised)?
        .step_losses)
}

fn overfit_capacity() -> Outcome {
    let data = overfit_corpus();
    let config = train_config(150, 8, 1e-3);
    let run = || -> Result<(Vec<f64>, f64), Box<dyn Error>> {
        let model = small_model(10, &data, 64)?;
        let losses = train_supervised(&model, &data, config.clone())?;
        let bleu = greedy_bleu(&model, &EncodedSet::new(&model, &data), 4)?
            .ok_or("no BLEU on a non-empty set")?;
        Ok((losses, bleu))
    };
    let (losses, bleu) = run()?;
    ensure!(
        bleu >= 0.9,
        "training-set greedy BLEU-4 {bleu:.4} after {} epochs",
        config.epochs
    );
    let (again, bleu_again) = run()?;
    ensure!(
        losses.len() == again.len()
            && losses
                .iter()
                .zip(&again)
                .all(|(a, b)| a.to_bits() == b.to_bits()),
        "repeat run produced different step losses"
    );
    ensure!(
        bleu.to_bits() == bleu_again.to_bits(),
        "repeat run BLEU {bleu_again} vs {bleu}"
    );
    eprintln!(
        "  overfit: BLEU-4 {bleu:.4}, final step loss {:.4}",
        losses.last().unwrap_or(&f64::NAN)
    );
    Ok(())
}

// 11 ------------------------------------------------------------------------

const GENERIC: &str = "are there any other facts ?";
const GENERIC_PREFIX: &str = "are there any other facts";
const TOPICS: [&str; 7] = [
    "school", "river", "church", "priest", "farm", "horse", "war",
];

/// Every source carries the generic question on 3 of its 10 targets; the
/// other 7 ask about one of seven topics, none recoverable from the source.
fn divergence_corpus() -> Vec<Example> {
    let sources = [
        "tesla moved to graz in 1875 .",
        "dane was killed in an accident .",
        "milutin was a priest in smiljan .",
        "the family moved to gospic .",
        "nikola attended school in karlovac .",
    ];
    (0..50)
        .map(|i| {
            let (s, j) = (i % sources.len(), i / sources.len());
            let target = if j < 3 {
                GENERIC.to_string()
            } else {
                format!("what about the {} ?", TOPICS[j - 3])
            };
            Example {
                source: sources[s].into(),
                context: "the paragraph mentions a school , a river and a church .".into(),
                target,
            }
        })
        .collect()
}

fn beam_divergence() -> Outcome {
    let data = divergence_corpus();
    let shared = data
        .iter()
        .filter(|e| e.target.starts_with(GENERIC_PREFIX))
        .count();
    ensure!(
        shared * 10 == data.len() * 3,
        "{shared} of {} targets share the prefix",
        data.len()
    );
    let model = small_model(11, &data, 32)?;
    train_supervised(&model, &data, train_config(60, 10, 3e-3))?;
    let inputs: Vec<BeamInput> = data
        .iter()
        .step_by(10)
        .enumerate()
        .map(|(i, e)| BeamInput {
            id: i.to_string(),
            source: e.source.clone(),
            context: e.context.clone(),
            reference: e.target.clone(),
        })
        .collect();
    let report = beam_divergence_report(
        &model,
        &inputs,
        &[1, 5],
        &StubScorer,
        &EvalConfig::default(),
    )?;
    let rates = report.prefix_rates(GENERIC_PREFIX)?;
    let rate = |k: usize| {
        rates
            .iter()
            .find(|(kk, _)| *kk == k)
            .map(|(_, r)| *r)
            .unwrap_or(f64::NAN)
    };
    let (r1, r5) = (rate(1), rate(5));
    let references: Vec<&str> = data.iter().map(|e| e.target.as_str()).collect();
    let reference_rate = prefix_rate(&references, GENERIC_PREFIX)?;
    eprintln!("  prefix rate: references {reference_rate:.2}, beam 1 {r1:.2}, beam 5 {r5:.2}");
    ensure!(
        r5 > r1,
        "prefix rate at beam 5 ({r5}) is not above beam 1 ({r1})"
    );
    Ok(())
}

// 12 ------------------------------------------------------------------------

/// 1-based ranks with ties sharing the mean of their positions, computed by
/// counting rather than sorting.
fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn spearman_oracle() -> Outcome {
    let (rho, _) = spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0])?;
    ensure!(close(rho, -0.5, 1e-12), "worked example gives {rho}");
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut compared = 0;
    for _ in 0..100 {
        let n = rng.random_range(3..=30);
        // small integer range forces ties
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        let y: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..8) as f64 * 0.5)
            .collect();
        let (rx, ry) = (oracle_ranks(&x), oracle_ranks(&y));
        let constant = |r: &[f64]| r.iter().all(|v| *v == r[0]);
        if constant(&rx) || constant(&ry) {
            ensure!(spearman(&x, &y).is_err(), "constant input accepted");
            continue;
        }
        let expected = pearson(&rx, &ry);
        let (rho, p) = spearman(&x, &y)?;
        ensure!(
            close(rho, expected, 1e-9),
            "n = {n}: rho {rho} vs oracle {expected}"
        );
        ensure!((0.0..=1.0).contains(&p), "p-value {p} outside [0, 1]");
        compared += 1;
    }
    ensure!(compared >= 90, "only {compared} vectors were compared");
    Ok(())
}

// 13 ------------------------------------------------------------------------

fn stub_probe_lines() -> Vec<String> {
    stub_cases(13, 50)
        .iter()
        .map(|(q, c, _)| match StubScorer.score(q, c) {
            Ok(s) => format!(
                "probe {:016x} {:?} {:?}",
                s.probability.to_bits(),
                s.answer_text,
                s.answer_span
            ),
            Err(e) => format!("probe error {e}"),
        })
        .collect()
}

fn stub_scorer() -> Outcome {
    let exe = std::env::current_exe()?;
    let expected = stub_probe_lines();
    for run in 0..2 {
        let out = Command::new(&exe).env(CHILD_ENV, "1").output()?;
        ensure!(
            out.status.success(),
            "probe process {run} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let lines: Vec<String> = String::from_utf8(out.stdout)?
            .lines()
            .filter(|l| l.starts_with("probe "))
            .map(str::to_string)
            .collect();
        ensure!(
            lines == expected,
            "probe process {run} disagrees with this process"
        );
    }

    for (q, c, extra) in stub_cases(130, 500) {
        let base = StubScorer.score(&q, &c)?.probability;
        let extended = StubScorer.score(&q, &format!("{c} {extra}"))?.probability;
        ensure!(
            extended >= base,
            "{q:?}: extending the context lowered {base} to {extended}"
        );
    }

    let server = serve_stub("127.0.0.1:0".parse()?, None)?;
    let remote = RemoteScorer::new(RemoteConfig {
        endpoint: server.url(),
        batch_size: 7,
        ..RemoteConfig::default()
    })?;
    let cases: Vec<(String, String)> = stub_cases(131, 40)
        .into_iter()
        .filter(|(_, c, _)| !c.is_empty())
        .map(|(q, c, _)| (q, c))
        .collect();
    let batch = remote.score_batch(&cases)?;
    ensure!(
        batch.len() == cases.len(),
        "{} batch answers for {} items",
        batch.len(),
        cases.len()
    );
    for ((q, c), batched) in cases.iter().zip(batch) {
        let local = StubScorer.score(q, c)?;
        let single = remote.score(q, c)?;
        let batched = batched?;
        ensure!(
            single == local,
            "/score differs for {q:?}: {single:?} vs {local:?}"
        );
        ensure!(
            batched == local,
            "/score_batch differs for {q:?}: {batched:?} vs {local:?}"
        );
    }
    Ok(())
}
