use super::decode::StepDistribution;
use super::vocab::{BOS, EOS, PAD};
use super::*;

fn vocab() -> Vocabulary {
    let text = "what was the name of the brother ? who was killed in the accident ?";
    Vocabulary::build([text, text], 2, 100)
}

fn tiny(seed: u64) -> CopyTransformer {
    let v = vocab();
    let config = ModelConfig {
        num_blocks: 1,
        d_model: 8,
        d_ff: 16,
        num_heads: 2,
        vocab_size: v.len(),
        max_source_len: 16,
        max_target_len: 8,
        seed,
        precision: Precision::F64,
    };
    CopyTransformer::new(config, v).unwrap()
}

const SOURCE: &str = "Dane was killed in a horse-riding accident";

#[test]
fn distributions_are_normalized() {
    for seed in 0..4 {
        let m = tiny(seed);
        let src = m.encode_source(SOURCE);
        let prefix = [m.vocab().id("what").unwrap(), m.vocab().len() as u32];
        for row in m.distributions(&src, &prefix).unwrap() {
            assert_eq!(row.len(), src.ext_size(m.vocab().len()));
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(row[PAD as usize] < 1e-20 && row[BOS as usize] < 1e-20);
        }
    }
}

#[test]
fn gate_degeneracies() {
    let mut m = tiny(1);
    let src = m.encode_source(SOURCE);
    let v = m.vocab().len();
    m.set_gate_override(Some(1.0)).unwrap();
    for row in m.distributions(&src, &[]).unwrap() {
        assert!(row[v..].iter().all(|&p| p < 1e-20));
    }
    m.set_gate_override(Some(0.0)).unwrap();
    let support: std::collections::BTreeSet<u32> = src.ext_ids.iter().copied().collect();
    for row in m.distributions(&src, &[]).unwrap() {
        for (id, p) in row.iter().enumerate() {
            if !support.contains(&(id as u32)) {
                assert!(*p < 1e-20, "mass {p} on non-source id {id}");
            }
        }
    }
    // an OOV source token is generatable through the copy path
    let g = m.greedy_decode(&src, 1).unwrap();
    assert!(support.contains(&g.token_ids[0]));
    assert!(src.tokens.contains(&g.text));
    assert!(m.set_gate_override(Some(1.5)).is_err());
}

#[test]
fn copy_reaches_out_of_vocabulary_tokens() {
    let mut m = tiny(2);
    m.set_gate_override(Some(0.0)).unwrap();
    let src = m.encode_source("dane dane dane");
    let g = m.greedy_decode(&src, 1).unwrap();
    assert_eq!(g.token_ids, vec![m.vocab().len() as u32]);
    assert_eq!(g.text, "dane");
}

#[test]
fn greedy_is_deterministic_and_bounded() {
    let a = tiny(3);
    let b = tiny(3);
    let src = a.encode_source(SOURCE);
    let ga = a.greedy_decode(&src, 8).unwrap();
    assert_eq!(ga, b.greedy_decode(&src, 8).unwrap());
    assert!(ga.token_ids.len() <= 8);
    assert!(!ga.token_ids.contains(&PAD));
    if let Some(pos) = ga.token_ids.iter().position(|&t| t == EOS) {
        assert_eq!(pos, ga.token_ids.len() - 1);
    }
    assert_eq!(a.greedy_decode(&src, 1).unwrap().token_ids.len(), 1);
    assert!(ga.log_prob <= 0.0);
}

#[test]
fn beam_of_one_is_greedy_and_scores_are_consistent() {
    for seed in 0..5 {
        let m = tiny(seed);
        let src = m.encode_source(SOURCE);
        let g = m.greedy_decode(&src, 6).unwrap();
        let b = m.beam_search(&src, 1, 6).unwrap();
        assert_eq!(g.token_ids, b.token_ids);
        assert_eq!(g.log_prob, b.log_prob);
        let b3 = m.beam_search(&src, 3, 6).unwrap();
        let rows = m
            .distributions(&src, &b3.token_ids[..b3.token_ids.len() - 1])
            .unwrap();
        let recomputed: f64 = b3
            .token_ids
            .iter()
            .zip(&rows)
            .map(|(&t, row)| row[t as usize].ln())
            .sum();
        assert!((recomputed - b3.log_prob).abs() < 1e-9);
        assert!(b3.log_prob >= g.log_prob - 1e-12 || b3.token_ids.last() == Some(&EOS));
    }
    assert!(matches!(
        tiny(0).beam_search(&tiny(0).encode_source(SOURCE), 0, 4),
        Err(ModelError::InvalidBeam)
    ));
}

#[test]
fn sampling_is_seeded() {
    let m = tiny(4);
    let src = m.encode_source(SOURCE);
    let a = m.sample_sequence(&src, 8, 11).unwrap();
    assert_eq!(a, m.sample_sequence(&src, 8, 11).unwrap());
    let bound = m.bind(&src).unwrap();
    let mut lp = 0.0;
    for i in 0..a.token_ids.len() {
        lp += bound.step_log_probs(&a.token_ids[..i]).unwrap()[a.token_ids[i] as usize];
    }
    assert!((lp - a.log_prob).abs() < 1e-9);
}

#[test]
fn invalid_inputs_are_rejected() {
    let m = tiny(0);
    let mut src = m.encode_source(SOURCE);
    assert!(m.distributions(&src, &[999]).is_err());
    src.ids[0] = 999;
    assert!(m.greedy_decode(&src, 3).is_err());
    let empty = m.encode_source("");
    assert!(m.greedy_decode(&empty, 3).is_err());
    let ok = m.encode_source(SOURCE);
    assert!(m.log_probs(&[&ok], &[vec![BOS; 9]]).is_err());
    assert!(m.log_probs(&[&ok], &[vec![]]).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let m = tiny(5);
    let dir = tempfile::tempdir().unwrap();
    let state = serde_json::json!({"step": 3});
    save_checkpoint(dir.path(), &m, &state, None).unwrap();
    let loaded = load_checkpoint(dir.path()).unwrap();
    assert_eq!(loaded.state, state);
    assert!(loaded.optimizer.is_none());
    let src = m.encode_source(SOURCE);
    assert_eq!(
        m.distributions(&src, &[]).unwrap(),
        loaded.model.distributions(&src, &[]).unwrap()
    );
    assert_eq!(loaded.model.vocab(), m.vocab());
    std::fs::write(
        dir.path().join("checkpoint.json"),
        r#"{"format":"other/9"}"#,
    )
    .unwrap();
    assert!(load_checkpoint(dir.path()).is_err());
}
