mod common;

use clinlm_core::model::{
    causal_lm_loss, generate, logits, mlm_loss, sequence_logprob, AttentionMode, MlmBatch, ModelConfig, TransformerLm,
};
use clinlm_core::rng::seeded;
use clinlm_core::tensor::Reduction;
use clinlm_core::Error;
use common::{nll, tiny};
use proptest::prelude::*;
use rand::Rng;

fn trained_like(vocab: usize, seed: u64) -> TransformerLm<f64> {
    let mut rng = seeded(seed);
    let mut m = TransformerLm::init(tiny(vocab), &mut rng).unwrap();
    m.randomize_head(1.0, &mut rng);
    m
}

fn row(l: &clinlm_core::tensor::Tensor<f64>, r: usize) -> Vec<f64> {
    let v = l.shape()[1];
    l.data()[r * v..(r + 1) * v].to_vec()
}

#[test]
fn logits_have_one_row_per_token() {
    let m = trained_like(12, 1);
    for n in 1..=8 {
        let ids: Vec<u32> = (0..n).map(|i| (i % 12) as u32).collect();
        let l = logits(&m, &ids, AttentionMode::Causal).unwrap();
        assert_eq!(l.shape(), &[n, 12]);
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let m = trained_like(12, 1);
    assert!(matches!(logits(&m, &[12], AttentionMode::Causal), Err(Error::TokenOutOfRange { .. })));
    assert!(matches!(logits(&m, &[1; 9], AttentionMode::Causal), Err(Error::SequenceTooLong { .. })));
    assert!(matches!(causal_lm_loss(&m, &[1]), Err(Error::SequenceTooShort { .. })));
    assert!(MlmBatch::new(vec![1, 2], vec![1, 2], vec![false, false]).is_err());
}

#[test]
fn logits_are_bit_identical_across_runs() {
    let a = trained_like(12, 7);
    let b = trained_like(12, 7);
    let ids = [1, 4, 9, 2];
    assert_eq!(logits(&a, &ids, AttentionMode::Causal).unwrap(), logits(&b, &ids, AttentionMode::Causal).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prefix_logits_ignore_suffix_edits(seed in 0u64..1000, n in 2usize..=8, j in 0usize..8, tok in 0u32..12) {
        let j = j % n;
        let m = trained_like(12, seed % 5);
        let mut rng = seeded(seed);
        let ids: Vec<u32> = (0..n).map(|_| rng.gen_range(0..12)).collect();
        let mut edited = ids.clone();
        edited[j] = tok;
        let a = logits(&m, &ids, AttentionMode::Causal).unwrap();
        let b = logits(&m, &edited, AttentionMode::Causal).unwrap();
        for r in 0..j {
            prop_assert_eq!(row(&a, r), row(&b, r));
        }
    }
}

#[test]
fn bidirectional_mode_sees_the_future() {
    let m = trained_like(12, 3);
    let a = logits(&m, &[1, 2, 3], AttentionMode::Bidirectional).unwrap();
    let b = logits(&m, &[1, 2, 4], AttentionMode::Bidirectional).unwrap();
    assert_ne!(row(&a, 0), row(&b, 0));
}

#[test]
fn uniform_model_gives_ln_v() {
    for v in [4usize, 16, 256] {
        let cfg = ModelConfig { vocab_size: v, ..tiny(v) };
        let m = TransformerLm::<f64>::init(cfg, &mut seeded(v as u64)).unwrap();
        let ids: Vec<u32> = (0..6).map(|i| (i * 3 % v) as u32).collect();
        let batch = MlmBatch::corrupt(&ids, 0.5, &mut seeded(1)).unwrap();
        let mean = mlm_loss(&m, &batch, Reduction::Mean).unwrap();
        assert!((mean - (v as f64).ln()).abs() < 1e-6);
        let k = batch.mask_set.iter().filter(|&&b| b).count() as f64;
        let sum = mlm_loss(&m, &batch, Reduction::Sum).unwrap();
        assert!((sum - k * (v as f64).ln()).abs() < 1e-6);
        assert!((causal_lm_loss(&m, &ids).unwrap() - (v as f64).ln()).abs() < 1e-6);
        let lp = sequence_logprob(&m, &ids[..2], &ids[2..]).unwrap();
        assert!((lp + 4.0 * (v as f64).ln()).abs() < 1e-6);
    }
}

#[test]
fn mlm_loss_matches_per_position_oracle() {
    let m = trained_like(12, 4);
    let batch =
        MlmBatch::new(vec![1, 3, 5, 3, 7], vec![1, 9, 5, 11, 7], vec![false, true, false, true, false]).unwrap();
    let l = logits(&m, &batch.input_ids, AttentionMode::Bidirectional).unwrap();
    let oracle = nll(&row(&l, 1), 9) + nll(&row(&l, 3), 11);
    let sum = mlm_loss(&m, &batch, Reduction::Sum).unwrap();
    assert!((sum - oracle).abs() < 1e-9);
    assert!((mlm_loss(&m, &batch, Reduction::Mean).unwrap() - oracle / 2.0).abs() < 1e-9);

    // Changing a target outside the mask changes nothing.
    let mut other = batch.clone();
    other.target_ids[0] = 4;
    assert_eq!(mlm_loss(&m, &other, Reduction::Sum).unwrap(), sum);
}

#[test]
fn one_masked_position_matches_hand_computation() {
    let m = trained_like(12, 8);
    let batch = MlmBatch::new(vec![2, 3, 6], vec![2, 10, 6], vec![false, true, false]).unwrap();
    let l = logits(&m, &batch.input_ids, AttentionMode::Bidirectional).unwrap();
    assert!((mlm_loss(&m, &batch, Reduction::Sum).unwrap() - nll(&row(&l, 1), 10)).abs() < 1e-9);
}

#[test]
fn causal_loss_matches_shifted_oracle() {
    let m = trained_like(12, 5);
    let ids = [1u32, 6, 6, 2, 11, 0, 3];
    let l = logits(&m, &ids, AttentionMode::Causal).unwrap();
    let oracle: f64 = (0..ids.len() - 1).map(|i| nll(&row(&l, i), ids[i + 1] as usize)).sum::<f64>() / 6.0;
    assert!((causal_lm_loss(&m, &ids).unwrap() - oracle).abs() < 1e-9);
}

#[test]
fn sequence_logprob_matches_oracle_and_chains() {
    let m = trained_like(12, 6);
    let (p, r1, r2) = ([1u32, 4], [7u32, 8], [9u32, 2, 3]);
    let full: Vec<u32> = p.iter().chain(&r1).chain(&r2).copied().collect();
    let l = logits(&m, &full, AttentionMode::Causal).unwrap();
    let oracle: f64 = (1..full.len() - 1).map(|i| -nll(&row(&l, i), full[i + 1] as usize)).sum();
    let r: Vec<u32> = r1.iter().chain(&r2).copied().collect();
    let whole = sequence_logprob(&m, &p, &r).unwrap();
    assert!((whole - oracle).abs() < 1e-9);
    let p2: Vec<u32> = p.iter().chain(&r1).copied().collect();
    let split = sequence_logprob(&m, &p, &r1).unwrap() + sequence_logprob(&m, &p2, &r2).unwrap();
    assert!((whole - split).abs() < 1e-6);
}

#[test]
fn greedy_generation() {
    let m = trained_like(12, 9);
    assert_eq!(generate(&m, &[1, 5], 0).unwrap(), vec![1, 5]);
    let a = generate(&m, &[1, 5], 12).unwrap();
    assert_eq!(a, generate(&m, &[1, 5], 12).unwrap());
    assert!(a.len() <= 14);
    assert!(generate(&m, &[], 3).is_err());
}

#[test]
fn checkpoint_reload_reproduces_logits_bit_exactly() {
    let m = trained_like(12, 10).cast::<f32>();
    let bytes = m.to_checkpoint(Some("abc"));
    let (back, fp) = TransformerLm::<f32>::from_checkpoint(&bytes).unwrap();
    assert_eq!(fp.as_deref(), Some("abc"));
    let ids = [1, 2, 3, 4];
    assert_eq!(logits(&m, &ids, AttentionMode::Causal).unwrap(), logits(&back, &ids, AttentionMode::Causal).unwrap());
}
