use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::predictor::{ModelConfig, Variant};

#[test]
fn entropy_profiles() {
    assert!(local_entropy_profile(&corpus::zeros(4096), 512).iter().all(|&h| h == 0.0));
    let rnd = corpus::random(1 << 20, 1);
    for h in local_entropy_profile(&rnd, 1 << 16) {
        assert!((h - 8.0).abs() < 0.1, "{h}");
    }
    let mut mixed = corpus::english_like(1 << 16, 2);
    mixed.extend(corpus::random(1 << 16, 3));
    let prof = local_entropy_profile(&mixed, 4096);
    let (text, noise) = prof.split_at(prof.len() / 2);
    assert!(text.iter().all(|&h| h < 5.0) && noise.iter().all(|&h| h > 7.9));
    assert_eq!(local_entropy_profile(b"abcd", 1024), vec![2.0]);
    assert!(local_entropy_profile(&[], 16).is_empty());
}

#[test]
fn mutual_information_closed_forms() {
    let period2: Vec<u8> = (0..100_000).map(|i| if i % 2 == 0 { b'x' } else { b'y' }).collect();
    let h = order0_entropy(&period2);
    assert!((mutual_information(&period2, 2) - h).abs() < 1e-12);
    assert!((mutual_information(&period2, 1) - h).abs() < 1e-8);

    let rnd = corpus::random(200_000, 4);
    for p in mutual_information_decay(&rnd, 8, 0) {
        // The plug-in bias for 256x256 cells is about 65025 / (2 n ln 2).
        let bias = 65025.0 / (2.0 * 200_000.0 * std::f64::consts::LN_2);
        assert!(p.raw < 1.5 * bias && p.corrected < 0.05, "{p:?}");
    }
}

#[test]
fn markov_chain_mutual_information_matches_analytic() {
    // Two-state chain over bytes 'a' and 'b'.
    let trans = [[0.9, 0.1], [0.3, 0.7]];
    let pi = [0.75, 0.25];
    let h = |p: &[f64]| -> f64 { p.iter().filter(|&&q| q > 0.0).map(|&q| -q * q.log2()).sum() };
    let analytic = h(&pi) - (pi[0] * h(&trans[0]) + pi[1] * h(&trans[1]));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows = [WeightedIndex::new(trans[0]).unwrap(), WeightedIndex::new(trans[1]).unwrap()];
    let mut state = 0;
    let data: Vec<u8> = (0..400_000)
        .map(|_| {
            state = rows[state].sample(&mut rng);
            b'a' + state as u8
        })
        .collect();
    let est = mutual_information(&data, 1);
    assert!((est - analytic).abs() < 0.005, "{est} vs {analytic}");
}

#[test]
fn english_like_text_has_a_decaying_tail() {
    let text = corpus::english_like(300_000, 6);
    let mi = mutual_information_decay(&text, 64, 1);
    assert!(mi[0].corrected > mi[15].corrected);
    assert!(mi[15].corrected > 0.0 && mi[63].corrected > 0.0);
    let h0 = order0_entropy(&text);
    assert!((3.5..5.0).contains(&h0), "{h0}");
}

#[test]
fn similarity_matrix_shape() {
    let same: Vec<u8> = b"abcdefgh".repeat(64);
    let m = self_similarity_matrix(&same, 64);
    assert_eq!(m.len(), 8);
    assert!(m.iter().flatten().all(|&v| (v - 1.0).abs() < 1e-12));

    let mut data = corpus::english_like(1 << 17, 7);
    data.extend(corpus::random(1 << 17, 8));
    let m = self_similarity_matrix(&data, 1 << 14);
    for i in 0..16 {
        assert_eq!(m[i][i], 1.0);
        for j in 0..16 {
            assert_eq!(m[i][j], m[j][i]);
            let same_half = (i < 8) == (j < 8);
            if same_half {
                assert!(m[i][j] > 0.8, "{i},{j} {}", m[i][j]);
            } else {
                assert!(m[i][j] < 0.5, "{i},{j} {}", m[i][j]);
            }
        }
    }
}

#[test]
fn generators_are_seeded() {
    assert_eq!(corpus::english_like(5000, 1), corpus::english_like(5000, 1));
    assert_ne!(corpus::english_like(5000, 1), corpus::english_like(5000, 2));
    assert_eq!(corpus::mixed(1001, 3).len(), 1001);
    assert!(corpus::dna(1000, 4).iter().all(|b| b"ACGT".contains(b)));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = rng.gen_range(1..100);
    assert_eq!(corpus::random(n, 9).len(), n);
}

fn small() -> ModelConfig {
    ModelConfig {
        batch: 8,
        workers: 1,
        ..ModelConfig::tiny()
    }
}

#[test]
fn single_value_sweep_is_one_row() {
    let spec = SweepSpec {
        param: SweepParam::Workers,
        values: vec![2],
        base: small(),
        variant: Variant::Full,
        pipeline: true,
        repetitions: 1,
        omega: 0.5,
    };
    let rows = run_sweep(&spec, &corpus::english_like(4000, 1));
    assert_eq!(rows.len(), 1);
    assert!(rows[0].error.is_none() && rows[0].cr > 1.0);
    assert_eq!(rows[0].score, None);
    assert!(render_table(&rows).lines().count() == 2);
}

#[test]
fn sweep_records_failures_and_scores_the_rest() {
    let spec = SweepSpec {
        param: SweepParam::CacheDim,
        values: vec![16, 30, 32],
        base: small(),
        variant: Variant::Full,
        pipeline: false,
        repetitions: 1,
        omega: 0.5,
    };
    let rows = run_sweep(&spec, &corpus::english_like(3000, 2));
    assert!(rows[1].error.is_some());
    let scores: Vec<f64> = [&rows[0], &rows[2]].iter().map(|r| r.score.unwrap()).collect();
    assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
}

#[test]
fn ablation_reports_a_trajectory() {
    let data = corpus::english_like(8 * 400, 3);
    let r = ablation_harness(Variant::Dmd, &data, &small(), 50).unwrap();
    assert_eq!(r.nll_windows.len(), (400 - 4usize).div_ceil(50));
    assert!(r.final_quarter_nll < r.nll_windows[0]);
    assert!((r.bits_per_byte * r.cr - 8.0).abs() < 1e-9);
}

#[test]
fn metrics_lines_are_json() {
    let rec = MetricsRecord {
        step: 3,
        phase: "compress",
        loss_nats: 2.0,
        bits_per_byte: 2.0 / std::f64::consts::LN_2,
        elapsed_s: 0.5,
        alpha_mean: Some(0.5),
        alpha_min: None,
        alpha_max: None,
    };
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &[rec.clone(), rec]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 2);
    let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(v["step"], 3);
    assert_eq!(v["phase"], "compress");
    assert!(v.get("alpha_min").is_none());
}
