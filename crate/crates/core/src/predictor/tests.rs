use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nncore::{Tensor, LAYER_NORM_EPS};

fn small() -> ModelConfig {
    ModelConfig {
        time_steps: 4,
        embed_dim: 8,
        cache_dim: 32,
        hgr_dim: 8,
        fnr_dim: 32,
        batch: 3,
        workers: 1,
        ..Default::default()
    }
}

fn defaults_with_batch(batch: usize) -> ModelConfig {
    ModelConfig {
        batch,
        workers: 1,
        ..Default::default()
    }
}

fn random_ctx(cfg: &ModelConfig, seed: u64) -> ContextWindow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.batch * cfg.time_steps;
    ContextWindow::from_symbols(cfg.batch, cfg.time_steps, (0..n).map(|_| rng.gen()).collect()).unwrap()
}


#[test]
fn input_shape_and_lookup_determinism() {
    let cfg = defaults_with_batch(2);
    let mut m = Model::<f32>::new(&cfg, Variant::Full).unwrap();
    let pass = m.predict(&ContextWindow::new(2, 16)).unwrap();
    let x = pass.stage(Stage::Input).unwrap();
    assert_eq!(x.shape(), &[2, 1, 512]);
    assert_eq!(x.row(0), x.row(1));
    assert_eq!(pass.stage(Stage::Local).unwrap().shape(), &[2, 1, 512]);
    assert_eq!(pass.stage(Stage::Expand).unwrap().shape(), &[2, 1, 8192]);
}

#[test]
fn embedding_row_change_is_local_to_its_symbol() {
    let cfg = small();
    let ctx = ContextWindow::from_symbols(3, 4, vec![7, 1, 7, 2, 3, 3, 3, 3, 0, 7, 9, 9]).unwrap();
    let mut a = Model::<f64>::new(&cfg, Variant::Full).unwrap();
    let mut b = a.clone();
    for v in &mut b.weight_mut(Weight::Embedding).data_mut()[7 * 8..8 * 8] {
        *v += 0.3;
    }
    let ea = a.predict(&ctx).unwrap().stage(Stage::Embedding).unwrap().clone();
    let eb = b.predict(&ctx).unwrap().stage(Stage::Embedding).unwrap().clone();
    for (p, &s) in ctx.symbols().iter().enumerate() {
        assert_eq!(ea.row(p) != eb.row(p), s == 7, "position {p}");
    }
}

#[test]
fn zero_gate_appends_zero_block_and_identity_global() {
    let cfg = small();
    let mut m = Model::<f64>::new(&cfg, Variant::Full).unwrap();
    m.weight_mut(Weight::GlobalGate).data_mut().fill(0.0);
    m.weight_mut(Weight::CacheProjection).data_mut().fill(0.0);
    let pass = m.predict(&random_ctx(&cfg, 1)).unwrap();
    assert!(m.cache().data().iter().all(|&v| v == 0.0));
    assert_eq!(pass.stage(Stage::Global).unwrap(), pass.stage(Stage::Input).unwrap());
}

#[test]
fn rolling_cache_matches_shift_register() {
    // Defaults: 4096 / 32 = 128 slots.
    let cfg = defaults_with_batch(1);
    let slots = cfg.cache_dim / cfg.embed_dim;
    let mut m = Model::<f32>::new(&cfg, Variant::MlpOnly).unwrap();
    let mut ctx = ContextWindow::new(1, cfg.time_steps);
    let mut register: Vec<Vec<f32>> = vec![vec![0.0; cfg.embed_dim]; slots];
    let mut first = None;
    for step in 0..slots + 3 {
        let pass = m.predict(&ctx).unwrap();
        let feat = pass.stage(Stage::CacheFeature).unwrap().data().to_vec();
        if step == 0 {
            first = Some(feat.clone());
        }
        register.remove(0);
        register.push(feat);
        assert_eq!(m.cache().data(), register.concat().as_slice(), "step {step}");
        ctx.shift_in(&[(step * 37 % 251) as u8]);
    }
    let first = first.unwrap();
    assert!(first.iter().any(|&v| v != 0.0));
    assert!(!m.cache().data().chunks(cfg.embed_dim).any(|c| c == first.as_slice()));
}

#[test]
fn local_stream_zero_kernel_and_receptive_field() {
    let cfg = small();
    let mut m = Model::<f64>::new(&cfg, Variant::Full).unwrap();
    let ctx = random_ctx(&cfg, 2);
    let base = m.clone().predict(&ctx).unwrap().stage(Stage::Local).unwrap().clone();

    let mut moved = ctx.clone();
    let mut row = moved.row(1).to_vec();
    row[3] = row[3].wrapping_add(1);
    moved.set_row(1, &row);
    let after = m.clone().predict(&moved).unwrap().stage(Stage::Local).unwrap().clone();
    let d = cfg.embed_dim;
    let reach = cfg.conv_kernel / 2;
    for s in 0..3 {
        for (i, (a, b)) in base.row(s).iter().zip(after.row(s)).enumerate() {
            let pos = i / d;
            let inside = s == 1 && pos + reach >= 3;
            if !inside {
                assert_eq!(a, b, "stream {s} index {i}");
            }
        }
    }
    assert_ne!(base.row(1)[3 * d..], after.row(1)[3 * d..]);

    m.weight_mut(Weight::ConvKernel).data_mut().fill(0.0);
    let pass = m.predict(&ctx).unwrap();
    assert!(pass.stage(Stage::Local).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn zero_router_weights_average_the_streams() {
    let cfg = small();
    let mut m = Model::<f64>::new(&cfg, Variant::Full).unwrap();
    m.weight_mut(Weight::Router).data_mut().fill(0.0);
    let pass = m.predict(&random_ctx(&cfg, 3)).unwrap();
    assert!(pass.stage(Stage::Router).unwrap().data().iter().all(|&a| a == 0.5));
    let (hg, hl, mix) = (
        pass.stage(Stage::Global).unwrap(),
        pass.stage(Stage::Local).unwrap(),
        pass.stage(Stage::Mix).unwrap(),
    );
    for i in 0..mix.len() {
        let mean = 0.5 * (hg.data()[i] + hl.data()[i]);
        assert!((mix.data()[i] - mean).abs() < 1e-12);
    }
}

#[test]
fn equal_streams_pass_through_router_unchanged() {
    let cfg = small();
    let mut m = Model::<f64>::new(&cfg, Variant::Full).unwrap();
    m.weight_mut(Weight::CacheProjection).data_mut().fill(0.0);
    m.weight_mut(Weight::LambdaM).data_mut()[0] = 0.0;
    m.weight_mut(Weight::ConvKernel).data_mut().fill(0.0);
    let pass = m.predict(&random_ctx(&cfg, 4)).unwrap();
    let mix = pass.stage(Stage::Mix).unwrap();
    assert_eq!(mix, pass.stage(Stage::Global).unwrap());
    assert_eq!(mix, pass.stage(Stage::Local).unwrap());
}

#[test]
fn coarse_refiner_with_identity_projections() {
    let cfg = ModelConfig { hgr_dim: 32, ..small() };
    let mut m = Model::<f64>::new(&cfg, Variant::Full).unwrap();
    let eye = Tensor::<f64>::eye(32);
    m.weight_mut(Weight::Down).data_mut().copy_from_slice(eye.data());
    m.weight_mut(Weight::Up).data_mut().copy_from_slice(eye.data());
    m.weight_mut(Weight::SelfGate).data_mut().fill(0.0);
    let pass = m.predict(&random_ctx(&cfg, 5)).unwrap();
    let mix = pass.stage(Stage::Mix).unwrap();
    let coarse = pass.stage(Stage::Coarse).unwrap();
    for r in 0..mix.rows() {
        let row = mix.row(r);
        let mean = row.iter().sum::<f64>() / 32.0;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 32.0;
        for (j, &h) in row.iter().enumerate() {
            let normed = (h - mean) / (var + LAYER_NORM_EPS).sqrt();
            let want = 0.5 * normed + h;
            assert!((coarse.row(r)[j] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn persistent_memory_slices_are_isolated() {
    let cfg = small();
    let ctx = random_ctx(&cfg, 6);
    let m = Model::<f64>::new(&cfg, Variant::Full).unwrap();
    let base = m.clone().predict(&ctx).unwrap().stage(Stage::Coarse).unwrap().clone();
    let mut m2 = m.clone();
    let dr = cfg.hgr_dim;
    for v in &mut m2.weight_mut(Weight::PersistentMemory).data_mut()[dr * dr..2 * dr * dr] {
        *v += 0.1;
    }
    let after = m2.predict(&ctx).unwrap().stage(Stage::Coarse).unwrap().clone();
    for s in 0..3 {
        assert_eq!(base.row(s) == after.row(s), s != 1);
    }
}

/// Rank by Gaussian elimination with partial pivoting.
fn numerical_rank(mut rows: Vec<Vec<f64>>, tol: f64) -> usize {
    let cols = rows[0].len();
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..rows.len()).max_by(|&a, &b| rows[a][c].abs().total_cmp(&rows[b][c].abs())) else {
            break;
        };
        if rows[p][c].abs() < tol {
            continue;
        }
        rows.swap(rank, p);
        for r in 0..rows.len() {
            if r != rank {
                let f = rows[r][c] / rows[rank][c];
                for k in c..cols {
                    rows[r][k] -= f * rows[rank][k];
                }
            }
        }
        rank += 1;
    }
    rank
}

#[test]
fn adapted_features_live_in_reduced_subspace() {
    let cfg = ModelConfig {
        batch: 40,
        hgr_dim: 5,
        ..small()
    };
    let mut m = Model::<f64>::new(&cfg, Variant::Full).unwrap();
    // Per-stream memories differ so outputs are not trivially collinear.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for v in m.weight_mut(Weight::PersistentMemory).data_mut() {
        *v += rng.gen_range(-0.5..0.5);
    }
    let pass = m.predict(&random_ctx(&cfg, 7)).unwrap();
    let h_a = pass.stage(Stage::Adapted).unwrap();
    let rows: Vec<Vec<f64>> = (0..h_a.rows()).map(|r| h_a.row(r).to_vec()).collect();
    assert_eq!(numerical_rank(rows, 1e-9), 5);
    let mix = pass.stage(Stage::Mix).unwrap();
    let rows: Vec<Vec<f64>> = (0..mix.rows()).map(|r| mix.row(r).to_vec()).collect();
    assert!(numerical_rank(rows, 1e-9) > 5);
}

#[test]
fn zero_geglu_gate_leaves_coarse_residual() {
    let cfg = small();
    let mut m = Model::<f64>::new(&cfg, Variant::Full).unwrap();
    m.weight_mut(Weight::GegluGate).data_mut().fill(0.0);
    let pass = m.predict(&random_ctx(&cfg, 9)).unwrap();
    assert!(pass.stage(Stage::Expand).unwrap().data().iter().all(|&v| v == 0.0));
    assert_eq!(pass.stage(Stage::Output).unwrap(), pass.stage(Stage::Coarse).unwrap());
}

#[test]
fn fresh_model_is_near_uniform() {
    for cfg in [defaults_with_batch(4), ModelConfig::desk(), small()] {
        let mut m = Model::<f32>::new(&cfg, Variant::Full).unwrap();
        let pass = m.predict(&random_ctx(&cfg, 10)).unwrap();
        let probs = pass.probs();
        for r in 0..probs.rows() {
            let row = probs.row(r);
            let sum: f64 = row.iter().map(|&p| p as f64).sum();
            assert!((sum - 1.0).abs() < 1e-5);
            for &p in row {
                assert!(p > 0.0);
                assert!((p as f64) > 1.0 / 2560.0 && (p as f64) < 10.0 / 256.0, "{p}");
            }
        }
    }
}

#[test]
fn predict_is_deterministic_and_touches_only_the_cache() {
    let cfg = small();
    let ctx = random_ctx(&cfg, 11);
    let mut a = Model::<f32>::new(&cfg, Variant::Full).unwrap();
    let mut b = a.clone();
    let weights: Vec<_> = a.store().iter().map(|(_, p)| p.value().clone()).collect();
    let pa = a.predict(&ctx).unwrap();
    let pb = b.predict(&ctx).unwrap();
    assert_eq!(pa.probs(), pb.probs());
    assert_eq!(a.cache(), b.cache());
    let after: Vec<_> = a.store().iter().map(|(_, p)| p.value().clone()).collect();
    assert_eq!(weights, after);
    assert_eq!(a.step(), 0);
}

#[test]
fn uniform_prediction_costs_ln_256() {
    let cfg = small();
    let mut m = Model::<f64>::new(&cfg, Variant::Full).unwrap();
    m.weight_mut(Weight::HeadWeight).data_mut().fill(0.0);
    let pass = m.predict(&random_ctx(&cfg, 12)).unwrap();
    let loss = m.train_step(pass, &[1, 2, 3]).unwrap();
    assert!((loss - 256f64.ln()).abs() < 1e-12);
    assert_eq!(m.step(), 1);
}

#[test]
fn learns_alternating_pattern() {
    let cfg = ModelConfig {
        batch: 4,
        workers: 1,
        ..ModelConfig::desk()
    };
    let mut m = Model::<f32>::new(&cfg, Variant::Full).unwrap();
    let t = cfg.time_steps;
    let sym = |i: usize| if i.is_multiple_of(2) { b'A' } else { b'B' };
    let mut ctx = ContextWindow::new(4, t);
    for s in 0..4 {
        let row: Vec<u8> = (0..t).map(|i| sym(i + s)).collect();
        ctx.set_row(s, &row);
    }
    let mut last = f64::INFINITY;
    for step in 0..2000 {
        let targets: Vec<u8> = (0..4).map(|s| sym(step + t + s)).collect();
        let pass = m.predict(&ctx).unwrap();
        last = m.train_step(pass, &targets).unwrap();
        ctx.shift_in(&targets);
        if last < 0.1 {
            break;
        }
    }
    assert!(last < 0.1, "loss {last}");
}

#[test]
fn zero_residual_scales_stay_finite() {
    let cfg = small();
    let mut m = Model::<f32>::new(&cfg, Variant::Full).unwrap();
    for w in [Weight::LambdaM, Weight::LambdaC, Weight::LambdaO] {
        m.weight_mut(w).data_mut()[0] = 0.0;
    }
    m.weight_mut(Weight::CacheProjection).data_mut().fill(0.0);
    m.weight_mut(Weight::ConvKernel).data_mut().fill(0.0);
    let pass = m.predict(&random_ctx(&cfg, 13)).unwrap();
    assert!(pass.probs().data().iter().all(|p| p.is_finite()));
    m.train_step(pass, &[0, 0, 0]).unwrap();
}

#[test]
fn nll_report_averages() {
    assert!((nll_report(&[0.7, 0.7, 0.7]).unwrap().nats - 0.7).abs() < 1e-15);
    let r = nll_report(&[256f64.ln(), 256f64.ln()]).unwrap();
    assert!((r.nats - 256f64.ln()).abs() < 1e-15);
    assert!((r.bits_per_byte - 8.0).abs() < 1e-12);
    assert!(nll_report(&[]).is_err());
}

#[test]
fn every_variant_gradient_matches_finite_differences() {
    let cfg = ModelConfig { batch: 2, ..small() };
    let ctx = random_ctx(&cfg, 14);
    let targets = [5u8, 200];
    for v in Variant::ALL {
        let mut m = Model::<f64>::new(&cfg, v).unwrap();
        let pass = m.clone().predict(&ctx).unwrap();
        let mut probe = m.clone();
        probe.backprop(pass, &targets).unwrap();
        let ids: Vec<_> = m.store().iter().map(|(id, _)| id).collect();
        for id in ids {
            let grad = probe.store().get(id).grad.clone();
            let n = grad.len();
            for i in (0..n).step_by((n / 5).max(1)) {
                let orig = m.store().value(id).data()[i];
                let h = 1e-4;
                m.store_mut().get_mut(id).value_mut().data_mut()[i] = orig + h;
                let lp = m.loss_at(&ctx, &targets).unwrap();
                m.store_mut().get_mut(id).value_mut().data_mut()[i] = orig - h;
                let lm = m.loss_at(&ctx, &targets).unwrap();
                m.store_mut().get_mut(id).value_mut().data_mut()[i] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let a = grad.data()[i];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "{v:?} {} [{i}]: {a} vs {fd}", m.store().get(id).name);
            }
        }
    }
}

#[test]
fn harness_single_stream_variants_agree_on_equal_branches() {
    let cfg = small();
    let ctx = random_ctx(&cfg, 15);
    let mut probs = Vec::new();
    for v in [Variant::MlpOnly, Variant::CnnOnly, Variant::Dmd] {
        let mut m = Model::<f64>::new(&cfg, v).unwrap();
        m.weight_mut(Weight::CacheProjection).data_mut().fill(0.0);
        m.weight_mut(Weight::LambdaM).data_mut()[0] = 0.0;
        m.weight_mut(Weight::ConvKernel).data_mut().fill(0.0);
        probs.push(m.predict(&ctx).unwrap().probs().clone());
    }
    assert_eq!(probs[0], probs[1]);
    assert_eq!(probs[0], probs[2]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn permuting_streams_permutes_predictions(seed in any::<u64>(), rot in 1usize..3) {
        let cfg = ModelConfig { seed, ..small() };
        let ctx = random_ctx(&cfg, seed ^ 0x55);
        let mut m = Model::<f32>::new(&cfg, Variant::Full).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in m.weight_mut(Weight::PersistentMemory).data_mut() { *v += rng.gen_range(-0.3f32..0.3); }
        for v in m.cache_mut().data_mut() { *v = rng.gen_range(-1.0f32..1.0); }

        let b = cfg.batch;
        let perm: Vec<usize> = (0..b).map(|i| (i + rot) % b).collect();
        let mut pm = m.clone();
        let mut pctx = ctx.clone();
        let dr2 = cfg.hgr_dim * cfg.hgr_dim;
        let dc = cfg.cache_dim;
        for (dst, &src) in perm.iter().enumerate() {
            pctx.set_row(dst, ctx.row(src));
            let w = m.weight(Weight::PersistentMemory).data()[src * dr2..(src + 1) * dr2].to_vec();
            pm.weight_mut(Weight::PersistentMemory).data_mut()[dst * dr2..(dst + 1) * dr2].copy_from_slice(&w);
            let c = m.cache().data()[src * dc..(src + 1) * dc].to_vec();
            pm.cache_mut().data_mut()[dst * dc..(dst + 1) * dc].copy_from_slice(&c);
        }
        let a = m.predict(&ctx).unwrap();
        let p = pm.predict(&pctx).unwrap();
        for (dst, &src) in perm.iter().enumerate() {
            prop_assert_eq!(p.probs().row(dst), a.probs().row(src));
        }
    }
}
