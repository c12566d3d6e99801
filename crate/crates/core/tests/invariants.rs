//! Property tests over the public API.

use proptest::prelude::*;

use trt_core::data::{bin_events, split, synth_generate, Dataset, Event, EventStream, SyntheticTaskSpec};
use trt_core::diagnostics::{asfr, information_centroid};
use trt_core::network::NetworkSpec;
use trt_core::objectives::{sdt_ce_loss, softmax_row, trt_regularizer, trt_regularizer_grad, LossConfig, LossKind};
use trt_core::rng::seeded_normal;
use trt_core::trainer::{cosine_lr, TrainConfig};
use trt_core::{LIFParams, Mode, Model, Tensor};

fn small_model(seed: u64, widths: &[usize], t: usize, norm: bool) -> Model<f64> {
    let lif = LIFParams::new(0.5, 1.0, 0.0, 1.0).unwrap();
    let spec = NetworkSpec::dense(widths, norm, lif, t).unwrap();
    Model::new(spec, &mut trt_core::rng::Rng::new(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_distribution(z in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let p = softmax_row(&z);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sdt_loss_ignores_logit_offsets(seed in 0u64..1000, shift in -20.0f64..20.0) {
        let mut rng = trt_core::rng::Rng::new(seed);
        let o: Tensor<f64> = seeded_normal(&mut rng, &[3, 2, 4], 0.0, 2.0).unwrap();
        let moved = o.map(|v| v + shift).unwrap();
        let a = sdt_ce_loss(&o, &[1, 3]).unwrap();
        let b = sdt_ce_loss(&moved, &[1, 3]).unwrap();
        prop_assert!(a.total >= 0.0);
        prop_assert!((a.total - b.total).abs() < 1e-10);
    }

    #[test]
    fn regularizer_shrinks_with_time_and_pulls_toward_zero(
        w in prop::collection::vec(-3.0f64..3.0, 1..10),
        delta in 0.01f64..2.0,
        t in 1usize..30,
    ) {
        let w = Tensor::new(vec![w.len()], w).unwrap();
        let cfg = LossConfig { lambda: 0.1, delta, ..LossConfig::with_kind(LossKind::Trt) };
        let r = trt_regularizer(&[&w], t, &cfg).unwrap();
        let r1 = trt_regularizer(&[&w], 1, &cfg).unwrap();
        prop_assert!(r >= 0.0 && r <= r1);
        let g = trt_regularizer_grad(&[&w], t, &cfg).unwrap();
        for (&x, &gx) in w.data().iter().zip(g[0].data()) {
            prop_assert!(x * gx >= 0.0, "w {} grad {}", x, gx);
        }
    }

    #[test]
    fn centroid_lies_in_range_and_mirrors(p in prop::collection::vec(0.0f64..5.0, 1..20)) {
        prop_assume!(p.iter().any(|&v| v > 0.0));
        let t = p.len() as f64;
        let ic = information_centroid(&p).unwrap();
        prop_assert!((1.0..=t).contains(&ic));
        let mut rev = p.clone();
        rev.reverse();
        let mirrored = information_centroid(&rev).unwrap();
        prop_assert!((ic + mirrored - (t + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn spikes_are_binary_and_rates_bounded(seed in 0u64..500, t in 1usize..6, b in 1usize..4) {
        let model = small_model(seed, &[4, 6, 5, 3], t, true);
        let x: Tensor<f64> = seeded_normal(&mut trt_core::rng::Rng::new(seed + 1), &[t, b, 4], 0.5, 2.0).unwrap();
        let trace = model.forward(&x, Mode::Train).unwrap();
        for lt in &trace.layers {
            prop_assert!(lt.s.data().iter().all(|&s| s == 0.0 || s == 1.0));
            for (&u, &s) in lt.u.data().iter().zip(lt.s.data()) {
                prop_assert_eq!(s == 1.0, u > 1.0);
            }
        }
        for r in asfr(&trace, &[0, 1]).unwrap() {
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn eval_forward_is_independent_of_batch_mates(seed in 0u64..500) {
        let model = small_model(seed, &[3, 5, 2], 4, true);
        let x: Tensor<f64> = seeded_normal(&mut trt_core::rng::Rng::new(seed), &[4, 3, 3], 0.5, 1.5).unwrap();
        let whole = model.forward(&x, Mode::Eval).unwrap();
        let one = model.forward(&x.select1(&[1]).unwrap(), Mode::Eval).unwrap();
        prop_assert_eq!(one.outputs, whole.outputs.select1(&[1]).unwrap());
    }

    #[test]
    fn binning_conserves_events(
        raw in prop::collection::vec((0u64..10_000, 0u32..8, 0u32..6, 0u8..2), 1..200),
        blocks in 1usize..8,
    ) {
        let events: Vec<Event> = raw.iter().map(|&(t, x, y, p)| Event { t, x, y, p }).collect();
        let stream = EventStream::new(8, 6, events).unwrap();
        let frames: Tensor<f64> = bin_events(&stream, blocks, 3, 4).unwrap();
        prop_assert_eq!(frames.shape(), &[blocks, 2, 3, 4][..]);
        prop_assert_eq!(frames.sum(), raw.len() as f64);
        let on = raw.iter().filter(|r| r.3 == 1).count() as f64;
        let per_block = 2 * 3 * 4;
        let on_binned: f64 = (0..blocks)
            .flat_map(|b| frames.data()[b * per_block + 12..(b + 1) * per_block].to_vec())
            .sum();
        prop_assert_eq!(on_binned, on);
    }

    #[test]
    fn split_partitions_the_samples(n in 10usize..200, ratio in 0.05f64..0.95, seed in 0u64..100) {
        let data = Dataset::<f64>::new(1, vec![1], 3, (0..n).map(|i| i as f64).collect(), (0..n).map(|i| i % 3).collect()).unwrap();
        let s = split(&data, ratio, seed).unwrap();
        let mut all: Vec<usize> = s.train_indices.iter().chain(&s.test_indices).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        for (k, &i) in s.train_indices.iter().enumerate() {
            prop_assert_eq!(s.train.sample(k), &[i as f64][..]);
        }
    }

    #[test]
    fn label_noise_changes_the_requested_count(n in 1usize..300, frac in 0.0f64..1.0, seed in 0u64..100) {
        let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let mut data = Dataset::<f64>::new(1, vec![1], 4, vec![0.0; n], labels.clone()).unwrap();
        let k = data.corrupt_labels(frac, seed).unwrap();
        prop_assert_eq!(k, (frac * n as f64).round() as usize);
        let changed = labels.iter().zip(data.labels()).filter(|(a, b)| a != b).count();
        prop_assert_eq!(changed, k);
    }

    #[test]
    fn cosine_schedule_stays_between_bounds(total in 1usize..200, base in 1e-4f64..1.0, frac in 0.0f64..1.0) {
        let min = base * frac;
        let mut prev = f64::INFINITY;
        for e in 0..=total {
            let lr = cosine_lr(e, total, base, min).unwrap();
            prop_assert!(lr >= min - 1e-15 && lr <= base + 1e-15);
            prop_assert!(lr <= prev + 1e-15);
            prev = lr;
        }
        prop_assert_eq!(cosine_lr(0, total, base, min).unwrap(), base);
    }

    #[test]
    fn config_text_round_trips(hidden in 1usize..512, lr in 1e-6f64..1.0, lambda in 0.0f64..1.0, seed in 0u64..u64::MAX) {
        let mut cfg = TrainConfig::default();
        cfg.set("model.hidden", &hidden.to_string()).unwrap();
        cfg.set("optim.lr", &lr.to_string()).unwrap();
        cfg.set("loss.lambda", &lambda.to_string()).unwrap();
        cfg.seed = seed;
        let mut back = TrainConfig::default();
        back.apply_text(&cfg.to_text(), std::path::Path::new("echo")).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn synthetic_task_is_seed_deterministic() {
    let spec = SyntheticTaskSpec {
        seed: 3,
        ..SyntheticTaskSpec::default()
    };
    let a = synth_generate::<f64>(&spec, 50).unwrap();
    let b = synth_generate::<f64>(&spec, 50).unwrap();
    assert_eq!(a, b);
    let c = synth_generate::<f64>(&SyntheticTaskSpec { seed: 4, ..spec }, 50).unwrap();
    assert_ne!(a, c);
}
