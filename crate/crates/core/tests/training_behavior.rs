//! Training pipelines: gradient checks against finite differences,
//! smoke tests for both trainers, determinism, the frozen-prefix property
//! and the inference cost model.

mod support;

use admm_mimo::hnet::{
    build_features, detect_hnet_counted, detect_hnet_prefix, flop_estimate, mlp_backward,
    mlp_forward, train_hnet, HnetModel, HnetTrainingMeta, MlpWeights,
};
use admm_mimo::model::{DatasetSpec, SnrPolicy};
use admm_mimo::psadmm::{z_sweep, DetectorState, PenaltyParams};
use admm_mimo::psnet::{train_psnet, TrainConfig};
use admm_mimo::rng::RngStream;
use rand::Rng;
use support::rel_err;

/// Loss of a single (a, s) pair through a perturbed copy of the weights.
fn loss_with(w: &MlpWeights, a: &[f64], s: &[f64]) -> f64 {
    let (x_hat, _) = mlp_forward(a, w);
    x_hat
        .iter()
        .zip(s.iter())
        .map(|(p, q)| (p - q) * (p - q))
        .sum()
}

fn fd_check_net(k: usize, n: usize, draws: usize, seed: u64) -> f64 {
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut rng = RngStream::new(seed, 0).rng();
    for d in 0..draws {
        let w = MlpWeights::init(n, k, RngStream::new(seed, 1 + d as u64));
        let a: Vec<f64> = (0..2 * k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let s: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (x_hat, t) = mlp_forward(&a, &w);
        let g = mlp_backward(&a, &w, &t, &x_hat, &s, 1);

        let mut check = |set: &dyn Fn(&mut MlpWeights, f64), analytic: f64| {
            let mut wp = w.clone();
            set(&mut wp, h);
            let lp = loss_with(&wp, &a, &s);
            let mut wm = w.clone();
            set(&mut wm, -h);
            let lm = loss_with(&wm, &a, &s);
            let numeric = (lp - lm) / (2.0 * h);
            worst = worst.max(rel_err(analytic, numeric));
        };

        for r in 0..n {
            for c in 0..2 * k {
                check(
                    &|w: &mut MlpWeights, d: f64| {
                        let v = w.w1.get(r, c) + d;
                        w.w1.set(r, c, v);
                    },
                    g.w1.get(r, c),
                );
            }
            let r2 = r;
            check(&move |w: &mut MlpWeights, d: f64| w.b1[r2] += d, g.b1[r]);
        }
        for r in 0..k {
            for c in 0..n {
                check(
                    &|w: &mut MlpWeights, d: f64| {
                        let v = w.w2.get(r, c) + d;
                        w.w2.set(r, c, v);
                    },
                    g.w2.get(r, c),
                );
            }
            let r2 = r;
            check(&move |w: &mut MlpWeights, d: f64| w.b2[r2] += d, g.b2[r]);
        }
    }
    worst
}

#[test]
fn backward_matches_finite_differences() {
    let worst_small = fd_check_net(2, 3, 20, 9001);
    assert!(worst_small < 1e-6, "(K,n)=(2,3) worst rel err {worst_small}");
    let worst_big = fd_check_net(4, 8, 20, 9002);
    assert!(worst_big < 1e-6, "(K,n)=(4,8) worst rel err {worst_big}");
}

fn quick_train_config() -> TrainConfig {
    TrainConfig {
        samples: 500,
        epochs: 30,
        batch: 125,
        lr: 1e-3,
        fd_step: 1e-3,
        lr_decay: 0.999,
    }
}

#[test]
fn psnet_training_reduces_loss_and_is_deterministic() {
    let data = DatasetSpec {
        mc: 8,
        kc: 2,
        q: 2,
        snr: SnrPolicy::UniformRange(6.0, 10.0),
        m: 500,
        seed: 14,
    };
    let tc = quick_train_config();
    let init = RngStream::new(1234, 0);
    let (model, history) = train_psnet(&data, 10, &tc, init).unwrap();
    assert_eq!(history.len(), tc.epochs + 1);
    assert!(
        history.last().unwrap() < history.first().unwrap(),
        "loss did not improve: {history:?}"
    );
    assert!(history.iter().all(|l| l.is_finite()));
    assert_eq!(model.training_meta.final_loss, *history.last().unwrap());

    let (model2, history2) = train_psnet(&data, 10, &tc, init).unwrap();
    assert_eq!(model.to_json(), model2.to_json());
    assert_eq!(history, history2);

    // A different init stream gives a different trajectory.
    let (model3, _) = train_psnet(&data, 10, &tc, RngStream::new(1234, 1)).unwrap();
    assert_ne!(model.theta, model3.theta);
}

#[test]
fn hnet_training_smoke() {
    let data = DatasetSpec {
        mc: 8,
        kc: 2,
        q: 2,
        snr: SnrPolicy::UniformRange(6.0, 10.0),
        m: 2_000,
        seed: 15,
    };
    let theta = PenaltyParams::default_fixed(2, 1.5).unwrap();
    let tc = TrainConfig {
        samples: 2_000,
        epochs: 20,
        batch: 256,
        lr: 1e-3,
        fd_step: 1e-3,
        lr_decay: 0.999,
    };
    let layers = 5;
    let init = RngStream::new(88, 0);
    let (model, history) = train_hnet(&data, &theta, &tc, 32, layers, init).unwrap();

    assert_eq!(model.depth(), layers);
    let finals = &model.training_meta.layer_final_loss;
    assert_eq!(finals.len(), layers);
    for l in 1..=layers {
        let initial = history
            .iter()
            .find(|r| r.layer == l && r.epoch == 0)
            .unwrap()
            .loss;
        assert!(
            finals[l - 1] < initial,
            "layer {l}: final {} vs initial {initial}",
            finals[l - 1]
        );
    }
    // Deeper layers refine: the last layer converges at least as low as the
    // first (10% tolerance).
    assert!(
        finals[layers - 1] <= finals[0] * 1.1,
        "layer {layers} loss {} vs layer 1 loss {}",
        finals[layers - 1],
        finals[0]
    );

    let (model2, _) = train_hnet(&data, &theta, &tc, 32, layers, init).unwrap();
    assert_eq!(model.to_json(), model2.to_json());
}

#[test]
fn frozen_prefix_reproduces_inference_bitwise() {
    // Training propagates states incrementally; inference recomputes from
    // scratch. Both must agree bit-for-bit, otherwise the cached features
    // would drift from what the deployed detector sees.
    let data = DatasetSpec {
        mc: 6,
        kc: 2,
        q: 2,
        snr: SnrPolicy::Fixed(9.0),
        m: 200,
        seed: 16,
    };
    let theta = PenaltyParams::default_fixed(2, 1.5).unwrap();
    let tc = TrainConfig {
        samples: 200,
        epochs: 3,
        batch: 50,
        lr: 1e-3,
        fd_step: 1e-3,
        lr_decay: 0.999,
    };
    let (model, _) = train_hnet(&data, &theta, &tc, 8, 4, RngStream::new(77, 0)).unwrap();

    for i in 0..10 {
        let sample = data.sample(i);
        // Reference propagation with the public per-operation API.
        let mf = sample.h.rows() as f64;
        let mut x: Vec<f64> = sample.h.matvec_t(&sample.y).iter().map(|v| v / mf).collect();
        let mut state = DetectorState::zeros(2, 4);
        for (depth, w) in model.layers.iter().enumerate() {
            let sum = z_sweep(&mut state, &theta, &x).unwrap();
            let feats =
                build_features(&sample.y, &sample.h, &x, &state.z, &state.u, theta.rho()).unwrap();
            let (x_new, _) = mlp_forward(&feats.a, w);
            for kk in 0..4 {
                state.u[kk] += x_new[kk] - sum[kk];
            }
            x = x_new;
            let from_detector = detect_hnet_prefix(&sample.y, &sample.h, &model, depth + 1).unwrap();
            assert_eq!(x, from_detector, "sample {i} depth {}", depth + 1);
        }
    }
}

#[test]
fn mac_count_tracks_cost_model() {
    // Untrained (random) weights: the count depends only on shapes.
    let shapes = [(16usize, 4usize, 5usize, 16usize), (32, 8, 10, 64), (64, 16, 20, 128), (128, 32, 20, 128)];
    for &(m, k, l, n) in &shapes {
        let q = 2u32;
        let theta = PenaltyParams::default_fixed(q, 1.5).unwrap();
        let layers: Vec<MlpWeights> = (0..l)
            .map(|i| MlpWeights::init(n, k, RngStream::new(5000, i as u64)))
            .collect();
        let model = HnetModel::new(
            layers,
            theta,
            n,
            q,
            HnetTrainingMeta {
                seed: 0,
                epochs_per_layer: 0,
                layer_final_loss: vec![],
            },
        )
        .unwrap();
        let h = support::random_matrix(m, k, RngStream::new(5001, (m + k) as u64));
        let y: Vec<f64> = (0..m).map(|i| (i as f64 * 0.37).sin()).collect();
        let (_, macs) = detect_hnet_counted(&y, &h, &model, l).unwrap();
        let estimate = flop_estimate(m, k, l, n);
        let ratio = macs as f64 / estimate as f64;
        assert!(
            (1.0 / 3.0..=3.0).contains(&ratio),
            "shape ({m},{k},{l},{n}): counted {macs}, estimate {estimate}, ratio {ratio}"
        );
    }
}

#[test]
fn train_rejects_mismatched_penalties() {
    let data = DatasetSpec {
        mc: 6,
        kc: 2,
        q: 3,
        snr: SnrPolicy::Fixed(10.0),
        m: 50,
        seed: 1,
    };
    let theta_q2 = PenaltyParams::default_fixed(2, 1.5).unwrap();
    let tc = TrainConfig {
        samples: 50,
        epochs: 1,
        batch: 10,
        lr: 1e-3,
        fd_step: 1e-3,
        lr_decay: 1.0,
    };
    assert!(train_hnet(&data, &theta_q2, &tc, 4, 2, RngStream::new(0, 0)).is_err());
}
