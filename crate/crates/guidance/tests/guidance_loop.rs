mod common;

use common::*;
use ndarray::{s, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smite_consistency::{make_lowpass, vote_all};
use smite_core::synthetic::{static_clip, MovingSquare};
use smite_core::{softmax_channels, GuidanceConfig, WasMapStack};
use smite_diffusion::{DiffusionBackend, LatentState};
use smite_guidance::*;
use smite_tracking::{project_tracks, WindowLayout};

fn quick(cfg: GuidanceConfig) -> GuidanceConfig {
    GuidanceConfig { window_size: 3, ..cfg }
}

#[test]
fn latent_gradient_matches_finite_differences() {
    let model = small_video_model();
    let state = model.initial_state(1, None, 3).unwrap();
    let (video, _) = MovingSquare::new(2, 64, 24, (3, 2), 4).render().unwrap();
    let latent = model.add_noise(&model.encode_video(&video).unwrap(), 60, 1).unwrap();
    let res = model.score_resolution(&latent);
    assert_eq!(res, (16, 16));
    let cfg = GuidanceConfig {
        lambda_tracking: 0.7,
        lambda_reg: 1.3,
        ..quick(GuidanceConfig::default())
    };

    let scores = softmax_channels(&model.was_scores(&latent, &state).unwrap());
    let layout = WindowLayout {
        window_size: 3,
        stride: 1,
    };
    let projected = project_tracks(&tracks(&video, res, 3), (64, 64), res, layout).unwrap();
    let tracked = vote_all(&scores, &projected, 3, 1).unwrap();
    assert!(tracked.updated_count() > 0);
    // Keep the reference away from the current scores so |·| is smooth here.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let reference = WasMapStack::new(scores.scores.mapv(|v| v + rng.random_range(0.05..0.2)));
    let targets = EnergyTargets {
        tracked: Some(tracked),
        reference,
        filter: make_lowpass((2, 16, 16), 0.5).unwrap(),
    };
    let e = total_energy(&model, &latent, &state, &targets, &cfg).unwrap();
    let energy = |z: &Array4<f64>| {
        let l = LatentState {
            z: z.clone(),
            timestep: latent.timestep,
        };
        total_energy(&model, &l, &state, &targets, &cfg).unwrap().terms.total
    };
    assert!((energy(&latent.z) - e.terms.total).abs() < 1e-12);
    let dims = latent.z.dim();
    let mut checked = 0;
    for _ in 0..12 {
        let idx = (
            rng.random_range(0..dims.0),
            rng.random_range(0..dims.1),
            rng.random_range(0..dims.2),
            rng.random_range(0..dims.3),
        );
        let h = 1e-5;
        let mut hi = latent.z.clone();
        let mut lo = latent.z.clone();
        hi[idx] += h;
        lo[idx] -= h;
        let fd = (energy(&hi) - energy(&lo)) / (2.0 * h);
        let g = e.grad[idx];
        assert!(
            (fd - g).abs() <= 1e-3 * fd.abs().max(g.abs()).max(1e-7),
            "{idx:?}: fd {fd} vs {g}"
        );
        checked += 1;
    }
    assert_eq!(checked, 12);
}

#[test]
fn zero_weights_give_zero_gradient() {
    let backend = flicker_backend(0.1, 1);
    let (video, _) = MovingSquare::new(4, 64, 24, (3, 0), 2).render().unwrap();
    let state = backend.state();
    let latent = backend.encode_video(&video).unwrap();
    let scores = softmax_channels(&backend.was_scores(&latent, &state).unwrap());
    let targets = EnergyTargets {
        tracked: None,
        reference: scores,
        filter: make_lowpass((4, 8, 8), 0.4).unwrap(),
    };
    let cfg = GuidanceConfig {
        lambda_tracking: 0.0,
        lambda_reg: 0.0,
        ..Default::default()
    };
    let e = total_energy(&backend, &latent, &state, &targets, &cfg).unwrap();
    assert_eq!(e.terms.total, 0.0);
    assert!(e.grad.iter().all(|&g| g == 0.0));
}

#[test]
fn guided_updates_lower_the_energy() {
    let mut lowered = 0;
    for trial in 0..20u64 {
        let backend = flicker_backend(0.2, trial);
        let (video, _) = MovingSquare::new(8, 64, 24, (2, 1), trial).render().unwrap();
        let cfg = GuidanceConfig {
            denoising_steps: 1,
            seed: trial,
            ..quick(GuidanceConfig::default())
        };
        let table = tracks(&video, (8, 8), cfg.window_size);
        let out = run_inference(&backend, &video, &backend.state(), &cfg, Some(&table)).unwrap();
        let e = &out.manifest.steps[0].energies;
        assert_eq!(e.len(), 15);
        if e[14].total <= e[0].total {
            lowered += 1;
        }
    }
    assert!(lowered >= 18, "energy fell in {lowered}/20 trials");
}

#[test]
fn disabled_guidance_is_plain_argmax() {
    let backend = flicker_backend(0.2, 5);
    let (video, _) = MovingSquare::new(6, 64, 24, (2, 1), 5).render().unwrap();
    let state = backend.state();
    let expected = {
        let z = backend
            .add_noise(&backend.encode_video(&video).unwrap(), 100, 0)
            .unwrap();
        let s = softmax_channels(&backend.was_scores(&z, &state).unwrap());
        labels_from_scores(&s, (64, 64), 1).unwrap()
    };
    for cfg in [
        GuidanceConfig {
            lambda_tracking: 0.0,
            lambda_reg: 0.0,
            ..Default::default()
        },
        GuidanceConfig {
            guidance_iters_per_step: 0,
            ..Default::default()
        },
    ] {
        let out = run_inference(&backend, &video, &state, &cfg, None).unwrap();
        assert_eq!(out.labels, expected);
        assert!(!out.manifest.guidance);
        assert!(out.manifest.steps.is_empty());
    }
}

#[test]
fn tracking_needs_tracks() {
    let backend = flicker_backend(0.0, 0);
    let (video, _) = MovingSquare::new(4, 64, 24, (2, 1), 0).render().unwrap();
    let err = run_inference(&backend, &video, &backend.state(), &quick(Default::default()), None).unwrap_err();
    assert!(matches!(err, GuidanceError::MissingTracks));
    // the regularizer alone does not
    let cfg = GuidanceConfig {
        lambda_tracking: 0.0,
        ..quick(Default::default())
    };
    assert!(run_inference(&backend, &video, &backend.state(), &cfg, None).is_ok());
}

#[test]
fn non_finite_scores_are_reported() {
    let backend = smite_diffusion::ScoreBackend::new(
        "nan",
        1,
        CELL,
        std::sync::Arc::new(|frame: &ndarray::Array3<u8>, cell: usize| {
            let (h, w, _) = frame.dim();
            ndarray::Array3::from_elem((2, h / cell, w / cell), f64::NAN)
        }),
    );
    let (video, _) = MovingSquare::new(4, 64, 24, (2, 1), 0).render().unwrap();
    let cfg = GuidanceConfig {
        lambda_tracking: 0.0,
        ..quick(Default::default())
    };
    let err = run_inference(&backend, &video, &backend.state(), &cfg, None).unwrap_err();
    assert!(
        matches!(err, GuidanceError::NonFiniteEnergy { step: 0, iter: 0 }),
        "{err}"
    );
}

#[test]
fn duplicated_frames_stay_identical_under_guidance() {
    let model = small_video_model();
    let state = model.initial_state(1, None, 11).unwrap();
    let (video, _) = static_clip(4, 64, 3).unwrap();
    let cfg = GuidanceConfig {
        guidance_iters_per_step: 3,
        denoising_steps: 2,
        ..quick(Default::default())
    };
    let table = tracks(&video, (16, 16), 3);
    let out = run_inference(&model, &video, &state, &cfg, Some(&table)).unwrap();
    for f in 1..4 {
        assert_eq!(out.labels.frame(f), out.labels.frame(0));
        let d = &out.scores.scores.slice(s![f, .., .., ..]) - &out.scores.scores.slice(s![0, .., .., ..]);
        assert!(d.iter().all(|v| v.abs() < 1e-9));
    }
}

#[test]
fn gradient_windows_split_the_clip() {
    let backend = flicker_backend(0.2, 2);
    let (video, _) = MovingSquare::new(6, 64, 24, (2, 1), 2).render().unwrap();
    let state = backend.state();
    let latent = backend.encode_video(&video).unwrap();
    let scores = softmax_channels(&backend.was_scores(&latent, &state).unwrap());
    let reference = WasMapStack::new(scores.scores.mapv(|v| 0.9 * v + 0.05));
    let targets = EnergyTargets {
        tracked: None,
        reference,
        filter: make_lowpass((6, 8, 8), 0.4).unwrap(),
    };
    let cfg = GuidanceConfig {
        lambda_tracking: 0.0,
        ..Default::default()
    };
    let whole = windowed_energy(&backend, &latent, &state, &targets, &cfg, 0).unwrap();
    let same = windowed_energy(&backend, &latent, &state, &targets, &cfg, 6).unwrap();
    assert_eq!(whole.grad, same.grad);
    let split = windowed_energy(&backend, &latent, &state, &targets, &cfg, 4).unwrap();
    let mut expected = 0.0;
    for range in [0..4, 4..6] {
        let sub = targets.frame_range(range.clone(), cfg.dct_threshold).unwrap();
        let e = total_energy(&backend, &latent.frame_range(range.clone()), &state, &sub, &cfg).unwrap();
        expected += e.terms.total;
        assert_eq!(split.grad.slice(s![range, .., .., ..]), e.grad);
    }
    assert!((split.terms.total - expected).abs() < 1e-12);
}

#[test]
fn manifest_records_the_run() {
    let backend = flicker_backend(0.2, 3);
    let (video, _) = MovingSquare::new(5, 64, 24, (2, 1), 3).render().unwrap();
    let cfg = GuidanceConfig {
        denoising_steps: 2,
        seed: 17,
        ..quick(Default::default())
    };
    let table = tracks(&video, (8, 8), 3);
    let out = run_inference(&backend, &video, &backend.state(), &cfg, Some(&table)).unwrap();
    let m = &out.manifest;
    assert_eq!(m.steps.len(), 2);
    assert_eq!(m.steps.iter().map(|s| s.timestep).collect::<Vec<_>>(), vec![100, 50]);
    assert!(m.steps.iter().all(|s| s.energies.len() == 15 && s.tracked_cells > 0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("meta.json");
    m.save(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(v["config"]["seed"], 17);
    assert_eq!(v["model_id"], "flicker");
    assert_eq!(v["steps"][1]["energies"].as_array().unwrap().len(), 15);
}

#[test]
fn runs_are_deterministic() {
    let backend = flicker_backend(0.2, 4);
    let (video, _) = MovingSquare::new(5, 64, 24, (2, 1), 4).render().unwrap();
    let cfg = quick(Default::default());
    let table = tracks(&video, (8, 8), 3);
    let a = run_inference(&backend, &video, &backend.state(), &cfg, Some(&table)).unwrap();
    let b = run_inference(&backend, &video, &backend.state(), &cfg, Some(&table)).unwrap();
    assert_eq!(a.scores, b.scores);
    assert_eq!(a.manifest, b.manifest);
}

#[test]
fn timesteps_descend_from_the_noise_level() {
    assert_eq!(denoising_timesteps(100, 5), vec![100, 80, 60, 40, 20]);
    assert_eq!(denoising_timesteps(100, 1), vec![100]);
}
