use smite_core::GuidanceConfig;
use smite_diffusion::{MiniLdm, MiniLdmConfig};
use smite_eval::harness::{Harness, HarnessConfig};
use smite_eval::{run_ablation, variant_model, variant_state, AblationInputs, Variant, DEFAULT_TOLERANCE};

#[test]
fn harness_is_deterministic() {
    let cfg = GuidanceConfig::default();
    let h = Harness::new(
        HarnessConfig {
            seed: 4,
            ..Default::default()
        },
        cfg.window_size,
    )
    .unwrap();
    let a = h.run(Variant::Tracking, &cfg).unwrap();
    let b = h.run(Variant::Tracking, &cfg).unwrap();
    assert_eq!(a.labels, b.labels);
}

#[test]
fn tracking_reduces_flicker() {
    let cfg = GuidanceConfig::default();
    let h = Harness::new(
        HarnessConfig {
            seed: 1,
            ..Default::default()
        },
        cfg.window_size,
    )
    .unwrap();
    let plain = h.run(Variant::PerFrame, &cfg).unwrap();
    let tracked = h.run(Variant::Tracking, &cfg).unwrap();
    assert!(plain.flicker > 0.05, "harness should flicker, got {}", plain.flicker);
    assert!(tracked.flicker < 0.5 * plain.flicker);
}

#[test]
fn per_frame_variant_is_plain_argmax() {
    let cfg = GuidanceConfig::default();
    let h = Harness::new(
        HarnessConfig {
            seed: 2,
            ..Default::default()
        },
        cfg.window_size,
    )
    .unwrap();
    let run = h.run(Variant::PerFrame, &cfg).unwrap();
    let again = h.run(Variant::Inflation, &cfg).unwrap();
    // the score backend has no attention to inflate or tune
    assert_eq!(run.labels, again.labels);
}

#[test]
fn ablation_record_on_the_toy_model() {
    let base = MiniLdm::seeded(MiniLdmConfig {
        latent_factor: 4,
        ..Default::default()
    })
    .unwrap();
    let h = Harness::new(HarnessConfig::default(), 3).unwrap();
    let cfg = GuidanceConfig {
        window_size: 3,
        denoising_steps: 2,
        guidance_iters_per_step: 2,
        ..Default::default()
    };
    for variant in [Variant::PerFrame, Variant::LpReg] {
        let model = variant_model(&base, variant).unwrap();
        let state = variant_state(&base.initial_state(1, None, 0).unwrap(), &base, variant).unwrap();
        let rec = run_ablation(
            &model,
            &state,
            &cfg,
            variant,
            AblationInputs {
                name: "square",
                category: "synthetic",
                video: &h.video,
                gt: &h.gt,
                annotated: &[0, 4],
                tracks: Some(&h.tracks),
                tolerance: DEFAULT_TOLERANCE,
            },
        )
        .unwrap();
        assert_eq!(rec.annotated, vec![0, 4]);
        assert!((0.0..=1.0).contains(&rec.miou) && (0.0..=1.0).contains(&rec.f_measure));
    }
}
