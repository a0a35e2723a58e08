#![allow(dead_code)]

use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use ndarray::Array3;
use smite_core::{TrackTable, VideoClip};
use smite_diffusion::{MiniLdm, MiniLdmConfig, ScoreBackend};
use smite_tracking::{track_video, BlockMatchTracker, QueryPlan};

pub const CELL: usize = 8;

/// Colour-threshold logits with per-frame, per-cell sign flips hashed from
/// the frame's pixels, so moving content flickers and static content does
/// not.
pub fn flicker_backend(rate: f64, seed: u64) -> ScoreBackend {
    ScoreBackend::new(
        "flicker",
        1,
        CELL,
        Arc::new(move |frame: &Array3<u8>, cell: usize| {
            let (h, w, _) = frame.dim();
            let (ah, aw) = (h / cell, w / cell);
            let mut frame_hash = DefaultHasher::new();
            frame.as_slice().unwrap().hash(&mut frame_hash);
            seed.hash(&mut frame_hash);
            let base = frame_hash.finish();
            let mut out = Array3::zeros((2, ah, aw));
            for cy in 0..ah {
                for cx in 0..aw {
                    let mut red = 0.0;
                    for y in cy * cell..(cy + 1) * cell {
                        for x in cx * cell..(cx + 1) * cell {
                            red += frame[[y, x, 0]] as f64;
                        }
                    }
                    red /= (cell * cell) as f64;
                    let mut fg = (red - 85.0) / 25.0;
                    let mut hh = DefaultHasher::new();
                    (base, cy, cx).hash(&mut hh);
                    let u = (hh.finish() >> 11) as f64 / (1u64 << 53) as f64;
                    if u < rate {
                        fg = -fg;
                    }
                    out[[1, cy, cx]] = fg;
                }
            }
            out
        }),
    )
}

pub fn tracks(video: &VideoClip, attn: (usize, usize), window: usize) -> TrackTable {
    track_video(video, &BlockMatchTracker::default(), &QueryPlan::new(attn, window, 1)).unwrap()
}

pub fn small_video_model() -> MiniLdm {
    let cfg = MiniLdmConfig {
        latent_factor: 4,
        ..Default::default()
    };
    smite_diffusion::inflate(&MiniLdm::seeded(cfg).unwrap()).unwrap()
}
