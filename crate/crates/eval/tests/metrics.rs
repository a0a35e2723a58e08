use ndarray::{s, Array3};
use proptest::prelude::*;
use smite_core::LabelVideo;
use smite_eval::{contour_f, miou, EvalError, DEFAULT_TOLERANCE};

fn video(labels: Array3<u8>, k: u8) -> LabelVideo {
    LabelVideo::new(labels, k).unwrap()
}

fn masks(frames: usize, h: usize, w: usize, k: u8) -> impl Strategy<Value = Array3<u8>> {
    proptest::collection::vec(0..=k, frames * h * w)
        .prop_map(move |v| Array3::from_shape_vec((frames, h, w), v).unwrap())
}

fn pair() -> impl Strategy<Value = (Array3<u8>, Array3<u8>, u8)> {
    (1usize..4, 2usize..10, 2usize..10, 1u8..4)
        .prop_flat_map(|(f, h, w, k)| (masks(f, h, w, k), masks(f, h, w, k), Just(k)))
}

fn scores(pred: &LabelVideo, gt: &LabelVideo, frames: &[usize]) -> Option<(f64, f64)> {
    Some((
        miou(pred, gt, frames).ok()?,
        contour_f(pred, gt, frames, DEFAULT_TOLERANCE).ok()?,
    ))
}

proptest! {
    #[test]
    fn scores_lie_in_unit_interval((p, g, k) in pair()) {
        let frames: Vec<usize> = (0..p.dim().0).collect();
        if let Some((i, f)) = scores(&video(p, k), &video(g, k), &frames) {
            prop_assert!((0.0..=1.0).contains(&i));
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn perfect_prediction_scores_one((_p, g, k) in pair()) {
        let frames: Vec<usize> = (0..g.dim().0).collect();
        let gt = video(g, k);
        if let Some(s) = scores(&gt, &gt, &frames) {
            prop_assert_eq!(s, (1.0, 1.0));
        }
    }

    // Renaming segments in both prediction and ground truth leaves every
    // score unchanged.
    #[test]
    fn label_permutation_invariance((p, g, k) in pair(), shift in 0u8..3) {
        let perm = |v: &u8| if *v == 0 { 0 } else { (*v - 1 + shift) % k + 1 };
        let frames: Vec<usize> = (0..p.dim().0).collect();
        let a = scores(&video(p.clone(), k), &video(g.clone(), k), &frames);
        let b = scores(&video(p.map(perm), k), &video(g.map(perm), k), &frames);
        prop_assert_eq!(a.is_some(), b.is_some());
        if let (Some(a), Some(b)) = (a, b) {
            prop_assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    // Frames outside the annotated list never affect the result.
    #[test]
    fn unannotated_frames_are_ignored((p, g, k) in pair(), junk in 0u8..4) {
        let frames: Vec<usize> = (0..p.dim().0).filter(|f| f % 2 == 0).collect();
        let a = scores(&video(p.clone(), k), &video(g.clone(), k), &frames);
        let (mut p2, mut g2) = (p, g);
        for f in (0..p2.dim().0).filter(|f| f % 2 == 1) {
            p2.slice_mut(s![f, .., ..]).fill(junk.min(k));
            g2.slice_mut(s![f, .., ..]).fill(k - junk.min(k));
        }
        prop_assert_eq!(a, scores(&video(p2, k), &video(g2, k), &frames));
    }
}

#[test]
fn half_overlap() {
    let mut g = Array3::<u8>::zeros((1, 4, 4));
    g.slice_mut(s![0, .., 0..2]).fill(1);
    let mut p = Array3::<u8>::zeros((1, 4, 4));
    p.slice_mut(s![0, .., 1..3]).fill(1);
    // 4 shared pixels over a union of 12
    assert!((miou(&video(p, 1), &video(g, 1), &[0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn segment_absent_from_ground_truth_is_skipped() {
    let mut g = Array3::<u8>::zeros((1, 6, 6));
    g.slice_mut(s![0, 0..3, 0..3]).fill(1);
    let mut p = g.clone();
    p[[0, 5, 5]] = 2;
    assert_eq!(miou(&video(p, 2), &video(g, 2), &[0]).unwrap(), 1.0);
}

#[test]
fn boundary_shift_within_tolerance_is_matched() {
    let mut g = Array3::<u8>::zeros((1, 12, 12));
    g.slice_mut(s![0, 3..9, 3..9]).fill(1);
    let mut p = Array3::<u8>::zeros((1, 12, 12));
    p.slice_mut(s![0, 4..10, 3..9]).fill(1);
    let (p, g) = (video(p, 1), video(g, 1));
    assert_eq!(contour_f(&p, &g, &[0], 1.5).unwrap(), 1.0);
    assert!(contour_f(&p, &g, &[0], 0.5).unwrap() < 1.0);
}

#[test]
fn empty_ground_truth_is_an_error() {
    let z = video(Array3::zeros((2, 4, 4)), 1);
    assert!(matches!(miou(&z, &z, &[0, 1]), Err(EvalError::EmptyGroundTruth)));
    assert!(matches!(miou(&z, &z, &[]), Err(EvalError::NoAnnotatedFrames)));
}
