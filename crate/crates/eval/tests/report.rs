use ndarray::{s, Array2, Array3};
use smite_core::pngio::write_index_mask;
use smite_core::LabelVideo;
use smite_eval::{category_means, evaluate_dirs, load_annotations, write_report, EvalError, DEFAULT_TOLERANCE};

fn square_video(frames: usize, offset: usize) -> LabelVideo {
    let mut l = Array3::<u8>::zeros((frames, 16, 16));
    for f in 0..frames {
        l.slice_mut(s![f, 4 + offset..10 + offset, 4..10]).fill(1);
    }
    LabelVideo::new(l, 1).unwrap()
}

fn write_gt(dir: &std::path::Path, v: &LabelVideo, frames: &[usize], category: &str) {
    std::fs::create_dir_all(dir).unwrap();
    for &f in frames {
        write_index_mask(&dir.join(format!("{f:05}.png")), &v.frame(f).to_owned()).unwrap();
    }
    std::fs::write(dir.join("category.txt"), category).unwrap();
}

#[test]
fn sparse_annotations_load_at_their_indices() {
    let dir = tempfile::tempdir().unwrap();
    let v = square_video(9, 0);
    write_gt(dir.path(), &v, &[0, 4, 8], "faces");
    let a = load_annotations(dir.path(), Some(1), None).unwrap();
    assert_eq!(a.annotated, vec![0, 4, 8]);
    assert_eq!(a.gt.frame(4), v.frame(4));
    assert!(a.gt.frame(3).iter().all(|&x| x == 0));
}

#[test]
fn mismatched_mask_size_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    write_index_mask(&dir.path().join("0.png"), &Array2::zeros((4, 4))).unwrap();
    write_index_mask(&dir.path().join("1.png"), &Array2::zeros((4, 5))).unwrap();
    assert!(matches!(
        load_annotations(dir.path(), None, None),
        Err(EvalError::CorruptMask { .. })
    ));
}

#[test]
fn directory_tree_report() {
    let root = tempfile::tempdir().unwrap();
    let (pred, gt) = (root.path().join("pred"), root.path().join("gt"));
    for (name, category, shift) in [("a", "horses", 0), ("b", "horses", 2), ("c", "faces", 6)] {
        square_video(6, shift).save_dir(&pred.join(name)).unwrap();
        write_gt(&gt.join(name), &square_video(6, 0), &[0, 3], category);
    }
    let records = evaluate_dirs(&pred, &gt, DEFAULT_TOLERANCE).unwrap();
    let names: Vec<_> = records.iter().map(|r| r.video.as_str()).collect();
    assert_eq!(names, ["a", "b", "c"]);
    assert_eq!(records[0].miou, 1.0);
    // 4 of the 6 rows overlap: 24 / 48
    assert!((records[1].miou - 0.5).abs() < 1e-12);
    assert_eq!(records[2].miou, 0.0);

    let means = category_means(&records);
    assert_eq!(means[0].0, "faces");
    assert_eq!(means[1].0, "horses");
    assert!((means[1].1 - 0.75).abs() < 1e-12);
    assert_eq!(means[2].0, "all");

    let csv = root.path().join("report.csv");
    write_report(&records, &csv).unwrap();
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["video", "category", "segment", "miou", "f_measure"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    // per video: one segment row and one "all" row; then faces, horses, all
    assert_eq!(rows.len(), 3 * 2 + 3);
    assert_eq!(&rows[1][2], "all");
    assert_eq!(&rows[6][0], "mean");
    assert_eq!(&rows[8][1], "all");
    let overall: f64 = rows[8][3].parse().unwrap();
    assert!((overall - 0.5).abs() < 1e-6);
}

#[test]
fn single_video_directories() {
    let root = tempfile::tempdir().unwrap();
    let (pred, gt) = (root.path().join("pred"), root.path().join("gt"));
    square_video(4, 1).save_dir(&pred).unwrap();
    write_gt(&gt, &square_video(4, 1), &[1], "cars");
    let records = evaluate_dirs(&pred, &gt, DEFAULT_TOLERANCE).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!((records[0].miou, records[0].f_measure), (1.0, 1.0));
    assert_eq!(records[0].category, "cars");
    assert_eq!(records[0].annotated, vec![1]);
}

#[test]
fn ground_truth_past_the_prediction_is_rejected() {
    let root = tempfile::tempdir().unwrap();
    let (pred, gt) = (root.path().join("pred"), root.path().join("gt"));
    square_video(3, 0).save_dir(&pred).unwrap();
    write_gt(&gt, &square_video(6, 0), &[5], "x");
    assert!(matches!(
        evaluate_dirs(&pred, &gt, DEFAULT_TOLERANCE),
        Err(EvalError::ShapeMismatch(_))
    ));
}
