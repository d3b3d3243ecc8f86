use std::collections::HashSet;
use std::path::Path;

use data_io::*;
use proptest::prelude::*;

fn synthetic(n: usize) -> IdxDataset {
    let images = (0..n * IMAGE_PIXELS).map(|i| (i * 7 % 256) as u8).collect();
    let labels = (0..n).map(|i| (i % 10) as u8).collect();
    IdxDataset::new(images, labels, Split::Train).unwrap()
}

#[test]
fn idx_round_trip_plain_and_gzip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synthetic(13);
    for gz in [false, true] {
        let (ip, lp) = (dir.path().join(format!("i{gz}")), dir.path().join(format!("l{gz}")));
        write_idx(&ds, &ip, &lp, gz).unwrap();
        let back = load_idx(&ip, &lp, Split::Train).unwrap();
        assert_eq!(back, ds);
        write_idx(&back, &ip, &lp, gz).unwrap();
        assert_eq!(load_idx(&ip, &lp, Split::Train).unwrap(), ds);
    }
}

fn write_pair(dir: &Path, ds: &IdxDataset) -> (std::path::PathBuf, std::path::PathBuf) {
    let (ip, lp) = (dir.join("img"), dir.join("lab"));
    write_idx(ds, &ip, &lp, false).unwrap();
    (ip, lp)
}

#[test]
fn swapped_files_give_wrong_magic() {
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = write_pair(dir.path(), &synthetic(3));
    match load_idx(&lp, &ip, Split::Train) {
        Err(DataError::WrongMagic { found, expected, .. }) => {
            assert_eq!(found, LABEL_MAGIC);
            assert_eq!(expected, IMAGE_MAGIC);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn truncated_file_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = write_pair(dir.path(), &synthetic(3));
    let bytes = std::fs::read(&ip).unwrap();
    std::fs::write(&ip, &bytes[..bytes.len() - 100]).unwrap();
    match load_idx(&ip, &lp, Split::Train) {
        Err(DataError::Truncated { offset, needed, .. }) => {
            assert_eq!(offset, bytes.len() - 100);
            assert_eq!(needed, 100);
        }
        other => panic!("{other:?}"),
    }
    std::fs::write(&ip, &bytes[..6]).unwrap();
    assert!(matches!(load_idx(&ip, &lp, Split::Train), Err(DataError::Truncated { offset: 6, .. })));
}

#[test]
fn count_mismatch_dims_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let (ip, _) = write_pair(dir.path(), &synthetic(3));
    let lp2 = dir.path().join("lab4");
    let ip2 = dir.path().join("img4");
    write_idx(&synthetic(4), &ip2, &lp2, false).unwrap();
    assert!(matches!(
        load_idx(&ip, &lp2, Split::Train),
        Err(DataError::CountMismatch { images: 3, labels: 4 })
    ));

    let mut bytes = std::fs::read(&ip).unwrap();
    bytes[11] = 27;
    std::fs::write(&ip, &bytes).unwrap();
    assert!(matches!(load_idx(&ip, &lp2, Split::Train), Err(DataError::BadDimensions { offset: 8, .. })));

    let mut lab = std::fs::read(&lp2).unwrap();
    lab[10] = 12;
    std::fs::write(&lp2, &lab).unwrap();
    assert!(matches!(
        load_idx(&ip2, &lp2, Split::Train),
        Err(DataError::BadLabel { offset: 10, value: 12, .. })
    ));
}

#[test]
fn batching_examples() {
    assert_eq!(batch_count(60_000, 64), 938);
    let ds = synthetic(150);
    let batches: Vec<Batch> = Batches::new(&ds, 64, 5, 0).unwrap().collect();
    assert_eq!(batches.len(), 3);
    assert_eq!(batches[2].len(), 150 - 128);
    let again: Vec<Batch> = Batches::new(&ds, 64, 5, 0).unwrap().collect();
    assert_eq!(batches, again);
    let other: Vec<Batch> = Batches::new(&ds, 64, 5, 1).unwrap().collect();
    assert_ne!(batches, other);
    assert_eq!(Batches::new(&ds, 150, 5, 0).unwrap().count(), 1);
    let empty = IdxDataset::new(vec![], vec![], Split::Test).unwrap();
    assert!(Batches::new(&empty, 4, 0, 0).is_err());
    assert!(Batches::new(&ds, 0, 0, 0).is_err());
}

#[test]
fn scaling_maps_endpoints_exactly() {
    let mut images = vec![0u8; IMAGE_PIXELS];
    images[1] = 255;
    images[2] = 51;
    let ds = IdxDataset::new(images, vec![3], Split::Test).unwrap();
    let b = Batches::sequential(&ds, 1).unwrap().next().unwrap();
    assert_eq!(b.images[0], 0.0);
    assert_eq!(b.images[1], 1.0);
    assert_eq!(b.images[2], 0.2);
    assert!(b.images.iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(b.labels, vec![3]);
}

#[test]
fn grid_geometry_and_rounding() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.pgm");
    let imgs = vec![vec![0.5; IMAGE_PIXELS]; 16];
    write_image_grid(&imgs, 2, 8, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let (h, w) = grid_dimensions(2, 8);
    assert_eq!((h, w), (2 * 28 + 1, 8 * 28 + 7));
    let header = format!("P5\n{w} {h}\n255\n");
    assert!(bytes.starts_with(header.as_bytes()));
    let pix = &bytes[header.len()..];
    assert_eq!(pix.len(), h * w);
    assert_eq!(pix[0], 128);
    assert_eq!(pix[28], 255);
    assert!(write_image_grid(&[], 1, 1, &path).is_err());
    assert!(write_image_grid(&imgs, 2, 2, &path).is_err());
}

#[test]
fn csv_examples_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.csv");
    let meta = vec![("seed".to_string(), "7".to_string())];
    write_csv(&p, &meta, &["mode", "beta", "steps"], &[]).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), "# seed=7\nmode,beta,steps\n");

    let rows = vec![vec![Cell::from("vanilla"), Cell::from(0.123_456_789), Cell::from(None::<i64>)]];
    write_csv(&p, &[], &["mode", "beta", "steps"], &rows).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(text, "mode,beta,steps\nvanilla,0.123457,\n");
    let t = read_csv(&p).unwrap();
    assert_eq!(t.numbers("beta").unwrap(), vec![Some(0.123457)]);
    assert_eq!(t.numbers("steps").unwrap(), vec![None]);
    assert_eq!(t.payload(), text);
}

#[test]
fn csv_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "# a=1\n# b=2\nx,y\n1,2\n3,oops\n").unwrap();
    let t = read_csv(&p).unwrap();
    assert_eq!(t.meta("b"), Some("2"));
    match t.numbers("y") {
        Err(DataError::Parse { line, .. }) => assert_eq!(line, 5),
        other => panic!("{other:?}"),
    }
    std::fs::write(&p, "# a=1\nx,y\n1,2\n3\n").unwrap();
    match read_csv(&p) {
        Err(DataError::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn real_dataset_sizes_when_present() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/fashion-mnist");
    if !dir.join(SPLIT_FILES[0].1).exists() {
        eprintln!("dataset not fetched; skipping size check");
        return;
    }
    let train = load_split(&dir, Split::Train).unwrap();
    let test = load_split(&dir, Split::Test).unwrap();
    assert_eq!(train.len(), 60_000);
    assert_eq!(test.len(), 10_000);
}

proptest! {
    #[test]
    fn every_epoch_order_is_a_permutation(n in 1usize..500, seed in any::<u64>(), epoch in 0u64..50) {
        let order = epoch_order(n, seed, epoch);
        let set: HashSet<usize> = order.iter().cloned().collect();
        prop_assert_eq!(order.len(), n);
        prop_assert_eq!(set.len(), n);
        prop_assert!(order.iter().all(|&i| i < n));
    }

    #[test]
    fn csv_values_round_trip_within_precision(vals in prop::collection::vec(-1e6f64..1e6, 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let rows: Vec<Vec<Cell>> = vals.iter().map(|&v| vec![Cell::from(v)]).collect();
        write_csv(&p, &[], &["v"], &rows).unwrap();
        let back = read_csv(&p).unwrap().numbers("v").unwrap();
        for (a, b) in vals.iter().zip(back) {
            prop_assert!((a - b.unwrap()).abs() <= 5e-7);
        }
    }
}
