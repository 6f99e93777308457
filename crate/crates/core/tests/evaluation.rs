mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oracle::metrics::{count, metric_check, overlay_check, random_map, ratios, SIDE};
use strokeseg::evaluation::{
    aggregate, argmax_labels, confusion, emit_report, render_overlay, Cell, ClassCounts, ConfusionCounts, FoldSummary,
    Ppm, ReportFormat, ReportRow, ReportTable, SubjectMetrics, BLACK, CSV_HEADER, GREEN, RED, WHITE,
};
use strokeseg::{Dims, Tensor};

#[test]
fn metrics_match_counting_oracle_on_random_maps() {
    let check = metric_check(2024, 1000);
    assert_eq!(check.count_mismatches, 0);
    assert!(check.max_ratio_err <= 1e-12, "{}", check.max_ratio_err);
}

#[test]
fn metric_identities_on_random_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..300 {
        let pred = random_map(&mut rng, SIDE * SIDE);
        let gt = random_map(&mut rng, SIDE * SIDE);
        let ab = confusion(&pred, &gt).unwrap();
        let ba = confusion(&gt, &pred).unwrap();
        for k in 0..2 {
            let (c, s) = (&ab.classes[k], &ba.classes[k]);
            assert_eq!(c.total(), (SIDE * SIDE) as u64);
            assert_eq!(c.dice(), s.dice());
            assert_eq!(c.precision(), s.recall());
            let (p, r) = (c.precision(), c.recall());
            if p + r > 0.0 {
                assert!((c.dice() - 2.0 * p * r / (p + r)).abs() < 1e-12);
            }
        }
        // Shuffling voxels in both maps together changes nothing.
        let mut order: Vec<usize> = (0..pred.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let sp: Vec<u8> = order.iter().map(|&i| pred[i]).collect();
        let sg: Vec<u8> = order.iter().map(|&i| gt[i]).collect();
        assert_eq!(confusion(&sp, &sg).unwrap(), ab);
    }
}

#[test]
fn degenerate_conventions() {
    let all_bg = vec![0u8; 16];
    let c = confusion(&all_bg, &all_bg).unwrap();
    assert_eq!(c.penumbra().dice(), 1.0);
    assert_eq!((c.core().precision(), c.core().recall()), (1.0, 1.0));
    let mut gt = all_bg.clone();
    gt[..5].fill(1);
    let c = confusion(&all_bg, &gt).unwrap();
    assert_eq!((c.penumbra().fn_, c.penumbra().tp), (5, 0));
    assert_eq!((c.penumbra().dice(), c.penumbra().precision(), c.penumbra().recall()), (0.0, 0.0, 0.0));
    assert_eq!(ratios(count(&all_bg, &gt, 1)), [0.0, 0.0, 0.0]);
    assert!(confusion(&all_bg, &gt[..15]).is_err());
    assert!(confusion(&[3], &[0]).is_err());
}

#[test]
fn argmax_recovers_one_hot_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let labels = random_map(&mut rng, 64);
    let mut data = vec![0.0f32; 3 * 64];
    for (i, &l) in labels.iter().enumerate() {
        data[l as usize * 64 + i] = 1.0;
    }
    let t = Tensor::from_vec(Dims::new(1, 3, 8, 8), data).unwrap();
    assert_eq!(argmax_labels(&t), labels);
}

#[test]
fn overlay_counts_equal_confusion_counts() {
    assert_eq!(overlay_check(99, 100), 0);
}

#[test]
fn overlay_four_colour_layout() {
    // class 1: GT-only, pred-only, both, neither in the first row
    let gt = [1, 0, 1, 0, 2, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0];
    let pred = [0, 1, 1, 0, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0];
    let img = render_overlay(&pred, &gt, 4, 4, 1).unwrap();
    assert_eq!(&img.pixels[..4], &[RED, GREEN, WHITE, BLACK]);
    assert!(img.pixels[4..].iter().all(|&p| p == BLACK));
    let core = render_overlay(&pred, &gt, 4, 4, 2).unwrap();
    assert_eq!(&core.pixels[4..6], &[WHITE, RED]);
    let bytes = img.to_bytes();
    assert!(bytes.starts_with(b"P6\n4 4\n255\n"));
    assert_eq!(Ppm::from_bytes(&bytes).unwrap(), img);
    assert!(render_overlay(&pred, &gt[..15], 4, 4, 1).is_err());
}

fn fold(fold: usize, dice_pen: &[f64]) -> FoldSummary {
    // Build subjects whose penumbra Dice is exactly the requested value:
    // tp = d, fp + fn = 2 - 2d with d in hundredths.
    let subjects = dice_pen
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let tp = (d * 100.0).round() as u64;
            let mut counts = ConfusionCounts::default();
            counts.classes[0] = ClassCounts {
                tp,
                fp: 100 - tp,
                fn_: 100 - tp,
                tn: 0,
            };
            SubjectMetrics {
                subject: format!("S{i}"),
                counts,
            }
        })
        .collect();
    FoldSummary { fold, subjects }
}

#[test]
fn aggregate_reports_mean_and_population_std_of_fold_means() {
    let row = aggregate("x", &[fold(0, &[0.80]), fold(1, &[0.82]), fold(2, &[0.84])]).unwrap();
    assert_eq!(row.cells[0].to_string(), "0.82 ± 0.02");
    let single = aggregate("x", &[fold(0, &[0.7, 0.9])]).unwrap();
    assert_eq!(single.cells[0].to_string(), "0.80 ± 0.00");
    assert!(aggregate("x", &[FoldSummary { fold: 0, subjects: vec![] }]).is_err());
}

fn proposed_row() -> ReportRow {
    // Fold means chosen to give the published cell values.
    let cell = |mean: f64, std: f64| Cell::of(&[mean - std * 1.5f64.sqrt(), mean, mean + std * 1.5f64.sqrt()]);
    ReportRow {
        config: "Proposed".into(),
        cells: [
            cell(0.82, 0.06),
            cell(0.73, 0.05),
            cell(0.82, 0.05),
            cell(0.80, 0.08),
            cell(0.83, 0.08),
            cell(0.68, 0.08),
        ],
    }
}

#[test]
fn report_reproduces_table_layout() {
    let table = ReportTable {
        rows: vec![proposed_row()],
    };
    let csv = table.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(
        lines.next(),
        Some("Proposed,0.82 ± 0.06,0.73 ± 0.05,0.82 ± 0.05,0.80 ± 0.08,0.83 ± 0.08,0.68 ± 0.08")
    );
    let md = table.to_markdown();
    assert!(md.contains("Dice Pen. | Dice Core"), "{md}");
    assert!(md.contains("| Proposed | 0.82 ± 0.06 | 0.73 ± 0.05 |"), "{md}");

    let parsed = ReportTable::from_csv(&csv).unwrap();
    assert_eq!(parsed.to_csv(), csv);

    let dir = tempfile::tempdir().unwrap();
    for fmt in [ReportFormat::Csv, ReportFormat::Markdown] {
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        emit_report(&table, fmt, &a).unwrap();
        emit_report(&table, fmt, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
    assert!(emit_report(&table, ReportFormat::Csv, &dir.path().join("missing/dir/r.csv")).is_err());
}
