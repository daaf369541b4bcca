use cemfield::experiments::{
    quantile, run_eeg_hypermodel, EegHypermodelConfig, HeadOptions, HYPER_CASES,
};
use cemfield::solver::PcgConfig;

fn small(realizations: usize) -> EegHypermodelConfig {
    EegHypermodelConfig {
        head: HeadOptions {
            resolution: 0.016,
            smoothing_iterations: 1,
            electrodes: 24,
            ..EegHypermodelConfig::default().head
        },
        sources: 300,
        realizations,
        ..EegHypermodelConfig::default()
    }
}

#[test]
fn hypermodel_rows_cover_cases_sources_and_realizations() {
    let r = run_eeg_hypermodel(&small(50), &PcgConfig::default()).unwrap();
    assert_eq!(HYPER_CASES.len(), 4);
    assert_eq!(r.rows.len(), 4 * 2 * 50);
    for case in ["i", "ii", "iii", "iv"] {
        for source in ["deep", "superficial"] {
            let n = r
                .rows
                .iter()
                .filter(|row| row.case == case && row.source == source)
                .count();
            assert_eq!(n, 50);
            assert!(r.median(case, source).unwrap().is_finite());
        }
    }
    assert!(r.rows.iter().all(|row| row.position_error_mm >= 0.0));
}

#[test]
fn hypermodel_is_reproducible() {
    let a = run_eeg_hypermodel(&small(3), &PcgConfig::default()).unwrap();
    let b = run_eeg_hypermodel(&small(3), &PcgConfig::default()).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.summary, b.summary);
    let c = run_eeg_hypermodel(
        &EegHypermodelConfig {
            seed: 2,
            ..small(3)
        },
        &PcgConfig::default(),
    )
    .unwrap();
    assert_ne!(a.rows, c.rows);
}

#[test]
fn quartiles_interpolate() {
    let v = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(quantile(&v, 0.5), 2.5);
    assert_eq!(quantile(&v, 0.25), 1.75);
    assert_eq!(quantile(&v, 0.0), 1.0);
    assert_eq!(quantile(&v, 1.0), 4.0);
}

#[test]
fn summary_has_quartile_rows() {
    let r = run_eeg_hypermodel(&small(4), &PcgConfig::default()).unwrap();
    assert_eq!(r.summary.len(), 4 * 2 * 2);
    assert!(r
        .summary
        .iter()
        .all(|row| row.q1 <= row.median && row.median <= row.q3));
}
