use icechron::io::{
    read_csv, read_dataset, write_csv, write_dataset, ChronologyRow, GammaRow, GapRow, LayerRow,
    PathRow, CHRONOLOGY_HEADER, GAMMA_HEADER, GAPS_HEADER, LAYERS_HEADER, PATHS_HEADER,
};
use icechron::DepthSeries;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        (-300i32..300, -1.0f64..1.0).prop_map(|(e, m)| m * 10f64.powi(e)),
    ]
}

fn positive() -> impl Strategy<Value = f64> {
    (-8i32..4, 1.0f64..10.0).prop_map(|(e, m)| m * 10f64.powi(e))
}

/// Relative agreement to 15 significant digits.
fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-15 * a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dataset_round_trip(rows in prop::collection::btree_map(
        (1u64..1_000_000_000).prop_map(|k| k), finite(), 1..40)) {
        let depths: Vec<f64> = rows.keys().map(|&k| k as f64 * 1.1e-7).collect();
        let proxy: Vec<f64> = rows.values().copied().collect();
        let data = DepthSeries::new(depths, proxy).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_dataset(&p, &data).unwrap();
        let back = read_dataset(&p).unwrap();
        prop_assert_eq!(back.dropped_nan, 0);
        for (x, y) in back.series.depths().iter().zip(data.depths()) {
            prop_assert!(close(*x, *y));
        }
        for (x, y) in back.series.proxy().iter().zip(data.proxy()) {
            prop_assert!(close(*x, *y));
        }
    }

    #[test]
    fn output_formats_round_trip(
        chron in prop::collection::vec((positive(), finite(), finite(), finite(), finite()), 0..20),
        paths in prop::collection::vec((0usize..1000, positive(), finite()), 0..20),
        gamma in prop::collection::vec((positive(), 0usize..10_000, 0usize..1000, 0usize..50, 0.0f64..1.0), 0..20),
        layers in prop::collection::vec((0usize..1000, positive(), positive(), positive(), 0.0f64..1.0), 0..20),
        gaps in prop::collection::vec((positive(), positive(), -5i64..500, 0.0f64..1.0), 0..20),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let chron: Vec<ChronologyRow> = chron.into_iter().map(|(depth, mean_year, q05_year, q50_year, q95_year)|
            ChronologyRow { depth, mean_year, q05_year, q50_year, q95_year }).collect();
        let p = dir.path().join("c.csv");
        write_csv(&p, &CHRONOLOGY_HEADER, chron.iter().copied()).unwrap();
        prop_assert_eq!(read_csv::<ChronologyRow>(&p, &CHRONOLOGY_HEADER).unwrap(), chron);

        let paths: Vec<PathRow> = paths.into_iter().map(|(path_id, depth, year)| PathRow { path_id, depth, year }).collect();
        let p = dir.path().join("p.csv");
        write_csv(&p, &PATHS_HEADER, paths.iter().copied()).unwrap();
        prop_assert_eq!(read_csv::<PathRow>(&p, &PATHS_HEADER).unwrap(), paths);

        let gamma: Vec<GammaRow> = gamma.into_iter().map(|(depth, state, year, phase, prob)|
            GammaRow { depth, state, year, phase, prob }).collect();
        let p = dir.path().join("g.csv");
        write_csv(&p, &GAMMA_HEADER, gamma.iter().copied()).unwrap();
        prop_assert_eq!(read_csv::<GammaRow>(&p, &GAMMA_HEADER).unwrap(), gamma);

        let layers: Vec<LayerRow> = layers.into_iter().map(|(year, median_depth, q05_depth, q95_depth, fraction)|
            LayerRow { year, median_depth, q05_depth, q95_depth, fraction }).collect();
        let p = dir.path().join("l.csv");
        write_csv(&p, &LAYERS_HEADER, layers.iter().copied()).unwrap();
        prop_assert_eq!(read_csv::<LayerRow>(&p, &LAYERS_HEADER).unwrap(), layers);

        let gaps: Vec<GapRow> = gaps.into_iter().map(|(upper_depth, lower_depth, years, prob)|
            GapRow { upper_depth, lower_depth, years, prob }).collect();
        let p = dir.path().join("x.csv");
        write_csv(&p, &GAPS_HEADER, gaps.iter().copied()).unwrap();
        prop_assert_eq!(read_csv::<GapRow>(&p, &GAPS_HEADER).unwrap(), gaps);
    }
}

#[test]
fn empty_output_has_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.csv");
    write_csv(&p, &PATHS_HEADER, Vec::<PathRow>::new()).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), "path_id,depth,year\n");
    assert!(read_csv::<PathRow>(&p, &PATHS_HEADER).unwrap().is_empty());
}
