//! Mock provider → store → statistics → reports.

use std::path::Path;

use rngaudit_core::gateway::{mock_draw, MockKey, MockScript, ProviderConfig};
use rngaudit_core::parser::parse_output;
use rngaudit_core::report::{
    aggregate_table, distribution_summary, heatmap_matrix, render_heatmap_svg, summarize_store, GroupBy, Metric,
    Normalization, SummaryOptions,
};
use rngaudit_core::runner::{self, ExperimentPlan, RunOptions, Store, DEFAULT_TEMPERATURES};
use rngaudit_core::stats::{chi_square_uniform, Histogram};
use rngaudit_core::Language;

fn plan(dir: &Path, script: &str, languages: Vec<Language>, upper: u64, temps: Vec<f64>, calls: u64) -> ExperimentPlan {
    std::fs::write(dir.join("mock.toml"), script).unwrap();
    ExperimentPlan {
        run_id: "pipeline".into(),
        seed: 3,
        calls_per_cell: calls,
        languages,
        ranges: vec![upper],
        temperatures: temps,
        templates: None,
        providers: vec![ProviderConfig::mock("m", "mock.toml")],
        base_dir: dir.to_path_buf(),
    }
}

#[test]
fn constant_answer_store() {
    let dir = tempfile::tempdir().unwrap();
    let p = plan(
        dir.path(),
        "[[entry]]\nweights = { \"3\" = 1.0 }",
        vec![Language::EN],
        5,
        DEFAULT_TEMPERATURES.to_vec(),
        100,
    );
    let store_dir = dir.path().join("store");
    runner::run(&p, &store_dir, &RunOptions::default()).unwrap();
    let store = Store::new(&store_dir);

    let stats = summarize_store(&store, &SummaryOptions::default()).unwrap();
    assert_eq!(stats.len(), 6);
    for s in &stats {
        let st = s.stats.as_ref().unwrap();
        assert_eq!(st.randomness_index, 0.0);
        assert_eq!(st.cramers_v, 1.0);
        assert!(st.p_value > 0.0 && st.p_value < 1e-80);
    }

    let cells = store.scan().unwrap();
    let m = heatmap_matrix(&cells, "m", Language::EN, 5).unwrap();
    assert_eq!(m.temperatures, DEFAULT_TEMPERATURES.to_vec());
    for row in &m.counts {
        assert_eq!(row, &vec![0, 0, 100, 0, 0]);
    }
    assert_eq!(
        render_heatmap_svg(&m, Normalization::Abs)
            .matches(r#"class="cell""#)
            .count(),
        30
    );

    let d = distribution_summary(&cells, GroupBy::Provider);
    assert_eq!(d.len(), 1);
    assert_eq!((d[0].n, d[0].min, d[0].median, d[0].max), (600, 3.0, 3.0, 3.0));

    let t = aggregate_table(&stats, Metric::Ri).unwrap();
    assert_eq!(t.to_csv().lines().nth(1).unwrap(), "m,0.000,0.000");
}

#[test]
fn weighted_answers_land_in_their_columns() {
    let dir = tempfile::tempdir().unwrap();
    let p = plan(
        dir.path(),
        "[[entry]]\nweights = { \"7\" = 0.8, \"5\" = 0.2 }",
        vec![Language::ES],
        10,
        DEFAULT_TEMPERATURES.to_vec(),
        100,
    );
    let store_dir = dir.path().join("store");
    runner::run(&p, &store_dir, &RunOptions::default()).unwrap();
    let cells = Store::new(&store_dir).scan().unwrap();
    let m = heatmap_matrix(&cells, "m", Language::ES, 10).unwrap();
    // Binomial sd is 4, so ±12 is three of them.
    for row in &m.counts {
        assert!(row[6].abs_diff(80) <= 12, "{row:?}");
        assert!(row[4].abs_diff(20) <= 12, "{row:?}");
        assert_eq!(row[4] + row[6], 100);
    }
    assert_eq!(m.n_ok(), vec![100; 6]);
    for row in m.values(Normalization::RowMax) {
        assert_eq!(row.iter().copied().fold(0.0, f64::max), 1.0);
    }
    assert!(heatmap_matrix(&cells, "m", Language::ES, 5).is_err());
    assert!(heatmap_matrix(&cells, "other", Language::ES, 10).is_err());
}

#[test]
fn unparsable_cell_is_absent_in_every_report() {
    let dir = tempfile::tempdir().unwrap();
    let script = "[[entry]]\nweights = { \"2\" = 1.0, \"4\" = 1.0 }\n\
                  [[entry]]\nlanguage = \"JP\"\n[[entry.outputs]]\ntext = \"一、三、五のどれか\"\n";
    let p = plan(
        dir.path(),
        script,
        vec![Language::EN, Language::JP],
        5,
        vec![0.5, 1.0],
        40,
    );
    let store_dir = dir.path().join("store");
    runner::run(&p, &store_dir, &RunOptions::default()).unwrap();
    let stats = summarize_store(&Store::new(&store_dir), &SummaryOptions::default()).unwrap();
    let jp: Vec<_> = stats.iter().filter(|s| s.cell.language == Language::JP).collect();
    assert_eq!(jp.len(), 2);
    assert!(jp.iter().all(|s| !s.is_present() && s.n_unparsable == 40));

    let t = aggregate_table(&stats, Metric::Ri).unwrap();
    let line = t.to_csv().lines().nth(1).unwrap().to_string();
    let fields: Vec<&str> = line.split(',').collect();
    assert_eq!(fields[2], "--", "{line}");
    // The row average only sees the EN cell.
    assert_eq!(fields[1], fields[3]);
}

/// Uniform script, 10^4 calls: χ² rarely rejects at 0.001.
#[test]
fn uniform_script_passes_chi_square() {
    let pairs = (1..=5).map(|v| (v.to_string(), 1.0));
    let script = MockScript::uniform_weights(0, pairs);
    let key = MockKey {
        language: Language::EN,
        range_upper: 5,
        temperature: 1.0,
    };
    let seeds = 100;
    let mut passed = 0;
    for seed in 0..seeds {
        let script = MockScript { seed, ..script.clone() };
        let mut hist = Histogram::new(5).unwrap();
        for i in 0..10_000 {
            let parsed = parse_output(&mock_draw(&script, &key, i).unwrap(), 5);
            hist.record(parsed.status, parsed.value);
        }
        if chi_square_uniform(&hist).unwrap().p_value > 0.001 {
            passed += 1;
        }
    }
    assert!(passed * 100 >= seeds * 99, "{passed}/{seeds}");
}
