use std::path::Path;

use meta_audit::combine::{dl_pool, fisher_combine, PoolMode};
use meta_audit::diagnostics::{build_pvalue_plot, classify_plot, fit_two_segment, Classification, PValuePlot};
use meta_audit::io::report::{round_significant, to_json_string};
use meta_audit::io::{read_report_json, render_pvalue_plot_svg_string, write_report_json, AuditReport};
use meta_audit::robustness::{leave_one_out, min_flip_pvalue, Method};
use meta_audit::searchspace::{compute_spaces, summarize_spaces};
use meta_audit::study::{BaseStudy, Direction, MetaDataset};
use meta_audit::{io::parse_studies_csv, MetaDataset32, PValuePlot32};
use proptest::prelude::*;

fn example() -> MetaDataset<f64> {
    parse_studies_csv(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/example_studies.csv")).unwrap()
}

fn mixture() -> Vec<f64> {
    (1..=10)
        .map(|i| 0.001 * i as f64)
        .chain((1..=20).map(|j| 0.05 + 0.95 * (j as f64 / 21.0)))
        .collect()
}

fn full_report(ds: &MetaDataset<f64>) -> AuditReport {
    let mut r = AuditReport::new(ds.label.clone());
    r.method = Some(Method::Fisher);
    r.alpha = Some(0.05);
    r.fisher = Some(fisher_combine(&ds.pvalues().unwrap()).unwrap());
    let (e, s) = ds.effects_and_ses().unwrap();
    r.dl = Some(dl_pool(&e, &s, PoolMode::Random).unwrap());
    r.diagnostics = Some(classify_plot(&build_pvalue_plot(ds).unwrap()).unwrap());
    r.influence = Some(leave_one_out(ds, Method::Fisher, 0.05).unwrap());
    r.min_flip_pvalue = Some(min_flip_pvalue(ds, 0.05).unwrap());
    r.warn("first");
    r.warn("first");
    r
}

fn assert_close_json(a: &serde_json::Value, b: &serde_json::Value, path: &str) {
    use serde_json::Value;
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            let scale = x.abs().max(y.abs()).max(f64::MIN_POSITIVE);
            assert!((x - y).abs() / scale <= 1e-9, "{path}: {x} vs {y}");
        }
        (Value::Array(x), Value::Array(y)) => {
            assert_eq!(x.len(), y.len(), "{path}");
            for (i, (x, y)) in x.iter().zip(y).enumerate() {
                assert_close_json(x, y, &format!("{path}[{i}]"));
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>(), "{path}");
            for (k, v) in x {
                assert_close_json(v, &y[k], &format!("{path}.{k}"));
            }
        }
        _ => assert_eq!(a, b, "{path}"),
    }
}

#[test]
fn report_round_trips_through_json() {
    let ds = example();
    let report = full_report(&ds);
    assert_eq!(report.warnings, vec!["first".to_string()]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    write_report_json(&report, &path).unwrap();
    let back = read_report_json(&path).unwrap();
    assert_close_json(
        &serde_json::to_value(&report).unwrap(),
        &serde_json::to_value(&back).unwrap(),
        "$",
    );
    // Writing what was read gives the same bytes.
    assert_eq!(to_json_string(&report).unwrap(), to_json_string(&back).unwrap());
}

#[test]
fn report_keys_keep_declared_order() {
    let text = to_json_string(&full_report(&example())).unwrap();
    let pos = |k: &str| text.find(&format!("\"{k}\"")).unwrap();
    assert!(pos("schema") < pos("dataset_label"));
    assert!(pos("fisher") < pos("dl"));
    assert!(pos("diagnostics") < pos("influence"));
    assert!(pos("influence") < pos("warnings"));
    assert!(!text.contains("\"breakdown\""));
}

#[test]
fn rounding_keeps_ten_significant_digits() {
    assert_eq!(round_significant(0.5), 0.5);
    assert_eq!(round_significant(1.0 / 3.0), 0.3333333333);
    assert_eq!(round_significant(-123456.7890123), -123456.789);
    assert_eq!(round_significant(2.857142857142857e-157), 2.857142857e-157);
    assert_eq!(round_significant(0.0), 0.0);
}

#[test]
fn pipeline_is_deterministic() {
    let a = to_json_string(&full_report(&example())).unwrap();
    let b = to_json_string(&full_report(&example())).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rr_input_matches_log_scale_pooling() {
    let ds = example();
    let (e, s) = ds.effects_and_ses().unwrap();
    assert!((e[0] - 1.21f64.ln()).abs() < 1e-15);
    assert!((s[0] - (1.41f64.ln() - 1.04f64.ln()) / (2.0 * 1.959964)).abs() < 1e-15);
    assert_eq!(ds.studies[2].direction, Direction::Decrease);
}

#[test]
fn mixture_fixture_fit() {
    let plot = PValuePlot::from_pvalues(&mixture()).unwrap();
    let two = fit_two_segment(&plot).unwrap();
    // Both halves are exact lines in normalized rank r/31, so the best
    // breakpoint is the junction and each slope is the per-rank step times 31.
    assert_eq!(two.breakpoint_rank, 10);
    assert!(two.combined_sse < 1e-20);
    assert!((two.left_fit.slope - 0.001 * 31.0).abs() < 1e-9);
    assert!((two.right_fit.slope - 0.95 / 21.0 * 31.0).abs() < 1e-9);
    let report = classify_plot(&plot).unwrap();
    assert_eq!(report.classification, Classification::BilinearMixture);
    assert_eq!(report.elston_count, 10 + (1..=20).filter(|&j| 0.05 + 0.95 * (j as f64 / 21.0) < (-1f64).exp()).count());
}

#[test]
fn svg_of_mixture_is_well_formed() {
    let plot = PValuePlot::from_pvalues(&mixture()).unwrap();
    let report = classify_plot(&plot).unwrap();
    let svg = render_pvalue_plot_svg_string(&plot, &report, "mixture").unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let class = |c: &str| doc.descendants().filter(|n| n.attribute("class") == Some(c)).count();
    assert_eq!(class("point"), 30);
    assert_eq!(class("fit-single"), 1);
    assert_eq!(class("fit-segment"), 2);
    assert_eq!(class("breakpoint"), 1);
    assert_eq!(class("reference"), 1);
}

#[test]
fn f32_path_agrees_with_f64() {
    let ps64 = mixture();
    let ps32: Vec<f32> = ps64.iter().map(|&p| p as f32).collect();
    let f64r = fisher_combine(&ps64).unwrap();
    let f32r = fisher_combine(&ps32).unwrap();
    assert!((f32r.statistic as f64 - f64r.statistic).abs() / f64r.statistic < 1e-5);
    let ds: MetaDataset32 = MetaDataset::from_pvalues("f32", &ps32);
    let plot: PValuePlot32 = build_pvalue_plot(&ds).unwrap();
    assert_eq!(classify_plot(&plot).unwrap().classification, Classification::BilinearMixture);
    let r = dl_pool(&[0.0f32, 2.0], &[1.0, 0.5], PoolMode::Random).unwrap();
    assert!((r.pooled - 1.1875).abs() < 1e-5);
}

#[test]
fn searchspace_summary_from_counts() {
    let recs: Vec<_> = [(2u64, 3u64, 4u32), (1, 1, 0), (5, 2, 10)]
        .iter()
        .map(|&(o, p, c)| compute_spaces(&meta_audit::searchspace::StudyCounts::new("x", o, p, c)).unwrap())
        .collect();
    let s = summarize_spaces(&recs).unwrap();
    assert_eq!(s.median, 96.0);
}

fn p_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![1e-8f64..0.05, 0.05f64..1.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classification_ignores_order(ps in proptest::collection::vec(p_strategy(), 1..40), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let base = classify_plot(&PValuePlot::from_pvalues(&ps).unwrap()).unwrap();
        let mut shuffled = ps.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let other = classify_plot(&PValuePlot::from_pvalues(&shuffled).unwrap()).unwrap();
        prop_assert_eq!(base.classification, other.classification);
        prop_assert_eq!(base.elston_count, other.elston_count);
        prop_assert_eq!(base.definitive_count, other.definitive_count);
    }

    #[test]
    fn adding_p_one_keeps_counts(ps in proptest::collection::vec(p_strategy(), 1..40)) {
        let before = classify_plot(&PValuePlot::from_pvalues(&ps).unwrap()).unwrap();
        let mut more = ps.clone();
        more.push(1.0);
        let after = classify_plot(&PValuePlot::from_pvalues(&more).unwrap()).unwrap();
        prop_assert_eq!(before.elston_count, after.elston_count);
        prop_assert_eq!(before.definitive_count, after.definitive_count);
        if before.classification == Classification::Effect {
            prop_assert_ne!(after.classification, Classification::NullUniform);
        }
    }

    #[test]
    fn influence_covers_every_study(ps in proptest::collection::vec(1e-6f64..1.0, 2..20)) {
        let ds = MetaDataset::from_pvalues("p", &ps);
        let recs = leave_one_out(&ds, Method::Fisher, 0.05).unwrap();
        prop_assert_eq!(recs.len(), ps.len());
        prop_assert!(recs.windows(2).all(|w| w[0].delta.abs() >= w[1].delta.abs()));
        let mut ids: Vec<_> = recs.iter().map(|r| r.study_id.clone()).collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), ps.len());
    }

    #[test]
    fn derived_p_feeds_fisher(effect in -4.0f64..4.0, se in 0.1f64..2.0) {
        let ds = MetaDataset::new("e", vec![BaseStudy::from_effect("a", effect, se)]);
        let p = ds.pvalues().unwrap()[0];
        let f = fisher_combine(&[p]).unwrap();
        prop_assert!((f.combined_p - p).abs() <= 1e-10);
    }
}
