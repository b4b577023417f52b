use drifttrack::algorithms::AlgorithmKind;
use drifttrack::harness::{
    calibrate_c, render_svg, run_experiment, run_sweep, write_outputs, ExperimentConfig, ProblemConfig,
    SweepConfig, SERIES_HEADER,
};
use drifttrack::problems::{LeastSquaresParams, PerformativeParams, SparseParams};
use drifttrack::theory::BoundFamily;

fn ls(trials: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ProblemConfig::LeastSquares(LeastSquaresParams::default()));
    c.horizon = Some(100);
    c.trials = trials;
    c
}

#[test]
fn series_csv_round_trips() {
    let mut c = ls(5);
    c.horizon = Some(12);
    let r = run_experiment(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&r, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(SERIES_HEADER));
    for (t, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 9);
        assert_eq!(cols[0].parse::<usize>().unwrap(), t);
        let mean: f64 = cols[1].parse().unwrap();
        let gap_hi: f64 = cols[6].parse().unwrap();
        assert_eq!(mean.to_bits(), r.series.dist.mean[t].to_bits());
        assert_eq!(gap_hi.to_bits(), r.series.gap.hi[t].to_bits());
    }

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["config"]["trials"], 5);
    assert!(meta["resolved"]["schedule"]["epochs"].is_array());
    assert!(meta["bounds"]["bound_dist"]["constants"].is_string());
}

#[test]
fn svg_is_well_formed_with_one_polyline_per_series() {
    let mut c = ls(10);
    c.horizon = Some(30);
    let svg = render_svg(&run_experiment(&c).unwrap().series);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    assert_eq!(root.attribute("version"), Some("1.1"));
    let count = |tag: &str, class: &str| {
        doc.descendants()
            .filter(|n| n.has_tag_name(tag) && n.attribute("class") == Some(class))
            .count()
    };
    assert_eq!(count("polyline", "mean"), 2);
    assert_eq!(count("polyline", "bound"), 2);
    assert_eq!(count("polygon", "band"), 2);
    for n in doc.descendants().filter(|n| n.has_tag_name("polyline")) {
        let pts = n.attribute("points").unwrap();
        assert_eq!(pts.split(' ').count(), 31);
        for p in pts.split(' ') {
            let (x, y) = p.split_once(',').unwrap();
            assert!(x.parse::<f64>().unwrap().is_finite() && y.parse::<f64>().unwrap().is_finite());
        }
    }
}

#[test]
fn mean_below_expectation_envelope_and_band_sane() {
    let r = run_experiment(&ls(100)).unwrap();
    let s = &r.series;
    for t in 0..s.len() {
        assert!(s.dist.mean[t] <= s.bound_dist[t], "t = {t}");
        assert!(s.dist.lo[t] <= s.dist.mean[t] && s.dist.mean[t] <= s.dist.hi[t]);
        assert!(s.gap.lo[t] <= s.gap.mean[t] && s.gap.mean[t] <= s.gap.hi[t]);
    }
}

#[test]
fn band_narrows_with_more_trials() {
    let small = run_experiment(&ls(100)).unwrap().series;
    let large = run_experiment(&ls(400)).unwrap().series;
    let width = |s: &drifttrack::harness::AggregateSeries| {
        (50..=100).map(|t| s.dist.hi[t] - s.dist.lo[t]).sum::<f64>()
    };
    // Percentile bands estimate fixed quantiles, so the width itself
    // converges; the estimate of the mean does not drift apart.
    let (ws, wl) = (width(&small), width(&large));
    assert!((ws - wl).abs() <= 0.25 * wl, "{ws} vs {wl}");
}

#[test]
fn drift_sweep_is_nondecreasing() {
    let mut c = ls(100);
    c.sweep = Some(SweepConfig {
        param: "delta_drift".into(),
        values: vec![0.5, 1.0, 2.0],
    });
    let results = run_sweep(&c).unwrap();
    let finals: Vec<(f64, f64, f64)> = results
        .iter()
        .map(|(_, r)| {
            let s = &r.series;
            (s.dist.mean[100], s.dist.lo[100], s.dist.hi[100])
        })
        .collect();
    let inversions: Vec<usize> = (1..finals.len()).filter(|&i| finals[i].0 < finals[i - 1].0).collect();
    assert!(inversions.len() <= 1, "{finals:?}");
    for i in inversions {
        // an inversion is only tolerated between overlapping bands
        assert!(finals[i].2 >= finals[i - 1].1, "{finals:?}");
    }
}

#[test]
fn noise_sweep_scales_bound_plateau_with_sigma_squared() {
    let mut c = ls(2);
    c.schedule = drifttrack::harness::ScheduleConfig::Constant { eta: Some(0.25) };
    c.horizon = Some(2000);
    c.sweep = Some(SweepConfig {
        param: "sigma".into(),
        values: vec![5.0, 10.0, 20.0],
    });
    let results = run_sweep(&c).unwrap();
    let drift_term = 2.0 * (1.0 / 0.25f64).powi(2);
    let noise: Vec<f64> = results
        .iter()
        .map(|(_, r)| r.series.bound_dist[2000] - drift_term)
        .collect();
    assert!((noise[1] / noise[0] - 4.0).abs() < 1e-9, "{noise:?}");
    assert!((noise[2] / noise[1] - 4.0).abs() < 1e-9, "{noise:?}");
}

#[test]
fn calibration_is_stable_under_more_trials() {
    let mut c = ls(500);
    c.problem = ProblemConfig::LeastSquares(LeastSquaresParams {
        sigma: 2.0,
        delta_drift: 0.2,
        ..Default::default()
    });
    let a = calibrate_c(&c, BoundFamily::DistHp, None).unwrap();
    c.trials = 1000;
    let b = calibrate_c(&c, BoundFamily::DistHp, None).unwrap();
    assert!(a.c <= 4.0 && b.c <= 4.0);
    assert!((a.c - b.c).abs() < 0.25 * a.c, "{} vs {}", a.c, b.c);
}

#[test]
fn averaged_runs_on_every_family() {
    let configs = [
        ProblemConfig::SparseLeastSquares(SparseParams {
            d: 10,
            n: 20,
            ..Default::default()
        }),
        ProblemConfig::Performative(PerformativeParams::default()),
    ];
    for problem in configs {
        let mut c = ExperimentConfig::new(problem);
        c.algorithm = AlgorithmKind::AveragedDpsg;
        c.horizon = Some(60);
        c.trials = 20;
        let r = run_experiment(&c).unwrap();
        let s = &r.series;
        assert!(s.gap.mean.iter().all(|g| g.is_finite()));
        assert!(s.gap.mean[60] < s.gap.mean[0]);
    }
}
