use fglasso::inference::{debias, test_linear, LinearHypothesis};
use fglasso::sim::{
    decompose_debias_error, median, replicate_covariances, run_coverage, run_fluctuation, Design,
    ExperimentConfig, RateStudy,
};
use fglasso::solver::AdmmSettings;
use fglasso::tuning::{select_tuning_aic, GridSpec};

fn small(design: Design) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(design);
    cfg.p = 12;
    cfg.n = 120;
    cfg.alpha_tilde = 0.2;
    cfg.replications = 4;
    cfg.seed = 11;
    cfg.lambda_grid = GridSpec::new(0.05, 0.2, 2).unwrap();
    cfg.rho_grid = GridSpec::new(0.05, 0.05, 1).unwrap();
    cfg.entries = vec![(1, 1), (1, 5), (3, 7)];
    cfg
}

#[test]
fn coverage_hits_are_non_rejections() {
    for design in [Design::EqualNull, Design::LinearNull, Design::ThreeSampleLinearNull] {
        let mut cfg = small(design);
        cfg.replications = 1;
        let report = run_coverage(&cfg).unwrap();
        let truth = cfg.truth().unwrap();
        let sigmas = replicate_covariances(&truth, cfg.n, cfg.center, cfg.seed, 0).unwrap();
        let ns = vec![cfg.n; truth.k()];
        let sel = select_tuning_aic(&sigmas, &ns, &cfg.grid(), &cfg.admm).unwrap();
        let db = debias(&sel.best_fit, &sigmas, &ns).unwrap();
        let coefs = design.coefficients();
        for e in &report.entries {
            let hyp = LinearHypothesis::new(coefs.clone(), e.i - 1, e.j - 1).unwrap();
            let res = test_linear(&db, &hyp, hyp.combine(&truth.theta0), 0.05).unwrap();
            assert_eq!(e.hits == 1, !res.reject, "{design:?} ({}, {})", e.i, e.j);
        }
        let freqs = report.frequencies();
        let mean_over = |in_s: bool| {
            let v: Vec<f64> = report
                .entries
                .iter()
                .zip(&freqs)
                .filter(|(e, _)| e.in_s == in_s)
                .map(|(_, f)| *f)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!((report.avg_cov_s - mean_over(true)).abs() < 1e-15);
        assert!((report.avg_cov_sc - mean_over(false)).abs() < 1e-15);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = small(Design::EqualNull);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| (run_fluctuation(&cfg).unwrap(), run_coverage(&cfg).unwrap()))
    };
    let (f1, c1) = run(1);
    let (f3, c3) = run(3);
    assert_eq!(f1.z, f3.z);
    assert_eq!(c1.entries, c3.entries);
    assert_eq!(c1.avg_cov_s, c3.avg_cov_s);
}

#[test]
fn decomposition_identity_holds_per_replication() {
    let cfg = small(Design::LinearNull);
    let truth = cfg.truth().unwrap();
    for r in 0..3 {
        let sigmas = replicate_covariances(&truth, cfg.n, true, cfg.seed, r).unwrap();
        let sel = select_tuning_aic(&sigmas, &[cfg.n, cfg.n], &cfg.grid(), &cfg.admm).unwrap();
        let db = debias(&sel.best_fit, &sigmas, &[cfg.n, cfg.n]).unwrap();
        let dec = decompose_debias_error(&db, &truth, &sigmas, &[cfg.design.coefficients()]).unwrap();
        for err in dec.identity_error {
            assert!(err <= 1e-10, "replication {r}: {err:e}");
        }
    }
}

#[test]
fn remainder_shrinks_with_sample_size() {
    let study = RateStudy {
        design: Design::EqualNull,
        p: 20,
        alpha_tilde: 0.1,
        replications: 20,
        seed: 5,
        lambda_scale: 1.0,
        admm: AdmmSettings::default(),
    };
    let medians: Vec<f64> = [200, 400, 800]
        .iter()
        .map(|&n| {
            let samples = study.run(n).unwrap();
            assert!(samples.iter().all(|s| s.identity_error <= 1e-10));
            median(&samples.iter().map(|s| s.scaled_remainder).collect::<Vec<_>>())
        })
        .collect();
    assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
}

#[test]
fn fluctuation_replays_exactly() {
    let mut cfg = small(Design::EqualNull);
    cfg.replications = 1;
    let a = run_fluctuation(&cfg).unwrap();
    let b = run_fluctuation(&cfg).unwrap();
    assert_eq!(a.z, b.z);
    cfg.seed += 1;
    assert_ne!(run_fluctuation(&cfg).unwrap().z, a.z);
}
