use emv_alm::eval::terminal_surpluses;
use emv_alm::market::{Dynamics, MarketConfig, MarketModel};
use emv_alm::rl::{study_spec, train_in, Algo, Hyperparams};

fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// With a frozen chain started almost surely in regime 1, the filter carries
/// the same information as the regime itself.
#[test]
fn filter_learner_matches_complete_information_on_a_frozen_chain() {
    let config = MarketConfig { p0: 1.0 - 1e-12, p11: 1.0, p12: 0.0, p21: 0.0, p22: 1.0, ..MarketConfig::study_default() };
    let model = MarketModel::new(config).unwrap();
    let spec = study_spec(&model);
    let hyper = Hyperparams { n_iter: 300, seed: 5, ..Hyperparams::default() };
    let mut terminals = Vec::new();
    for algo in [Algo::Poemv1, Algo::Coemv] {
        let state = train_in(algo, Dynamics::Market, &model, hyper.clone(), spec).unwrap();
        terminals.push(terminal_surpluses(&state.policy(), &model, Dynamics::Market, 1000, &spec, 77).unwrap());
    }
    let d = ks_statistic(&terminals[0], &terminals[1]);
    let critical = 1.36 * (2.0 / 1000.0f64).sqrt();
    assert!(d < critical, "KS statistic {d} exceeds {critical}");
}

#[test]
fn ks_statistic_detects_a_shift() {
    let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
    let b: Vec<f64> = (0..100).map(|i| i as f64 + 50.0).collect();
    assert!((ks_statistic(&a, &b) - 0.5).abs() < 1e-12);
    assert_eq!(ks_statistic(&a, &a), 0.0);
}
