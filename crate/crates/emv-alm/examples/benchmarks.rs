//! Train the three learners with the simulation-study settings and print
//! their out-of-sample table next to the analytic benchmarks.

use emv_alm::closed_form::FrozenPolicy;
use emv_alm::eval::{calibrate_multiplier, compare_table, out_of_sample};
use emv_alm::market::{Dynamics, MarketModel};
use emv_alm::policy::{MeanOnly, SignalKind};
use emv_alm::rl::{study_spec, train, Algo, Hyperparams};

fn main() -> emv_alm::Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse().expect("seed")).unwrap_or(1);
    let model = MarketModel::study_default();
    let spec = study_spec(&model);
    let mut reports = Vec::new();
    for (algo, iters) in [(Algo::Poemv1, 10_000), (Algo::Coemv, 10_000), (Algo::Poemv2, 4_000)] {
        let hyper = Hyperparams { n_iter: iters, seed, ..Hyperparams::default() };
        let start = std::time::Instant::now();
        let state = train(algo, &model, hyper, spec)?;
        eprintln!("{}: trained in {:.1?}, w = {:.4}, trailing mean {:.4}", algo.label(), start.elapsed(), state.w, state.trailing_mean(1000));
        let pol = state.policy();
        reports.push(out_of_sample(algo.label(), &pol, &model, algo.eval_dynamics(), 1000, &spec, seed + 1_000_000)?);
    }
    let filt = Dynamics::Filtered(SignalKind::Filter);
    for (name, base, dynamics) in [
        ("Optimal-1", FrozenPolicy::poemv(&model, &spec)?, filt),
        ("Optimal-2", FrozenPolicy::coemv(&model, &spec)?, Dynamics::Market),
        ("Optimal-3", FrozenPolicy::suboptimal(&model, &spec)?, filt),
    ] {
        let w = calibrate_multiplier(|w| MeanOnly(base.with_w(w)), &model, dynamics, 1000, &spec, seed + 2_000_000)?;
        let pol = base.with_w(w);
        reports.push(out_of_sample(name, &MeanOnly(&pol), &model, dynamics, 1000, &spec, seed + 1_000_000)?);
    }
    let (text, _) = compare_table(&reports);
    println!("{text}");
    Ok(())
}
