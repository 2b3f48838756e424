//! Run the synthetic block-training study and print the comparison.

use emv_alm::empirical::{run_study, StudyConfig};
use emv_alm::eval::compare_table;
use emv_alm::market::MarketModel;
use emv_alm::rl::{study_spec, Hyperparams};

fn main() -> emv_alm::Result<()> {
    let mut args = std::env::args().skip(1);
    let iters: usize = args.next().map(|s| s.parse().expect("iterations")).unwrap_or(2000);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(1);
    let model = MarketModel::study_default();
    let hyper = Hyperparams { n_iter: iters, seed, ..Hyperparams::default() };
    let cfg = StudyConfig::daily(hyper, study_spec(&model));
    let start = std::time::Instant::now();
    let r = run_study(&model, &cfg)?;
    eprintln!("study finished in {:.1?}", start.elapsed());
    println!("labelled: {:?}", r.labelled);
    println!("oracle:   {:?}", r.oracle);
    let (text, _) = compare_table(&[r.filtered, r.single_regime, r.classical]);
    println!("{text}");
    Ok(())
}
