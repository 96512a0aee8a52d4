use promisetune::bench::{synthetic_landscape, LandscapeKind};
use promisetune::tuner::{run, TunerConfig};

fn main() {
    let land = synthetic_landscape(LandscapeKind::RuggedWells { boxes: 2 }, 6, 0xa3);
    let space = land.space().clone();
    for seed in [0xa7u64, 0xa9, 5, 13, 29, 41] {
        let mut cfg = TunerConfig::new(100, seed);
        cfg.tree_count = 50;
        let result = run(&space, &land, &cfg).unwrap();
        println!(
            "seed {seed:#x}: final rules = {}, best = {:.2}",
            result.final_rules.len(),
            result.best_performance
        );
    }
}
