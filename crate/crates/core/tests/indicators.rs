mod common;

use common::oracle;

fn worst(seed: u64, days: usize) -> (f64, usize) {
    oracle::compare(seed, days).unwrap()
}

#[test]
fn pipeline_matches_textbook_formulas() {
    let (w, n) = worst(11, 1040);
    assert!(n >= 1000, "only {n} days compared");
    assert!(w < 1e-9, "worst scaled difference {w:e}");
}

#[test]
fn other_seeds_match_on_short_histories() {
    for seed in 0..5 {
        let (w, n) = worst(seed, 120);
        assert!(n > 0);
        assert!(w < 1e-9, "seed {seed}: {w:e}");
    }
}
