mod common;

use common::lp_oracle::{check_against_oracle, random_lp, OracleOutcome, enumerate_vertices};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn simplex_agrees_with_vertex_enumeration(seed in any::<u64>()) {
        let problem = random_lp(seed);
        if let Err(msg) = check_against_oracle(&problem) {
            prop_assert!(false, "seed {seed}: {msg}");
        }
    }
}

#[test]
fn generator_produces_both_outcomes() {
    let (mut feasible, mut infeasible) = (0, 0);
    for seed in 0..200 {
        let p = random_lp(seed);
        match enumerate_vertices(&p.c, &p.a, &p.r, &p.lower, &p.upper) {
            OracleOutcome::Optimal(_) => feasible += 1,
            OracleOutcome::Infeasible => infeasible += 1,
        }
    }
    assert!(feasible > 40 && infeasible > 20, "{feasible} feasible, {infeasible} infeasible");
}
