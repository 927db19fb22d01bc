mod common;

use std::collections::BTreeSet;

use qagrade::fixture;
use qagrade::shots::{random_shots, select_shots, KMeansParams, ShotSet};

#[test]
fn contract_on_the_fixture() {
    common::shot_contract().unwrap();
}

#[test]
fn hand_example_tie_break() {
    let (responses, matrix) = common::hand_example();
    for seed in 0..10 {
        let (set, _) = select_shots(&responses, &matrix, &KMeansParams::new(2, seed)).unwrap();
        let shots: BTreeSet<&str> = set.shot_ids.iter().map(String::as_str).collect();
        assert_eq!(shots, BTreeSet::from(["r1", "r3"]), "seed {seed}");
        assert_eq!(set.eval_ids, ["r2", "r4"]);
    }
}

#[test]
fn embeddings_are_deterministic_and_normalized() {
    let responses = fixture::responses().responses;
    let a = common::fixture_embeddings(&responses);
    let b = common::fixture_embeddings(&responses);
    assert_eq!(a, b);
    assert!(a.is_normalized());
    assert_eq!(a.len(), 40);
}

#[test]
fn selected_shots_carry_feedback() {
    let responses = fixture::responses().responses;
    let set = common::four_shot_set(&responses);
    set.ensure_feedback(["q1", "q2", "q3", "q4"]).unwrap();
    assert_eq!(set.k, 4);
}

#[test]
fn random_and_zero_shot() {
    let responses = fixture::responses().responses;
    let a = random_shots(&responses, 5, 1).unwrap();
    let b = random_shots(&responses, 5, 2).unwrap();
    assert_ne!(a.shot_ids, b.shot_ids);
    assert!(random_shots(&responses, 40, 0).is_err());
    let zero = ShotSet::zero_shot(&responses);
    assert!(zero.shot_ids.is_empty());
    assert_eq!(zero.eval_ids.len(), 40);
}
