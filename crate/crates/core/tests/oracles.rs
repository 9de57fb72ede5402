mod support;

use support::oracles;

#[test]
fn routing_matches_predicates() {
    oracles::routing_matches_predicates();
}

#[test]
fn scores_sigma_partition_and_fitness_match_oracle() {
    oracles::scores_sigma_partition_and_fitness_match_oracle();
}

#[test]
fn literal_values() {
    oracles::literal_values();
}

#[test]
fn six_row_partition_fixture() {
    oracles::six_row_partition_fixture();
}

#[test]
fn cascade_exit_levels_match_walk() {
    oracles::cascade_exit_levels_match_walk();
}
