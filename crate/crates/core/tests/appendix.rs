mod common;

use common::*;
use proptest::prelude::*;

fn run(check: Check, seed: u64) -> Result<(), TestCaseError> {
    check(&mut rng(seed)).map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn singular_values_of_products(seed in any::<u64>()) { run(sing_value_change, seed)?; }

    #[test]
    fn pythagoras_bound(seed in any::<u64>()) { run(pythagoras, seed)?; }

    #[test]
    fn right_multiplication_moves_u_little(seed in any::<u64>()) { run(no_change_right, seed)?; }

    #[test]
    fn left_multiplication_moves_u_little(seed in any::<u64>()) { run(slow_change, seed)?; }

    #[test]
    fn attraction_to_u(seed in any::<u64>()) { run(attractor, seed)?; }

    #[test]
    fn no_cancellation_bound(seed in any::<u64>()) { run(no_cancellation, seed)?; }

    #[test]
    fn plucker_inequalities(seed in any::<u64>()) { run(plucker, seed)?; }

    #[test]
    fn transversal_product_bound(seed in any::<u64>()) { run(product_space_bound, seed)?; }

    #[test]
    fn graph_map_sandwich(seed in any::<u64>()) { run(distance_and_norm, seed)?; }

    #[test]
    fn expansion_in_orthogonal_case(seed in any::<u64>()) { run(expansion, seed)?; }

    #[test]
    fn exterior_power_singular_values(seed in any::<u64>()) { run(exterior_identities, seed)?; }

    #[test]
    fn grassmann_distance_identities(seed in any::<u64>()) { run(grassmann_identities, seed)?; }
}
