mod common;

use common::{eigen_oracle_error, sdp_oracle_cases};

#[test]
fn eigenvalues_match_characteristic_roots() {
    let worst = eigen_oracle_error(25, 41);
    assert!(worst <= 1e-8, "largest eigenvalue error {worst:e}");
}

#[test]
fn sdp_matches_grid_optima() {
    for (i, (got, oracle, gap)) in sdp_oracle_cases(25, 7).into_iter().enumerate() {
        assert!((got - oracle).abs() <= 1e-3, "instance {i}: solver {got}, grid {oracle}");
        assert!(gap <= 1e-6, "instance {i}: gap {gap:e}");
    }
}
