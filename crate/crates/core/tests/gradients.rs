mod common;

use common::{full_model_gradcheck, tiny_config};
use twinformer::model::TwinFormerWeights;

#[test]
fn full_model_gradients_match_finite_differences() {
    let cfg = tiny_config();
    let shapes = TwinFormerWeights::shapes(&cfg);
    let expected = shapes.names();
    for seed in [1, 2, 3] {
        let checks = full_model_gradcheck(&cfg, seed, 25).unwrap();
        assert_eq!(
            checks.iter().map(|c| c.name.clone()).collect::<Vec<_>>(),
            expected
        );
        for (c, (_, shape)) in checks.iter().zip(shapes.slots()) {
            assert_eq!(
                c.coords,
                shape.iter().product::<usize>().min(25),
                "{}",
                c.name
            );
            assert!(
                c.max_rel_err <= 1e-4,
                "seed {seed}, {}: {:e}",
                c.name,
                c.max_rel_err
            );
        }
    }
}

#[test]
fn multivariate_and_longer_horizon_gradients_match() {
    let mut cfg = tiny_config();
    cfg.n_features = 3;
    cfg.target_index = 2;
    cfg.horizon = 5;
    cfg.seq_len = 16;
    for c in full_model_gradcheck(&cfg, 9, 12).unwrap() {
        assert!(c.max_rel_err <= 1e-4, "{}: {:e}", c.name, c.max_rel_err);
    }
}
