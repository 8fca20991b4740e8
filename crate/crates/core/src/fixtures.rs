//! Canonical small models shared by the verification suites and the CLI.

use std::sync::Arc;

use crate::model::{Functional, ProductModel};

/// Two-state latent parameter in {0.3, 0.7} with equal weights and `n`
/// conditionally i.i.d. Bernoulli(Z) coordinates. Small enough to enumerate
/// exactly for n up to ~20.
pub fn mixed_bernoulli(n: usize) -> Arc<ProductModel> {
    Arc::new(
        ProductModel::conditional_bernoulli(&[0.3, 0.7], &[0.5, 0.5], n)
            .expect("fixture model is valid"),
    )
}

/// `F = X_0 + X_1 X_2` on a model with at least three components; mixes
/// chaos orders 0, 1 and 2 and is the standard smoke-test functional.
pub fn sum_and_pair(model: &Arc<ProductModel>) -> Functional {
    Functional::from_config_fn(model, |c| {
        model.value(0, c[0]) + model.value(1, c[1]) * model.value(2, c[2])
    })
    .expect("fixture functional on enumerable model")
}
