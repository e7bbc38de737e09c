//! Dense tensors with reverse-mode automatic differentiation.
//!
//! Only the operations the trajectory model needs are provided. Records are
//! rebuilt on every forward pass because the agent count, and therefore
//! every tensor shape, changes from one sequence to the next.

mod tape;
mod tensor;

pub use tape::{CustomOp, Gradients, Tape, Var};
pub use tensor::Tensor;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{dim_err, Result};

/// Bounds applied to every log-variance before exponentiation.
pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

/// Pathwise Gaussian sample `mu + exp(logvar / 2) * eps` with `eps ~ N(0, I)`.
///
/// `eps` is recorded as a constant, so gradients reach `mu` and `logvar` only.
pub fn reparameterize<R: Rng + ?Sized>(
    tape: &mut Tape,
    mu: Var,
    logvar: Var,
    rng: &mut R,
) -> Result<Var> {
    let shape = tape.value(mu).shape().to_vec();
    if tape.value(logvar).shape() != shape.as_slice() {
        return dim_err(format!(
            "reparameterize: mu {:?} vs logvar {:?}",
            shape,
            tape.value(logvar).shape()
        ));
    }
    let eps = Tensor::from_fn(&shape, |_| rng.sample(StandardNormal));
    let eps = tape.leaf(eps);
    let lv = tape.clamp(logvar, LOGVAR_MIN, LOGVAR_MAX);
    let half = tape.scale(lv, 0.5);
    let std = tape.exp(half);
    let noise = tape.mul(std, eps)?;
    tape.add(mu, noise)
}
