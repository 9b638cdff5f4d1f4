use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};

/// Mean squared error `(1/H)·Σ(pred − target)²`.
pub fn l2_loss(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    if tape.shape(pred) != tape.shape(target) {
        return Err(Error::shape(
            "l2_loss",
            format!(
                "pred {:?} vs target {:?}",
                tape.shape(pred),
                tape.shape(target)
            ),
        ));
    }
    let diff = tape.sub(pred, target)?;
    let sq = tape.mul(diff, diff)?;
    tape.mean(sq)
}
