use super::dense::DenseMatrix;
use super::rng::Rng;
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

fn check_probability(p_drop: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p_drop) {
        return Err(Error::InvalidArgument(format!(
            "dropout probability must lie in [0, 1), got {p_drop}"
        )));
    }
    Ok(())
}

/// Inverted dropout: each entry is zeroed with probability `p_drop` and the
/// survivors are scaled by `1 / (1 - p_drop)`. Identity when not training.
pub fn dropout(m: &DenseMatrix, p_drop: f64, rng: &mut Rng, training: bool) -> Result<DenseMatrix> {
    check_probability(p_drop)?;
    if !training || p_drop == 0.0 {
        return Ok(m.clone());
    }
    let scale = 1.0 / (1.0 - p_drop);
    let mut out = m.clone();
    for v in out.as_mut_slice() {
        *v = if rng.uniform() < p_drop {
            0.0
        } else {
            *v * scale
        };
    }
    Ok(out)
}

/// Dropout over the stored entries of a sparse matrix. Implicit zeros stay
/// zero under any mask, so only stored entries consume random draws; the
/// result has the same distribution as [`dropout`] on the dense form.
pub fn dropout_sparse(
    m: &CsrMatrix,
    p_drop: f64,
    rng: &mut Rng,
    training: bool,
) -> Result<CsrMatrix> {
    check_probability(p_drop)?;
    if !training || p_drop == 0.0 {
        return Ok(m.clone());
    }
    let scale = 1.0 / (1.0 - p_drop);
    Ok(m.map_values(|v| {
        if rng.uniform() < p_drop {
            0.0
        } else {
            v * scale
        }
    }))
}
