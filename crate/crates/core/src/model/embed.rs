//! Inverted variate tokens: one token per aircraft channel, embedded over time.

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, Var};

/// `N × T × 3` (time-major per aircraft) to `(N·3) × T`.
///
/// Row `3i + c` holds channel `c` (lat, lon, alt) of aircraft `i`.
pub fn invert_scene<T: Copy>(x: &[T], n: usize, steps: usize) -> Result<Vec<T>> {
    if x.len() != n * steps * 3 {
        return Err(Error::Dimension {
            op: "invert_scene",
            lhs: vec![x.len()],
            rhs: vec![n, steps, 3],
        });
    }
    let mut out = Vec::with_capacity(x.len());
    for i in 0..n {
        for c in 0..3 {
            out.extend((0..steps).map(|t| x[(i * steps + t) * 3 + c]));
        }
    }
    Ok(out)
}

/// Inverse of [`invert_scene`].
pub fn uninvert_scene<T: Copy + Default>(xbar: &[T], n: usize, steps: usize) -> Result<Vec<T>> {
    if xbar.len() != n * steps * 3 {
        return Err(Error::Dimension {
            op: "uninvert_scene",
            lhs: vec![xbar.len()],
            rhs: vec![n * 3, steps],
        });
    }
    let mut out = vec![T::default(); xbar.len()];
    for i in 0..n {
        for c in 0..3 {
            for t in 0..steps {
                out[(i * steps + t) * 3 + c] = xbar[(3 * i + c) * steps + t];
            }
        }
    }
    Ok(out)
}

/// `x̄ W + b`: each row's full series mapped to a `D`-dimensional token.
pub fn scene_embedding<T: Scalar>(tape: &mut Tape<T>, xbar: Var, w: Var, b: Var) -> Result<Var> {
    let h = tape.matmul(xbar, w)?;
    tape.add_bias(h, b)
}

/// Adds `table[wtc_i]` to the three tokens of aircraft `i`.
pub fn add_type_embedding<T: Scalar>(
    tape: &mut Tape<T>,
    tokens: Var,
    wtcs: &[usize],
    table: Var,
) -> Result<Var> {
    let rows = tape.value(tokens).as_matrix().0;
    if rows != wtcs.len() * 3 {
        return Err(Error::Dimension {
            op: "add_type_embedding",
            lhs: vec![rows],
            rhs: vec![wtcs.len() * 3],
        });
    }
    let index: Vec<usize> = wtcs.iter().flat_map(|&w| [w; 3]).collect();
    let offsets = tape.gather_rows(table, index)?;
    tape.add(tokens, offsets)
}
