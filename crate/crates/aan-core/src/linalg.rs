//! Minimal dense 3x3 solver for the two least-squares fits in this crate.

/// Solve `a·x = b` by Gaussian elimination with partial pivoting.
///
/// Returns `Err(column)` when a pivot collapses relative to the matrix scale,
/// identifying the structurally unidentifiable unknown.
pub(crate) fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Result<[f64; 3], usize> {
    let mut m = [[0.0f64; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);

    let mut perm = [0usize, 1, 2];
    for col in 0..3 {
        let pivot_row = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot_row][col].abs() < 1e-12 * scale {
            // The eliminated column tells us which unknown is undetermined.
            return Err(perm[col]);
        }
        m.swap(col, pivot_row);
        perm.swap(col, pivot_row);
        for row in (col + 1)..3 {
            let factor = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= factor * m[col][k];
            }
        }
    }

    let mut x = [0.0f64; 3];
    for i in (0..3).rev() {
        let mut acc = m[i][3];
        for k in (i + 1)..3 {
            acc -= m[i][k] * x[k];
        }
        x[i] = acc / m[i][i];
    }
    Ok(x)
}

/// Inverse of a symmetric positive-definite 3x3 matrix via three solves.
pub(crate) fn invert3(a: [[f64; 3]; 3]) -> Result<[[f64; 3]; 3], usize> {
    let mut inv = [[0.0f64; 3]; 3];
    for col in 0..3 {
        let mut e = [0.0f64; 3];
        e[col] = 1.0;
        let x = solve3(a, e)?;
        for row in 0..3 {
            inv[row][col] = x[row];
        }
    }
    Ok(inv)
}
