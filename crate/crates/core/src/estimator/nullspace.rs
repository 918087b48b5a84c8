use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Affine parameterisation `ξ = x0 + Z y` of `{ξ : C ξ = d}`.
#[derive(Debug, Clone)]
pub struct NullSpace {
    pub x0: DVector<f64>,
    /// Orthonormal columns spanning the null space of `C`.
    pub z: DMatrix<f64>,
    pub rank: usize,
}

const RANK_TOL: f64 = 1e-10;

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOL * max).count()
}

/// `x0` is the least-norm solution (zero for homogeneous constraints).
pub fn null_space_basis(rows: &[Vec<f64>], rhs: &[f64], dim: usize) -> Result<NullSpace> {
    if rows.len() != rhs.len() || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidArgument("constraint rows do not match the dimension".into()));
    }
    if rows.is_empty() {
        return Ok(NullSpace {
            x0: DVector::zeros(dim),
            z: DMatrix::identity(dim, dim),
            rank: 0,
        });
    }
    let m = rows.len();
    let c = DMatrix::from_fn(m, dim, |i, j| rows[i][j]);
    let d = DVector::from_column_slice(rhs);
    let rank = numerical_rank(&c);
    let augmented = DMatrix::from_fn(m, dim + 1, |i, j| if j < dim { rows[i][j] } else { rhs[i] });
    let augmented_rank = numerical_rank(&augmented);
    if augmented_rank > rank {
        return Err(Error::InconsistentConstraints { rank, augmented_rank });
    }

    let x0 = if d.iter().all(|v| *v == 0.0) {
        DVector::zeros(dim)
    } else {
        c.clone()
            .svd(true, true)
            .solve(&d, RANK_TOL * c.norm())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
    };

    // eigenvectors of CᵀC for the smallest dim − rank eigenvalues
    let gram = c.transpose() * &c;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let k = dim - rank;
    let mut z = DMatrix::zeros(dim, k);
    for (col, &i) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        // fix the sign so the basis is reproducible
        if let Some(p) = v.iter().position(|x| x.abs() > 1e-12) {
            if v[p] < 0.0 {
                v = -v;
            }
        }
        z.set_column(col, &v);
    }
    Ok(NullSpace { x0, z, rank })
}
