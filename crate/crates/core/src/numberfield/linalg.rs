//! Small dense linear algebra over the rationals.

use num_rational::BigRational;
use num_traits::{One, Zero};

/// Row-major matrix.
pub type Matrix = Vec<Vec<BigRational>>;

/// Rank of a matrix given as a list of rows.
pub fn rank(rows: &Matrix) -> usize {
    let mut m = rows.clone();
    let ncols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..ncols {
        let Some(piv) = (rank..m.len()).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, piv);
        let inv = m[rank][col].recip();
        for r in 0..m.len() {
            if r != rank && !m[r][col].is_zero() {
                let f = &m[r][col] * &inv;
                for c in col..ncols {
                    let t = &f * &m[rank][c];
                    m[r][c] -= t;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Inverse of a square matrix, `None` when singular.
pub fn inverse(a: &Matrix) -> Option<Matrix> {
    let n = a.len();
    let mut m: Matrix = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| {
                if i == j {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        let inv = m[col][col].recip();
        for c in 0..2 * n {
            m[col][c] = &m[col][c] * &inv;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in 0..2 * n {
                    let t = &f * &m[col][c];
                    m[r][c] -= t;
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[n..].to_vec()).collect())
}

pub fn mat_vec(a: &Matrix, v: &[BigRational]) -> Vec<BigRational> {
    a.iter()
        .map(|row| row.iter().zip(v).fold(BigRational::zero(), |acc, (x, y)| acc + x * y))
        .collect()
}

/// Transpose of a list of column vectors into rows.
pub fn columns_to_rows(cols: &[Vec<BigRational>]) -> Matrix {
    let nrows = cols.first().map_or(0, Vec::len);
    (0..nrows)
        .map(|r| cols.iter().map(|c| c[r].clone()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numberfield::poly::rat;

    #[test]
    fn rank_and_inverse() {
        let m = vec![vec![rat(1), rat(2)], vec![rat(2), rat(4)]];
        assert_eq!(rank(&m), 1);
        assert!(inverse(&m).is_none());
        let a = vec![vec![rat(2), rat(1)], vec![rat(1), rat(1)]];
        let inv = inverse(&a).unwrap();
        assert_eq!(inv, vec![vec![rat(1), rat(-1)], vec![rat(-1), rat(2)]]);
        assert_eq!(mat_vec(&inv, &[rat(3), rat(2)]), vec![rat(1), rat(1)]);
    }
}
