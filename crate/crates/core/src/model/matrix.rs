use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::rng;

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        check_len("matrix data", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// `A x`
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("A x", self.cols, x.len())?;
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `Aᵀ r`
    pub fn mul_t_vec(&self, r: &[f64]) -> Result<Vec<f64>> {
        check_len("Aᵀ r", self.rows, r.len())?;
        let mut out = vec![0.0; self.cols];
        for (i, &ri) in r.iter().enumerate() {
            if ri == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * ri;
            }
        }
        Ok(out)
    }

    /// Mean over columns of the squared column norm.
    pub fn mean_column_norm_sq(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>() / self.cols as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// i.i.d. N(0, 1/M) measurement matrix, so columns have unit norm on average.
pub fn gen_matrix(m: usize, n: usize, seed: u64) -> Result<Matrix> {
    if m == 0 || n == 0 {
        return Err(Error::invalid(format!("matrix dimensions must be positive, got {m}x{n}")));
    }
    let scale = 1.0 / (m as f64).sqrt();
    let mut rng = rng::rng(seed);
    let data = (0..m * n)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * scale
        })
        .collect();
    Matrix::from_row_major(m, n, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_is_standard_normal_draw() {
        let a = gen_matrix(1, 1, 11).unwrap();
        assert_eq!(a.rows(), 1);
        assert!(a.get(0, 0).is_finite());
        // variance 1/M = 1: the entry is an unscaled standard normal draw
        let mut r = rng::rng(11);
        let g: f64 = StandardNormal.sample(&mut r);
        assert_eq!(a.get(0, 0), g);
    }

    #[test]
    fn column_norms_near_one() {
        for seed in 0..3 {
            let a = gen_matrix(400, 2000, seed).unwrap();
            let m = a.mean_column_norm_sq();
            assert!((0.9..=1.1).contains(&m), "seed {seed}: {m}");
            assert!((m - 1.0).abs() < 10.0 / (400f64).sqrt());
        }
    }

    #[test]
    fn deterministic_under_seed() {
        assert_eq!(gen_matrix(5, 7, 3).unwrap(), gen_matrix(5, 7, 3).unwrap());
        assert_ne!(gen_matrix(5, 7, 3).unwrap(), gen_matrix(5, 7, 4).unwrap());
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(gen_matrix(0, 3, 1), Err(Error::InvalidArgument(_))));
        assert!(gen_matrix(3, 0, 1).is_err());
    }

    #[test]
    fn transpose_product_matches_dense() {
        let a = Matrix::from_row_major(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(a.mul_vec(&[1.0, 0.0, -1.0]).unwrap(), vec![-2.0, -2.0]);
        assert_eq!(a.mul_t_vec(&[1.0, 2.0]).unwrap(), vec![9.0, 12.0, 15.0]);
        assert!(a.mul_vec(&[1.0]).is_err());
    }
}
