use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::SketchError;
use crate::linalg::Matrix;

/// A `d × r` projection matrix.
#[derive(Clone, Debug)]
pub struct JlProjection {
    matrix: Matrix,
}

impl JlProjection {
    /// Gaussian entries scaled by `1/√r`, so squared norms are preserved in
    /// expectation.
    pub fn gaussian(d: usize, r: usize, seed: u64) -> Result<Self, SketchError> {
        if r == 0 {
            return Err(SketchError::SketchTooSmall { min: 1, got: 0 });
        }
        if r > d {
            return Err(SketchError::TargetTooLarge { r, d });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (r as f64).sqrt();
        let data = (0..d * r)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self {
            matrix: Matrix::from_vec(d, r, data).expect("shape"),
        })
    }

    /// Identity embedding, for tests.
    pub fn identity(d: usize) -> Self {
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            m.set(i, i, 1.0);
        }
        Self { matrix: m }
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn target_dim(&self) -> usize {
        self.matrix.cols()
    }

    /// `M R`; panics if `M` has the wrong column count.
    pub fn project(&self, m: &Matrix) -> Matrix {
        m.matmul(&self.matrix)
    }
}

/// Projects the rows of `m` to `r` dimensions with a seeded Gaussian map.
pub fn jl_project(m: &Matrix, r: usize, seed: u64) -> Result<Matrix, SketchError> {
    Ok(JlProjection::gaussian(m.cols(), r, seed)?.project(m))
}

/// Target dimension `⌈ε⁻² ln K⌉` (at least 1).
pub fn jl_dim_for(epsilon: f64, num_tasks: usize) -> usize {
    ((num_tasks.max(2) as f64).ln() / (epsilon * epsilon)).ceil().max(1.0) as usize
}
