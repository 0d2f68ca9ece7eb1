//! Hierarchical semantic ids by residual quantization.

use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, nearest};
use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;

pub const GSID_LEVELS: usize = 3;
pub const GSID_CODEBOOK_SIZE: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GsidCode {
    pub level1: u8,
    pub level2: u8,
    pub level3: u8,
}

impl GsidCode {
    pub fn new(level1: u8, level2: u8, level3: u8) -> Result<Self> {
        for l in [level1, level2, level3] {
            if l as usize >= GSID_CODEBOOK_SIZE {
                return Err(Error::Config(format!("GSID level value {l} out of range")));
            }
        }
        Ok(GsidCode {
            level1,
            level2,
            level3,
        })
    }

    pub fn levels(&self) -> [u8; 3] {
        [self.level1, self.level2, self.level3]
    }

    pub fn prefix(&self, len: usize) -> Vec<u8> {
        self.levels()[..len.min(GSID_LEVELS)].to_vec()
    }

    /// Number of distinct prefixes of length `level`.
    pub fn space(level: usize) -> u64 {
        (GSID_CODEBOOK_SIZE as u64).pow(level as u32)
    }
}

/// Per-level centroids; level `l` lives in the residual space of level `l - 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebooks {
    pub levels: Vec<DenseMatrix>,
}

#[derive(Clone, Debug)]
pub struct ResidualTraining {
    pub codebooks: Codebooks,
    pub codes: Vec<Vec<usize>>,
    /// Mean residual norm before level 1 and after each level.
    pub mean_norms: Vec<f64>,
    pub final_norms: Vec<f64>,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn mean_norm(m: &DenseMatrix) -> f64 {
    (0..m.rows()).map(|i| norm(m.row(i))).sum::<f64>() / m.rows().max(1) as f64
}

/// Residual k-means with `levels` codebooks of `size` centroids each.
pub fn train_residual_codebooks(
    data: &DenseMatrix,
    levels: usize,
    size: usize,
    seed: u64,
    max_iterations: usize,
) -> Result<ResidualTraining> {
    if data.rows() < size {
        return Err(Error::Config(format!(
            "codebook training needs at least {size} vectors, got {}",
            data.rows()
        )));
    }
    let mut residual = data.clone();
    let mut books = Vec::with_capacity(levels);
    let mut codes = vec![Vec::with_capacity(levels); data.rows()];
    let mut mean_norms = vec![mean_norm(&residual)];
    for level in 0..levels {
        let fit = kmeans(
            &residual,
            size,
            seed.wrapping_add(level as u64 * 0x9e37),
            max_iterations,
        )?;
        for (i, &c) in fit.assignments.iter().enumerate() {
            codes[i].push(c);
            let centroid = fit.centroids.row(c).to_vec();
            for (r, m) in residual.row_mut(i).iter_mut().zip(centroid) {
                *r -= m;
            }
        }
        mean_norms.push(mean_norm(&residual));
        books.push(fit.centroids);
    }
    let final_norms = (0..residual.rows())
        .map(|i| norm(residual.row(i)))
        .collect();
    Ok(ResidualTraining {
        codebooks: Codebooks { levels: books },
        codes,
        mean_norms,
        final_norms,
    })
}

/// Three 128-entry codebooks over text-proxy vectors.
pub fn train_gsid_codebooks(
    text: &DenseMatrix,
    seed: u64,
    max_iterations: usize,
) -> Result<Codebooks> {
    Ok(
        train_residual_codebooks(text, GSID_LEVELS, GSID_CODEBOOK_SIZE, seed, max_iterations)?
            .codebooks,
    )
}

/// Greedy nearest centroid per level; returns codes and the final residual norm.
pub fn quantize(x: &[f64], codebooks: &Codebooks) -> (Vec<usize>, f64) {
    let mut residual = x.to_vec();
    let mut codes = Vec::with_capacity(codebooks.levels.len());
    for book in &codebooks.levels {
        let c = nearest(book, &residual).0;
        for (r, m) in residual.iter_mut().zip(book.row(c)) {
            *r -= m;
        }
        codes.push(c);
    }
    (codes, norm(&residual))
}

pub fn assign_gsid(x: &[f64], codebooks: &Codebooks) -> (GsidCode, f64) {
    let (codes, err) = quantize(x, codebooks);
    let at = |l: usize| codes.get(l).copied().unwrap_or(0) as u8;
    (
        GsidCode {
            level1: at(0),
            level2: at(1),
            level3: at(2),
        },
        err,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random(n: usize, d: usize, seed: u64) -> DenseMatrix {
        let mut rng = seeded(seed);
        let data = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        DenseMatrix::from_vec(n, d, data).unwrap()
    }

    #[test]
    fn code_space_sizes() {
        assert_eq!(GsidCode::space(1), 128);
        assert_eq!(GsidCode::space(2), 16_384);
        assert_eq!(GsidCode::space(3), 2_097_152);
    }

    #[test]
    fn too_few_vectors() {
        assert!(train_gsid_codebooks(&random(127, 4, 1), 0, 100).is_err());
    }

    #[test]
    fn identical_vectors_share_a_code() {
        let data = DenseMatrix::from_rows(&vec![vec![0.5, -1.0, 2.0]; 130]).unwrap();
        let books = train_gsid_codebooks(&data, 4, 100).unwrap();
        let codes: Vec<_> = (0..data.rows())
            .map(|i| assign_gsid(data.row(i), &books).0)
            .collect();
        assert!(codes.iter().all(|c| *c == codes[0]));
        assert_eq!(books.levels.len(), 3);
        assert!(books
            .levels
            .iter()
            .all(|b| b.rows() == 128 && b.is_finite()));
    }

    #[test]
    fn reassignment_reproduces_training() {
        let data = random(400, 6, 2);
        let t = train_residual_codebooks(&data, 3, 16, 5, 100).unwrap();
        for i in 0..data.rows() {
            let (codes, err) = quantize(data.row(i), &t.codebooks);
            assert_eq!(codes, t.codes[i]);
            assert!((err - t.final_norms[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_norm_nonincreasing() {
        for seed in 0..3 {
            let t = train_residual_codebooks(&random(600, 8, seed), 3, 32, seed, 100).unwrap();
            for w in t.mean_norms.windows(2) {
                assert!(w[1] <= w[0], "{:?}", t.mean_norms);
            }
        }
    }

    #[test]
    fn centroid_input_maps_to_that_index() {
        let data = random(300, 4, 3);
        let books = train_gsid_codebooks(&data, 1, 100).unwrap();
        let target = books.levels[0].row(17).to_vec();
        let (code, _) = assign_gsid(&target, &books);
        assert_eq!(code.level1, 17);
    }

    #[test]
    fn equal_vectors_equal_codes() {
        let data = random(200, 4, 6);
        let books = train_gsid_codebooks(&data, 2, 100).unwrap();
        let x = data.row(5).to_vec();
        assert_eq!(assign_gsid(&x, &books), assign_gsid(&x.clone(), &books));
    }

    #[test]
    fn out_of_range_code_rejected() {
        assert!(GsidCode::new(1, 128, 0).is_err());
        assert_eq!(GsidCode::new(1, 2, 3).unwrap().prefix(2), vec![1, 2]);
    }
}
