//! Multi-head target attention.
//!
//! The target embedding is the query, the behavior history supplies both keys
//! and values. Each head attends over its own slice of the projected width and
//! scores are divided by `sqrt(head_width)`.
//!
//! Keys and values do not depend on the target, so they can be projected once
//! per history ([`project_history`]) and reused across many targets.

use super::matrix::{add_outer, axpy, dot, softmax_in_place, DenseMatrix};
use crate::error::{Error, Result};

/// Projection matrices, each of shape `hidden × d_in`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionParams<'a> {
    pub wq: &'a DenseMatrix,
    pub wk: &'a DenseMatrix,
    pub wv: &'a DenseMatrix,
}

impl AttentionParams<'_> {
    pub fn hidden(&self) -> usize {
        self.wq.rows()
    }

    fn check(&self, d_target: usize, d_history: usize, heads: usize) -> Result<()> {
        let hidden = self.hidden();
        if heads == 0 || !hidden.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "{heads} heads do not divide attention width {hidden}"
            )));
        }
        if self.wq.cols() != d_target {
            return Err(Error::shape(
                "attention W^Q columns",
                d_target,
                self.wq.cols(),
            ));
        }
        for (name, w) in [("W^K", self.wk), ("W^V", self.wv)] {
            if w.rows() != hidden || w.cols() != d_history {
                return Err(Error::shape(
                    format!("attention {name}"),
                    format!("{hidden}x{d_history}"),
                    format!("{}x{}", w.rows(), w.cols()),
                ));
            }
        }
        Ok(())
    }
}

/// Keys and values of one history, `H × hidden` each.
#[derive(Clone, Debug)]
pub struct ProjectedHistory {
    pub keys: DenseMatrix,
    pub values: DenseMatrix,
}

pub fn project_history(history: &DenseMatrix, params: AttentionParams<'_>) -> ProjectedHistory {
    ProjectedHistory {
        keys: params.wk.project_rows(history),
        values: params.wv.project_rows(history),
    }
}

/// Forward state needed by [`attention_backward`].
#[derive(Clone, Debug)]
pub struct AttentionCache {
    pub query: Vec<f64>,
    /// `weights[h][j]`: weight of history row `j` in head `h`.
    pub weights: Vec<Vec<f64>>,
}

/// Attends a target over already projected keys/values.
pub fn attend(
    target: &[f64],
    projected: &ProjectedHistory,
    wq: &DenseMatrix,
    heads: usize,
) -> Result<(Vec<f64>, AttentionCache)> {
    let n = projected.keys.rows();
    if n == 0 {
        return Err(Error::EmptyHistory);
    }
    let hidden = wq.rows();
    let width = hidden / heads;
    let scale = 1.0 / (width as f64).sqrt();
    let query = wq.matvec(target);
    let mut out = vec![0.0; hidden];
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let span = h * width..(h + 1) * width;
        let q = &query[span.clone()];
        let mut w: Vec<f64> = (0..n)
            .map(|j| dot(q, &projected.keys.row(j)[span.clone()]) * scale)
            .collect();
        softmax_in_place(&mut w);
        let o = &mut out[span.clone()];
        for (j, &wj) in w.iter().enumerate() {
            axpy(wj, &projected.values.row(j)[span.clone()], o);
        }
        weights.push(w);
    }
    Ok((out, AttentionCache { query, weights }))
}

/// `concat_h softmax(Q_h K_hᵀ / sqrt(d)) V_h` with `Q = W^Q·target`,
/// `K = W^K·history`, `V = W^V·history`.
pub fn target_attention(
    target: &[f64],
    history: &DenseMatrix,
    params: AttentionParams<'_>,
    heads: usize,
) -> Result<Vec<f64>> {
    if history.rows() == 0 {
        return Err(Error::EmptyHistory);
    }
    params.check(target.len(), history.cols(), heads)?;
    let projected = project_history(history, params);
    Ok(attend(target, &projected, params.wq, heads)?.0)
}

/// Gradient buffers for the three projections (row-major, same shapes).
pub struct AttentionGradBufs<'a> {
    pub wq: &'a mut [f64],
    pub wk: &'a mut [f64],
    pub wv: &'a mut [f64],
}

/// Back-propagates `d_out` through [`attend`] and the history projection.
///
/// Accumulates into `grads` and returns `(d_target, d_history)`.
pub fn attention_backward(
    target: &[f64],
    history: &DenseMatrix,
    params: AttentionParams<'_>,
    projected: &ProjectedHistory,
    cache: &AttentionCache,
    d_out: &[f64],
    heads: usize,
    grads: AttentionGradBufs<'_>,
) -> (Vec<f64>, DenseMatrix) {
    let n = history.rows();
    let hidden = params.hidden();
    let width = hidden / heads;
    let scale = 1.0 / (width as f64).sqrt();

    let mut d_query = vec![0.0; hidden];
    let mut d_keys = DenseMatrix::zeros(n, hidden);
    let mut d_values = DenseMatrix::zeros(n, hidden);
    for h in 0..heads {
        let span = h * width..(h + 1) * width;
        let w = &cache.weights[h];
        let g = &d_out[span.clone()];
        let d_w: Vec<f64> = (0..n)
            .map(|j| dot(g, &projected.values.row(j)[span.clone()]))
            .collect();
        let mean: f64 = w.iter().zip(&d_w).map(|(a, b)| a * b).sum();
        let q = &cache.query[span.clone()];
        for j in 0..n {
            axpy(w[j], g, &mut d_values.row_mut(j)[span.clone()]);
            let d_score = w[j] * (d_w[j] - mean) * scale;
            if d_score != 0.0 {
                axpy(
                    d_score,
                    &projected.keys.row(j)[span.clone()],
                    &mut d_query[span.clone()],
                );
                axpy(d_score, q, &mut d_keys.row_mut(j)[span.clone()]);
            }
        }
    }

    add_outer(grads.wq, &d_query, target);
    let d_target = params.wq.matvec_t(&d_query);

    let mut d_history = DenseMatrix::zeros(n, history.cols());
    for j in 0..n {
        let x = history.row(j);
        add_outer(grads.wk, d_keys.row(j), x);
        add_outer(grads.wv, d_values.row(j), x);
        let dk = params.wk.matvec_t(d_keys.row(j));
        let dv = params.wv.matvec_t(d_values.row(j));
        let dx = d_history.row_mut(j);
        for c in 0..dx.len() {
            dx[c] = dk[c] + dv[c];
        }
    }
    (d_target, d_history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    /// Independent loop-by-loop recomputation, no shared helpers.
    fn naive(
        target: &[f64],
        hist: &DenseMatrix,
        wq: &DenseMatrix,
        wk: &DenseMatrix,
        wv: &DenseMatrix,
        heads: usize,
    ) -> Vec<f64> {
        let hidden = wq.rows();
        let d = hidden / heads;
        let mut q = vec![0.0; hidden];
        for a in 0..hidden {
            for c in 0..target.len() {
                q[a] += wq.get(a, c) * target[c];
            }
        }
        let n = hist.rows();
        let mut k = vec![vec![0.0; hidden]; n];
        let mut v = vec![vec![0.0; hidden]; n];
        for j in 0..n {
            for a in 0..hidden {
                for c in 0..hist.cols() {
                    k[j][a] += wk.get(a, c) * hist.get(j, c);
                    v[j][a] += wv.get(a, c) * hist.get(j, c);
                }
            }
        }
        let mut out = vec![0.0; hidden];
        for h in 0..heads {
            let mut s = vec![0.0; n];
            for j in 0..n {
                for a in h * d..(h + 1) * d {
                    s[j] += q[a] * k[j][a];
                }
                s[j] /= (d as f64).sqrt();
            }
            let m = s.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = s.iter().map(|x| (x - m).exp()).sum();
            for j in 0..n {
                let w = (s[j] - m).exp() / z;
                for a in h * d..(h + 1) * d {
                    out[a] += w * v[j][a];
                }
            }
        }
        out
    }

    #[test]
    fn singleton_history_returns_projected_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (wq, wk, wv) = (
            random_matrix(&mut rng, 8, 4),
            random_matrix(&mut rng, 8, 4),
            random_matrix(&mut rng, 8, 4),
        );
        let hist = random_matrix(&mut rng, 1, 4);
        let target = [0.3, -0.2, 0.9, 0.1];
        let out = target_attention(
            &target,
            &hist,
            AttentionParams {
                wq: &wq,
                wk: &wk,
                wv: &wv,
            },
            2,
        )
        .unwrap();
        assert_eq!(out, wv.matvec(hist.row(0)));
    }

    #[test]
    fn identical_rows_give_projected_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (wq, wk, wv) = (
            random_matrix(&mut rng, 8, 4),
            random_matrix(&mut rng, 8, 4),
            random_matrix(&mut rng, 8, 4),
        );
        let row = vec![0.5, -1.0, 0.25, 2.0];
        let hist = DenseMatrix::from_rows(&[row.clone(), row.clone()]).unwrap();
        let out = target_attention(
            &[1.0, 0.0, 0.0, 1.0],
            &hist,
            AttentionParams {
                wq: &wq,
                wk: &wk,
                wv: &wv,
            },
            2,
        )
        .unwrap();
        for (a, b) in out.iter().zip(wv.matvec(&row)) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn random_instance_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (wq, wk, wv) = (
            random_matrix(&mut rng, 8, 8),
            random_matrix(&mut rng, 8, 8),
            random_matrix(&mut rng, 8, 8),
        );
        let hist = random_matrix(&mut rng, 4, 8);
        let target: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for heads in [1, 2, 4] {
            let out = target_attention(
                &target,
                &hist,
                AttentionParams {
                    wq: &wq,
                    wk: &wk,
                    wv: &wv,
                },
                heads,
            )
            .unwrap();
            let oracle = naive(&target, &hist, &wq, &wk, &wv, heads);
            for (a, b) in out.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-10, "heads={heads}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn empty_history_is_an_error() {
        let w = DenseMatrix::zeros(4, 2);
        let hist = DenseMatrix::zeros(0, 2);
        let r = target_attention(
            &[0.0, 0.0],
            &hist,
            AttentionParams {
                wq: &w,
                wk: &w,
                wv: &w,
            },
            2,
        );
        assert!(matches!(r, Err(Error::EmptyHistory)));
    }

    #[test]
    fn heads_must_divide_width() {
        let w = DenseMatrix::zeros(6, 2);
        let hist = DenseMatrix::zeros(1, 2);
        let r = target_attention(
            &[0.0, 0.0],
            &hist,
            AttentionParams {
                wq: &w,
                wk: &w,
                wv: &w,
            },
            4,
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn zero_padded_width_changes_logits_only_through_scale() {
        // Width 4 with one head versus width 8 whose extra rows are zero:
        // raw dot products coincide, so logits differ by sqrt(8)/sqrt(4).
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (wq4, wk4, wv4) = (
            random_matrix(&mut rng, 4, 3),
            random_matrix(&mut rng, 4, 3),
            random_matrix(&mut rng, 4, 3),
        );
        let pad = |w: &DenseMatrix| {
            let mut m = DenseMatrix::zeros(8, 3);
            m.data_mut()[..12].copy_from_slice(w.data());
            m
        };
        let (wq8, wk8, wv8) = (pad(&wq4), pad(&wk4), pad(&wv4));
        let hist = random_matrix(&mut rng, 3, 3);
        let target = [0.7, -0.4, 1.1];
        let p4 = AttentionParams {
            wq: &wq4,
            wk: &wk4,
            wv: &wv4,
        };
        let p8 = AttentionParams {
            wq: &wq8,
            wk: &wk8,
            wv: &wv8,
        };
        let (_, c4) = attend(&target, &project_history(&hist, p4), &wq4, 1).unwrap();
        let (_, c8) = attend(&target, &project_history(&hist, p8), &wq8, 1).unwrap();
        let logits = |w: &[f64]| -> Vec<f64> { w.iter().map(|x| x.ln() - w[0].ln()).collect() };
        let (l4, l8) = (logits(&c4.weights[0]), logits(&c8.weights[0]));
        let ratio = (4f64).sqrt() / (8f64).sqrt();
        for (a, b) in l4.iter().zip(&l8) {
            assert!((a * ratio - b).abs() < 1e-12, "{a} {b}");
        }
    }
}
