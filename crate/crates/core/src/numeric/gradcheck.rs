//! Central finite-difference verification of analytic gradients.

use super::params::{Gradients, ModelParams, ParamKind};
use crate::error::{Error, Result};

/// Embedding tables with more rows than this are only checked on rows that
/// received an analytic gradient (plus the padding row).
pub const FULL_CHECK_MAX_ROWS: usize = 256;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// `(array name, max relative error, entries checked)`
    pub arrays: Vec<(String, f64, usize)>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.arrays.iter().map(|a| a.1).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&(String, f64, usize)> {
        self.arrays.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `loss_fn`'s analytic gradient with `(f(θ+eps) − f(θ−eps)) / 2eps`
/// entry by entry.
pub fn grad_check<F>(loss_fn: F, params: &ModelParams, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&ModelParams) -> Result<(f64, Gradients)>,
{
    let (loss, grads) = loss_fn(params)?;
    let (again, _) = loss_fn(params)?;
    if loss.to_bits() != again.to_bits() {
        return Err(Error::NonDeterministic {
            first: loss,
            second: again,
        });
    }

    let mut work = params.clone();
    let mut arrays = Vec::with_capacity(params.len());
    for id in params.ids() {
        let array = params.array(id);
        let cols = array.value.cols();
        let g = grads.get(id);
        let entries: Vec<usize> =
            if array.kind == ParamKind::Embedding && array.value.rows() > FULL_CHECK_MAX_ROWS {
                let mut rows: Vec<u32> = g.touched_rows().unwrap_or(&[]).to_vec();
                rows.push(0);
                rows.sort_unstable();
                rows.dedup();
                rows.iter()
                    .flat_map(|&r| (r as usize * cols)..(r as usize + 1) * cols)
                    .collect()
            } else {
                (0..array.value.data().len()).collect()
            };

        let mut worst = 0.0f64;
        for &k in &entries {
            let orig = work.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = orig + eps;
            let (plus, _) = loss_fn(&work)?;
            work.get_mut(id).data_mut()[k] = orig - eps;
            let (minus, _) = loss_fn(&work)?;
            work.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(g.data[k], numeric));
        }
        arrays.push((array.name.clone(), worst, entries.len()));
    }
    Ok(GradCheckReport { arrays })
}
