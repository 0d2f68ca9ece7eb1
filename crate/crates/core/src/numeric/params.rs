//! Named parameter arrays and their gradients.

use std::collections::HashMap;

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Dense,
    /// Lookup table; row 0 is the frozen padding row.
    Embedding,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamArray {
    pub name: String,
    pub kind: ParamKind,
    pub value: DenseMatrix,
}

/// Ordered collection of named arrays. Order is insertion order and is part
/// of the checkpoint format.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    arrays: Vec<ParamArray>,
    index: HashMap<String, usize>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        kind: ParamKind,
        value: DenseMatrix,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        let id = self.arrays.len();
        self.index.insert(name.clone(), id);
        self.arrays.push(ParamArray { name, kind, value });
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &DenseMatrix {
        &self.arrays[id.0].value
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut DenseMatrix {
        &mut self.arrays[id.0].value
    }

    pub fn array(&self, id: ParamId) -> &ParamArray {
        &self.arrays[id.0]
    }

    pub fn arrays(&self) -> &[ParamArray] {
        &self.arrays
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.arrays.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.arrays.iter().map(|a| a.value.data().len()).sum()
    }

    /// Embedding row lookup with vocabulary check.
    #[inline]
    pub fn lookup(&self, id: ParamId, row: u32) -> Result<&[f64]> {
        let a = &self.arrays[id.0];
        let row = row as usize;
        if row >= a.value.rows() {
            return Err(Error::OutOfVocab {
                table: a.name.clone(),
                id: row,
                vocab: a.value.rows(),
            });
        }
        Ok(a.value.row(row))
    }
}

/// Gradient buffer for one array. Embedding buffers track which rows were written.
#[derive(Clone, Debug)]
pub struct GradArray {
    pub data: Vec<f64>,
    cols: usize,
    touched: Option<RowSet>,
}

#[derive(Clone, Debug)]
struct RowSet {
    mark: Vec<bool>,
    rows: Vec<u32>,
}

impl GradArray {
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Rows written since the last reset, in first-touch order. `None` for dense arrays.
    pub fn touched_rows(&self) -> Option<&[u32]> {
        self.touched.as_ref().map(|t| t.rows.as_slice())
    }

    #[inline]
    pub fn row_mut(&mut self, row: u32) -> &mut [f64] {
        if let Some(t) = self.touched.as_mut() {
            if !t.mark[row as usize] {
                t.mark[row as usize] = true;
                t.rows.push(row);
            }
        }
        let r = row as usize;
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row(&self, row: u32) -> &[f64] {
        let r = row as usize;
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn reset(&mut self) {
        match self.touched.as_mut() {
            Some(t) => {
                for &r in &t.rows {
                    let r = r as usize;
                    self.data[r * self.cols..(r + 1) * self.cols].fill(0.0);
                    t.mark[r] = false;
                }
                t.rows.clear();
            }
            None => self.data.fill(0.0),
        }
    }

    fn scale(&mut self, s: f64) {
        match self.touched.as_ref() {
            Some(t) => {
                for &r in &t.rows {
                    let r = r as usize;
                    for v in &mut self.data[r * self.cols..(r + 1) * self.cols] {
                        *v *= s;
                    }
                }
            }
            None => self.data.iter_mut().for_each(|v| *v *= s),
        }
    }
}

/// Gradients aligned with a [`ModelParams`].
#[derive(Clone, Debug)]
pub struct Gradients {
    arrays: Vec<GradArray>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let arrays = params
            .arrays
            .iter()
            .map(|a| GradArray {
                data: vec![0.0; a.value.data().len()],
                cols: a.value.cols(),
                touched: (a.kind == ParamKind::Embedding).then(|| RowSet {
                    mark: vec![false; a.value.rows()],
                    rows: Vec::new(),
                }),
            })
            .collect();
        Self { arrays }
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &GradArray {
        &self.arrays[id.0]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut GradArray {
        &mut self.arrays[id.0]
    }

    /// Mutable access to several distinct dense buffers at once.
    pub fn many_mut<const N: usize>(&mut self, ids: [ParamId; N]) -> [&mut [f64]; N] {
        let mut slots: Vec<Option<&mut [f64]>> = self
            .arrays
            .iter_mut()
            .map(|a| Some(a.data.as_mut_slice()))
            .collect();
        ids.map(|id| slots[id.0].take().expect("many_mut requires distinct ids"))
    }

    /// Like [`Gradients::many_mut`] for a runtime-sized id list.
    pub fn many_mut_vec(&mut self, ids: &[ParamId]) -> Vec<&mut [f64]> {
        let mut slots: Vec<Option<&mut [f64]>> = self
            .arrays
            .iter_mut()
            .map(|a| Some(a.data.as_mut_slice()))
            .collect();
        ids.iter()
            .map(|id| {
                slots[id.0]
                    .take()
                    .expect("many_mut_vec requires distinct ids")
            })
            .collect()
    }

    pub fn arrays(&self) -> &[GradArray] {
        &self.arrays
    }

    pub fn reset(&mut self) {
        self.arrays.iter_mut().for_each(GradArray::reset);
    }

    pub fn scale(&mut self, s: f64) {
        self.arrays.iter_mut().for_each(|a| a.scale(s));
    }

    pub fn is_finite(&self) -> bool {
        self.arrays
            .iter()
            .all(|a| a.data.iter().all(|v| v.is_finite()))
    }
}
