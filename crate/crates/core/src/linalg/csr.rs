use std::sync::{Arc, Weak};

use parking_lot::Mutex;

use crate::deptrack::Tracked;
use crate::error::{Error, Result};
use crate::ids::ObjectId;
use crate::runtime::Core;

pub(crate) struct CsrData {
    pub(crate) n_rows: usize,
    pub(crate) n_cols: usize,
    pub(crate) row_offsets: Vec<usize>,
    pub(crate) col_indices: Vec<usize>,
    pub(crate) values: Vec<f64>,
}

impl CsrData {
    pub(crate) fn spmv(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut sum = 0.0;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                sum += self.values[k] * x[self.col_indices[k]];
            }
            *yi = sum;
        }
    }
}

/// Immutable compressed-sparse-row matrix.
///
/// The matrix is not tied to a runtime; it is registered with a runtime's
/// tracker the first time an operation on that runtime uses it.
#[derive(Clone)]
pub struct CsrMatrix {
    pub(crate) data: Arc<CsrData>,
    id: ObjectId,
    registered: Arc<Mutex<Vec<Weak<Core>>>>,
}

impl std::fmt::Debug for CsrMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CsrMatrix")
            .field("id", &self.id)
            .field("n_rows", &self.n_rows())
            .field("n_cols", &self.n_cols())
            .field("nnz", &self.nnz())
            .finish()
    }
}

impl PartialEq for CsrMatrix {
    fn eq(&self, other: &Self) -> bool {
        let (a, b) = (&self.data, &other.data);
        a.n_rows == b.n_rows
            && a.n_cols == b.n_cols
            && a.row_offsets == b.row_offsets
            && a.col_indices == b.col_indices
            && a.values == b.values
    }
}

impl CsrMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<CsrMatrix> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::MalformedCsr(format!(
                "row_offsets has {} entries, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if row_offsets[0] != 0 {
            return Err(Error::MalformedCsr("row_offsets[0] must be 0".into()));
        }
        if col_indices.len() != values.len() {
            return Err(Error::MalformedCsr(format!(
                "{} column indices but {} values",
                col_indices.len(),
                values.len()
            )));
        }
        if row_offsets[n_rows] != values.len() {
            return Err(Error::MalformedCsr(format!(
                "row_offsets ends at {}, nnz is {}",
                row_offsets[n_rows],
                values.len()
            )));
        }
        for i in 0..n_rows {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if lo > hi {
                return Err(Error::MalformedCsr(format!("row_offsets decreases at row {i}")));
            }
            let row = &col_indices[lo..hi];
            if let Some(&c) = row.iter().find(|&&c| c >= n_cols) {
                return Err(Error::MalformedCsr(format!(
                    "column {c} out of range in row {i}"
                )));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::MalformedCsr(format!(
                    "columns not strictly increasing in row {i}"
                )));
            }
        }
        Ok(CsrMatrix {
            data: Arc::new(CsrData {
                n_rows,
                n_cols,
                row_offsets,
                col_indices,
                values,
            }),
            id: ObjectId::next(),
            registered: Arc::new(Mutex::new(Vec::new())),
        })
    }

    /// Builds from (row, col, value) triplets. Duplicates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<CsrMatrix> {
        let mut sorted = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= n_rows || c >= n_cols {
                return Err(Error::MalformedCsr(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
        }
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_offsets = vec![0; n_rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((r, c));
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        CsrMatrix::new(n_rows, n_cols, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix::new(n, n, (0..=n).collect(), (0..n).collect(), vec![1.0; n])
            .expect("identity is well formed")
    }

    pub fn id(&self) -> ObjectId {
        self.id
    }

    pub fn n_rows(&self) -> usize {
        self.data.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.data.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.data.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.data.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.data.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.data.values
    }

    /// Entries of row `i` as (column, value) pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let d = &self.data;
        let r = d.row_offsets[i]..d.row_offsets[i + 1];
        d.col_indices[r.clone()]
            .iter()
            .copied()
            .zip(d.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows().min(self.n_cols()))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols()]; self.n_rows()];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows() {
            t.extend(self.row(i).map(|(j, v)| (j, i, v)));
        }
        CsrMatrix::from_triplets(self.n_cols(), self.n_rows(), &t).expect("transpose is well formed")
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.n_rows() == self.n_cols() && *self == self.transpose()
    }

    /// Host-side product, no tracking.
    pub fn multiply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols() {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} columns, vector has {} entries",
                self.n_cols(),
                x.len()
            )));
        }
        let mut y = vec![0.0; self.n_rows()];
        self.data.spmv(x, &mut y);
        Ok(y)
    }

    pub(crate) fn ensure_registered(&self, core: &Arc<Core>) {
        let mut reg = self.registered.lock();
        reg.retain(|w| w.strong_count() > 0);
        if !reg.iter().any(|w| w.as_ptr() == Arc::as_ptr(core)) {
            core.tracker.register_object(self.id);
            reg.push(Arc::downgrade(core));
        }
    }
}

impl Tracked for CsrMatrix {
    fn object_id(&self) -> ObjectId {
        self.id
    }
}

impl Drop for CsrMatrix {
    fn drop(&mut self) {
        if Arc::strong_count(&self.registered) == 1 {
            for core in self.registered.lock().iter().filter_map(Weak::upgrade) {
                core.tracker.unregister_later(self.id);
            }
        }
    }
}
