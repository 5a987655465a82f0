use crate::distance::squared_l2;
use crate::error::{Error, Result};

/// `n` points of dimension `d`, stored row-major. Row `i` is point id `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    dim: usize,
    data: Vec<f32>,
}

impl Dataset {
    /// Wraps a row-major buffer. Requires `n >= 1`, `d >= 1` and finite values.
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("dimension must be at least 1"));
        }
        if data.is_empty() {
            return Err(Error::arg("dataset must contain at least one point"));
        }
        if data.len() % dim != 0 {
            return Err(Error::arg(format!(
                "buffer of {} floats is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::arg(format!(
                "non-finite value in row {} column {}",
                pos / dim,
                pos % dim
            )));
        }
        if data.len() / dim > u32::MAX as usize {
            return Err(Error::arg("more than 2^32 points"));
        }
        Ok(Dataset {
            n: data.len() / dim,
            dim,
            data,
        })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Dataset::new(dim, data)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, id: u32) -> &[f32] {
        let start = id as usize * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// Squared distance between two stored points.
    #[inline]
    pub fn dist(&self, a: u32, b: u32) -> f32 {
        squared_l2(self.row(a), self.row(b))
    }

    /// Squared distance from an external query to a stored point.
    #[inline]
    pub fn dist_to(&self, query: &[f32], id: u32) -> f32 {
        squared_l2(query, self.row(id))
    }

    /// Coordinate-wise mean, accumulated in `f64`.
    pub fn centroid(&self) -> Vec<f32> {
        let mut acc = vec![0f64; self.dim];
        for row in self.rows() {
            for (a, x) in acc.iter_mut().zip(row) {
                *a += *x as f64;
            }
        }
        acc.iter().map(|a| (a / self.n as f64) as f32).collect()
    }

    /// Copies the given rows into a new dataset; local id `i` is `ids[i]`.
    pub fn select(&self, ids: &[u32]) -> Result<Dataset> {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            if id as usize >= self.n {
                return Err(Error::arg(format!(
                    "id {id} out of range for n = {}",
                    self.n
                )));
            }
            data.extend_from_slice(self.row(id));
        }
        Dataset::new(self.dim, data)
    }

    pub(crate) fn check_query(&self, query: &[f32]) -> Result<()> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        Ok(())
    }
}
