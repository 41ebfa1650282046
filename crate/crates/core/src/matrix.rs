use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Dense row-major matrix of `f64`.
///
/// Used for observation histories (T×D), node forecasts (H×D) and clustering
/// inputs (M×(H·D)). Serialises as a nested array of rows.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major storage.
    ///
    /// Panics when `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix storage length mismatch");
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows. Returns `None` for ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    /// Single-column matrix.
    pub fn column(values: &[f64]) -> Self {
        Self::from_vec(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn last_row(&self) -> Option<&[f64]> {
        self.rows.checked_sub(1).map(|i| self.row(i))
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= self.rows, "row range out of bounds");
        Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// The last `n` rows (or all rows when fewer exist).
    pub fn tail(&self, n: usize) -> Self {
        self.slice_rows(self.rows.saturating_sub(n), self.rows)
    }

    /// Appends the rows of `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Self {
        if self.rows == 0 {
            return other.clone();
        }
        if other.rows == 0 {
            return self.clone();
        }
        assert_eq!(self.cols, other.cols, "column count mismatch in vstack");
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Self {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        }
    }

    /// Same storage viewed with a different shape.
    pub fn reshape(self, rows: usize, cols: usize) -> Self {
        Self::from_vec(rows, cols, self.data)
    }

    pub fn column_values(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Mean of all entries, 0 for an empty matrix.
    pub fn mean(&self) -> f64 {
        running_mean(self.data.iter().copied()).unwrap_or(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }
}

/// Incremental mean `m_k = m_{k-1} + (x_k - m_{k-1}) / k`.
///
/// Returns the input bit-for-bit when every value is identical, which the
/// naive sum-then-divide does not.
pub fn running_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut mean = None;
    for (k, x) in values.into_iter().enumerate() {
        mean = Some(match mean {
            None => x,
            Some(m) => m + (x - m) / (k + 1) as f64,
        });
    }
    mean
}

/// Element-wise running mean of equally sized slices.
pub fn running_mean_slices<'a>(slices: impl IntoIterator<Item = &'a [f64]>) -> Option<Vec<f64>> {
    let mut mean: Option<Vec<f64>> = None;
    for (k, s) in slices.into_iter().enumerate() {
        match mean.as_mut() {
            None => mean = Some(s.to_vec()),
            Some(m) => {
                let n = (k + 1) as f64;
                for (mi, &x) in m.iter_mut().zip(s) {
                    *mi += (x - *mi) / n;
                }
            }
        }
    }
    mean
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_nested().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Matrix::from_rows(&rows).ok_or_else(|| D::Error::custom("ragged matrix rows"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vstack_and_tail() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.0, 6.0]]).unwrap();
        let c = a.vstack(&b);
        assert_eq!(c.rows(), 3);
        assert_eq!(c.row(2), &[5.0, 6.0]);
        assert_eq!(c.tail(2).row(0), &[3.0, 4.0]);
        assert_eq!(c.tail(10), c);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_none());
    }

    #[test]
    fn running_mean_is_exact_for_constant_input() {
        let x = 0.1 + 0.2;
        assert_eq!(running_mean(std::iter::repeat_n(x, 1000)), Some(x));
        let rows = vec![[x, 7.25]; 37];
        let m = running_mean_slices(rows.iter().map(|r| r.as_slice())).unwrap();
        assert_eq!(m, vec![x, 7.25]);
    }

    #[test]
    fn json_is_nested_rows() {
        let m = Matrix::from_rows(&[vec![1.5, 2.0], vec![3.0, -4.0]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[1.5,2.0],[3.0,-4.0]]");
        let back: Matrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
