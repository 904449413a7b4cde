//! Training data with the hurdle classification of each response.

use crate::error::{HobzError, Result};

/// Which part of the sequential hurdle a response falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    /// `y == 1`
    One,
    /// `y == 0`
    Zero,
    /// `0 < y < 1`
    Interior,
}

impl Category {
    /// Exact comparison against the boundaries, no tolerance.
    pub fn of(y: f64) -> Category {
        if y == 1.0 {
            Category::One
        } else if y == 0.0 {
            Category::Zero
        } else {
            Category::Interior
        }
    }
}

/// Row-major covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(HobzError::validation(format!(
                "matrix of {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(HobzError::validation(format!(
                "covariate at row {}, column {} is not finite",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Matrix { data, rows, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(HobzError::validation(format!(
                "row {bad} has {} columns, expected {cols}",
                rows[bad].len()
            )));
        }
        Matrix::new(rows.concat(), rows.len(), cols)
    }

    pub fn empty(cols: usize) -> Self {
        Matrix {
            data: Vec::new(),
            rows: 0,
            cols,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.get(i, j))
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            data,
            rows: idx.len(),
            cols: self.cols,
        }
    }
}

/// Covariates plus a response on `[0, 1]` and its derived hurdle masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Vec<f64>,
    category: Vec<Category>,
    log_y: Vec<f64>,
    log1m_y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(HobzError::validation(format!(
                "{} covariate rows but {} responses",
                x.rows(),
                y.len()
            )));
        }
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(HobzError::validation(format!(
                    "response at row {i} is {v}, outside [0, 1]"
                )));
            }
        }
        let category = y.iter().map(|&v| Category::of(v)).collect::<Vec<_>>();
        let (log_y, log1m_y) = y
            .iter()
            .zip(&category)
            .map(|(&v, c)| match c {
                Category::Interior => (v.ln(), (-v).ln_1p()),
                _ => (0.0, 0.0),
            })
            .unzip();
        Ok(Dataset {
            x,
            y,
            category,
            log_y,
            log1m_y,
        })
    }

    pub fn empty(cols: usize) -> Self {
        Dataset::new(Matrix::empty(cols), Vec::new()).expect("empty dataset is valid")
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.y.len()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    #[inline]
    pub fn category(&self, i: usize) -> Category {
        self.category[i]
    }

    pub fn categories(&self) -> &[Category] {
        &self.category
    }

    /// `delta1`: response equals one.
    #[inline]
    pub fn is_one(&self, i: usize) -> bool {
        self.category[i] == Category::One
    }

    /// `delta0`: response equals zero. Only meaningful for rows below one.
    #[inline]
    pub fn is_zero(&self, i: usize) -> bool {
        self.category[i] == Category::Zero
    }

    #[inline]
    pub fn is_interior(&self, i: usize) -> bool {
        self.category[i] == Category::Interior
    }

    /// `ln y` for interior rows, 0 elsewhere.
    #[inline]
    pub fn log_y(&self, i: usize) -> f64 {
        self.log_y[i]
    }

    /// `ln(1 - y)` for interior rows, 0 elsewhere.
    #[inline]
    pub fn log1m_y(&self, i: usize) -> f64 {
        self.log1m_y[i]
    }

    pub fn count(&self, cat: Category) -> usize {
        self.category.iter().filter(|&&c| c == cat).count()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let y = idx.iter().map(|&i| self.y[i]).collect();
        Dataset::new(self.x.select_rows(idx), y).expect("subset of a valid dataset is valid")
    }

    /// Same covariates, new response vector.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.x.clone(), y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_from_exact_comparison() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let d = Dataset::new(x, vec![0.0, 0.5, 1.0, 1.0 - 1e-16]).unwrap();
        assert_eq!(
            d.categories(),
            &[
                Category::Zero,
                Category::Interior,
                Category::One,
                Category::Interior
            ]
        );
        assert!(d.log_y(1) < 0.0);
    }

    #[test]
    fn rejects_out_of_range() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let err = Dataset::new(x.clone(), vec![0.2, 1.0000001]).unwrap_err();
        assert!(err.to_string().contains("row 1"));
        assert!(Dataset::new(x, vec![f64::NAN, 0.5]).is_err());
    }
}
