// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::{Error, Matrix, Result, Vector};

/// Marker states split into centroid and centered shape.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationFrameCloud {
    pub positions: Vec<usize>,
    pub states: Matrix,
    pub centroid: Vector,
    pub centered: Matrix,
}

pub fn decompose_frame(positions: Vec<usize>, states: Matrix) -> Result<RelationFrameCloud> {
    let m = states.nrows();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("frame needs at least 2 rows, got {m}")));
    }
    if positions.len() != m {
        return Err(Error::Dimension(format!(
            "{} positions for {m} state rows",
            positions.len()
        )));
    }
    let centroid = states.row_mean().transpose();
    let centered = broadcast_sub(&states, &centroid);
    Ok(RelationFrameCloud {
        positions,
        states,
        centroid,
        centered,
    })
}

/// `m - μ` row by row.
pub fn broadcast_sub(m: &Matrix, mu: &Vector) -> Matrix {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        row -= mu.transpose();
    }
    out
}

/// `m + μ` row by row.
pub fn broadcast_add(m: &Matrix, mu: &Vector) -> Matrix {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        row += mu.transpose();
    }
    out
}

impl RelationFrameCloud {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded};

    #[test]
    fn small_examples() {
        let f = decompose_frame(vec![0, 1], Matrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 0.0])).unwrap();
        assert_eq!(f.centroid.as_slice(), &[1.0, 0.0]);
        assert_eq!(f.centered, Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, 0.0]));
        let same = decompose_frame(vec![0, 1], Matrix::from_row_slice(2, 2, &[3.0, 4.0, 3.0, 4.0])).unwrap();
        assert!(same.centered.iter().all(|&v| v == 0.0));
        assert!(decompose_frame(vec![0], Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn reconstruction() {
        let s = gaussian_matrix(&mut seeded(1, 0), 8, 16);
        let f = decompose_frame((0..8).collect(), s.clone()).unwrap();
        assert!((broadcast_add(&f.centered, &f.centroid) - s).abs().max() < 1e-10);
        assert!(crate::geometry::max_column_mean(&f.centered) < 1e-12);
    }
}
