use crate::error::{Error, Result};

/// Tensor grid over a box, enumerated with the last dimension varying
/// fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Vec<f64>>,
}

impl Grid {
    pub fn new(domain: &[[f64; 2]], counts: &[usize]) -> Result<Self> {
        if domain.len() != counts.len() {
            return Err(Error::Config(format!("grid has {} counts for d = {}", counts.len(), domain.len())));
        }
        let axes = domain
            .iter()
            .zip(counts)
            .enumerate()
            .map(|(i, (&[a, b], &n))| {
                if n < 2 {
                    return Err(Error::Config(format!("grid dimension {} needs at least 2 points, got {n}", i + 1)));
                }
                if !(a < b) {
                    return Err(Error::Config(format!("degenerate interval [{a}, {b}] in dimension {}", i + 1)));
                }
                let h = (b - a) / (n - 1) as f64;
                Ok((0..n).map(|j| if j == n - 1 { b } else { a + j as f64 * h }).collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self { axes })
    }

    pub fn d(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn counts(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, mut idx: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.d()];
        for (i, axis) in self.axes.iter().enumerate().rev() {
            w[i] = axis[idx % axis.len()];
            idx /= axis.len();
        }
        w
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_three_by_three() {
        let g = Grid::new(&[[0.0, 1.0], [0.0, 1.0]], &[3, 3]).unwrap();
        assert_eq!(g.len(), 9);
        assert!(g.points().contains(&vec![0.5, 0.5]));
        assert_eq!(g.point(1), vec![0.0, 0.5]);
    }

    #[test]
    fn corners_only() {
        let g = Grid::new(&[[0.0, 1.0], [-1.0, 2.0]], &[2, 2]).unwrap();
        assert_eq!(g.points(), vec![vec![0.0, -1.0], vec![0.0, 2.0], vec![1.0, -1.0], vec![1.0, 2.0]]);
    }

    #[test]
    fn one_dimensional() {
        let g = Grid::new(&[[0.0, 1.0]], &[5]).unwrap();
        assert_eq!(g.points(), vec![vec![0.0], vec![0.25], vec![0.5], vec![0.75], vec![1.0]]);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(Grid::new(&[[1.0, 1.0]], &[3]).is_err());
        assert!(Grid::new(&[[0.0, 1.0]], &[1]).is_err());
    }
}
