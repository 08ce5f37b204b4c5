//! Uniform rectangular grid, interior-node grid functions and the discrete
//! L2 inner product.
//!
//! Unknowns live on interior nodes only; the homogeneous Dirichlet boundary
//! is implicit (any boundary neighbour reads as zero). Interior nodes are
//! ordered row-major: the second index is the slow one, so node `(i1, i2)`
//! with `1 <= i_a <= N_a - 1` maps to `(i2 - 1) * (N1 - 1) + (i1 - 1)`.

use crate::{Error, Result};

/// Uniform mesh of the rectangle `(0, l1) x (0, l2)` with `N1 x N2` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    l1: f64,
    l2: f64,
    n1: usize,
    n2: usize,
    h1: f64,
    h2: f64,
}

/// Builds the grid; steps are `h_a = l_a / N_a`.
pub fn build_grid(l1: f64, l2: f64, n1: usize, n2: usize) -> Result<Grid> {
    Grid::new(l1, l2, n1, n2)
}

impl Grid {
    pub fn new(l1: f64, l2: f64, n1: usize, n2: usize) -> Result<Self> {
        if !l1.is_finite() || !l2.is_finite() || l1 <= 0.0 || l2 <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "side lengths must be positive, got ({l1}, {l2})"
            )));
        }
        if n1 < 2 || n2 < 2 {
            return Err(Error::InvalidArgument(format!(
                "cell counts must be at least 2, got ({n1}, {n2})"
            )));
        }
        Ok(Grid {
            l1,
            l2,
            n1,
            n2,
            h1: l1 / n1 as f64,
            h2: l2 / n2 as f64,
        })
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    /// Cells along the first axis.
    pub fn n1(&self) -> usize {
        self.n1
    }

    /// Cells along the second axis.
    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn h1(&self) -> f64 {
        self.h1
    }

    pub fn h2(&self) -> f64 {
        self.h2
    }

    /// Cell area `h1 * h2`, the weight of the discrete inner product.
    pub fn cell_area(&self) -> f64 {
        self.h1 * self.h2
    }

    /// Number of interior nodes, `(N1 - 1) * (N2 - 1)`.
    pub fn interior_len(&self) -> usize {
        (self.n1 - 1) * (self.n2 - 1)
    }

    /// Flat index of interior node `(i1, i2)` with `1 <= i_a <= N_a - 1`.
    #[inline]
    pub fn index(&self, i1: usize, i2: usize) -> usize {
        debug_assert!((1..self.n1).contains(&i1));
        debug_assert!((1..self.n2).contains(&i2));
        (i2 - 1) * (self.n1 - 1) + (i1 - 1)
    }

    /// Inverse of [`Grid::index`].
    #[inline]
    pub fn node(&self, idx: usize) -> (usize, usize) {
        let w = self.n1 - 1;
        (idx % w + 1, idx / w + 1)
    }

    /// Physical coordinates `(i1 * h1, i2 * h2)` of an interior node.
    #[inline]
    pub fn position(&self, idx: usize) -> (f64, f64) {
        let (i1, i2) = self.node(idx);
        (i1 as f64 * self.h1, i2 as f64 * self.h2)
    }
}

/// Values of a discrete field on the interior nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: Grid) -> Self {
        GridFunction {
            grid,
            values: vec![0.0; grid.interior_len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.interior_len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} interior values, got {}",
                grid.interior_len(),
                values.len()
            )));
        }
        Ok(GridFunction { grid, values })
    }

    /// Samples the pointwise function `f(x1, x2)` at the interior nodes.
    pub fn sample(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.interior_len())
            .map(|idx| {
                let (x1, x2) = grid.position(idx);
                f(x1, x2)
            })
            .collect();
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &GridFunction) {
        debug_assert_eq!(self.grid, other.grid);
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += c * o;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// Fresh function `a * u + b * w`.
    pub fn lin_comb(a: f64, u: &GridFunction, b: f64, w: &GridFunction) -> Result<GridFunction> {
        if u.grid != w.grid {
            return Err(Error::GridMismatch);
        }
        let values = u
            .values
            .iter()
            .zip(&w.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(GridFunction {
            grid: u.grid,
            values,
        })
    }

    pub fn has_nan(&self) -> bool {
        self.values.iter().any(|v| !v.is_finite())
    }
}

/// Discrete inner product `(u, w) = sum u * w * h1 * h2` over interior nodes.
pub fn inner_product(u: &GridFunction, w: &GridFunction) -> Result<f64> {
    if u.grid != w.grid {
        return Err(Error::GridMismatch);
    }
    let s: f64 = u.values.iter().zip(&w.values).map(|(x, y)| x * y).sum();
    Ok(s * u.grid.cell_area())
}

/// Grid norm `(u, u)^{1/2}`.
pub fn norm(u: &GridFunction) -> f64 {
    inner_product(u, u).expect("same grid").sqrt()
}
