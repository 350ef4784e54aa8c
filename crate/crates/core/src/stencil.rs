//! Constant-coefficient Laplacian operators on structured grids.
//!
//! Unknowns are cell values ordered with x fastest. Neighbors outside the
//! grid are dropped from the row (homogeneous Dirichlet), which keeps the
//! matrices symmetric positive definite without any scaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StencilSpec {
    pub dim: usize,
    pub points: usize,
    pub grid: Vec<usize>,
}

impl StencilSpec {
    pub fn new(dim: usize, points: usize, grid: &[usize]) -> Result<StencilSpec> {
        let spec = StencilSpec {
            dim,
            points,
            grid: grid.to_vec(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Square or cubic grid with `n` cells per dimension.
    pub fn uniform(dim: usize, points: usize, n: usize) -> Result<StencilSpec> {
        StencilSpec::new(dim, points, &vec![n; dim])
    }

    pub fn validate(&self) -> Result<()> {
        let ok_points = matches!((self.dim, self.points), (2, 5) | (2, 9) | (3, 7) | (3, 27));
        if !ok_points {
            return Err(Error::InvalidStencil(format!(
                "{}-point stencil in {} dimensions",
                self.points, self.dim
            )));
        }
        if self.grid.len() != self.dim {
            return Err(Error::InvalidStencil(format!(
                "grid has {} extents for dimension {}",
                self.grid.len(),
                self.dim
            )));
        }
        if let Some(n) = self.grid.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidStencil(format!("grid extent {n} is below 2")));
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.grid.iter().product()
    }

    /// True for the 9- and 27-point stencils, which couple diagonal neighbors.
    pub fn is_box(&self) -> bool {
        matches!(self.points, 9 | 27)
    }

    /// Grid extents as text, e.g. `16x16`.
    pub fn grid_label(&self) -> String {
        self.grid
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("x")
    }

    /// Closed-form nonzero count.
    pub fn nnz(&self) -> usize {
        if self.is_box() {
            self.grid.iter().map(|&n| 3 * n - 2).product()
        } else {
            let cells = self.dof();
            let cut: usize = (0..self.dim)
                .map(|i| {
                    self.grid
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, &n)| n)
                        .product::<usize>()
                })
                .sum();
            (2 * self.dim + 1) * cells - 2 * cut
        }
    }
}

/// Weights by neighbor class. In two dimensions diagonal neighbors use
/// `corner`; `edge` is only used in three dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StencilCoefficients {
    pub center: f64,
    pub face: f64,
    pub edge: f64,
    pub corner: f64,
}

pub fn stencil_coefficients(dim: usize, points: usize) -> Result<StencilCoefficients> {
    let c = |center, face, edge, corner| StencilCoefficients {
        center,
        face,
        edge,
        corner,
    };
    match (dim, points) {
        (2, 5) => Ok(c(4.0, -1.0, 0.0, 0.0)),
        (2, 9) => Ok(c(20.0, -4.0, 0.0, -1.0)),
        (3, 7) => Ok(c(6.0, -1.0, 0.0, 0.0)),
        (3, 27) => Ok(c(128.0, -14.0, -3.0, -1.0)),
        _ => Err(Error::InvalidStencil(format!(
            "{points}-point stencil in {dim} dimensions"
        ))),
    }
}

impl StencilCoefficients {
    /// Weight of a neighbor with `k` nonzero offsets in `dim` dimensions.
    fn weight(&self, dim: usize, k: usize) -> f64 {
        match (dim, k) {
            (_, 0) => self.center,
            (_, 1) => self.face,
            (2, 2) | (3, 3) => self.corner,
            (3, 2) => self.edge,
            _ => 0.0,
        }
    }
}

/// Laplacian matrix and its diagonal.
pub fn build_laplacian(spec: &StencilSpec) -> Result<(CsrMatrix, Vec<f64>)> {
    spec.validate()?;
    let coef = stencil_coefficients(spec.dim, spec.points)?;
    let mut g = spec.grid.clone();
    g.resize(3, 1);
    let (nx, ny, nz) = (g[0], g[1], g[2]);
    let zr: &[i64] = if spec.dim == 3 { &[-1, 0, 1] } else { &[0] };
    let n = spec.dof();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(spec.nnz());
    let mut vals = Vec::with_capacity(spec.nnz());
    row_offsets.push(0);
    for k in 0..nz as i64 {
        for j in 0..ny as i64 {
            for i in 0..nx as i64 {
                for &dz in zr {
                    for dy in [-1i64, 0, 1] {
                        for dx in [-1i64, 0, 1] {
                            let nonzero = [dx, dy, dz].iter().filter(|&&d| d != 0).count();
                            let w = coef.weight(spec.dim, nonzero);
                            if w == 0.0 {
                                continue;
                            }
                            let (x, y, z) = (i + dx, j + dy, k + dz);
                            if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
                                continue;
                            }
                            cols.push((x + nx as i64 * (y + ny as i64 * z)) as usize);
                            vals.push(w);
                        }
                    }
                }
                row_offsets.push(cols.len());
            }
        }
    }
    let a = CsrMatrix::new(n, n, row_offsets, cols, vals)?;
    let diag = vec![coef.center; n];
    Ok((a, diag))
}
