//! Matrix-valued bandlimited fields on the circle.
//!
//! A `MatrixField` is an `r×c` matrix of scalar trigonometric polynomials,
//! the carrier for composed projections `P_T∘u`, rotation gauges, potentials
//! `Ω₀`, `Ω₁` and correctors `ℰ`. Multiplier operators act entrywise;
//! products go through the same alias-free padded grids as scalar fields.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::spectral::{GridField, SpectralField, TWO_PI};

#[derive(Debug, Clone)]
pub struct MatrixField {
    pub rows: usize,
    pub cols: usize,
    /// Entry `(i,j)` is the 1-component field at `entries[i*cols + j]`.
    entries: Vec<SpectralField>,
}

impl MatrixField {
    pub fn zeros(rows: usize, cols: usize, n_band: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![SpectralField::zeros(1, n_band); rows * cols],
        }
    }

    pub fn identity(m: usize) -> Self {
        let mut f = Self::zeros(m, m, 0);
        for i in 0..m {
            f.entries[i * m + i] =
                SpectralField::from_real_modes(1, 0, |_, _| (1.0, 0.0));
        }
        f
    }

    pub fn constant(mat: &DMatrix<f64>) -> Self {
        let mut f = Self::zeros(mat.nrows(), mat.ncols(), 0);
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                f.entries[i * mat.ncols() + j] =
                    SpectralField::from_real_modes(1, 0, |_, _| (mat[(i, j)], 0.0));
            }
        }
        f
    }

    pub fn from_entries(rows: usize, cols: usize, entries: Vec<SpectralField>) -> Self {
        assert_eq!(entries.len(), rows * cols);
        assert!(entries.iter().all(|e| e.components() == 1));
        Self { rows, cols, entries }
    }

    /// Analyzes per-node matrices sampled on the uniform grid.
    pub fn from_grid_mats(mats: &[DMatrix<f64>], n_band: usize) -> Self {
        let nodes = mats.len();
        let (rows, cols) = (mats[0].nrows(), mats[0].ncols());
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let values: Vec<f64> = (0..nodes).map(|k| mats[k][(i, j)]).collect();
                entries.push(SpectralField::analyze(
                    &GridField { m: 1, nodes, values },
                    n_band,
                ));
            }
        }
        Self { rows, cols, entries }
    }

    /// Builds from a pointwise matrix rule `θ ↦ A(θ)`.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        n_band: usize,
        nodes: usize,
        f: impl Fn(f64) -> DMatrix<f64>,
    ) -> Self {
        let mats: Vec<DMatrix<f64>> =
            (0..nodes).map(|k| f(TWO_PI * k as f64 / nodes as f64)).collect();
        assert!(mats.iter().all(|m| m.nrows() == rows && m.ncols() == cols));
        Self::from_grid_mats(&mats, n_band)
    }

    pub fn entry(&self, i: usize, j: usize) -> &SpectralField {
        &self.entries[i * self.cols + j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut SpectralField {
        &mut self.entries[i * self.cols + j]
    }

    pub fn bandwidth(&self) -> usize {
        self.entries.iter().map(|e| e.bandwidth()).max().unwrap_or(0)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows, 0);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.entries[j * self.rows + i] = self.entry(i, j).clone();
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|e| e.scale(s))
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a.sub(b))
    }

    fn map(&self, op: impl Fn(&SpectralField) -> SpectralField) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(op).collect(),
        }
    }

    fn zip(&self, other: &Self, op: impl Fn(&SpectralField, &SpectralField) -> SpectralField) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| op(a, b))
                .collect(),
        }
    }

    /// Entrywise multiplier application (infallible symbols only).
    pub fn apply(&self, sigma: &crate::spectral::MultiplierSymbol) -> Self {
        self.map(|e| e.apply_multiplier(sigma).expect("entrywise multiplier"))
    }

    pub fn frac_laplacian(&self, s: f64) -> Self {
        self.map(|e| e.frac_laplacian(s))
    }

    pub fn riesz(&self) -> Self {
        self.map(|e| e.riesz())
    }

    pub fn derivative(&self) -> Self {
        self.map(|e| e.derivative())
    }

    pub fn inv_frac_zero_mean(&self, alpha: f64) -> Self {
        self.map(|e| e.inv_frac_zero_mean(alpha))
    }

    pub fn drop_mean(&self) -> Self {
        self.map(|e| e.drop_mean())
    }

    /// The constant part `(1/2π)∫A dθ` as a plain matrix.
    pub fn mean_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).coeff(0, 0).re)
    }

    /// Frobenius `L²` norm `(∫‖A(θ)‖_F² dθ)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.l2_norm_sq()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        let nodes = (4 * self.bandwidth() + 1).max(64);
        let mats = self.eval_nodes(nodes);
        mats.iter().map(|a| a.amax()).fold(0.0, f64::max)
    }

    /// Per-node matrices on the uniform grid (real parts; fields are real).
    pub fn eval_nodes(&self, nodes: usize) -> Vec<DMatrix<f64>> {
        let mut grids = Vec::with_capacity(self.rows * self.cols);
        for e in &self.entries {
            grids.push(e.synthesize(nodes));
        }
        (0..nodes)
            .map(|k| {
                DMatrix::from_fn(self.rows, self.cols, |i, j| {
                    grids[i * self.cols + j].value(0, k)
                })
            })
            .collect()
    }

    /// Max over a padded grid of `‖A + Aᵀ‖` — antisymmetry defect.
    pub fn antisymmetry_defect(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let nodes = (4 * self.bandwidth() + 1).max(33);
        self.eval_nodes(nodes)
            .iter()
            .map(|a| (a + a.transpose()).amax())
            .fold(0.0, f64::max)
    }
}

/// Alias-free matrix × vector-field product `A·f`.
pub fn mat_vec(a: &MatrixField, f: &SpectralField) -> SpectralField {
    assert_eq!(
        a.cols,
        f.components(),
        "mat_vec: {}×{} times {}-component field",
        a.rows,
        a.cols,
        f.components()
    );
    let n_out = a.bandwidth() + f.bandwidth();
    let nodes = 2 * n_out + 1;
    let mats = a.eval_nodes(nodes);
    let vals = f.synthesize_complex(nodes);
    let mut prod = vec![Complex64::ZERO; a.rows * nodes];
    for k in 0..nodes {
        for i in 0..a.rows {
            let mut acc = Complex64::ZERO;
            for j in 0..a.cols {
                acc += mats[k][(i, j)] * vals[j * nodes + k];
            }
            prod[i * nodes + k] = acc;
        }
    }
    SpectralField::analyze_complex(a.rows, nodes, &prod, n_out)
}

/// Alias-free matrix × matrix product `A·B`.
pub fn mat_mat(a: &MatrixField, b: &MatrixField) -> MatrixField {
    assert_eq!(a.cols, b.rows);
    let n_out = a.bandwidth() + b.bandwidth();
    let nodes = 2 * n_out + 1;
    let ma = a.eval_nodes(nodes);
    let mb = b.eval_nodes(nodes);
    let mats: Vec<DMatrix<f64>> = (0..nodes).map(|k| &ma[k] * &mb[k]).collect();
    MatrixField::from_grid_mats(&mats, n_out)
}

/// Stacks vector fields vertically into one field (block components).
pub fn stack(parts: &[&SpectralField]) -> SpectralField {
    let n = parts.iter().map(|p| p.bandwidth()).max().unwrap();
    let m: usize = parts.iter().map(|p| p.components()).sum();
    let mut out = SpectralField::zeros(m, n);
    let mut row = 0;
    for p in parts {
        for j in 0..p.components() {
            for k in -(p.bandwidth() as i64)..=(p.bandwidth() as i64) {
                out.set_coeff(row, k, p.coeff(j, k));
            }
            row += 1;
        }
    }
    out
}

/// Extracts component range `[lo, hi)` as its own field.
pub fn slice(f: &SpectralField, lo: usize, hi: usize) -> SpectralField {
    let mut out = SpectralField::zeros(hi - lo, f.bandwidth());
    for j in lo..hi {
        for k in -(f.bandwidth() as i64)..=(f.bandwidth() as i64) {
            out.set_coeff(j - lo, k, f.coeff(j, k));
        }
    }
    out
}

/// Block-diagonal embedding of two square matrix fields.
pub fn block_diag(a: &MatrixField, d: &MatrixField) -> MatrixField {
    let m = a.rows + d.rows;
    let n = a.bandwidth().max(d.bandwidth());
    let mut out = MatrixField::zeros(m, m, n);
    for i in 0..a.rows {
        for j in 0..a.cols {
            *out.entry_mut(i, j) = a.entry(i, j).clone();
        }
    }
    for i in 0..d.rows {
        for j in 0..d.cols {
            *out.entry_mut(a.rows + i, a.cols + j) = d.entry(i, j).clone();
        }
    }
    out
}

/// Assembles a 2×2 block matrix field of equal square blocks.
pub fn block2x2(
    a11: &MatrixField,
    a12: &MatrixField,
    a21: &MatrixField,
    a22: &MatrixField,
) -> MatrixField {
    let m = a11.rows;
    assert!([a12, a21, a22].iter().all(|b| b.rows == m && b.cols == m));
    let n = [a11, a12, a21, a22].iter().map(|b| b.bandwidth()).max().unwrap();
    let mut out = MatrixField::zeros(2 * m, 2 * m, n);
    for (bi, bj, blk) in [(0, 0, a11), (0, 1, a12), (1, 0, a21), (1, 1, a22)] {
        for i in 0..m {
            for j in 0..m {
                *out.entry_mut(bi * m + i, bj * m + j) = blk.entry(i, j).clone();
            }
        }
    }
    out
}
