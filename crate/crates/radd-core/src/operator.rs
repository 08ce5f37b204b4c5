//! Sparse diffusion operator, symbolic operator expressions and the
//! preconditioned conjugate-gradient solver behind all implicit stages.
//!
//! The operator realizes the five-point stencil
//!
//! ```text
//! (A y)(x) = [ k(x1+h1/2, x2) (y(x) - y(x1+h1, x2))
//!            + k(x1-h1/2, x2) (y(x) - y(x1-h1, x2)) ] / h1^2
//!          + [ k(x1, x2+h2/2) (y(x) - y(x1, x2+h2))
//!            + k(x1, x2-h2/2) (y(x) - y(x1, x2-h2)) ] / h2^2
//! ```
//!
//! with the coefficient sampled at face midpoints and off-domain neighbours
//! dropped (homogeneous Dirichlet). Face coefficients are evaluated once and
//! shared by the two rows they couple, so the assembled matrix is symmetric
//! bit for bit.

use std::sync::Arc;

use crate::grid::{inner_product, Grid, GridFunction};
use crate::{Error, Result};

/// Default relative tolerance of the conjugate-gradient solver.
pub const DEFAULT_SOLVE_TOL: f64 = 1e-10;

/// Sparse symmetric diffusion operator over interior nodes (CSR layout).
#[derive(Debug, Clone)]
pub struct DiffusionOperator {
    grid: Grid,
    kappa: f64,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<f64>,
}

/// Assembles the diffusion operator with `k` sampled at face midpoints.
///
/// Fails if `k` drops below `kappa` at any sampled face.
pub fn assemble_diffusion(
    grid: Grid,
    k: impl Fn(f64, f64) -> f64,
    kappa: f64,
) -> Result<DiffusionOperator> {
    if !kappa.is_finite() || kappa <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    let (n1, n2) = (grid.n1(), grid.n2());
    let (h1, h2) = (grid.h1(), grid.h2());

    // Face coefficients, shared between the two rows a face couples.
    // kx[i2-1][i1] is the vertical face between nodes (i1, i2) and (i1+1, i2),
    // i1 = 0..N1-1 (0 and N1-1 touch the boundary). ky analogous.
    let sample_face = |x1: f64, x2: f64| -> Result<f64> {
        let v = k(x1, x2);
        if v < kappa {
            return Err(Error::CoefficientBelowBound {
                x1,
                x2,
                value: v,
                bound: kappa,
            });
        }
        Ok(v)
    };

    let mut kx = vec![vec![0.0; n1]; n2 - 1];
    for i2 in 1..n2 {
        for (i1, face) in kx[i2 - 1].iter_mut().enumerate() {
            *face = sample_face((i1 as f64 + 0.5) * h1, i2 as f64 * h2)?;
        }
    }
    let mut ky = vec![vec![0.0; n2]; n1 - 1];
    for i1 in 1..n1 {
        for (i2, face) in ky[i1 - 1].iter_mut().enumerate() {
            *face = sample_face(i1 as f64 * h1, (i2 as f64 + 0.5) * h2)?;
        }
    }

    let n = grid.interior_len();
    let inv_h1_sq = 1.0 / (h1 * h1);
    let inv_h2_sq = 1.0 / (h2 * h2);

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(5 * n);
    let mut values = Vec::with_capacity(5 * n);
    let mut diag = Vec::with_capacity(n);
    row_ptr.push(0);

    for idx in 0..n {
        let (i1, i2) = grid.node(idx);
        let k_east = kx[i2 - 1][i1];
        let k_west = kx[i2 - 1][i1 - 1];
        let k_north = ky[i1 - 1][i2];
        let k_south = ky[i1 - 1][i2 - 1];
        let d = (k_east + k_west) * inv_h1_sq + (k_north + k_south) * inv_h2_sq;
        diag.push(d);

        // Columns in ascending index order: south, west, diagonal, east, north.
        if i2 > 1 {
            col_idx.push(grid.index(i1, i2 - 1));
            values.push(-k_south * inv_h2_sq);
        }
        if i1 > 1 {
            col_idx.push(grid.index(i1 - 1, i2));
            values.push(-k_west * inv_h1_sq);
        }
        col_idx.push(idx);
        values.push(d);
        if i1 < n1 - 1 {
            col_idx.push(grid.index(i1 + 1, i2));
            values.push(-k_east * inv_h1_sq);
        }
        if i2 < n2 - 1 {
            col_idx.push(grid.index(i1, i2 + 1));
            values.push(-k_north * inv_h2_sq);
        }
        row_ptr.push(col_idx.len());
    }

    Ok(DiffusionOperator {
        grid,
        kappa,
        row_ptr,
        col_idx,
        values,
        diag,
    })
}

impl DiffusionOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn nrows(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Iterates the nonzeros of one row as `(column, value)` pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// `out = A v` on raw slices.
    pub fn apply_slice(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.nrows());
        for (r, o) in out.iter_mut().enumerate() {
            let lo = self.row_ptr[r];
            let hi = self.row_ptr[r + 1];
            let mut s = 0.0;
            for t in lo..hi {
                s += self.values[t] * v[self.col_idx[t]];
            }
            *o = s;
        }
    }

    /// `A u` as a fresh grid function.
    pub fn apply_fn(&self, u: &GridFunction) -> Result<GridFunction> {
        if *u.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let mut out = GridFunction::zeros(self.grid);
        self.apply_slice(u.values(), out.values_mut());
        Ok(out)
    }

    /// Smallest admissible eigenvalue `kappa * (delta_1 + delta_2)` with
    /// `delta_a = (4 / h_a^2) sin^2(pi h_a / (2 l_a))`.
    pub fn spectral_lower_bound(&self) -> f64 {
        let g = &self.grid;
        let d1 = 4.0 / (g.h1() * g.h1())
            * (std::f64::consts::PI * g.h1() / (2.0 * g.l1()))
                .sin()
                .powi(2);
        let d2 = 4.0 / (g.h2() * g.h2())
            * (std::f64::consts::PI * g.h2() / (2.0 * g.l2()))
                .sin()
                .powi(2);
        self.kappa * (d1 + d2)
    }
}

/// Diagonal weight field over interior nodes, values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Mask {
    weights: Arc<Vec<f64>>,
}

impl Mask {
    pub fn new(weights: Vec<f64>) -> Self {
        Mask {
            weights: Arc::new(weights),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Indices with a strictly positive weight.
    pub fn support(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// One multiplicative factor of an operator expression.
#[derive(Debug, Clone)]
pub enum Factor {
    /// `E`
    Identity,
    /// `A`
    Diffusion,
    /// `chi A`
    Masked(Mask),
    /// `E + c A`
    Shifted(f64),
    /// `E + c chi A`
    ShiftedMasked(f64, Mask),
}

impl Factor {
    fn is_polynomial(&self) -> bool {
        matches!(
            self,
            Factor::Identity | Factor::Diffusion | Factor::Shifted(_)
        )
    }

    fn is_spd(&self) -> bool {
        match self {
            Factor::Identity | Factor::Diffusion => true,
            Factor::Shifted(c) => *c >= 0.0,
            Factor::Masked(_) | Factor::ShiftedMasked(_, _) => false,
        }
    }
}

/// Symbolic composition `scale * F1 (* F2)` over one diffusion operator,
/// with factors drawn from `E`, `A`, `chi A`, `E + c A`, `E + c chi A`.
#[derive(Debug, Clone)]
pub struct OperatorExpression {
    op: Arc<DiffusionOperator>,
    scale: f64,
    factors: Vec<Factor>,
}

impl OperatorExpression {
    pub fn identity(op: Arc<DiffusionOperator>) -> Self {
        Self::single(op, Factor::Identity)
    }

    pub fn diffusion(op: Arc<DiffusionOperator>) -> Self {
        Self::single(op, Factor::Diffusion)
    }

    pub fn masked(op: Arc<DiffusionOperator>, mask: Mask) -> Self {
        Self::single(op, Factor::Masked(mask))
    }

    /// `E + c A`
    pub fn shifted(op: Arc<DiffusionOperator>, c: f64) -> Self {
        Self::single(op, Factor::Shifted(c))
    }

    /// `E + c chi A`
    pub fn shifted_masked(op: Arc<DiffusionOperator>, c: f64, mask: Mask) -> Self {
        Self::single(op, Factor::ShiftedMasked(c, mask))
    }

    fn single(op: Arc<DiffusionOperator>, factor: Factor) -> Self {
        OperatorExpression {
            op,
            scale: 1.0,
            factors: vec![factor],
        }
    }

    /// Product `left * right` (applied right first). Both operands must be
    /// single factors over the same operator.
    pub fn compose(left: &OperatorExpression, right: &OperatorExpression) -> Result<Self> {
        if !Arc::ptr_eq(&left.op, &right.op) {
            return Err(Error::InvalidArgument(
                "composed factors must share the diffusion operator".into(),
            ));
        }
        if left.factors.len() != 1 || right.factors.len() != 1 {
            return Err(Error::InvalidArgument(
                "expressions hold at most two factors".into(),
            ));
        }
        Ok(OperatorExpression {
            op: left.op.clone(),
            scale: left.scale * right.scale,
            factors: vec![left.factors[0].clone(), right.factors[0].clone()],
        })
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.scale *= s;
        self
    }

    pub fn operator(&self) -> &Arc<DiffusionOperator> {
        &self.op
    }

    pub fn grid(&self) -> &Grid {
        self.op.grid()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// True when the composition is symmetric positive definite: a positive
    /// multiple of commuting polynomial factors in `A`, each SPD. Masked
    /// factors make the expression non-symmetric.
    pub fn is_spd(&self) -> bool {
        self.scale > 0.0 && self.factors.iter().all(|f| f.is_polynomial() && f.is_spd())
    }

    /// Symmetric as composed (polynomials in `A` commute).
    pub fn is_symmetric(&self) -> bool {
        self.factors.iter().all(|f| f.is_polynomial())
    }

    fn apply_factor(&self, f: &Factor, v: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        match f {
            Factor::Identity => out.copy_from_slice(v),
            Factor::Diffusion => self.op.apply_slice(v, out),
            Factor::Masked(m) => {
                self.op.apply_slice(v, out);
                for (o, w) in out.iter_mut().zip(m.weights()) {
                    *o *= w;
                }
            }
            Factor::Shifted(c) => {
                self.op.apply_slice(v, scratch);
                for i in 0..v.len() {
                    out[i] = v[i] + c * scratch[i];
                }
            }
            Factor::ShiftedMasked(c, m) => {
                self.op.apply_slice(v, scratch);
                let w = m.weights();
                for i in 0..v.len() {
                    out[i] = v[i] + c * w[i] * scratch[i];
                }
            }
        }
    }

    /// Action of the expression on a grid function.
    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        if u.grid() != self.op.grid() {
            return Err(Error::GridMismatch);
        }
        let n = u.len();
        let mut cur = u.values().to_vec();
        let mut scratch = vec![0.0; n];
        let mut out = vec![0.0; n];
        for f in self.factors.iter().rev() {
            self.apply_factor(f, &cur, &mut scratch, &mut out);
            std::mem::swap(&mut cur, &mut out);
        }
        if self.scale != 1.0 {
            for v in &mut cur {
                *v *= self.scale;
            }
        }
        GridFunction::from_values(*u.grid(), cur)
    }
}

/// `||u||_op = (op u, u)^{1/2}` for an SPD or symmetric positive
/// semidefinite expression. Tiny negative round-off is clamped to zero.
pub fn energy_norm(op: &OperatorExpression, u: &GridFunction) -> Result<f64> {
    if !op.is_symmetric() || op.scale() < 0.0 {
        return Err(Error::NotSymmetricPositiveDefinite(
            "energy norm needs a symmetric nonnegative expression".into(),
        ));
    }
    let q = inner_product(&op.apply(u)?, u)?;
    let uu = inner_product(u, u)?;
    if q < -1e-13 * uu {
        return Err(Error::NotSymmetricPositiveDefinite(format!(
            "quadratic form is materially negative: {q:e}"
        )));
    }
    Ok(q.max(0.0).sqrt())
}

/// Solves `op x = rhs` by preconditioned conjugate gradients (diagonal
/// preconditioner). Accepts SPD expressions and shifted-masked expressions
/// `E + c chi A`, which reduce to an SPD solve on the support of `chi`.
pub fn solve_spd(
    op: &OperatorExpression,
    rhs: &GridFunction,
    rel_tol: f64,
) -> Result<GridFunction> {
    if rhs.grid() != op.grid() {
        return Err(Error::GridMismatch);
    }
    if !rel_tol.is_finite() || rel_tol <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "rel_tol must be positive, got {rel_tol}"
        )));
    }
    if op.factors().len() != 1 {
        return Err(Error::NotSymmetricPositiveDefinite(
            "cannot solve a product expression directly".into(),
        ));
    }
    if op.scale() <= 0.0 {
        return Err(Error::NotSymmetricPositiveDefinite(
            "scale must be positive for an SPD solve".into(),
        ));
    }

    let a = op.operator();
    let n = rhs.len();
    let mut b = rhs.values().to_vec();
    if op.scale() != 1.0 {
        let inv = 1.0 / op.scale();
        for v in &mut b {
            *v *= inv;
        }
    }

    let x = match &op.factors()[0] {
        Factor::Identity => b,
        Factor::Diffusion => {
            let apply = |v: &[f64], out: &mut [f64]| a.apply_slice(v, out);
            pcg(n, apply, a.diag(), &b, rel_tol)?
        }
        Factor::Shifted(c) => {
            if *c < 0.0 {
                return Err(Error::NotSymmetricPositiveDefinite(format!(
                    "shift coefficient {c} is negative"
                )));
            }
            let c = *c;
            let mut scratch = vec![0.0; n];
            let apply = move |v: &[f64], out: &mut [f64]| {
                a.apply_slice(v, &mut scratch);
                for i in 0..v.len() {
                    out[i] = v[i] + c * scratch[i];
                }
            };
            let diag: Vec<f64> = a.diag().iter().map(|d| 1.0 + c * d).collect();
            pcg(n, apply, &diag, &b, rel_tol)?
        }
        Factor::ShiftedMasked(c, mask) => {
            if *c < 0.0 {
                return Err(Error::NotSymmetricPositiveDefinite(format!(
                    "shift coefficient {c} is negative"
                )));
            }
            solve_shifted_masked(a, *c, mask, &b, rel_tol)?
        }
        Factor::Masked(_) => {
            return Err(Error::NotSymmetricPositiveDefinite(
                "a masked operator alone is not SPD".into(),
            ));
        }
    };

    GridFunction::from_values(*op.grid(), x)
}

/// Solve `(E + c chi A) x = b`. Rows with `chi = 0` are identity rows, so
/// `x = b` there; on the support the system reduces to
/// `(diag(1/chi) + c A_SS) x_S = b_S / chi - c A_{S,off} b_off`,
/// which is SPD.
fn solve_shifted_masked(
    a: &DiffusionOperator,
    c: f64,
    mask: &Mask,
    b: &[f64],
    rel_tol: f64,
) -> Result<Vec<f64>> {
    let w = mask.weights();
    let support = mask.support();
    let mut x = b.to_vec();
    if support.is_empty() || c == 0.0 {
        return Ok(x);
    }

    let n = b.len();
    let mut local_of = vec![usize::MAX; n];
    for (loc, &g) in support.iter().enumerate() {
        local_of[g] = loc;
    }

    let m = support.len();
    let mut rhs_local = vec![0.0; m];
    let mut diag_local = vec![0.0; m];
    for (loc, &g) in support.iter().enumerate() {
        let mut off_sum = 0.0;
        let mut a_diag = 0.0;
        for (col, val) in a.row(g) {
            if col == g {
                a_diag = val;
            } else if local_of[col] == usize::MAX {
                off_sum += val * b[col];
            }
        }
        rhs_local[loc] = b[g] / w[g] - c * off_sum;
        diag_local[loc] = 1.0 / w[g] + c * a_diag;
    }

    let support_apply = {
        let support = &support;
        let local_of = &local_of;
        move |v: &[f64], out: &mut [f64]| {
            for (loc, &g) in support.iter().enumerate() {
                let mut s = v[loc] / w[g];
                for (col, val) in a.row(g) {
                    let lc = local_of[col];
                    if lc != usize::MAX {
                        s += c * val * v[lc];
                    }
                }
                out[loc] = s;
            }
        }
    };

    let x_local = pcg(m, support_apply, &diag_local, &rhs_local, rel_tol)?;
    for (loc, &g) in support.iter().enumerate() {
        x[g] = x_local[loc];
    }
    Ok(x)
}

/// Jacobi-preconditioned conjugate gradients; iteration cap `10 n`.
fn pcg(
    n: usize,
    mut apply: impl FnMut(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    rel_tol: f64,
) -> Result<Vec<f64>> {
    let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_b == 0.0 {
        return Ok(vec![0.0; n]);
    }
    if !norm_b.is_finite() {
        return Err(Error::Numerical(
            "right-hand side of the linear solve is not finite".into(),
        ));
    }
    let tol = rel_tol * norm_b;

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];

    let max_iter = 10 * n.max(1);
    for _ in 0..max_iter {
        let res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if res <= tol {
            return Ok(x);
        }
        if !res.is_finite() {
            return Err(Error::Numerical(
                "conjugate-gradient residual is not finite".into(),
            ));
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !pap.is_finite() || pap <= 0.0 {
            return Err(Error::NotSymmetricPositiveDefinite(format!(
                "conjugate gradients met a nonpositive curvature {pap:e}"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    let res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if res <= tol {
        Ok(x)
    } else {
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: res,
        })
    }
}

/// Dense minimum eigenvalue of `A` against the lower bound of the spectrum.
///
/// Returns `(lambda_min, kappa (delta_1 + delta_2))` and fails if the bound
/// is violated beyond 1e-9. Dense eigendecomposition: a verification
/// facility, capped at [`crate::stability::DENSE_NODE_CAP`] nodes.
pub fn spectral_bound_check(a: &DiffusionOperator) -> Result<(f64, f64)> {
    let n = a.nrows();
    let cap = crate::stability::DENSE_NODE_CAP;
    if n > cap {
        return Err(Error::SizeCap { nodes: n, cap });
    }
    let mut dense = nalgebra::DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        for (c, v) in a.row(r) {
            dense[(r, c)] = v;
        }
    }
    let eig = dense.symmetric_eigen();
    let lambda_min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let bound = a.spectral_lower_bound();
    if lambda_min < bound - 1e-9 {
        return Err(Error::Numerical(format!(
            "spectral bound violated: lambda_min {lambda_min} < bound {bound}"
        )));
    }
    Ok((lambda_min, bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, norm};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn unit_operator(n: usize) -> Arc<DiffusionOperator> {
        let g = build_grid(1.0, 1.0, n, n).unwrap();
        Arc::new(assemble_diffusion(g, |_, _| 1.0, 1.0).unwrap())
    }

    fn random_function(grid: Grid, seed: u64) -> GridFunction {
        let mut rng = StdRng::seed_from_u64(seed);
        GridFunction::from_values(
            grid,
            (0..grid.interior_len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_node_diagonal() {
        let a = unit_operator(2);
        assert_eq!(a.nrows(), 1);
        assert_eq!(a.diag()[0], 16.0); // 2/h1^2 + 2/h2^2 with h = 1/2
    }

    #[test]
    fn discrete_eigenvector() {
        let g = build_grid(1.0, 1.0, 40, 40).unwrap();
        let a = assemble_diffusion(g, |_, _| 1.0, 1.0).unwrap();
        let v = GridFunction::sample(g, |x1, x2| (PI * x1).sin() * (PI * x2).sin());
        let av = a.apply_fn(&v).unwrap();
        let lambda = a.spectral_lower_bound();
        for (x, y) in av.values().iter().zip(v.values()) {
            assert!((x - lambda * y).abs() <= 1e-10 * lambda * y.abs().max(1e-3));
        }
    }

    #[test]
    fn constant_coefficient_scales_entries() {
        let g = build_grid(1.0, 1.0, 6, 6).unwrap();
        let a1 = assemble_diffusion(g, |_, _| 1.0, 1.0).unwrap();
        let a2 = assemble_diffusion(g, |_, _| 2.0, 2.0).unwrap();
        assert_eq!(a1.values.len(), a2.values.len());
        for (v1, v2) in a1.values.iter().zip(&a2.values) {
            assert_eq!(2.0 * v1, *v2);
        }
    }

    #[test]
    fn assembly_is_bit_symmetric() {
        let g = build_grid(1.0, 2.0, 7, 5).unwrap();
        let a = assemble_diffusion(g, |x1, x2| 1.0 + x1 * x1 + 0.5 * x2, 1.0).unwrap();
        for r in 0..a.nrows() {
            assert!(a.row(r).count() <= 5);
            assert!(a.diag()[r] > 0.0);
            for (c, v) in a.row(r) {
                let back = a.row(c).find(|(cc, _)| *cc == r).map(|(_, vv)| vv);
                assert_eq!(back, Some(v));
            }
        }
    }

    #[test]
    fn coefficient_violation_names_the_face() {
        let g = build_grid(1.0, 1.0, 4, 4).unwrap();
        let err = assemble_diffusion(g, |x1, _| if x1 > 0.5 { 0.1 } else { 1.0 }, 0.5).unwrap_err();
        match err {
            Error::CoefficientBelowBound { value, bound, .. } => {
                assert_eq!(value, 0.1);
                assert_eq!(bound, 0.5);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn expression_identity_and_shift() {
        let a = unit_operator(8);
        let u = random_function(*a.grid(), 1);
        let id = OperatorExpression::identity(a.clone());
        assert_eq!(id.apply(&u).unwrap(), u);

        let tau = 0.01;
        let shifted = OperatorExpression::shifted(a.clone(), tau);
        let av = a.apply_fn(&u).unwrap();
        let mut expect = u.clone();
        expect.add_scaled(tau, &av);
        let got = shifted.apply(&u).unwrap();
        for (x, y) in got.values().iter().zip(expect.values()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetry_of_apply() {
        let g = build_grid(1.0, 1.0, 10, 10).unwrap();
        let a = assemble_diffusion(g, |x1, x2| 1.0 + x1 + x2, 1.0).unwrap();
        let u = random_function(g, 2);
        let w = random_function(g, 3);
        let lhs = inner_product(&a.apply_fn(&u).unwrap(), &w).unwrap();
        let rhs = inner_product(&u, &a.apply_fn(&w).unwrap()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()));
    }

    #[test]
    fn positivity_from_spectral_bound() {
        let g = build_grid(1.0, 1.0, 9, 9).unwrap();
        let a = assemble_diffusion(g, |_, _| 1.0, 1.0).unwrap();
        let bound = a.spectral_lower_bound();
        for seed in 0..5 {
            let u = random_function(g, seed);
            let q = inner_product(&a.apply_fn(&u).unwrap(), &u).unwrap();
            let uu = inner_product(&u, &u).unwrap();
            assert!(q >= bound * uu - 1e-9);
        }
    }

    #[test]
    fn solve_identity_returns_rhs() {
        let a = unit_operator(6);
        let rhs = random_function(*a.grid(), 4);
        let x = solve_spd(&OperatorExpression::identity(a), &rhs, 1e-12).unwrap();
        assert_eq!(x, rhs);
    }

    #[test]
    fn solve_single_node_shift() {
        let a = unit_operator(2);
        let rhs = GridFunction::from_values(*a.grid(), vec![1.0]).unwrap();
        let op = OperatorExpression::shifted(a, 0.01); // diag 1 + 0.01 * 16 = 1.16
        let x = solve_spd(&op, &rhs, 1e-14).unwrap();
        assert!((x.values()[0] - 1.0 / 1.16).abs() < 1e-12);
        assert!((x.values()[0] - 0.8620689655).abs() < 1e-9);
    }

    #[test]
    fn solve_round_trip() {
        let a = unit_operator(9);
        let op = OperatorExpression::shifted(a, 0.02);
        let rhs = random_function(*op.grid(), 5);
        let x = solve_spd(&op, &rhs, 1e-13).unwrap();
        let back = op.apply(&x).unwrap();
        let mut diff = back.clone();
        diff.add_scaled(-1.0, &rhs);
        assert!(norm(&diff) <= 1e-10 * norm(&rhs));
    }

    #[test]
    fn solve_rejects_non_spd() {
        let a = unit_operator(4);
        let mask = Mask::new(vec![1.0; a.nrows()]);
        let rhs = random_function(*a.grid(), 6);
        let masked = OperatorExpression::masked(a.clone(), mask);
        assert!(matches!(
            solve_spd(&masked, &rhs, 1e-10),
            Err(Error::NotSymmetricPositiveDefinite(_))
        ));
        let negative = OperatorExpression::shifted(a, -0.5);
        assert!(solve_spd(&negative, &rhs, 1e-10).is_err());
    }

    #[test]
    fn masked_solve_matches_full_solve_on_full_support() {
        let a = unit_operator(7);
        let n = a.nrows();
        let rhs = random_function(*a.grid(), 7);
        let full = solve_spd(&OperatorExpression::shifted(a.clone(), 0.01), &rhs, 1e-13).unwrap();
        let masked = solve_spd(
            &OperatorExpression::shifted_masked(a, 0.01, Mask::new(vec![1.0; n])),
            &rhs,
            1e-13,
        )
        .unwrap();
        let mut diff = full.clone();
        diff.add_scaled(-1.0, &masked);
        assert!(norm(&diff) <= 1e-11 * norm(&full));
    }

    #[test]
    fn masked_solve_keeps_identity_rows() {
        let a = unit_operator(7);
        let n = a.nrows();
        let mut weights = vec![0.0; n];
        for i in (0..n).step_by(3) {
            weights[i] = 1.0;
        }
        let mask = Mask::new(weights.clone());
        let rhs = random_function(*a.grid(), 8);
        let op = OperatorExpression::shifted_masked(a.clone(), 0.05, mask);
        let x = solve_spd(&op, &rhs, 1e-13).unwrap();
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                assert_eq!(x.values()[i], rhs.values()[i]);
            }
        }
        let back = op.apply(&x).unwrap();
        let mut diff = back.clone();
        diff.add_scaled(-1.0, &rhs);
        assert!(norm(&diff) <= 1e-10 * norm(&rhs));
    }

    #[test]
    fn energy_norm_identity_is_grid_norm() {
        let a = unit_operator(6);
        let u = random_function(*a.grid(), 9);
        let e = energy_norm(&OperatorExpression::identity(a), &u).unwrap();
        assert!((e - norm(&u)).abs() < 1e-13);
    }

    #[test]
    fn energy_norm_of_eigenvector() {
        let a = unit_operator(8);
        let g = *a.grid();
        let v = GridFunction::sample(g, |x1, x2| (PI * x1).sin() * (PI * x2).sin());
        let lambda = a.spectral_lower_bound();
        let e = energy_norm(&OperatorExpression::diffusion(a), &v).unwrap();
        assert!((e - lambda.sqrt() * norm(&v)).abs() < 1e-9);
    }

    #[test]
    fn energy_norm_of_zero() {
        let a = unit_operator(5);
        let z = GridFunction::zeros(*a.grid());
        assert_eq!(
            energy_norm(&OperatorExpression::diffusion(a), &z).unwrap(),
            0.0
        );
    }

    #[test]
    fn energy_pythagoras_for_spd_summands() {
        // ||u||_{E + cA}^2 = ||u||_E^2 + c ||u||_A^2 for c >= 0.
        let a = unit_operator(7);
        let u = random_function(*a.grid(), 10);
        let c = 0.3;
        let whole = energy_norm(&OperatorExpression::shifted(a.clone(), c), &u).unwrap();
        let e_part = energy_norm(&OperatorExpression::identity(a.clone()), &u).unwrap();
        let a_part = energy_norm(&OperatorExpression::diffusion(a), &u).unwrap();
        let sum = (e_part * e_part + c * a_part * a_part).sqrt();
        assert!((whole - sum).abs() <= 1e-12 * whole);
    }

    #[test]
    fn spectral_bound_attained_for_unit_coefficient() {
        let a = unit_operator(4);
        let (lambda_min, bound) = spectral_bound_check(&a).unwrap();
        let expect = 2.0 * 64.0 * (PI / 8.0).sin().powi(2);
        assert!((bound - expect).abs() < 1e-10);
        assert!((lambda_min - bound).abs() < 1e-9);
    }

    #[test]
    fn spectral_bound_doubles_with_coefficient() {
        let g = build_grid(1.0, 1.0, 4, 4).unwrap();
        let a1 = assemble_diffusion(g, |_, _| 1.0, 1.0).unwrap();
        let a2 = assemble_diffusion(g, |_, _| 2.0, 2.0).unwrap();
        let (l1, b1) = spectral_bound_check(&a1).unwrap();
        let (l2, b2) = spectral_bound_check(&a2).unwrap();
        assert!((l2 - 2.0 * l1).abs() < 1e-9);
        assert!((b2 - 2.0 * b1).abs() < 1e-12);
    }

    #[test]
    fn spectral_bound_single_node() {
        let a = unit_operator(2);
        let (lambda_min, bound) = spectral_bound_check(&a).unwrap();
        assert!((lambda_min - 16.0).abs() < 1e-12);
        assert!((bound - 16.0).abs() < 1e-12);
    }
}
