//! Substructuring decompositions of the interior grid: interface node sets,
//! two- and three-component partition-of-unity masks, overlap-weighted
//! variants and the masked operators `A_a = chi_a A`.
//!
//! Interface nodes are the interior nodes lying on coarse lines
//! `x_a = j * hhat`. The coarse step must divide both side lengths and be a
//! multiple of both fine steps; misaligned requests are rejected, never
//! snapped.

use std::sync::Arc;

use crate::grid::Grid;
use crate::operator::{DiffusionOperator, Mask, OperatorExpression};
use crate::{Error, Result};

/// Partition-of-unity decomposition with `p` diagonal weight fields.
#[derive(Debug, Clone)]
pub struct Decomposition {
    grid: Grid,
    p: usize,
    masks: Vec<Mask>,
    coarse_step: f64,
    /// Interface nodes (on any coarse line), sorted.
    interface: Vec<usize>,
    /// Support of the segment mask (`chi_2` for three-component splits).
    segment: Vec<usize>,
    /// Support of the cross mask (`chi_3`), possibly dilated along arms.
    cross: Vec<usize>,
    crisp: bool,
}

/// Diagnostic summary produced by [`Decomposition::verify_partition`].
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionReport {
    /// `max |sum_a chi_a(x) - 1|` over interior nodes.
    pub max_deviation: f64,
    /// Smallest weight over all masks and nodes.
    pub min_weight: f64,
    pub subdomain_interior_count: usize,
    pub interface_count: usize,
    pub segment_count: usize,
    pub cross_count: usize,
    pub pass: bool,
}

/// Integer stride of the coarse lines along one axis: `hhat = k * h` and
/// `l = m * hhat`, both within 1e-9 relative.
fn coarse_stride(h: f64, hhat: f64, l: f64) -> Result<(usize, usize)> {
    if !hhat.is_finite() || hhat <= 0.0 {
        return Err(Error::Alignment(format!(
            "coarse step must be positive, got {hhat}"
        )));
    }
    let k = (hhat / h).round();
    if k < 1.0 || ((hhat / h) - k).abs() > 1e-9 {
        return Err(Error::Alignment(format!(
            "coarse step {hhat} is not a multiple of the fine step {h}"
        )));
    }
    let m = (l / hhat).round();
    if m < 1.0 || ((l / hhat) - m).abs() > 1e-9 {
        return Err(Error::Alignment(format!(
            "coarse step {hhat} does not divide the side length {l}"
        )));
    }
    Ok((k as usize, m as usize))
}

struct CoarseLines {
    k1: usize,
    m1: usize,
    k2: usize,
    m2: usize,
}

impl CoarseLines {
    fn build(grid: &Grid, hhat: f64) -> Result<Self> {
        let (k1, m1) = coarse_stride(grid.h1(), hhat, grid.l1())?;
        let (k2, m2) = coarse_stride(grid.h2(), hhat, grid.l2())?;
        if (m1 - 1) + (m2 - 1) == 0 {
            return Err(Error::DegenerateDecomposition(format!(
                "no interior coarse line for hhat = {hhat}"
            )));
        }
        Ok(CoarseLines { k1, m1, k2, m2 })
    }

    fn on_vertical(&self, i1: usize) -> bool {
        self.m1 > 1 && i1.is_multiple_of(self.k1)
    }

    fn on_horizontal(&self, i2: usize) -> bool {
        self.m2 > 1 && i2.is_multiple_of(self.k2)
    }

    fn on_interface(&self, i1: usize, i2: usize) -> bool {
        self.on_vertical(i1) || self.on_horizontal(i2)
    }

    fn on_cross(&self, i1: usize, i2: usize) -> bool {
        self.on_vertical(i1) && self.on_horizontal(i2)
    }
}

/// Two-component split: `chi_2` is the indicator of the interface set,
/// `chi_1` its complement.
pub fn build_two_component(grid: Grid, hhat: f64) -> Result<Decomposition> {
    let lines = CoarseLines::build(&grid, hhat)?;
    let n = grid.interior_len();
    let mut chi1 = vec![0.0; n];
    let mut chi2 = vec![0.0; n];
    let mut interface = Vec::new();
    let mut segment = Vec::new();
    let mut cross = Vec::new();

    for idx in 0..n {
        let (i1, i2) = grid.node(idx);
        if lines.on_interface(i1, i2) {
            chi2[idx] = 1.0;
            interface.push(idx);
            if lines.on_cross(i1, i2) {
                cross.push(idx);
            } else {
                segment.push(idx);
            }
        } else {
            chi1[idx] = 1.0;
        }
    }

    Ok(Decomposition {
        grid,
        p: 2,
        masks: vec![Mask::new(chi1), Mask::new(chi2)],
        coarse_step: hhat,
        interface,
        segment,
        cross,
        crisp: true,
    })
}

/// Three-component split. With `overlap_halfwidth = 0` the cross mask
/// `chi_3` is the indicator of the crossing nodes and `chi_2` covers the
/// remaining interface. With `overlap_halfwidth = w >= 1` the cross set is
/// dilated `w` steps along the interface arms and `chi_2`, `chi_3` share the
/// band through a linear ramp: at arm distance `s` from the cross,
/// `chi_2 = s / (w + 1)` and `chi_3 = 1 - chi_2`.
pub fn build_three_component(
    grid: Grid,
    hhat: f64,
    overlap_halfwidth: usize,
) -> Result<Decomposition> {
    let lines = CoarseLines::build(&grid, hhat)?;
    let w = overlap_halfwidth;

    // Bands from adjacent crosses on a shared line must not meet. Crosses on
    // a vertical line are spaced k2 fine steps apart (and exist only when
    // m2 > 2 puts more than one horizontal line in the interior).
    if w > 0 {
        if lines.m2 > 2 && 2 * w >= lines.k2 {
            return Err(Error::OverlapCollision(format!(
                "halfwidth {w} merges bands of crosses spaced {} steps apart",
                lines.k2
            )));
        }
        if lines.m1 > 2 && 2 * w >= lines.k1 {
            return Err(Error::OverlapCollision(format!(
                "halfwidth {w} merges bands of crosses spaced {} steps apart",
                lines.k1
            )));
        }
    }

    let n = grid.interior_len();
    let mut chi1 = vec![0.0; n];
    let mut chi2 = vec![0.0; n];
    let mut chi3 = vec![0.0; n];
    let mut interface = Vec::new();
    let mut segment = Vec::new();
    let mut cross = Vec::new();

    // Steps to the nearest interior coarse line j*k, 1 <= j <= m-1.
    let line_distance = |i: usize, k: usize, m: usize| -> usize {
        if m < 2 {
            return usize::MAX;
        }
        let jf = i / k;
        [jf, jf + 1]
            .into_iter()
            .map(|j| i.abs_diff(j.clamp(1, m - 1) * k))
            .min()
            .unwrap()
    };

    // Distance along the hosting line to the nearest cross node; interface
    // nodes not on any arm report usize::MAX.
    let arm_distance = |i1: usize, i2: usize| -> usize {
        let d1 = if lines.on_vertical(i1) {
            // along the vertical line, crosses sit on horizontal coarse lines
            line_distance(i2, lines.k2, lines.m2)
        } else {
            usize::MAX
        };
        let d2 = if lines.on_horizontal(i2) {
            line_distance(i1, lines.k1, lines.m1)
        } else {
            usize::MAX
        };
        d1.min(d2)
    };

    for idx in 0..n {
        let (i1, i2) = grid.node(idx);
        if !lines.on_interface(i1, i2) {
            chi1[idx] = 1.0;
            continue;
        }
        interface.push(idx);
        let is_cross = lines.on_cross(i1, i2);
        if w == 0 {
            if is_cross {
                chi3[idx] = 1.0;
                cross.push(idx);
            } else {
                chi2[idx] = 1.0;
                segment.push(idx);
            }
        } else {
            let s = arm_distance(i1, i2);
            let c2 = if is_cross {
                0.0
            } else if s <= w {
                s as f64 / (w + 1) as f64
            } else {
                1.0
            };
            chi2[idx] = c2;
            chi3[idx] = 1.0 - c2;
            if chi2[idx] > 0.0 {
                segment.push(idx);
            }
            if chi3[idx] > 0.0 {
                cross.push(idx);
            }
        }
    }

    if interface.is_empty() {
        return Err(Error::DegenerateDecomposition(
            "interface set is empty".into(),
        ));
    }

    Ok(Decomposition {
        grid,
        p: 3,
        masks: vec![Mask::new(chi1), Mask::new(chi2), Mask::new(chi3)],
        coarse_step: hhat,
        interface,
        segment,
        cross,
        crisp: w == 0,
    })
}

impl Decomposition {
    /// Degenerate single-component decomposition (`chi_1 = 1` everywhere).
    /// A testing aid: reduces every splitting scheme to its reference form.
    pub fn single_component(grid: Grid) -> Self {
        let n = grid.interior_len();
        Decomposition {
            grid,
            p: 1,
            masks: vec![Mask::new(vec![1.0; n])],
            coarse_step: 0.0,
            interface: Vec::new(),
            segment: Vec::new(),
            cross: Vec::new(),
            crisp: true,
        }
    }

    /// Builds a decomposition from raw weight fields without validating the
    /// partition of unity; pair with [`Decomposition::verify_partition`].
    pub fn from_masks(grid: Grid, weights: Vec<Vec<f64>>, coarse_step: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("need at least one mask".into()));
        }
        let n = grid.interior_len();
        for w in &weights {
            if w.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "mask length {} does not match {} interior nodes",
                    w.len(),
                    n
                )));
            }
        }
        let crisp = weights
            .iter()
            .all(|w| w.iter().all(|&v| v == 0.0 || v == 1.0));
        let interface: Vec<usize> = if weights.len() >= 2 {
            (0..n).filter(|&i| weights[0][i] == 0.0).collect()
        } else {
            Vec::new()
        };
        let segment = if weights.len() >= 2 {
            (0..n).filter(|&i| weights[1][i] > 0.0).collect()
        } else {
            Vec::new()
        };
        let cross = if weights.len() >= 3 {
            (0..n).filter(|&i| weights[2][i] > 0.0).collect()
        } else {
            Vec::new()
        };
        Ok(Decomposition {
            grid,
            p: weights.len(),
            masks: weights.into_iter().map(Mask::new).collect(),
            coarse_step,
            interface,
            segment,
            cross,
            crisp,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Mask of component `alpha`, 1-based.
    pub fn mask(&self, alpha: usize) -> Result<&Mask> {
        if alpha == 0 || alpha > self.p {
            return Err(Error::InvalidArgument(format!(
                "component index {alpha} out of 1..={}",
                self.p
            )));
        }
        Ok(&self.masks[alpha - 1])
    }

    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    pub fn coarse_step(&self) -> f64 {
        self.coarse_step
    }

    pub fn is_crisp(&self) -> bool {
        self.crisp
    }

    pub fn interface_nodes(&self) -> &[usize] {
        &self.interface
    }

    pub fn segment_nodes(&self) -> &[usize] {
        &self.segment
    }

    pub fn cross_nodes(&self) -> &[usize] {
        &self.cross
    }

    /// Masked operator `A_alpha = chi_alpha A` as an expression.
    pub fn masked_operator(
        &self,
        a: &Arc<DiffusionOperator>,
        alpha: usize,
    ) -> Result<OperatorExpression> {
        if *a.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(OperatorExpression::masked(
            a.clone(),
            self.mask(alpha)?.clone(),
        ))
    }

    /// Checks the partition of unity and nonnegativity, returning counts of
    /// the node classes.
    pub fn verify_partition(&self) -> PartitionReport {
        let n = self.grid.interior_len();
        let mut max_deviation: f64 = 0.0;
        let mut min_weight = f64::INFINITY;
        for idx in 0..n {
            let mut s = 0.0;
            for m in &self.masks {
                let w = m.weights()[idx];
                s += w;
                min_weight = min_weight.min(w);
            }
            max_deviation = max_deviation.max((s - 1.0).abs());
        }
        PartitionReport {
            max_deviation,
            min_weight,
            subdomain_interior_count: n - self.interface.len(),
            interface_count: self.interface.len(),
            segment_count: self.segment.len(),
            cross_count: self.cross.len(),
            pass: max_deviation == 0.0 && min_weight >= 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, norm, GridFunction};
    use crate::operator::assemble_diffusion;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

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

    /// Brute-force interface enumeration straight from coordinates.
    fn enumerate_interface(grid: &Grid, hhat: f64) -> Vec<usize> {
        let on_line = |x: f64, l: f64| -> bool {
            let mut j = hhat;
            while j < l - 1e-12 {
                if (x - j).abs() < 1e-9 {
                    return true;
                }
                j += hhat;
            }
            false
        };
        (0..grid.interior_len())
            .filter(|&idx| {
                let (x1, x2) = grid.position(idx);
                on_line(x1, grid.l1()) || on_line(x2, grid.l2())
            })
            .collect()
    }

    #[test]
    fn two_component_counts_coarse_half() {
        let g = build_grid(1.0, 1.0, 8, 8).unwrap();
        let dec = build_two_component(g, 0.5).unwrap();
        assert_eq!(dec.interface_nodes().len(), 13); // 7 + 7 - 1
        assert_eq!(
            dec.interface_nodes(),
            enumerate_interface(&g, 0.5).as_slice()
        );
        let report = dec.verify_partition();
        assert!(report.pass);
        assert_eq!(report.max_deviation, 0.0);
    }

    #[test]
    fn two_component_basic_case() {
        let g = build_grid(1.0, 1.0, 40, 40).unwrap();
        let dec = build_two_component(g, 0.5).unwrap();
        assert_eq!(dec.interface_nodes().len(), 77); // 39 + 39 - 1
        assert_eq!(
            dec.interface_nodes(),
            enumerate_interface(&g, 0.5).as_slice()
        );
    }

    #[test]
    fn interface_count_formula() {
        // |interface| = 2 m (N - 1) - m^2 for m coarse lines per axis.
        for (n, hhat) in [(8usize, 0.25), (12, 0.25), (16, 0.5), (20, 0.2)] {
            let g = build_grid(1.0, 1.0, n, n).unwrap();
            let dec = build_two_component(g, hhat).unwrap();
            let m = (1.0 / hhat).round() as usize - 1;
            assert_eq!(
                dec.interface_nodes().len(),
                2 * m * (n - 1) - m * m,
                "n = {n}, hhat = {hhat}"
            );
            assert_eq!(
                dec.interface_nodes(),
                enumerate_interface(&g, hhat).as_slice()
            );
        }
    }

    #[test]
    fn partition_of_unity_is_exact() {
        let g = build_grid(1.0, 1.0, 16, 16).unwrap();
        for dec in [
            build_two_component(g, 0.5).unwrap(),
            build_three_component(g, 0.25, 0).unwrap(),
            build_three_component(g, 0.5, 2).unwrap(),
        ] {
            let report = dec.verify_partition();
            assert_eq!(report.max_deviation, 0.0);
            assert!(report.min_weight >= 0.0);
            assert!(report.pass);
        }
    }

    #[test]
    fn three_component_crisp_classes() {
        let g = build_grid(1.0, 1.0, 8, 8).unwrap();
        let dec = build_three_component(g, 0.5, 0).unwrap();
        assert_eq!(dec.cross_nodes().len(), 1);
        assert_eq!(dec.segment_nodes().len(), 12);
        let cross_idx = dec.cross_nodes()[0];
        assert_eq!(g.position(cross_idx), (0.5, 0.5));
    }

    #[test]
    fn three_component_overlap_band() {
        let g = build_grid(1.0, 1.0, 8, 8).unwrap();
        let dec = build_three_component(g, 0.5, 2).unwrap();
        // cross node plus two nodes along each of the four arms
        assert_eq!(dec.cross_nodes().len(), 9);
        assert_eq!(dec.interface_nodes().len(), 13);
        let chi2 = dec.mask(2).unwrap().weights();
        let chi3 = dec.mask(3).unwrap().weights();
        for &idx in dec.interface_nodes() {
            assert_eq!(chi2[idx] + chi3[idx], 1.0);
        }
        // ramp weights strictly inside (0, 1) on the band away from the cross
        let band_values: Vec<f64> = dec
            .cross_nodes()
            .iter()
            .map(|&i| chi3[i])
            .filter(|&v| v < 1.0)
            .collect();
        assert_eq!(band_values.len(), 8);
        assert!(band_values.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn crisp_masks_idempotent_and_orthogonal() {
        let g = build_grid(1.0, 1.0, 12, 12).unwrap();
        let dec = build_three_component(g, 0.25, 0).unwrap();
        for a in 0..3 {
            let wa = dec.masks()[a].weights();
            for &w in wa {
                assert_eq!(w * w, w);
            }
            for b in 0..3 {
                if a != b {
                    let wb = dec.masks()[b].weights();
                    for (&x, &y) in wa.iter().zip(wb) {
                        assert_eq!(x * y, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn masked_operators_sum_to_diffusion() {
        let g = build_grid(1.0, 1.0, 12, 12).unwrap();
        let a = Arc::new(assemble_diffusion(g, |_, _| 1.0, 1.0).unwrap());
        for dec in [
            build_two_component(g, 0.5).unwrap(),
            build_three_component(g, 0.25, 1).unwrap(),
        ] {
            let u = random_function(g, 11);
            let au = a.apply_fn(&u).unwrap();
            let mut sum = GridFunction::zeros(g);
            for alpha in 1..=dec.p() {
                sum.add_scaled(
                    1.0,
                    &dec.masked_operator(&a, alpha).unwrap().apply(&u).unwrap(),
                );
            }
            let mut diff = sum.clone();
            diff.add_scaled(-1.0, &au);
            assert!(norm(&diff) <= 1e-14 * norm(&au).max(1.0));
        }
    }

    #[test]
    fn masked_application_support() {
        let g = build_grid(1.0, 1.0, 40, 40).unwrap();
        let a = Arc::new(assemble_diffusion(g, |_, _| 1.0, 1.0).unwrap());
        let dec = build_two_component(g, 0.5).unwrap();
        let u = random_function(g, 12);
        let masked = dec.masked_operator(&a, 2).unwrap().apply(&u).unwrap();
        let mut nonzero = 0;
        for (idx, &v) in masked.values().iter().enumerate() {
            if dec.mask(2).unwrap().weights()[idx] == 0.0 {
                assert_eq!(v, 0.0);
            } else {
                nonzero += 1;
            }
        }
        assert_eq!(nonzero, 77);
    }

    #[test]
    fn masked_operator_rejects_bad_index() {
        let g = build_grid(1.0, 1.0, 8, 8).unwrap();
        let a = Arc::new(assemble_diffusion(g, |_, _| 1.0, 1.0).unwrap());
        let dec = build_two_component(g, 0.5).unwrap();
        assert!(dec.masked_operator(&a, 0).is_err());
        assert!(dec.masked_operator(&a, 3).is_err());
    }

    #[test]
    fn corrupted_mask_is_reported() {
        let g = build_grid(1.0, 1.0, 8, 8).unwrap();
        let dec = build_two_component(g, 0.5).unwrap();
        let mut w1 = dec.mask(1).unwrap().weights().to_vec();
        let w2 = dec.mask(2).unwrap().weights().to_vec();
        w1[5] += 0.1;
        let corrupted = Decomposition::from_masks(g, vec![w1, w2], 0.5).unwrap();
        let report = corrupted.verify_partition();
        assert!((report.max_deviation - 0.1).abs() < 1e-15);
        assert!(!report.pass);
    }

    #[test]
    fn alignment_errors() {
        let g = build_grid(1.0, 1.0, 10, 10).unwrap();
        assert!(matches!(
            build_two_component(g, 0.15),
            Err(Error::Alignment(_))
        ));
        assert!(matches!(
            build_two_component(g, 0.3), // multiple of h = 0.1 but does not divide 1
            Err(Error::Alignment(_))
        ));
        assert!(matches!(
            build_two_component(g, 1.0),
            Err(Error::DegenerateDecomposition(_))
        ));
    }

    #[test]
    fn overlap_collision_detected() {
        let g = build_grid(1.0, 1.0, 16, 16).unwrap();
        // hhat = 0.25: crosses spaced 4 fine steps apart; w = 2 merges bands.
        assert!(matches!(
            build_three_component(g, 0.25, 2),
            Err(Error::OverlapCollision(_))
        ));
        assert!(build_three_component(g, 0.25, 1).is_ok());
    }
}
