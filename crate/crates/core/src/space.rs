//! Finite probability spaces with a fine and a coarse partition.

use crate::event::Event;
use crate::scalar::{RandomScalar, Xr};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("weights must be strictly positive, weight {0} is {1}")]
    NonPositiveWeight(usize, f64),
    #[error("weights must sum to 1, got {0}")]
    WeightsNotNormalized(f64),
    #[error("partition blocks must be nonempty")]
    EmptyBlock,
    #[error("point {0} appears in more than one block")]
    OverlappingBlocks(usize),
    #[error("point {0} is not covered by any block")]
    UncoveredPoint(usize),
    #[error("point index {0} out of range for {1} points")]
    PointOutOfRange(usize, usize),
    #[error("fine must refine coarse: fine block {0} straddles coarse blocks")]
    RefinementViolation(usize),
    #[error("partitions cover different point sets")]
    MismatchedPointSets,
    #[error("variable has {0} entries but the space has {1} points")]
    VariableLength(usize, usize),
    #[error("variable must be finite at every sample point, point {0} is {1}")]
    NonFinitePoint(usize, f64),
}

/// Disjoint nonempty blocks of sample-point indices covering `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Validates disjointness and coverage of `0..n_points`.
    pub fn new(blocks: Vec<Vec<usize>>, n_points: usize) -> Result<Self, SpaceError> {
        let mut owner = vec![None; n_points];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(SpaceError::EmptyBlock);
            }
            for &p in block {
                if p >= n_points {
                    return Err(SpaceError::PointOutOfRange(p, n_points));
                }
                if owner[p].is_some() {
                    return Err(SpaceError::OverlappingBlocks(p));
                }
                owner[p] = Some(b);
            }
        }
        if let Some(p) = owner.iter().position(|o| o.is_none()) {
            return Err(SpaceError::UncoveredPoint(p));
        }
        Ok(Partition { blocks })
    }

    pub fn singletons(n_points: usize) -> Self {
        Partition { blocks: (0..n_points).map(|p| vec![p]).collect() }
    }

    pub fn trivial(n_points: usize) -> Self {
        Partition { blocks: vec![(0..n_points).collect()] }
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_of_point(&self, n_points: usize) -> Vec<usize> {
        let mut owner = vec![0; n_points];
        for (b, block) in self.blocks.iter().enumerate() {
            for &p in block {
                owner[p] = b;
            }
        }
        owner
    }
}

/// True iff every block of `fine` lies inside some block of `coarse`. Both
/// must partition the same point set.
pub fn refines(fine: &Partition, coarse: &Partition) -> Result<bool, SpaceError> {
    let nf: usize = fine.blocks.iter().map(|b| b.len()).sum();
    let nc: usize = coarse.blocks.iter().map(|b| b.len()).sum();
    let max_f = fine.blocks.iter().flatten().max().copied();
    let max_c = coarse.blocks.iter().flatten().max().copied();
    if nf != nc || max_f != max_c {
        return Err(SpaceError::MismatchedPointSets);
    }
    let n_points = nf;
    let coarse_owner = coarse.block_of_point(n_points);
    for block in &fine.blocks {
        let first = coarse_owner[block[0]];
        if block.iter().any(|&p| coarse_owner[p] != first) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A finite probability space together with two nested partitions: the fine
/// blocks carry the module coordinates, the coarse blocks carry the
/// conditional scalars. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceRepr", into = "SpaceRepr")]
pub struct StratifiedSpace {
    weights: Vec<f64>,
    fine: Partition,
    coarse: Partition,
    // Derived lookups, rebuilt on deserialization.
    fine_of_point: Vec<usize>,
    coarse_of_point: Vec<usize>,
    coarse_of_fine: Vec<usize>,
    fine_mass: Vec<f64>,
    coarse_mass: Vec<f64>,
    // Fine-block indices grouped per coarse block, in ascending order.
    fine_in_coarse: Vec<Vec<usize>>,
}

impl StratifiedSpace {
    pub fn new(
        weights: Vec<f64>,
        fine: Partition,
        coarse: Partition,
    ) -> Result<Self, SpaceError> {
        let n = weights.len();
        for (i, &w) in weights.iter().enumerate() {
            if !(w > 0.0) {
                return Err(SpaceError::NonPositiveWeight(i, w));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(SpaceError::WeightsNotNormalized(total));
        }
        // Re-validate the partitions against this point count.
        let fine = Partition::new(fine.blocks, n)?;
        let coarse = Partition::new(coarse.blocks, n)?;
        let fine_of_point = fine.block_of_point(n);
        let coarse_of_point = coarse.block_of_point(n);
        let mut coarse_of_fine = vec![0; fine.n_blocks()];
        for (j, block) in fine.blocks().iter().enumerate() {
            let c = coarse_of_point[block[0]];
            if block.iter().any(|&p| coarse_of_point[p] != c) {
                return Err(SpaceError::RefinementViolation(j));
            }
            coarse_of_fine[j] = c;
        }
        let fine_mass: Vec<f64> = fine
            .blocks()
            .iter()
            .map(|b| b.iter().map(|&p| weights[p]).sum())
            .collect();
        let coarse_mass: Vec<f64> = coarse
            .blocks()
            .iter()
            .map(|b| b.iter().map(|&p| weights[p]).sum())
            .collect();
        let mut fine_in_coarse = vec![Vec::new(); coarse.n_blocks()];
        for (j, &c) in coarse_of_fine.iter().enumerate() {
            fine_in_coarse[c].push(j);
        }
        Ok(StratifiedSpace {
            weights,
            fine,
            coarse,
            fine_of_point,
            coarse_of_point,
            coarse_of_fine,
            fine_mass,
            coarse_mass,
            fine_in_coarse,
        })
    }

    /// Space with `n_atoms` coarse atoms that are also the fine atoms
    /// (one coordinate per atom), with the given atom masses.
    pub fn diagonal(atom_masses: &[f64]) -> Result<Self, SpaceError> {
        let n = atom_masses.len();
        StratifiedSpace::new(
            atom_masses.to_vec(),
            Partition::singletons(n),
            Partition::singletons(n),
        )
    }

    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    pub fn n_fine(&self) -> usize {
        self.fine.n_blocks()
    }

    pub fn n_coarse(&self) -> usize {
        self.coarse.n_blocks()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn fine(&self) -> &Partition {
        &self.fine
    }

    pub fn coarse(&self) -> &Partition {
        &self.coarse
    }

    pub fn fine_mass(&self, fine_block: usize) -> f64 {
        self.fine_mass[fine_block]
    }

    pub fn coarse_mass(&self, atom: usize) -> f64 {
        self.coarse_mass[atom]
    }

    pub fn coarse_of_fine(&self, fine_block: usize) -> usize {
        self.coarse_of_fine[fine_block]
    }

    pub fn coarse_of_point(&self, point: usize) -> usize {
        self.coarse_of_point[point]
    }

    pub fn fine_of_point(&self, point: usize) -> usize {
        self.fine_of_point[point]
    }

    /// Fine-block indices inside a coarse atom; their count is the
    /// coordinate dimension of that atom.
    pub fn fine_blocks_in(&self, atom: usize) -> &[usize] {
        &self.fine_in_coarse[atom]
    }

    pub fn atom_dim(&self, atom: usize) -> usize {
        self.fine_in_coarse[atom].len()
    }

    pub fn max_atom_dim(&self) -> usize {
        (0..self.n_coarse()).map(|a| self.atom_dim(a)).max().unwrap_or(0)
    }

    /// Normalized fine-block masses within a coarse atom (they sum to 1).
    pub fn atom_profile(&self, atom: usize) -> Vec<f64> {
        let mass = self.coarse_mass[atom];
        self.fine_in_coarse[atom]
            .iter()
            .map(|&j| self.fine_mass[j] / mass)
            .collect()
    }

    pub fn probability(&self, event: &Event) -> f64 {
        event.indices().iter().map(|&a| self.coarse_mass[a]).sum()
    }

    /// Conditional expectation of a pointwise variable given the coarse
    /// partition: per atom, the weighted average over the atom's points.
    pub fn cond_expect(&self, x: &[f64]) -> Result<RandomScalar, SpaceError> {
        if x.len() != self.n_points() {
            return Err(SpaceError::VariableLength(x.len(), self.n_points()));
        }
        if let Some((i, &v)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SpaceError::NonFinitePoint(i, v));
        }
        let values = self
            .coarse
            .blocks()
            .iter()
            .enumerate()
            .map(|(a, block)| {
                let s: f64 = block.iter().map(|&p| self.weights[p] * x[p]).sum();
                Xr::new(s / self.coarse_mass[a])
            })
            .collect();
        Ok(RandomScalar::new(values))
    }

    /// Conditional expectation onto the fine partition (used for tower
    /// checks): one value per fine block, returned pointwise so it can be
    /// conditioned again.
    pub fn cond_expect_fine_pointwise(&self, x: &[f64]) -> Result<Vec<f64>, SpaceError> {
        if x.len() != self.n_points() {
            return Err(SpaceError::VariableLength(x.len(), self.n_points()));
        }
        let mut out = vec![0.0; self.n_points()];
        for (j, block) in self.fine.blocks().iter().enumerate() {
            let s: f64 = block.iter().map(|&p| self.weights[p] * x[p]).sum();
            let avg = s / self.fine_mass[j];
            for &p in block {
                out[p] = avg;
            }
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct SpaceRepr {
    weights: Vec<f64>,
    fine: Vec<Vec<usize>>,
    coarse: Vec<Vec<usize>>,
}

impl From<StratifiedSpace> for SpaceRepr {
    fn from(s: StratifiedSpace) -> SpaceRepr {
        SpaceRepr {
            weights: s.weights,
            fine: s.fine.blocks,
            coarse: s.coarse.blocks,
        }
    }
}

impl TryFrom<SpaceRepr> for StratifiedSpace {
    type Error = String;
    fn try_from(r: SpaceRepr) -> Result<Self, String> {
        let n = r.weights.len();
        let fine = Partition::new(r.fine, n).map_err(|e| e.to_string())?;
        let coarse = Partition::new(r.coarse, n).map_err(|e| e.to_string())?;
        StratifiedSpace::new(r.weights, fine, coarse).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub fn four_point_space() -> StratifiedSpace {
        StratifiedSpace::new(
            vec![0.25; 4],
            Partition::singletons(4),
            Partition::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn canonical_fixture_is_valid() {
        let s = four_point_space();
        assert_eq!(s.n_points(), 4);
        assert_eq!(s.n_fine(), 4);
        assert_eq!(s.n_coarse(), 2);
        assert_eq!(s.fine_blocks_in(0), &[0, 1]);
        assert_eq!(s.fine_blocks_in(1), &[2, 3]);
        assert_eq!(s.atom_profile(0), vec![0.5, 0.5]);
    }

    #[test]
    fn weight_validation() {
        let err = StratifiedSpace::new(
            vec![0.5, 0.5, 0.1],
            Partition::singletons(3),
            Partition::singletons(3),
        )
        .unwrap_err();
        assert!(matches!(err, SpaceError::WeightsNotNormalized(t) if (t - 1.1).abs() < 1e-12));

        let err = StratifiedSpace::new(
            vec![0.0, 1.0],
            Partition::singletons(2),
            Partition::singletons(2),
        )
        .unwrap_err();
        assert_eq!(err, SpaceError::NonPositiveWeight(0, 0.0));
    }

    #[test]
    fn refinement_validation() {
        // coarse = singletons, fine = pairs: fine does not refine coarse.
        let err = StratifiedSpace::new(
            vec![0.25; 4],
            Partition::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap(),
            Partition::singletons(4),
        )
        .unwrap_err();
        assert!(matches!(err, SpaceError::RefinementViolation(_)));
    }

    #[test]
    fn partition_validation() {
        assert_eq!(
            Partition::new(vec![vec![0, 1], vec![1]], 2).unwrap_err(),
            SpaceError::OverlappingBlocks(1)
        );
        assert_eq!(
            Partition::new(vec![vec![0]], 2).unwrap_err(),
            SpaceError::UncoveredPoint(1)
        );
        assert_eq!(Partition::new(vec![vec![0], vec![]], 1).unwrap_err(), SpaceError::EmptyBlock);
    }

    #[test]
    fn refines_examples() {
        let singles = Partition::singletons(4);
        let pairs = Partition::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        assert!(refines(&singles, &pairs).unwrap());
        assert!(!refines(&pairs, &singles).unwrap());
        assert!(refines(&pairs, &pairs).unwrap());
        let other = Partition::singletons(3);
        assert_eq!(refines(&singles, &other).unwrap_err(), SpaceError::MismatchedPointSets);
    }

    #[test]
    fn cond_expect_oracle_values() {
        // Frozen from the direct weighted-average summation oracle:
        // atom {0,1}: (1 + 3)/2 = 2; atom {2,3}: (2 + 6)/2 = 4.
        let s = four_point_space();
        let e = s.cond_expect(&[1.0, 3.0, 2.0, 6.0]).unwrap();
        assert_eq!(e, RandomScalar::from_f64s(&[2.0, 4.0]));

        // Constant variable stays constant.
        let c = s.cond_expect(&[7.5; 4]).unwrap();
        assert_eq!(c, RandomScalar::from_f64s(&[7.5, 7.5]));

        // Tower onto the trivial partition: mean of (1,3,2,6) = 3.
        let trivial = StratifiedSpace::new(
            vec![0.25; 4],
            Partition::singletons(4),
            Partition::trivial(4),
        )
        .unwrap();
        let m = trivial.cond_expect(&[1.0, 3.0, 2.0, 6.0]).unwrap();
        assert_eq!(m, RandomScalar::from_f64s(&[3.0]));
    }

    #[test]
    fn cond_expect_errors() {
        let s = four_point_space();
        assert!(matches!(s.cond_expect(&[1.0, 2.0]), Err(SpaceError::VariableLength(2, 4))));
        assert!(matches!(
            s.cond_expect(&[1.0, f64::INFINITY, 0.0, 0.0]),
            Err(SpaceError::NonFinitePoint(1, _))
        ));
    }

    proptest! {
        #[test]
        fn cond_expect_is_linear(
            x in prop::collection::vec(-1e3f64..1e3, 4),
            y in prop::collection::vec(-1e3f64..1e3, 4),
            a in -10f64..10.0,
            b in -10f64..10.0,
        ) {
            let s = four_point_space();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(&xi, &yi)| a * xi + b * yi).collect();
            let lhs = s.cond_expect(&combo).unwrap();
            let rhs = s.cond_expect(&x).unwrap().scale(a)
                .add(&s.cond_expect(&y).unwrap().scale(b)).unwrap();
            let scale = 1.0 + x.iter().chain(&y).fold(0f64, |m, v| m.max(v.abs()))
                * (a.abs() + b.abs());
            prop_assert!(lhs.max_abs_gap(&rhs).raw() <= 1e-12 * scale);
        }

        #[test]
        fn tower_property(
            x in prop::collection::vec(-1e3f64..1e3, 6),
            w in prop::collection::vec(0.05f64..1.0, 6),
        ) {
            let total: f64 = w.iter().sum();
            let weights: Vec<f64> = w.iter().map(|v| v / total).collect();
            let fine = Partition::new(vec![vec![0, 1], vec![2], vec![3, 4], vec![5]], 6).unwrap();
            let coarse = Partition::new(vec![vec![0, 1, 2], vec![3, 4, 5]], 6).unwrap();
            let s = StratifiedSpace::new(weights, fine, coarse).unwrap();
            // Condition on the fine partition first, then on the coarse.
            let via_fine = s.cond_expect_fine_pointwise(&x).unwrap();
            let two_step = s.cond_expect(&via_fine).unwrap();
            let direct = s.cond_expect(&x).unwrap();
            let scale = 1.0 + x.iter().fold(0f64, |m, v| m.max(v.abs()));
            prop_assert!(two_step.max_abs_gap(&direct).raw() <= 1e-12 * scale);
        }

        #[test]
        fn ones_map_to_one(w in prop::collection::vec(0.05f64..1.0, 5)) {
            let total: f64 = w.iter().sum();
            let weights: Vec<f64> = w.iter().map(|v| v / total).collect();
            let s = StratifiedSpace::new(
                weights,
                Partition::singletons(5),
                Partition::new(vec![vec![0, 1], vec![2, 3, 4]], 5).unwrap(),
            ).unwrap();
            let e = s.cond_expect(&[1.0; 5]).unwrap();
            let gap = e.max_abs_gap(&RandomScalar::from_f64s(&[1.0, 1.0]));
            prop_assert!(gap.raw() <= 1e-12);
        }
    }
}
