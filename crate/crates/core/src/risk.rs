//! The conditional entropic risk measure: the motivating application of
//! the duality machinery. Per atom the risk of a position is
//! `gamma^{-1} log E[exp(-gamma x) | atom]`; its dual penalty is the scaled
//! relative entropy over reweightings of the atom profile.

use crate::fenchel::{
    self, AtomFunction, FenchelError, StratifiedConvexFunction,
};
use crate::module::{apply_functional, ModuleElement, ModuleFunctional};
use crate::scalar::{RandomScalar, Xr};
use crate::space::StratifiedSpace;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("risk aversion must be strictly positive, got {0}")]
    BadGamma(f64),
    #[error(transparent)]
    Fenchel(#[from] FenchelError),
    #[error(transparent)]
    Module(#[from] crate::module::ModuleError),
}

/// Parameters of the conditional entropic risk measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropicRiskSpec {
    pub gamma: f64,
    pub space: StratifiedSpace,
}

impl EntropicRiskSpec {
    pub fn new(gamma: f64, space: StratifiedSpace) -> Result<Self, RiskError> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(RiskError::BadGamma(gamma));
        }
        Ok(EntropicRiskSpec { gamma, space })
    }
}

/// The risk measure as a stratified convex function (entropic pieces on
/// every atom).
pub fn entropic_risk(spec: &EntropicRiskSpec) -> StratifiedConvexFunction {
    StratifiedConvexFunction::uniform(&spec.space, AtomFunction::Entropic { gamma: spec.gamma })
}

pub fn risk_value(spec: &EntropicRiskSpec, x: &ModuleElement) -> Result<RandomScalar, RiskError> {
    Ok(fenchel::evaluate(&entropic_risk(spec), x, &spec.space)?)
}

/// Axiom report: properness, locality, conditional convexity,
/// monotonicity and cash invariance on seeded samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskAxiomReport {
    pub proper: bool,
    pub locality_violations: Vec<String>,
    pub convexity_violations: Vec<String>,
    pub monotonicity_violations: Vec<String>,
    pub cash_invariance_violations: Vec<String>,
    pub checked: usize,
}

impl RiskAxiomReport {
    pub fn passed(&self) -> bool {
        self.proper
            && self.locality_violations.is_empty()
            && self.convexity_violations.is_empty()
            && self.monotonicity_violations.is_empty()
            && self.cash_invariance_violations.is_empty()
    }
}

pub fn risk_axiom_report(
    spec: &EntropicRiskSpec,
    n_samples: usize,
    seed: u64,
) -> Result<RiskAxiomReport, RiskError> {
    let space = &spec.space;
    let rho = entropic_risk(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng| {
        ModuleElement::new((0..space.n_fine()).map(|_| rng.random_range(-3.0..3.0)).collect())
    };

    let (proper, _) = fenchel::is_proper(&rho, space)?;

    let samples: Vec<ModuleElement> = (0..n_samples.min(50)).map(|_| sample(&mut rng)).collect();
    let locality = fenchel::locality_check(&rho, &samples, space)?;

    let triples: Vec<(ModuleElement, ModuleElement, RandomScalar)> = (0..n_samples)
        .map(|_| {
            let xi = RandomScalar::from_f64s(
                &(0..space.n_coarse())
                    .map(|_| rng.random_range(0.0..1.0))
                    .collect::<Vec<_>>(),
            );
            (sample(&mut rng), sample(&mut rng), xi)
        })
        .collect();
    let convexity = fenchel::convexity_check(&rho, &triples, space)?;

    let mut monotonicity_violations = Vec::new();
    let mut cash_invariance_violations = Vec::new();
    for i in 0..n_samples {
        let x = sample(&mut rng);
        // Monotonicity: y >= x pointwise implies rho(y) <= rho(x).
        let bump = ModuleElement::new(
            (0..space.n_fine()).map(|_| rng.random_range(0.0..2.0)).collect(),
        );
        let y = x.add(&bump);
        let rx = fenchel::evaluate(&rho, &x, space)?;
        let ry = fenchel::evaluate(&rho, &y, space)?;
        if !ry.le_within(&rx, 1e-10) {
            monotonicity_violations.push(format!("sample {i}: rho not antitone"));
        }
        // Cash invariance: rho(x + m) = rho(x) - m for per-atom constants.
        let m = RandomScalar::from_f64s(
            &(0..space.n_coarse())
                .map(|_| rng.random_range(-2.0..2.0))
                .collect::<Vec<_>>(),
        );
        let ones = ModuleElement::new(vec![1.0; space.n_fine()]);
        let shifted = x.add(&ones.scale_by(&m, space));
        let lhs = fenchel::evaluate(&rho, &shifted, space)?;
        let rhs = rx.sub(&m).unwrap();
        if lhs.max_abs_gap(&rhs).raw() > 1e-12 * (1.0 + m.values().iter().map(|v| v.raw().abs()).fold(0.0, f64::max)) {
            cash_invariance_violations.push(format!(
                "sample {i}: cash invariance gap {:?}",
                lhs.max_abs_gap(&rhs)
            ));
        }
    }

    Ok(RiskAxiomReport {
        proper,
        locality_violations: locality.violations,
        convexity_violations: convexity.violations,
        monotonicity_violations,
        cash_invariance_violations,
        checked: n_samples,
    })
}

/// Dual representation report: the biconjugate agrees with the risk at the
/// sampled positions, with the supremum over dual functionals attained at
/// the reweighted profile; the penalties (conjugate values) of the sampled
/// functionals are recorded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskDualityReport {
    pub samples: usize,
    pub max_gap: f64,
    /// Penalty value per sampled dual functional (finite ones only).
    pub penalties: Vec<f64>,
}

impl RiskDualityReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_gap <= tol
    }
}

pub fn risk_duality_report(
    spec: &EntropicRiskSpec,
    n_samples: usize,
    seed: u64,
) -> Result<RiskDualityReport, RiskError> {
    let space = &spec.space;
    let rho = entropic_risk(spec);
    let penalty = fenchel::conjugate(&rho, space)?;
    let rho_cc = fenchel::biconjugate(&rho, space)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_gap = 0.0f64;
    let mut penalties = Vec::new();
    for _ in 0..n_samples {
        let x = ModuleElement::new(
            (0..space.n_fine()).map(|_| rng.random_range(-3.0..3.0)).collect(),
        );
        let direct = fenchel::evaluate(&rho, &x, space)?;
        // The biconjugate through the conjugate pair must agree exactly.
        let via_pair = fenchel::evaluate(&rho_cc, &x, space)?;
        max_gap = max_gap.max(direct.max_abs_gap(&via_pair).raw());

        // The dual supremum, evaluated at candidate functionals: the
        // stationarity candidate (the exponentially reweighted profile)
        // plus random reweightings. Each candidate gives a lower bound on
        // the biconjugate; the best one must close the gap.
        let mut best = RandomScalar::constant(space.n_coarse(), Xr::NEG_INF);
        let mut candidates: Vec<ModuleFunctional> = Vec::new();
        candidates.push(reweighted_profile(spec, &x));
        for _ in 0..8 {
            candidates.push(random_reweighting(space, &mut rng));
        }
        for g in &candidates {
            let gx = apply_functional(g, &x, space)?;
            let pen = fenchel::evaluate(&penalty, &ModuleElement::new(g.coeffs.clone()), space)?;
            if pen.is_finite() {
                for v in pen.values() {
                    penalties.push(v.raw());
                }
            }
            let value = gx.sub(&pen).unwrap();
            best = RandomScalar::lattice_sup(&[best, value]).unwrap();
        }
        // rho(x) >= best always (weak duality); the candidate set must
        // close the gap.
        max_gap = max_gap.max(direct.sub(&best).unwrap().abs().max_abs_gap(&RandomScalar::zero(space.n_coarse())).raw());
    }
    Ok(RiskDualityReport { samples: n_samples, max_gap, penalties })
}

/// The dual optimizer at `x`: coefficients `-w_j exp(-gamma x_j) / Z` per
/// atom, the exponentially reweighted atom profile with a flipped sign.
pub fn reweighted_profile(spec: &EntropicRiskSpec, x: &ModuleElement) -> ModuleFunctional {
    let space = &spec.space;
    let mut coeffs = vec![0.0; space.n_fine()];
    for atom in 0..space.n_coarse() {
        let profile = space.atom_profile(atom);
        let block = x.block(space, atom);
        let m = block
            .iter()
            .map(|&v| -spec.gamma * v)
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = block
            .iter()
            .zip(&profile)
            .map(|(&v, &w)| w * (-spec.gamma * v - m).exp())
            .collect();
        let z: f64 = weights.iter().sum();
        for (local, &j) in space.fine_blocks_in(atom).iter().enumerate() {
            coeffs[j] = -weights[local] / z;
        }
    }
    ModuleFunctional::new(coeffs)
}

fn random_reweighting(space: &StratifiedSpace, rng: &mut ChaCha8Rng) -> ModuleFunctional {
    let mut coeffs = vec![0.0; space.n_fine()];
    for atom in 0..space.n_coarse() {
        let blocks = space.fine_blocks_in(atom);
        let mut q: Vec<f64> = (0..blocks.len()).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = q.iter().sum();
        for v in &mut q {
            *v /= total;
        }
        for (local, &j) in blocks.iter().enumerate() {
            coeffs[j] = -q[local];
        }
    }
    ModuleFunctional::new(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Partition;

    fn four_point_space() -> StratifiedSpace {
        StratifiedSpace::new(
            vec![0.25; 4],
            Partition::singletons(4),
            Partition::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn gamma_must_be_positive() {
        assert!(matches!(
            EntropicRiskSpec::new(0.0, four_point_space()),
            Err(RiskError::BadGamma(_))
        ));
        assert!(matches!(
            EntropicRiskSpec::new(-1.0, four_point_space()),
            Err(RiskError::BadGamma(_))
        ));
    }

    #[test]
    fn risk_of_zero_and_constants() {
        let spec = EntropicRiskSpec::new(1.0, four_point_space()).unwrap();
        // rho(0) = 0.
        let z = risk_value(&spec, &ModuleElement::zero(4)).unwrap();
        assert!(z.values().iter().all(|v| v.raw().abs() < 1e-15));
        // Constants per atom: rho(m) = -m.
        let x = ModuleElement::new(vec![2.0, 2.0, -1.5, -1.5]);
        let r = risk_value(&spec, &x).unwrap();
        assert!((r.get(0).raw() + 2.0).abs() < 1e-12);
        assert!((r.get(1).raw() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn two_point_atom_formula() {
        // Frozen from the direct formula oracle: ln((1 + e^-1)/2).
        let spec = EntropicRiskSpec::new(1.0, four_point_space()).unwrap();
        let x = ModuleElement::new(vec![0.0, 1.0, 0.0, 0.0]);
        let r = risk_value(&spec, &x).unwrap();
        let expect = ((1.0 + (-1.0f64).exp()) / 2.0).ln();
        assert!((r.get(0).raw() - expect).abs() < 1e-12);
        assert!((expect + 0.3799).abs() < 1e-4);
    }

    #[test]
    fn axioms_hold_on_samples() {
        let spec = EntropicRiskSpec::new(1.3, four_point_space()).unwrap();
        let report = risk_axiom_report(&spec, 100, 7).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn duality_gap_closes() {
        let spec = EntropicRiskSpec::new(1.0, four_point_space()).unwrap();
        let report = risk_duality_report(&spec, 100, 11).unwrap();
        assert!(report.passed(1e-6), "max gap {}", report.max_gap);
        assert!(!report.penalties.is_empty());
        assert!(report.penalties.iter().all(|&p| p >= -1e-12));
    }

    #[test]
    fn large_gamma_approaches_worst_case() {
        let spec = EntropicRiskSpec::new(100.0, four_point_space()).unwrap();
        let space = &spec.space;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = ModuleElement::new((0..4).map(|_| rng.random_range(-2.0..2.0)).collect());
            let r = risk_value(&spec, &x).unwrap();
            for atom in 0..2 {
                let worst = x
                    .block(space, atom)
                    .iter()
                    .map(|v| -v)
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!((r.get(atom).raw() - worst).abs() <= 1e-2);
            }
        }
    }

    #[test]
    fn one_point_atoms_are_self_dual() {
        let spec = EntropicRiskSpec::new(2.0, StratifiedSpace::diagonal(&[0.5, 0.5]).unwrap())
            .unwrap();
        let x = ModuleElement::new(vec![1.25, -0.5]);
        let r = risk_value(&spec, &x).unwrap();
        // Degenerate atoms: rho(x) = -x exactly.
        assert!((r.get(0).raw() + 1.25).abs() < 1e-12);
        assert!((r.get(1).raw() - 0.5).abs() < 1e-12);
        let report = risk_duality_report(&spec, 50, 5).unwrap();
        assert!(report.passed(1e-9), "max gap {}", report.max_gap);
    }
}
