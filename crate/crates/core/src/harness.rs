//! Seeded instance generation, the acceptance-style check suites, and the
//! machine-readable reports behind the CLI. Every check is deterministic
//! given its seed and sizes; reports embed seeds, tolerances and
//! provenance so failures reproduce from the report alone.

use crate::event::Event;
use crate::fenchel::{
    self, AffinePiece, AtomFunction, GridFn, StratifiedConvexFunction,
};
use crate::geom::{self, HPolytope};
use crate::module::{
    apply_functional, decompose_functional, eval_seminorm, is_type_i, is_type_ii,
    operator_bound, ModuleElement, ModuleFunctional, Seminorm,
};
use crate::risk::{self, EntropicRiskSpec};
use crate::scalar::{RandomScalar, Xr};
use crate::separation::{
    counterexample_probe, neighborhood_separation, normalize_separator, separate,
    separate_strict,
};
use crate::sets::{
    ball_of_seminorm, contains_event, gauge_sandwich_check, AtomBody,
    StratifiedConvexSet,
};
use crate::space::{Partition, StratifiedSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    BadConfig(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema error in {path}: {detail}")]
    Schema { path: String, detail: String },
}

/// Instance sizes for the generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    pub max_atoms: usize,
    pub max_dims: usize,
    pub count: usize,
}

impl Default for Sizes {
    fn default() -> Self {
        Sizes { max_atoms: 4, max_dims: 3, count: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Duality,
    Separation,
    Gauge,
    Decomposition,
    Counterexample,
    Risk,
    All,
}

impl std::str::FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "duality" => Ok(Suite::Duality),
            "separation" => Ok(Suite::Separation),
            "gauge" => Ok(Suite::Gauge),
            "decomposition" => Ok(Suite::Decomposition),
            "counterexample" => Ok(Suite::Counterexample),
            "risk" => Ok(Suite::Risk),
            "all" => Ok(Suite::All),
            other => Err(format!("unknown suite {other:?}")),
        }
    }
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Suite::Duality => "duality",
            Suite::Separation => "separation",
            Suite::Gauge => "gauge",
            Suite::Decomposition => "decomposition",
            Suite::Counterexample => "counterexample",
            Suite::Risk => "risk",
            Suite::All => "all",
        };
        write!(f, "{name}")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub suite: Suite,
    pub seed: u64,
    pub sizes: Sizes,
    /// Per-check tolerance overrides, keyed by check name.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

impl ExperimentConfig {
    pub fn new(suite: Suite, seed: u64) -> Self {
        ExperimentConfig { suite, seed, sizes: Sizes::default(), tolerances: BTreeMap::new() }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.sizes.max_atoms < 1 || self.sizes.max_dims < 1 {
            return Err(HarnessError::BadConfig("sizes must be at least 1".into()));
        }
        if self.sizes.count < 1 {
            return Err(HarnessError::BadConfig("instance count must be at least 1".into()));
        }
        Ok(())
    }
}

/// One generated instance's outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceResult {
    pub id: u64,
    pub kind: String,
    pub passed: bool,
    pub gap: f64,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub detail: String,
}

/// One check's summary: instance results, the worst gap and the tolerance
/// it was held against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckSummary {
    pub name: String,
    pub provenance: String,
    pub tolerance: f64,
    pub passed: bool,
    pub worst_gap: f64,
    pub instances: Vec<InstanceResult>,
}

impl CheckSummary {
    fn from_instances(
        name: &str,
        provenance: &str,
        tolerance: f64,
        instances: Vec<InstanceResult>,
    ) -> Self {
        let passed = instances.iter().all(|i| i.passed);
        let worst_gap = instances.iter().map(|i| i.gap).fold(0.0, f64::max);
        CheckSummary {
            name: name.to_string(),
            provenance: provenance.to_string(),
            tolerance,
            passed,
            worst_gap,
            instances,
        }
    }
}

/// A machine-readable suite report. Identical configs produce identical
/// reports except for the timing block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub suite: String,
    pub seed: u64,
    pub sizes: Sizes,
    pub tolerances: BTreeMap<String, f64>,
    pub checks: Vec<CheckSummary>,
    pub passed: bool,
    pub worst_gaps: BTreeMap<String, f64>,
    /// Wall-clock timings; excluded from determinism comparisons.
    pub timings_ms: BTreeMap<String, f64>,
}

impl Report {
    pub fn strip_timings(&self) -> Report {
        let mut r = self.clone();
        r.timings_ms.clear();
        r
    }
}

/// Run a suite under a config.
pub fn run_suite(config: &ExperimentConfig) -> Result<Report, HarnessError> {
    config.validate()?;
    let seed = config.seed;
    let sizes = config.sizes;
    let tol = |name: &str, default: f64| config.tolerances.get(name).copied().unwrap_or(default);
    let mut checks: Vec<CheckSummary> = Vec::new();
    let mut timings = BTreeMap::new();
    let mut run = |name: &str, f: &dyn Fn() -> CheckSummary| {
        let start = Instant::now();
        let summary = f();
        timings.insert(name.to_string(), start.elapsed().as_secs_f64() * 1e3);
        checks.push(summary);
    };
    let n = sizes.count;
    match config.suite {
        Suite::Duality => {
            run("biconjugation", &|| check_biconjugation(seed, n, sizes, tol("biconjugation", 1e-8)));
            run("closure-theorem", &|| check_closure_theorem(seed, n, sizes, tol("closure-theorem", 1e-8)));
            run("legendre-oracle", &|| check_dlt(seed, n.min(50)));
        }
        Suite::Separation => {
            run("separation", &|| check_separation(seed, n, sizes, tol("separation", 1e-9)));
            run("strict-separation", &|| check_strict_separation(seed, n, sizes, tol("strict-separation", 1e-12)));
            run("neighborhood-separation", &|| check_neighborhood(seed, n, sizes));
        }
        Suite::Gauge => {
            run("gauge-sandwich", &|| check_gauge_sandwich(seed, n, sizes));
        }
        Suite::Decomposition => {
            run("decomposition", &|| check_decomposition(seed, n, sizes, tol("decomposition", 1e-9)));
            run("scalar-seminorm-axioms", &|| check_axioms(seed, 100 * n, sizes));
        }
        Suite::Counterexample => {
            run("counterexample-probe", &|| check_counterexample(seed, n));
        }
        Suite::Risk => {
            run("risk-demo", &|| check_risk(seed, n, sizes, tol("risk-demo", 1e-6)));
        }
        Suite::All => {
            run("biconjugation", &|| check_biconjugation(seed, n, sizes, tol("biconjugation", 1e-8)));
            run("closure-theorem", &|| check_closure_theorem(seed, n, sizes, tol("closure-theorem", 1e-8)));
            run("legendre-oracle", &|| check_dlt(seed, n.min(50)));
            run("separation", &|| check_separation(seed, n, sizes, tol("separation", 1e-9)));
            run("strict-separation", &|| check_strict_separation(seed, n, sizes, tol("strict-separation", 1e-12)));
            run("neighborhood-separation", &|| check_neighborhood(seed, n, sizes));
            run("gauge-sandwich", &|| check_gauge_sandwich(seed, n, sizes));
            run("decomposition", &|| check_decomposition(seed, n, sizes, tol("decomposition", 1e-9)));
            run("scalar-seminorm-axioms", &|| check_axioms(seed, 100 * n, sizes));
            run("counterexample-probe", &|| check_counterexample(seed, n));
            run("risk-demo", &|| check_risk(seed, n, sizes, tol("risk-demo", 1e-6)));
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    let worst_gaps = checks.iter().map(|c| (c.name.clone(), c.worst_gap)).collect();
    Ok(Report {
        suite: config.suite.to_string(),
        seed,
        sizes,
        tolerances: config.tolerances.clone(),
        checks,
        passed,
        worst_gaps,
        timings_ms: timings,
    })
}

fn instance_rng(seed: u64, check: u64, id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (check.wrapping_mul(0x9e37_79b9_7f4a_7c15)) ^ id.wrapping_mul(0x2545_f491_4f6c_dd1d))
}

// ---------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------

/// A random stratified space with at most `max_atoms` coarse atoms and at
/// most `max_dims` fine blocks per atom.
pub fn random_space(rng: &mut ChaCha8Rng, max_atoms: usize, max_dims: usize) -> StratifiedSpace {
    let n_atoms = rng.random_range(1..=max_atoms);
    let dims: Vec<usize> = (0..n_atoms).map(|_| rng.random_range(1..=max_dims)).collect();
    let mut fine_blocks = Vec::new();
    let mut coarse_blocks = Vec::new();
    let mut weights = Vec::new();
    let mut point = 0usize;
    for &d in &dims {
        let mut coarse = Vec::new();
        for _ in 0..d {
            // One or two sample points per fine block.
            let pts = rng.random_range(1..=2);
            let mut fine = Vec::new();
            for _ in 0..pts {
                weights.push(rng.random_range(0.2..1.0));
                fine.push(point);
                coarse.push(point);
                point += 1;
            }
            fine_blocks.push(fine);
        }
        coarse_blocks.push(coarse);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let n = weights.len();
    StratifiedSpace::new(
        weights,
        Partition::new(fine_blocks, n).expect("generated fine partition"),
        Partition::new(coarse_blocks, n).expect("generated coarse partition"),
    )
    .expect("generated space")
}

fn random_element(rng: &mut ChaCha8Rng, space: &StratifiedSpace, radius: f64) -> ModuleElement {
    ModuleElement::new(
        (0..space.n_fine()).map(|_| rng.random_range(-radius..radius)).collect(),
    )
}

/// A proper per-atom-closed polyhedral function: random affine pieces over
/// a random box domain (or none).
pub fn random_closed_max_affine(
    rng: &mut ChaCha8Rng,
    space: &StratifiedSpace,
) -> StratifiedConvexFunction {
    let atoms = (0..space.n_coarse())
        .map(|atom| {
            let d = space.atom_dim(atom);
            let n_pieces = rng.random_range(1..=4);
            let pieces = (0..n_pieces)
                .map(|_| {
                    AffinePiece::new(
                        (0..d).map(|_| rng.random_range(-3.0..3.0)).collect(),
                        rng.random_range(-2.0..2.0),
                    )
                })
                .collect();
            let domain = if rng.random_bool(0.7) {
                let lo: Vec<f64> = (0..d).map(|_| rng.random_range(-4.0..-0.5)).collect();
                let hi: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..4.0)).collect();
                Some(HPolytope::cuboid(&lo, &hi))
            } else {
                None
            };
            AtomFunction::MaxAffine { pieces, domain }
        })
        .collect();
    StratifiedConvexFunction::new(atoms)
}

/// A point inside the domain of a polyhedral function piece.
fn sample_in_domain(rng: &mut ChaCha8Rng, piece: &AtomFunction, d: usize) -> Vec<f64> {
    match piece {
        AtomFunction::MaxAffine { domain: Some(h), .. } => {
            // Boxes by construction: sample between the per-axis bounds.
            let mut lo = vec![-3.0f64; d];
            let mut hi = vec![3.0f64; d];
            for (row, &b) in h.a.iter().zip(&h.b) {
                for j in 0..d {
                    if row[j] > 0.5 {
                        hi[j] = hi[j].min(b / row[j]);
                    } else if row[j] < -0.5 {
                        lo[j] = lo[j].max(-b / -row[j]);
                    }
                }
            }
            (0..d).map(|j| rng.random_range(lo[j]..hi[j])).collect()
        }
        AtomFunction::Grid(g) => g
            .axes
            .iter()
            .map(|axis| rng.random_range(axis[0]..axis[axis.len() - 1]))
            .collect(),
        _ => (0..d).map(|_| rng.random_range(-3.0..3.0)).collect(),
    }
}

/// A balanced full-dimensional vertex body: symmetrized random points plus
/// a scaled coordinate box.
pub fn random_balanced_body(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let mut verts = Vec::new();
    let base = rng.random_range(0.3..1.2);
    for corner in 0..(1usize << d) {
        let v: Vec<f64> = (0..d)
            .map(|j| if corner & (1 << j) != 0 { base } else { -base })
            .collect();
        verts.push(v);
    }
    for _ in 0..rng.random_range(1..=3) {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let neg = v.iter().map(|x| -x).collect();
        verts.push(v);
        verts.push(neg);
    }
    verts
}

fn random_polytopal_family(rng: &mut ChaCha8Rng, space: &StratifiedSpace) -> Vec<Seminorm> {
    let mut family = vec![Seminorm::cond_p(f64::INFINITY)];
    if rng.random_bool(0.5) {
        family.push(Seminorm::cond_p(1.0));
    }
    if rng.random_bool(0.4) {
        family.push(Seminorm::weighted(
            (0..space.n_fine()).map(|_| rng.random_range(0.2..2.0)).collect(),
        ));
    }
    family
}

// ---------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------

/// Biconjugation fixed point on proper closed polyhedral functions.
pub fn check_biconjugation(seed: u64, count: usize, sizes: Sizes, tolerance: f64) -> CheckSummary {
    let mut instances = Vec::with_capacity(count);
    for id in 0..count as u64 {
        let mut rng = instance_rng(seed, 1, id);
        let space = random_space(&mut rng, sizes.max_atoms.min(4), sizes.max_dims.min(3));
        let f = random_closed_max_affine(&mut rng, &space);
        let result = (|| -> Result<f64, String> {
            let fcc = fenchel::biconjugate(&f, &space).map_err(|e| e.to_string())?;
            let mut worst = 0.0f64;
            for _ in 0..100 {
                let blocks: Vec<Vec<f64>> = (0..space.n_coarse())
                    .map(|atom| sample_in_domain(&mut rng, &f.atoms[atom], space.atom_dim(atom)))
                    .collect();
                let x = ModuleElement::from_blocks(&space, &blocks);
                let a = fenchel::evaluate(&f, &x, &space).map_err(|e| e.to_string())?;
                let b = fenchel::evaluate(&fcc, &x, &space).map_err(|e| e.to_string())?;
                worst = worst.max(a.max_abs_gap(&b).raw());
            }
            Ok(worst)
        })();
        instances.push(match result {
            Ok(gap) => InstanceResult {
                id,
                kind: "biconjugation".into(),
                passed: gap <= tolerance,
                gap,
                detail: String::new(),
            },
            Err(e) => InstanceResult {
                id,
                kind: "biconjugation".into(),
                passed: false,
                gap: f64::INFINITY,
                detail: e,
            },
        });
    }
    CheckSummary::from_instances(
        "biconjugation",
        "derived: double conjugation against direct evaluation on domain samples",
        tolerance,
        instances,
    )
}

/// Closure theorem: the biconjugate and the closure agree in classification
/// and in value on the potentially proper atoms.
pub fn check_closure_theorem(seed: u64, count: usize, sizes: Sizes, tolerance: f64) -> CheckSummary {
    let mut instances = Vec::with_capacity(count);
    for id in 0..count as u64 {
        let mut rng = instance_rng(seed, 2, id);
        let space = random_space(&mut rng, sizes.max_atoms.min(4), sizes.max_dims.min(2));
        // Deliberately mixed atoms.
        let atoms: Vec<AtomFunction> = (0..space.n_coarse())
            .map(|atom| {
                let d = space.atom_dim(atom);
                match rng.random_range(0..5) {
                    0 => AtomFunction::MinusInf,
                    1 => AtomFunction::PlusInf,
                    2 => {
                        // A non-convex grid: biconjugation must regularize.
                        let axes: Vec<Vec<f64>> = (0..d)
                            .map(|_| {
                                let n = rng.random_range(3..=5);
                                (0..n).map(|k| -1.5 + 3.0 * k as f64 / (n - 1) as f64).collect()
                            })
                            .collect();
                        let n_nodes: usize = axes.iter().map(|a| a.len()).product();
                        let values = (0..n_nodes)
                            .map(|_| Xr::new(rng.random_range(-1.0..2.0)))
                            .collect();
                        AtomFunction::Grid(GridFn { axes, values })
                    }
                    _ => {
                        let n_pieces = rng.random_range(1..=3);
                        let pieces = (0..n_pieces)
                            .map(|_| {
                                AffinePiece::new(
                                    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
                                    rng.random_range(-1.0..1.0),
                                )
                            })
                            .collect();
                        AtomFunction::MaxAffine {
                            pieces,
                            domain: Some(HPolytope::cuboid(&vec![-2.0; d], &vec![2.0; d])),
                        }
                    }
                }
            })
            .collect();
        let f = StratifiedConvexFunction::new(atoms);
        let result = (|| -> Result<f64, String> {
            let bicon = fenchel::biconjugate(&f, &space).map_err(|e| e.to_string())?;
            let clos = fenchel::closure(&f, &space).map_err(|e| e.to_string())?;
            let cb = fenchel::classify_events(&bicon, &space).map_err(|e| e.to_string())?;
            let cc = fenchel::classify_events(&clos, &space).map_err(|e| e.to_string())?;
            if cb.mi != cc.mi || cb.pi != cc.pi {
                return Err(format!(
                    "classification mismatch: biconjugate mi={:?} pi={:?}, closure mi={:?} pi={:?}",
                    cb.mi.indices(),
                    cb.pi.indices(),
                    cc.mi.indices(),
                    cc.pi.indices()
                ));
            }
            let mut worst = 0.0f64;
            for _ in 0..50 {
                let blocks: Vec<Vec<f64>> = (0..space.n_coarse())
                    .map(|atom| sample_in_domain(&mut rng, &f.atoms[atom], space.atom_dim(atom)))
                    .collect();
                let x = ModuleElement::from_blocks(&space, &blocks);
                let a = fenchel::evaluate(&bicon, &x, &space).map_err(|e| e.to_string())?;
                let b = fenchel::evaluate(&clos, &x, &space).map_err(|e| e.to_string())?;
                for atom in 0..space.n_coarse() {
                    let (va, vb) = (a.get(atom), b.get(atom));
                    if cb.mi.contains(atom) {
                        if !(va.is_neg_inf() && vb.is_neg_inf()) {
                            return Err(format!("atom {atom} should be -inf"));
                        }
                    } else if cb.pi.contains(atom) {
                        if !(va.is_pos_inf() && vb.is_pos_inf()) {
                            return Err(format!("atom {atom} should be +inf"));
                        }
                    } else if va.is_finite() && vb.is_finite() {
                        worst = worst.max((va - vb).abs().raw());
                    } else if va != vb {
                        // Both routes must agree on the infinity pattern
                        // (the sampled point may sit outside the envelope
                        // domain, where both are +inf).
                        return Err(format!("atom {atom}: {va} vs {vb}"));
                    }
                }
            }
            Ok(worst)
        })();
        instances.push(match result {
            Ok(gap) => InstanceResult {
                id,
                kind: "closure".into(),
                passed: gap <= tolerance,
                gap,
                detail: String::new(),
            },
            Err(e) => InstanceResult {
                id,
                kind: "closure".into(),
                passed: false,
                gap: f64::INFINITY,
                detail: e,
            },
        });
    }
    CheckSummary::from_instances(
        "closure-theorem",
        "derived: epigraph-hull closure against double conjugation",
        tolerance,
        instances,
    )
}

/// Separation certificates against an independent vertex-enumeration
/// oracle.
pub fn check_separation(seed: u64, count: usize, sizes: Sizes, tolerance: f64) -> CheckSummary {
    let mut instances = Vec::with_capacity(count);
    for id in 0..count as u64 {
        let mut rng = instance_rng(seed, 3, id);
        let space = random_space(&mut rng, sizes.max_atoms, sizes.max_dims.min(3));
        // Bodies generated in vertex form; the implementation object gets
        // only the H-form so its projections and suprema run on a
        // different representation than the oracle's vertex list.
        let vertex_bodies: Vec<Vec<Vec<f64>>> = (0..space.n_coarse())
            .map(|atom| {
                let d = space.atom_dim(atom);
                let n = d + 1 + rng.random_range(1..=2);
                (0..n)
                    .map(|_| {
                        let center = rng.random_range(-0.5..0.5);
                        (0..d).map(|_| center + rng.random_range(-1.2..1.2)).collect()
                    })
                    .collect()
            })
            .collect();
        let m = StratifiedConvexSet {
            bodies: vertex_bodies
                .iter()
                .map(|v| AtomBody::from_hrep(geom::facet_enumeration(v)))
                .collect(),
            contains_zero: vec![false; space.n_coarse()],
            balanced: vec![false; space.n_coarse()],
        };
        let family = random_polytopal_family(&mut rng, &space);
        // Sample x until it misses the body somewhere.
        let mut x = random_element(&mut rng, &space, 2.5);
        let mut tries = 0;
        while contains_event(&m, &x, &space).is_full() && tries < 50 {
            x = random_element(&mut rng, &space, 2.5);
            tries += 1;
        }
        let result = (|| -> Result<f64, String> {
            if contains_event(&m, &x, &space).is_full() {
                return Err("could not sample a point outside the body".into());
            }
            let cert = separate(&x, &m, &family, &space).map_err(|e| e.to_string())?;
            // Oracle: membership via the original vertex list decides the
            // positive-distance atoms; suprema recomputed by vertex
            // enumeration.
            let mut worst = 0.0f64;
            for atom in 0..space.n_coarse() {
                let block = x.block(&space, atom);
                let inside = geom::vpoly_contains(&vertex_bodies[atom], &block, 1e-9);
                if inside == cert.strict_event.contains(atom) {
                    return Err(format!(
                        "atom {atom}: oracle membership {inside} conflicts with strict event"
                    ));
                }
                let g = cert.functional.block(&space, atom);
                let oracle_sup = vertex_bodies[atom]
                    .iter()
                    .map(|v| geom::dot(&g, v))
                    .fold(f64::NEG_INFINITY, f64::max);
                worst = worst.max((oracle_sup - cert.sup_over_m.get(atom).raw()).abs());
                let oracle_margin = geom::dot(&g, &block) - oracle_sup;
                worst = worst.max((oracle_margin - cert.margin.get(atom).raw()).abs());
                if cert.strict_event.contains(atom) {
                    if oracle_margin <= 0.0 {
                        return Err(format!("atom {atom}: strict margin not positive"));
                    }
                } else if oracle_margin.abs() > tolerance {
                    return Err(format!("atom {atom}: margin {oracle_margin} off strict event"));
                }
            }
            Ok(worst)
        })();
        instances.push(match result {
            Ok(gap) => InstanceResult {
                id,
                kind: "separation".into(),
                passed: gap <= tolerance,
                gap,
                detail: String::new(),
            },
            Err(e) => InstanceResult {
                id,
                kind: "separation".into(),
                passed: false,
                gap: f64::INFINITY,
                detail: e,
            },
        });
    }
    CheckSummary::from_instances(
        "separation",
        "derived: projection certificates against vertex-enumeration oracle",
        tolerance,
        instances,
    )
}

/// Strict separation with all atoms outside, plus the normalization
/// contract.
pub fn check_strict_separation(seed: u64, count: usize, sizes: Sizes, tolerance: f64) -> CheckSummary {
    let mut instances = Vec::with_capacity(count);
    for id in 0..count as u64 {
        let mut rng = instance_rng(seed, 4, id);
        let space = random_space(&mut rng, sizes.max_atoms, sizes.max_dims.min(3));
        let vertex_bodies: Vec<Vec<Vec<f64>>> = (0..space.n_coarse())
            .map(|atom| random_balanced_body(&mut rng, space.atom_dim(atom)))
            .collect();
        let m = StratifiedConvexSet {
            bodies: vertex_bodies.iter().cloned().map(AtomBody::from_vertices).collect(),
            contains_zero: vec![true; space.n_coarse()],
            balanced: vec![true; space.n_coarse()],
        };
        let family = random_polytopal_family(&mut rng, &space);
        // Push x strictly outside every atom body.
        let blocks: Vec<Vec<f64>> = (0..space.n_coarse())
            .map(|atom| {
                let d = space.atom_dim(atom);
                let dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = geom::dot(&dir, &dir).sqrt().max(1e-6);
                let radius = vertex_bodies[atom]
                    .iter()
                    .map(|v| geom::dot(v, v).sqrt())
                    .fold(0.0, f64::max);
                let push = radius + rng.random_range(0.5..2.0);
                dir.iter().map(|v| v / norm * push).collect()
            })
            .collect();
        let x = ModuleElement::from_blocks(&space, &blocks);
        let result = (|| -> Result<f64, String> {
            let cert = separate_strict(&x, &m, &family, &space).map_err(|e| e.to_string())?;
            if !cert.strict_event.is_full() {
                return Err("strict event is not the full atom set".into());
            }
            let fp = normalize_separator(&cert, &m, &x, &space).map_err(|e| e.to_string())?;
            let fpx = apply_functional(&fp, &x, &space).map_err(|e| e.to_string())?;
            let mut worst = 0.0f64;
            let mut some_above_one = false;
            for atom in 0..space.n_coarse() {
                let g = fp.block(&space, atom);
                let sup_abs = vertex_bodies[atom]
                    .iter()
                    .map(|v| geom::dot(&g, v).abs())
                    .fold(0.0, f64::max);
                if sup_abs > 1.0 + tolerance {
                    return Err(format!("atom {atom}: normalized sup {sup_abs} above one"));
                }
                worst = worst.max((sup_abs - 1.0).max(0.0));
                if fpx.get(atom).raw().abs() > 1.0 {
                    some_above_one = true;
                }
            }
            if !some_above_one {
                return Err("normalized |f(x)| never exceeds one".into());
            }
            Ok(worst)
        })();
        instances.push(match result {
            Ok(gap) => InstanceResult {
                id,
                kind: "strict-separation".into(),
                passed: gap <= tolerance,
                gap,
                detail: String::new(),
            },
            Err(e) => InstanceResult {
                id,
                kind: "strict-separation".into(),
                passed: false,
                gap: f64::INFINITY,
                detail: e,
            },
        });
    }
    CheckSummary::from_instances(
        "strict-separation",
        "derived: full-event certificates and midpoint normalization identities",
        tolerance,
        instances,
    )
}

/// Neighborhood separation: certified positive gaps for both inflation
/// contracts.
pub fn check_neighborhood(seed: u64, count: usize, sizes: Sizes) -> CheckSummary {
    let mut instances = Vec::with_capacity(count);
    for id in 0..count as u64 {
        let mut rng = instance_rng(seed, 5, id);
        let space = random_space(&mut rng, sizes.max_atoms, sizes.max_dims.min(3));
        // A body shifted well away from the origin per atom.
        let vertex_bodies: Vec<Vec<Vec<f64>>> = (0..space.n_coarse())
            .map(|atom| {
                let d = space.atom_dim(atom);
                let shift: Vec<f64> = (0..d)
                    .map(|_| {
                        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        sign * rng.random_range(1.5..3.0)
                    })
                    .collect();
                (0..d + 2)
                    .map(|_| {
                        (0..d)
                            .map(|j| shift[j] + rng.random_range(-0.4..0.4))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let m = StratifiedConvexSet {
            bodies: vertex_bodies.into_iter().map(AtomBody::from_vertices).collect(),
            contains_zero: vec![false; space.n_coarse()],
            balanced: vec![false; space.n_coarse()],
        };
        let family = random_polytopal_family(&mut rng, &space);
        let x = ModuleElement::zero(space.n_fine());
        let result = (|| -> Result<f64, String> {
            let ns = neighborhood_separation(&x, &m, &family, &space).map_err(|e| e.to_string())?;
            let min_gap = ns
                .inflated_gap
                .values()
                .iter()
                .chain(ns.half_ball_gap.values())
                .map(|v| v.raw())
                .fold(f64::INFINITY, f64::min);
            if min_gap <= 0.0 {
                return Err("nonpositive certified gap".into());
            }
            Ok(0.0)
        })();
        instances.push(match result {
            Ok(gap) => InstanceResult {
                id,
                kind: "neighborhood".into(),
                passed: true,
                gap,
                detail: String::new(),
            },
            Err(e) => InstanceResult {
                id,
                kind: "neighborhood".into(),
                passed: false,
                gap: f64::INFINITY,
                detail: e,
            },
        });
    }
    CheckSummary::from_instances(
        "neighborhood-separation",
        "derived: LP-certified disjointness of inflated bodies",
        0.0,
        instances,
    )
}

/// Gauge sandwich on random balanced bodies.
pub fn check_gauge_sandwich(seed: u64, count: usize, sizes: Sizes) -> CheckSummary {
    let mut instances = Vec::with_capacity(count);
    for id in 0..count as u64 {
        let mut rng = instance_rng(seed, 6, id);
        let space = random_space(&mut rng, sizes.max_atoms, sizes.max_dims.min(3));
        let bodies: Vec<AtomBody> = (0..space.n_coarse())
            .map(|atom| AtomBody::from_vertices(random_balanced_body(&mut rng, space.atom_dim(atom))))
            .collect();
        let u = StratifiedConvexSet {
            bodies,
            contains_zero: vec![true; space.n_coarse()],
            balanced: vec![true; space.n_coarse()],
        };
        let result = (|| -> Result<(usize, Vec<String>), String> {
            u.validate(&space).map_err(|e| e.to_string())?;
            let report =
                gauge_sandwich_check(&u, &space, 1000, &mut rng).map_err(|e| e.to_string())?;
            Ok((report.checked_interior + report.checked_strict + report.checked_members,
                report.violations))
        })();
        instances.push(match result {
            Ok((_, violations)) if violations.is_empty() => InstanceResult {
                id,
                kind: "gauge-sandwich".into(),
                passed: true,
                gap: 0.0,
                detail: String::new(),
            },
            Ok((_, violations)) => InstanceResult {
                id,
                kind: "gauge-sandwich".into(),
                passed: false,
                gap: f64::INFINITY,
                detail: violations.join("; "),
            },
            Err(e) => InstanceResult {
                id,
                kind: "gauge-sandwich".into(),
                passed: false,
                gap: f64::INFINITY,
                detail: e,
            },
        });
    }
    CheckSummary::from_instances(
        "gauge-sandwich",
        "derived: interior / strict / membership legs on sampled points",
        0.0,
        instances,
    )
}

/// Decomposition of dominated functionals and the gluing exhibition of
/// type-II functionals from type-I pieces.
pub fn check_decomposition(seed: u64, count: usize, sizes: Sizes, tolerance: f64) -> CheckSummary {
    let mut instances = Vec::with_capacity(count);
    for id in 0..count as u64 {
        let mut rng = instance_rng(seed, 7, id);
        let space = random_space(&mut rng, sizes.max_atoms, sizes.max_dims);
        let n_atoms = space.n_coarse();
        // A random partition of the atoms into up to three events.
        let n_events = rng.random_range(1..=3.min(n_atoms));
        let mut assignment: Vec<usize> = (0..n_atoms).map(|_| rng.random_range(0..n_events)).collect();
        for k in 0..n_events {
            // Keep every event nonempty.
            if !assignment.contains(&k) {
                let pos = rng.random_range(0..n_atoms);
                assignment[pos] = k;
            }
        }
        let used: Vec<usize> = {
            let mut u = assignment.clone();
            u.sort_unstable();
            u.dedup();
            u
        };
        let events: Vec<Event> = used
            .iter()
            .map(|&k| Event::from_mask((0..n_atoms).map(|a| assignment[a] == k).collect()))
            .collect();
        let parts: Vec<Seminorm> = used
            .iter()
            .map(|_| {
                if rng.random_bool(0.5) {
                    Seminorm::cond_p(1.0)
                } else {
                    Seminorm::cond_p(f64::INFINITY)
                }
            })
            .collect();
        let concat = Seminorm::concat(events.clone(), parts.clone());
        let f = ModuleFunctional::new(
            (0..space.n_fine()).map(|_| rng.random_range(-3.0..3.0)).collect(),
        );
        let result = (|| -> Result<f64, String> {
            let xi = operator_bound(&f, &concat, &space).map_err(|e| e.to_string())?;
            let pieces = decompose_functional(&f, &concat, &xi, &space).map_err(|e| e.to_string())?;
            // Reconstruction and per-piece bounds on sampled arguments.
            let mut worst = 0.0f64;
            for _ in 0..100 {
                let x = random_element(&mut rng, &space, 3.0);
                let fx = apply_functional(&f, &x, &space).map_err(|e| e.to_string())?;
                let vals: Vec<RandomScalar> = pieces
                    .iter()
                    .map(|p| apply_functional(p, &x, &space).map_err(|e| e.to_string()))
                    .collect::<Result<_, _>>()?;
                let glued = RandomScalar::glue(&events, &vals).map_err(|e| e.to_string())?;
                if glued != fx {
                    return Err("glued decomposition does not reconstruct f exactly".into());
                }
                for (k, p) in pieces.iter().enumerate() {
                    let lhs = vals[k].abs();
                    let norm = eval_seminorm(&parts[k], &x, &space).map_err(|e| e.to_string())?;
                    let rhs = xi.mul(&norm).map_err(|e| e.to_string())?;
                    for atom in 0..n_atoms {
                        let gap = lhs.get(atom).raw() - rhs.get(atom).raw();
                        if gap > tolerance {
                            return Err(format!("piece {k} violates its bound on atom {atom}"));
                        }
                        worst = worst.max(gap.max(0.0));
                    }
                    let _ = p;
                }
            }
            // Finite-scale hull exhibition: f is type II for the part
            // family; every piece is type I; the gluing is exact.
            let family: Vec<Seminorm> = parts.clone();
            if !is_type_ii(&f, &family, &space).map_err(|e| e.to_string())? {
                return Err("f not type II for its own domination family".into());
            }
            for p in &pieces {
                if !is_type_i(p, &family, &space).map_err(|e| e.to_string())? {
                    return Err("a decomposition piece is not type I".into());
                }
            }
            if !is_type_i(&f, &family, &space).map_err(|e| e.to_string())? {
                // The classes coincide at finite scale.
                return Err("type classes diverged".into());
            }
            let reglued = ModuleFunctional::glue(&events, &pieces, &space);
            if reglued != f {
                return Err("gluing the pieces does not return f".into());
            }
            // Direct hull membership: f lies in the concatenation hull of
            // its own pieces.
            let hull = crate::module::ConcatHull::new(&pieces, &space).map_err(|e| e.to_string())?;
            if hull.len() <= 4096 && !hull.contains(&f, 0.0) {
                return Err("f escapes the concatenation hull of its pieces".into());
            }
            Ok(worst)
        })();
        instances.push(match result {
            Ok(gap) => InstanceResult {
                id,
                kind: "decomposition".into(),
                passed: gap <= tolerance,
                gap,
                detail: String::new(),
            },
            Err(e) => InstanceResult {
                id,
                kind: "decomposition".into(),
                passed: false,
                gap: f64::INFINITY,
                detail: e,
            },
        });
    }
    CheckSummary::from_instances(
        "decomposition",
        "derived: event-masked pieces, exact reconstruction, hull membership",
        tolerance,
        instances,
    )
}

/// Randomized scalar and seminorm axioms: homogeneity, triangle
/// inequality, the extended-arithmetic convention table and the
/// sign/inverse identities.
pub fn check_axioms(seed: u64, count: usize, sizes: Sizes) -> CheckSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa71c_e5);
    let mut failures = Vec::new();
    let mut checked = 0usize;
    // Convention table, asserted once, exactly. The same-operand
    // subtractions are the whole point here.
    #[allow(clippy::eq_op)]
    {
        let pi = Xr::POS_INF;
        let ni = Xr::NEG_INF;
        let table = [
            (pi + pi, pi),
            (pi + ni, pi),
            (ni + pi, pi),
            (pi - pi, pi),
            (ni - ni, pi),
            (ni + ni, ni),
            (Xr::ZERO * pi, Xr::ZERO),
            (Xr::ZERO * ni, Xr::ZERO),
            (pi * Xr::ZERO, Xr::ZERO),
            (ni * Xr::ZERO, Xr::ZERO),
            (Xr::new(2.0) * ni, ni),
            (Xr::new(-2.0) * ni, pi),
        ];
        for (i, (got, want)) in table.iter().enumerate() {
            checked += 1;
            if got != want {
                failures.push(format!("convention entry {i}: {got} != {want}"));
            }
        }
    }
    let space = {
        let mut srng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
        random_space(&mut srng, sizes.max_atoms, sizes.max_dims)
    };
    for i in 0..count {
        let x = random_element(&mut rng, &space, 10.0);
        let y = random_element(&mut rng, &space, 10.0);
        let xi = RandomScalar::from_f64s(
            &(0..space.n_coarse())
                .map(|_| {
                    if rng.random_bool(0.1) {
                        0.0
                    } else {
                        rng.random_range(-4.0..4.0)
                    }
                })
                .collect::<Vec<_>>(),
        );
        // Draw from the whole catalogue: plain p-norms, weighted sups,
        // finite suprema and concatenations.
        let p = [1.0, 2.0, 3.0, f64::INFINITY][rng.random_range(0..4)];
        let sn = match rng.random_range(0..4) {
            0 => Seminorm::cond_p(p),
            1 => Seminorm::weighted(
                (0..space.n_fine()).map(|_| rng.random_range(0.0..2.0)).collect(),
            ),
            2 => Seminorm::sup(vec![
                Seminorm::cond_p(p),
                Seminorm::cond_p(1.0),
            ]),
            _ => {
                let split = rng.random_range(0..space.n_coarse());
                let left = Event::from_mask(
                    (0..space.n_coarse()).map(|a| a <= split).collect(),
                );
                if left.is_full() {
                    Seminorm::cond_p(p)
                } else {
                    Seminorm::concat(
                        vec![left.clone(), left.complement()],
                        vec![Seminorm::cond_p(p), Seminorm::cond_p(f64::INFINITY)],
                    )
                }
            }
        };
        checked += 1;
        // (RNM-1): absolute homogeneity, tolerance 1e-12 relative.
        let lhs = eval_seminorm(&sn, &x.scale_by(&xi, &space), &space).unwrap();
        let rhs = eval_seminorm(&sn, &x, &space).unwrap().mul(&xi.abs()).unwrap();
        let scale = 1.0 + rhs.values().iter().map(|v| v.raw().abs()).fold(0.0, f64::max);
        if lhs.max_abs_gap(&rhs).raw() > 1e-12 * scale {
            failures.push(format!("check {i}: homogeneity gap"));
        }
        // (RN-3): triangle inequality, tolerance 1e-10.
        let tri_lhs = eval_seminorm(&sn, &x.add(&y), &space).unwrap();
        let tri_rhs = eval_seminorm(&sn, &x, &space)
            .unwrap()
            .add(&eval_seminorm(&sn, &y, &space).unwrap())
            .unwrap();
        if !tri_lhs.le_within(&tri_rhs, 1e-10) {
            failures.push(format!("check {i}: triangle inequality"));
        }
        // Sign and generalized-inverse identities (sign exact; the product
        // identity is exact at machine resolution).
        let sgn = xi.sign().unwrap();
        if sgn.mul(&xi).unwrap() != xi.abs() {
            failures.push(format!("check {i}: sign identity"));
        }
        let inv = xi.gen_inverse().unwrap();
        let gap = xi.mul(&inv).unwrap().max_abs_gap(&xi.indicator_nonzero());
        if gap.raw() > 4.0 * f64::EPSILON {
            failures.push(format!("check {i}: generalized inverse identity"));
        }
    }
    let instances = vec![InstanceResult {
        id: 0,
        kind: "axioms".into(),
        passed: failures.is_empty(),
        gap: if failures.is_empty() { 0.0 } else { f64::INFINITY },
        detail: failures.join("; "),
    }];
    let mut summary = CheckSummary::from_instances(
        "scalar-seminorm-axioms",
        "derived: randomized homogeneity/triangle checks plus the exact convention table",
        1e-10,
        instances,
    );
    summary.instances[0].detail =
        format!("{checked} randomized checks{}", if failures.is_empty() { "" } else { "; FAILURES" });
    summary
}

/// Banding probe across the required atom counts, with the closure
/// witness norms.
pub fn check_counterexample(seed: u64, count: usize) -> CheckSummary {
    let mut instances = Vec::new();
    let mut id = 0u64;
    for &n in &[4usize, 16, 64] {
        for k in 0..count.div_ceil(3) as u64 {
            let mut rng = instance_rng(seed, 8, id + k);
            let masses = vec![1.0 / n as f64; n];
            let space = StratifiedSpace::diagonal(&masses).expect("diagonal space");
            let eps = RandomScalar::from_f64s(
                &(0..n).map(|_| rng.random_range(0.02..2.0)).collect::<Vec<_>>(),
            );
            let result = counterexample_probe(&eps, &space);
            instances.push(match result {
                Ok(report) => {
                    let norms_ok = report
                        .closure_witness_norms
                        .iter()
                        .enumerate()
                        .all(|(i, &v)| v <= 1.0 / (i + 1) as f64 + 1e-15);
                    InstanceResult {
                        id: id + k,
                        kind: format!("probe-n{n}"),
                        passed: report.passed() && norms_ok,
                        gap: 0.0,
                        detail: if report.passed() {
                            String::new()
                        } else {
                            format!("{:?}", report.checks)
                        },
                    }
                }
                Err(e) => InstanceResult {
                    id: id + k,
                    kind: format!("probe-n{n}"),
                    passed: false,
                    gap: f64::INFINITY,
                    detail: e.to_string(),
                },
            });
        }
        id += count.div_ceil(3) as u64;
    }
    CheckSummary::from_instances(
        "counterexample-probe",
        "derived: banding construction with exact membership checks",
        0.0,
        instances,
    )
}

/// Fast discrete Legendre transform against the quadratic-time reference.
pub fn check_dlt(seed: u64, n_seeds: usize) -> CheckSummary {
    let mut instances = Vec::with_capacity(n_seeds);
    for id in 0..n_seeds as u64 {
        let mut rng = instance_rng(seed, 9, id);
        let n = rng.random_range(2..=512);
        let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        let vals: Vec<Xr> = xs
            .iter()
            .map(|_| {
                if rng.random_bool(0.05) {
                    Xr::POS_INF
                } else {
                    Xr::new(rng.random_range(-5.0..5.0))
                }
            })
            .collect();
        let m = rng.random_range(1..=257);
        let ys: Vec<f64> = (0..m).map(|_| rng.random_range(-12.0..12.0)).collect();
        let fast = fenchel::dlt::legendre_grid(&xs, &vals, &ys);
        let brute = fenchel::dlt::legendre_brute(&xs, &vals, &ys);
        let passed = fast == brute;
        instances.push(InstanceResult {
            id,
            kind: format!("dlt-n{}", xs.len()),
            passed,
            gap: if passed { 0.0 } else { f64::INFINITY },
            detail: if passed { String::new() } else { "fast transform differs from brute force".into() },
        });
    }
    CheckSummary::from_instances(
        "legendre-oracle",
        "derived: monotone-chain transform equals the quadratic-time reference exactly",
        0.0,
        instances,
    )
}

/// Risk-demo axioms and duality.
pub fn check_risk(seed: u64, count: usize, sizes: Sizes, tolerance: f64) -> CheckSummary {
    let mut instances = Vec::with_capacity(count.min(20));
    for id in 0..count.min(20) as u64 {
        let mut rng = instance_rng(seed, 10, id);
        let space = random_space(&mut rng, sizes.max_atoms, sizes.max_dims);
        let gamma = rng.random_range(0.3..3.0);
        let result = (|| -> Result<f64, String> {
            let spec = EntropicRiskSpec::new(gamma, space.clone()).map_err(|e| e.to_string())?;
            let axioms = risk::risk_axiom_report(&spec, 100, seed ^ id).map_err(|e| e.to_string())?;
            if !axioms.passed() {
                return Err(format!("axioms fail: {axioms:?}"));
            }
            let duality = risk::risk_duality_report(&spec, 200, seed ^ (id + 1))
                .map_err(|e| e.to_string())?;
            Ok(duality.max_gap)
        })();
        instances.push(match result {
            Ok(gap) => InstanceResult {
                id,
                kind: "risk".into(),
                passed: gap <= tolerance,
                gap,
                detail: String::new(),
            },
            Err(e) => InstanceResult {
                id,
                kind: "risk".into(),
                passed: false,
                gap: f64::INFINITY,
                detail: e,
            },
        });
    }
    CheckSummary::from_instances(
        "risk-demo",
        "derived: axioms on samples and the dual representation gap",
        tolerance,
        instances,
    )
}

// ---------------------------------------------------------------------
// Instance and report files
// ---------------------------------------------------------------------

/// A typed instance file: the space fields at the top level plus any of
/// the payload sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(flatten)]
    pub space: StratifiedSpace,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scalars: Option<Vec<RandomScalar>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub functionals: Option<Vec<ModuleFunctional>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seminorms: Option<Vec<Seminorm>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sets: Option<Vec<StratifiedConvexSet>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub functions: Option<Vec<StratifiedConvexFunction>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gamma: Option<f64>,
}

pub fn load_instance(path: &Path) -> Result<InstanceFile, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Schema {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

pub fn save_instance(instance: &InstanceFile, path: &Path) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(instance).expect("instances serialize");
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_report(report: &Report, path: &Path) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(report).expect("reports serialize");
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_report(path: &Path) -> Result<Report, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Schema {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// Generate a deterministic corpus of instance files under `dir`.
pub fn generate_instances(
    seed: u64,
    sizes: Sizes,
    dir: &Path,
) -> Result<Vec<std::path::PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut paths = Vec::new();
    for id in 0..sizes.count as u64 {
        let mut rng = instance_rng(seed, 99, id);
        let space = random_space(&mut rng, sizes.max_atoms, sizes.max_dims);
        let n_atoms = space.n_coarse();
        let scalars = vec![RandomScalar::from_f64s(
            &(0..n_atoms).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<_>>(),
        )];
        let functionals = vec![ModuleFunctional::new(
            (0..space.n_fine()).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )];
        let seminorms = vec![Seminorm::cond_p(f64::INFINITY), Seminorm::cond_p(1.0)];
        let sets = vec![ball_of_seminorm(
            &Seminorm::cond_p(f64::INFINITY),
            &RandomScalar::constant(n_atoms, Xr::ONE),
            &space,
        )
        .expect("box ball")];
        let functions = vec![random_closed_max_affine(&mut rng, &space)];
        let instance = InstanceFile {
            space,
            scalars: Some(scalars),
            functionals: Some(functionals),
            seminorms: Some(seminorms),
            sets: Some(sets),
            functions: Some(functions),
            gamma: Some(rng.random_range(0.5..2.0)),
        };
        let path = dir.join(format!("instance_{id:04}.json"));
        save_instance(&instance, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut config = ExperimentConfig::new(Suite::Duality, 1);
        config.sizes.count = 0;
        assert!(matches!(config.validate(), Err(HarnessError::BadConfig(_))));
        config.sizes.count = 1;
        assert!(config.validate().is_ok());
    }

    #[test]
    fn suite_reports_are_deterministic() {
        let mut config = ExperimentConfig::new(Suite::Counterexample, 42);
        config.sizes.count = 6;
        let a = run_suite(&config).unwrap();
        let b = run_suite(&config).unwrap();
        let ja = serde_json::to_string(&a.strip_timings()).unwrap();
        let jb = serde_json::to_string(&b.strip_timings()).unwrap();
        assert_eq!(ja, jb);
        assert!(a.passed);
    }

    #[test]
    fn small_duality_suite_passes() {
        let mut config = ExperimentConfig::new(Suite::Duality, 7);
        config.sizes.count = 5;
        let report = run_suite(&config).unwrap();
        assert!(report.passed, "{:?}", report.worst_gaps);
        assert_eq!(report.checks.len(), 3);
    }

    #[test]
    fn instance_round_trip() {
        let dir = std::env::temp_dir().join(format!("stratcvx-test-{}", std::process::id()));
        let paths = generate_instances(3, Sizes { max_atoms: 3, max_dims: 2, count: 2 }, &dir).unwrap();
        assert_eq!(paths.len(), 2);
        for p in &paths {
            let loaded = load_instance(p).unwrap();
            let other = dir.join("copy.json");
            save_instance(&loaded, &other).unwrap();
            let again = load_instance(&other).unwrap();
            assert_eq!(loaded, again);
        }
        // Missing fields produce schema errors naming the field.
        let bad = dir.join("bad.json");
        std::fs::write(&bad, r#"{"fine": [[0]], "coarse": [[0]]}"#).unwrap();
        match load_instance(&bad) {
            Err(HarnessError::Schema { detail, .. }) => {
                assert!(detail.contains("space") || detail.contains("weights"), "{detail}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
