//! Stratified convex bodies: per-atom polytopes in the atom's coordinates,
//! membership events, seminorm balls, the gauge functional and the random
//! distance to a body.

use crate::event::Event;
use crate::geom::{
    self, facet_enumeration, minkowski_weyl, project_onto_vpoly, HPolytope,
};
use crate::lp::{LinearProgram, LpOutcome, Rel};
use crate::module::{ModuleElement, Seminorm};
use crate::scalar::{RandomScalar, Xr};
use crate::space::StratifiedSpace;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MEMBERSHIP_TOL: f64 = 1e-10;
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SetError {
    #[error("atom {0}: body has neither a vertex list nor an H-form")]
    MissingBody(usize),
    #[error("atom {atom}: the two body forms disagree ({detail})")]
    FormMismatch { atom: usize, detail: String },
    #[error("atom {0}: flag validation failed: {1}")]
    FlagViolation(usize, String),
    #[error("atom {0}: operation needs a nonempty body")]
    EmptyBody(usize),
    #[error("set has {0} atom bodies but the space has {1} atoms")]
    AtomCount(usize, usize),
    #[error("ball radii must be finite and strictly positive per atom")]
    BadRadius,
    #[error("seminorm is not polytopal (exponent p = {0}); use the approximating pair")]
    NonPolytopal(f64),
    #[error("approximating balls support a single conditional p-norm with 1 < p < inf and atom dimension <= 3")]
    UnsupportedApproximation,
    #[error("distance supports polytopal seminorm families or a single conditional 2-norm")]
    UnsupportedDistanceFamily,
    #[error("gauge needs the zero-containment and balance flags to hold")]
    GaugeFlags,
    #[error(transparent)]
    Module(#[from] crate::module::ModuleError),
}

/// One atom's convex body, in vertex form, H-form or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomBody {
    #[serde(rename = "V", skip_serializing_if = "Option::is_none", default)]
    pub vertices: Option<Vec<Vec<f64>>>,
    #[serde(rename = "H", skip_serializing_if = "Option::is_none", default)]
    pub hrep: Option<HPolytope>,
}

impl AtomBody {
    pub fn from_vertices(vertices: Vec<Vec<f64>>) -> Self {
        AtomBody { vertices: Some(vertices), hrep: None }
    }

    pub fn from_hrep(hrep: HPolytope) -> Self {
        AtomBody { vertices: None, hrep: Some(hrep) }
    }

    pub fn is_empty(&self) -> bool {
        match (&self.vertices, &self.hrep) {
            (Some(v), _) => v.is_empty(),
            (None, Some(h)) => h.is_empty(),
            (None, None) => true,
        }
    }

    pub fn contains(&self, block: &[f64], tol: f64) -> bool {
        if let Some(h) = &self.hrep {
            return h.contains(block, tol);
        }
        match &self.vertices {
            Some(v) if !v.is_empty() => geom::vpoly_contains(v, block, tol.max(RESIDUAL_TOL)),
            _ => false,
        }
    }

    /// `sup { c·y : y in body }`; `None` for an empty body.
    pub fn support(&self, c: &[f64]) -> Option<f64> {
        match (&self.vertices, &self.hrep) {
            (Some(v), _) if !v.is_empty() => {
                Some(v.iter().map(|p| geom::dot(c, p)).fold(f64::NEG_INFINITY, f64::max))
            }
            (Some(_), _) => None,
            (None, Some(h)) => h.support(c),
            (None, None) => None,
        }
    }

    /// Euclidean projection of a block onto the body.
    pub fn project(&self, block: &[f64]) -> Option<Vec<f64>> {
        match (&self.vertices, &self.hrep) {
            (Some(v), _) if !v.is_empty() => Some(project_onto_vpoly(v, block)),
            (Some(_), _) => None,
            (None, Some(h)) => geom::project_onto_hpoly(h, block),
            (None, None) => None,
        }
    }

    /// A vertex list, enumerating from the H-form when necessary.
    pub fn vertex_list(&self) -> Option<Vec<Vec<f64>>> {
        if let Some(v) = &self.vertices {
            return Some(v.clone());
        }
        let h = self.hrep.as_ref()?;
        let gf = minkowski_weyl(h);
        if !gf.rays.is_empty() || !gf.lineality.is_empty() {
            return None;
        }
        Some(gf.vertices)
    }

    pub fn hrep_or_facets(&self) -> Option<HPolytope> {
        if let Some(h) = &self.hrep {
            return Some(h.clone());
        }
        let v = self.vertices.as_ref()?;
        if v.is_empty() {
            return None;
        }
        Some(facet_enumeration(v))
    }
}

/// A product-over-atoms convex set: one body per coarse atom plus the
/// per-atom zero-containment and balance flags. The product structure makes
/// the set stable under gluing by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedConvexSet {
    pub bodies: Vec<AtomBody>,
    pub contains_zero: Vec<bool>,
    pub balanced: Vec<bool>,
}

impl StratifiedConvexSet {
    /// Validating constructor: checks body-form agreement and the declared
    /// flags on every atom.
    pub fn new(
        bodies: Vec<AtomBody>,
        contains_zero: Vec<bool>,
        balanced: Vec<bool>,
        space: &StratifiedSpace,
    ) -> Result<Self, SetError> {
        if bodies.len() != space.n_coarse() {
            return Err(SetError::AtomCount(bodies.len(), space.n_coarse()));
        }
        let set = StratifiedConvexSet { bodies, contains_zero, balanced };
        set.validate(space)?;
        Ok(set)
    }

    pub fn from_vertices(per_atom: Vec<Vec<Vec<f64>>>) -> Self {
        let n = per_atom.len();
        StratifiedConvexSet {
            bodies: per_atom.into_iter().map(AtomBody::from_vertices).collect(),
            contains_zero: vec![false; n],
            balanced: vec![false; n],
        }
    }

    pub fn with_flags(mut self, contains_zero: bool, balanced: bool) -> Self {
        for f in &mut self.contains_zero {
            *f = contains_zero;
        }
        for f in &mut self.balanced {
            *f = balanced;
        }
        self
    }

    pub fn validate(&self, space: &StratifiedSpace) -> Result<(), SetError> {
        for atom in 0..space.n_coarse() {
            let body = &self.bodies[atom];
            if body.vertices.is_none() && body.hrep.is_none() {
                return Err(SetError::MissingBody(atom));
            }
            let d = space.atom_dim(atom);
            // Cross-check when both forms are present: V inside H, and the
            // H-form's own vertices inside conv(V).
            if let (Some(v), Some(h)) = (&body.vertices, &body.hrep) {
                for p in v {
                    if !h.contains(p, 1e-7) {
                        return Err(SetError::FormMismatch {
                            atom,
                            detail: format!("vertex {p:?} violates the H-form"),
                        });
                    }
                }
                let gf = minkowski_weyl(h);
                if v.is_empty() != gf.is_empty() {
                    return Err(SetError::FormMismatch {
                        atom,
                        detail: "one form is empty, the other is not".into(),
                    });
                }
                for hv in &gf.vertices {
                    if !v.is_empty() && !geom::vpoly_contains(v, hv, 1e-6) {
                        return Err(SetError::FormMismatch {
                            atom,
                            detail: format!("H-form vertex {hv:?} escapes conv(V)"),
                        });
                    }
                }
            }
            let zero = vec![0.0; d];
            if self.contains_zero[atom] && !body.contains(&zero, MEMBERSHIP_TOL) {
                return Err(SetError::FlagViolation(atom, "zero is not a member".into()));
            }
            if self.balanced[atom] {
                // Symmetry under negation: with a vertex list, every
                // negated vertex must be a member; with an H-form, every
                // negated row must be implied.
                if let Some(v) = &body.vertices {
                    for p in v {
                        let neg: Vec<f64> = p.iter().map(|x| -x).collect();
                        if !body.contains(&neg, 1e-7) {
                            return Err(SetError::FlagViolation(
                                atom,
                                format!("negation of vertex {p:?} escapes the body"),
                            ));
                        }
                    }
                } else if let Some(h) = &body.hrep {
                    for (row, &b) in h.a.iter().zip(&h.b) {
                        let neg: Vec<f64> = row.iter().map(|x| -x).collect();
                        match h.support(&neg) {
                            Some(s) if s <= b + 1e-7 => {}
                            _ => {
                                return Err(SetError::FlagViolation(
                                    atom,
                                    "H-form is not symmetric under negation".into(),
                                ))
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_atoms(&self) -> usize {
        self.bodies.len()
    }

    pub fn body(&self, atom: usize) -> &AtomBody {
        &self.bodies[atom]
    }
}

/// The largest event on which `x`'s blocks lie in the atom bodies.
pub fn contains_event(m: &StratifiedConvexSet, x: &ModuleElement, space: &StratifiedSpace) -> Event {
    let mask = (0..space.n_coarse())
        .map(|atom| {
            let block = x.block(space, atom);
            m.bodies[atom].contains(&block, MEMBERSHIP_TOL)
        })
        .collect();
    Event::from_mask(mask)
}

/// The ball `{x : ||x||_s <= eps per atom}` of a polytopal seminorm, with
/// both forms where the body is bounded.
pub fn ball_of_seminorm(
    s: &Seminorm,
    eps: &RandomScalar,
    space: &StratifiedSpace,
) -> Result<StratifiedConvexSet, SetError> {
    s.validate(space)?;
    if !eps.is_finite() || eps.values().iter().any(|v| v.raw() <= 0.0) {
        return Err(SetError::BadRadius);
    }
    let mut bodies = Vec::with_capacity(space.n_coarse());
    for atom in 0..space.n_coarse() {
        let resolved = s.resolve_at(atom);
        let Some(rows) = resolved.ball_rows(space, atom) else {
            let p = first_nonpolytopal_p(&resolved);
            return Err(SetError::NonPolytopal(p));
        };
        let r = eps.get(atom).raw();
        let h = HPolytope::new(rows.clone(), vec![r; rows.len()]);
        let gf = minkowski_weyl(&h);
        let vertices = (gf.rays.is_empty() && gf.lineality.is_empty()).then_some(gf.vertices);
        bodies.push(AtomBody { vertices, hrep: Some(h) });
    }
    let n = space.n_coarse();
    Ok(StratifiedConvexSet { bodies, contains_zero: vec![true; n], balanced: vec![true; n] })
}

fn first_nonpolytopal_p(s: &Seminorm) -> f64 {
    match s {
        Seminorm::CondP { p } => *p,
        Seminorm::Sup { parts } => parts
            .iter()
            .map(first_nonpolytopal_p)
            .find(|p| p.is_finite() && (*p - 1.0).abs() > 1e-14)
            .unwrap_or(f64::NAN),
        _ => f64::NAN,
    }
}

/// Inscribed/circumscribed polytopal pair for a non-polytopal conditional
/// p-ball, with relative Hausdorff gap below `rel_gap`. Only meant for
/// sampling checks, never for exact separation.
pub fn ball_of_seminorm_approx(
    p: f64,
    eps: &RandomScalar,
    space: &StratifiedSpace,
    rel_gap: f64,
) -> Result<(StratifiedConvexSet, StratifiedConvexSet), SetError> {
    if !(p > 1.0) || p.is_infinite() {
        return Err(SetError::UnsupportedApproximation);
    }
    if !eps.is_finite() || eps.values().iter().any(|v| v.raw() <= 0.0) {
        return Err(SetError::BadRadius);
    }
    let mut inner_bodies = Vec::new();
    let mut outer_bodies = Vec::new();
    for atom in 0..space.n_coarse() {
        let d = space.atom_dim(atom);
        if d > 3 {
            return Err(SetError::UnsupportedApproximation);
        }
        let profile = space.atom_profile(atom);
        let r = eps.get(atom).raw();
        let norm = |z: &[f64]| -> f64 {
            z.iter()
                .zip(&profile)
                .map(|(v, w)| w * v.abs().powf(p))
                .sum::<f64>()
                .powf(1.0 / p)
        };
        let dirs = direction_grid(d, rel_gap);
        let mut verts = Vec::with_capacity(dirs.len());
        let mut rows = Vec::with_capacity(dirs.len());
        let mut rhs = Vec::with_capacity(dirs.len());
        for u in &dirs {
            let n = norm(u);
            if n <= 0.0 {
                continue;
            }
            let boundary: Vec<f64> = u.iter().map(|v| v * r / n).collect();
            verts.push(boundary.clone());
            // Tangent plane at the boundary point: gradient of the p-norm.
            let nb = norm(&boundary);
            let grad: Vec<f64> = boundary
                .iter()
                .zip(&profile)
                .map(|(v, w)| w * v.abs().powf(p - 1.0) * v.signum() / nb.powf(p - 1.0))
                .collect();
            let b = geom::dot(&grad, &boundary);
            rows.push(grad);
            rhs.push(b);
        }
        inner_bodies.push(AtomBody::from_vertices(verts));
        outer_bodies.push(AtomBody::from_hrep(HPolytope::new(rows, rhs)));
    }
    let n = space.n_coarse();
    let inner = StratifiedConvexSet {
        bodies: inner_bodies,
        contains_zero: vec![true; n],
        balanced: vec![true; n],
    };
    let outer = StratifiedConvexSet {
        bodies: outer_bodies,
        contains_zero: vec![true; n],
        balanced: vec![true; n],
    };
    Ok((inner, outer))
}

/// Direction set dense enough for the requested relative gap: the gap of a
/// tangent/chord sandwich scales like the squared angular resolution.
fn direction_grid(d: usize, rel_gap: f64) -> Vec<Vec<f64>> {
    match d {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => {
            let theta = (2.0 * rel_gap).sqrt();
            let n = ((2.0 * std::f64::consts::PI / theta).ceil() as usize).max(16);
            (0..n)
                .map(|k| {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect()
        }
        _ => {
            // Fibonacci sphere.
            let theta = (2.0 * rel_gap).sqrt();
            let n = ((4.0 * std::f64::consts::PI / (theta * theta)).ceil() as usize).max(64);
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            (0..n)
                .map(|k| {
                    let y = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let rad = (1.0 - y * y).max(0.0).sqrt();
                    let a = golden * k as f64;
                    vec![rad * a.cos(), y, rad * a.sin()]
                })
                .collect()
        }
    }
}

/// Per-atom Minkowski gauge of a zero-containing balanced body. The closed
/// H-form ratio realizes the lattice infimum `inf {t >= 0 : x in t body}`;
/// vertex-form bodies go through the conic LP.
pub fn gauge(
    u: &StratifiedConvexSet,
    x: &ModuleElement,
    space: &StratifiedSpace,
) -> Result<RandomScalar, SetError> {
    if u.contains_zero.iter().any(|f| !f) || u.balanced.iter().any(|f| !f) {
        return Err(SetError::GaugeFlags);
    }
    let values = (0..space.n_coarse())
        .map(|atom| gauge_block(&u.bodies[atom], &x.block(space, atom)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RandomScalar::new(values))
}

fn gauge_block(body: &AtomBody, block: &[f64]) -> Result<Xr, SetError> {
    let scale = 1.0 + block.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if let Some(h) = &body.hrep {
        let mut t = 0.0f64;
        for (row, &b) in h.a.iter().zip(&h.b) {
            let v = geom::dot(row, block);
            if b > MEMBERSHIP_TOL {
                t = t.max(v / b);
            } else if v > MEMBERSHIP_TOL * scale {
                // Constraint through the origin excludes every scaling.
                return Ok(Xr::POS_INF);
            }
        }
        return Ok(Xr::new(t.max(0.0)));
    }
    let Some(verts) = &body.vertices else {
        return Ok(Xr::POS_INF);
    };
    if verts.is_empty() {
        return Ok(Xr::POS_INF);
    }
    // min sum(mu) s.t. sum mu_j v_j = block, mu >= 0.
    let n = verts.len();
    let d = block.len();
    let mut lp = LinearProgram::new(n);
    lp.minimize(&vec![1.0; n]).map_err(crate::module::ModuleError::from_lp)?;
    for j in 0..d {
        let row: Vec<f64> = verts.iter().map(|v| v[j]).collect();
        lp.add_row(&row, Rel::Eq, block[j]).map_err(crate::module::ModuleError::from_lp)?;
    }
    for i in 0..n {
        let mut row = vec![0.0; n];
        row[i] = -1.0;
        lp.add_row(&row, Rel::Le, 0.0).map_err(crate::module::ModuleError::from_lp)?;
    }
    match lp.solve().map_err(crate::module::ModuleError::from_lp)? {
        LpOutcome::Optimal { value, .. } => Ok(Xr::new(value.max(0.0))),
        LpOutcome::Infeasible => Ok(Xr::POS_INF),
        LpOutcome::Unbounded => Ok(Xr::POS_INF),
    }
}

/// Report of the gauge sandwich checks: interior points have gauge < 1 on
/// every atom, points with gauge < 1 everywhere are members, members have
/// gauge <= 1 per atom.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandwichReport {
    pub checked_interior: usize,
    pub checked_strict: usize,
    pub checked_members: usize,
    pub violations: Vec<String>,
}

impl SandwichReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn gauge_sandwich_check(
    u: &StratifiedConvexSet,
    space: &StratifiedSpace,
    n_points: usize,
    rng: &mut impl Rng,
) -> Result<SandwichReport, SetError> {
    let mut report = SandwichReport {
        checked_interior: 0,
        checked_strict: 0,
        checked_members: 0,
        violations: Vec::new(),
    };
    let verts: Vec<Vec<Vec<f64>>> = (0..space.n_coarse())
        .map(|atom| {
            u.bodies[atom]
                .vertex_list()
                .ok_or(SetError::EmptyBody(atom))
        })
        .collect::<Result<_, _>>()?;
    for atom in 0..space.n_coarse() {
        if verts[atom].is_empty() {
            return Err(SetError::EmptyBody(atom));
        }
    }
    for trial in 0..n_points {
        // A random member: per atom a convex combination of vertices,
        // shrunk toward zero for the interior leg.
        let shrink = match trial % 3 {
            0 => rng.random_range(0.1..0.9),
            1 => 1.0,
            _ => rng.random_range(0.9..1.0),
        };
        let blocks: Vec<Vec<f64>> = (0..space.n_coarse())
            .map(|atom| {
                let vs = &verts[atom];
                let mut weights: Vec<f64> = (0..vs.len()).map(|_| rng.random_range(0.0..1.0)).collect();
                let total: f64 = weights.iter().sum();
                for w in &mut weights {
                    *w /= total;
                }
                let d = vs[0].len();
                let mut b = vec![0.0; d];
                for (w, v) in weights.iter().zip(vs) {
                    for j in 0..d {
                        b[j] += w * v[j] * shrink;
                    }
                }
                b
            })
            .collect();
        let x = ModuleElement::from_blocks(space, &blocks);
        let g = gauge(u, &x, space)?;
        let member_event = contains_event(u, &x, space);

        if shrink < 0.9 {
            report.checked_interior += 1;
            // Interior leg: convex combinations shrunk strictly inside have
            // gauge < 1 on every atom.
            if !g.values().iter().all(|v| v.raw() < 1.0) {
                report
                    .violations
                    .push(format!("interior point with gauge {g:?} not < 1: x = {:?}", x.coords));
            }
        }
        // Strict leg: gauge < 1 everywhere forces membership on all atoms.
        if g.values().iter().all(|v| v.raw() < 1.0 - 1e-12) {
            report.checked_strict += 1;
            if !member_event.is_full() {
                report.violations.push(format!(
                    "gauge {g:?} < 1 on every atom but membership event is {:?}",
                    member_event.indices()
                ));
            }
        }
        // Membership leg: members have gauge <= 1 per atom.
        if member_event.is_full() {
            report.checked_members += 1;
            if !g.values().iter().all(|v| v.raw() <= 1.0 + RESIDUAL_TOL) {
                report
                    .violations
                    .push(format!("member with gauge {g:?} above 1: x = {:?}", x.coords));
            }
        }
    }
    Ok(report)
}

/// The random distance from `x` to the set under the supremum of the
/// family: per atom, `inf_y max_s ||x - y||_s`. Polytopal families reduce
/// to one LP per atom; a single conditional 2-norm goes through weighted
/// Euclidean projection.
pub fn random_distance(
    x: &ModuleElement,
    m: &StratifiedConvexSet,
    family: &[Seminorm],
    space: &StratifiedSpace,
) -> Result<RandomScalar, SetError> {
    if family.is_empty() {
        return Err(crate::module::ModuleError::EmptySeminormFamily.into());
    }
    for s in family {
        s.validate(space)?;
    }
    let mut values = Vec::with_capacity(space.n_coarse());
    for atom in 0..space.n_coarse() {
        if m.bodies[atom].is_empty() {
            return Err(SetError::EmptyBody(atom));
        }
        let block = x.block(space, atom);
        let resolved: Vec<Seminorm> = family.iter().map(|s| s.resolve_at(atom)).collect();
        let polytopal = resolved.iter().all(|s| s.is_polytopal_at(space, atom));
        let v = if polytopal {
            distance_lp(&block, &m.bodies[atom], &resolved, space, atom)?
        } else if let [Seminorm::CondP { p }] = resolved.as_slice() {
            if (*p - 2.0).abs() < 1e-14 {
                distance_weighted_l2(&block, &m.bodies[atom], space, atom)?
            } else {
                return Err(SetError::UnsupportedDistanceFamily);
            }
        } else {
            return Err(SetError::UnsupportedDistanceFamily);
        };
        values.push(Xr::new(v));
    }
    Ok(RandomScalar::new(values))
}

fn distance_lp(
    block: &[f64],
    body: &AtomBody,
    seminorms: &[Seminorm],
    space: &StratifiedSpace,
    atom: usize,
) -> Result<f64, SetError> {
    let d = block.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for s in seminorms {
        rows.extend(s.ball_rows(space, atom).expect("checked polytopal"));
    }
    let lp_err = crate::module::ModuleError::from_lp;
    if let Some(verts) = &body.vertices {
        // Variables: lambda over vertices, then t.
        let n = verts.len();
        let nv = n + 1;
        let mut lp = LinearProgram::new(nv);
        let mut obj = vec![0.0; nv];
        obj[n] = 1.0;
        lp.minimize(&obj).map_err(lp_err)?;
        for a in &rows {
            // a·(block - V lambda) <= t.
            let mut row = vec![0.0; nv];
            for (i, v) in verts.iter().enumerate() {
                row[i] = -geom::dot(a, v);
            }
            row[n] = -1.0;
            lp.add_row(&row, Rel::Le, -geom::dot(a, block)).map_err(lp_err)?;
        }
        let mut simplex = vec![0.0; nv];
        for s in simplex.iter_mut().take(n) {
            *s = 1.0;
        }
        lp.add_row(&simplex, Rel::Eq, 1.0).map_err(lp_err)?;
        for i in 0..n {
            let mut row = vec![0.0; nv];
            row[i] = -1.0;
            lp.add_row(&row, Rel::Le, 0.0).map_err(lp_err)?;
        }
        let mut tpos = vec![0.0; nv];
        tpos[n] = -1.0;
        lp.add_row(&tpos, Rel::Le, 0.0).map_err(lp_err)?;
        match lp.solve().map_err(lp_err)? {
            LpOutcome::Optimal { value, .. } => Ok(value.max(0.0)),
            _ => Err(SetError::EmptyBody(atom)),
        }
    } else {
        let h = body.hrep.as_ref().ok_or(SetError::MissingBody(atom))?;
        // Variables: y (free), t.
        let nv = d + 1;
        let mut lp = LinearProgram::new(nv);
        let mut obj = vec![0.0; nv];
        obj[d] = 1.0;
        lp.minimize(&obj).map_err(lp_err)?;
        for a in &rows {
            // a·(block - y) <= t.
            let mut row: Vec<f64> = a.iter().map(|v| -v).collect();
            row.push(-1.0);
            lp.add_row(&row, Rel::Le, -geom::dot(a, block)).map_err(lp_err)?;
        }
        for (hr, &hb) in h.a.iter().zip(&h.b) {
            let mut row = hr.clone();
            row.push(0.0);
            lp.add_row(&row, Rel::Le, hb).map_err(lp_err)?;
        }
        let mut tpos = vec![0.0; nv];
        tpos[d] = -1.0;
        lp.add_row(&tpos, Rel::Le, 0.0).map_err(lp_err)?;
        match lp.solve().map_err(lp_err)? {
            LpOutcome::Optimal { value, .. } => Ok(value.max(0.0)),
            LpOutcome::Infeasible => Err(SetError::EmptyBody(atom)),
            LpOutcome::Unbounded => Ok(0.0),
        }
    }
}

fn distance_weighted_l2(
    block: &[f64],
    body: &AtomBody,
    space: &StratifiedSpace,
    atom: usize,
) -> Result<f64, SetError> {
    let profile = space.atom_profile(atom);
    let scale = |z: &[f64]| -> Vec<f64> {
        z.iter().zip(&profile).map(|(v, w)| v * w.sqrt()).collect()
    };
    let verts = body.vertex_list().ok_or(SetError::EmptyBody(atom))?;
    if verts.is_empty() {
        return Err(SetError::EmptyBody(atom));
    }
    let scaled_verts: Vec<Vec<f64>> = verts.iter().map(|v| scale(v)).collect();
    let scaled_block = scale(block);
    let proj = project_onto_vpoly(&scaled_verts, &scaled_block);
    let dist = proj
        .iter()
        .zip(&scaled_block)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(dist)
}

/// The set `{x : every coordinate of x is strictly positive}`. Open at
/// finite scale (not closed): the constant witnesses `1/k` stay members
/// while converging to the non-member zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositiveMinSet;

impl PositiveMinSet {
    pub fn contains(x: &ModuleElement) -> bool {
        x.coords.iter().all(|&v| v > 0.0)
    }

    /// The k-th closure witness: the constant element 1/k.
    pub fn closure_witness(k: usize, n_fine: usize) -> ModuleElement {
        assert!(k >= 1);
        ModuleElement::new(vec![1.0 / k as f64; n_fine])
    }
}
