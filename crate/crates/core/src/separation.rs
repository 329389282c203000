//! Stratified hyperplane separation between a point and a closed convex
//! body, certificate normalization, separation by neighborhoods, and the
//! banding probe exhibiting the positive-minimum set's failure mode.

use crate::event::Event;
use crate::geom;
use crate::lp::{LinearProgram, LpOutcome, Rel};
use crate::module::{apply_functional, ModuleElement, ModuleFunctional, Seminorm};
use crate::scalar::{RandomScalar, Xr};
use crate::sets::{contains_event, random_distance, PositiveMinSet, SetError, StratifiedConvexSet};
use crate::space::StratifiedSpace;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STRICT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SeparationError {
    #[error("x lies in the body on every atom; nothing to separate")]
    AlreadyMember,
    #[error("strict separation requires x outside the body on every atom, but it is a member on atoms {0:?}")]
    PreconditionViolated(Vec<usize>),
    #[error("atom {0}: body is empty")]
    EmptyBody(usize),
    #[error("normalization needs a balanced body and a certificate strict on every atom")]
    NormalizationPrecondition,
    #[error("atom {0}: |f(x)| + sup|f| vanishes; the zero functional cannot be normalized")]
    ZeroFunctional(usize),
    #[error("neighborhood separation requires the translated body to avoid zero on every atom; violating atoms {0:?}")]
    NeighborhoodPrecondition(Vec<usize>),
    #[error("probe requires one coordinate per atom (fine = coarse)")]
    ProbeSpace,
    #[error("probe radii must be finite and strictly positive; atom {0} has {1}")]
    NonPositiveEps(usize, f64),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Module(#[from] crate::module::ModuleError),
}

/// A stratified separation certificate: the functional strictly separates
/// `x` from the body exactly on `strict_event` and realizes equality of
/// suprema on its complement (there the functional is zero).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationCertificate {
    pub functional: ModuleFunctional,
    pub strict_event: Event,
    /// Per atom: f(x) - sup over the body of f.
    pub margin: RandomScalar,
    pub sup_over_m: RandomScalar,
}

impl SeparationCertificate {
    /// Margin sign pattern against the strict event, within `tol`.
    pub fn is_sound(&self, tol: f64) -> bool {
        self.margin.values().iter().enumerate().all(|(atom, v)| {
            if self.strict_event.contains(atom) {
                v.raw() > 0.0
            } else {
                v.raw().abs() <= tol
            }
        })
    }
}

/// Separate `x` from a closed nonempty stratified body: on atoms at
/// positive distance, the Euclidean projection residual yields a strictly
/// separating direction; elsewhere the zero functional realizes equality of
/// suprema.
pub fn separate(
    x: &ModuleElement,
    m: &StratifiedConvexSet,
    family: &[Seminorm],
    space: &StratifiedSpace,
) -> Result<SeparationCertificate, SeparationError> {
    let membership = contains_event(m, x, space);
    if membership.is_full() {
        return Err(SeparationError::AlreadyMember);
    }
    let dist = random_distance(x, m, family, space)?;
    let strict_event =
        Event::from_mask(dist.values().iter().map(|v| v.raw() > STRICT_TOL).collect());
    let mut blocks = Vec::with_capacity(space.n_coarse());
    let mut sup_vals = Vec::with_capacity(space.n_coarse());
    let mut margins = Vec::with_capacity(space.n_coarse());
    for atom in 0..space.n_coarse() {
        let d = space.atom_dim(atom);
        if m.body(atom).is_empty() {
            return Err(SeparationError::EmptyBody(atom));
        }
        if strict_event.contains(atom) {
            let block = x.block(space, atom);
            let proj = m.body(atom).project(&block).ok_or(SeparationError::EmptyBody(atom))?;
            let g: Vec<f64> = block.iter().zip(&proj).map(|(a, b)| a - b).collect();
            let sup = m.body(atom).support(&g).ok_or(SeparationError::EmptyBody(atom))?;
            let value = geom::dot(&g, &block);
            blocks.push(g);
            sup_vals.push(Xr::new(sup));
            margins.push(Xr::new(value - sup));
        } else {
            blocks.push(vec![0.0; d]);
            sup_vals.push(Xr::ZERO);
            margins.push(Xr::ZERO);
        }
    }
    Ok(SeparationCertificate {
        functional: ModuleFunctional::from_blocks(space, &blocks),
        strict_event,
        margin: RandomScalar::new(margins),
        sup_over_m: RandomScalar::new(sup_vals),
    })
}

/// Separation strict on every atom; requires `x` outside the body on all
/// of them.
pub fn separate_strict(
    x: &ModuleElement,
    m: &StratifiedConvexSet,
    family: &[Seminorm],
    space: &StratifiedSpace,
) -> Result<SeparationCertificate, SeparationError> {
    let membership = contains_event(m, x, space);
    if !membership.is_empty() {
        return Err(SeparationError::PreconditionViolated(membership.indices()));
    }
    let cert = separate(x, m, family, space)?;
    if !cert.strict_event.is_full() {
        // Outside every atom body but below the distance threshold
        // somewhere: numerically touching.
        return Err(SeparationError::PreconditionViolated(
            cert.strict_event.complement().indices(),
        ));
    }
    Ok(cert)
}

/// Rescale a certificate on a balanced body by the generalized inverse of
/// the midpoint `(|f(x)| + sup|f|)/2`: afterwards the body's supremum is
/// at most 1 on every atom while `|f'(x)|` exceeds 1.
pub fn normalize_separator(
    cert: &SeparationCertificate,
    m: &StratifiedConvexSet,
    x: &ModuleElement,
    space: &StratifiedSpace,
) -> Result<ModuleFunctional, SeparationError> {
    if m.balanced.iter().any(|b| !b) || !cert.strict_event.is_full() {
        return Err(SeparationError::NormalizationPrecondition);
    }
    let fx = apply_functional(&cert.functional, x, space)?;
    let xi = fx.abs();
    // On a balanced body sup |f| = sup f.
    let eta = cert.sup_over_m.clone();
    let mid = xi.add(&eta).map_err(|_| SeparationError::NormalizationPrecondition)?.scale(0.5);
    if let Some(atom) = mid.values().iter().position(|v| v.raw() == 0.0) {
        return Err(SeparationError::ZeroFunctional(atom));
    }
    let scale = mid.gen_inverse().map_err(|_| SeparationError::NormalizationPrecondition)?;
    Ok(cert.functional.scale_by(&scale, space))
}

/// Outcome of separation by neighborhoods: a seminorm glued from per-atom
/// selections, the radius scale, and the certified per-atom gaps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeighborhoodSeparation {
    pub seminorm: Seminorm,
    /// The per-atom scale: the half-radius ball `{||u|| <= radius/2}`
    /// around x stays clear of the body, and the quarter-radius inflations
    /// of both x and the body are disjoint.
    pub radius: RandomScalar,
    /// Per-atom sup-distance between `x + (radius/2) ball` and the body.
    pub half_ball_gap: RandomScalar,
    /// Per-atom sup-distance between the quarter-radius inflations of x
    /// and of the body.
    pub inflated_gap: RandomScalar,
}

/// Separation by neighborhoods: translate `x` to the origin, take the
/// per-atom scale `1 ∧ d(x, M)`, select per atom a finite sup from the
/// family at distance above half the scale, and glue the selections into a
/// single seminorm. Both disjointness contracts are certified by LP.
pub fn neighborhood_separation(
    x: &ModuleElement,
    m: &StratifiedConvexSet,
    family: &[Seminorm],
    space: &StratifiedSpace,
) -> Result<NeighborhoodSeparation, SeparationError> {
    let membership = contains_event(m, x, space);
    if !membership.is_empty() {
        return Err(SeparationError::NeighborhoodPrecondition(membership.indices()));
    }
    let dist = random_distance(x, m, family, space)?;
    if let Some(atom) = dist.values().iter().position(|v| v.raw() <= STRICT_TOL) {
        return Err(SeparationError::NeighborhoodPrecondition(vec![atom]));
    }
    let eps_star = dist.min_const(Xr::ONE);

    // Per-atom selection: first subset of the family (in enumeration
    // order) whose distance exceeds half the scale on that atom.
    let n_atoms = space.n_coarse();
    let subsets = family_subsets(family.len());
    let mut selection = vec![usize::MAX; n_atoms];
    for (si, subset) in subsets.iter().enumerate() {
        let sub: Vec<Seminorm> = subset.iter().map(|&i| family[i].clone()).collect();
        let d_q = random_distance(x, m, &sub, space)?;
        for atom in 0..n_atoms {
            if selection[atom] == usize::MAX
                && d_q.get(atom).raw() > eps_star.get(atom).raw() / 2.0
            {
                selection[atom] = si;
            }
        }
        if selection.iter().all(|&s| s != usize::MAX) {
            break;
        }
    }
    // The full family always qualifies, so every atom is selected.
    debug_assert!(selection.iter().all(|&s| s != usize::MAX));

    // Group atoms by selection into the gluing events.
    let mut used: Vec<usize> = selection.clone();
    used.sort_unstable();
    used.dedup();
    let events: Vec<Event> = used
        .iter()
        .map(|&si| {
            Event::from_mask((0..n_atoms).map(|a| selection[a] == si).collect())
        })
        .collect();
    let parts: Vec<Seminorm> = used
        .iter()
        .map(|&si| {
            let sub: Vec<Seminorm> = subsets[si].iter().map(|&i| family[i].clone()).collect();
            if sub.len() == 1 {
                sub.into_iter().next().unwrap()
            } else {
                Seminorm::sup(sub)
            }
        })
        .collect();
    let glued = if events.len() == 1 {
        parts.into_iter().next().unwrap()
    } else {
        Seminorm::concat(events, parts)
    };

    // Certify both contracts per atom.
    let mut half_gap = Vec::with_capacity(n_atoms);
    let mut quarter_gap = Vec::with_capacity(n_atoms);
    for atom in 0..n_atoms {
        let r = eps_star.get(atom).raw();
        let rows = glued
            .resolve_at(atom)
            .ball_rows(space, atom)
            .ok_or(SetError::NonPolytopal(f64::NAN))?;
        let block = x.block(space, atom);
        let g_half =
            inflated_gap_lp(&block, m, atom, space, &rows, r / 2.0, 0.0)?;
        let g_quarter =
            inflated_gap_lp(&block, m, atom, space, &rows, r / 4.0, r / 4.0)?;
        half_gap.push(Xr::new(g_half));
        quarter_gap.push(Xr::new(g_quarter));
    }
    let half_ball_gap = RandomScalar::new(half_gap);
    let inflated_gap = RandomScalar::new(quarter_gap);
    if let Some(atom) = half_ball_gap.values().iter().position(|v| v.raw() <= 0.0) {
        return Err(SeparationError::NeighborhoodPrecondition(vec![atom]));
    }
    if let Some(atom) = inflated_gap.values().iter().position(|v| v.raw() <= 0.0) {
        return Err(SeparationError::NeighborhoodPrecondition(vec![atom]));
    }
    Ok(NeighborhoodSeparation {
        seminorm: glued,
        radius: eps_star,
        half_ball_gap,
        inflated_gap,
    })
}

fn family_subsets(n: usize) -> Vec<Vec<usize>> {
    let mut subsets: Vec<Vec<usize>> = (1..(1u32 << n.min(16)))
        .map(|mask| (0..n).filter(|j| mask & (1 << j) != 0).collect())
        .collect();
    subsets.sort_by_key(|s: &Vec<usize>| (s.len(), s.clone()));
    if n > 16 {
        subsets.push((0..n).collect());
    }
    subsets
}

/// Sup-norm distance between `block + {||u|| <= r1}` and
/// `body + {||u|| <= r2}` on one atom: a single LP. `r2 = 0` drops the
/// second inflation.
fn inflated_gap_lp(
    block: &[f64],
    m: &StratifiedConvexSet,
    atom: usize,
    _space: &StratifiedSpace,
    ball_rows: &[Vec<f64>],
    r1: f64,
    r2: f64,
) -> Result<f64, SeparationError> {
    let d = block.len();
    let body = m.body(atom);
    let verts = body
        .vertex_list()
        .ok_or(SeparationError::EmptyBody(atom))?;
    if verts.is_empty() {
        return Err(SeparationError::EmptyBody(atom));
    }
    let n = verts.len();
    // Variables: u1 (d), u2 (d), lambda (n), t.
    let nv = 2 * d + n + 1;
    let ti = 2 * d + n;
    let mut lp = LinearProgram::new(nv);
    let mut obj = vec![0.0; nv];
    obj[ti] = 1.0;
    let lp_err = crate::module::ModuleError::from_lp;
    lp.minimize(&obj).map_err(lp_err)?;
    for a in ball_rows {
        let mut row = vec![0.0; nv];
        row[..d].copy_from_slice(a);
        lp.add_row(&row, Rel::Le, r1).map_err(lp_err)?;
        if r2 > 0.0 {
            let mut row2 = vec![0.0; nv];
            row2[d..2 * d].copy_from_slice(a);
            lp.add_row(&row2, Rel::Le, r2).map_err(lp_err)?;
        }
    }
    if r2 == 0.0 {
        for j in 0..d {
            let mut row = vec![0.0; nv];
            row[d + j] = 1.0;
            lp.add_row(&row, Rel::Eq, 0.0).map_err(lp_err)?;
        }
    }
    // |block_j + u1_j - (V lambda)_j - u2_j| <= t per coordinate.
    for j in 0..d {
        for sign in [1.0, -1.0] {
            let mut row = vec![0.0; nv];
            row[j] = sign;
            row[d + j] = -sign;
            for (i, v) in verts.iter().enumerate() {
                row[2 * d + i] = -sign * v[j];
            }
            row[ti] = -1.0;
            lp.add_row(&row, Rel::Le, -sign * block[j]).map_err(lp_err)?;
        }
    }
    let mut simplex = vec![0.0; nv];
    for s in simplex.iter_mut().skip(2 * d).take(n) {
        *s = 1.0;
    }
    lp.add_row(&simplex, Rel::Eq, 1.0).map_err(lp_err)?;
    for i in 0..n {
        let mut row = vec![0.0; nv];
        row[2 * d + i] = -1.0;
        lp.add_row(&row, Rel::Le, 0.0).map_err(lp_err)?;
    }
    match lp.solve().map_err(lp_err)? {
        LpOutcome::Optimal { value, .. } => Ok(value.max(0.0)),
        _ => Err(SeparationError::EmptyBody(atom)),
    }
}

/// Result of the banding probe on the positive-minimum set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Index of the first nonempty magnitude band (1-based).
    pub band_index: usize,
    /// The band event `A_U`.
    pub band_event: Event,
    /// The witness `y0`: radii on the band, one elsewhere.
    pub witness: ModuleElement,
    /// Exact checks performed, with outcomes.
    pub checks: Vec<(String, bool)>,
    /// Sup-norm of the k-th closure witness `1/k`, per atom, for k = 1..K.
    pub closure_witness_norms: Vec<f64>,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }
}

/// Banding probe: partition the atoms by the magnitude of the radius,
/// pick the first nonempty band `A_U`, and exhibit the witness
/// `y0 = 1 off A_U, eps on A_U` that lies in the positive-minimum set
/// while its restriction to `A_U` lies in the ball `{|x| <= eps}`. Also
/// records the closure witnesses `1/k` showing the set is not closed.
pub fn counterexample_probe(
    eps: &RandomScalar,
    space: &StratifiedSpace,
) -> Result<ProbeReport, SeparationError> {
    if (0..space.n_coarse()).any(|a| space.atom_dim(a) != 1) {
        return Err(SeparationError::ProbeSpace);
    }
    for (atom, v) in eps.values().iter().enumerate() {
        if !v.is_finite() || v.raw() <= 0.0 {
            return Err(SeparationError::NonPositiveEps(atom, v.raw()));
        }
    }
    let n = space.n_coarse();
    // Band of a radius e: 1 for e >= 1, else the n with 1/n <= e < 1/(n-1).
    let band_of = |e: f64| -> usize {
        if e >= 1.0 {
            return 1;
        }
        let mut k = (1.0 / e).ceil() as usize;
        while k > 1 && 1.0 / ((k - 1) as f64) <= e {
            k -= 1;
        }
        k.max(1)
    };
    let bands: Vec<usize> = eps.values().iter().map(|v| band_of(v.raw())).collect();
    let band_index = *bands.iter().min().expect("nonempty atom set");
    let band_event = Event::from_mask(bands.iter().map(|&b| b == band_index).collect());

    let coords: Vec<f64> = (0..n)
        .map(|atom| if band_event.contains(atom) { eps.get(atom).raw() } else { 1.0 })
        .collect();
    let witness = ModuleElement::new(coords);

    let mut checks = Vec::new();
    checks.push(("witness lies in the positive-minimum set".to_string(),
        PositiveMinSet::contains(&witness)));
    // On the band the witness block equals eps, so the restriction lies in
    // the ball {|x| <= eps} exactly.
    let in_ball_on_band = band_event
        .indices()
        .iter()
        .all(|&atom| witness.coords[atom].abs() <= eps.get(atom).raw());
    checks.push(("witness restricted to the band lies in the ball".to_string(), in_ball_on_band));
    checks.push((
        "band event intersects the ball with the inflated set".to_string(),
        PositiveMinSet::contains(&witness) && in_ball_on_band && !band_event.is_empty(),
    ));
    // Divergence from the nonatomic setting: the set is open, not closed;
    // the witnesses 1/k stay members while converging to the non-member 0.
    let mut closure_witness_norms = Vec::new();
    let mut closure_ok = true;
    for k in 1..=10usize {
        let w = PositiveMinSet::closure_witness(k, space.n_fine());
        closure_ok &= PositiveMinSet::contains(&w);
        closure_witness_norms.push(1.0 / k as f64);
    }
    closure_ok &= !PositiveMinSet::contains(&ModuleElement::zero(space.n_fine()));
    checks.push(("closure witnesses 1/k are members while 0 is not".to_string(), closure_ok));

    Ok(ProbeReport { band_index, band_event, witness, checks, closure_witness_norms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::ball_of_seminorm;
    use crate::space::Partition;

    fn four_point_space() -> StratifiedSpace {
        StratifiedSpace::new(
            vec![0.25; 4],
            Partition::singletons(4),
            Partition::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap(),
        )
        .unwrap()
    }

    fn unit_box(space: &StratifiedSpace) -> StratifiedConvexSet {
        ball_of_seminorm(
            &Seminorm::cond_p(f64::INFINITY),
            &RandomScalar::from_f64s(&vec![1.0; space.n_coarse()]),
            space,
        )
        .unwrap()
    }

    #[test]
    fn separate_unit_box_example() {
        let s = four_point_space();
        let m = unit_box(&s);
        let family = vec![Seminorm::cond_p(f64::INFINITY)];
        // Blocks (2, 0) outside and (0.5, 0.5) inside.
        let x = ModuleElement::new(vec![2.0, 0.0, 0.5, 0.5]);
        let cert = separate(&x, &m, &family, &s).unwrap();
        assert_eq!(cert.strict_event.indices(), vec![0]);
        // Projection of (2,0) is (1,0): direction (1,0), margin 1.
        let g0 = cert.functional.block(&s, 0);
        assert!((g0[0] - 1.0).abs() < 1e-8 && g0[1].abs() < 1e-8);
        assert!((cert.margin.get(0).raw() - 1.0).abs() < 1e-8);
        assert!((cert.sup_over_m.get(0).raw() - 1.0).abs() < 1e-8);
        // Off the strict event the functional vanishes and both sides agree.
        assert_eq!(cert.functional.block(&s, 1), vec![0.0, 0.0]);
        assert_eq!(cert.margin.get(1), Xr::ZERO);
        assert!(cert.is_sound(1e-9));
    }

    #[test]
    fn separate_all_atoms_outside() {
        let s = four_point_space();
        let m = unit_box(&s);
        let family = vec![Seminorm::cond_p(f64::INFINITY)];
        let x = ModuleElement::new(vec![2.0, 0.0, 0.0, -3.0]);
        let cert = separate(&x, &m, &family, &s).unwrap();
        assert!(cert.strict_event.is_full());
        assert!(cert.margin.values().iter().all(|v| v.raw() > 0.9));
        // Member on all atoms: error.
        let inside = ModuleElement::new(vec![0.1, 0.2, 0.3, 0.4]);
        assert!(matches!(
            separate(&inside, &m, &family, &s),
            Err(SeparationError::AlreadyMember)
        ));
    }

    #[test]
    fn separate_from_a_point() {
        let s = four_point_space();
        // Single-point bodies: y = (0.5, 0.5) per atom.
        let m = StratifiedConvexSet::from_vertices(vec![
            vec![vec![0.5, 0.5]],
            vec![vec![0.5, 0.5]],
        ]);
        let family = vec![Seminorm::cond_p(f64::INFINITY)];
        let x = ModuleElement::new(vec![1.5, 0.5, 0.5, 2.5]);
        let cert = separate(&x, &m, &family, &s).unwrap();
        assert!(cert.strict_event.is_full());
        // The direction is proportional to x - y blockwise.
        let g0 = cert.functional.block(&s, 0);
        assert!((g0[0] - 1.0).abs() < 1e-8 && g0[1].abs() < 1e-8);
        let g1 = cert.functional.block(&s, 1);
        assert!(g1[0].abs() < 1e-8 && (g1[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn strict_separation_and_precondition() {
        let s = four_point_space();
        let m = unit_box(&s);
        let family = vec![Seminorm::cond_p(f64::INFINITY)];
        let outside = ModuleElement::new(vec![2.0, 2.0, -2.0, 0.0]);
        let cert = separate_strict(&outside, &m, &family, &s).unwrap();
        assert!(cert.strict_event.is_full());
        // Distance 1 per atom gives margin >= 1 scaled by the direction.
        assert!(cert.margin.values().iter().all(|v| v.raw() >= 0.9));
        // Membership on one atom violates the precondition.
        let half = ModuleElement::new(vec![2.0, 2.0, 0.0, 0.0]);
        match separate_strict(&half, &m, &family, &s) {
            Err(SeparationError::PreconditionViolated(atoms)) => assert_eq!(atoms, vec![1]),
            other => panic!("expected precondition violation, got {other:?}"),
        }
    }

    #[test]
    fn normalization_contract() {
        let s = four_point_space();
        let m = unit_box(&s);
        // Hand-built certificate: f = (1,0) per atom, x block (3,0):
        // |f(x)| = 3, sup over the box = 1.
        let f = ModuleFunctional::new(vec![1.0, 0.0, 1.0, 0.0]);
        let x = ModuleElement::new(vec![3.0, 0.0, 3.0, 0.0]);
        let cert = SeparationCertificate {
            functional: f,
            strict_event: Event::full(2),
            margin: RandomScalar::from_f64s(&[2.0, 2.0]),
            sup_over_m: RandomScalar::from_f64s(&[1.0, 1.0]),
        };
        let fp = normalize_separator(&cert, &m, &x, &s).unwrap();
        // Scale = 1 / ((3 + 1)/2) = 0.5: sup becomes 0.5 <= 1, |f'(x)| = 1.5.
        let fpx = apply_functional(&fp, &x, &s).unwrap();
        assert!(fpx.values().iter().all(|v| (v.raw() - 1.5).abs() < 1e-12));
        let sup: Vec<f64> = (0..2)
            .map(|atom| m.body(atom).support(&fp.block(&s, atom)).unwrap())
            .collect();
        assert!(sup.iter().all(|&v| v <= 1.0 + 1e-12));
        assert!(fpx.values().iter().any(|v| v.raw().abs() > 1.0));
        // Zero functional: rejected.
        let zero_cert = SeparationCertificate {
            functional: ModuleFunctional::zero(4),
            strict_event: Event::full(2),
            margin: RandomScalar::zero(2),
            sup_over_m: RandomScalar::zero(2),
        };
        assert!(matches!(
            normalize_separator(&zero_cert, &m, &ModuleElement::zero(4), &s),
            Err(SeparationError::ZeroFunctional(0))
        ));
    }

    #[test]
    fn neighborhood_separation_box_at_distance_one() {
        let s = four_point_space();
        // Body: box [2,4]^2 per atom; x = 0 is at sup-distance 2, capped
        // at scale 1.
        let body: Vec<Vec<f64>> = vec![
            vec![2.0, 2.0],
            vec![4.0, 2.0],
            vec![2.0, 4.0],
            vec![4.0, 4.0],
        ];
        let m = StratifiedConvexSet::from_vertices(vec![body.clone(), body]);
        let family = vec![Seminorm::cond_p(f64::INFINITY)];
        let x = ModuleElement::zero(4);
        let ns = neighborhood_separation(&x, &m, &family, &s).unwrap();
        assert!(ns.radius.values().iter().all(|v| (v.raw() - 1.0).abs() < 1e-9));
        // Half-radius ball keeps a gap of distance - 1/2 = 1.5.
        assert!(ns.half_ball_gap.values().iter().all(|v| (v.raw() - 1.5).abs() < 1e-7));
        // Quarter-radius inflations of both sides: gap 2 - 1/4 - 1/4 = 1.5.
        assert!(ns.inflated_gap.values().iter().all(|v| v.raw() > 0.0));
        // Touching body: precondition fails.
        let touching = StratifiedConvexSet::from_vertices(vec![
            vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            vec![vec![2.0, 2.0], vec![3.0, 2.0]],
        ]);
        assert!(matches!(
            neighborhood_separation(&x, &touching, &family, &s),
            Err(SeparationError::NeighborhoodPrecondition(_))
        ));
    }

    #[test]
    fn neighborhood_separation_distance_one_exact() {
        // Sup-distance exactly 1: radius = 1, half-ball gap = 1/2,
        // quarter-inflation gap = 1/2.
        let s = four_point_space();
        let body: Vec<Vec<f64>> = vec![
            vec![1.0, -1.0],
            vec![2.0, -1.0],
            vec![1.0, 1.0],
            vec![2.0, 1.0],
        ];
        let m = StratifiedConvexSet::from_vertices(vec![body.clone(), body]);
        let family = vec![Seminorm::cond_p(f64::INFINITY)];
        let ns = neighborhood_separation(&ModuleElement::zero(4), &m, &family, &s).unwrap();
        assert!(ns.radius.values().iter().all(|v| (v.raw() - 1.0).abs() < 1e-9));
        assert!(ns.half_ball_gap.values().iter().all(|v| (v.raw() - 0.5).abs() < 1e-7));
        assert!(ns.inflated_gap.values().iter().all(|v| (v.raw() - 0.5).abs() < 1e-7));
    }

    #[test]
    fn neighborhood_single_atom_degenerates() {
        let s = StratifiedSpace::new(
            vec![0.5, 0.5],
            Partition::singletons(2),
            Partition::trivial(2),
        )
        .unwrap();
        let m = StratifiedConvexSet::from_vertices(vec![vec![
            vec![3.0, 0.0],
            vec![3.0, 1.0],
            vec![4.0, 0.0],
        ]]);
        let family = vec![Seminorm::cond_p(f64::INFINITY), Seminorm::cond_p(1.0)];
        let ns = neighborhood_separation(&ModuleElement::zero(2), &m, &family, &s).unwrap();
        // One atom: no gluing, a plain seminorm comes back.
        assert!(!matches!(ns.seminorm, Seminorm::Concat { .. }));
        assert!(ns.half_ball_gap.get(0).raw() > 0.0);
    }

    #[test]
    fn certificate_serde_round_trip() {
        let s = four_point_space();
        let m = unit_box(&s);
        let family = vec![Seminorm::cond_p(f64::INFINITY)];
        let x = ModuleElement::new(vec![2.0, 0.0, 0.5, 0.5]);
        let cert = separate(&x, &m, &family, &s).unwrap();
        let text = serde_json::to_string(&cert).unwrap();
        let back: SeparationCertificate = serde_json::from_str(&text).unwrap();
        assert_eq!(back.functional, cert.functional);
        assert_eq!(back.strict_event, cert.strict_event);
        assert_eq!(back.margin, cert.margin);
    }

    #[test]
    fn probe_constant_radius() {
        let s = StratifiedSpace::diagonal(&[0.25; 4]).unwrap();
        let eps = RandomScalar::from_f64s(&[1.0; 4]);
        let report = counterexample_probe(&eps, &s).unwrap();
        assert_eq!(report.band_index, 1);
        assert!(report.band_event.is_full());
        assert_eq!(report.witness.coords, vec![1.0; 4]);
        assert!(report.passed());
    }

    #[test]
    fn probe_banding() {
        let s = StratifiedSpace::diagonal(&[0.25; 4]).unwrap();
        let eps = RandomScalar::from_f64s(&[1.0, 0.5, 1.0 / 3.0, 0.25]);
        let report = counterexample_probe(&eps, &s).unwrap();
        assert_eq!(report.band_index, 1);
        assert_eq!(report.band_event.indices(), vec![0]);
        // eps = 1 on the band, 1 elsewhere: the witness is all ones.
        assert_eq!(report.witness.coords, vec![1.0; 4]);
        assert!(report.passed());

        // Without the band-1 atom the first nonempty band is 2.
        let eps2 = RandomScalar::from_f64s(&[0.6, 0.5, 1.0 / 3.0, 0.25]);
        let report2 = counterexample_probe(&eps2, &s).unwrap();
        assert_eq!(report2.band_index, 2);
        assert_eq!(report2.band_event.indices(), vec![0, 1]);
        assert_eq!(report2.witness.coords, vec![0.6, 0.5, 1.0, 1.0]);
        assert!(report2.passed());
    }

    #[test]
    fn probe_rejects_bad_input() {
        let s = StratifiedSpace::diagonal(&[0.5, 0.5]).unwrap();
        let eps = RandomScalar::from_f64s(&[1.0, 0.0]);
        assert!(matches!(
            counterexample_probe(&eps, &s),
            Err(SeparationError::NonPositiveEps(1, _))
        ));
        // Non-diagonal space rejected.
        let s2 = StratifiedSpace::new(
            vec![0.25; 4],
            Partition::singletons(4),
            Partition::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            counterexample_probe(&RandomScalar::from_f64s(&[1.0, 1.0]), &s2),
            Err(SeparationError::ProbeSpace)
        ));
    }
}
