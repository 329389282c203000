//! Module elements over the stratified space, module functionals, the
//! seminorm catalogue, operator bounds and the decomposition of dominated
//! functionals along a concatenated seminorm.

use crate::event::Event;
use crate::geom::dot;
use crate::lp::{LinearProgram, LpOutcome, Rel};
use crate::scalar::{RandomScalar, Xr};
use crate::space::StratifiedSpace;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModuleError {
    #[error("coordinate count {0} does not match the {1} fine blocks of the space")]
    CoordLength(usize, usize),
    #[error("conditional p-norm requires p >= 1, got {0}")]
    BadExponent(f64),
    #[error("finite supremum needs a nonempty seminorm family")]
    EmptySeminormFamily,
    #[error("concatenated seminorm needs its events to partition the atoms, one part per event")]
    BadConcatenation,
    #[error("weighted coordinate seminorm needs one nonnegative weight per fine block")]
    BadWeights,
    #[error("domination fails on atom {atom}: bound {lhs} exceeds {rhs}; witness x = {witness:?}")]
    DominationFailed { atom: usize, lhs: f64, rhs: f64, witness: Vec<f64> },
    #[error("gluing enumeration of size {0} exceeds the cap {1}")]
    TooManyGluings(u128, u128),
    #[error("functional family must be nonempty")]
    EmptyFunctionalFamily,
    #[error(transparent)]
    Lp(#[from] crate::lp::LpError),
}

impl ModuleError {
    pub fn from_lp(e: crate::lp::LpError) -> Self {
        ModuleError::Lp(e)
    }
}

/// An element of the module: one real coordinate per fine block, acted on
/// blockwise by conditional scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModuleElement {
    pub coords: Vec<f64>,
}

impl ModuleElement {
    pub fn new(coords: Vec<f64>) -> Self {
        ModuleElement { coords }
    }

    pub fn zero(n_fine: usize) -> Self {
        ModuleElement { coords: vec![0.0; n_fine] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Coordinates of the block living on a coarse atom.
    pub fn block(&self, space: &StratifiedSpace, atom: usize) -> Vec<f64> {
        space.fine_blocks_in(atom).iter().map(|&j| self.coords[j]).collect()
    }

    pub fn from_blocks(space: &StratifiedSpace, blocks: &[Vec<f64>]) -> Self {
        let mut coords = vec![0.0; space.n_fine()];
        for (atom, block) in blocks.iter().enumerate() {
            for (&j, &v) in space.fine_blocks_in(atom).iter().zip(block) {
                coords[j] = v;
            }
        }
        ModuleElement { coords }
    }

    /// Module action: multiply the block on each atom by the scalar's value
    /// there.
    pub fn scale_by(&self, xi: &RandomScalar, space: &StratifiedSpace) -> ModuleElement {
        let mut coords = self.coords.clone();
        for (j, c) in coords.iter_mut().enumerate() {
            let atom = space.coarse_of_fine(j);
            *c *= xi.get(atom).raw();
        }
        ModuleElement { coords }
    }

    pub fn add(&self, other: &ModuleElement) -> ModuleElement {
        ModuleElement {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &ModuleElement) -> ModuleElement {
        ModuleElement {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> ModuleElement {
        ModuleElement { coords: self.coords.iter().map(|v| c * v).collect() }
    }

    /// Multiplication by the indicator of an event: coordinates on atoms
    /// outside the event are zeroed.
    pub fn restrict(&self, event: &Event, space: &StratifiedSpace) -> ModuleElement {
        let mut coords = self.coords.clone();
        for (j, c) in coords.iter_mut().enumerate() {
            if !event.contains(space.coarse_of_fine(j)) {
                *c = 0.0;
            }
        }
        ModuleElement { coords }
    }

    /// Assemble an element from pieces over a partition of the atoms.
    pub fn glue(events: &[Event], parts: &[ModuleElement], space: &StratifiedSpace) -> ModuleElement {
        let mut coords = vec![0.0; space.n_fine()];
        for (event, part) in events.iter().zip(parts) {
            for (j, c) in coords.iter_mut().enumerate() {
                if event.contains(space.coarse_of_fine(j)) {
                    *c = part.coords[j];
                }
            }
        }
        ModuleElement { coords }
    }
}

/// A module homomorphism into the conditional scalars: one coefficient per
/// fine block, acting per coarse atom as the block inner product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleFunctional {
    pub coeffs: Vec<f64>,
}

impl ModuleFunctional {
    pub fn new(coeffs: Vec<f64>) -> Self {
        ModuleFunctional { coeffs }
    }

    pub fn zero(n_fine: usize) -> Self {
        ModuleFunctional { coeffs: vec![0.0; n_fine] }
    }

    pub fn block(&self, space: &StratifiedSpace, atom: usize) -> Vec<f64> {
        space.fine_blocks_in(atom).iter().map(|&j| self.coeffs[j]).collect()
    }

    pub fn from_blocks(space: &StratifiedSpace, blocks: &[Vec<f64>]) -> Self {
        ModuleFunctional { coeffs: ModuleElement::from_blocks(space, blocks).coords }
    }

    /// Zero the coefficients outside an event (the functional `x -> f(I_A x)`).
    pub fn restrict(&self, event: &Event, space: &StratifiedSpace) -> ModuleFunctional {
        let e = ModuleElement::new(self.coeffs.clone()).restrict(event, space);
        ModuleFunctional { coeffs: e.coords }
    }

    pub fn scale_by(&self, xi: &RandomScalar, space: &StratifiedSpace) -> ModuleFunctional {
        let e = ModuleElement::new(self.coeffs.clone()).scale_by(xi, space);
        ModuleFunctional { coeffs: e.coords }
    }

    pub fn glue(events: &[Event], parts: &[ModuleFunctional], space: &StratifiedSpace) -> ModuleFunctional {
        let elems: Vec<ModuleElement> =
            parts.iter().map(|f| ModuleElement::new(f.coeffs.clone())).collect();
        ModuleFunctional { coeffs: ModuleElement::glue(events, &elems, space).coords }
    }
}

/// `f(x)` as a conditional scalar: per atom the inner product of the blocks.
pub fn apply_functional(
    f: &ModuleFunctional,
    x: &ModuleElement,
    space: &StratifiedSpace,
) -> Result<RandomScalar, ModuleError> {
    if f.coeffs.len() != space.n_fine() {
        return Err(ModuleError::CoordLength(f.coeffs.len(), space.n_fine()));
    }
    if x.coords.len() != space.n_fine() {
        return Err(ModuleError::CoordLength(x.coords.len(), space.n_fine()));
    }
    let values = (0..space.n_coarse())
        .map(|atom| {
            let s: f64 = space
                .fine_blocks_in(atom)
                .iter()
                .map(|&j| f.coeffs[j] * x.coords[j])
                .sum();
            Xr::new(s)
        })
        .collect();
    Ok(RandomScalar::new(values))
}

/// The seminorm catalogue. Every variant maps module elements to
/// nonnegative finite conditional scalars, is absolutely homogeneous under
/// the module action and satisfies the triangle inequality per atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Seminorm {
    /// Conditional p-norm: per atom `(sum_j wbar_j |x_j|^p)^(1/p)` for
    /// finite p, the per-atom max of `|x_j|` for p = inf.
    CondP {
        #[serde(with = "p_serde")]
        p: f64,
    },
    /// Pointwise maximum of finitely many seminorms.
    Sup { parts: Vec<Seminorm> },
    /// Gluing of seminorms over a partition of the atoms.
    Concat { events: Vec<Event>, parts: Vec<Seminorm> },
    /// Per-atom weighted coordinate sup: `max_j u_j |x_j|`, one
    /// nonnegative weight per fine block.
    Weighted { weights: Vec<f64> },
}

mod p_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum PRepr {
        Number(f64),
        Inf(String),
    }

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
        if p.is_infinite() {
            PRepr::Inf("inf".into()).serialize(s)
        } else {
            PRepr::Number(*p).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match PRepr::deserialize(d)? {
            PRepr::Number(v) => Ok(v),
            PRepr::Inf(s) if s == "inf" => Ok(f64::INFINITY),
            PRepr::Inf(s) => Err(serde::de::Error::custom(format!("bad exponent {s:?}"))),
        }
    }
}

impl Seminorm {
    pub fn cond_p(p: f64) -> Self {
        Seminorm::CondP { p }
    }

    pub fn sup(parts: Vec<Seminorm>) -> Self {
        Seminorm::Sup { parts }
    }

    pub fn concat(events: Vec<Event>, parts: Vec<Seminorm>) -> Self {
        Seminorm::Concat { events, parts }
    }

    pub fn weighted(weights: Vec<f64>) -> Self {
        Seminorm::Weighted { weights }
    }

    pub fn validate(&self, space: &StratifiedSpace) -> Result<(), ModuleError> {
        match self {
            Seminorm::CondP { p } => {
                if !(*p >= 1.0) {
                    return Err(ModuleError::BadExponent(*p));
                }
            }
            Seminorm::Sup { parts } => {
                if parts.is_empty() {
                    return Err(ModuleError::EmptySeminormFamily);
                }
                for s in parts {
                    s.validate(space)?;
                }
            }
            Seminorm::Concat { events, parts } => {
                if events.len() != parts.len() || !Event::is_partition(events, space.n_coarse()) {
                    return Err(ModuleError::BadConcatenation);
                }
                for s in parts {
                    s.validate(space)?;
                }
            }
            Seminorm::Weighted { weights } => {
                if weights.len() != space.n_fine() || weights.iter().any(|&w| !(w >= 0.0)) {
                    return Err(ModuleError::BadWeights);
                }
            }
        }
        Ok(())
    }

    /// Resolve concatenations at a fixed atom, leaving a concatenation-free
    /// seminorm tree that agrees with `self` on that atom.
    pub fn resolve_at(&self, atom: usize) -> Seminorm {
        match self {
            Seminorm::Concat { events, parts } => {
                let k = events
                    .iter()
                    .position(|e| e.contains(atom))
                    .expect("concat events partition the atoms");
                parts[k].resolve_at(atom)
            }
            Seminorm::Sup { parts } => {
                Seminorm::Sup { parts: parts.iter().map(|s| s.resolve_at(atom)).collect() }
            }
            other => other.clone(),
        }
    }

    /// Per-atom value on a block of coordinates. `self` should be
    /// concatenation-resolved for this atom.
    pub fn eval_block(&self, block: &[f64], space: &StratifiedSpace, atom: usize) -> f64 {
        match self {
            Seminorm::CondP { p } => {
                if p.is_infinite() {
                    block.iter().map(|v| v.abs()).fold(0.0, f64::max)
                } else {
                    let profile = space.atom_profile(atom);
                    let s: f64 = block
                        .iter()
                        .zip(&profile)
                        .map(|(v, w)| w * v.abs().powf(*p))
                        .sum();
                    s.powf(1.0 / *p)
                }
            }
            Seminorm::Sup { parts } => parts
                .iter()
                .map(|s| s.eval_block(block, space, atom))
                .fold(0.0, f64::max),
            Seminorm::Concat { .. } => self.resolve_at(atom).eval_block(block, space, atom),
            Seminorm::Weighted { weights } => space
                .fine_blocks_in(atom)
                .iter()
                .zip(block)
                .map(|(&j, v)| weights[j] * v.abs())
                .fold(0.0, f64::max),
        }
    }

    /// Generator rows of the per-atom unit ball when the seminorm is
    /// polytopal there: the value equals `max_row row·z` and the ball is
    /// `{z : row·z <= 1 for all rows}`. `None` when a non-polytopal
    /// exponent occurs.
    pub fn ball_rows(&self, space: &StratifiedSpace, atom: usize) -> Option<Vec<Vec<f64>>> {
        let d = space.atom_dim(atom);
        match self {
            Seminorm::CondP { p } => {
                if p.is_infinite() {
                    let mut rows = Vec::with_capacity(2 * d);
                    for j in 0..d {
                        let mut r = vec![0.0; d];
                        r[j] = 1.0;
                        rows.push(r.clone());
                        r[j] = -1.0;
                        rows.push(r);
                    }
                    Some(rows)
                } else if (*p - 1.0).abs() < 1e-14 {
                    let profile = space.atom_profile(atom);
                    let mut rows = Vec::with_capacity(1 << d);
                    for signs in 0..(1usize << d) {
                        let row: Vec<f64> = (0..d)
                            .map(|j| {
                                if signs & (1 << j) != 0 {
                                    -profile[j]
                                } else {
                                    profile[j]
                                }
                            })
                            .collect();
                        rows.push(row);
                    }
                    Some(rows)
                } else {
                    None
                }
            }
            Seminorm::Sup { parts } => {
                let mut rows = Vec::new();
                for s in parts {
                    rows.extend(s.ball_rows(space, atom)?);
                }
                Some(rows)
            }
            Seminorm::Concat { .. } => self.resolve_at(atom).ball_rows(space, atom),
            Seminorm::Weighted { weights } => {
                let mut rows = Vec::new();
                for (local, &j) in space.fine_blocks_in(atom).iter().enumerate() {
                    if weights[j] > 0.0 {
                        let mut r = vec![0.0; d];
                        r[local] = weights[j];
                        rows.push(r.clone());
                        r[local] = -weights[j];
                        rows.push(r);
                    }
                }
                Some(rows)
            }
        }
    }

    pub fn is_polytopal_at(&self, space: &StratifiedSpace, atom: usize) -> bool {
        match self {
            Seminorm::CondP { p } => p.is_infinite() || (*p - 1.0).abs() < 1e-14,
            Seminorm::Sup { parts } => parts.iter().all(|s| s.is_polytopal_at(space, atom)),
            Seminorm::Concat { .. } => self.resolve_at(atom).is_polytopal_at(space, atom),
            Seminorm::Weighted { .. } => true,
        }
    }
}

/// Conditional p-norm of a module element.
pub fn cond_p_norm(
    x: &ModuleElement,
    p: f64,
    space: &StratifiedSpace,
) -> Result<RandomScalar, ModuleError> {
    if !(p >= 1.0) {
        return Err(ModuleError::BadExponent(p));
    }
    eval_seminorm(&Seminorm::cond_p(p), x, space)
}

/// Per-atom evaluation of a seminorm on a module element.
pub fn eval_seminorm(
    s: &Seminorm,
    x: &ModuleElement,
    space: &StratifiedSpace,
) -> Result<RandomScalar, ModuleError> {
    s.validate(space)?;
    if x.coords.len() != space.n_fine() {
        return Err(ModuleError::CoordLength(x.coords.len(), space.n_fine()));
    }
    let values = (0..space.n_coarse())
        .map(|atom| {
            let block = x.block(space, atom);
            Xr::new(s.resolve_at(atom).eval_block(&block, space, atom))
        })
        .collect();
    Ok(RandomScalar::new(values))
}

/// Smallest per-atom constant `xi_A` with `|f(x)| <= xi_A ||x||_s` for all
/// `x` supported on the atom; `+inf` where no finite bound exists. Closed
/// forms cover the conditional p-norms and weighted sups; polytopal suprema
/// go through an LP over the unit ball; anything else falls back to the
/// sampled maximizer.
pub fn operator_bound(
    f: &ModuleFunctional,
    s: &Seminorm,
    space: &StratifiedSpace,
) -> Result<RandomScalar, ModuleError> {
    s.validate(space)?;
    if f.coeffs.len() != space.n_fine() {
        return Err(ModuleError::CoordLength(f.coeffs.len(), space.n_fine()));
    }
    let values = (0..space.n_coarse())
        .map(|atom| bound_on_atom(f, &s.resolve_at(atom), space, atom))
        .collect();
    Ok(RandomScalar::new(values))
}

fn bound_on_atom(f: &ModuleFunctional, s: &Seminorm, space: &StratifiedSpace, atom: usize) -> Xr {
    let c = f.block(space, atom);
    if c.iter().all(|&v| v == 0.0) {
        return Xr::ZERO;
    }
    match s {
        Seminorm::CondP { p } => {
            let profile = space.atom_profile(atom);
            if p.is_infinite() {
                Xr::new(c.iter().map(|v| v.abs()).sum())
            } else if (*p - 1.0).abs() < 1e-14 {
                Xr::new(
                    c.iter()
                        .zip(&profile)
                        .map(|(v, w)| v.abs() / w)
                        .fold(0.0, f64::max),
                )
            } else {
                // Dual exponent q = p/(p-1): the bound is the plain q-norm
                // of c_j / wbar_j^(1/p).
                let q = *p / (*p - 1.0);
                let sum: f64 = c
                    .iter()
                    .zip(&profile)
                    .map(|(v, w)| (v.abs() / w.powf(1.0 / *p)).powf(q))
                    .sum();
                Xr::new(sum.powf(1.0 / q))
            }
        }
        Seminorm::Weighted { weights } => {
            let mut total = 0.0f64;
            for (local, &j) in space.fine_blocks_in(atom).iter().enumerate() {
                let cj = c[local].abs();
                if cj == 0.0 {
                    continue;
                }
                if weights[j] == 0.0 {
                    return Xr::POS_INF;
                }
                total += cj / weights[j];
            }
            Xr::new(total)
        }
        Seminorm::Sup { .. } if s.is_polytopal_at(space, atom) => {
            let rows = s.ball_rows(space, atom).expect("polytopal");
            // sup c·z over the symmetric unit ball {row·z <= 1}.
            let mut lp = LinearProgram::new(c.len());
            let neg: Vec<f64> = c.iter().map(|v| -v).collect();
            if lp.minimize(&neg).is_err() {
                return Xr::POS_INF;
            }
            for row in &rows {
                if lp.add_row(row, Rel::Le, 1.0).is_err() {
                    return Xr::POS_INF;
                }
            }
            match lp.solve() {
                Ok(LpOutcome::Optimal { value, .. }) => Xr::new(-value),
                Ok(LpOutcome::Unbounded) => Xr::POS_INF,
                _ => Xr::POS_INF,
            }
        }
        _ => {
            let (bound, _) = sampled_bound_on_atom(&c, s, space, atom, 10_000);
            bound
        }
    }
}

/// Sampled maximization of `|c·z| / ||z||_s` over a low-discrepancy sweep
/// of directions, refined by coordinate ascent. Returns the bound estimate
/// and a maximizing direction normalized to seminorm value 1 (when finite).
pub fn sampled_bound_on_atom(
    c: &[f64],
    s: &Seminorm,
    space: &StratifiedSpace,
    atom: usize,
    n_samples: usize,
) -> (Xr, Vec<f64>) {
    let d = c.len();
    // Null directions of the catalogue seminorms are axis-aligned: an axis
    // with zero seminorm but nonzero action certifies an infinite bound.
    for j in 0..d {
        let mut z = vec![0.0; d];
        z[j] = 1.0;
        if s.eval_block(&z, space, atom) <= 0.0 && c[j].abs() > 0.0 {
            return (Xr::POS_INF, z);
        }
    }
    let ratio = |z: &[f64]| -> f64 {
        let nrm = s.eval_block(z, space, atom);
        if nrm <= 1e-300 {
            return 0.0;
        }
        (dot(c, z) / nrm).abs()
    };
    // Kronecker sequence driven by the generalized golden ratio.
    let mut phi = 1.5f64;
    for _ in 0..48 {
        phi = (1.0 + phi).powf(1.0 / (d as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=d).map(|j| (1.0 / phi.powi(j as i32)).fract()).collect();
    let mut best = vec![0.0; d];
    best[0] = 1.0;
    let mut best_val = ratio(&best);
    let mut u = vec![0.5f64; d];
    for _ in 0..n_samples {
        for j in 0..d {
            u[j] = (u[j] + alphas[j]).fract();
        }
        let z: Vec<f64> = u.iter().map(|v| 2.0 * v - 1.0).collect();
        if z.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-6 {
            continue;
        }
        let v = ratio(&z);
        if v > best_val {
            best_val = v;
            best = z;
        }
    }
    // Local coordinate ascent with shrinking steps.
    let mut step = 0.25f64;
    while step > 1e-9 {
        let mut improved = false;
        for j in 0..d {
            for sgn in [1.0, -1.0] {
                let mut z = best.clone();
                z[j] += sgn * step;
                let v = ratio(&z);
                if v > best_val {
                    best_val = v;
                    best = z;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    let nrm = s.eval_block(&best, space, atom);
    if nrm > 0.0 {
        for v in &mut best {
            *v /= nrm;
        }
    }
    (Xr::new(best_val), best)
}

/// Type-I domination: some finite supremum of members of `family` gives a
/// finite operator bound on every atom. Subsets are searched in
/// enumeration order; by monotonicity the full family decides.
pub fn is_type_i(
    f: &ModuleFunctional,
    family: &[Seminorm],
    space: &StratifiedSpace,
) -> Result<bool, ModuleError> {
    if family.is_empty() {
        return Err(ModuleError::EmptySeminormFamily);
    }
    for subset in subset_order(family.len()) {
        let parts: Vec<Seminorm> = subset.iter().map(|&i| family[i].clone()).collect();
        let bound = operator_bound(f, &Seminorm::sup(parts), space)?;
        if bound.is_finite() {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Type-II domination: some concatenation of finite suprema from `family`
/// gives a finite bound — per atom, some subset works. On finite atom sets
/// this coincides with type I.
pub fn is_type_ii(
    f: &ModuleFunctional,
    family: &[Seminorm],
    space: &StratifiedSpace,
) -> Result<bool, ModuleError> {
    if family.is_empty() {
        return Err(ModuleError::EmptySeminormFamily);
    }
    let mut bounds: Vec<RandomScalar> = Vec::new();
    for subset in subset_order(family.len()) {
        let parts: Vec<Seminorm> = subset.iter().map(|&i| family[i].clone()).collect();
        bounds.push(operator_bound(f, &Seminorm::sup(parts), space)?);
    }
    Ok((0..space.n_coarse()).all(|atom| bounds.iter().any(|b| b.get(atom).is_finite())))
}

fn subset_order(n: usize) -> Vec<Vec<usize>> {
    if n > 16 {
        // The full set decides by monotonicity.
        return vec![(0..n).collect()];
    }
    let mut subsets: Vec<Vec<usize>> = (1..(1u32 << n))
        .map(|mask| (0..n).filter(|j| mask & (1 << j) != 0).collect())
        .collect();
    subsets.sort_by_key(|s: &Vec<usize>| (s.len(), s.clone()));
    subsets
}

/// Decompose a functional dominated by `xi` times a concatenated seminorm
/// into per-event functionals `f_k(x) = f(I_{A_k} x)`. The pieces satisfy
/// `|f_k(x)| <= xi ||x||_{s_k}` everywhere and glue back to `f` exactly.
pub fn decompose_functional(
    f: &ModuleFunctional,
    concat: &Seminorm,
    xi: &RandomScalar,
    space: &StratifiedSpace,
) -> Result<Vec<ModuleFunctional>, ModuleError> {
    let Seminorm::Concat { events, .. } = concat else {
        return Err(ModuleError::BadConcatenation);
    };
    concat.validate(space)?;
    // Domination hypothesis, exact per atom via the operator bound.
    let bound = operator_bound(f, concat, space)?;
    for atom in 0..space.n_coarse() {
        let b = bound.get(atom);
        let x = xi.get(atom);
        let tol = 1e-9 * (1.0 + x.raw().abs());
        let violated = match (b.finite(), x.finite()) {
            (Some(bv), Some(xv)) => bv > xv + tol,
            (None, _) => !x.is_pos_inf(),
            _ => false,
        };
        if violated {
            let c = f.block(space, atom);
            let (_, z) = sampled_bound_on_atom(&c, &concat.resolve_at(atom), space, atom, 4_000);
            let witness = ModuleElement::from_blocks(
                space,
                &(0..space.n_coarse())
                    .map(|a| if a == atom { z.clone() } else { vec![0.0; space.atom_dim(a)] })
                    .collect::<Vec<_>>(),
            );
            return Err(ModuleError::DominationFailed {
                atom,
                lhs: b.raw(),
                rhs: x.raw(),
                witness: witness.coords,
            });
        }
    }
    Ok(events.iter().map(|e| f.restrict(e, space)).collect())
}

/// The concatenation hull of a finite set of functionals: all gluings of
/// members over partitions of the atoms, i.e. all per-atom selections.
pub struct ConcatHull<'a> {
    generators: &'a [ModuleFunctional],
    space: &'a StratifiedSpace,
}

impl<'a> ConcatHull<'a> {
    pub fn new(
        generators: &'a [ModuleFunctional],
        space: &'a StratifiedSpace,
    ) -> Result<Self, ModuleError> {
        if generators.is_empty() {
            return Err(ModuleError::EmptyFunctionalFamily);
        }
        Ok(ConcatHull { generators, space })
    }

    pub fn len(&self) -> u128 {
        (self.generators.len() as u128).pow(self.space.n_coarse() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Enumerate every gluing (capped to keep runaway sizes out).
    pub fn enumerate(&self, cap: u128) -> Result<Vec<ModuleFunctional>, ModuleError> {
        let total = self.len();
        if total > cap {
            return Err(ModuleError::TooManyGluings(total, cap));
        }
        let g = self.generators.len();
        let atoms = self.space.n_coarse();
        let mut out = Vec::with_capacity(total as usize);
        let mut selection = vec![0usize; atoms];
        loop {
            let blocks: Vec<Vec<f64>> = (0..atoms)
                .map(|a| self.generators[selection[a]].block(self.space, a))
                .collect();
            out.push(ModuleFunctional::from_blocks(self.space, &blocks));
            // Next selection in mixed radix.
            let mut k = 0;
            loop {
                if k == atoms {
                    return Ok(out);
                }
                selection[k] += 1;
                if selection[k] < g {
                    break;
                }
                selection[k] = 0;
                k += 1;
            }
        }
    }

    /// Membership: per atom, the candidate's block must match some
    /// generator's block within `tol`.
    pub fn contains(&self, h: &ModuleFunctional, tol: f64) -> bool {
        (0..self.space.n_coarse()).all(|atom| {
            let hb = h.block(self.space, atom);
            self.generators.iter().any(|g| {
                let gb = g.block(self.space, atom);
                hb.iter().zip(&gb).all(|(a, b)| (a - b).abs() <= tol)
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Partition;
    use proptest::prelude::*;

    fn four_point_space() -> StratifiedSpace {
        StratifiedSpace::new(
            vec![0.25; 4],
            Partition::singletons(4),
            Partition::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn cond_p_norm_oracle_values() {
        let s = four_point_space();
        // Frozen from the direct summation oracle:
        // atom 0: ((9 + 16)/2)^(1/2) = sqrt(12.5); atom 1: 0.
        let x = ModuleElement::new(vec![3.0, 4.0, 0.0, 0.0]);
        let n2 = cond_p_norm(&x, 2.0, &s).unwrap();
        assert!((n2.get(0).raw() - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(n2.get(1), Xr::ZERO);

        // Per-atom max oracle for p = inf.
        let y = ModuleElement::new(vec![1.0, -2.0, 5.0, 0.0]);
        let ninf = cond_p_norm(&y, f64::INFINITY, &s).unwrap();
        assert_eq!(ninf, RandomScalar::from_f64s(&[2.0, 5.0]));

        assert!(matches!(cond_p_norm(&x, 0.5, &s), Err(ModuleError::BadExponent(_))));
    }

    #[test]
    fn cond_p_norm_is_module_homogeneous() {
        let s = four_point_space();
        let x = ModuleElement::new(vec![1.0, -2.0, 0.5, 3.0]);
        let xi = RandomScalar::from_f64s(&[2.0, 3.0]);
        for p in [1.0, 2.0, 3.5, f64::INFINITY] {
            let lhs = cond_p_norm(&x.scale_by(&xi, &s), p, &s).unwrap();
            let rhs = cond_p_norm(&x, p, &s).unwrap().mul(&xi.abs()).unwrap();
            assert!(lhs.max_abs_gap(&rhs).raw() < 1e-12);
        }
    }

    #[test]
    fn eval_seminorm_examples() {
        let s = four_point_space();
        let x = ModuleElement::new(vec![1.0, 1.0, 2.0, 2.0]);
        // sup{p=1, p=inf} on constant blocks gives the block value.
        let sup = Seminorm::sup(vec![Seminorm::cond_p(1.0), Seminorm::cond_p(f64::INFINITY)]);
        let v = eval_seminorm(&sup, &x, &s).unwrap();
        assert_eq!(v, RandomScalar::from_f64s(&[1.0, 2.0]));

        // Concatenation is local: p=1 on atom 0, p=inf on atom 1.
        let concat = Seminorm::concat(
            vec![Event::from_indices(2, &[0]), Event::from_indices(2, &[1])],
            vec![Seminorm::cond_p(1.0), Seminorm::cond_p(f64::INFINITY)],
        );
        let y = ModuleElement::new(vec![1.0, -3.0, 0.5, -2.0]);
        let w = eval_seminorm(&concat, &y, &s).unwrap();
        let p1 = cond_p_norm(&y, 1.0, &s).unwrap();
        let pinf = cond_p_norm(&y, f64::INFINITY, &s).unwrap();
        assert_eq!(w.get(0), p1.get(0));
        assert_eq!(w.get(1), pinf.get(1));

        // Zero element maps to zero.
        let z = eval_seminorm(&sup, &ModuleElement::zero(4), &s).unwrap();
        assert_eq!(z, RandomScalar::zero(2));
    }

    #[test]
    fn apply_functional_examples() {
        let s = four_point_space();
        let f = ModuleFunctional::new(vec![1.0, 1.0, 0.0, 0.0]);
        let x = ModuleElement::new(vec![3.0, 4.0, 9.0, 9.0]);
        // Blockwise dot-product oracle: atom 0: 3+4 = 7; atom 1: 0.
        assert_eq!(apply_functional(&f, &x, &s).unwrap(), RandomScalar::from_f64s(&[7.0, 0.0]));
        assert_eq!(
            apply_functional(&f, &ModuleElement::zero(4), &s).unwrap(),
            RandomScalar::zero(2)
        );
        // Conditional-scalar linearity.
        let xi = RandomScalar::from_f64s(&[2.0, -1.0]);
        let lhs = apply_functional(&f, &x.scale_by(&xi, &s), &s).unwrap();
        let rhs = apply_functional(&f, &x, &s).unwrap().mul(&xi).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn operator_bound_closed_forms() {
        let s = four_point_space();
        let f = ModuleFunctional::new(vec![1.0, 1.0, 0.0, 0.0]);
        // p=1 dual: max |c_j| / wbar_j = 1 / 0.5 = 2 on atom 0, 0 on atom 1.
        let b1 = operator_bound(&f, &Seminorm::cond_p(1.0), &s).unwrap();
        assert!((b1.get(0).raw() - 2.0).abs() < 1e-12);
        assert_eq!(b1.get(1), Xr::ZERO);
        // p=inf dual: sum |c_j| = 2 on atom 0.
        let binf = operator_bound(&f, &Seminorm::cond_p(f64::INFINITY), &s).unwrap();
        assert!((binf.get(0).raw() - 2.0).abs() < 1e-12);
        // Zero functional: zero bound.
        let zero = ModuleFunctional::zero(4);
        assert_eq!(
            operator_bound(&zero, &Seminorm::cond_p(1.0), &s).unwrap(),
            RandomScalar::zero(2)
        );
        // Weighted sup killing a supported coordinate: unbounded.
        let w = Seminorm::weighted(vec![0.0, 1.0, 1.0, 1.0]);
        let bw = operator_bound(&f, &w, &s).unwrap();
        assert!(bw.get(0).is_pos_inf());
    }

    #[test]
    fn operator_bound_matches_sampled_oracle() {
        let s = four_point_space();
        let f = ModuleFunctional::new(vec![0.7, -1.3, 0.4, 2.0]);
        for p in [1.0, 2.0, 3.0, f64::INFINITY] {
            let sn = Seminorm::cond_p(p);
            let bound = operator_bound(&f, &sn, &s).unwrap();
            for atom in 0..2 {
                let c = f.block(&s, atom);
                let (est, zstar) =
                    sampled_bound_on_atom(&c, &sn.resolve_at(atom), &s, atom, 10_000);
                let b = bound.get(atom).raw();
                // The sampled estimate attains at least (1 - 1e-6) of the
                // closed form, and never exceeds it.
                assert!(est.raw() <= b * (1.0 + 1e-9));
                assert!(est.raw() >= b * (1.0 - 1e-6), "p={p} atom={atom} {est} vs {b}");
                // The maximizer certifies attainment.
                let attained = dot(&c, &zstar).abs();
                assert!(attained >= b * (1.0 - 1e-6));
            }
        }
    }

    #[test]
    fn polytopal_sup_bound_via_lp() {
        let s = four_point_space();
        let f = ModuleFunctional::new(vec![1.0, -2.0, 0.0, 1.0]);
        let sup = Seminorm::sup(vec![Seminorm::cond_p(1.0), Seminorm::cond_p(f64::INFINITY)]);
        let bound = operator_bound(&f, &sup, &s).unwrap();
        for atom in 0..2 {
            let c = f.block(&s, atom);
            let (est, _) = sampled_bound_on_atom(&c, &sup.resolve_at(atom), &s, atom, 10_000);
            assert!((bound.get(atom).raw() - est.raw()).abs() <= 1e-6 * (1.0 + est.raw()));
        }
    }

    #[test]
    fn type_classes_coincide() {
        let s = four_point_space();
        let family =
            vec![Seminorm::cond_p(1.0), Seminorm::weighted(vec![1.0, 0.0, 1.0, 1.0])];
        let f = ModuleFunctional::new(vec![1.0, 1.0, 1.0, 0.0]);
        assert!(is_type_i(&f, &family, &s).unwrap());
        assert!(is_type_ii(&f, &family, &s).unwrap());
        // Zero functional: both classes, trivially.
        let z = ModuleFunctional::zero(4);
        assert!(is_type_i(&z, &family, &s).unwrap());
        assert!(is_type_ii(&z, &family, &s).unwrap());
        // A family that kills a supported coordinate: neither class.
        let killing = vec![Seminorm::weighted(vec![0.0, 1.0, 1.0, 1.0])];
        let g = ModuleFunctional::new(vec![1.0, 0.0, 0.0, 0.0]);
        assert!(!is_type_i(&g, &killing, &s).unwrap());
        assert!(!is_type_ii(&g, &killing, &s).unwrap());
        assert!(matches!(is_type_i(&f, &[], &s), Err(ModuleError::EmptySeminormFamily)));
    }

    #[test]
    fn decomposition_examples() {
        let s = four_point_space();
        let f = ModuleFunctional::new(vec![1.0, -1.0, 2.0, 0.5]);
        // Single-block partition: the decomposition is f itself.
        let whole = Seminorm::concat(vec![Event::full(2)], vec![Seminorm::cond_p(1.0)]);
        let xi = operator_bound(&f, &whole, &s).unwrap();
        let parts = decompose_functional(&f, &whole, &xi, &s).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0], f);

        // Two-event partition: pieces agree with f on their events and
        // glue back exactly.
        let events = vec![Event::from_indices(2, &[0]), Event::from_indices(2, &[1])];
        let concat = Seminorm::concat(
            events.clone(),
            vec![Seminorm::cond_p(1.0), Seminorm::cond_p(f64::INFINITY)],
        );
        let xi = operator_bound(&f, &concat, &s).unwrap();
        let parts = decompose_functional(&f, &concat, &xi, &s).unwrap();
        let reglued = ModuleFunctional::glue(&events, &parts, &s);
        assert_eq!(reglued, f);
        // Zero functional decomposes into zeros.
        let zeros =
            decompose_functional(&ModuleFunctional::zero(4), &concat, &RandomScalar::zero(2), &s)
                .unwrap();
        assert!(zeros.iter().all(|p| *p == ModuleFunctional::zero(4)));
        // Failing domination reports a witness.
        let too_small = RandomScalar::from_f64s(&[0.0, 0.0]);
        let err = decompose_functional(&f, &concat, &too_small, &s).unwrap_err();
        assert!(matches!(err, ModuleError::DominationFailed { .. }));
    }

    #[test]
    fn hull_enumeration_counts() {
        let s = four_point_space();
        let f = ModuleFunctional::new(vec![1.0, 0.0, 1.0, 0.0]);
        let g = ModuleFunctional::new(vec![0.0, 2.0, 0.0, 2.0]);
        let gens = vec![f.clone(), g.clone()];
        let hull = ConcatHull::new(&gens, &s).unwrap();
        assert_eq!(hull.len(), 4);
        let members = hull.enumerate(1000).unwrap();
        assert_eq!(members.len(), 4);
        assert!(hull.contains(&f, 0.0));
        assert!(hull.contains(&g, 0.0));
        // The mixed gluing is a member; an unrelated functional is not.
        let events = vec![Event::from_indices(2, &[0]), Event::from_indices(2, &[1])];
        let mixed = ModuleFunctional::glue(&events, &[f.clone(), g.clone()], &s);
        assert!(hull.contains(&mixed, 0.0));
        assert!(members.iter().any(|m| *m == mixed));
        assert!(!hull.contains(&ModuleFunctional::new(vec![5.0, 0.0, 1.0, 0.0]), 1e-12));
        // Singleton generator set: the hull is just that functional.
        let single = vec![f.clone()];
        let hull1 = ConcatHull::new(&single, &s).unwrap();
        assert_eq!(hull1.enumerate(10).unwrap(), vec![f.clone()]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn seminorm_axioms(
            xs in prop::collection::vec(-10f64..10.0, 4),
            ys in prop::collection::vec(-10f64..10.0, 4),
            xi0 in -4f64..4.0,
            xi1 in -4f64..4.0,
            p in prop_oneof![Just(1.0), Just(2.0), Just(3.7), Just(f64::INFINITY)],
        ) {
            let s = four_point_space();
            let x = ModuleElement::new(xs);
            let y = ModuleElement::new(ys);
            let xi = RandomScalar::from_f64s(&[xi0, xi1]);
            let sn = Seminorm::sup(vec![
                Seminorm::cond_p(p),
                Seminorm::weighted(vec![0.5, 1.0, 0.0, 1.0]),
            ]);
            // Triangle inequality per atom.
            let lhs = eval_seminorm(&sn, &x.add(&y), &s).unwrap();
            let rhs = eval_seminorm(&sn, &x, &s).unwrap()
                .add(&eval_seminorm(&sn, &y, &s).unwrap()).unwrap();
            prop_assert!(lhs.le_within(&rhs, 1e-10));
            // Absolute homogeneity under the module action.
            let hom_lhs = eval_seminorm(&sn, &x.scale_by(&xi, &s), &s).unwrap();
            let hom_rhs = eval_seminorm(&sn, &x, &s).unwrap().mul(&xi.abs()).unwrap();
            prop_assert!(hom_lhs.max_abs_gap(&hom_rhs).raw() <= 1e-10);
        }

        #[test]
        fn decomposition_soundness(
            coeffs in prop::collection::vec(-5f64..5.0, 4),
            xs in prop::collection::vec(-3f64..3.0, 4),
        ) {
            let s = four_point_space();
            let f = ModuleFunctional::new(coeffs);
            let events = vec![Event::from_indices(2, &[0]), Event::from_indices(2, &[1])];
            let concat = Seminorm::concat(
                events.clone(),
                vec![Seminorm::cond_p(f64::INFINITY), Seminorm::cond_p(1.0)],
            );
            let xi = operator_bound(&f, &concat, &s).unwrap();
            let parts = decompose_functional(&f, &concat, &xi, &s).unwrap();
            // Reconstruction is exact.
            let x = ModuleElement::new(xs);
            let fx = apply_functional(&f, &x, &s).unwrap();
            let glued = RandomScalar::glue(
                &events,
                &parts.iter().map(|p| apply_functional(p, &x, &s).unwrap()).collect::<Vec<_>>(),
            ).unwrap();
            prop_assert_eq!(fx, glued);
            // Each piece obeys its own bound: |f_k(x)| <= xi * ||x||_{s_k}.
            let Seminorm::Concat { parts: sems, .. } = &concat else { unreachable!() };
            for (k, fk) in parts.iter().enumerate() {
                let lhs = apply_functional(fk, &x, &s).unwrap().abs();
                let rhs = xi.mul(&eval_seminorm(&sems[k], &x, &s).unwrap()).unwrap();
                prop_assert!(lhs.le_within(&rhs, 1e-9));
            }
        }
    }
}
