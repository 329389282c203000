//! Stratified convex functions and their conjugation calculus: per-atom
//! function pieces, evaluation under the extended-real conventions,
//! Fenchel conjugates and biconjugates, explicit affine minorants, the
//! event classification into minus-infinity / plus-infinity / potentially
//! proper atoms, closures and closed suprema.

use crate::event::Event;
use crate::geom::{self, lower_envelope_pieces, minkowski_weyl, HPolytope};
use crate::module::{ModuleElement, ModuleFunctional};
use crate::scalar::{RandomScalar, Xr};
use crate::space::StratifiedSpace;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EVAL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FenchelError {
    #[error("function has {0} atom pieces but the space has {1} atoms")]
    AtomCount(usize, usize),
    #[error("element has {0} coordinates but the space has {1} fine blocks")]
    DimensionMismatch(usize, usize),
    #[error("atom {0}: quadratic piece must be positive definite for conjugation")]
    SingularQuadratic(usize),
    #[error("atom {0}: grid piece is malformed ({1})")]
    BadGrid(usize, String),
    #[error("function is not proper: {0}")]
    NotProper(String),
    #[error("atom {0}: affine minorant requires beta strictly below f(x0), got gap {1}")]
    MinorantGap(usize, f64),
    #[error("atom {0}: affine minorant does not support this piece kind")]
    MinorantUnsupported(usize),
    #[error("supremum input {0} is not closed: {1}")]
    NotClosed(usize, String),
    #[error(transparent)]
    Module(#[from] crate::module::ModuleError),
}

/// One affine piece of a polyhedral function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub slope: Vec<f64>,
    pub intercept: f64,
}

impl AffinePiece {
    pub fn new(slope: Vec<f64>, intercept: f64) -> Self {
        AffinePiece { slope, intercept }
    }

    pub fn eval(&self, block: &[f64]) -> f64 {
        geom::dot(&self.slope, block) + self.intercept
    }
}

/// Extended-real samples on a box grid, evaluated by multilinear
/// interpolation on finite cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFn {
    /// Strictly increasing grid per coordinate.
    pub axes: Vec<Vec<f64>>,
    /// Row-major samples over the product grid.
    pub values: Vec<Xr>,
}

impl GridFn {
    pub fn n_nodes(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    pub fn node_coords(&self, mut index: usize) -> Vec<f64> {
        let mut coords = vec![0.0; self.axes.len()];
        for j in (0..self.axes.len()).rev() {
            let len = self.axes[j].len();
            coords[j] = self.axes[j][index % len];
            index /= len;
        }
        coords
    }

    pub fn nodes(&self) -> impl Iterator<Item = (Vec<f64>, Xr)> + '_ {
        (0..self.n_nodes()).map(|i| (self.node_coords(i), self.values[i]))
    }

    fn validate(&self) -> Result<(), String> {
        if self.axes.is_empty() {
            return Err("grid needs at least one axis".into());
        }
        for axis in &self.axes {
            if axis.is_empty() {
                return Err("grid axis is empty".into());
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err("grid axes must increase strictly".into());
            }
        }
        if self.values.len() != self.n_nodes() {
            return Err(format!(
                "grid has {} values for {} nodes",
                self.values.len(),
                self.n_nodes()
            ));
        }
        Ok(())
    }

    /// Multilinear interpolation with the extended-real conventions:
    /// zero-weight corners drop out, a positively weighted plus-infinity
    /// corner dominates. Outside the grid box the value is plus infinity.
    pub fn eval(&self, block: &[f64]) -> Xr {
        let d = self.axes.len();
        let mut lows = vec![0usize; d];
        let mut ts = vec![0.0f64; d];
        for j in 0..d {
            let axis = &self.axes[j];
            let c = block[j];
            if c < axis[0] - EVAL_TOL || c > axis[axis.len() - 1] + EVAL_TOL {
                return Xr::POS_INF;
            }
            if axis.len() == 1 {
                lows[j] = 0;
                ts[j] = 0.0;
                continue;
            }
            let mut i = match axis.binary_search_by(|v| v.partial_cmp(&c).unwrap()) {
                Ok(i) => i,
                Err(i) => i.saturating_sub(1),
            };
            if i >= axis.len() - 1 {
                i = axis.len() - 2;
            }
            lows[j] = i;
            let w = axis[i + 1] - axis[i];
            ts[j] = ((c - axis[i]) / w).clamp(0.0, 1.0);
        }
        // Accumulate over the 2^d cell corners.
        let mut total = Xr::ZERO;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0f64;
            let mut index = 0usize;
            for j in 0..d {
                let hi = corner & (1 << j) != 0;
                let axis_len = self.axes[j].len();
                let node = if hi { (lows[j] + 1).min(axis_len - 1) } else { lows[j] };
                weight *= if hi { ts[j] } else { 1.0 - ts[j] };
                index = index * axis_len + node;
            }
            total = total + Xr::new(weight) * self.values[index];
        }
        total
    }
}

/// One atom's function piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AtomFunction {
    /// Max of affine pieces, plus infinity outside the optional domain.
    /// An empty piece list is minus infinity on the domain.
    MaxAffine {
        pieces: Vec<AffinePiece>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        domain: Option<HPolytope>,
    },
    /// (1/2) x'Qx + b·x + c.
    Quadratic { quad: Vec<Vec<f64>>, linear: Vec<f64>, constant: f64 },
    Grid(GridFn),
    MinusInf,
    PlusInf,
    /// gamma^{-1} log of the profile-weighted mean of exp(-gamma x_j).
    Entropic { gamma: f64 },
    /// The conjugate of the entropic piece: gamma^{-1} KL(-c || profile)
    /// on the negative probability simplex, plus infinity elsewhere.
    RelativeEntropy { gamma: f64 },
}

impl AtomFunction {
    pub fn indicator(domain: HPolytope) -> Self {
        AtomFunction::MaxAffine {
            pieces: vec![AffinePiece::new(vec![0.0; domain.dim()], 0.0)],
            domain: Some(domain),
        }
    }

    pub fn eval_block(&self, block: &[f64], space: &StratifiedSpace, atom: usize) -> Xr {
        match self {
            AtomFunction::MaxAffine { pieces, domain } => {
                if let Some(h) = domain {
                    let scale = 1.0 + block.iter().map(|v| v.abs()).fold(0.0, f64::max);
                    if !h.contains(block, EVAL_TOL * scale) {
                        return Xr::POS_INF;
                    }
                }
                pieces
                    .iter()
                    .map(|p| Xr::new(p.eval(block)))
                    .fold(Xr::NEG_INF, Xr::max)
            }
            AtomFunction::Quadratic { quad, linear, constant } => {
                let mut q = 0.0;
                for (i, row) in quad.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        q += block[i] * v * block[j];
                    }
                }
                Xr::new(0.5 * q + geom::dot(linear, block) + constant)
            }
            AtomFunction::Grid(g) => g.eval(block),
            AtomFunction::MinusInf => Xr::NEG_INF,
            AtomFunction::PlusInf => Xr::POS_INF,
            AtomFunction::Entropic { gamma } => {
                let profile = space.atom_profile(atom);
                Xr::new(log_mean_exp_neg(*gamma, block, &profile) / gamma)
            }
            AtomFunction::RelativeEntropy { gamma } => {
                let profile = space.atom_profile(atom);
                let sum: f64 = block.iter().sum();
                if block.iter().any(|&c| c > 1e-9) || (sum + 1.0).abs() > 1e-9 {
                    return Xr::POS_INF;
                }
                let mut kl = 0.0;
                for (c, w) in block.iter().zip(&profile) {
                    let q = (-c).max(0.0);
                    if q > 0.0 {
                        kl += q * (q / w).ln();
                    }
                }
                Xr::new(kl / gamma)
            }
        }
    }

    /// Does the piece take the value minus infinity anywhere?
    fn attains_minus_inf(&self) -> bool {
        match self {
            AtomFunction::MinusInf => true,
            AtomFunction::MaxAffine { pieces, domain } => {
                pieces.is_empty() && domain.as_ref().map_or(true, |h| !h.is_empty())
            }
            AtomFunction::Grid(g) => g.values.iter().any(|v| v.is_neg_inf()),
            _ => false,
        }
    }

    /// Is the piece identically plus infinity?
    fn identically_plus_inf(&self) -> bool {
        match self {
            AtomFunction::PlusInf => true,
            AtomFunction::MaxAffine { pieces, domain } => {
                let empty_domain = domain.as_ref().is_some_and(|h| h.is_empty());
                empty_domain || (pieces.is_empty() && empty_domain)
            }
            AtomFunction::Grid(g) => g.values.iter().all(|v| v.is_pos_inf()),
            _ => false,
        }
    }

    /// A block where the piece is finite, when one exists.
    fn finite_point(&self, d: usize, space: &StratifiedSpace, atom: usize) -> Option<Vec<f64>> {
        match self {
            AtomFunction::MaxAffine { pieces, domain } => {
                if pieces.is_empty() {
                    return None;
                }
                match domain {
                    None => Some(vec![0.0; d]),
                    Some(h) => h.feasible_point(),
                }
            }
            AtomFunction::Quadratic { .. } | AtomFunction::Entropic { .. } => Some(vec![0.0; d]),
            AtomFunction::Grid(g) => g
                .nodes()
                .find(|(_, v)| v.is_finite())
                .map(|(coords, _)| coords),
            AtomFunction::RelativeEntropy { .. } => {
                Some(space.atom_profile(atom).iter().map(|w| -w).collect())
            }
            AtomFunction::MinusInf | AtomFunction::PlusInf => None,
        }
    }

    fn validate(&self, d: usize, atom: usize) -> Result<(), FenchelError> {
        match self {
            AtomFunction::MaxAffine { pieces, domain } => {
                if pieces.iter().any(|p| p.slope.len() != d) {
                    return Err(FenchelError::DimensionMismatch(
                        pieces.iter().map(|p| p.slope.len()).max().unwrap_or(0),
                        d,
                    ));
                }
                if let Some(h) = domain {
                    if h.n_rows() > 0 && h.dim() != d {
                        return Err(FenchelError::DimensionMismatch(h.dim(), d));
                    }
                }
                Ok(())
            }
            AtomFunction::Quadratic { quad, linear, .. } => {
                if quad.len() != d || quad.iter().any(|r| r.len() != d) || linear.len() != d {
                    return Err(FenchelError::DimensionMismatch(linear.len(), d));
                }
                Ok(())
            }
            AtomFunction::Grid(g) => {
                g.validate().map_err(|e| FenchelError::BadGrid(atom, e))?;
                if g.axes.len() != d {
                    return Err(FenchelError::DimensionMismatch(g.axes.len(), d));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn log_mean_exp_neg(gamma: f64, block: &[f64], profile: &[f64]) -> f64 {
    // log sum_j w_j exp(-gamma x_j), max-shifted for stability.
    let m = block
        .iter()
        .map(|&x| -gamma * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = block
        .iter()
        .zip(profile)
        .map(|(&x, &w)| w * (-gamma * x - m).exp())
        .sum();
    m + s.ln()
}

/// A local convex function on the module: one piece per coarse atom, the
/// value on an atom depending only on that atom's block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StratifiedConvexFunction {
    pub atoms: Vec<AtomFunction>,
}

impl StratifiedConvexFunction {
    pub fn new(atoms: Vec<AtomFunction>) -> Self {
        StratifiedConvexFunction { atoms }
    }

    pub fn uniform(space: &StratifiedSpace, piece: AtomFunction) -> Self {
        StratifiedConvexFunction { atoms: vec![piece; space.n_coarse()] }
    }

    pub fn validate(&self, space: &StratifiedSpace) -> Result<(), FenchelError> {
        if self.atoms.len() != space.n_coarse() {
            return Err(FenchelError::AtomCount(self.atoms.len(), space.n_coarse()));
        }
        for (atom, piece) in self.atoms.iter().enumerate() {
            piece.validate(space.atom_dim(atom), atom)?;
        }
        Ok(())
    }

    /// Gluing of functions over a partition of the atoms.
    pub fn glue(events: &[Event], parts: &[StratifiedConvexFunction]) -> StratifiedConvexFunction {
        let n = events.first().map(|e| e.n_atoms()).unwrap_or(0);
        let mut atoms = Vec::with_capacity(n);
        for atom in 0..n {
            let k = events.iter().position(|e| e.contains(atom)).expect("partition");
            atoms.push(parts[k].atoms[atom].clone());
        }
        StratifiedConvexFunction { atoms }
    }
}

/// Per-atom evaluation.
pub fn evaluate(
    f: &StratifiedConvexFunction,
    x: &ModuleElement,
    space: &StratifiedSpace,
) -> Result<RandomScalar, FenchelError> {
    f.validate(space)?;
    if x.coords.len() != space.n_fine() {
        return Err(FenchelError::DimensionMismatch(x.coords.len(), space.n_fine()));
    }
    let values = (0..space.n_coarse())
        .map(|atom| f.atoms[atom].eval_block(&x.block(space, atom), space, atom))
        .collect();
    Ok(RandomScalar::new(values))
}

/// Properness: some element evaluates finite on every atom (found per atom
/// and glued, which the concatenation property of the module licenses),
/// and no atom attains minus infinity.
pub fn is_proper(
    f: &StratifiedConvexFunction,
    space: &StratifiedSpace,
) -> Result<(bool, Option<ModuleElement>), FenchelError> {
    f.validate(space)?;
    let mut blocks = Vec::with_capacity(space.n_coarse());
    for (atom, piece) in f.atoms.iter().enumerate() {
        if piece.attains_minus_inf() {
            return Ok((false, None));
        }
        match piece.finite_point(space.atom_dim(atom), space, atom) {
            Some(b) => blocks.push(b),
            None => return Ok((false, None)),
        }
    }
    let witness = ModuleElement::from_blocks(space, &blocks);
    // Confirm by evaluation.
    let v = evaluate(f, &witness, space)?;
    Ok((v.is_finite(), Some(witness)))
}

/// Sampled locality report: restricting the argument to an event does not
/// change the values on that event, and glued arguments evaluate to glued
/// values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalityReport {
    pub checked: usize,
    pub violations: Vec<String>,
}

impl LocalityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn locality_check(
    f: &StratifiedConvexFunction,
    samples: &[ModuleElement],
    space: &StratifiedSpace,
) -> Result<LocalityReport, FenchelError> {
    let mut report = LocalityReport { checked: 0, violations: Vec::new() };
    let n = space.n_coarse();
    for (si, x) in samples.iter().enumerate() {
        let fx = evaluate(f, x, space)?;
        for k in 0..n {
            let event = Event::from_indices(n, &[k]);
            let restricted = x.restrict(&event, space);
            let f_restricted = evaluate(f, &restricted, space)?;
            report.checked += 1;
            if fx.get(k) != f_restricted.get(k) {
                report.violations.push(format!(
                    "sample {si}: value on atom {k} changed under restriction: {} vs {}",
                    fx.get(k),
                    f_restricted.get(k)
                ));
            }
        }
        // Glued-argument identity against the previous sample.
        if si > 0 {
            let y = &samples[si - 1];
            let half = Event::from_indices(n, &(0..n / 2).collect::<Vec<_>>());
            let glued = ModuleElement::glue(&[half.clone(), half.complement()], &[x.clone(), y.clone()], space);
            let direct = evaluate(f, &glued, space)?;
            let fy = evaluate(f, y, space)?;
            let expected = RandomScalar::glue(&[half.clone(), half.complement()], &[fx.clone(), fy])
                .expect("partition");
            report.checked += 1;
            if direct != expected {
                report.violations.push(format!("sample {si}: glued evaluation mismatch"));
            }
        }
    }
    Ok(report)
}

/// Sampled conditional-convexity report: the convexity inequality with
/// per-atom coefficients in [0, 1], under the extended-real conventions.
pub fn convexity_check(
    f: &StratifiedConvexFunction,
    triples: &[(ModuleElement, ModuleElement, RandomScalar)],
    space: &StratifiedSpace,
) -> Result<LocalityReport, FenchelError> {
    let mut report = LocalityReport { checked: 0, violations: Vec::new() };
    for (ti, (x, y, xi)) in triples.iter().enumerate() {
        let one_minus = RandomScalar::constant(space.n_coarse(), Xr::ONE).sub(xi).unwrap();
        let combo = x.scale_by(xi, space).add(&y.scale_by(&one_minus, space));
        let lhs = evaluate(f, &combo, space)?;
        let rhs = xi
            .mul(&evaluate(f, x, space)?)
            .unwrap()
            .add(&one_minus.mul(&evaluate(f, y, space)?).unwrap())
            .unwrap();
        report.checked += 1;
        if !lhs.le_within(&rhs, 1e-9) {
            report
                .violations
                .push(format!("triple {ti}: convexity fails: {lhs:?} vs {rhs:?}"));
        }
    }
    Ok(report)
}

/// Per-atom Fenchel conjugate on the dual coordinates. Polyhedral pieces
/// conjugate exactly through generator enumeration of the epigraph;
/// positive definite quadratics in closed form; grids through their node
/// samples (the multilinear interpolant attains suprema at cell corners);
/// entropic pieces pair with the relative-entropy pieces.
pub fn conjugate(
    f: &StratifiedConvexFunction,
    space: &StratifiedSpace,
) -> Result<StratifiedConvexFunction, FenchelError> {
    f.validate(space)?;
    let atoms = f
        .atoms
        .iter()
        .enumerate()
        .map(|(atom, piece)| conjugate_atom(piece, space.atom_dim(atom), atom))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StratifiedConvexFunction { atoms })
}

fn conjugate_atom(piece: &AtomFunction, d: usize, atom: usize) -> Result<AtomFunction, FenchelError> {
    if piece.attains_minus_inf() {
        return Ok(AtomFunction::PlusInf);
    }
    if piece.identically_plus_inf() {
        return Ok(AtomFunction::MinusInf);
    }
    match piece {
        AtomFunction::MaxAffine { pieces, domain } => {
            // Epigraph {(x, t) : slope·x - t <= -intercept, x in domain}.
            let mut rows = Vec::new();
            let mut rhs = Vec::new();
            for p in pieces {
                let mut row = p.slope.clone();
                row.push(-1.0);
                rows.push(row);
                rhs.push(-p.intercept);
            }
            if let Some(h) = domain {
                for (row, &b) in h.a.iter().zip(&h.b) {
                    let mut r = row.clone();
                    r.push(0.0);
                    rows.push(r);
                    rhs.push(b);
                }
            }
            let epi = HPolytope::new(rows, rhs);
            let gf = minkowski_weyl(&epi);
            if gf.is_empty() {
                return Ok(AtomFunction::MinusInf);
            }
            // Support of the epigraph at (y, -1): pieces from vertices,
            // domain constraints from rays and lineality.
            let conj_pieces: Vec<AffinePiece> = gf
                .vertices
                .iter()
                .map(|v| AffinePiece::new(v[..d].to_vec(), -v[d]))
                .collect();
            let mut dom = HPolytope::universe(d);
            for r in &gf.rays {
                let (rx, rt) = (&r[..d], r[d]);
                if rx.iter().all(|v| v.abs() < 1e-12) {
                    continue;
                }
                dom.push_row(rx.to_vec(), rt);
            }
            for l in &gf.lineality {
                let (lx, lt) = (&l[..d], l[d]);
                if lx.iter().all(|v| v.abs() < 1e-12) {
                    continue;
                }
                dom.push_equality(lx.to_vec(), lt);
            }
            let domain = (dom.n_rows() > 0).then_some(dom);
            Ok(prune_max_affine(AtomFunction::MaxAffine { pieces: conj_pieces, domain }))
        }
        AtomFunction::Quadratic { quad, linear, constant } => {
            let q = DMatrix::from_fn(d, d, |i, j| quad[i][j]);
            let chol = q.clone().cholesky().ok_or(FenchelError::SingularQuadratic(atom))?;
            let b = DVector::from_column_slice(linear);
            let qinv = chol.inverse();
            let new_lin = -(&qinv * &b);
            let new_const = 0.5 * (b.transpose() * &qinv * &b)[(0, 0)] - constant;
            Ok(AtomFunction::Quadratic {
                quad: (0..d).map(|i| (0..d).map(|j| qinv[(i, j)]).collect()).collect(),
                linear: new_lin.iter().cloned().collect(),
                constant: new_const,
            })
        }
        AtomFunction::Grid(g) => {
            // The interpolant attains linear suprema at cell corners, so
            // the conjugate is the discrete conjugate of the node samples.
            let finite: Vec<(Vec<f64>, f64)> = g
                .nodes()
                .filter_map(|(c, v)| v.finite().map(|fv| (c, fv)))
                .collect();
            if finite.is_empty() {
                return Ok(AtomFunction::MinusInf);
            }
            let pieces: Vec<AffinePiece> = if d == 1 {
                let mut pts: Vec<(f64, f64)> =
                    finite.iter().map(|(c, v)| (c[0], *v)).collect();
                pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                dlt::lower_hull_1d(&pts)
                    .into_iter()
                    .map(|i| AffinePiece::new(vec![pts[i].0], -pts[i].1))
                    .collect()
            } else {
                finite
                    .iter()
                    .map(|(c, v)| AffinePiece::new(c.clone(), -v))
                    .collect()
            };
            Ok(AtomFunction::MaxAffine { pieces, domain: None })
        }
        AtomFunction::Entropic { gamma } => Ok(AtomFunction::RelativeEntropy { gamma: *gamma }),
        AtomFunction::RelativeEntropy { gamma } => Ok(AtomFunction::Entropic { gamma: *gamma }),
        AtomFunction::MinusInf | AtomFunction::PlusInf => unreachable!("handled above"),
    }
}

/// Drop duplicate and never-active affine pieces: a piece stays when some
/// domain point makes it strictly exceed the max of the others (decided by
/// one small LP per piece). Values are unchanged.
pub fn prune_max_affine(piece: AtomFunction) -> AtomFunction {
    let AtomFunction::MaxAffine { pieces, domain } = piece else {
        return piece;
    };
    let mut unique: Vec<AffinePiece> = Vec::new();
    for p in pieces {
        let dup = unique.iter().any(|q| {
            (q.intercept - p.intercept).abs() <= 1e-12
                && q.slope
                    .iter()
                    .zip(&p.slope)
                    .all(|(a, b)| (a - b).abs() <= 1e-12)
        });
        if !dup {
            unique.push(p);
        }
    }
    if unique.len() <= 1 {
        return AtomFunction::MaxAffine { pieces: unique, domain };
    }
    let d = unique[0].slope.len();
    let mut kept: Vec<AffinePiece> = Vec::new();
    for i in 0..unique.len() {
        // Maximize (piece_i - t) with t above every other piece: positive
        // optimum (or unboundedness) marks the piece as essential.
        let mut lp = crate::lp::LinearProgram::new(d + 1);
        let mut obj: Vec<f64> = unique[i].slope.iter().map(|v| -v).collect();
        obj.push(1.0);
        if lp.minimize(&obj).is_err() {
            kept.push(unique[i].clone());
            continue;
        }
        let mut ok = true;
        for (j, q) in unique.iter().enumerate() {
            if j == i {
                continue;
            }
            let mut row = q.slope.clone();
            row.push(-1.0);
            ok &= lp.add_row(&row, crate::lp::Rel::Le, -q.intercept).is_ok();
        }
        if let Some(h) = &domain {
            for (row, &b) in h.a.iter().zip(&h.b) {
                let mut r = row.clone();
                r.push(0.0);
                ok &= lp.add_row(&r, crate::lp::Rel::Le, b).is_ok();
            }
        }
        if !ok {
            kept.push(unique[i].clone());
            continue;
        }
        match lp.solve() {
            Ok(crate::lp::LpOutcome::Optimal { value, .. }) => {
                if -value + unique[i].intercept > -1e-10 {
                    kept.push(unique[i].clone());
                }
            }
            Ok(crate::lp::LpOutcome::Unbounded) => kept.push(unique[i].clone()),
            // An infeasible or failing pruning LP keeps the piece: pruning
            // must never change values.
            _ => kept.push(unique[i].clone()),
        }
    }
    if kept.is_empty() {
        kept.push(unique[0].clone());
    }
    AtomFunction::MaxAffine { pieces: kept, domain }
}

/// Conjugation applied twice: the closed convex envelope per atom.
pub fn biconjugate(
    f: &StratifiedConvexFunction,
    space: &StratifiedSpace,
) -> Result<StratifiedConvexFunction, FenchelError> {
    conjugate(&conjugate(f, space)?, space)
}

/// An affine minorant `h(x) = g(x) + z` of a proper per-atom-closed convex
/// function with `h(x0) = beta` exactly, built per atom from the tangent at
/// `x0` when `x0` lies in the domain and from an epigraph separation
/// otherwise.
pub fn affine_minorant(
    f: &StratifiedConvexFunction,
    x0: &ModuleElement,
    beta: &RandomScalar,
    space: &StratifiedSpace,
) -> Result<(ModuleFunctional, RandomScalar), FenchelError> {
    let (proper, _) = is_proper(f, space)?;
    if !proper {
        return Err(FenchelError::NotProper("affine minorant needs a proper function".into()));
    }
    let fx0 = evaluate(f, x0, space)?;
    for atom in 0..space.n_coarse() {
        let gap = fx0.get(atom) - beta.get(atom);
        if !(gap > Xr::ZERO) || !beta.get(atom).is_finite() {
            return Err(FenchelError::MinorantGap(atom, gap.raw()));
        }
    }
    let mut slopes = Vec::with_capacity(space.n_coarse());
    let mut offsets = Vec::with_capacity(space.n_coarse());
    for atom in 0..space.n_coarse() {
        let d = space.atom_dim(atom);
        let block = x0.block(space, atom);
        let b = beta.get(atom).raw();
        let piece = normalize_piece_for_minorant(&f.atoms[atom], atom)?;
        let (slope, offset) = if fx0.get(atom).is_finite() {
            // Tangent through (x0, beta): a subgradient at x0 shifted down.
            let g1 = subgradient_at(&piece, &block, space, atom)?;
            let offset = b - geom::dot(&g1, &block);
            (g1, offset)
        } else {
            minorant_outside_domain(&piece, &block, b, d, space, atom)?
        };
        slopes.push(slope);
        offsets.push(Xr::new(offset));
    }
    Ok((ModuleFunctional::from_blocks(space, &slopes), RandomScalar::new(offsets)))
}

/// Grid pieces enter the minorant machinery through their polyhedral
/// envelope (legitimate under the convexity precondition).
fn normalize_piece_for_minorant(
    piece: &AtomFunction,
    atom: usize,
) -> Result<AtomFunction, FenchelError> {
    match piece {
        AtomFunction::Grid(g) => {
            let finite: Vec<(Vec<f64>, f64)> = g
                .nodes()
                .filter_map(|(c, v)| v.finite().map(|fv| (c, fv)))
                .collect();
            if finite.is_empty() {
                return Err(FenchelError::MinorantUnsupported(atom));
            }
            let pieces = lower_envelope_pieces(&finite)
                .into_iter()
                .map(|(slope, intercept)| AffinePiece::new(slope, intercept))
                .collect();
            let supports: Vec<Vec<f64>> = finite.into_iter().map(|(c, _)| c).collect();
            let domain = Some(geom::facet_enumeration(&supports));
            Ok(AtomFunction::MaxAffine { pieces, domain })
        }
        AtomFunction::RelativeEntropy { .. } => Err(FenchelError::MinorantUnsupported(atom)),
        other => Ok(other.clone()),
    }
}

fn subgradient_at(
    piece: &AtomFunction,
    block: &[f64],
    space: &StratifiedSpace,
    atom: usize,
) -> Result<Vec<f64>, FenchelError> {
    match piece {
        AtomFunction::MaxAffine { pieces, .. } => {
            let best = pieces
                .iter()
                .max_by(|a, b| a.eval(block).partial_cmp(&b.eval(block)).unwrap())
                .ok_or(FenchelError::MinorantUnsupported(atom))?;
            Ok(best.slope.clone())
        }
        AtomFunction::Quadratic { quad, linear, .. } => {
            let mut g = linear.clone();
            for (i, row) in quad.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    g[i] += v * block[j];
                }
            }
            Ok(g)
        }
        AtomFunction::Entropic { gamma } => {
            let profile = space.atom_profile(atom);
            let m = block
                .iter()
                .map(|&x| -gamma * x)
                .fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = block
                .iter()
                .zip(&profile)
                .map(|(&x, &w)| w * (-gamma * x - m).exp())
                .collect();
            let z: f64 = weights.iter().sum();
            Ok(weights.iter().map(|w| -w / z).collect())
        }
        _ => Err(FenchelError::MinorantUnsupported(atom)),
    }
}

/// The outside-domain branches: separate `(x0, beta)` from the epigraph and
/// follow the vanishing-vertical-component split.
fn minorant_outside_domain(
    piece: &AtomFunction,
    block: &[f64],
    beta: f64,
    d: usize,
    space: &StratifiedSpace,
    atom: usize,
) -> Result<(Vec<f64>, f64), FenchelError> {
    let AtomFunction::MaxAffine { pieces, domain } = piece else {
        // Smooth pieces are finite everywhere, so this branch is
        // unreachable for them.
        return Err(FenchelError::MinorantUnsupported(atom));
    };
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for p in pieces {
        let mut row = p.slope.clone();
        row.push(-1.0);
        rows.push(row);
        rhs.push(-p.intercept);
    }
    if let Some(h) = domain {
        for (row, &bb) in h.a.iter().zip(&h.b) {
            let mut r = row.clone();
            r.push(0.0);
            rows.push(r);
            rhs.push(bb);
        }
    }
    let epi = HPolytope::new(rows, rhs);
    let mut point = block.to_vec();
    point.push(beta);
    let proj = geom::project_onto_hpoly(&epi, &point)
        .ok_or(FenchelError::MinorantUnsupported(atom))?;
    let g1: Vec<f64> = point[..d].iter().zip(&proj[..d]).map(|(a, b)| a - b).collect();
    let g2 = point[d] - proj[d];
    let delta = geom::dot(&g1, &proj[..d]) + g2 * proj[d];
    let scale = 1.0 + point.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if g2 < -1e-10 * scale {
        // Vertical component present: the separating hyperplane solved for
        // t passes through (x0, beta).
        let slope: Vec<f64> = g1.iter().map(|v| -v / g2).collect();
        let offset = beta + geom::dot(&g1, block) / g2;
        Ok((slope, offset))
    } else {
        // Horizontal separator: combine a minorant h' at an interior point
        // with the nonnegative-on-domain affine correction delta - g1·x.
        let x0p = piece
            .finite_point(d, space, atom)
            .ok_or(FenchelError::MinorantUnsupported(atom))?;
        let f_x0p = piece.eval_block(&x0p, space, atom);
        let fv = f_x0p.finite().ok_or(FenchelError::MinorantUnsupported(atom))?;
        let g1p = subgradient_at(piece, &x0p, space, atom)?;
        // h'(x) = (fv - 1) + g1p·(x - x0p).
        let hp_slope = g1p.clone();
        let hp_offset = fv - 1.0 - geom::dot(&g1p, &x0p);
        let hp_at_x0 = geom::dot(&hp_slope, block) + hp_offset;
        if hp_at_x0 >= beta {
            Ok((hp_slope, hp_offset + (beta - hp_at_x0)))
        } else {
            let htilde_at_x0 = delta - geom::dot(&g1, block);
            // Strictly negative here because the separator is horizontal.
            let ratio = (beta - hp_at_x0) / htilde_at_x0;
            let slope: Vec<f64> = hp_slope
                .iter()
                .zip(&g1)
                .map(|(a, b)| a - ratio * b)
                .collect();
            let offset = hp_offset + ratio * delta;
            Ok((slope, offset))
        }
    }
}

/// The classification of atoms by the reach of the function values:
/// `mi` where minus infinity is attained, `pi` where the piece is
/// identically plus infinity, `bp` elsewhere, with witnesses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventClassification {
    pub mi: Event,
    pub pi: Event,
    pub bp: Event,
    pub mi_witnesses: Vec<(usize, ModuleElement)>,
    pub bp_witnesses: Vec<(usize, ModuleElement)>,
}

pub fn classify_events(
    f: &StratifiedConvexFunction,
    space: &StratifiedSpace,
) -> Result<EventClassification, FenchelError> {
    f.validate(space)?;
    let n = space.n_coarse();
    let mut mi = vec![false; n];
    let mut pi = vec![false; n];
    let mut mi_witnesses = Vec::new();
    let mut bp_witnesses = Vec::new();
    for atom in 0..n {
        let piece = &f.atoms[atom];
        let d = space.atom_dim(atom);
        if piece.attains_minus_inf() {
            mi[atom] = true;
            let block = match piece {
                AtomFunction::Grid(g) => g
                    .nodes()
                    .find(|(_, v)| v.is_neg_inf())
                    .map(|(c, _)| c)
                    .unwrap_or_else(|| vec![0.0; d]),
                AtomFunction::MaxAffine { domain: Some(h), .. } => {
                    h.feasible_point().unwrap_or_else(|| vec![0.0; d])
                }
                _ => vec![0.0; d],
            };
            let mut blocks = vec![Vec::new(); n];
            for (a, b) in blocks.iter_mut().enumerate() {
                *b = if a == atom { block.clone() } else { vec![0.0; space.atom_dim(a)] };
            }
            mi_witnesses.push((atom, ModuleElement::from_blocks(space, &blocks)));
        } else if piece.identically_plus_inf() {
            pi[atom] = true;
        } else if let Some(block) = piece.finite_point(d, space, atom) {
            let mut blocks = vec![Vec::new(); n];
            for (a, b) in blocks.iter_mut().enumerate() {
                *b = if a == atom { block.clone() } else { vec![0.0; space.atom_dim(a)] };
            }
            bp_witnesses.push((atom, ModuleElement::from_blocks(space, &blocks)));
        } else {
            // No finite point found although not identically +inf: treat
            // as plus-infinity atom (numerically empty domain).
            pi[atom] = true;
        }
    }
    let mi = Event::from_mask(mi);
    let pi = Event::from_mask(pi);
    let bp = mi.union(&pi).complement();
    Ok(EventClassification { mi, pi, bp, mi_witnesses, bp_witnesses })
}

/// The greatest closed function below `f`: minus infinity across
/// minus-infinity atoms, plus infinity on plus-infinity atoms, and the
/// per-atom closed convex envelope elsewhere (computed from the epigraph
/// hull, independently of conjugation).
pub fn closure(
    f: &StratifiedConvexFunction,
    space: &StratifiedSpace,
) -> Result<StratifiedConvexFunction, FenchelError> {
    let classes = classify_events(f, space)?;
    let mut atoms = Vec::with_capacity(space.n_coarse());
    for atom in 0..space.n_coarse() {
        if classes.mi.contains(atom) {
            atoms.push(AtomFunction::MinusInf);
        } else if classes.pi.contains(atom) {
            atoms.push(AtomFunction::PlusInf);
        } else {
            atoms.push(closure_piece(&f.atoms[atom], atom)?);
        }
    }
    Ok(StratifiedConvexFunction { atoms })
}

fn closure_piece(piece: &AtomFunction, atom: usize) -> Result<AtomFunction, FenchelError> {
    match piece {
        AtomFunction::Grid(g) => {
            let finite: Vec<(Vec<f64>, f64)> = g
                .nodes()
                .filter_map(|(c, v)| v.finite().map(|fv| (c, fv)))
                .collect();
            if finite.is_empty() {
                return Ok(AtomFunction::PlusInf);
            }
            let pieces = lower_envelope_pieces(&finite)
                .into_iter()
                .map(|(slope, intercept)| AffinePiece::new(slope, intercept))
                .collect();
            let supports: Vec<Vec<f64>> = finite.into_iter().map(|(c, _)| c).collect();
            Ok(AtomFunction::MaxAffine {
                pieces,
                domain: Some(geom::facet_enumeration(&supports)),
            })
        }
        other => Ok(other.clone()),
    }
    .map(|p| {
        let _ = atom;
        p
    })
}

/// Closedness per the event classification: identically minus infinity on
/// minus-infinity atoms and proper lower semicontinuous convex pieces on
/// the potentially proper atoms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosednessReport {
    pub issues: Vec<String>,
}

impl ClosednessReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

pub fn is_closed_check(
    f: &StratifiedConvexFunction,
    space: &StratifiedSpace,
) -> Result<ClosednessReport, FenchelError> {
    let classes = classify_events(f, space)?;
    let mut issues = Vec::new();
    for atom in 0..space.n_coarse() {
        let piece = &f.atoms[atom];
        if classes.mi.contains(atom) {
            let identically = match piece {
                AtomFunction::MinusInf => true,
                AtomFunction::MaxAffine { pieces, domain } => {
                    pieces.is_empty() && domain.is_none()
                }
                _ => false,
            };
            if !identically {
                issues.push(format!(
                    "atom {atom}: attains -inf without being identically -inf"
                ));
            }
        } else if classes.bp.contains(atom) {
            match piece {
                AtomFunction::MaxAffine { .. }
                | AtomFunction::Entropic { .. }
                | AtomFunction::RelativeEntropy { .. } => {}
                AtomFunction::Quadratic { quad, .. } => {
                    // Convexity needs a positive semidefinite form.
                    let d = quad.len();
                    let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (quad[i][j] + quad[j][i]));
                    let eigs = m.symmetric_eigenvalues();
                    if eigs.iter().any(|&e| e < -1e-9) {
                        issues.push(format!("atom {atom}: quadratic piece is not convex"));
                    }
                }
                AtomFunction::Grid(g) =>

 {
                    let finite: Vec<(Vec<f64>, f64)> = g
                        .nodes()
                        .filter_map(|(c, v)| v.finite().map(|fv| (c, fv)))
                        .collect();
                    let envelope = lower_envelope_pieces(&finite);
                    let env_val = |c: &[f64]| {
                        envelope
                            .iter()
                            .map(|(s, b)| geom::dot(s, c) + b)
                            .fold(f64::NEG_INFINITY, f64::max)
                    };
                    for (c, v) in &finite {
                        if env_val(c) < v - 1e-9 {
                            issues.push(format!(
                                "atom {atom}: grid value at {c:?} sits above its convex envelope"
                            ));
                        }
                    }
                    // Plus-infinity nodes strictly inside the finite hull
                    // break lower semicontinuity of the interpolant.
                    let supports: Vec<Vec<f64>> = finite.iter().map(|(c, _)| c.clone()).collect();
                    if !supports.is_empty() {
                        let hull = geom::facet_enumeration(&supports);
                        for (c, v) in g.nodes() {
                            if v.is_pos_inf() && hull.violation(&c) < -1e-9 {
                                issues.push(format!(
                                    "atom {atom}: +inf node {c:?} inside the finite support hull"
                                ));
                            }
                        }
                    }
                }
                AtomFunction::MinusInf | AtomFunction::PlusInf => {}
            }
        }
    }
    Ok(ClosednessReport { issues })
}

/// Relation between the two closedness notions at finite scale: epigraph
/// closedness (the `is_closed_check` predicate) against closedness of the
/// sampled sublevel sets, probed along convergent segments. Only the
/// implication from epigraph closedness to sublevel closedness is
/// asserted; the report records the sampled evidence for both directions
/// without assuming the converse.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SublevelRelationReport {
    pub epigraph_closed: bool,
    pub sublevel_violations: Vec<String>,
    pub checked: usize,
}

impl SublevelRelationReport {
    /// The asserted direction: epigraph-closed functions must show closed
    /// sublevel behaviour on every sampled segment.
    pub fn implication_holds(&self) -> bool {
        !self.epigraph_closed || self.sublevel_violations.is_empty()
    }
}

pub fn sublevel_relation_report(
    f: &StratifiedConvexFunction,
    space: &StratifiedSpace,
    samples: &[(ModuleElement, ModuleElement)],
    levels: &[f64],
) -> Result<SublevelRelationReport, FenchelError> {
    let epigraph_closed = is_closed_check(f, space)?.passed();
    let mut violations = Vec::new();
    let mut checked = 0usize;
    for (si, (inside, outside)) in samples.iter().enumerate() {
        for &r in levels {
            let level = RandomScalar::constant(space.n_coarse(), Xr::new(r));
            let f_in = evaluate(f, inside, space)?;
            if !f_in.le_within(&level, 0.0) {
                continue;
            }
            checked += 1;
            // Walk the segment from inside toward outside, keeping the
            // last parameter still inside the sublevel set, and test the
            // limit point for membership: a closed sublevel set keeps it.
            let mut lo = 0.0f64;
            let mut hi = 1.0f64;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let x = inside.add(&outside.sub(inside).scale(mid));
                let fx = evaluate(f, &x, space)?;
                if fx.le_within(&level, 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let boundary = inside.add(&outside.sub(inside).scale(lo));
            let f_boundary = evaluate(f, &boundary, space)?;
            if !f_boundary.le_within(&level, 1e-7 * (1.0 + r.abs())) {
                violations.push(format!(
                    "sample {si}, level {r}: limit of sublevel points escapes the set"
                ));
            }
        }
    }
    Ok(SublevelRelationReport { epigraph_closed, sublevel_violations: violations, checked })
}

/// Report accompanying a closed supremum: the closedness re-check and the
/// event identities of the classification against the members.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupClosedReport {
    pub closedness: ClosednessReport,
    pub mi_identity: bool,
    pub pi_identity: bool,
}

impl SupClosedReport {
    pub fn passed(&self) -> bool {
        self.closedness.passed() && self.mi_identity && self.pi_identity
    }
}

/// Pointwise supremum of closed functions: polyhedral pieces merge exactly,
/// mixed kinds are resampled onto a grid, and the result is re-checked for
/// closedness. Also asserts the event identities: the minus-infinity event
/// of the supremum is the intersection of the members', the plus-infinity
/// event contains their union.
pub fn sup_closed(
    fs: &[StratifiedConvexFunction],
    space: &StratifiedSpace,
) -> Result<(StratifiedConvexFunction, SupClosedReport), FenchelError> {
    assert!(!fs.is_empty(), "supremum needs at least one function");
    for (i, f) in fs.iter().enumerate() {
        let report = is_closed_check(f, space)?;
        if !report.passed() {
            return Err(FenchelError::NotClosed(i, report.issues.join("; ")));
        }
    }
    let mut atoms = Vec::with_capacity(space.n_coarse());
    for atom in 0..space.n_coarse() {
        let pieces: Vec<&AtomFunction> = fs.iter().map(|f| &f.atoms[atom]).collect();
        atoms.push(sup_pieces(&pieces, space, atom)?);
    }
    let sup = StratifiedConvexFunction { atoms };

    let sup_classes = classify_events(&sup, space)?;
    let member_classes: Vec<EventClassification> = fs
        .iter()
        .map(|f| classify_events(f, space))
        .collect::<Result<_, _>>()?;
    let mut mi_expected = member_classes[0].mi.clone();
    let mut pi_expected = member_classes[0].pi.clone();
    for c in &member_classes[1..] {
        mi_expected = mi_expected.intersect(&c.mi);
        pi_expected = pi_expected.union(&c.pi);
    }
    let report = SupClosedReport {
        closedness: is_closed_check(&sup, space)?,
        mi_identity: sup_classes.mi == mi_expected,
        pi_identity: sup_classes.pi == pi_expected,
    };
    Ok((sup, report))
}

fn sup_pieces(
    pieces: &[&AtomFunction],
    space: &StratifiedSpace,
    atom: usize,
) -> Result<AtomFunction, FenchelError> {
    // Constants dominate or vanish.
    if pieces.iter().any(|p| p.identically_plus_inf()) {
        return Ok(AtomFunction::PlusInf);
    }
    let live: Vec<&AtomFunction> = pieces
        .iter()
        .filter(|p| !matches!(p, AtomFunction::MinusInf))
        .cloned()
        .collect();
    if live.is_empty() {
        return Ok(AtomFunction::MinusInf);
    }
    if live
        .iter()
        .all(|p| matches!(p, AtomFunction::MaxAffine { .. }))
    {
        let mut all_pieces = Vec::new();
        let mut domain: Option<HPolytope> = None;
        for p in &live {
            let AtomFunction::MaxAffine { pieces, domain: d } = p else { unreachable!() };
            all_pieces.extend(pieces.iter().cloned());
            if let Some(h) = d {
                domain = Some(match domain {
                    None => h.clone(),
                    Some(acc) => acc.intersect(h),
                });
            }
        }
        return Ok(AtomFunction::MaxAffine { pieces: all_pieces, domain });
    }
    // Mixed kinds: resample the pointwise max on a grid over a box
    // covering the shared domain.
    let d = space.atom_dim(atom);
    let (lo, hi) = sup_sampling_box(&live, d);
    let per_axis = if d <= 1 { 65 } else if d == 2 { 25 } else { 11 };
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            (0..per_axis)
                .map(|k| lo[j] + (hi[j] - lo[j]) * k as f64 / (per_axis - 1) as f64)
                .collect()
        })
        .collect();
    let grid_shape: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    let n_nodes: usize = grid_shape.iter().product();
    let mut values = Vec::with_capacity(n_nodes);
    for idx in 0..n_nodes {
        let mut rem = idx;
        let mut coords = vec![0.0; d];
        for j in (0..d).rev() {
            coords[j] = axes[j][rem % grid_shape[j]];
            rem /= grid_shape[j];
        }
        let v = live
            .iter()
            .map(|p| p.eval_block(&coords, space, atom))
            .fold(Xr::NEG_INF, Xr::max);
        values.push(v);
    }
    Ok(AtomFunction::Grid(GridFn { axes, values }))
}

fn sup_sampling_box(pieces: &[&AtomFunction], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![-8.0f64; d];
    let mut hi = vec![8.0f64; d];
    for p in pieces {
        match p {
            AtomFunction::Grid(g) => {
                for j in 0..d {
                    lo[j] = lo[j].max(g.axes[j][0]);
                    hi[j] = hi[j].min(g.axes[j][g.axes[j].len() - 1]);
                }
            }
            AtomFunction::MaxAffine { domain: Some(h), .. } => {
                let gf = minkowski_weyl(h);
                if gf.rays.is_empty() && gf.lineality.is_empty() && !gf.vertices.is_empty() {
                    for j in 0..d {
                        let vmin = gf.vertices.iter().map(|v| v[j]).fold(f64::INFINITY, f64::min);
                        let vmax = gf
                            .vertices
                            .iter()
                            .map(|v| v[j])
                            .fold(f64::NEG_INFINITY, f64::max);
                        lo[j] = lo[j].max(vmin);
                        hi[j] = hi[j].min(vmax);
                    }
                }
            }
            _ => {}
        }
    }
    for j in 0..d {
        if lo[j] >= hi[j] {
            let mid = 0.5 * (lo[j] + hi[j]);
            lo[j] = mid - 1e-3;
            hi[j] = mid + 1e-3;
        }
    }
    (lo, hi)
}

/// The discrete Legendre transform on one-dimensional grids.
pub mod dlt {
    use crate::scalar::Xr;

    /// Indices of the lower convex hull of `(x, v)` points sorted by x
    /// (Andrew's monotone chain, lower half).
    pub fn lower_hull_1d(points: &[(f64, f64)]) -> Vec<usize> {
        let n = points.len();
        if n <= 2 {
            return (0..n).collect();
        }
        let mut hull: Vec<usize> = Vec::with_capacity(n);
        for i in 0..n {
            while hull.len() >= 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                // Keep b only if it lies strictly below the chord a-i.
                let cross = (points[b].0 - points[a].0) * (points[i].1 - points[a].1)
                    - (points[i].0 - points[a].0) * (points[b].1 - points[a].1);
                if cross <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(i);
        }
        hull
    }

    /// Fast discrete conjugate: `out[k] = max_i (ys[k] * xs[i] - vals[i])`,
    /// computed from the lower hull with a single sweep over sorted dual
    /// points. Infinite samples follow the conventions: any -inf sample
    /// lifts the conjugate to +inf, no finite sample at all drops it to
    /// -inf.
    pub fn legendre_grid(xs: &[f64], vals: &[Xr], ys: &[f64]) -> Vec<Xr> {
        assert_eq!(xs.len(), vals.len());
        if vals.iter().any(|v| v.is_neg_inf()) {
            return vec![Xr::POS_INF; ys.len()];
        }
        let mut pts: Vec<(f64, f64)> = xs
            .iter()
            .zip(vals)
            .filter_map(|(&x, v)| v.finite().map(|fv| (x, fv)))
            .collect();
        if pts.is_empty() {
            return vec![Xr::NEG_INF; ys.len()];
        }
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let hull = lower_hull_1d(&pts);
        // Sweep dual points in increasing order; the maximizing hull index
        // is monotone in the slope.
        let mut order: Vec<usize> = (0..ys.len()).collect();
        order.sort_by(|&a, &b| ys[a].partial_cmp(&ys[b]).unwrap());
        let mut out = vec![Xr::ZERO; ys.len()];
        let mut h = 0usize;
        for &k in &order {
            let y = ys[k];
            let value_at = |i: usize| y * pts[hull[i]].0 - pts[hull[i]].1;
            while h + 1 < hull.len() && value_at(h + 1) >= value_at(h) {
                h += 1;
            }
            // The chain is only non-decreasing per dual point; a smaller
            // index can never win again for larger y.
            out[k] = Xr::new(value_at(h));
        }
        out
    }

    /// Quadratic-time reference conjugate.
    pub fn legendre_brute(xs: &[f64], vals: &[Xr], ys: &[f64]) -> Vec<Xr> {
        assert_eq!(xs.len(), vals.len());
        ys.iter()
            .map(|&y| {
                let mut best = Xr::NEG_INF;
                for (&x, v) in xs.iter().zip(vals) {
                    let cand = Xr::new(y) * Xr::new(x) - *v;
                    best = best.max(cand);
                }
                best
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::module::apply_functional;
    use crate::space::Partition;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn four_point_space() -> StratifiedSpace {
        StratifiedSpace::new(
            vec![0.25; 4],
            Partition::singletons(4),
            Partition::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap(),
        )
        .unwrap()
    }

    fn diag2() -> StratifiedSpace {
        StratifiedSpace::diagonal(&[0.5, 0.5]).unwrap()
    }

    fn abs_piece() -> AtomFunction {
        AtomFunction::MaxAffine {
            pieces: vec![
                AffinePiece::new(vec![1.0], 0.0),
                AffinePiece::new(vec![-1.0], 0.0),
            ],
            domain: None,
        }
    }

    fn interval_indicator() -> AtomFunction {
        AtomFunction::indicator(HPolytope::cuboid(&[-1.0], &[1.0]))
    }

    fn half_square_piece(d: usize) -> AtomFunction {
        let quad = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        AtomFunction::Quadratic { quad, linear: vec![0.0; d], constant: 0.0 }
    }

    #[test]
    fn evaluate_examples() {
        let s = diag2();
        // |x| at 3.
        let f = StratifiedConvexFunction::uniform(&s, abs_piece());
        let x = ModuleElement::new(vec![3.0, -2.0]);
        let v = evaluate(&f, &x, &s).unwrap();
        assert_eq!(v, RandomScalar::from_f64s(&[3.0, 2.0]));
        // A plus-infinity atom dominates regardless of the argument.
        let g = StratifiedConvexFunction::new(vec![AtomFunction::PlusInf, abs_piece()]);
        let w = evaluate(&g, &x, &s).unwrap();
        assert!(w.get(0).is_pos_inf());
        assert_eq!(w.get(1), Xr::new(2.0));
        // Entropic at zero is zero (uniform two-point atoms).
        let s4 = four_point_space();
        let rho = StratifiedConvexFunction::uniform(&s4, AtomFunction::Entropic { gamma: 1.0 });
        let z = evaluate(&rho, &ModuleElement::zero(4), &s4).unwrap();
        assert!(z.values().iter().all(|v| v.raw().abs() < 1e-15));
        // Frozen from the direct formula oracle: gamma=1, block (0, 1):
        // ln((e^0 + e^-1)/2).
        let x4 = ModuleElement::new(vec![0.0, 1.0, 0.0, 1.0]);
        let r = evaluate(&rho, &x4, &s4).unwrap();
        let expect = ((1.0f64 + (-1.0f64).exp()) / 2.0).ln();
        assert!(r.values().iter().all(|v| (v.raw() - expect).abs() < 1e-14));
    }

    #[test]
    fn grid_interpolation_with_infinities() {
        let g = GridFn {
            axes: vec![vec![0.0, 1.0, 2.0]],
            values: vec![Xr::new(0.0), Xr::new(1.0), Xr::POS_INF],
        };
        let s = StratifiedSpace::diagonal(&[1.0]).unwrap();
        let piece = AtomFunction::Grid(g);
        assert_eq!(piece.eval_block(&[0.5], &s, 0), Xr::new(0.5));
        // Exactly on the node adjacent to the infinite cell: finite.
        assert_eq!(piece.eval_block(&[1.0], &s, 0), Xr::new(1.0));
        // Inside the infinite cell: plus infinity.
        assert!(piece.eval_block(&[1.5], &s, 0).is_pos_inf());
        // Outside the box: plus infinity.
        assert!(piece.eval_block(&[-0.5], &s, 0).is_pos_inf());
    }

    #[test]
    fn conjugate_of_half_square_is_itself() {
        let s = diag2();
        let f = StratifiedConvexFunction::uniform(&s, half_square_piece(1));
        let fc = conjugate(&f, &s).unwrap();
        for y in [-2.0, -0.5, 0.0, 1.0, 3.0] {
            let x = ModuleElement::new(vec![y, y]);
            let lhs = evaluate(&fc, &x, &s).unwrap();
            assert!((lhs.get(0).raw() - y * y / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conjugate_of_interval_indicator_is_abs() {
        let s = diag2();
        let f = StratifiedConvexFunction::uniform(&s, interval_indicator());
        let fc = conjugate(&f, &s).unwrap();
        for y in [-3.0, -1.0, 0.0, 0.5, 2.0] {
            let x = ModuleElement::new(vec![y, -y]);
            let v = evaluate(&fc, &x, &s).unwrap();
            assert!((v.get(0).raw() - y.abs()).abs() < 1e-10);
            assert!((v.get(1).raw() - y.abs()).abs() < 1e-10);
        }
    }

    #[test]
    fn conjugate_of_abs_is_interval_indicator() {
        let s = diag2();
        let f = StratifiedConvexFunction::uniform(&s, abs_piece());
        let fc = conjugate(&f, &s).unwrap();
        // Brute-force oracle: sup over a fine grid of y*x - |x|.
        for y in [-1.5, -1.0, -0.3, 0.0, 0.8, 1.0, 1.2] {
            let x = ModuleElement::new(vec![y, 0.0]);
            let got = evaluate(&fc, &x, &s).unwrap().get(0);
            let mut brute = f64::NEG_INFINITY;
            let mut t = -10.0;
            while t <= 10.0 {
                brute = brute.max(y * t - t.abs());
                t += 1e-3;
            }
            if y.abs() <= 1.0 {
                assert!(got.raw().abs() <= 1e-10, "inside: got {got}");
                assert!((got.raw() - brute).abs() < 1e-6);
            } else {
                assert!(got.is_pos_inf(), "outside: got {got}");
                // The brute-force sup keeps growing with the grid radius.
                assert!(brute > 1.0);
            }
        }
    }

    #[test]
    fn conjugate_respects_infinity_conventions() {
        let s = diag2();
        let f = StratifiedConvexFunction::new(vec![AtomFunction::PlusInf, AtomFunction::MinusInf]);
        let fc = conjugate(&f, &s).unwrap();
        assert!(matches!(fc.atoms[0], AtomFunction::MinusInf));
        assert!(matches!(fc.atoms[1], AtomFunction::PlusInf));
        let fcc = biconjugate(&f, &s).unwrap();
        assert!(matches!(fcc.atoms[0], AtomFunction::PlusInf));
        assert!(matches!(fcc.atoms[1], AtomFunction::MinusInf));
    }

    #[test]
    fn biconjugate_fixes_proper_polyhedral_functions() {
        let s = diag2();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..40 {
            let n_pieces = rng.random_range(1..=4);
            let pieces: Vec<AffinePiece> = (0..n_pieces)
                .map(|_| {
                    AffinePiece::new(
                        vec![rng.random_range(-3.0..3.0)],
                        rng.random_range(-2.0..2.0),
                    )
                })
                .collect();
            let lo = rng.random_range(-4.0..-1.0);
            let hi = rng.random_range(1.0..4.0);
            let piece = AtomFunction::MaxAffine {
                pieces,
                domain: Some(HPolytope::cuboid(&[lo], &[hi])),
            };
            let f = StratifiedConvexFunction::uniform(&s, piece);
            let fcc = biconjugate(&f, &s).unwrap();
            for _ in 0..40 {
                let t = rng.random_range(lo..hi);
                let x = ModuleElement::new(vec![t, t]);
                let a = evaluate(&f, &x, &s).unwrap();
                let b = evaluate(&fcc, &x, &s).unwrap();
                assert!(a.max_abs_gap(&b).raw() <= 1e-8, "gap {:?} vs {:?}", a, b);
            }
        }
    }

    #[test]
    fn biconjugate_repairs_grid_bump() {
        // |x| with an upward bump at 0: the biconjugate is the envelope,
        // matching the chord through the neighbors.
        let s = StratifiedSpace::diagonal(&[1.0]).unwrap();
        let g = GridFn {
            axes: vec![vec![-1.0, 0.0, 1.0]],
            values: vec![Xr::new(1.0), Xr::new(0.5), Xr::new(1.0)],
        };
        let f = StratifiedConvexFunction::new(vec![AtomFunction::Grid(g)]);
        let fcc = biconjugate(&f, &s).unwrap();
        let cl = closure(&f, &s).unwrap();
        for t in [-1.0, -0.5, 0.0, 0.25, 0.75, 1.0] {
            let x = ModuleElement::new(vec![t]);
            let b = evaluate(&fcc, &x, &s).unwrap().get(0).raw();
            let c = evaluate(&cl, &x, &s).unwrap().get(0).raw();
            // Envelope oracle: lower hull of the three samples.
            let expect = if t <= 0.0 { 1.0 + (0.5 - 1.0) * (t + 1.0) } else { 0.5 + 0.5 * t };
            assert!((b - expect).abs() < 1e-9, "biconjugate at {t}: {b} vs {expect}");
            assert!((c - expect).abs() < 1e-9, "closure at {t}: {c} vs {expect}");
        }
    }

    #[test]
    fn conjugate_of_glued_function_is_glued_conjugate() {
        let s = diag2();
        let f = StratifiedConvexFunction::uniform(&s, abs_piece());
        let g = StratifiedConvexFunction::uniform(&s, half_square_piece(1));
        let e0 = Event::from_indices(2, &[0]);
        let glued = StratifiedConvexFunction::glue(
            &[e0.clone(), e0.complement()],
            &[f.clone(), g.clone()],
        );
        let conj_glued = conjugate(&glued, &s).unwrap();
        let fc = conjugate(&f, &s).unwrap();
        let gc = conjugate(&g, &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let x = ModuleElement::new(vec![
                rng.random_range(-0.9..0.9),
                rng.random_range(-3.0..3.0),
            ]);
            let direct = evaluate(&conj_glued, &x, &s).unwrap();
            let e_f = evaluate(&fc, &x, &s).unwrap();
            let e_g = evaluate(&gc, &x, &s).unwrap();
            assert_eq!(direct.get(0), e_f.get(0));
            assert_eq!(direct.get(1), e_g.get(1));
        }
    }

    #[test]
    fn fenchel_young_and_order_reversal() {
        let s = diag2();
        let f = StratifiedConvexFunction::uniform(&s, abs_piece());
        let fc = conjugate(&f, &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x = ModuleElement::new(vec![
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ]);
            let g = ModuleFunctional::new(vec![
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ]);
            let lhs = evaluate(&f, &x, &s)
                .unwrap()
                .add(&evaluate(&fc, &ModuleElement::new(g.coeffs.clone()), &s).unwrap())
                .unwrap();
            let rhs = apply_functional(&g, &x, &s).unwrap();
            assert!(rhs.le_within(&lhs, 1e-9), "Fenchel-Young fails: {lhs:?} < {rhs:?}");
            // Equality at subgradient pairs: the active piece's slope.
            let sub = ModuleFunctional::new(vec![x.coords[0].signum(), x.coords[1].signum()]);
            let eq_lhs = evaluate(&f, &x, &s)
                .unwrap()
                .add(&evaluate(&fc, &ModuleElement::new(sub.coeffs.clone()), &s).unwrap())
                .unwrap();
            let eq_rhs = apply_functional(&sub, &x, &s).unwrap();
            assert!(eq_lhs.max_abs_gap(&eq_rhs).raw() <= 1e-9);
        }
        // Order reversal: f <= g pointwise implies g* <= f*.
        let bigger = StratifiedConvexFunction::uniform(&s, half_square_piece(1));
        // |x| >= x^2/2 on [-2, 2]; restrict to the region via domain.
        let small = StratifiedConvexFunction::uniform(
            &s,
            AtomFunction::MaxAffine {
                pieces: vec![
                    AffinePiece::new(vec![1.0], 0.0),
                    AffinePiece::new(vec![-1.0], 0.0),
                ],
                domain: Some(HPolytope::cuboid(&[-2.0], &[2.0])),
            },
        );
        // small(x) = |x| + indicator <= ... we check reversal numerically.
        let cs = conjugate(&small, &s).unwrap();
        let cb = conjugate(&bigger, &s).unwrap();
        for _ in 0..50 {
            let y = ModuleElement::new(vec![
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]);
            let vs = evaluate(&small, &y, &s).unwrap();
            let vb = evaluate(&bigger, &y, &s).unwrap();
            if vb.le_within(&vs, 0.0) {
                // bigger <= small pointwise here, so small* <= bigger*.
                let cvs = evaluate(&cs, &y, &s).unwrap();
                let cvb = evaluate(&cb, &y, &s).unwrap();
                assert!(cvs.le_within(&cvb, 1e-9));
            }
        }
    }

    #[test]
    fn affine_minorant_quadratic_case() {
        let s = diag2();
        let f = StratifiedConvexFunction::uniform(&s, half_square_piece(1));
        let x0 = ModuleElement::zero(2);
        let beta = RandomScalar::from_f64s(&[-1.0, -1.0]);
        let (g, z) = affine_minorant(&f, &x0, &beta, &s).unwrap();
        let h_at_x0 = apply_functional(&g, &x0, &s).unwrap().add(&z).unwrap();
        assert!(h_at_x0.max_abs_gap(&beta).raw() <= 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = ModuleElement::new(vec![
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ]);
            let h = apply_functional(&g, &x, &s).unwrap().add(&z).unwrap();
            let fx = evaluate(&f, &x, &s).unwrap();
            assert!(h.le_within(&fx, 1e-9));
        }
    }

    #[test]
    fn affine_minorant_point_indicator() {
        let s = diag2();
        let f = StratifiedConvexFunction::uniform(
            &s,
            AtomFunction::indicator(HPolytope::cuboid(&[0.0], &[0.0])),
        );
        let x0 = ModuleElement::zero(2);
        let beta = RandomScalar::from_f64s(&[-1.0, -1.0]);
        let (g, z) = affine_minorant(&f, &x0, &beta, &s).unwrap();
        let h_at_x0 = apply_functional(&g, &x0, &s).unwrap().add(&z).unwrap();
        assert!(h_at_x0.max_abs_gap(&beta).raw() <= 1e-12);
        // h <= f everywhere: off {0} the bound is vacuous (+inf).
        let h0 = evaluate(&f, &x0, &s).unwrap();
        assert!(h_at_x0.le_within(&h0, 1e-12));
    }

    #[test]
    fn affine_minorant_outside_domain_branches() {
        let s = diag2();
        // f = indicator of [-1, 1] on both atoms; x0 outside the domain.
        let f = StratifiedConvexFunction::uniform(&s, interval_indicator());
        let x0 = ModuleElement::new(vec![2.0, 3.0]);
        // Case 1 flavor: beta far below forces a tilted separator.
        for beta_vals in [[-1.0, -2.0], [5.0, 7.0], [0.5, -0.5]] {
            let beta = RandomScalar::from_f64s(&beta_vals);
            let (g, z) = affine_minorant(&f, &x0, &beta, &s).unwrap();
            let h_at_x0 = apply_functional(&g, &x0, &s).unwrap().add(&z).unwrap();
            assert!(
                h_at_x0.max_abs_gap(&beta).raw() <= 1e-9,
                "h(x0) = {h_at_x0:?} should be {beta:?}"
            );
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            for _ in 0..500 {
                let x = ModuleElement::new(vec![
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]);
                let h = apply_functional(&g, &x, &s).unwrap().add(&z).unwrap();
                let fx = evaluate(&f, &x, &s).unwrap();
                assert!(h.le_within(&fx, 1e-9), "minorant fails at {:?}", x.coords);
            }
        }
        // Precondition: beta must sit strictly below f(x0).
        let f2 = StratifiedConvexFunction::uniform(&s, half_square_piece(1));
        let bad = RandomScalar::from_f64s(&[0.0, -1.0]);
        assert!(matches!(
            affine_minorant(&f2, &ModuleElement::zero(2), &bad, &s),
            Err(FenchelError::MinorantGap(0, _))
        ));
    }

    #[test]
    fn classify_and_closure() {
        let s = StratifiedSpace::diagonal(&[0.25, 0.25, 0.5]).unwrap();
        let f = StratifiedConvexFunction::new(vec![
            AtomFunction::MinusInf,
            AtomFunction::PlusInf,
            half_square_piece(1),
        ]);
        let classes = classify_events(&f, &s).unwrap();
        assert_eq!(classes.mi.indices(), vec![0]);
        assert_eq!(classes.pi.indices(), vec![1]);
        assert_eq!(classes.bp.indices(), vec![2]);
        // Witnesses re-evaluate to their classified values.
        for (atom, w) in &classes.mi_witnesses {
            assert!(evaluate(&f, w, &s).unwrap().get(*atom).is_neg_inf());
        }
        for (atom, w) in &classes.bp_witnesses {
            assert!(evaluate(&f, w, &s).unwrap().get(*atom).is_finite());
        }
        // Proper functions classify as all-BP.
        let g = StratifiedConvexFunction::uniform(&s, abs_piece());
        let gc = classify_events(&g, &s).unwrap();
        assert!(gc.mi.is_empty());
        assert!(gc.pi.is_empty());
        assert!(gc.bp.is_full());
        // Closure: minus-infinity atoms become identically minus infinity.
        let grid_with_neg_inf = AtomFunction::Grid(GridFn {
            axes: vec![vec![-1.0, 0.0, 1.0]],
            values: vec![Xr::new(0.0), Xr::NEG_INF, Xr::new(0.0)],
        });
        let h = StratifiedConvexFunction::new(vec![
            grid_with_neg_inf,
            AtomFunction::PlusInf,
            abs_piece(),
        ]);
        let hc = closure(&h, &s).unwrap();
        assert!(matches!(hc.atoms[0], AtomFunction::MinusInf));
        assert!(matches!(hc.atoms[1], AtomFunction::PlusInf));
        // Proper lsc pieces are untouched.
        let x = ModuleElement::new(vec![0.0, 0.0, 0.7]);
        assert_eq!(
            evaluate(&hc, &x, &s).unwrap().get(2),
            evaluate(&h, &x, &s).unwrap().get(2)
        );
        // Closure agrees with the biconjugate (including the constants).
        let hb = biconjugate(&h, &s).unwrap();
        let cl_classes = classify_events(&hc, &s).unwrap();
        let bc_classes = classify_events(&hb, &s).unwrap();
        assert_eq!(cl_classes.mi, bc_classes.mi);
        assert_eq!(cl_classes.pi, bc_classes.pi);
        for t in [-0.8, 0.0, 0.9] {
            let x = ModuleElement::new(vec![0.0, 0.0, t]);
            let a = evaluate(&hc, &x, &s).unwrap().get(2);
            let b = evaluate(&hb, &x, &s).unwrap().get(2);
            assert!((a - b).abs().raw() <= 1e-8);
        }
    }

    #[test]
    fn properness_and_locality() {
        let s = diag2();
        let f = StratifiedConvexFunction::uniform(&s, interval_indicator());
        let (proper, witness) = is_proper(&f, &s).unwrap();
        assert!(proper);
        assert!(witness.is_some());
        let g = StratifiedConvexFunction::new(vec![AtomFunction::MinusInf, abs_piece()]);
        assert!(!is_proper(&g, &s).unwrap().0);
        let h = StratifiedConvexFunction::new(vec![AtomFunction::PlusInf, abs_piece()]);
        assert!(!is_proper(&h, &s).unwrap().0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<ModuleElement> = (0..20)
            .map(|_| {
                ModuleElement::new(vec![
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                ])
            })
            .collect();
        let report = locality_check(&f, &samples, &s).unwrap();
        assert!(report.passed(), "{:?}", report.violations);

        let triples: Vec<(ModuleElement, ModuleElement, RandomScalar)> = (0..50)
            .map(|_| {
                (
                    ModuleElement::new(vec![
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-2.0..2.0),
                    ]),
                    ModuleElement::new(vec![
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-2.0..2.0),
                    ]),
                    RandomScalar::from_f64s(&[
                        rng.random_range(0.0..1.0),
                        rng.random_range(0.0..1.0),
                    ]),
                )
            })
            .collect();
        let creport = convexity_check(&f, &triples, &s).unwrap();
        assert!(creport.passed(), "{:?}", creport.violations);
    }

    #[test]
    fn sup_closed_merges_and_reports() {
        let s = diag2();
        let f = StratifiedConvexFunction::uniform(&s, abs_piece());
        let g = StratifiedConvexFunction::uniform(
            &s,
            AtomFunction::MaxAffine {
                pieces: vec![AffinePiece::new(vec![0.5], 0.3)],
                domain: None,
            },
        );
        let (sup, report) = sup_closed(&[f.clone(), g.clone()], &s).unwrap();
        assert!(report.passed());
        let AtomFunction::MaxAffine { pieces, .. } = &sup.atoms[0] else {
            panic!("expected a merged polyhedral piece")
        };
        assert_eq!(pieces.len(), 3);
        // Supremum with a minus-infinity atom keeps the other member.
        let h = StratifiedConvexFunction::new(vec![AtomFunction::MinusInf, abs_piece()]);
        let (sup2, report2) = sup_closed(&[f.clone(), h], &s).unwrap();
        assert!(report2.mi_identity && report2.pi_identity);
        let x = ModuleElement::new(vec![0.4, -0.4]);
        assert_eq!(
            evaluate(&sup2, &x, &s).unwrap(),
            evaluate(&f, &x, &s).unwrap()
        );
        // Non-closed input is rejected: a grid with a bump is not closed.
        let bump = StratifiedConvexFunction::uniform(
            &s,
            AtomFunction::Grid(GridFn {
                axes: vec![vec![-1.0, 0.0, 1.0]],
                values: vec![Xr::new(0.0), Xr::new(1.0), Xr::new(0.0)],
            }),
        );
        assert!(matches!(
            sup_closed(&[bump], &s),
            Err(FenchelError::NotClosed(0, _))
        ));
    }

    #[test]
    fn sup_closed_random_family_stays_closed() {
        let s = diag2();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let fs: Vec<StratifiedConvexFunction> = (0..5)
            .map(|_| {
                let pieces: Vec<AffinePiece> = (0..rng.random_range(1..4))
                    .map(|_| {
                        AffinePiece::new(
                            vec![rng.random_range(-2.0..2.0)],
                            rng.random_range(-1.0..1.0),
                        )
                    })
                    .collect();
                StratifiedConvexFunction::uniform(
                    &s,
                    AtomFunction::MaxAffine { pieces, domain: None },
                )
            })
            .collect();
        let (_, report) = sup_closed(&fs, &s).unwrap();
        assert!(report.passed());
    }

    #[test]
    fn dlt_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for n in [2usize, 3, 9, 33, 128] {
            let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            let vals: Vec<Xr> = xs.iter().map(|_| Xr::new(rng.random_range(-3.0..3.0))).collect();
            let ys: Vec<f64> = (0..40).map(|_| rng.random_range(-6.0..6.0)).collect();
            let fast = dlt::legendre_grid(&xs, &vals, &ys);
            let brute = dlt::legendre_brute(&xs, &vals, &ys);
            assert_eq!(fast, brute);
        }
        // Infinity conventions.
        let xs = [0.0, 1.0];
        let with_neg = [Xr::NEG_INF, Xr::new(0.0)];
        assert!(dlt::legendre_grid(&xs, &with_neg, &[0.0, 2.0])
            .iter()
            .all(|v| v.is_pos_inf()));
        let all_pos = [Xr::POS_INF, Xr::POS_INF];
        assert!(dlt::legendre_grid(&xs, &all_pos, &[0.0])
            .iter()
            .all(|v| v.is_neg_inf()));
    }

    #[test]
    fn sublevel_relation_on_closed_and_open_pieces() {
        let s = diag2();
        let f = StratifiedConvexFunction::uniform(&s, abs_piece());
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples: Vec<(ModuleElement, ModuleElement)> = (0..20)
            .map(|_| {
                (
                    ModuleElement::new(vec![
                        rng.random_range(-0.2..0.2),
                        rng.random_range(-0.2..0.2),
                    ]),
                    ModuleElement::new(vec![
                        rng.random_range(2.0..4.0),
                        rng.random_range(2.0..4.0),
                    ]),
                )
            })
            .collect();
        let report = sublevel_relation_report(&f, &s, &samples, &[0.5, 1.0, 2.0]).unwrap();
        assert!(report.epigraph_closed);
        assert!(report.implication_holds(), "{:?}", report.sublevel_violations);
        assert!(report.checked > 0);
        // A non-closed grid is reported as such; the implication is then
        // vacuous regardless of the sampled sublevel behaviour.
        let bump = StratifiedConvexFunction::uniform(
            &s,
            AtomFunction::Grid(GridFn {
                axes: vec![vec![-1.0, 0.0, 1.0]],
                values: vec![Xr::new(0.0), Xr::new(1.0), Xr::new(0.0)],
            }),
        );
        let report2 = sublevel_relation_report(&bump, &s, &samples, &[0.5]).unwrap();
        assert!(!report2.epigraph_closed);
        assert!(report2.implication_holds());
    }

    #[test]
    fn serde_function_round_trip() {
        let f = StratifiedConvexFunction::new(vec![
            abs_piece(),
            AtomFunction::Grid(GridFn {
                axes: vec![vec![0.0, 1.0]],
                values: vec![Xr::new(1.0), Xr::POS_INF],
            }),
            AtomFunction::Entropic { gamma: 2.0 },
            AtomFunction::PlusInf,
        ]);
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains("max_affine"));
        assert!(text.contains("entropic"));
        let back: StratifiedConvexFunction = serde_json::from_str(&text).unwrap();
        assert_eq!(f, back);
    }
}
