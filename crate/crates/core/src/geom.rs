//! Desk-scale polyhedral geometry: H- and V-form bodies, vertex and ray
//! enumeration, projections, support functions and lower convex envelopes.
//! Dimensions stay tiny (a handful of coordinates per atom), so brute-force
//! subset enumeration with small dense solves is the method of choice
//! throughout.

use crate::lp::{LinearProgram, LpOutcome, Rel};
use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const GEOM_TOL: f64 = 1e-9;

/// Intersection of half-spaces `a_i · x <= b_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HPolytope {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl HPolytope {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Self {
        assert_eq!(a.len(), b.len());
        HPolytope { a, b }
    }

    pub fn universe(dim: usize) -> Self {
        HPolytope { a: vec![vec![0.0; dim]; 0], b: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.a.first().map(|r| r.len()).unwrap_or(0)
    }

    pub fn n_rows(&self) -> usize {
        self.a.len()
    }

    pub fn cuboid(lo: &[f64], hi: &[f64]) -> Self {
        let d = lo.len();
        let mut a = Vec::with_capacity(2 * d);
        let mut b = Vec::with_capacity(2 * d);
        for j in 0..d {
            let mut row = vec![0.0; d];
            row[j] = 1.0;
            a.push(row.clone());
            b.push(hi[j]);
            row[j] = -1.0;
            a.push(row);
            b.push(-lo[j]);
        }
        HPolytope { a, b }
    }

    /// Adds the rows of `other` (same dimension).
    pub fn intersect(&self, other: &HPolytope) -> HPolytope {
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        a.extend(other.a.iter().cloned());
        b.extend(other.b.iter().cloned());
        HPolytope { a, b }
    }

    /// Appends the equality `a·x = b` as a pair of inequalities.
    pub fn push_equality(&mut self, a: Vec<f64>, b: f64) {
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        self.a.push(a);
        self.b.push(b);
        self.a.push(neg);
        self.b.push(-b);
    }

    pub fn push_row(&mut self, a: Vec<f64>, b: f64) {
        self.a.push(a);
        self.b.push(b);
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.a
            .iter()
            .zip(&self.b)
            .all(|(row, &bi)| dot(row, x) <= bi + tol)
    }

    /// Worst constraint violation at `x` (nonpositive when feasible).
    pub fn violation(&self, x: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, &bi)| dot(row, x) - bi)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Any feasible point, via phase-1 of the simplex.
    pub fn feasible_point(&self) -> Option<Vec<f64>> {
        let d = self.dim();
        if self.a.is_empty() {
            return Some(vec![0.0; d]);
        }
        let mut lp = LinearProgram::new(d);
        for (row, &bi) in self.a.iter().zip(&self.b) {
            lp.add_row(row, Rel::Le, bi).ok()?;
        }
        match lp.solve().ok()? {
            LpOutcome::Optimal { x, .. } => Some(x),
            LpOutcome::Unbounded => None,
            LpOutcome::Infeasible => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.feasible_point().is_none()
    }

    /// A point maximizing the margin `min_i (b_i - a_i·x) / |a_i|`, i.e. a
    /// Chebyshev center. Returns the point and the margin; the margin is
    /// positive iff the interior is nonempty.
    pub fn interior_point(&self) -> Option<(Vec<f64>, f64)> {
        let d = self.dim();
        if self.a.is_empty() {
            return Some((vec![0.0; d], f64::INFINITY));
        }
        // Variables (x, t): maximize t s.t. a_i·x + |a_i| t <= b_i.
        let mut lp = LinearProgram::new(d + 1);
        let mut obj = vec![0.0; d + 1];
        obj[d] = -1.0;
        lp.minimize(&obj).ok()?;
        for (row, &bi) in self.a.iter().zip(&self.b) {
            let norm = dot(row, row).sqrt();
            let mut r = row.clone();
            r.push(norm);
            lp.add_row(&r, Rel::Le, bi).ok()?;
        }
        // Keep the search bounded for unbounded bodies.
        let mut cap = vec![0.0; d + 1];
        cap[d] = 1.0;
        lp.add_row(&cap, Rel::Le, 1e6).ok()?;
        match lp.solve().ok()? {
            LpOutcome::Optimal { x, value } => Some((x[..d].to_vec(), -value)),
            _ => None,
        }
    }

    /// `sup { c·x : x in self }`; `None` when empty, `+inf` when unbounded.
    pub fn support(&self, c: &[f64]) -> Option<f64> {
        let d = self.dim().max(c.len());
        let mut c_full = c.to_vec();
        c_full.resize(d, 0.0);
        let mut lp = LinearProgram::new(d);
        let neg: Vec<f64> = c_full.iter().map(|v| -v).collect();
        lp.minimize(&neg).ok()?;
        for (row, &bi) in self.a.iter().zip(&self.b) {
            lp.add_row(row, Rel::Le, bi).ok()?;
        }
        match lp.solve().ok()? {
            LpOutcome::Optimal { value, .. } => Some(-value),
            LpOutcome::Unbounded => Some(f64::INFINITY),
            LpOutcome::Infeasible => None,
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Generator description of a polyhedron: `conv(vertices) + cone(rays) +
/// span(lineality)`.
#[derive(Debug, Clone, Default)]
pub struct GeneratorForm {
    pub lineality: Vec<Vec<f64>>,
    pub vertices: Vec<Vec<f64>>,
    pub rays: Vec<Vec<f64>>,
}

impl GeneratorForm {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Orthonormal basis of the nullspace of the stacked rows. The matrix is
/// padded with zero rows so the thin SVD carries all `dim` right singular
/// vectors.
fn nullspace(rows: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let m = rows.len().max(dim);
    let mat = DMatrix::from_fn(m, dim, |i, j| if i < rows.len() { rows[i][j] } else { 0.0 });
    let svd = mat.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-9 * smax.max(1.0);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    (rank..dim).map(|i| vt.row(i).iter().cloned().collect()).collect()
}

/// Orthonormal basis of the orthogonal complement of `vectors`.
fn orthogonal_complement(vectors: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    nullspace(vectors, dim)
}

/// Minkowski-Weyl decomposition of an H-polyhedron: lineality space,
/// vertices and extreme rays (vertices/rays are representatives orthogonal
/// to the lineality space). Empty `vertices` means the polyhedron is empty.
pub fn minkowski_weyl(h: &HPolytope) -> GeneratorForm {
    let d = h.dim();
    if h.a.is_empty() {
        return GeneratorForm {
            lineality: orthogonal_complement(&[], d),
            vertices: vec![vec![0.0; d]],
            rays: Vec::new(),
        };
    }
    let lineality = nullspace(&h.a, d);
    let basis = orthogonal_complement(&lineality, d);
    let k = basis.len();
    if k == 0 {
        // All constraint normals vanish: feasible iff every b >= 0.
        if h.b.iter().all(|&bi| bi >= -GEOM_TOL) {
            return GeneratorForm { lineality, vertices: vec![vec![0.0; d]], rays: Vec::new() };
        }
        return GeneratorForm { lineality, vertices: Vec::new(), rays: Vec::new() };
    }
    // Constraints in quotient coordinates y (x = B^T y + lineality part).
    let a_q: Vec<Vec<f64>> = h
        .a
        .iter()
        .map(|row| basis.iter().map(|bv| dot(row, bv)).collect())
        .collect();
    let hq = HPolytope::new(a_q.clone(), h.b.clone());

    let verts_q = enumerate_vertices_pointed(&hq);
    let rays_q = extreme_rays_pointed(&a_q, k);

    let lift = |y: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; d];
        for (c, bv) in y.iter().zip(&basis) {
            for j in 0..d {
                x[j] += c * bv[j];
            }
        }
        x
    };
    GeneratorForm {
        lineality,
        vertices: verts_q.iter().map(|v| lift(v)).collect(),
        rays: rays_q.iter().map(|r| lift(r)).collect(),
    }
}

/// Vertices of a pointed H-polyhedron by enumerating row subsets.
fn enumerate_vertices_pointed(h: &HPolytope) -> Vec<Vec<f64>> {
    let d = h.dim();
    let m = h.n_rows();
    let mut verts: Vec<Vec<f64>> = Vec::new();
    if d == 0 || m < d {
        return verts;
    }
    let row_scale = h
        .a
        .iter()
        .flatten()
        .chain(h.b.iter())
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    for subset in (0..m).combinations(d) {
        let a = DMatrix::from_fn(d, d, |i, j| h.a[subset[i]][j]);
        let b = DVector::from_fn(d, |i, _| h.b[subset[i]]);
        let Some(x) = a.clone().lu().solve(&b) else { continue };
        let residual = (&a * &x - &b).amax();
        if !residual.is_finite() || residual > 1e-7 * row_scale {
            continue;
        }
        let xv: Vec<f64> = x.iter().cloned().collect();
        if xv.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let scale = 1.0 + xv.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if h.contains(&xv, 1e-7 * scale * row_scale)
            && !verts.iter().any(|v| close(v, &xv, 1e-6 * scale))
        {
            verts.push(xv);
        }
    }
    verts
}

/// Extreme rays of the pointed cone `{y : A y <= 0}`, normalized.
fn extreme_rays_pointed(a: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let m = a.len();
    let mut rays: Vec<Vec<f64>> = Vec::new();
    if k == 1 {
        for dir in [vec![1.0], vec![-1.0]] {
            if a.iter().all(|row| dot(row, &dir) <= GEOM_TOL) {
                rays.push(dir);
            }
        }
        return rays;
    }
    if m < k - 1 {
        return rays;
    }
    for subset in (0..m).combinations(k - 1) {
        let rows: Vec<Vec<f64>> = subset.iter().map(|&i| a[i].clone()).collect();
        let ns = nullspace(&rows, k);
        if ns.len() != 1 {
            continue;
        }
        for sign in [1.0, -1.0] {
            let r: Vec<f64> = ns[0].iter().map(|v| sign * v).collect();
            if a.iter().all(|row| dot(row, &r) <= 1e-8)
                && !rays.iter().any(|e| close(e, &r, 1e-6))
            {
                rays.push(r);
            }
        }
    }
    rays
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Affine hull of a point set: a base point plus an orthonormal basis of
/// the direction space.
pub fn affine_hull(points: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = points[0].len();
    let base = points[0].clone();
    let dirs: Vec<Vec<f64>> = points[1..]
        .iter()
        .map(|p| p.iter().zip(&base).map(|(a, b)| a - b).collect())
        .collect();
    if dirs.is_empty() {
        return (base, Vec::new());
    }
    let m = DMatrix::from_fn(dirs.len(), d, |i, j| dirs[i][j]);
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-9 * smax.max(1.0);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let basis = (0..rank).map(|i| vt.row(i).iter().cloned().collect()).collect();
    (base, basis)
}

/// Facet enumeration (V- to H-form) of `conv(points)`. Lower-dimensional
/// hulls are handled by adding the affine-hull equalities as paired
/// inequalities.
pub fn facet_enumeration(points: &[Vec<f64>]) -> HPolytope {
    assert!(!points.is_empty(), "facet enumeration needs at least one point");
    let d = points[0].len();
    let (base, basis) = affine_hull(points);
    let k = basis.len();
    let mut h = HPolytope::universe(d);
    // Affine-hull equalities: u·x = u·base for u orthogonal to the hull.
    for u in orthogonal_complement(&basis, d) {
        let rhs = dot(&u, &base);
        h.push_equality(u, rhs);
    }
    if k == 0 {
        return h;
    }
    // Points in hull coordinates.
    let pq: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let rel: Vec<f64> = p.iter().zip(&base).map(|(a, b)| a - b).collect();
            basis.iter().map(|bv| dot(bv, &rel)).collect()
        })
        .collect();
    let scale = pq
        .iter()
        .flat_map(|p| p.iter().map(|v| v.abs()))
        .fold(1.0f64, f64::max);
    let mut facets: Vec<(Vec<f64>, f64)> = Vec::new();
    if k == 1 {
        let lo = pq.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = pq.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        facets.push((vec![1.0], hi));
        facets.push((vec![-1.0], -lo));
    } else {
        for subset in (0..pq.len()).combinations(k) {
            // Hyperplane through the k chosen points: normal orthogonal to
            // their differences.
            let rows: Vec<Vec<f64>> = subset[1..]
                .iter()
                .map(|&i| pq[i].iter().zip(&pq[subset[0]]).map(|(a, b)| a - b).collect())
                .collect();
            let ns = nullspace(&rows, k);
            if ns.len() != 1 {
                continue;
            }
            let mut normal = ns[0].clone();
            let mut rhs = dot(&normal, &pq[subset[0]]);
            // Orient outward: all points on the <= side.
            let max_side = pq.iter().map(|p| dot(&normal, p)).fold(f64::NEG_INFINITY, f64::max);
            let min_side = pq.iter().map(|p| dot(&normal, p)).fold(f64::INFINITY, f64::min);
            let tol = 1e-7 * scale.max(1.0);
            if max_side <= rhs + tol {
                // Already outward.
            } else if min_side >= rhs - tol {
                normal = normal.iter().map(|v| -v).collect();
                rhs = -rhs;
            } else {
                continue;
            }
            if !facets
                .iter()
                .any(|(n, r)| close(n, &normal, 1e-6) && (r - rhs).abs() <= tol)
            {
                facets.push((normal, rhs));
            }
        }
    }
    for (normal, rhs) in facets {
        // Lift to ambient coordinates: normal stays in the hull's direction
        // space, the offset gains the base-point contribution.
        let mut amb = vec![0.0; d];
        for (c, bv) in normal.iter().zip(&basis) {
            for j in 0..d {
                amb[j] += c * bv[j];
            }
        }
        let lifted_rhs = rhs + dot(&amb, &base);
        h.push_row(amb, lifted_rhs);
    }
    h
}

/// Euclidean projection onto an H-polyhedron by enumerating candidate
/// active sets and checking the KKT conditions. Exact at desk scale;
/// returns `None` for an empty polyhedron.
pub fn project_onto_hpoly(h: &HPolytope, x: &[f64]) -> Option<Vec<f64>> {
    let d = h.dim().max(x.len());
    let scale = 1.0 + norm2(x);
    if h.contains(x, GEOM_TOL * scale) {
        return Some(x.to_vec());
    }
    let m = h.n_rows();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let xv = DVector::from_column_slice(x);
    for size in 1..=d.min(m) {
        for subset in (0..m).combinations(size) {
            let a = DMatrix::from_fn(size, d, |i, j| h.a[subset[i]][j]);
            let b = DVector::from_fn(size, |i, _| h.b[subset[i]]);
            let gram = &a * a.transpose();
            let rhs = &a * &xv - &b;
            // Skip rank-deficient subsets: smaller ones cover them.
            let svd = gram.clone().svd(true, true);
            let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            if svd
                .singular_values
                .iter()
                .any(|&s| s <= 1e-10 * smax.max(1.0))
            {
                continue;
            }
            let Ok(lambda) = svd.solve(&rhs, 1e-13) else { continue };
            if lambda.iter().any(|&l| l < -1e-9 * scale) {
                continue;
            }
            let y = &xv - a.transpose() * &lambda;
            let yv: Vec<f64> = y.iter().cloned().collect();
            if !h.contains(&yv, 1e-7 * scale) {
                continue;
            }
            let dist = (&y - &xv).norm();
            if best.as_ref().map_or(true, |(bd, _)| dist < *bd) {
                best = Some((dist, yv));
            }
        }
    }
    best.map(|(_, y)| y).or_else(|| h.feasible_point())
}

/// Minimum-norm point of `conv(points)` (Wolfe's algorithm). Returns the
/// point and its convex coefficients over `points`.
pub fn min_norm_point(points: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    assert!(!points.is_empty());
    let n = points.len();
    let d = points[0].len();
    let norm_sq = |v: &[f64]| dot(v, v);
    let start = (0..n)
        .min_by(|&i, &j| norm_sq(&points[i]).partial_cmp(&norm_sq(&points[j])).unwrap())
        .unwrap();
    let mut support: Vec<usize> = vec![start];
    let mut lambda: Vec<f64> = vec![1.0];
    let scale = 1.0 + points.iter().map(|p| norm2(p)).fold(0.0, f64::max);
    let tol = 1e-12 * scale * scale;

    let current = |support: &[usize], lambda: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; d];
        for (&i, &l) in support.iter().zip(lambda) {
            for j in 0..d {
                x[j] += l * points[i][j];
            }
        }
        x
    };

    for _ in 0..200 * (n + 1) {
        let x = current(&support, &lambda);
        let xx = norm_sq(&x);
        let (jbest, jval) = (0..n)
            .map(|i| (i, dot(&x, &points[i])))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if jval >= xx - tol {
            let mut full = vec![0.0; n];
            for (&i, &l) in support.iter().zip(&lambda) {
                full[i] += l;
            }
            return (x, full);
        }
        if !support.contains(&jbest) {
            support.push(jbest);
            lambda.push(0.0);
        }
        // Minor cycle: affine minimization over the support, stepping back
        // into the simplex when coefficients go negative.
        for _ in 0..200 {
            let k = support.len();
            // Solve [G 1; 1^T 0] [alpha; mu] = [0; 1].
            let mut mat = DMatrix::zeros(k + 1, k + 1);
            for r in 0..k {
                for c in 0..k {
                    mat[(r, c)] = dot(&points[support[r]], &points[support[c]]);
                }
                mat[(r, k)] = 1.0;
                mat[(k, r)] = 1.0;
            }
            let mut rhs = DVector::zeros(k + 1);
            rhs[k] = 1.0;
            let alpha: Vec<f64> = match mat.svd(true, true).solve(&rhs, 1e-13) {
                Ok(sol) => sol.iter().take(k).cloned().collect(),
                Err(_) => break,
            };
            if alpha.iter().all(|&a| a > 1e-11) {
                lambda = alpha;
                break;
            }
            let mut theta = 1.0f64;
            for i in 0..k {
                if alpha[i] <= 1e-11 {
                    let denom = lambda[i] - alpha[i];
                    if denom > 1e-15 {
                        theta = theta.min(lambda[i] / denom);
                    }
                }
            }
            let mut next_support = Vec::new();
            let mut next_lambda = Vec::new();
            for i in 0..k {
                let v = (1.0 - theta) * lambda[i] + theta * alpha[i];
                if v > 1e-11 {
                    next_support.push(support[i]);
                    next_lambda.push(v);
                }
            }
            if next_support.is_empty() {
                let keep = support
                    .iter()
                    .cloned()
                    .min_by(|&a, &b| {
                        norm_sq(&points[a]).partial_cmp(&norm_sq(&points[b])).unwrap()
                    })
                    .unwrap();
                next_support.push(keep);
                next_lambda.push(1.0);
            }
            let total: f64 = next_lambda.iter().sum();
            for v in &mut next_lambda {
                *v /= total;
            }
            support = next_support;
            lambda = next_lambda;
        }
    }
    let x = current(&support, &lambda);
    let mut full = vec![0.0; n];
    for (&i, &l) in support.iter().zip(&lambda) {
        full[i] += l;
    }
    (x, full)
}

/// Euclidean projection of `x` onto `conv(points)`.
pub fn project_onto_vpoly(points: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let shifted: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(x).map(|(a, b)| a - b).collect())
        .collect();
    let (z, _) = min_norm_point(&shifted);
    z.iter().zip(x).map(|(a, b)| a + b).collect()
}

/// Membership of `x` in `conv(points)` within an l1 residual tolerance.
pub fn vpoly_contains(points: &[Vec<f64>], x: &[f64], tol: f64) -> bool {
    vpoly_residual(points, x).is_some_and(|r| r <= tol)
}

/// Minimal l1 deviation between `x` and a convex combination of `points`.
pub fn vpoly_residual(points: &[Vec<f64>], x: &[f64]) -> Option<f64> {
    let n = points.len();
    let d = x.len();
    // Variables: lambda (n), r+ (d), r- (d); minimize sum of residuals.
    let nv = n + 2 * d;
    let mut lp = LinearProgram::new(nv);
    let mut obj = vec![0.0; nv];
    for o in obj.iter_mut().skip(n) {
        *o = 1.0;
    }
    lp.minimize(&obj).ok()?;
    for j in 0..d {
        // sum_i lambda_i p_i[j] - (r+_j - r-_j) = x[j]
        let mut row = vec![0.0; nv];
        for i in 0..n {
            row[i] = points[i][j];
        }
        row[n + j] = -1.0;
        row[n + d + j] = 1.0;
        lp.add_row(&row, Rel::Eq, x[j]).ok()?;
    }
    let mut simplex = vec![0.0; nv];
    for s in simplex.iter_mut().take(n) {
        *s = 1.0;
    }
    lp.add_row(&simplex, Rel::Eq, 1.0).ok()?;
    for i in 0..nv {
        let mut row = vec![0.0; nv];
        row[i] = -1.0;
        lp.add_row(&row, Rel::Le, 0.0).ok()?;
    }
    match lp.solve().ok()? {
        LpOutcome::Optimal { value, .. } => Some(value.max(0.0)),
        _ => None,
    }
}

/// Supporting affine pieces of the lower convex envelope of the graph
/// points `(x_i, v_i)`: each `(slope, intercept)` satisfies
/// `slope·x_i + intercept <= v_i` for all i, with equality on an affinely
/// spanning subset. Their max is the convex envelope on the hull of the
/// supports.
pub fn lower_envelope_pieces(points: &[(Vec<f64>, f64)]) -> Vec<(Vec<f64>, f64)> {
    assert!(!points.is_empty());
    let d = points[0].0.len();
    let xs: Vec<Vec<f64>> = points.iter().map(|(x, _)| x.clone()).collect();
    let (base, basis) = affine_hull(&xs);
    let k = basis.len();
    let vscale = points.iter().map(|(_, v)| v.abs()).fold(1.0f64, f64::max);
    if k == 0 {
        let m = points.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
        return vec![(vec![0.0; d], m)];
    }
    let xq: Vec<Vec<f64>> = xs
        .iter()
        .map(|p| {
            let rel: Vec<f64> = p.iter().zip(&base).map(|(a, b)| a - b).collect();
            basis.iter().map(|bv| dot(bv, &rel)).collect()
        })
        .collect();
    let xscale = xq
        .iter()
        .flat_map(|p| p.iter().map(|v| v.abs()))
        .fold(1.0f64, f64::max);
    let tol = 1e-9 * (vscale + xscale);
    let mut pieces: Vec<(Vec<f64>, f64)> = Vec::new();
    for subset in (0..points.len()).combinations(k + 1) {
        // Affine fit g·y + c = v on the subset.
        let mut mat = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DVector::zeros(k + 1);
        for (r, &i) in subset.iter().enumerate() {
            for c in 0..k {
                mat[(r, c)] = xq[i][c];
            }
            mat[(r, k)] = 1.0;
            rhs[r] = points[i].1;
        }
        let Some(sol) = mat.clone().lu().solve(&rhs) else { continue };
        let residual = (&mat * &sol - &rhs).amax();
        if !residual.is_finite() || residual > 1e-6 * (vscale + xscale) {
            continue;
        }
        let g: Vec<f64> = sol.iter().take(k).cloned().collect();
        let c = sol[k];
        if g.iter().any(|v| !v.is_finite()) || !c.is_finite() {
            continue;
        }
        if xq
            .iter()
            .zip(points)
            .all(|(y, (_, v))| dot(&g, y) + c <= v + tol)
        {
            // Lift the slope back to ambient coordinates.
            let mut amb = vec![0.0; d];
            for (gc, bv) in g.iter().zip(&basis) {
                for j in 0..d {
                    amb[j] += gc * bv[j];
                }
            }
            let intercept = c - dot(&amb, &base);
            if !pieces.iter().any(|(s, i)| {
                close(s, &amb, 1e-7 * xscale.max(1.0))
                    && (i - intercept).abs() <= 1e-7 * (vscale + xscale)
            }) {
                pieces.push((amb, intercept));
            }
        }
    }
    if pieces.is_empty() {
        // Degenerate data: support with the flat minimum, still a minorant.
        let m = points.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
        pieces.push((vec![0.0; d], m));
    }
    pieces
}
