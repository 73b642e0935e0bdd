//! Singular values, singular subspaces, Grassmannian geometry and exterior powers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default gap threshold: ratios above `1 - TOL_GAP` count as "no gap".
pub const TOL_GAP: f64 = 1e-8;
/// Condition number guard for user-supplied matrices.
pub const KAPPA_MAX: f64 = 1e12;
const NONINVERTIBLE: f64 = 1e-12;
const NOT_GRAPH: f64 = 1e-10;

/// An invertible real square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix(Mat);

impl SquareMatrix {
    /// Checked constructor: square, finite, 1 ≤ d ≤ 12 and κ < 1e12.
    pub fn new(m: Mat) -> Result<Self> {
        let s = Self::from_computed(m)?;
        let sv = singular_values(&s.0);
        let kappa = sv[0] / sv[sv.len() - 1];
        if !(kappa < KAPPA_MAX) {
            return Err(Error::IllConditioned { kappa });
        }
        Ok(s)
    }

    /// Constructor for matrices produced internally (products, inverses).
    /// Only shape and finiteness are checked.
    pub fn from_computed(m: Mat) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 || m.nrows() > 12 {
            return Err(Error::DimensionMismatch(format!(
                "expected square matrix with 1 <= d <= 12, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("ragged matrix rows".into()));
        }
        Self::new(Mat::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn identity(d: usize) -> Self {
        Self(Mat::identity(d, d))
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        Self::new(Mat::from_diagonal(&Vector::from_column_slice(values)))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.d())
            .map(|i| (0..self.d()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn d(&self) -> usize {
        self.0.nrows()
    }

    pub fn mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .0
            .clone()
            .try_inverse()
            .ok_or(Error::NonInvertible { ratio: 0.0 })?;
        Self::from_computed(inv)
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn mul(&self, other: &SquareMatrix) -> Self {
        Self(&self.0 * &other.0)
    }

    pub fn norm(&self) -> f64 {
        singular_values(&self.0)[0]
    }

    /// 𝐦(A) = ‖A⁻¹‖⁻¹, the smallest singular value.
    pub fn conorm(&self) -> f64 {
        *singular_values(&self.0).last().unwrap()
    }

    pub fn det(&self) -> f64 {
        self.0.determinant()
    }

    /// Rescale to |det| = 1.
    pub fn unimodular(&self) -> Self {
        let d = self.d() as f64;
        let s = self.det().abs().powf(-1.0 / d);
        Self(&self.0 * s)
    }
}

impl Serialize for SquareMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SquareMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        SquareMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub fn rotation2(theta: f64) -> Mat {
    let (s, c) = theta.sin_cos();
    Mat::from_row_slice(2, 2, &[c, -s, s, c])
}

pub fn diag(values: &[f64]) -> Mat {
    Mat::from_diagonal(&Vector::from_column_slice(values))
}

// ---------------------------------------------------------------------------
// Jacobi SVD

/// Thin SVD of an m×n matrix with m ≥ n by one-sided (Hestenes) Jacobi.
/// Returns descending singular values, the m×n left frame and the n×n right frame.
pub fn jacobi_svd(a: &Mat) -> (Vec<f64>, Mat, Mat) {
    let (m, n) = a.shape();
    assert!(m >= n, "jacobi_svd needs at least as many rows as columns");
    let mut u = a.clone();
    let mut v = Mat::identity(n, n);
    let eps = f64::EPSILON;
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for k in 0..m {
                    let (x, y) = (u[(k, i)], u[(k, j)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let (x, y) = (u[(k, i)], u[(k, j)]);
                    u[(k, i)] = c * x - s * y;
                    u[(k, j)] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (v[(k, i)], v[(k, j)]);
                    v[(k, i)] = c * x - s * y;
                    v[(k, j)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sig: Vec<(f64, usize)> = (0..n).map(|j| (u.column(j).norm(), j)).collect();
    sig.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let sigmas: Vec<f64> = sig.iter().map(|s| s.0).collect();
    let mut left = Mat::zeros(m, n);
    let mut right = Mat::zeros(n, n);
    let top = sigmas[0];
    for (out, &(s, j)) in sig.iter().enumerate() {
        right.set_column(out, &v.column(j));
        let mut col: Vector = if s > 0.0 { u.column(j) / s } else { Vector::zeros(m) };
        // Columns carrying tiny singular values are mostly roundoff: re-orthogonalise.
        if s <= 1e-8 * top || s == 0.0 {
            col = orthogonalize_against(&left, out, col);
        }
        left.set_column(out, &col);
    }
    for j in 0..n {
        let col = left.column(j).into_owned();
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                left.column_mut(j).neg_mut();
                right.column_mut(j).neg_mut();
            }
        }
    }
    (sigmas, left, right)
}

/// Gram–Schmidt `col` against the first `k` columns of `frame`; falls back to
/// coordinate vectors if the result degenerates.
fn orthogonalize_against(frame: &Mat, k: usize, col: Vector) -> Vector {
    let m = frame.nrows();
    let project = |mut w: Vector| {
        for _ in 0..2 {
            for i in 0..k {
                let b = frame.column(i);
                let c = b.dot(&w);
                w -= b * c;
            }
        }
        w
    };
    let w = project(col);
    if w.norm() > 1e-6 {
        return w.normalize();
    }
    for e in 0..m {
        let mut unit = Vector::zeros(m);
        unit[e] = 1.0;
        let w = project(unit);
        if w.norm() > 1e-3 {
            return w.normalize();
        }
    }
    unreachable!("could not complete an orthonormal frame")
}

/// Descending singular values of any matrix.
pub fn singular_values(a: &Mat) -> Vec<f64> {
    if a.nrows() >= a.ncols() {
        jacobi_svd(a).0
    } else {
        jacobi_svd(&a.transpose()).0
    }
}

pub fn op_norm(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    singular_values(a)[0]
}

#[derive(Clone, Debug)]
pub struct SvdTriple {
    pub sigmas: Vec<f64>,
    pub left: Mat,
    pub right: Mat,
}

impl SvdTriple {
    pub fn reconstruct(&self) -> Mat {
        &self.left * diag(&self.sigmas) * self.right.transpose()
    }
}

pub fn svd(a: &SquareMatrix) -> Result<SvdTriple> {
    let (sigmas, left, right) = jacobi_svd(a.mat());
    let ratio = sigmas[sigmas.len() - 1] / sigmas[0];
    if !(ratio >= NONINVERTIBLE) {
        return Err(Error::NonInvertible { ratio });
    }
    Ok(SvdTriple { sigmas, left, right })
}

fn check_index(d: usize, p: usize) -> Result<()> {
    if p == 0 || p >= d {
        return Err(Error::DimensionMismatch(format!("index {p} outside 1..{d}")));
    }
    Ok(())
}

/// σ_{p+1}(A)/σ_p(A).
pub fn gap_ratio(a: &SquareMatrix, p: usize) -> Result<f64> {
    check_index(a.d(), p)?;
    let t = svd(a)?;
    Ok(t.sigmas[p] / t.sigmas[p - 1])
}

/// (U_p(A), S_{d−p}(A)).
pub fn singular_spaces(a: &SquareMatrix, p: usize) -> Result<(Subspace, Subspace)> {
    singular_spaces_tol(a, p, TOL_GAP)
}

pub fn singular_spaces_tol(a: &SquareMatrix, p: usize, tol_gap: f64) -> Result<(Subspace, Subspace)> {
    check_index(a.d(), p)?;
    let t = svd(a)?;
    let d = a.d();
    let ratio = t.sigmas[p] / t.sigmas[p - 1];
    if ratio >= 1.0 - tol_gap {
        return Err(Error::NoGap { p, ratio });
    }
    let u = Subspace::from_orthonormal(t.left.columns(0, p).into_owned());
    let s = Subspace::from_orthonormal(t.right.columns(p, d - p).into_owned());
    Ok((u, s))
}

// ---------------------------------------------------------------------------
// Subspaces

/// A point of Gr_p(R^d), stored as a d×p orthonormal basis.
#[derive(Clone, Debug)]
pub struct Subspace {
    basis: Mat,
}

impl Subspace {
    /// Wrap an already orthonormal basis (columns). Single vectors get the sign convention.
    pub fn from_orthonormal(mut basis: Mat) -> Self {
        if basis.ncols() == 1 {
            sign_normalize(basis.column_mut(0).as_mut_slice());
        }
        Self { basis }
    }

    /// Span of the columns of `m`; errors if they are (numerically) dependent.
    pub fn from_span(m: &Mat) -> Result<Self> {
        let (d, p) = m.shape();
        if p == 0 || p > d {
            return Err(Error::DimensionMismatch(format!("cannot span {p} columns in R^{d}")));
        }
        let (sv, left, _) = jacobi_svd(m);
        if !(sv[p - 1] > 1e-13 * sv[0]) {
            return Err(Error::InvalidInput("spanning columns are dependent".into()));
        }
        Ok(Self::from_orthonormal(left))
    }

    pub fn from_vector(v: &[f64]) -> Result<Self> {
        Self::from_span(&Mat::from_column_slice(v.len(), 1, v))
    }

    /// span(e_{i}) for the listed coordinate indices.
    pub fn coordinate(d: usize, idx: &[usize]) -> Self {
        let mut b = Mat::zeros(d, idx.len());
        for (j, &i) in idx.iter().enumerate() {
            b[(i, j)] = 1.0;
        }
        Self::from_orthonormal(b)
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &Mat {
        &self.basis
    }

    pub fn projector(&self) -> Mat {
        &self.basis * self.basis.transpose()
    }

    pub fn orthocomplement(&self) -> Subspace {
        let (d, p) = (self.ambient(), self.dim());
        let q = (Mat::identity(d, d) - self.projector()).symmetric_eigen();
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|&a, &b| q.eigenvalues[b].partial_cmp(&q.eigenvalues[a]).unwrap());
        let mut b = Mat::zeros(d, d - p);
        for (j, &i) in idx.iter().take(d - p).enumerate() {
            b.set_column(j, &q.eigenvectors.column(i));
        }
        Subspace::from_orthonormal(b)
    }

    /// A(P).
    pub fn image(&self, a: &Mat) -> Result<Subspace> {
        Subspace::from_span(&(a * &self.basis))
    }

    pub fn basis_rows(&self) -> Vec<Vec<f64>> {
        (0..self.ambient())
            .map(|i| (0..self.dim()).map(|j| self.basis[(i, j)]).collect())
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct SubspaceJson {
    dim: usize,
    basis: Vec<Vec<f64>>,
}

impl Serialize for Subspace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SubspaceJson { dim: self.dim(), basis: self.basis_rows() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Subspace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = SubspaceJson::deserialize(d)?;
        let rows = j.basis.len();
        if j.basis.iter().any(|r| r.len() != j.dim) {
            return Err(serde::de::Error::custom("basis rows must have length dim"));
        }
        let m = Mat::from_fn(rows, j.dim, |i, k| j.basis[i][k]);
        Subspace::from_span(&m).map_err(serde::de::Error::custom)
    }
}

fn sign_normalize(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale.max(1e-300)) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn same_dims(p: &Subspace, q: &Subspace) -> Result<()> {
    if p.dim() != q.dim() || p.ambient() != q.ambient() {
        return Err(Error::DimensionMismatch(format!(
            "Gr_{}(R^{}) vs Gr_{}(R^{})",
            p.dim(),
            p.ambient(),
            q.dim(),
            q.ambient()
        )));
    }
    Ok(())
}

/// d(P,Q) = sin of the largest canonical angle, computed as ‖(I − π_P)·basis(Q)‖.
pub fn grassmann_distance(p: &Subspace, q: &Subspace) -> Result<f64> {
    same_dims(p, q)?;
    let d = p.ambient();
    let resid = (Mat::identity(d, d) - p.projector()) * q.basis();
    Ok(op_norm(&resid).min(1.0))
}

/// Smallest angle between nonzero vectors of P and Q (any dimensions).
pub fn angle(p: &Subspace, q: &Subspace) -> f64 {
    let (small, big) = if p.dim() <= q.dim() { (p, q) } else { (q, p) };
    let overlap = big.basis().transpose() * small.basis();
    let cos = singular_values(&overlap)[0].clamp(0.0, 1.0);
    if cos < 0.7 {
        return cos.acos();
    }
    // Near-parallel: the sine form keeps accuracy for small angles.
    let d = p.ambient();
    let resid = (Mat::identity(d, d) - big.projector()) * small.basis();
    let sines = singular_values(&resid);
    sines[sines.len() - 1].clamp(0.0, 1.0).asin()
}

/// Canonical angles β₁ ≥ … ≥ β_p.
pub fn canonical_angles(p: &Subspace, q: &Subspace) -> Result<Vec<f64>> {
    same_dims(p, q)?;
    let k = p.dim();
    let cos = singular_values(&(p.basis().transpose() * q.basis()));
    let d = p.ambient();
    let resid = (Mat::identity(d, d) - p.projector()) * q.basis();
    let sin = singular_values(&resid);
    Ok((0..k)
        .map(|i| {
            let s = sin[i].clamp(0.0, 1.0);
            if s < 0.7 {
                s.asin()
            } else {
                cos[k - 1 - i].clamp(0.0, 1.0).acos()
            }
        })
        .collect())
}

/// ‖L_{Q,P}‖ where Q is the graph of L_{Q,P}: P → P^⊥.
pub fn graph_map_norm(p: &Subspace, q: &Subspace) -> Result<f64> {
    let dist = grassmann_distance(p, q)?;
    if dist >= 1.0 - NOT_GRAPH {
        return Err(Error::NotGraph { distance: dist });
    }
    Ok(dist / (1.0 - dist * dist).sqrt())
}

/// The linear map L: P → P^⊥ whose graph is Q, as a d×d matrix acting on P.
pub fn graph_map(p: &Subspace, q: &Subspace) -> Result<Mat> {
    let dist = grassmann_distance(p, q)?;
    if dist >= 1.0 - NOT_GRAPH {
        return Err(Error::NotGraph { distance: dist });
    }
    // Q = {x + Lx : x ∈ P}: with Y = basis(Q), π_P Y is invertible on P.
    let y = q.basis();
    let b = p.basis();
    let coords = b.transpose() * y;
    let inv = coords
        .try_inverse()
        .ok_or(Error::NotGraph { distance: dist })?;
    let d = p.ambient();
    let perp = (Mat::identity(d, d) - p.projector()) * y;
    Ok(perp * inv * b.transpose())
}

// ---------------------------------------------------------------------------
// Exterior powers

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Increasing p-subsets of {0..d}, lexicographic.
pub fn combinations(d: usize, p: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(d, p));
    let mut cur: Vec<usize> = (0..p).collect();
    if p > d {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = p;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < d - p + i {
                cur[i] += 1;
                for j in (i + 1)..p {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn minor(a: &Mat, rows: &[usize], cols: &[usize]) -> f64 {
    let k = rows.len();
    match k {
        0 => 1.0,
        1 => a[(rows[0], cols[0])],
        2 => a[(rows[0], cols[0])] * a[(rows[1], cols[1])] - a[(rows[0], cols[1])] * a[(rows[1], cols[0])],
        _ => Mat::from_fn(k, k, |i, j| a[(rows[i], cols[j])]).determinant(),
    }
}

/// Λ^p A over the lexicographic wedge basis.
#[derive(Clone, Debug)]
pub struct ExteriorMatrix {
    pub base_dim: usize,
    pub degree: usize,
    pub entries: Mat,
}

pub fn exterior_power(a: &SquareMatrix, p: usize) -> Result<ExteriorMatrix> {
    check_index(a.d() + 1, p)?;
    Ok(ExteriorMatrix { base_dim: a.d(), degree: p, entries: exterior_mat(a.mat(), p) })
}

/// Λ^p of a square matrix, unchecked degree (0 and d allowed).
pub fn exterior_mat(a: &Mat, p: usize) -> Mat {
    let d = a.nrows();
    let idx = combinations(d, p);
    let n = idx.len();
    Mat::from_fn(n, n, |i, j| minor(a, &idx[i], &idx[j]))
}

/// Wedge of the columns of a d×p matrix, as a C(d,p) vector (no normalisation).
pub fn wedge_columns(m: &Mat) -> Vector {
    let (d, p) = m.shape();
    let cols: Vec<usize> = (0..p).collect();
    let idx = combinations(d, p);
    Vector::from_iterator(idx.len(), idx.iter().map(|r| minor(m, r, &cols)))
}

/// ι(P): unit Plücker vector, first nonzero coordinate positive.
pub fn plucker_embed(p: &Subspace) -> Vector {
    let mut w = wedge_columns(p.basis());
    let n = w.norm();
    w /= n;
    sign_normalize(w.as_mut_slice());
    w
}

/// Recover the p-plane represented by a (nearly) decomposable unit p-vector ω.
/// The plane is the kernel of v ↦ v ∧ ω.
pub fn plucker_to_subspace(omega: &Vector, d: usize, p: usize) -> Result<Subspace> {
    if omega.len() != binomial(d, p) {
        return Err(Error::DimensionMismatch("Plücker vector length".into()));
    }
    if p == 1 {
        return Subspace::from_span(&Mat::from_column_slice(d, 1, omega.as_slice()));
    }
    let small = combinations(d, p);
    let pos = |s: &[usize]| small.binary_search_by(|x| x.as_slice().cmp(s)).unwrap();
    let big = combinations(d, p + 1);
    let mut k = Mat::zeros(big.len(), d);
    for (r, set) in big.iter().enumerate() {
        for (slot, &j) in set.iter().enumerate() {
            let rest: Vec<usize> = set.iter().copied().filter(|&x| x != j).collect();
            let sign = if slot % 2 == 0 { 1.0 } else { -1.0 };
            k[(r, j)] += sign * omega[pos(&rest)];
        }
    }
    let kk = k.transpose() * &k;
    let eig = SymmetricEigen::new(kk);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut basis = Mat::zeros(d, p);
    for (j, &i) in idx.iter().take(p).enumerate() {
        basis.set_column(j, &eig.eigenvectors.column(i));
    }
    Subspace::from_span(&basis)
}

/// ‖Λ^p A · ι(P)‖, the p-volume expansion of A on P.
pub fn restricted_jacobian(a: &SquareMatrix, p: &Subspace) -> f64 {
    wedge_columns(&(a.mat() * p.basis())).norm()
}

// ---------------------------------------------------------------------------
// Long products

/// One factor of a long product, with its exterior powers precomputed.
#[derive(Clone, Debug)]
pub struct Factor {
    pub mat: Mat,
    ext: Vec<Option<Mat>>,
    log_abs_det: f64,
}

impl Factor {
    pub fn new(a: &Mat, degrees: &[usize]) -> Self {
        let d = a.nrows();
        let mut ext = vec![None; d + 1];
        for &k in degrees {
            if k >= 1 && k < d {
                ext[k] = Some(if k == 1 { a.clone() } else { exterior_mat(a, k) });
            }
        }
        Self { mat: a.clone(), ext, log_abs_det: a.determinant().abs().ln() }
    }
}

/// Exterior degrees needed to read off σ_p and σ_{p+1}.
pub fn degrees_for_gap(d: usize, p: usize) -> Vec<usize> {
    [p.saturating_sub(1), p, p + 1]
        .into_iter()
        .filter(|&k| k >= 1 && k < d)
        .collect()
}

pub fn all_degrees(d: usize) -> Vec<usize> {
    (1..d).collect()
}

/// A renormalised product of matrices together with selected exterior powers.
/// Singular data come from the top singular triple of each Λ^k, which stays
/// accurate even when σ_d/σ₁ underflows.
#[derive(Clone, Debug)]
pub struct ScaledProduct {
    d: usize,
    mats: Vec<Option<Mat>>,
    logs: Vec<f64>,
    log_det: f64,
}

impl ScaledProduct {
    pub fn identity(d: usize, degrees: &[usize]) -> Self {
        let mut mats = vec![None; d + 1];
        for &k in degrees {
            if k >= 1 && k < d {
                let n = binomial(d, k);
                mats[k] = Some(Mat::identity(n, n));
            }
        }
        Self { d, mats, logs: vec![0.0; d + 1], log_det: 0.0 }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    fn apply(&mut self, f: &Factor, left: bool) {
        for k in 1..self.d {
            if let Some(m) = self.mats[k].as_mut() {
                let e = f.ext[k].as_ref().expect("factor lacks a needed exterior degree");
                let mut prod = if left { e * &*m } else { &*m * e };
                let scale = prod.amax();
                if scale > 0.0 {
                    prod /= scale;
                    self.logs[k] += scale.ln();
                }
                *m = prod;
            }
        }
        self.log_det += f.log_abs_det;
    }

    /// P ← A·P.
    pub fn push_left(&mut self, f: &Factor) {
        self.apply(f, true);
    }

    /// P ← P·A.
    pub fn push_right(&mut self, f: &Factor) {
        self.apply(f, false);
    }

    /// log ‖Λ^k P‖ = log(σ₁⋯σ_k).
    pub fn log_sigma_sum(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        if k == self.d {
            return self.log_det;
        }
        let m = self.mats[k].as_ref().expect("degree not tracked");
        self.logs[k] + op_norm(m).ln()
    }

    /// log σ_k(P), 1-based.
    pub fn log_sigma(&self, k: usize) -> f64 {
        self.log_sigma_sum(k) - self.log_sigma_sum(k - 1)
    }

    /// log(σ_{p+1}/σ_p)(P) ≤ 0.
    pub fn log_gap(&self, p: usize) -> f64 {
        let v = self.log_sigma_sum(p + 1) - 2.0 * self.log_sigma_sum(p) + self.log_sigma_sum(p - 1);
        v.min(0.0)
    }

    pub fn gap_ratio(&self, p: usize) -> f64 {
        self.log_gap(p).exp()
    }

    /// All log singular values (needs every degree tracked).
    pub fn log_singular_values(&self) -> Vec<f64> {
        (1..=self.d).map(|k| self.log_sigma(k)).collect()
    }

    /// The normalised product itself (degree 1) and its log scale.
    pub fn normalized(&self) -> (&Mat, f64) {
        (self.mats[1].as_ref().expect("degree 1 not tracked"), self.logs[1])
    }

    fn top_pair(&self, p: usize) -> (Vector, Vector) {
        let m = self.mats[p].as_ref().expect("degree not tracked");
        let (_, left, right) = jacobi_svd(m);
        (left.column(0).into_owned(), right.column(0).into_owned())
    }

    /// U_p(P), requires a gap of index p.
    pub fn u_space(&self, p: usize, tol_gap: f64) -> Result<Subspace> {
        self.check_gap(p, tol_gap)?;
        plucker_to_subspace(&self.top_pair(p).0, self.d, p)
    }

    /// S_{d−p}(P) = U_p(Pᵀ)^⊥, requires a gap of index p.
    pub fn s_space(&self, p: usize, tol_gap: f64) -> Result<Subspace> {
        self.check_gap(p, tol_gap)?;
        Ok(plucker_to_subspace(&self.top_pair(p).1, self.d, p)?.orthocomplement())
    }

    fn check_gap(&self, p: usize, tol_gap: f64) -> Result<()> {
        check_index(self.d, p)?;
        let ratio = self.gap_ratio(p);
        if ratio >= 1.0 - tol_gap {
            return Err(Error::NoGap { p, ratio });
        }
        Ok(())
    }
}

/// Restriction norms of A to a subspace: (‖A|_P‖, 𝐦(A|_P)).
pub fn restricted_norms(a: &Mat, p: &Subspace) -> (f64, f64) {
    let sv = singular_values(&(a * p.basis()));
    (sv[0], sv[sv.len() - 1])
}
