//! Cartan projections, parallel sets and a Morse-lemma audit in the symmetric
//! space of SL(d,ℝ).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matgeo::{
    all_degrees, angle, gap_ratio, svd, Factor, Mat, ScaledProduct, SquareMatrix, Subspace, TOL_GAP,
};
use crate::reprcheck::Representation;

/// Points closer than this count as equal; increments rebuilt from explicit points carry
/// roundoff of order κ·ε.
const COINCIDENT: f64 = 1e-9;

/// Log singular values in descending order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CartanVector {
    pub a: Vec<f64>,
}

impl CartanVector {
    pub fn new(mut a: Vec<f64>) -> Self {
        a.sort_by(|x, y| y.partial_cmp(x).unwrap());
        Self { a }
    }

    pub fn d(&self) -> usize {
        self.a.len()
    }

    /// Projection to the trace-free part.
    pub fn trace_free(&self) -> Self {
        let mean = self.a.iter().sum::<f64>() / self.d() as f64;
        Self { a: self.a.iter().map(|x| x - mean).collect() }
    }

    /// ι(a) = (−a_d, …, −a₁).
    pub fn iota(&self) -> Self {
        Self { a: self.a.iter().rev().map(|x| -x).collect() }
    }

    pub fn norm(&self) -> f64 {
        self.a.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// α_p(a) = a_p − a_{p+1}, 1-based.
    pub fn alpha(&self, p: usize) -> f64 {
        self.a[p - 1] - self.a[p]
    }
}

pub fn cartan_projection(g: &SquareMatrix) -> Result<CartanVector> {
    Ok(CartanVector::new(svd(g)?.sigmas.iter().map(|s| s.ln()).collect()))
}

fn cartan_of(prod: &ScaledProduct) -> CartanVector {
    CartanVector::new(prod.log_singular_values()).trace_free()
}

/// 𝔞(h₁·o, h₂·o) = a(h₁⁻¹h₂).
pub fn vector_distance(h1: &SquareMatrix, h2: &SquareMatrix) -> Result<CartanVector> {
    cartan_projection(&h1.inverse()?.mul(h2))
}

/// Extreme rays of the trace-free closed Weyl chamber.
fn chamber_rays(d: usize) -> Vec<Vec<f64>> {
    (1..d)
        .map(|k| (0..d).map(|i| if i < k { 1.0 } else { 0.0 } - k as f64 / d as f64).collect())
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparability {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub used: usize,
}

/// Range of d(o, g·o)/φ(a(g)) over a sample; φ must be positive on the chamber.
pub fn comparability_check(phi: &[f64], sample: &[SquareMatrix]) -> Result<Comparability> {
    let d = phi.len();
    if chamber_rays(d).iter().any(|r| r.iter().zip(phi).map(|(x, y)| x * y).sum::<f64>() <= 0.0) {
        return Err(Error::NotPositiveOnChamber);
    }
    let (mut lo, mut hi, mut used) = (f64::INFINITY, 0.0f64, 0);
    for g in sample {
        if g.d() != d {
            return Err(Error::DimensionMismatch("functional and matrix sizes differ".into()));
        }
        let a = cartan_projection(g)?.trace_free();
        let n = a.norm();
        if n < COINCIDENT {
            continue;
        }
        let v: f64 = a.a.iter().zip(phi).map(|(x, y)| x * y).sum();
        lo = lo.min(n / v);
        hi = hi.max(n / v);
        used += 1;
    }
    Ok(Comparability { min_ratio: lo, max_ratio: hi, used })
}

/// Nested subspaces E_p, p ∈ θ (sorted).
#[derive(Clone, Debug, Serialize)]
pub struct PartialFlag {
    pub theta: Vec<usize>,
    pub spaces: Vec<Subspace>,
}

impl PartialFlag {
    pub fn new(theta: Vec<usize>, spaces: Vec<Subspace>) -> Result<Self> {
        if theta.len() != spaces.len() || theta.is_empty() {
            return Err(Error::InvalidInput("flag needs one space per index".into()));
        }
        if theta.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("flag indices must increase".into()));
        }
        let d = spaces[0].ambient();
        for (p, s) in theta.iter().zip(&spaces) {
            if s.dim() != *p || s.ambient() != d || *p == 0 || *p >= d {
                return Err(Error::DimensionMismatch(format!("flag space for index {p} has dimension {}", s.dim())));
            }
        }
        for w in spaces.windows(2) {
            let leak = (Mat::identity(d, d) - w[1].projector()) * w[0].basis();
            if leak.amax() > 1e-8 {
                return Err(Error::InvalidInput("flag spaces are not nested".into()));
            }
        }
        Ok(Self { theta, spaces })
    }

    pub fn d(&self) -> usize {
        self.spaces[0].ambient()
    }

    pub fn space(&self, p: usize) -> Option<&Subspace> {
        self.theta.iter().position(|&q| q == p).map(|i| &self.spaces[i])
    }

    /// g·flag.
    pub fn image(&self, g: &Mat) -> Result<Self> {
        Ok(Self { theta: self.theta.clone(), spaces: self.spaces.iter().map(|s| s.image(g)).collect::<Result<_>>()? })
    }
}

pub fn iota_theta(theta: &[usize], d: usize) -> Vec<usize> {
    let mut t: Vec<usize> = theta.iter().map(|p| d - p).collect();
    t.sort();
    t
}

fn check_theta(theta: &[usize], d: usize) -> Result<Vec<usize>> {
    let mut t = theta.to_vec();
    t.sort();
    t.dedup();
    if t.is_empty() || t.iter().any(|&p| p == 0 || p >= d) {
        return Err(Error::InvalidInput(format!("theta must be a nonempty subset of 1..{}", d - 1)));
    }
    Ok(t)
}

/// U_θ(g): spans of the top p left singular vectors.
pub fn flag_of(g: &SquareMatrix, theta: &[usize]) -> Result<PartialFlag> {
    let theta = check_theta(theta, g.d())?;
    for &p in &theta {
        if gap_ratio(g, p)? >= 1.0 - TOL_GAP {
            return Err(Error::NoGapAtTheta);
        }
    }
    let t = svd(g)?;
    let spaces = theta
        .iter()
        .map(|&p| Subspace::from_orthonormal(t.left.columns(0, p).into_owned()))
        .collect();
    PartialFlag::new(theta, spaces)
}

/// S-flag of g, i.e. U_{ιθ}(g⁻¹).
pub fn s_flag_of(g: &SquareMatrix, theta: &[usize]) -> Result<PartialFlag> {
    flag_of(&g.inverse()?, &iota_theta(theta, g.d()))
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceBracket {
    /// m/√2 with m = −log sin of the smallest flag angle (weakened lower bound).
    pub lower: f64,
    /// d(o, g·o) for an explicit g with g·o in the parallel set (constructive upper bound).
    pub upper: f64,
    pub m: f64,
    /// ‖g‖ ≤ d·e^m.
    pub norm_check: bool,
}

/// Bracket for d(o, P(E,F)) with E of type θ and F of type ιθ.
pub fn parallel_set_distance_bounds(e: &PartialFlag, f: &PartialFlag) -> Result<DistanceBracket> {
    let d = e.d();
    if f.d() != d || f.theta != iota_theta(&e.theta, d) {
        return Err(Error::DimensionMismatch("flags are not of opposite types".into()));
    }
    let mut min_sin = f64::INFINITY;
    for &p in &e.theta {
        let s = angle(e.space(p).unwrap(), f.space(d - p).unwrap()).sin();
        min_sin = min_sin.min(s);
    }
    if !(min_sin > 1e-12) {
        return Err(Error::NotTransverse);
    }
    let m = 0.0 - min_sin.ln();

    // H_i = E_{p_i} ∩ F_{d−p_{i−1}}, and H_i⁰ = E_{p_i} ⊖ E_{p_{i−1}}.
    let mut ps = vec![0];
    ps.extend(&e.theta);
    ps.push(d);
    let full = Subspace::from_orthonormal(Mat::identity(d, d));
    let e_at = |p: usize| if p == d { full.clone() } else { e.space(p).unwrap().clone() };
    let f_at = |q: usize| if q == d { full.clone() } else { f.space(q).unwrap().clone() };
    let mut g_inv_cols = Mat::zeros(d, d); // g⁻¹ applied to the H basis
    let mut h_basis = Mat::zeros(d, d);
    let mut col = 0;
    let mut prev_e: Option<Subspace> = None;
    for i in 1..ps.len() {
        let (lo, hi) = (ps[i - 1], ps[i]);
        let k = hi - lo;
        let h = intersect(&e_at(hi), &f_at(d - lo), k)?;
        let h0_proj = match &prev_e {
            Some(pe) => e_at(hi).projector() - pe.projector(),
            None => e_at(hi).projector(),
        };
        h_basis.columns_mut(col, k).copy_from(h.basis());
        g_inv_cols.columns_mut(col, k).copy_from(&(&h0_proj * h.basis()));
        col += k;
        prev_e = Some(e_at(hi));
    }
    // g⁻¹·H = g_inv_cols, so g = H·(g_inv_cols)⁻¹.
    let g = &h_basis * g_inv_cols.try_inverse().ok_or(Error::NotTransverse)?;
    let g = SquareMatrix::from_computed(g)?;
    let a = cartan_projection(&g)?.trace_free();
    let upper = a.norm();
    let det = g.det().abs().powf(1.0 / d as f64);
    let norm_check = g.norm() / det <= d as f64 * m.exp() * (1.0 + 1e-9);
    Ok(DistanceBracket { lower: m / 2f64.sqrt(), upper, m, norm_check })
}

/// Orthonormal basis of P ∩ Q, expected to have dimension k.
fn intersect(p: &Subspace, q: &Subspace, k: usize) -> Result<Subspace> {
    let d = p.ambient();
    if p.dim() == d {
        return Ok(q.clone());
    }
    if q.dim() == d {
        return Ok(p.clone());
    }
    // v ∈ P ∩ Q iff (π_P + π_Q)v = 2v; take the top-k eigenvectors of π_P + π_Q.
    let s = p.projector() + q.projector();
    let eig = nalgebra::SymmetricEigen::new(s);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    if eig.eigenvalues[idx[k - 1]] < 2.0 - 1e-6 {
        return Err(Error::NotTransverse);
    }
    let basis = Mat::from_fn(d, k, |r, c| eig.eigenvectors[(r, idx[c])]);
    Ok(Subspace::from_orthonormal(basis))
}

/// An orbit x_n = h_n·o stored through its increments g_n = h_n⁻¹h_{n+1}, which keeps
/// every pairwise quantity a product without cancellation.
#[derive(Clone, Debug)]
pub struct Orbit {
    pub increments: Vec<SquareMatrix>,
}

impl Orbit {
    pub fn from_points(points: &[SquareMatrix]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooShort("orbit needs at least 2 points".into()));
        }
        let increments = points
            .windows(2)
            .map(|w| Ok(w[0].inverse()?.mul(&w[1])))
            .collect::<Result<_>>()?;
        Ok(Self { increments })
    }

    /// Points ρ(s₁⋯s_n)·o along a word.
    pub fn from_word(rep: &Representation, word: &[usize]) -> Result<Self> {
        let increments = word.iter().map(|&l| rep.evaluate(&[l])).collect::<Result<_>>()?;
        Ok(Self { increments })
    }

    pub fn len(&self) -> usize {
        self.increments.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn d(&self) -> usize {
        self.increments[0].d()
    }

    fn factors(&self) -> Vec<Factor> {
        let deg = all_degrees(self.d());
        self.increments.iter().map(|g| Factor::new(g.mat(), &deg)).collect()
    }

    /// Trace-free 𝔞(x_n, x_m) for all n < m, as rows of a triangular table.
    pub fn pair_vectors(&self) -> Vec<Vec<CartanVector>> {
        let factors = self.factors();
        let d = self.d();
        let deg = all_degrees(d);
        (0..self.len())
            .into_par_iter()
            .map(|n| {
                let mut prod = ScaledProduct::identity(d, &deg);
                (n + 1..self.len())
                    .map(|m| {
                        prod.push_right(&factors[m - 1]);
                        cartan_of(&prod)
                    })
                    .collect()
            })
            .collect()
    }
}

fn pair<'a>(table: &'a [Vec<CartanVector>], n: usize, m: usize) -> &'a CartanVector {
    &table[n][m - n - 1]
}

#[derive(Clone, Debug, Serialize)]
pub struct QuasiGeodesicConstants {
    pub mu: f64,
    pub c: f64,
    pub degenerate: bool,
}

/// Smallest c, then smallest μ ≥ 1, with |n−m|/μ − c ≤ d(x_n,x_m) ≤ μ|n−m| + c.
pub fn quasigeodesic_constants(orbit: &Orbit) -> Result<QuasiGeodesicConstants> {
    if orbit.len() < 3 {
        return Err(Error::TooShort("quasi-geodesic constants need at least 3 points".into()));
    }
    Ok(constants_from_table(&orbit.pair_vectors()))
}

fn constants_from_table(table: &[Vec<CartanVector>]) -> QuasiGeodesicConstants {
    let mut mu: f64 = 1.0;
    let mut coincident = Vec::new();
    let mut any_positive = false;
    for (n, row) in table.iter().enumerate() {
        for (j, a) in row.iter().enumerate() {
            let delta = (j + 1) as f64;
            let dist = a.norm();
            if dist < COINCIDENT {
                coincident.push(delta);
            } else {
                any_positive = true;
                mu = mu.max(dist / delta).max(delta / dist);
            }
            let _ = n;
        }
    }
    if !any_positive {
        return QuasiGeodesicConstants { mu: 1.0, c: 0.0, degenerate: true };
    }
    let c = coincident.iter().map(|delta| delta / mu).fold(0.0, f64::max);
    QuasiGeodesicConstants { mu, c, degenerate: false }
}

/// min over n < m and p ∈ θ of α_p(𝔞(x_n,x_m))/|𝔞(x_n,x_m)|.
pub fn regularity_margin(orbit: &Orbit, theta: &[usize]) -> Result<f64> {
    let theta = check_theta(theta, orbit.d())?;
    Ok(margin_from_table(&orbit.pair_vectors(), &theta))
}

fn normalized_alpha(a: &CartanVector, theta: &[usize]) -> Option<f64> {
    let n = a.norm();
    (n >= COINCIDENT).then(|| theta.iter().map(|&p| a.alpha(p) / n).fold(f64::INFINITY, f64::min))
}

/// Zero when no pair is separated, e.g. for an orbit of a compact subgroup.
fn margin_from_table(table: &[Vec<CartanVector>], theta: &[usize]) -> f64 {
    let m = table
        .iter()
        .flatten()
        .filter_map(|a| normalized_alpha(a, theta))
        .fold(f64::INFINITY, f64::min);
    if m.is_finite() {
        m.max(0.0)
    } else {
        0.0
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MorseRow {
    pub k: usize,
    pub lower: f64,
    pub upper: f64,
    pub sidedness_margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MorseReport {
    pub theta: Vec<usize>,
    pub points: usize,
    pub regularity_margin: f64,
    pub constants: QuasiGeodesicConstants,
    pub rows: Vec<MorseRow>,
    pub max_upper: f64,
    pub argmax: usize,
    pub max_lower: f64,
    pub c_target: f64,
    pub within_target: bool,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub lower: &'static str,
    pub upper: &'static str,
    pub constants: &'static str,
}

#[derive(Clone, Debug)]
pub struct MorseCaps {
    pub mu: f64,
    pub c: f64,
}

impl Default for MorseCaps {
    fn default() -> Self {
        Self { mu: 1e6, c: 1e6 }
    }
}

/// Distance brackets from each orbit point to the parallel set of the segment's
/// diamond flags, plus Weyl-cone sidedness margins.
pub fn morse_audit(orbit: &Orbit, theta: &[usize], c_target: f64, caps: &MorseCaps) -> Result<MorseReport> {
    let d = orbit.d();
    let theta = check_theta(theta, d)?;
    let table = orbit.pair_vectors();
    let delta = margin_from_table(&table, &theta);
    if !(delta > 0.0) {
        return Err(Error::NotRegular { margin: delta });
    }
    let constants = constants_from_table(&table);
    if constants.mu > caps.mu || constants.c > caps.c {
        return Err(Error::NotQuasiGeodesic { mu: constants.mu, c: constants.c });
    }
    let last = orbit.len() - 1;

    // Whole-segment product G = h_min⁻¹h_max.
    let deg = all_degrees(d);
    let factors = orbit.factors();
    let mut whole = ScaledProduct::identity(d, &deg);
    for f in &factors {
        whole.push_right(f);
    }
    let mut e_last = Vec::new();
    let mut f_first = Vec::new();
    for &p in &theta {
        // E at x_max is the top right singular p-plane of G; F at x_min is U_p(G)^⊥.
        e_last.push(whole.s_space(p, TOL_GAP).map_err(|_| Error::NoGapAtTheta)?.orthocomplement());
        f_first.push(whole.u_space(p, TOL_GAP).map_err(|_| Error::NoGapAtTheta)?.orthocomplement());
    }
    let mut e_at = vec![Vec::new(); orbit.len()];
    e_at[last] = e_last;
    for k in (0..last).rev() {
        let g = orbit.increments[k].mat();
        e_at[k] = e_at[k + 1].iter().map(|s| s.image(g)).collect::<Result<_>>()?;
    }
    let mut f_at = vec![Vec::new(); orbit.len()];
    f_at[0] = f_first;
    for k in 0..last {
        let g_inv = orbit.increments[k].inverse()?;
        f_at[k + 1] = f_at[k].iter().map(|s| s.image(g_inv.mat())).collect::<Result<_>>()?;
    }
    let ftheta = iota_theta(&theta, d);
    let rows: Vec<MorseRow> = (0..orbit.len())
        .into_par_iter()
        .map(|k| {
            let e = PartialFlag::new(theta.clone(), e_at[k].clone())?;
            // f_at lists F_{d−p} in θ order, i.e. decreasing dimension.
            let mut fs = f_at[k].clone();
            fs.reverse();
            let f = PartialFlag::new(ftheta.clone(), fs)?;
            let b = parallel_set_distance_bounds(&e, &f)?;
            let mut side = f64::INFINITY;
            if k > 0 {
                side = side.min(normalized_alpha(pair(&table, 0, k), &theta).unwrap_or(f64::INFINITY));
            }
            if k < last {
                side = side.min(normalized_alpha(pair(&table, k, last), &theta).unwrap_or(f64::INFINITY));
            }
            Ok(MorseRow { k, lower: b.lower, upper: b.upper, sidedness_margin: side })
        })
        .collect::<Result<_>>()?;
    let (argmax, max_upper) = rows
        .iter()
        .map(|r| (r.k, r.upper))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    let max_lower = rows.iter().map(|r| r.lower).fold(0.0, f64::max);
    Ok(MorseReport {
        theta,
        points: orbit.len(),
        regularity_margin: delta,
        constants,
        rows,
        max_upper,
        argmax,
        max_lower,
        c_target,
        within_target: max_upper <= c_target,
        provenance: Provenance {
            lower: "weakened-lower: m/sqrt(2), m = -log sin of the smallest flag angle",
            upper: "constructive-upper: d(o, g.o) for an explicit g with g.o in the parallel set",
            constants: "fitted: smallest c, then smallest mu, over all pairs",
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matgeo::diag;

    fn geodesic(n: usize) -> Orbit {
        let g = SquareMatrix::new(diag(&[1f64.exp(), (-1f64).exp()])).unwrap();
        Orbit { increments: vec![g; n] }
    }

    #[test]
    fn cartan_basics() {
        let g = SquareMatrix::diag(&[1f64.exp(), 1.0, (-1f64).exp()]).unwrap();
        let a = cartan_projection(&g).unwrap();
        assert!((a.a[0] - 1.0).abs() < 1e-12 && a.a[1].abs() < 1e-12 && (a.a[2] + 1.0).abs() < 1e-12);
        let c = comparability_check(&[1.0, -1.0], &[SquareMatrix::diag(&[3.0, 1.0 / 3.0]).unwrap()]).unwrap();
        assert!((c.min_ratio - 2f64.sqrt() / 2.0).abs() < 1e-12);
        assert!(matches!(comparability_check(&[0.0, 0.0], &[]), Err(Error::NotPositiveOnChamber)));
    }

    #[test]
    fn flags() {
        let g = SquareMatrix::diag(&[3.0, 2.0, 1.0]).unwrap();
        let f = flag_of(&g, &[1, 2]).unwrap();
        assert!((f.spaces[0].basis()[(0, 0)].abs() - 1.0).abs() < 1e-12);
        let rot = SquareMatrix::new(crate::matgeo::rotation2(0.3)).unwrap();
        assert!(matches!(flag_of(&rot, &[1]), Err(Error::NoGapAtTheta)));
    }

    #[test]
    fn brackets() {
        let e = PartialFlag::new(vec![1], vec![Subspace::coordinate(2, &[0])]).unwrap();
        let f = PartialFlag::new(vec![1], vec![Subspace::coordinate(2, &[1])]).unwrap();
        let b = parallel_set_distance_bounds(&e, &f).unwrap();
        assert!(b.lower.abs() < 1e-12 && b.upper.abs() < 1e-12);
        let f = PartialFlag::new(vec![1], vec![Subspace::from_vector(&[1.0, 1.0]).unwrap()]).unwrap();
        let b = parallel_set_distance_bounds(&e, &f).unwrap();
        let m = -(std::f64::consts::FRAC_PI_4.sin()).ln();
        assert!((b.m - m).abs() < 1e-12);
        // g = [[1,1],[0,1]], singular values φ^{±1}.
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((b.upper - 2f64.sqrt() * phi.ln()).abs() < 1e-12);
        assert!(b.lower <= b.upper && b.norm_check);
    }

    #[test]
    fn diagonal_geodesic() {
        let o = geodesic(12);
        let q = quasigeodesic_constants(&o).unwrap();
        assert!((q.mu - 2f64.sqrt()).abs() < 1e-12 && q.c == 0.0);
        assert!((regularity_margin(&o, &[1]).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        let r = morse_audit(&o, &[1], 1.0, &MorseCaps::default()).unwrap();
        assert!(r.max_upper < 1e-8);
    }
}
