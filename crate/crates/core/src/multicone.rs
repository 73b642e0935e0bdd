//! Quadratic multicones and strictly invariant families over labelled graphs.

use std::collections::BTreeMap;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::GeodesicAutomaton;
use crate::matgeo::{
    angle, degrees_for_gap, grassmann_distance, op_norm, Factor, Mat, ScaledProduct, SquareMatrix, Subspace,
    TOL_GAP,
};
use crate::reprcheck::{limit_map, BoundaryRay, Representation};

pub const DEFAULT_MARGIN_FLOOR: f64 = 1e-6;
const SIGNATURE_TOL: f64 = 1e-12;
const AVOIDED_PLANE_TRIES: usize = 512;

/// {[v] : vᵀQv < 0} for a symmetric Q with exactly p negative eigenvalues.
#[derive(Clone, Debug, Serialize)]
pub struct QuadraticCone {
    #[serde(serialize_with = "ser_mat")]
    form: Mat,
    #[serde(skip)]
    p: usize,
}

fn ser_mat<S: serde::Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    rows.serialize(s)
}

fn symmetric_eigen(m: &Mat) -> (Vec<f64>, Mat) {
    let e = SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].partial_cmp(&e.eigenvalues[b]).unwrap());
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = Mat::from_fn(m.nrows(), m.ncols(), |r, c| e.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

fn lambda_max(m: &Mat) -> f64 {
    *symmetric_eigen(m).0.last().unwrap()
}

fn lambda_min(m: &Mat) -> f64 {
    symmetric_eigen(m).0[0]
}

fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

impl QuadraticCone {
    pub fn new(form: Mat, p: usize) -> Result<Self> {
        let d = form.nrows();
        if form.ncols() != d || d < 2 {
            return Err(Error::DimensionMismatch(format!("form is {}x{}", d, form.ncols())));
        }
        if form.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite form entry".into()));
        }
        let scale = form.amax();
        if (&form - form.transpose()).amax() > 1e-10 * scale.max(1.0) {
            return Err(Error::InvalidInput("form is not symmetric".into()));
        }
        let form = symmetrize(&form);
        let (vals, _) = symmetric_eigen(&form);
        let top = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let neg = vals.iter().filter(|&&v| v < -SIGNATURE_TOL * top).count();
        let pos = vals.iter().filter(|&&v| v > SIGNATURE_TOL * top).count();
        if neg != p || pos != d - p {
            return Err(Error::SignatureMismatch);
        }
        Ok(Self { form, p })
    }

    /// Cone of slope s around E, transverse to F: with v = e + f along E ⊕ F,
    /// Q(v) = |f|² − s²|e|² in the coordinates of the two orthonormal bases.
    pub fn around(e: &Subspace, f: &Subspace, s: f64) -> Result<Self> {
        let (d, p) = (e.ambient(), e.dim());
        if f.dim() != d - p || f.ambient() != d {
            return Err(Error::DimensionMismatch("E and F are not complementary".into()));
        }
        let m_inv = split_coordinates(e, f)?;
        let w = Mat::from_fn(d, d, |i, j| {
            if i != j {
                0.0
            } else if i < p {
                -s * s
            } else {
                1.0
            }
        });
        Self::new(symmetrize(&(m_inv.transpose() * w * &m_inv)), p)
    }

    pub fn form(&self) -> &Mat {
        &self.form
    }

    pub fn d(&self) -> usize {
        self.form.nrows()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn value(&self, v: &[f64]) -> f64 {
        let v = Mat::from_column_slice(v.len(), 1, v);
        (v.transpose() * &self.form * &v)[(0, 0)]
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        self.value(v) < 0.0
    }

    /// Q/‖Q‖.
    pub fn normalized(&self) -> Mat {
        let (vals, _) = symmetric_eigen(&self.form);
        let top = vals[0].abs().max(vals[vals.len() - 1].abs());
        &self.form / top
    }

    /// Negative eigenspace, a p-plane inside the cone.
    pub fn negative_space(&self) -> Subspace {
        let (_, vecs) = symmetric_eigen(&self.form);
        Subspace::from_orthonormal(vecs.columns(0, self.p).into_owned())
    }

    /// Positive eigenspace, a (d−p)-plane missing the closed cone.
    pub fn positive_space(&self) -> Subspace {
        let (_, vecs) = symmetric_eigen(&self.form);
        Subspace::from_orthonormal(vecs.columns(self.p, self.d() - self.p).into_owned())
    }

    /// Restriction of Q to a subspace, as a symmetric matrix in its basis.
    pub fn restricted(&self, s: &Subspace) -> Mat {
        s.basis().transpose() * &self.form * s.basis()
    }

    /// A⁻ᵀQA⁻¹, whose negative set is A({Q < 0}).
    pub fn pushforward(&self, a: &SquareMatrix) -> Result<Self> {
        if a.d() != self.d() {
            return Err(Error::DimensionMismatch("pushforward by matrix of wrong size".into()));
        }
        let inv = a.inverse()?;
        let f = inv.mat().transpose() * &self.form * inv.mat();
        let f = &f / f.amax();
        Self::new(symmetrize(&f), self.p)
    }

    /// Q + ε‖Q‖·I; shrinks the cone for small ε.
    pub fn shrink(&self, eps: f64) -> Result<Self> {
        let d = self.d();
        let top = self.normalized();
        Self::new(top + Mat::identity(d, d) * eps, self.p)
    }
}

/// Inverse of [B_E | B_F], mapping v to its (e, f) coordinates.
fn split_coordinates(e: &Subspace, f: &Subspace) -> Result<Mat> {
    let (d, p) = (e.ambient(), e.dim());
    let mut m = Mat::zeros(d, d);
    m.columns_mut(0, p).copy_from(e.basis());
    m.columns_mut(p, d - p).copy_from(f.basis());
    m.try_inverse().ok_or(Error::NotTransverse)
}

/// Golden-section maximization of a unimodal function on [lo, hi].
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// max over t ≥ 0 of −λ_max(Q̂₂ − t·Q̂₁); positive certifies closure{Q₁<0} ⊂ {Q₂<0}.
pub fn strict_containment(q1: &QuadraticCone, q2: &QuadraticCone) -> Result<f64> {
    if q1.d() != q2.d() || q1.p() != q2.p() {
        return Err(Error::SignatureMismatch);
    }
    let (a, b) = (q2.normalized(), q1.normalized());
    let f = |u: f64| -lambda_max(&(&a - &b * u.exp()));
    let grid: Vec<f64> = (0..81).map(|i| -20.0 + 0.5 * i as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&u| f(u)).collect();
    let best = (0..grid.len()).max_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap()).unwrap();
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (_, refined) = golden_max(f, lo, hi, 80);
    Ok(refined.max(vals[best]))
}

/// max over t ∈ [0,1] of λ_min((1−t)Q̂₁ + tQ̂₂); positive certifies disjoint closures.
pub fn disjointness(q1: &QuadraticCone, q2: &QuadraticCone) -> Result<f64> {
    if q1.d() != q2.d() {
        return Err(Error::DimensionMismatch("cones in different dimensions".into()));
    }
    let (a, b) = (q1.normalized(), q2.normalized());
    let f = |t: f64| lambda_min(&(&a * (1.0 - t) + &b * t));
    let (_, v) = golden_max(f, 0.0, 1.0, 80);
    Ok(v.max(f(0.0)).max(f(1.0)))
}

/// Finite union of quadratic cones with disjoint closures, containing a p-plane and
/// missing a (d−p)-plane.
#[derive(Clone, Debug, Serialize)]
pub struct Multicone {
    pub p: usize,
    pub components: Vec<QuadraticCone>,
    pub contained_plane: Subspace,
    pub avoided_plane: Subspace,
    /// Smallest pairwise disjointness certificate (∞ for one component).
    pub separation: f64,
}

impl Multicone {
    pub fn new(p: usize, components: Vec<QuadraticCone>) -> Result<Self> {
        Self::with_hints(p, components, &[])
    }

    /// `hints` are extra candidate (d−p)-planes tried for the avoided plane.
    pub fn with_hints(p: usize, components: Vec<QuadraticCone>, hints: &[Subspace]) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::InvalidInput("multicone without components".into()))?;
        let d = first.d();
        if components.iter().any(|c| c.p() != p) {
            return Err(Error::IndexMismatch(format!("components do not all have index {p}")));
        }
        if components.iter().any(|c| c.d() != d) {
            return Err(Error::DimensionMismatch("components in different dimensions".into()));
        }
        let mut separation = f64::INFINITY;
        for i in 0..components.len() {
            for j in i + 1..components.len() {
                let s = disjointness(&components[i], &components[j])?;
                if s <= 0.0 {
                    return Err(Error::NotDisjoint);
                }
                separation = separation.min(s);
            }
        }
        let sum = components.iter().fold(Mat::zeros(d, d), |acc, c| acc + c.normalized());
        let mut candidates: Vec<Subspace> = hints.to_vec();
        candidates.extend(components.iter().map(|c| c.positive_space()));
        let (_, vecs) = symmetric_eigen(&sum);
        candidates.push(Subspace::from_orthonormal(vecs.columns(p, d - p).into_owned()));
        let avoids = |w: &Subspace| w.dim() == d - p && components.iter().all(|c| lambda_min(&c.restricted(w)) > 0.0);
        // Seeded random planes as a fallback, e.g. for arcs around both coordinate axes.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let avoided = candidates
            .into_iter()
            .find(|w| avoids(w))
            .or_else(|| {
                (0..AVOIDED_PLANE_TRIES)
                    .filter_map(|_| Subspace::from_span(&Mat::from_fn(d, d - p, |_, _| rng.gen_range(-1.0..1.0))).ok())
                    .find(|w| avoids(w))
            })
            .ok_or(Error::NoAvoidedPlane)?;
        Ok(Self { p, contained_plane: first.negative_space(), components, avoided_plane: avoided, separation })
    }

    pub fn d(&self) -> usize {
        self.components[0].d()
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        self.components.iter().any(|c| c.contains(v))
    }
}

/// Per-vertex multicones of a common index.
#[derive(Clone, Debug, Serialize)]
pub struct ConeFamily {
    pub p: usize,
    pub vertices: BTreeMap<usize, Multicone>,
}

impl ConeFamily {
    pub fn new(p: usize, vertices: BTreeMap<usize, Multicone>) -> Result<Self> {
        if let Some((v, m)) = vertices.iter().find(|(_, m)| m.p != p) {
            return Err(Error::IndexMismatch(format!("vertex {v} has index {} not {p}", m.p)));
        }
        Ok(Self { p, vertices })
    }
}

/// Matrices attached to the labels of a graph.
#[derive(Clone, Debug)]
pub struct SoficCocycle {
    pub automaton: GeodesicAutomaton,
    pub mats: Vec<SquareMatrix>,
    pub label_names: Vec<String>,
}

impl SoficCocycle {
    pub fn new(automaton: GeodesicAutomaton, mats: Vec<SquareMatrix>, label_names: Vec<String>) -> Result<Self> {
        if automaton.edges.iter().any(|e| e.label >= mats.len()) {
            return Err(Error::AutomatonMismatch("edge label without a matrix".into()));
        }
        let d = mats.first().map(|m| m.d()).ok_or_else(|| Error::InvalidInput("no label matrices".into()))?;
        if mats.iter().any(|m| m.d() != d) {
            return Err(Error::DimensionMismatch("label matrices differ in size".into()));
        }
        Ok(Self { automaton, mats, label_names })
    }

    pub fn from_representation(rep: &Representation, automaton: GeodesicAutomaton) -> Result<Self> {
        let pres = rep.pres();
        let mats = (0..pres.num_letters())
            .map(|l| {
                let m = rep.image(l);
                if rep.unimodular() {
                    m.unimodular()
                } else {
                    m.clone()
                }
            })
            .collect();
        Self::new(automaton, mats, pres.names().to_vec())
    }

    pub fn d(&self) -> usize {
        self.mats[0].d()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EdgeMargin {
    pub tail: usize,
    pub label: String,
    pub head: usize,
    pub component: usize,
    /// Target component at the head receiving the pushforward, if any.
    pub target: Option<usize>,
    pub margin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FamilyVerdict {
    Certified,
    NotCertified,
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyVerification {
    pub edges: Vec<EdgeMargin>,
    pub min_margin: f64,
    pub margin_floor: f64,
    pub verdict: FamilyVerdict,
    pub note: String,
}

/// For every edge C₁ →ˡ C₂ and component Q of M(C₁), A_ℓ·Q must be strictly inside
/// some component of M(C₂).
pub fn verify_family(cocycle: &SoficCocycle, fam: &ConeFamily, margin_floor: f64) -> Result<FamilyVerification> {
    let auto = &cocycle.automaton;
    for v in &auto.vertices {
        if !fam.vertices.contains_key(v) {
            return Err(Error::AutomatonMismatch(format!("vertex {v} has no multicone")));
        }
    }
    for (v, m) in &fam.vertices {
        if !auto.vertices.contains(v) {
            return Err(Error::AutomatonMismatch(format!("family vertex {v} is not in the automaton")));
        }
        if m.d() != cocycle.d() {
            return Err(Error::DimensionMismatch(format!("multicone at {v} has the wrong dimension")));
        }
    }
    let jobs: Vec<(usize, usize)> = auto
        .edges
        .iter()
        .enumerate()
        .flat_map(|(ei, e)| (0..fam.vertices[&e.tail].components.len()).map(move |c| (ei, c)))
        .collect();
    let rows: Vec<EdgeMargin> = jobs
        .par_iter()
        .map(|&(ei, c)| {
            let e = auto.edges[ei];
            let pushed = fam.vertices[&e.tail].components[c].pushforward(&cocycle.mats[e.label])?;
            let margins: Vec<f64> = fam.vertices[&e.head]
                .components
                .iter()
                .map(|t| strict_containment(&pushed, t))
                .collect::<Result<_>>()?;
            if margins.iter().filter(|&&m| m > 0.0).count() > 1 {
                return Err(Error::Internal(format!(
                    "pushforward along edge {}->{} lies in two disjoint components",
                    e.tail, e.head
                )));
            }
            let (target, margin) = margins
                .iter()
                .copied()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            Ok(EdgeMargin {
                tail: e.tail,
                label: cocycle.label_names.get(e.label).cloned().unwrap_or_else(|| e.label.to_string()),
                head: e.head,
                component: c,
                target: (margin > 0.0).then_some(target),
                margin,
            })
        })
        .collect::<Result<_>>()?;
    let min_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let verdict = if !rows.is_empty() && min_margin >= margin_floor {
        FamilyVerdict::Certified
    } else {
        FamilyVerdict::NotCertified
    };
    Ok(FamilyVerification {
        edges: rows,
        min_margin,
        margin_floor,
        verdict,
        note: "quadratic components only: failure to certify does not disprove domination".into(),
    })
}

// ---------------------------------------------------------------------------
// Synthesis

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub p: usize,
    /// Walk lengths are drawn from [R/2, R].
    pub radius: usize,
    pub slopes: Vec<f64>,
    pub margin_floor: f64,
    pub samples_per_vertex: usize,
    pub cluster_threshold: f64,
    pub seed: u64,
}

pub fn default_slopes() -> Vec<f64> {
    (0..16).map(|i| 10f64.powf(-1.0 + 2.0 * i as f64 / 15.0)).collect()
}

impl SynthConfig {
    pub fn new(p: usize, radius: usize) -> Self {
        Self {
            p,
            radius,
            slopes: default_slopes(),
            margin_floor: DEFAULT_MARGIN_FLOOR,
            samples_per_vertex: 256,
            cluster_threshold: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Synthesis {
    pub family: ConeFamily,
    pub verification: FamilyVerification,
    pub candidate: String,
    pub candidates_tried: usize,
}

struct VertexData {
    cu: Vec<Subspace>,
    cs: Vec<Subspace>,
}

/// Sample U_p of walk products ending at v and S_{d−p} of walk products starting at v.
fn sample_vertex(cocycle: &SoficCocycle, v: usize, cfg: &SynthConfig, factors: &[Factor], degrees: &[usize], rng: &mut ChaCha8Rng) -> VertexData {
    let auto = &cocycle.automaton;
    let d = cocycle.d();
    let (mut cu, mut cs) = (Vec::new(), Vec::new());
    let lo = (cfg.radius / 2).max(1);
    for _ in 0..cfg.samples_per_vertex {
        let len = rng.gen_range(lo..=cfg.radius.max(lo));
        // Backward walk ending at v: labels collected in reverse.
        let mut labels = Vec::with_capacity(len);
        let mut cur = v;
        for _ in 0..len {
            let ins: Vec<_> = auto.in_edges(cur).collect();
            if ins.is_empty() {
                break;
            }
            let e = ins[rng.gen_range(0..ins.len())];
            labels.push(e.label);
            cur = e.tail;
        }
        let mut prod = ScaledProduct::identity(d, degrees);
        for &l in labels.iter().rev() {
            prod.push_left(&factors[l]);
        }
        if let Ok(u) = prod.u_space(cfg.p, TOL_GAP) {
            cu.push(u);
        }
        let mut prod = ScaledProduct::identity(d, degrees);
        let mut cur = v;
        for _ in 0..len {
            let outs: Vec<_> = auto.out_edges(cur).collect();
            if outs.is_empty() {
                break;
            }
            let e = outs[rng.gen_range(0..outs.len())];
            prod.push_left(&factors[e.label]);
            cur = e.head;
        }
        if let Ok(s) = prod.s_space(cfg.p, TOL_GAP) {
            cs.push(s);
        }
    }
    VertexData { cu, cs }
}

/// Single-linkage clusters at the given Grassmann distance.
fn clusters(points: &[Subspace], threshold: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if grassmann_distance(&points[i], &points[j]).unwrap_or(1.0) <= threshold {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = root(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Dominant k-eigenspace of the mean projector.
fn mean_subspace(points: &[&Subspace]) -> Subspace {
    let d = points[0].ambient();
    let k = points[0].dim();
    let mean = points.iter().fold(Mat::zeros(d, d), |acc, s| acc + s.projector()) / points.len() as f64;
    let (_, vecs) = symmetric_eigen(&mean);
    Subspace::from_orthonormal(vecs.columns(d - k, k).into_owned())
}

struct ComponentPlan {
    e: Subspace,
    f: Subspace,
    s_lo: f64,
    s_hi: f64,
}

/// sup over v ∈ X of |f(v)|/|e(v)| (upper = true) or inf (upper = false).
fn slope_of(m_inv: &Mat, x: &Subspace, p: usize, upper: bool) -> f64 {
    let d = m_inv.nrows();
    let c = m_inv * x.basis();
    let ce = c.rows(0, p).into_owned();
    let cf = c.rows(p, d - p).into_owned();
    if upper {
        match ce.try_inverse() {
            Some(inv) => op_norm(&(cf * inv)),
            None => f64::INFINITY,
        }
    } else {
        match cf.try_inverse() {
            Some(inv) => 1.0 / op_norm(&(ce * inv)).max(f64::MIN_POSITIVE),
            None => 0.0,
        }
    }
}

fn plan_vertex(data: &VertexData, d: usize, p: usize, threshold: f64) -> Vec<ComponentPlan> {
    if data.cu.is_empty() {
        let e = Subspace::coordinate(d, &(0..p).collect::<Vec<_>>());
        let f = e.orthocomplement();
        return vec![ComponentPlan { e, f, s_lo: 0.0, s_hi: f64::INFINITY }];
    }
    let cs_reps: Vec<Subspace> = clusters(&data.cs, threshold)
        .iter()
        .map(|g| mean_subspace(&g.iter().map(|&i| &data.cs[i]).collect::<Vec<_>>()))
        .collect();
    clusters(&data.cu, threshold)
        .iter()
        .map(|g| {
            let members: Vec<&Subspace> = g.iter().map(|&i| &data.cu[i]).collect();
            let e = mean_subspace(&members);
            let f = cs_reps
                .iter()
                .max_by(|a, b| angle(&e, a).partial_cmp(&angle(&e, b)).unwrap())
                .cloned()
                .unwrap_or_else(|| e.orthocomplement());
            let (s_lo, s_hi) = match split_coordinates(&e, &f) {
                Ok(m_inv) => (
                    members.iter().map(|u| slope_of(&m_inv, u, p, true)).fold(0.0, f64::max),
                    data.cs.iter().map(|s| slope_of(&m_inv, s, p, false)).fold(f64::INFINITY, f64::min),
                ),
                Err(_) => (f64::INFINITY, 0.0),
            };
            ComponentPlan { e, f, s_lo, s_hi }
        })
        .collect()
}

fn build_family(plans: &BTreeMap<usize, Vec<ComponentPlan>>, p: usize, slope: impl Fn(&ComponentPlan) -> f64) -> Result<ConeFamily> {
    let mut vertices = BTreeMap::new();
    for (&v, comps) in plans {
        let cones = comps
            .iter()
            .map(|c| QuadraticCone::around(&c.e, &c.f, slope(c)))
            .collect::<Result<Vec<_>>>()?;
        let hints: Vec<Subspace> = comps.iter().map(|c| c.f.clone()).collect();
        vertices.insert(v, Multicone::with_hints(p, cones, &hints)?);
    }
    ConeFamily::new(p, vertices)
}

/// Smallest slope s such that the closure of `q` lies inside the cone of slope s around E
/// (transverse to F), up to `s_max`.
fn required_slope(q: &QuadraticCone, e: &Subspace, f: &Subspace, s_max: f64) -> Result<f64> {
    let fits = |s: f64| -> Result<bool> { Ok(strict_containment(q, &QuadraticCone::around(e, f, s)?)? > 0.0) };
    if !fits(s_max)? {
        return Ok(f64::INFINITY);
    }
    let (mut lo, mut hi) = ((1e-8f64).ln(), s_max.ln());
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if fits(mid.exp())? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.exp())
}

/// Grow each component's slope from the sample hull until every pushforward fits with the
/// given relative slack.
fn propagate(cocycle: &SoficCocycle, plans: &BTreeMap<usize, Vec<ComponentPlan>>, p: usize, slack: f64) -> Result<ConeFamily> {
    const S_MAX: f64 = 1e4;
    let mut slopes: BTreeMap<usize, Vec<f64>> = plans
        .iter()
        .map(|(&v, cs)| (v, cs.iter().map(|c| (c.s_lo.max(1e-6) * (1.0 + slack)).min(S_MAX)).collect()))
        .collect();
    for _ in 0..200 {
        let mut changed = false;
        for e in &cocycle.automaton.edges {
            for (ci, c) in plans[&e.tail].iter().enumerate() {
                let cone = QuadraticCone::around(&c.e, &c.f, slopes[&e.tail][ci])?;
                let pushed = cone.pushforward(&cocycle.mats[e.label])?;
                let axis = pushed.negative_space();
                let targets = &plans[&e.head];
                let j = (0..targets.len())
                    .min_by(|&a, &b| {
                        let da = grassmann_distance(&axis, &targets[a].e).unwrap_or(1.0);
                        let db = grassmann_distance(&axis, &targets[b].e).unwrap_or(1.0);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                let need = required_slope(&pushed, &targets[j].e, &targets[j].f, S_MAX)? * (1.0 + slack);
                if !need.is_finite() || need > S_MAX {
                    return Err(Error::NotCertified);
                }
                let cur = &mut slopes.get_mut(&e.head).unwrap()[j];
                if need > *cur {
                    *cur = need;
                    changed = true;
                }
            }
        }
        if !changed {
            return build_family(plans, p, |c: &ComponentPlan| {
                let (v, i) = plans
                    .iter()
                    .flat_map(|(v, cs)| cs.iter().enumerate().map(move |(i, x)| (v, i, x)))
                    .find(|(_, _, x)| std::ptr::eq(*x, c))
                    .map(|(v, i, _)| (*v, i))
                    .unwrap();
                slopes[&v][i]
            });
        }
    }
    Err(Error::NotCertified)
}

/// Search for a certified family of quadratic multicones built around walk samples.
pub fn synthesize_family(cocycle: &SoficCocycle, cfg: &SynthConfig) -> Result<Synthesis> {
    let d = cocycle.d();
    if cfg.p == 0 || cfg.p >= d {
        return Err(Error::IndexMismatch(format!("index {} outside 1..{d}", cfg.p)));
    }
    let degrees = degrees_for_gap(d, cfg.p);
    let factors: Vec<Factor> = cocycle.mats.iter().map(|m| Factor::new(m.mat(), &degrees)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut plans = BTreeMap::new();
    for &v in &cocycle.automaton.vertices {
        let data = sample_vertex(cocycle, v, cfg, &factors, &degrees, &mut rng);
        let pl = plan_vertex(&data, d, cfg.p, cfg.cluster_threshold);
        plans.insert(v, pl);
    }

    let mut candidates: Vec<(String, Box<dyn Fn(&ComponentPlan) -> f64>)> = Vec::new();
    for &s in &cfg.slopes {
        candidates.push((format!("uniform slope {s:.4}"), Box::new(move |_| s)));
    }
    for tau in [0.5, 0.35, 0.65, 0.2, 0.8, 0.1, 0.9] {
        candidates.push((
            format!("adaptive slope, tau {tau}"),
            Box::new(move |c: &ComponentPlan| {
                if c.s_lo > 0.0 && c.s_hi.is_finite() && c.s_lo < c.s_hi {
                    c.s_lo.powf(1.0 - tau) * c.s_hi.powf(tau)
                } else {
                    1.0
                }
            }),
        ));
    }

    let mut best: Option<FamilyVerification> = None;
    let mut tried = 0;
    let mut families: Vec<(String, Result<ConeFamily>)> = candidates
        .iter()
        .map(|(name, slope)| (name.clone(), build_family(&plans, cfg.p, slope)))
        .collect();
    for slack in [0.05, 0.2, 0.01] {
        families.push((format!("propagated slopes, slack {slack}"), propagate(cocycle, &plans, cfg.p, slack)));
    }
    for (name, fam) in families {
        let Ok(fam) = fam else { continue };
        tried += 1;
        let ver = verify_family(cocycle, &fam, cfg.margin_floor)?;
        if ver.verdict == FamilyVerdict::Certified {
            return Ok(Synthesis { family: fam, verification: ver, candidate: name, candidates_tried: tried });
        }
        if best.as_ref().map_or(true, |b| ver.min_margin > b.min_margin) {
            best = Some(ver);
        }
    }
    let (best_min_margin, table) = best.map(|b| (b.min_margin, b.edges)).unwrap_or((f64::NEG_INFINITY, vec![]));
    Err(Error::NoCandidateCertified { best_min_margin, table })
}

// ---------------------------------------------------------------------------
// Limits through cones

#[derive(Clone, Debug, Serialize)]
pub struct ConeLimitCheck {
    pub depth: usize,
    pub subspace: Subspace,
    /// Distance of the last iterate to the limit map value.
    pub residual: f64,
    /// Fitted per-letter contraction of the distance to the limit.
    pub ratio: f64,
}

const LOOKAHEAD: usize = 12;

/// Iterate ρ(γ_n)·P_n with P_n a p-plane inside the multicone at the vertex reached by
/// the tail of the ray, and compare with the limit map.
pub fn cone_limit_check(
    rep: &Representation,
    automaton: &GeodesicAutomaton,
    fam: &ConeFamily,
    ray: &BoundaryRay,
    depth: usize,
    seed: Option<u64>,
) -> Result<ConeLimitCheck> {
    let recurrent = crate::group::recurrent_subgraph(automaton)?;
    let cocycle = SoficCocycle::from_representation(rep, recurrent)?;
    if verify_family(&cocycle, fam, DEFAULT_MARGIN_FLOOR)?.verdict != FamilyVerdict::Certified {
        return Err(Error::NotCertified);
    }
    let start = automaton.start.ok_or_else(|| Error::AutomatonMismatch("automaton has no start vertex".into()))?;
    let p = fam.p;
    let target = limit_map(rep, p, ray, depth.max(60))?.subspace;
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let mut errors = Vec::with_capacity(depth);
    let mut last = None;
    for n in 1..=depth {
        let mut v = start;
        for i in (n..n + LOOKAHEAD).rev() {
            v = automaton
                .step(v, ray.letter(i))
                .ok_or_else(|| Error::AutomatonMismatch("ray is not readable in the automaton".into()))?;
        }
        let m = fam
            .vertices
            .get(&v)
            .ok_or_else(|| Error::AutomatonMismatch(format!("vertex {v} has no multicone")))?;
        let mut plane = plane_inside(&m.components[0], rng.as_mut());
        for i in (0..n).rev() {
            plane = plane.image(cocycle.mats[ray.letter(i)].mat())?;
        }
        errors.push(grassmann_distance(&plane, &target)?);
        last = Some(plane);
    }
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 1e-13)
        .map(|(i, &e)| (i as f64, e.ln()))
        .collect();
    let ratio = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        (sxy / sxx).exp()
    } else {
        0.0
    };
    Ok(ConeLimitCheck { depth, subspace: last.unwrap(), residual: *errors.last().unwrap(), ratio })
}

/// The negative eigenspace, optionally tilted at random while staying inside the cone.
fn plane_inside(q: &QuadraticCone, rng: Option<&mut ChaCha8Rng>) -> Subspace {
    let base = q.negative_space();
    let Some(rng) = rng else { return base };
    let (d, p) = (q.d(), q.p());
    let w = Mat::from_fn(d, p, |_, _| rng.gen_range(-1.0..1.0));
    let mut t = 0.5;
    for _ in 0..60 {
        if let Ok(s) = Subspace::from_span(&(base.basis() + &w * t)) {
            if lambda_max(&q.restricted(&s)) < 0.0 {
                return s;
            }
        }
        t *= 0.5;
    }
    base
}
