#![allow(dead_code)]

use anosov_core::matgeo::*;
use nalgebra::QR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_mat(r: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| r.gen_range(-1.0..1.0))
}

pub fn orthogonal(r: &mut impl Rng, d: usize) -> Mat {
    loop {
        let m = uniform_mat(r, d, d);
        if m.determinant().abs() > 1e-3 {
            return QR::new(m).q();
        }
    }
}

/// O₁·diag(σ)·O₂ with the given singular values.
pub fn with_sigmas(r: &mut impl Rng, sigmas: &[f64]) -> SquareMatrix {
    let d = sigmas.len();
    SquareMatrix::new(orthogonal(r, d) * diag(sigmas) * orthogonal(r, d).transpose()).unwrap()
}

/// log σ uniform in [−2, 2].
pub fn random_gl(r: &mut impl Rng, d: usize) -> SquareMatrix {
    let s: Vec<f64> = (0..d).map(|_| r.gen_range(-2.0f64..2.0).exp()).collect();
    with_sigmas(r, &s)
}

/// A random matrix with σ_{p+1}/σ_p ≤ 1/2.
pub fn random_gapped(r: &mut impl Rng, d: usize, p: usize) -> SquareMatrix {
    let mut s: Vec<f64> = (0..d).map(|_| r.gen_range(-1.5f64..1.5)).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let jump = r.gen_range(0.7f64..2.5);
    for x in s.iter_mut().take(p) {
        *x += jump;
    }
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    with_sigmas(r, &s.iter().map(|x| x.exp()).collect::<Vec<_>>())
}

pub fn random_subspace(r: &mut impl Rng, d: usize, p: usize) -> Subspace {
    loop {
        if let Ok(s) = Subspace::from_span(&uniform_mat(r, d, p)) {
            return s;
        }
    }
}

/// Graph of a random map P → P^⊥ with operator norm at most `size`.
pub fn nearby(r: &mut impl Rng, p: &Subspace, size: f64) -> Subspace {
    let d = p.ambient();
    let perp = p.orthocomplement();
    let mut l = uniform_mat(r, d - p.dim(), p.dim());
    let n = op_norm(&l);
    if n > 0.0 {
        l *= r.gen_range(0.0..size) / n;
    }
    Subspace::from_span(&(p.basis() + perp.basis() * l)).unwrap()
}

pub fn pick_dp(r: &mut impl Rng) -> (usize, usize) {
    let d = [2, 3, 4, 6][r.gen_range(0..4)];
    (d, r.gen_range(1..d))
}

pub fn rotation_small(r: &mut impl Rng, d: usize, max_angle: f64) -> Mat {
    // exp of a skew matrix with operator norm ≤ max_angle.
    let m = uniform_mat(r, d, d);
    let mut k = &m - m.transpose();
    let n = op_norm(&k);
    if n > 0.0 {
        k *= r.gen_range(0.0..max_angle) / n;
    }
    k.exp()
}

const SLACK: f64 = 1e-9;

fn sv(m: &SquareMatrix) -> Vec<f64> {
    singular_values(m.mat())
}

fn le(a: f64, b: f64, scale: f64, what: &str) -> Result<(), String> {
    if a <= b + SLACK * scale.max(1.0) {
        Ok(())
    } else {
        Err(format!("{what}: {a} > {b}"))
    }
}

/// Lemma on singular values of products: m(A)σ_p(B), σ_p(A)m(B) ≤ σ_p(AB) ≤ ‖A‖σ_p(B), σ_p(A)‖B‖.
pub fn sing_value_change(r: &mut impl Rng) -> Result<(), String> {
    let (d, p) = pick_dp(r);
    let (a, b) = (random_gl(r, d), random_gl(r, d));
    let (sa, sb, sab) = (sv(&a), sv(&b), sv(&a.mul(&b)));
    let sp = sab[p - 1];
    let scale = sa[0] * sb[0];
    le(sa[d - 1] * sb[p - 1], sp, scale, "m(A)σ_p(B)")?;
    le(sa[p - 1] * sb[d - 1], sp, scale, "σ_p(A)m(B)")?;
    le(sp, sa[0] * sb[p - 1], scale, "‖A‖σ_p(B)")?;
    le(sp, sa[p - 1] * sb[0], scale, "σ_p(A)‖B‖")
}

/// ‖Av‖ ≥ σ_p(A)·sin∠(v, S_{d−p}(A)).
pub fn pythagoras(r: &mut impl Rng) -> Result<(), String> {
    let (d, p) = pick_dp(r);
    let a = random_gapped(r, d, p);
    let (_, s) = singular_spaces(&a, p).map_err(|e| e.to_string())?;
    let v = random_subspace(r, d, 1);
    let av = (a.mat() * v.basis()).norm();
    let sig = sv(&a);
    le(sig[p - 1] * angle(&v, &s).sin(), av, sig[0], "pythagoras")
}

fn kappa(b: &SquareMatrix) -> f64 {
    let s = sv(b);
    s[0] / s[s.len() - 1]
}

fn u_p(a: &SquareMatrix, p: usize) -> Option<Subspace> {
    singular_spaces(a, p).ok().map(|x| x.0)
}

/// d(U_p(A), U_p(AB)) ≤ ‖B‖‖B⁻¹‖·σ_{p+1}/σ_p(A).
pub fn no_change_right(r: &mut impl Rng) -> Result<(), String> {
    let (d, p) = pick_dp(r);
    let (a, b) = (random_gapped(r, d, p), random_gl(r, d));
    let (Some(ua), Some(uab)) = (u_p(&a, p), u_p(&a.mul(&b), p)) else { return Ok(()) };
    let dist = grassmann_distance(&ua, &uab).unwrap();
    le(dist, kappa(&b) * gap_ratio(&a, p).unwrap(), 1.0, "U_p(AB) vs U_p(A)")
}

/// d(B·U_p(A), U_p(BA)) ≤ ‖B‖‖B⁻¹‖·σ_{p+1}/σ_p(A).
pub fn slow_change(r: &mut impl Rng) -> Result<(), String> {
    let (d, p) = pick_dp(r);
    let (a, b) = (random_gapped(r, d, p), random_gl(r, d));
    let (Some(ua), Some(uba)) = (u_p(&a, p), u_p(&b.mul(&a), p)) else { return Ok(()) };
    let dist = grassmann_distance(&ua.image(b.mat()).unwrap(), &uba).unwrap();
    le(dist, kappa(&b) * gap_ratio(&a, p).unwrap(), 1.0, "B·U_p(A) vs U_p(BA)")
}

/// d(A(P), U_p(A)) ≤ (σ_{p+1}/σ_p)(A) / sin∠(P, S_{d−p}(A)).
pub fn attractor(r: &mut impl Rng) -> Result<(), String> {
    let (d, p) = pick_dp(r);
    let a = random_gapped(r, d, p);
    let (u, s) = singular_spaces(&a, p).unwrap();
    let pl = random_subspace(r, d, p);
    let sin = angle(&pl, &s).sin();
    if sin < 1e-6 {
        return Ok(());
    }
    let dist = grassmann_distance(&pl.image(a.mat()).unwrap(), &u).unwrap();
    le(dist, gap_ratio(&a, p).unwrap() / sin, 1.0, "attractor")
}

/// σ_p(AB) ≥ sin α·σ_p(A)σ_p(B), α = ∠(U_p(B), S_{d−p}(A)).
pub fn no_cancellation(r: &mut impl Rng) -> Result<(), String> {
    let (d, p) = pick_dp(r);
    let (a, b) = (random_gapped(r, d, p), random_gapped(r, d, p));
    let (_, sa_space) = singular_spaces(&a, p).unwrap();
    let (ub, _) = singular_spaces(&b, p).unwrap();
    let alpha = angle(&ub, &sa_space);
    let (sa, sb, sab) = (sv(&a), sv(&b), sv(&a.mul(&b)));
    le(alpha.sin() * sa[p - 1] * sb[p - 1], sab[p - 1], sa[0] * sb[0], "no cancellation")
}

/// Plücker distance and angle inequalities.
pub fn plucker(r: &mut impl Rng) -> Result<(), String> {
    let (d, p) = pick_dp(r);
    let (pp, qq) = (random_subspace(r, d, p), random_subspace(r, d, p));
    let (wp, wq) = (plucker_embed(&pp), plucker_embed(&qq));
    let c = wp.dot(&wq).abs().min(1.0);
    let d_iota = (1.0 - c * c).max(0.0).sqrt();
    le(grassmann_distance(&pp, &qq).unwrap(), d_iota, 1.0, "Plücker distance")?;
    // sin∠(ι(P), ι(Q)^⊥) = |⟨ι(P), ι(Q)⟩|.
    let k = p.min(d - p) as i32;
    le(angle(&pp, &qq.orthocomplement()).sin().powi(k), c, 1.0, "Plücker angle")
}

/// d(U_p(AB), U_p(A)) ≤ (σ_{p+1}/σ_p)(A)·[sin∠(U_p(B), S_{d−p}(A))]^{−min(p,d−p)}.
pub fn product_space_bound(r: &mut impl Rng) -> Result<(), String> {
    let (d, p) = pick_dp(r);
    let (a, b) = (random_gapped(r, d, p), random_gapped(r, d, p));
    let (ua, sa) = singular_spaces(&a, p).unwrap();
    let (ub, _) = singular_spaces(&b, p).unwrap();
    let Some(uab) = u_p(&a.mul(&b), p) else { return Ok(()) };
    let sin = angle(&ub, &sa).sin();
    if sin < 1e-6 {
        return Ok(());
    }
    let bound = gap_ratio(&a, p).unwrap() * sin.powi(-(p.min(d - p) as i32));
    le(grassmann_distance(&uab, &ua).unwrap(), bound, 1.0, "product space bound")
}

/// d(P₁,P₂) ≤ ‖L₁ − L₂‖ ≤ 4·d(P₁,P₂) for P_i within 1/√2 of P.
pub fn distance_and_norm(r: &mut impl Rng) -> Result<(), String> {
    let (d, p) = pick_dp(r);
    let pl = random_subspace(r, d, p);
    let (p1, p2) = (nearby(r, &pl, 0.99), nearby(r, &pl, 0.99));
    if grassmann_distance(&p1, &pl).unwrap() >= 0.7 || grassmann_distance(&p2, &pl).unwrap() >= 0.7 {
        return Ok(());
    }
    let l = op_norm(&(graph_map(&pl, &p1).unwrap() - graph_map(&pl, &p2).unwrap()));
    let dist = grassmann_distance(&p1, &p2).unwrap();
    le(dist, l, 1.0, "d ≤ ‖L₁−L₂‖")?;
    le(l, 4.0 * dist, 1.0, "‖L₁−L₂‖ ≤ 4d")
}

/// Expansion with b = 1/4 when Q = P^⊥ and AQ = (AP)^⊥, for P_i within 0.05 of P.
pub fn expansion(r: &mut impl Rng) -> Result<(), String> {
    let (d, p) = pick_dp(r);
    let (o1, o2) = (orthogonal(r, d), orthogonal(r, d));
    // Blocks with m(A|_P) ≥ ‖A|_Q‖ keep the images inside the graph chart.
    let mut s: Vec<f64> = (0..d).map(|_| r.gen_range(-2.0f64..2.0)).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let block_p = orthogonal(r, p) * diag(&s[..p].iter().map(|x| x.exp()).collect::<Vec<_>>()) * orthogonal(r, p);
    let block_q = orthogonal(r, d - p) * diag(&s[p..].iter().map(|x| x.exp()).collect::<Vec<_>>()) * orthogonal(r, d - p);
    let mut blocks = Mat::zeros(d, d);
    blocks.view_mut((0, 0), (p, p)).copy_from(&block_p);
    blocks.view_mut((p, p), (d - p, d - p)).copy_from(&block_q);
    let a = &o2 * blocks * o1.transpose();
    let pl = Subspace::from_span(&o1.columns(0, p).into_owned()).unwrap();
    let q = pl.orthocomplement();
    let (p1, p2) = (nearby(r, &pl, 0.05), nearby(r, &pl, 0.05));
    let (norm_p, _) = restricted_norms(&a, &pl);
    let (_, conorm_q) = restricted_norms(&a, &q);
    let lhs = grassmann_distance(&p1.image(&a).unwrap(), &p2.image(&a).unwrap()).unwrap();
    let rhs = 0.25 * conorm_q / norm_p * grassmann_distance(&p1, &p2).unwrap();
    le(rhs, lhs, 1.0, "expansion")
}

/// σ₁(Λ^p A) = σ₁⋯σ_p and σ₂(Λ^p A) = σ₁⋯σ_{p−1}σ_{p+1}, relative 1e-8.
pub fn exterior_identities(r: &mut impl Rng) -> Result<(), String> {
    let (d, p) = pick_dp(r);
    let a = random_gl(r, d);
    let s = sv(&a);
    let e = singular_values(&exterior_mat(a.mat(), p));
    let top: f64 = s[..p].iter().product();
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
    if rel(e[0], top) > 1e-8 {
        return Err(format!("σ₁(Λ^p A) = {} vs {}", e[0], top));
    }
    if e.len() > 1 {
        let second = top / s[p - 1] * s[p];
        if rel(e[1], second) > 1e-8 {
            return Err(format!("σ₂(Λ^p A) = {} vs {}", e[1], second));
        }
    }
    Ok(())
}

/// d(P,Q) = cos∠(P^⊥, Q) and d(P,Q) = sin β₁, to 1e-10.
pub fn grassmann_identities(r: &mut impl Rng) -> Result<(), String> {
    let (d, p) = pick_dp(r);
    let (pp, qq) = (random_subspace(r, d, p), random_subspace(r, d, p));
    let dist = grassmann_distance(&pp, &qq).unwrap();
    let via_perp = angle(&pp.orthocomplement(), &qq).cos();
    let beta1 = canonical_angles(&pp, &qq).unwrap()[0];
    if (dist - via_perp).abs() > 1e-10 {
        return Err(format!("d = {dist} but cos∠(P⊥,Q) = {via_perp}"));
    }
    if (dist - beta1.sin()).abs() > 1e-10 {
        return Err(format!("d = {dist} but sin β₁ = {}", beta1.sin()));
    }
    if dist + 1e-12 < angle(&pp, &qq).sin() {
        return Err("d < sin∠(P,Q)".into());
    }
    Ok(())
}

pub type Check = fn(&mut ChaCha8Rng) -> Result<(), String>;

pub const APPENDIX: &[(&str, Check)] = &[
    ("singular values of products", sing_value_change),
    ("pythagoras", pythagoras),
    ("U_p(AB) near U_p(A)", no_change_right),
    ("B·U_p(A) near U_p(BA)", slow_change),
    ("attraction to U_p", attractor),
    ("no cancellation", no_cancellation),
    ("Plücker inequalities", plucker),
    ("U_p(AB) bound via transversality", product_space_bound),
    ("graph-map sandwich", distance_and_norm),
    ("expansion, orthogonal case", expansion),
    ("exterior-power singular values", exterior_identities),
    ("Grassmann identities", grassmann_identities),
];

/// Cayley-graph ball sizes from a faithful action, independent of the group module.
pub fn modular_group_sphere_sizes(radius: usize) -> Vec<usize> {
    use std::collections::HashSet;
    type M = [i64; 4];
    let mul = |x: &M, y: &M| -> M {
        [
            x[0] * y[0] + x[1] * y[2],
            x[0] * y[1] + x[1] * y[3],
            x[2] * y[0] + x[3] * y[2],
            x[2] * y[1] + x[3] * y[3],
        ]
    };
    let canon = |m: M| -> M {
        let first = m.iter().find(|&&x| x != 0).copied().unwrap_or(1);
        if first < 0 {
            [-m[0], -m[1], -m[2], -m[3]]
        } else {
            m
        }
    };
    // PSL(2,ℤ) = ⟨a, b | a³ = b² = 1⟩ with generators a, a⁻¹, b.
    let a: M = [0, -1, 1, 1];
    let a_inv: M = [1, 1, -1, 0];
    let b: M = [0, -1, 1, 0];
    let gens = [a, a_inv, b];
    let mut seen: HashSet<M> = HashSet::new();
    let id = canon([1, 0, 0, 1]);
    seen.insert(id);
    let mut frontier = vec![id];
    let mut sizes = vec![1];
    for _ in 0..radius {
        let mut next = Vec::new();
        for g in &frontier {
            for s in &gens {
                let h = canon(mul(g, s));
                if seen.insert(h) {
                    next.push(h);
                }
            }
        }
        sizes.push(next.len());
        frontier = next;
    }
    sizes
}

/// Free reduction over letters 2i ↔ 2i+1, written independently of the library.
pub fn free_reduce(w: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for &x in w {
        if out.last() == Some(&(x ^ 1)) {
            out.pop();
        } else {
            out.push(x);
        }
    }
    out
}

pub fn reduced_words(rank: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut all = vec![vec![]];
    let mut layer = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &layer {
            for x in 0..2 * rank {
                let mut v: Vec<usize> = w.clone();
                v.push(x);
                if free_reduce(&v).len() == v.len() {
                    next.push(v);
                }
            }
        }
        all.extend(next.iter().cloned());
        layer = next;
    }
    all
}

/// Number of distinct truncated cones {η : |η| ≤ r, |ηγ| = |η| + |γ|} over |γ| ≤ r in F_rank.
pub fn free_group_cone_count(rank: usize, r: usize) -> usize {
    use std::collections::BTreeSet;
    let words = reduced_words(rank, r);
    let cones: BTreeSet<BTreeSet<Vec<usize>>> = words
        .iter()
        .map(|g| {
            words
                .iter()
                .filter(|e| {
                    let prod: Vec<usize> = e.iter().chain(g.iter()).copied().collect();
                    free_reduce(&prod).len() == e.len() + g.len()
                })
                .cloned()
                .collect()
        })
        .collect();
    cones.len()
}

/// Random quadratic cone around E transverse to F, kept with the data needed to sample it.
pub struct SampledCone {
    pub cone: anosov_core::multicone::QuadraticCone,
    pub e: Subspace,
    pub f: Subspace,
    pub slope: f64,
}

impl SampledCone {
    pub fn new(e: Subspace, f: Subspace, slope: f64) -> Self {
        Self { cone: anosov_core::multicone::QuadraticCone::around(&e, &f, slope).unwrap(), e, f, slope }
    }

    pub fn random(r: &mut impl Rng, d: usize, p: usize) -> Self {
        let e = random_subspace(r, d, p);
        let f = random_subspace(r, d, d - p);
        Self::new(e, f, r.gen_range(0.2..3.0))
    }

    pub fn near(r: &mut impl Rng, other: &SampledCone) -> Self {
        let e = nearby(r, &other.e, 0.1);
        let f = nearby(r, &other.f, 0.1);
        Self::new(e, f, other.slope * r.gen_range(0.5..2.0))
    }

    /// e + f with |f| < slope·|e| in the orthonormal coordinates of E and F; half of the
    /// samples hug the boundary, where escaping directions live.
    pub fn inside(&self, r: &mut impl Rng) -> Vec<f64> {
        let x = uniform_mat(r, self.e.dim(), 1);
        let mut y = uniform_mat(r, self.f.dim(), 1);
        let ny = y.norm().max(1e-300);
        let frac = if r.gen_bool(0.5) { r.gen_range(0.0..1.0) } else { r.gen_range(0.98..1.0) };
        y *= self.slope * x.norm() * frac / ny;
        let v = self.e.basis() * x + self.f.basis() * y;
        v.iter().copied().collect()
    }
}

#[derive(Debug, Default)]
pub struct OracleTally {
    pub pairs: usize,
    pub certified: usize,
    /// Containment or disjointness certified but a sampled witness contradicts it.
    pub unsound: usize,
    /// Margin below −threshold but no sampled witness of non-containment.
    pub missed: usize,
}

/// Compare strict_containment and disjointness with direction sampling.
pub fn containment_oracle(r: &mut impl Rng, pairs: usize, dirs: usize, threshold: f64) -> OracleTally {
    use anosov_core::multicone::{disjointness, strict_containment};
    let mut t = OracleTally { pairs, ..Default::default() };
    for i in 0..pairs {
        let (d, p) = pick_dp(r);
        let q1 = SampledCone::random(r, d, p);
        let q2 = if i % 2 == 0 { SampledCone::near(r, &q1) } else { SampledCone::random(r, d, p) };
        let margin = strict_containment(&q1.cone, &q2.cone).unwrap();
        let sep = disjointness(&q1.cone, &q2.cone).unwrap();
        let mut escaped = false;
        let mut shared = false;
        let mut best: Option<(f64, Vec<f64>)> = None;
        for k in 0..dirs {
            let v: Vec<f64> = if k % 2 == 0 { q1.inside(r) } else { uniform_mat(r, d, 1).iter().copied().collect() };
            if q1.cone.contains(&v) {
                escaped |= !q2.cone.contains(&v);
                shared |= q2.cone.contains(&v);
                let s = escape_score(&q2.cone, &v);
                if best.as_ref().map_or(true, |(b, _)| s > *b) {
                    best = Some((s, v));
                }
            }
        }
        if margin < -threshold && !escaped {
            if let Some((s, v)) = best {
                escaped = ascend_escape(r, &q1.cone, &q2.cone, s, v);
            }
        }
        if margin > 0.0 {
            t.certified += 1;
        }
        if (margin > 0.0 && escaped) || (sep > 0.0 && shared) {
            t.unsound += 1;
        }
        if margin < -threshold && !escaped {
            t.missed += 1;
        }
    }
    t
}

fn escape_score(q2: &anosov_core::multicone::QuadraticCone, v: &[f64]) -> f64 {
    q2.value(v) / v.iter().map(|x| x * x).sum::<f64>()
}

/// Random local ascent of Q₂ on the unit sphere inside Q₁, from the best sample.
/// Escaping regions near a tangency are too thin for blind sampling.
fn ascend_escape(
    r: &mut impl Rng,
    q1: &anosov_core::multicone::QuadraticCone,
    q2: &anosov_core::multicone::QuadraticCone,
    mut score: f64,
    mut v: Vec<f64>,
) -> bool {
    let mut step = 0.1;
    let mut fails = 0;
    for _ in 0..5000 {
        let w: Vec<f64> = v.iter().map(|x| x + step * r.gen_range(-1.0..1.0)).collect();
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let w: Vec<f64> = w.iter().map(|x| x / n).collect();
        if q1.contains(&w) && escape_score(q2, &w) > score {
            score = escape_score(q2, &w);
            v = w;
            if !q2.contains(&v) {
                return true;
            }
        } else {
            fails += 1;
            if fails == 50 {
                step /= 2.0;
                fails = 0;
            }
        }
    }
    false
}
