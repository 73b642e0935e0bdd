//! Representations of finitely generated groups: evaluation, domination over
//! balls, limit maps and eigenvalue gaps.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use nalgebra::Schur;
use rayon::prelude::*;
use serde::Serialize;

use crate::cocycle::Verdict;
use crate::error::{Error, Result};
use crate::group::{GroupPresentation, Letter};
use crate::matgeo::{
    degrees_for_gap, grassmann_distance, rotation2, diag, Factor, Mat, ScaledProduct, SquareMatrix,
    Subspace, TOL_GAP,
};

const INVERSE_TOL: f64 = 1e-10;
const RELATOR_TOL: f64 = 1e-8;
pub const BURN_IN: usize = 3;

#[derive(Clone, Debug)]
pub struct Representation {
    pres: Arc<GroupPresentation>,
    images: Vec<SquareMatrix>,
    unimodular: bool,
}

impl Representation {
    /// Images are given per generator name; a letter without an image gets the inverse
    /// of its formal inverse's image.
    pub fn new(
        pres: Arc<GroupPresentation>,
        given: &BTreeMap<String, SquareMatrix>,
        unimodular: bool,
    ) -> Result<Self> {
        for name in given.keys() {
            if pres.letter(name).is_none() {
                return Err(Error::InvalidInput(format!("image for unknown generator {name}")));
            }
        }
        let d = given
            .values()
            .next()
            .map(|m| m.d())
            .ok_or_else(|| Error::InvalidInput("no generator images".into()))?;
        if given.values().any(|m| m.d() != d) {
            return Err(Error::DimensionMismatch("generator images differ in size".into()));
        }
        let mut images = Vec::with_capacity(pres.num_letters());
        for l in 0..pres.num_letters() {
            let img = match given.get(pres.name(l)) {
                Some(m) => m.clone(),
                None => {
                    let inv = pres.inverse_letter(l).and_then(|i| given.get(pres.name(i))).ok_or_else(|| {
                        Error::InvalidInput(format!("no image for generator {}", pres.name(l)))
                    })?;
                    inv.inverse()?
                }
            };
            images.push(img);
        }
        for l in 0..pres.num_letters() {
            if let Some(i) = pres.inverse_letter(l) {
                // Sign ambiguity is allowed: the group acts projectively.
                let prod = images[l].mat() * images[i].mat();
                let id = Mat::identity(d, d);
                let err = (&prod - &id).amax().min((&prod + &id).amax());
                if err > INVERSE_TOL {
                    return Err(Error::InvalidInput(format!(
                        "images of {} and {} are not inverse (residual {err:e})",
                        pres.name(l),
                        pres.name(i)
                    )));
                }
            }
        }
        let rep = Self { pres, images, unimodular };
        for r in rep.pres.relators() {
            let m = rep.evaluate(r)?;
            let id = Mat::identity(d, d);
            let err = (m.mat() - &id).amax().min((m.mat() + &id).amax());
            if err > RELATOR_TOL {
                return Err(Error::InvalidInput(format!(
                    "relator {} does not evaluate to ±identity (residual {err:e})",
                    rep.pres.format_word(r)
                )));
            }
        }
        Ok(rep)
    }

    pub fn pres(&self) -> &GroupPresentation {
        &self.pres
    }

    pub fn pres_arc(&self) -> Arc<GroupPresentation> {
        self.pres.clone()
    }

    pub fn d(&self) -> usize {
        self.images[0].d()
    }

    pub fn unimodular(&self) -> bool {
        self.unimodular
    }

    pub fn image(&self, l: Letter) -> &SquareMatrix {
        &self.images[l]
    }

    /// Images of the named generators (inverse letters omitted when derived).
    pub fn generator_images(&self) -> BTreeMap<String, SquareMatrix> {
        (0..self.pres.num_letters())
            .filter(|&l| self.pres.inverse_letter(l).map_or(true, |i| i >= l))
            .map(|l| (self.pres.name(l).to_string(), self.images[l].clone()))
            .collect()
    }

    /// Letter-wise image map, e.g. for perturbing a representation.
    pub fn map_images(&self, f: impl Fn(Letter, &SquareMatrix) -> Mat) -> Result<Self> {
        let mut given = BTreeMap::new();
        for l in 0..self.pres.num_letters() {
            if self.pres.inverse_letter(l).map_or(true, |i| i >= l) {
                given.insert(self.pres.name(l).to_string(), SquareMatrix::from_computed(f(l, &self.images[l]))?);
            }
        }
        Self::new(self.pres.clone(), &given, self.unimodular)
    }

    fn letter_mat(&self, l: Letter) -> Mat {
        if self.unimodular {
            self.images[l].unimodular().into_mat()
        } else {
            self.images[l].mat().clone()
        }
    }

    /// ρ(w), the product of letter images in order.
    pub fn evaluate(&self, w: &[Letter]) -> Result<SquareMatrix> {
        let d = self.d();
        let mut m = Mat::identity(d, d);
        for &l in w {
            if l >= self.images.len() {
                return Err(Error::InvalidWord(format!("letter index {l} out of range")));
            }
            m *= self.images[l].mat();
        }
        let m = SquareMatrix::from_computed(m)?;
        Ok(if self.unimodular { m.unimodular() } else { m })
    }

    pub fn factors(&self, degrees: &[usize]) -> Vec<Factor> {
        (0..self.images.len()).map(|l| Factor::new(&self.letter_mat(l), degrees)).collect()
    }

    /// ρ(w) as a renormalised product tracking the given exterior degrees.
    pub fn scaled(&self, w: &[Letter], factors: &[Factor], degrees: &[usize]) -> ScaledProduct {
        let mut prod = ScaledProduct::identity(self.d(), degrees);
        for &l in w {
            prod.push_right(&factors[l]);
        }
        prod
    }

    pub fn check_index(&self, p: usize) -> Result<()> {
        if p == 0 || p >= self.d() {
            return Err(Error::DimensionMismatch(format!("index {p} outside 1..{}", self.d())));
        }
        Ok(())
    }

    /// max over generators of ‖ρ(s)‖·‖ρ(s)⁻¹‖.
    pub fn generator_condition(&self) -> f64 {
        self.images
            .iter()
            .map(|m| m.norm() / m.conorm())
            .fold(1.0, f64::max)
    }
}

/// ρ_λ on ℤ/3 ∗ ℤ/2: a ↦ D⁻¹R_{π/3}D, b ↦ R_{π/2}, with D = diag(λ, 1/λ).
pub fn z3_z2_family(lambda: f64) -> Result<Representation> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput("lambda must be positive".into()));
    }
    let pres = Arc::new(GroupPresentation::free_product(3, 2)?);
    let d = diag(&[lambda, 1.0 / lambda]);
    let d_inv = diag(&[1.0 / lambda, lambda]);
    let a = &d_inv * rotation2(std::f64::consts::PI / 3.0) * &d;
    let b = rotation2(std::f64::consts::FRAC_PI_2);
    let mut given = BTreeMap::new();
    given.insert("a".to_string(), SquareMatrix::new(a)?);
    given.insert("b".to_string(), SquareMatrix::new(b)?);
    Representation::new(pres, &given, false)
}

// ---------------------------------------------------------------------------
// Domination over balls

#[derive(Clone, Debug, Serialize)]
pub struct LengthRow {
    pub length: usize,
    pub count: usize,
    pub min_gap: f64,
    pub mean_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DominationReport {
    pub p: usize,
    pub radius: usize,
    pub ball_size: usize,
    pub burn_in: usize,
    /// min over |γ| = n of −log σ_{p+1}/σ_p(ρ(γ)).
    pub per_length_min_gap: Vec<f64>,
    pub rows: Vec<LengthRow>,
    pub lambda_hat: f64,
    pub c_hat: f64,
    pub min_margin: f64,
    pub worst_element: String,
    pub symmetry_residual: f64,
    /// Steps over which the per-length minima strictly increase past the burn-in.
    pub increase_span: Option<usize>,
    pub verdict: Verdict,
}

fn ball_gaps(rep: &Representation, ball: &[Vec<Letter>], p: usize) -> Vec<f64> {
    let degrees = degrees_for_gap(rep.d(), p);
    let factors = rep.factors(&degrees);
    ball.par_iter()
        .map(|w| 0.0 - rep.scaled(w, &factors, &degrees).log_gap(p))
        .collect()
}

fn per_length_min(ball: &[Vec<Letter>], gaps: &[f64], radius: usize) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; radius + 1];
    for (w, &g) in ball.iter().zip(gaps) {
        out[w.len()] = out[w.len()].min(g);
    }
    out
}

/// Evaluate the p-gap on ball(R) and fit σ_{p+1}/σ_p(ρ(γ)) ≤ C·e^{−λ|γ|}.
pub fn domination_report(rep: &Representation, p: usize, radius: usize) -> Result<DominationReport> {
    domination_report_tol(rep, p, radius, TOL_GAP)
}

/// As [`domination_report`] with a custom refutation tolerance.
pub fn domination_report_tol(rep: &Representation, p: usize, radius: usize, tol_gap: f64) -> Result<DominationReport> {
    if !(tol_gap > 0.0) {
        return Err(Error::InvalidInput("tol_gap must be positive".into()));
    }
    rep.check_index(p)?;
    let pres = rep.pres();
    let ball = pres.ball(radius)?;
    let words = &ball.elements;
    let gaps = ball_gaps(rep, words, p);
    let mins = per_length_min(words, &gaps, radius);

    let q = rep.d() - p;
    let symmetry_residual = if q == p {
        0.0
    } else {
        let dual = per_length_min(words, &ball_gaps(rep, words, q), radius);
        let r = mins
            .iter()
            .zip(&dual)
            .filter(|(a, _)| a.is_finite())
            .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
            .fold(0.0, f64::max);
        if r > 1e-9 {
            return Err(Error::Internal(format!(
                "p and d-p gap minima disagree (relative residual {r:e})"
            )));
        }
        r
    };

    let mut rows = Vec::new();
    for n in 0..=radius {
        let vals: Vec<f64> = words.iter().zip(&gaps).filter(|(w, _)| w.len() == n).map(|(_, &g)| g).collect();
        if vals.is_empty() {
            continue;
        }
        rows.push(LengthRow {
            length: n,
            count: vals.len(),
            min_gap: mins[n],
            mean_gap: vals.iter().sum::<f64>() / vals.len() as f64,
        });
    }

    // Least squares of the per-length minima against length, past the burn-in.
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.length >= BURN_IN)
        .map(|r| (r.length as f64, r.min_gap))
        .collect();
    let (lambda_hat, intercept) = ols(&pts);
    let lambda_hat = lambda_hat.max(0.0);
    let (worst, log_c) = words
        .iter()
        .zip(&gaps)
        .map(|(w, &g)| (w, lambda_hat * w.len() as f64 - g))
        .fold((&words[0], f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let min_margin = words
        .iter()
        .zip(&gaps)
        .filter(|(w, _)| w.len() >= BURN_IN)
        .map(|(w, &g)| g - (lambda_hat * w.len() as f64 + intercept))
        .fold(f64::INFINITY, f64::min);

    let long = radius / 2 + 1;
    let refuted = words
        .iter()
        .zip(&gaps)
        .any(|(w, &g)| w.len() >= long.max(BURN_IN + 1) && g < tol_gap);
    let increase_span = increase_span(&rows);
    let verdict = if refuted {
        Verdict::NotDominated
    } else if lambda_hat > 0.0 && increase_span.is_some() && radius > BURN_IN {
        Verdict::Dominated
    } else {
        Verdict::Inconclusive
    };
    Ok(DominationReport {
        p,
        radius,
        ball_size: words.len(),
        burn_in: BURN_IN,
        per_length_min_gap: mins,
        rows,
        lambda_hat,
        c_hat: log_c.max(0.0).exp(),
        min_margin,
        worst_element: pres.format_word(worst),
        symmetry_residual,
        increase_span,
        verdict,
    })
}

/// Least k ≤ burn-in such that past the burn-in the per-length minima increase strictly
/// over every k steps. Letters with near-orthogonal image make the minima flat or slightly
/// dipping over single steps, hence k rather than 1.
fn increase_span(rows: &[LengthRow]) -> Option<usize> {
    let tail: Vec<f64> = rows.iter().filter(|r| r.length >= BURN_IN).map(|r| r.min_gap).collect();
    if tail.len() < 2 {
        return None;
    }
    (1..=BURN_IN.min(tail.len() - 1)).find(|&k| tail.windows(k + 1).all(|w| w[k] > w[0] + 1e-12 * w[0].abs().max(1.0)))
}

fn ols(pts: &[(f64, f64)]) -> (f64, f64) {
    if pts.is_empty() {
        return (0.0, 0.0);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

// ---------------------------------------------------------------------------
// Boundary rays and limit maps

/// The eventually periodic ray u·v^∞.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoundaryRay {
    pub prefix: Vec<Letter>,
    pub period: Vec<Letter>,
}

pub const RAY_CHECK_POWERS: usize = 6;

impl BoundaryRay {
    /// Checks that u·v^k is geodesic for k ≤ 6.
    pub fn new(pres: &GroupPresentation, prefix: Vec<Letter>, period: Vec<Letter>) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::InvalidWord("ray period is empty".into()));
        }
        let ray = Self { prefix, period };
        for k in 0..=RAY_CHECK_POWERS {
            let w = ray.prefix_word(ray.prefix.len() + k * ray.period.len());
            if pres.word_length(&w)? != w.len() {
                return Err(Error::InvalidWord(format!(
                    "ray prefix {} is not geodesic",
                    pres.format_word(&w)
                )));
            }
        }
        Ok(ray)
    }

    pub fn parse(pres: &GroupPresentation, prefix: &str, period: &str) -> Result<Self> {
        Self::new(pres, pres.parse_word(prefix)?, pres.parse_word(period)?)
    }

    pub fn letter(&self, i: usize) -> Letter {
        if i < self.prefix.len() {
            self.prefix[i]
        } else {
            self.period[(i - self.prefix.len()) % self.period.len()]
        }
    }

    pub fn prefix_word(&self, n: usize) -> Vec<Letter> {
        (0..n).map(|i| self.letter(i)).collect()
    }

    /// γ·(u·v^∞), rewritten as u′·v^∞ with u′ the normal form of γ·u·v^k for k large
    /// enough to absorb cancellation.
    pub fn translate(&self, pres: &GroupPresentation, g: &[Letter]) -> Result<Self> {
        let k = g.len() / self.period.len() + 1;
        let mut w = g.to_vec();
        w.extend(self.prefix_word(self.prefix.len() + k * self.period.len()));
        Self::new(pres, pres.normalize(&w)?, self.period.clone())
    }

    pub fn describe(&self, pres: &GroupPresentation) -> String {
        format!("{}({})^inf", pres.format_word(&self.prefix), pres.format_word(&self.period))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitPoint {
    pub ray: String,
    pub depth: usize,
    pub subspace: Subspace,
    /// Distance between the last two approximants.
    pub residual: f64,
    pub gap_ratio: f64,
    /// Distance to ρ(u)·(attracting invariant p-plane of ρ(v)), when that exists.
    pub eigen_residual: Option<f64>,
}

pub const LIMIT_RESIDUAL: f64 = 1e-8;

/// ξ(x) = lim U_p(ρ(γ_n)) along the prefixes of the ray.
pub fn limit_map(rep: &Representation, p: usize, ray: &BoundaryRay, depth: usize) -> Result<LimitPoint> {
    rep.check_index(p)?;
    let depth = depth.max(2);
    let degrees = degrees_for_gap(rep.d(), p);
    let factors = rep.factors(&degrees);
    let mut prod = ScaledProduct::identity(rep.d(), &degrees);
    for i in 0..depth - 1 {
        prod.push_right(&factors[ray.letter(i)]);
    }
    let gap_prev = prod.gap_ratio(p);
    let prev = prod.u_space(p, TOL_GAP).map_err(|_| Error::NotDominated)?;
    prod.push_right(&factors[ray.letter(depth - 1)]);
    let gap_ratio = prod.gap_ratio(p);
    if gap_ratio >= 1.0 - TOL_GAP || gap_prev >= 1.0 - TOL_GAP {
        return Err(Error::NotDominated);
    }
    let last = prod.u_space(p, TOL_GAP)?;
    let residual = grassmann_distance(&prev, &last)?;
    if residual > LIMIT_RESIDUAL {
        return Err(Error::DidNotConverge { residual });
    }
    let eigen_residual = periodic_limit(rep, p, ray)
        .ok()
        .map(|s| grassmann_distance(&s, &last))
        .transpose()?;
    Ok(LimitPoint {
        ray: ray.describe(rep.pres()),
        depth,
        subspace: last,
        residual,
        gap_ratio,
        eigen_residual,
    })
}

/// ρ(u)·E where E is the attracting invariant p-plane of ρ(v), by orthogonal iteration.
pub fn periodic_limit(rep: &Representation, p: usize, ray: &BoundaryRay) -> Result<Subspace> {
    let v = rep.evaluate(&ray.period)?;
    let e = dominant_invariant_subspace(v.mat(), p, 5000, 1e-14)?;
    let u = rep.evaluate(&ray.prefix)?;
    e.image(u.mat())
}

/// Top p-dimensional invariant subspace of M (eigenvalue moduli |χ_p| > |χ_{p+1}|),
/// computed by QR iteration Q ← orth(M·Q).
pub fn dominant_invariant_subspace(m: &Mat, p: usize, max_iter: usize, tol: f64) -> Result<Subspace> {
    let d = m.nrows();
    let moduli = eigen_moduli(m);
    if moduli[p] >= moduli[p - 1] * (1.0 - TOL_GAP) {
        return Err(Error::NoGap { p, ratio: moduli[p] / moduli[p - 1] });
    }
    let mut q = Subspace::from_orthonormal(Mat::identity(d, d).columns(0, p).into_owned());
    // Perturb the start off any invariant coordinate plane.
    let start = Mat::from_fn(d, p, |i, j| if i == j { 1.0 } else { 0.1 * ((i * 7 + j * 3) % 5) as f64 - 0.2 });
    q = Subspace::from_span(&start).unwrap_or(q);
    for _ in 0..max_iter {
        let next = q.image(m)?;
        let r = grassmann_distance(&q, &next)?;
        q = next;
        if r < tol {
            return Ok(q);
        }
    }
    Ok(q)
}

/// Eigenvalue moduli in descending order.
pub fn eigen_moduli(m: &Mat) -> Vec<f64> {
    let mut v: Vec<f64> = Schur::new(m.clone())
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

// ---------------------------------------------------------------------------
// Limit set sample

#[derive(Clone, Debug, Serialize)]
pub struct LimitSetSample {
    pub radius: usize,
    pub points: Vec<Subspace>,
    /// max over probes of dist(ρ(γ)·x, sample) / tolerance(γ).
    pub probe_worst_ratio: f64,
    pub probes: usize,
    pub probe_pass: bool,
}

pub const DEDUP_RESOLUTION: f64 = 1e-6;
const PROBE_POINTS: usize = 256;

/// {U_p(ρ(γ)) : |γ| = R} with an invariance probe under ball(2).
pub fn limit_set_sample(rep: &Representation, p: usize, radius: usize, report: &DominationReport) -> Result<LimitSetSample> {
    if report.verdict != Verdict::Dominated || report.p != p {
        return Err(Error::NotDominated);
    }
    let pres = rep.pres();
    let ball = pres.ball(radius)?;
    let degrees = degrees_for_gap(rep.d(), p);
    let factors = rep.factors(&degrees);
    let sphere: Vec<&Vec<Letter>> = ball.sphere(radius).collect();
    let spaces: Vec<Subspace> = sphere
        .par_iter()
        .map(|w| rep.scaled(w, &factors, &degrees).u_space(p, TOL_GAP))
        .collect::<Result<_>>()?;
    let mut points: Vec<Subspace> = Vec::new();
    for s in spaces {
        let mut dup = false;
        for q in &points {
            if grassmann_distance(&s, q)? <= DEDUP_RESOLUTION {
                dup = true;
                break;
            }
        }
        if !dup {
            points.push(s);
        }
    }
    let stride = points.len().div_ceil(PROBE_POINTS).max(1);
    let probe_set: Vec<&Subspace> = points.iter().step_by(stride).collect();
    let kappa_s = rep.generator_condition();
    let mut worst: f64 = 0.0;
    let mut probes = 0;
    for g in ball.elements.iter().filter(|w| !w.is_empty() && w.len() <= 2) {
        let m = rep.evaluate(g)?;
        let kappa = m.norm() / m.conorm();
        let n = g.len() as f64;
        let tol = report.c_hat
            * (-report.lambda_hat * (radius as f64 - n)).exp()
            * (kappa + kappa_s.powf(2.0 * n));
        for x in &probe_set {
            let y = x.image(m.mat())?;
            let mut best = f64::INFINITY;
            for q in &points {
                best = best.min(grassmann_distance(&y, q)?);
            }
            worst = worst.max(best / tol);
            probes += 1;
        }
    }
    Ok(LimitSetSample { radius, points, probe_worst_ratio: worst, probes, probe_pass: worst <= 1.0 })
}

// ---------------------------------------------------------------------------
// Eigenvalue gaps

#[derive(Clone, Debug, Serialize)]
pub struct EigenRow {
    pub word: String,
    pub word_length: usize,
    pub translation_length: f64,
    /// |χ_{p+1}|/|χ_p| of ρ(γ).
    pub chi_ratio: f64,
    pub elliptic: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenGapReport {
    pub p: usize,
    pub radius: usize,
    pub rows: Vec<EigenRow>,
    pub lambda_prime: f64,
    pub c_prime: f64,
    /// Conjugacy deduplication is exact for free groups and free products only.
    pub representatives_exact: bool,
    pub note: String,
}

/// Eigenvalue-modulus gaps over cyclically reduced conjugacy representatives of ball(R).
pub fn eigenvalue_gap_report(rep: &Representation, p: usize, radius: usize, n_pow: usize) -> Result<EigenGapReport> {
    rep.check_index(p)?;
    let pres = rep.pres();
    let ball = pres.ball(radius)?;
    let mut reps: HashMap<Vec<Letter>, Vec<Letter>> = HashMap::new();
    for w in ball.elements.iter().filter(|w| !w.is_empty()) {
        let mut canon = w.clone();
        let mut reduced = true;
        for k in 1..w.len() {
            let mut r = w[k..].to_vec();
            r.extend_from_slice(&w[..k]);
            let r = pres.normalize(&r)?;
            if r.len() != w.len() {
                reduced = false;
                break;
            }
            canon = canon.min(r);
        }
        if reduced {
            reps.entry(canon).or_insert_with(|| w.clone());
        }
    }
    let mut keys: Vec<_> = reps.into_values().collect();
    keys.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    let mut rows = Vec::new();
    for w in keys {
        let m = rep.evaluate(&w)?;
        let moduli = eigen_moduli(m.mat());
        let chi_ratio = moduli[p] / moduli[p - 1];
        let tl = pres.translation_length(&w, n_pow)?;
        rows.push(EigenRow {
            word: pres.format_word(&w),
            word_length: w.len(),
            translation_length: tl.estimate,
            chi_ratio,
            elliptic: chi_ratio >= 1.0 - 1e-9,
        });
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.translation_length, -r.chi_ratio.ln())).collect();
    let (slope, _) = ols(&pts);
    let lambda_prime = slope.max(0.0);
    let log_c = pts
        .iter()
        .map(|(l, y)| lambda_prime * l - y)
        .fold(0.0, f64::max);
    let exact = matches!(
        pres.family(),
        crate::group::Family::Free { .. } | crate::group::Family::FreeProduct { .. }
    );
    Ok(EigenGapReport {
        p,
        radius,
        rows,
        lambda_prime,
        c_prime: log_c.exp(),
        representatives_exact: exact,
        note: "exploratory: a positive eigenvalue-gap fit does not certify domination".into(),
    })
}
