//! Finite windows of matrix sequences: domination fits, limit spaces of the
//! dominated splitting, transversality scans and one-sided extension.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matgeo::{
    angle, degrees_for_gap, grassmann_distance, Factor, Mat, ScaledProduct, SquareMatrix, Subspace,
    TOL_GAP,
};

/// Matrices A_n for n in [index_origin, index_origin + len).
#[derive(Clone, Debug)]
pub struct MatrixSequence {
    index_origin: i64,
    items: Vec<SquareMatrix>,
}

impl MatrixSequence {
    pub fn new(index_origin: i64, items: Vec<SquareMatrix>) -> Result<Self> {
        let d = items
            .first()
            .ok_or_else(|| Error::TooShort("empty sequence".into()))?
            .d();
        if items.iter().any(|a| a.d() != d) {
            return Err(Error::DimensionMismatch("sequence items differ in dimension".into()));
        }
        Ok(Self { index_origin, items })
    }

    pub fn from_mats(index_origin: i64, mats: Vec<Mat>) -> Result<Self> {
        let items = mats
            .into_iter()
            .map(SquareMatrix::from_computed)
            .collect::<Result<Vec<_>>>()?;
        Self::new(index_origin, items)
    }

    pub fn d(&self) -> usize {
        self.items[0].d()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn index_origin(&self) -> i64 {
        self.index_origin
    }

    /// One past the last index.
    pub fn index_end(&self) -> i64 {
        self.index_origin + self.items.len() as i64
    }

    pub fn items(&self) -> &[SquareMatrix] {
        &self.items
    }

    pub fn at(&self, n: i64) -> &SquareMatrix {
        &self.items[(n - self.index_origin) as usize]
    }

    /// K = max over items of max(‖A‖, ‖A⁻¹‖).
    pub fn norm_bound(&self) -> f64 {
        self.items
            .iter()
            .map(|a| a.norm().max(1.0 / a.conorm()))
            .fold(1.0, f64::max)
    }

    fn factors(&self, p: usize) -> Vec<Factor> {
        let degrees = degrees_for_gap(self.d(), p);
        self.items.iter().map(|a| Factor::new(a.mat(), &degrees)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct FitConfig {
    pub tol_gap: f64,
    /// Windows longer than this with ratio 1 refute domination.
    pub horizon: usize,
    pub ell_min: usize,
    pub max_depth: usize,
    pub residual_target: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { tol_gap: TOL_GAP, horizon: 8, ell_min: 8, max_depth: 500, residual_target: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Dominated,
    Inconclusive,
    NotDominated,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PairEntry {
    pub n: i64,
    pub m: i64,
    /// −log σ_{p+1}/σ_p(A_m⋯A_n)
    pub neg_log_ratio: f64,
}

impl PairEntry {
    pub fn len(&self) -> usize {
        (self.m - self.n + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DominationFit {
    pub p: usize,
    pub mu_hat: f64,
    pub c_hat: f64,
    pub min_margin: f64,
    pub verdict: Verdict,
    pub length: usize,
    pub norm_bound: f64,
    #[serde(skip)]
    pub pairs: Vec<PairEntry>,
}

/// Fit σ_{p+1}/σ_p(A_m⋯A_n) ≤ c·e^{−μ(m−n+1)} over every window.
pub fn fit_domination(seq: &MatrixSequence, p: usize, cfg: &FitConfig) -> Result<DominationFit> {
    let len = seq.len();
    if len < 2 {
        return Err(Error::TooShort(format!("fit needs at least 2 matrices, got {len}")));
    }
    if p == 0 || p >= seq.d() {
        return Err(Error::DimensionMismatch(format!("index {p} outside 1..{}", seq.d())));
    }
    let factors = seq.factors(p);
    let origin = seq.index_origin();
    let pairs: Vec<PairEntry> = (0..len)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut prod = ScaledProduct::identity(seq.d(), &degrees_for_gap(seq.d(), p));
            let factors = &factors;
            (i..len).map(move |j| {
                prod.push_left(&factors[j]);
                PairEntry { n: origin + i as i64, m: origin + j as i64, neg_log_ratio: -prod.log_gap(p) }
            })
        })
        .collect();

    let n = pairs.len() as f64;
    let (sx, sy) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), e| (a + e.len() as f64, b + e.neg_log_ratio));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = pairs.iter().fold((0.0, 0.0), |(a, b), e| {
        let dx = e.len() as f64 - mx;
        (a + dx * (e.neg_log_ratio - my), b + dx * dx)
    });
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let mu_hat = slope.max(0.0);
    let intercept = my - mu_hat * mx;
    let min_margin = pairs
        .iter()
        .map(|e| e.neg_log_ratio - (mu_hat * e.len() as f64 + intercept))
        .fold(f64::INFINITY, f64::min);
    let log_c = pairs
        .iter()
        .map(|e| mu_hat * e.len() as f64 - e.neg_log_ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let refuted = pairs
        .iter()
        .any(|e| e.len() > cfg.horizon && e.neg_log_ratio < cfg.tol_gap);
    let verdict = if refuted {
        Verdict::NotDominated
    } else if mu_hat > 0.0 && len as f64 >= 5.0 / mu_hat {
        Verdict::Dominated
    } else {
        Verdict::Inconclusive
    };
    Ok(DominationFit {
        p,
        mu_hat,
        c_hat: log_c.exp(),
        min_margin,
        verdict,
        length: len,
        norm_bound: seq.norm_bound(),
        pairs,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SplittingEstimate {
    pub center: i64,
    pub depth: usize,
    pub ecu: Subspace,
    pub ecs: Subspace,
    pub angle: f64,
    pub convergence_residual: f64,
}

/// U_p(A_{c−1}⋯A_{c−k}) for k = depth−1 and depth.
fn unstable_approximants(
    seq: &MatrixSequence,
    factors: &[Factor],
    p: usize,
    center: i64,
    depth: usize,
    tol_gap: f64,
) -> Result<(Subspace, Subspace)> {
    let mut prod = ScaledProduct::identity(seq.d(), &degrees_for_gap(seq.d(), p));
    let mut prev = None;
    for k in 1..=depth as i64 {
        prod.push_right(&factors[(center - k - seq.index_origin()) as usize]);
        if k == depth as i64 - 1 {
            prev = Some(prod.u_space(p, tol_gap)?);
        }
    }
    Ok((prev.unwrap(), prod.u_space(p, tol_gap)?))
}

/// S_{d−p}(A_{c+k−1}⋯A_c) for k = depth−1 and depth.
fn stable_approximants(
    seq: &MatrixSequence,
    factors: &[Factor],
    p: usize,
    center: i64,
    depth: usize,
    tol_gap: f64,
) -> Result<(Subspace, Subspace)> {
    let mut prod = ScaledProduct::identity(seq.d(), &degrees_for_gap(seq.d(), p));
    let mut prev = None;
    for k in 0..depth as i64 {
        prod.push_left(&factors[(center + k - seq.index_origin()) as usize]);
        if k == depth as i64 - 2 {
            prev = Some(prod.s_space(p, tol_gap)?);
        }
    }
    Ok((prev.unwrap(), prod.s_space(p, tol_gap)?))
}

/// E^cu and E^cs at `center`, from the longest symmetric window available.
pub fn bg_limits(
    seq: &MatrixSequence,
    p: usize,
    center: i64,
    fit: &DominationFit,
    cfg: &FitConfig,
) -> Result<SplittingEstimate> {
    if fit.verdict != Verdict::Dominated || fit.p != p {
        return Err(Error::NotDominatedInput);
    }
    let back = center - seq.index_origin();
    let fwd = seq.index_end() - center;
    if back < 0 || fwd < 0 {
        return Err(Error::InvalidInput(format!("center {center} outside the sequence")));
    }
    let depth = (back.min(fwd) as usize).min(cfg.max_depth);
    if depth < cfg.ell_min.max(2) {
        return Err(Error::TooShort(format!("window half-length {depth} below {}", cfg.ell_min)));
    }
    let factors = seq.factors(p);
    let (u_prev, ecu) = unstable_approximants(seq, &factors, p, center, depth, cfg.tol_gap)?;
    let (s_prev, ecs) = stable_approximants(seq, &factors, p, center, depth, cfg.tol_gap)?;
    let residual = grassmann_distance(&u_prev, &ecu)?.max(grassmann_distance(&s_prev, &ecs)?);
    if residual > cfg.residual_target {
        return Err(Error::DidNotConverge { residual });
    }
    Ok(SplittingEstimate {
        center,
        depth,
        angle: angle(&ecu, &ecs),
        ecu,
        ecs,
        convergence_residual: residual,
    })
}

/// max of d(A_c·E^cu(c), E^cu(c+1)) and d(A_c·E^cs(c), E^cs(c+1)).
pub fn shift_equivariance_residual(
    seq: &MatrixSequence,
    p: usize,
    center: i64,
    fit: &DominationFit,
    cfg: &FitConfig,
) -> Result<f64> {
    let here = bg_limits(seq, p, center, fit, cfg)?;
    let next = bg_limits(seq, p, center + 1, fit, cfg)?;
    let a = seq.at(center).mat();
    let du = grassmann_distance(&here.ecu.image(a)?, &next.ecu)?;
    let ds = grassmann_distance(&here.ecs.image(a)?, &next.ecs)?;
    Ok(du.max(ds))
}

#[derive(Clone, Debug, Serialize)]
pub struct TransversalityScan {
    pub min_angle: f64,
    /// (n, k, m) attaining the minimum.
    pub argmin: (i64, i64, i64),
    pub triples: usize,
}

/// min over n < k < m with k−n > ell and m−k > ell of ∠(U_p(A_{k−1}⋯A_n), S_{d−p}(A_{m−1}⋯A_k)).
pub fn transversality_scan(
    seq: &MatrixSequence,
    p: usize,
    ell: usize,
    fit: &DominationFit,
    cfg: &FitConfig,
) -> Result<TransversalityScan> {
    if fit.verdict != Verdict::Dominated || fit.p != p {
        return Err(Error::NotDominatedInput);
    }
    let ell = ell.max(1) as i64;
    let (lo, hi) = (seq.index_origin(), seq.index_end());
    if hi - lo < 2 * ell + 2 {
        return Err(Error::TooShort(format!("need more than {} matrices", 2 * ell + 1)));
    }
    let factors = seq.factors(p);
    let degrees = degrees_for_gap(seq.d(), p);
    let results: Vec<(f64, (i64, i64, i64), usize)> = ((lo + ell + 1)..=(hi - ell - 1))
        .into_par_iter()
        .map(|k| {
            let mut left = Vec::new();
            let mut prod = ScaledProduct::identity(seq.d(), &degrees);
            for n in (lo..k).rev() {
                prod.push_right(&factors[(n - lo) as usize]);
                if k - n > ell {
                    left.push((n, prod.u_space(p, cfg.tol_gap).ok()));
                }
            }
            let mut right = Vec::new();
            let mut prod = ScaledProduct::identity(seq.d(), &degrees);
            for m in (k + 1)..=hi {
                prod.push_left(&factors[(m - 1 - lo) as usize]);
                if m - k > ell {
                    right.push((m, prod.s_space(p, cfg.tol_gap).ok()));
                }
            }
            let mut best = (f64::INFINITY, (0, k, 0), 0);
            for (n, u) in &left {
                for (m, s) in &right {
                    let a = match (u, s) {
                        (Some(u), Some(s)) => angle(u, s),
                        _ => 0.0,
                    };
                    best.2 += 1;
                    if a < best.0 {
                        best.0 = a;
                        best.1 = (*n, k, *m);
                    }
                }
            }
            best
        })
        .collect();
    let triples = results.iter().map(|r| r.2).sum();
    let best = results
        .into_iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .unwrap();
    Ok(TransversalityScan { min_angle: best.0, argmin: best.1, triples })
}

#[derive(Clone, Debug)]
pub struct Extension {
    pub sequence: MatrixSequence,
    /// The constant block B prepended on negative indices.
    pub block: SquareMatrix,
    /// Q = lim S_{d−p}(A_{n−1}⋯A_0), approximated on the full window.
    pub q: Subspace,
}

/// Prepend a constant block B with B(Q) = Q = S_{d−p}(B) and B(Q^⊥) = Q^⊥ = U_p(B).
pub fn extend_one_sided(seq: &MatrixSequence, p: usize, fit: &DominationFit) -> Result<Extension> {
    if fit.verdict != Verdict::Dominated || fit.p != p {
        return Err(Error::NotDominatedInput);
    }
    let factors = seq.factors(p);
    let mut prod = ScaledProduct::identity(seq.d(), &degrees_for_gap(seq.d(), p));
    for f in &factors {
        prod.push_left(f);
    }
    let q = prod.s_space(p, TOL_GAP)?;
    let k = seq.norm_bound();
    let pq = q.projector();
    let d = seq.d();
    let b = (Mat::identity(d, d) - &pq) * k + pq / k;
    let block = SquareMatrix::from_computed(b)?;
    let n = seq.len();
    let mut items = vec![block.clone(); n];
    items.extend(seq.items().iter().cloned());
    let sequence = MatrixSequence::new(seq.index_origin() - n as i64, items)?;
    Ok(Extension { sequence, block, q })
}
