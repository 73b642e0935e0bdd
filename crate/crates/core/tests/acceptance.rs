//! One PASS/FAIL line per acceptance criterion. Exits nonzero only on unexpected failures.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use anosov_core::cocycle::*;
use anosov_core::group::*;
use anosov_core::matgeo::*;
use anosov_core::morse::*;
use anosov_core::multicone::*;
use anosov_core::reprcheck::*;
use anosov_core::Error;
use common::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    /// A failure already explained in the decisions ledger.
    expected: bool,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: String) -> Self {
        Self { pass, expected: false, detail }
    }
}

type Res = std::result::Result<Outcome, String>;

fn e<T, E: std::fmt::Debug>(r: std::result::Result<T, E>) -> std::result::Result<T, String> {
    r.map_err(|x| format!("{x:?}"))
}

fn recurrent_cocycle(rep: &Representation) -> std::result::Result<SoficCocycle, String> {
    let auto = e(geodesic_automaton(rep.pres(), 8, DEFAULT_R_PROBE))?;
    e(SoficCocycle::from_representation(rep, e(recurrent_subgraph(&auto))?))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

// 1. Worked example on ℤ/3 ∗ ℤ/2.
fn worked_example() -> Res {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut slow = 0.0f64;

    let (good, t) = timed(|| domination_report(&z3_z2_family(2.0).unwrap(), 1, 10));
    slow = slow.max(t);
    let good = e(good)?;
    let tail: Vec<f64> = good.per_length_min_gap[BURN_IN..].to_vec();
    let literal_strict = tail.windows(2).all(|w| w[1] > w[0]);
    ok &= good.verdict == Verdict::Dominated && good.lambda_hat > 0.0 && good.increase_span.is_some();
    notes.push(format!(
        "lambda=2 {:?} lambda_hat={:.4} increase_span={:?} single-step strict={}",
        good.verdict, good.lambda_hat, good.increase_span, literal_strict
    ));

    let rep1 = z3_z2_family(1.0).unwrap();
    let (bad, t) = timed(|| domination_report(&rep1, 1, 10));
    slow = slow.max(t);
    let bad = e(bad)?;
    let mut worst: f64 = 0.0;
    for w in &e(rep1.pres().ball(10))?.elements {
        let sv = singular_values(e(rep1.evaluate(w))?.mat());
        worst = worst.max((sv[1] / sv[0] - 1.0).abs());
    }
    ok &= bad.verdict == Verdict::NotDominated && worst <= 1e-12;
    notes.push(format!("lambda=1 {:?} max|ratio-1|={worst:.1e}", bad.verdict));

    let synth = |lambda: f64| -> std::result::Result<(std::result::Result<Synthesis, Error>, f64), String> {
        let cocycle = recurrent_cocycle(&z3_z2_family(lambda).unwrap())?;
        Ok(timed(|| synthesize_family(&cocycle, &SynthConfig::new(1, 40))))
    };
    let (s135, t) = synth(1.35)?;
    slow = slow.max(t);
    let certified_135 = s135.is_ok();
    let (s1, t) = synth(1.0)?;
    slow = slow.max(t);
    let refused_1 = matches!(s1, Err(Error::NoCandidateCertified { .. }));
    let (s125, t) = synth(1.25)?;
    slow = slow.max(t);
    let certified_125 = s125.is_ok();
    ok &= certified_135 && refused_1;

    // An elliptic element of infinite order rules out domination at 1.25.
    let eig = e(eigenvalue_gap_report(&z3_z2_family(1.25).unwrap(), 1, 6, 1))?;
    let witness = eig.rows.iter().find(|r| r.elliptic && r.word_length >= 2).map(|r| r.word.clone());
    notes.push(format!(
        "synth R=40: lambda=1.35 certified={certified_135}, lambda=1.0 NoCandidateCertified={refused_1}, lambda=1.25 certified={certified_125} (elliptic witness {})",
        witness.as_deref().unwrap_or("none")
    ));
    ok &= slow < 30.0;
    notes.push(format!("slowest step {slow:.1}s"));

    if ok && !certified_125 && witness.is_some() {
        // Everything attainable holds; the 1.25 item contradicts the elliptic witness.
        return Ok(Outcome {
            pass: false,
            expected: true,
            detail: format!("{}; lambda=1.25 is below the domination threshold, see ledger", notes.join("; ")),
        });
    }
    Ok(Outcome::check(ok && certified_125, notes.join("; ")))
}

// 2. Property suite for singular values, Grassmannians and exterior powers.
fn appendix_suite() -> Res {
    let ((failures, names), t) = timed(|| {
        let mut failures = Vec::new();
        for (i, (name, check)) in APPENDIX.iter().enumerate() {
            let mut r = rng(1000 + i as u64);
            for k in 0..1000 {
                if let Err(msg) = check(&mut r) {
                    failures.push(format!("{name} #{k}: {msg}"));
                    break;
                }
            }
        }
        (failures, APPENDIX.len())
    });
    let detail = if failures.is_empty() {
        format!("{names} properties x 1000 instances, d in {{2,3,4,6}}, {t:.1}s")
    } else {
        failures.join("; ")
    };
    Ok(Outcome::check(failures.is_empty() && t < 60.0, detail))
}

// 3. Splittings of random dominated sequences.
fn sequence_splittings() -> Res {
    let (res, t) = timed(|| -> std::result::Result<(f64, f64, f64, usize), String> {
        let mut r = rng(3);
        let cfg = FitConfig::default();
        let (mut worst_res, mut worst_shift, mut min_angle) = (0.0f64, 0.0f64, f64::INFINITY);
        for _ in 0..100 {
            let items: Vec<Mat> =
                (0..200).map(|_| diag(&[4.0, 1.0, 0.25]) * rotation_small(&mut r, 3, 0.1)).collect();
            let seq = e(MatrixSequence::from_mats(0, items))?;
            let fit = e(fit_domination(&seq, 1, &cfg))?;
            let est = e(bg_limits(&seq, 1, 100, &fit, &cfg))?;
            worst_res = worst_res.max(est.convergence_residual);
            min_angle = min_angle.min(est.angle);
            worst_shift = worst_shift.max(e(shift_equivariance_residual(&seq, 1, 100, &fit, &cfg))?);
        }
        let mut refuted = 0;
        for _ in 0..100 {
            let items: Vec<Mat> = (0..200).map(|_| rotation_small(&mut r, 3, 3.0)).collect();
            let seq = e(MatrixSequence::from_mats(0, items))?;
            if e(fit_domination(&seq, 1, &cfg))?.verdict == Verdict::NotDominated {
                refuted += 1;
            }
        }
        Ok((worst_res, worst_shift, min_angle, refuted))
    });
    let (res, shift, angle, refuted) = res?;
    Ok(Outcome::check(
        res < 1e-8 && shift < 1e-7 && angle > 0.3 && refuted == 100 && t < 60.0,
        format!("max residual {res:.1e}, max shift residual {shift:.1e}, min angle {angle:.3}, rotations refuted {refuted}/100, {t:.1}s"),
    ))
}

// 4. Cone types and geodesic automata.
fn cone_type_counts() -> Res {
    let f2 = e(GroupPresentation::free(2))?;
    let oracle = free_group_cone_count(2, 3);
    let ct = e(cone_types(&f2, 6, DEFAULT_R_PROBE))?;
    let auto_f2 = e(geodesic_automaton(&f2, 8, DEFAULT_R_PROBE))?;
    let rec_f2 = e(recurrent_subgraph(&auto_f2))?;
    let z = e(GroupPresentation::free_product(3, 2))?;
    let auto_z = e(geodesic_automaton(&z, 8, DEFAULT_R_PROBE))?;
    let rec_z = e(recurrent_subgraph(&auto_z))?;
    let mut walks_ok = true;
    for (pres, auto) in [(&f2, &auto_f2), (&z, &auto_z)] {
        let counts = auto.walk_counts(auto.start.unwrap(), 8);
        let spheres = e(pres.ball(8))?.sphere_sizes();
        walks_ok &= (0..=8).all(|n| counts[n] == spheres[n] as u128);
    }
    let bfs = modular_group_sphere_sizes(8);
    walks_ok &= e(z.ball(8))?.sphere_sizes() == bfs;
    let pass = oracle == 5 && ct.types.len() == 5 && rec_f2.vertices.len() == 4 && rec_z.vertices.len() == 2 && walks_ok;
    Ok(Outcome::check(
        pass,
        format!(
            "Free(2): {} types (brute force {oracle}), {} recurrent; Z/3*Z/2: {} recurrent; walk counts = sphere sizes for n <= 8: {walks_ok}",
            ct.types.len(),
            rec_f2.vertices.len(),
            rec_z.vertices.len()
        ),
    ))
}

/// Label matrices along a random walk, in walk order.
fn random_walk(r: &mut ChaCha8Rng, cocycle: &SoficCocycle, len: usize) -> Vec<Mat> {
    let auto = &cocycle.automaton;
    let mut v = auto.vertices[r.gen_range(0..auto.vertices.len())];
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let edges: Vec<_> = auto.out_edges(v).collect();
        let edge = edges[r.gen_range(0..edges.len())];
        out.push(cocycle.mats[edge.label].mat().clone());
        v = edge.head;
    }
    out
}

fn hyperbolic(unstable: f64, stable: f64) -> SquareMatrix {
    let (u, s) = (unstable.to_radians(), stable.to_radians());
    let g = Mat::from_row_slice(2, 2, &[u.cos(), s.cos(), u.sin(), s.sin()]);
    SquareMatrix::new(&g * diag(&[10.0, 0.1]) * g.clone().try_inverse().unwrap()).unwrap()
}

// 5. Certified families imply domination along walks; containment agrees with sampling.
fn multicone_soundness() -> Res {
    let mut r = rng(5);
    let mut inputs: Vec<SoficCocycle> = Vec::new();
    for _ in 0..6 {
        let lambda = r.gen_range(1.6..3.0);
        let g = random_gl(&mut r, 2);
        let g_inv = e(g.inverse())?;
        let rep = e(z3_z2_family(lambda).unwrap().map_images(|_, m| g.mat() * m.mat() * g_inv.mat()))?;
        inputs.push(recurrent_cocycle(&rep)?);
    }
    for _ in 0..4 {
        let j = |r: &mut ChaCha8Rng| r.gen_range(-5.0..5.0);
        let mats = vec![hyperbolic(j(&mut r), 45.0 + j(&mut r)), hyperbolic(90.0 + j(&mut r), 135.0 + j(&mut r))];
        let edges = vec![Edge { tail: 0, label: 0, head: 0 }, Edge { tail: 0, label: 1, head: 0 }];
        let auto = e(GeodesicAutomaton::new(vec![0], Some(0), edges))?;
        inputs.push(e(SoficCocycle::new(auto, mats, vec!["x".into(), "y".into()]))?);
    }
    let (mut certified, mut walks_dominated, mut walks) = (0, 0, 0);
    for (i, cocycle) in inputs.iter().enumerate() {
        let mut cfg = SynthConfig::new(1, 40);
        cfg.seed = i as u64;
        let Ok(synth) = synthesize_family(cocycle, &cfg) else { continue };
        if synth.verification.verdict != FamilyVerdict::Certified {
            continue;
        }
        certified += 1;
        for _ in 0..50 {
            let seq = e(MatrixSequence::from_mats(0, random_walk(&mut r, cocycle, 100)))?;
            walks += 1;
            if e(fit_domination(&seq, 1, &FitConfig::default()))?.verdict == Verdict::Dominated {
                walks_dominated += 1;
            }
        }
    }
    let tally = containment_oracle(&mut r, 500, 10_000, 1e-4);
    Ok(Outcome::check(
        certified >= 8 && walks_dominated == walks && tally.unsound == 0 && tally.missed == 0,
        format!(
            "{certified}/{} random inputs certified, {walks_dominated}/{walks} walks Dominated; sampling oracle on {} pairs: {} certified, {} unsound, {} missed",
            inputs.len(),
            tally.pairs,
            tally.certified,
            tally.unsound,
            tally.missed
        ),
    ))
}

fn alternating_word(r: &mut ChaCha8Rng, pairs: usize) -> String {
    (0..pairs).map(|_| if r.gen_bool(0.5) { "ab" } else { "Ab" }).collect()
}

// 6. Morse audit.
fn morse_uniformity() -> Res {
    let (res, t) = timed(|| -> std::result::Result<(f64, f64, usize), String> {
        let rep = z3_z2_family(2.0).unwrap();
        let mut r = rng(6);
        let caps = MorseCaps::default();
        let mut worst_ratio: f64 = 0.0;
        for _ in 0..20 {
            let w = e(rep.pres().parse_word(&alternating_word(&mut r, 60)))?;
            let long = e(morse_audit(&e(Orbit::from_word(&rep, &w))?, &[1], 1.0, &caps))?;
            let short = e(morse_audit(&e(Orbit::from_word(&rep, &w[..60]))?, &[1], 1.0, &caps))?;
            worst_ratio = worst_ratio.max(long.max_upper / short.max_upper);
        }
        let points: Vec<SquareMatrix> = (0..=30)
            .map(|k| SquareMatrix::diag(&[(0.4 * k as f64).exp(), 1.0, (-0.4 * k as f64).exp()]).unwrap())
            .collect();
        let diag_bound = e(morse_audit(&e(Orbit::from_points(&points))?, &[1, 2], 1.0, &caps))?.max_upper;
        let mut inversions = 0;
        for _ in 0..1000 {
            let (d, _) = pick_dp(&mut r);
            let theta: Vec<usize> = loop {
                let t: Vec<usize> = (1..d).filter(|_| r.gen_bool(0.5)).collect();
                if !t.is_empty() {
                    break t;
                }
            };
            let flag = |r: &mut ChaCha8Rng, th: &[usize]| {
                let q = orthogonal(r, d);
                let spaces = th.iter().map(|&p| Subspace::from_orthonormal(q.columns(0, p).into_owned())).collect();
                PartialFlag::new(th.to_vec(), spaces).unwrap()
            };
            let ef = flag(&mut r, &theta);
            let ff = flag(&mut r, &iota_theta(&theta, d));
            let b = e(parallel_set_distance_bounds(&ef, &ff))?;
            if b.lower > b.upper + 1e-9 {
                inversions += 1;
            }
        }
        Ok((worst_ratio, diag_bound, inversions))
    });
    let (ratio, diag_bound, inversions) = res?;
    Ok(Outcome::check(
        ratio < 1.1 && diag_bound < 1e-8 && inversions == 0 && t < 120.0,
        format!("worst length-120/length-60 ratio {ratio:.4}, diagonal geodesic bound {diag_bound:.1e}, bracket inversions {inversions}/1000, {t:.1}s"),
    ))
}

// 7. Limit maps along eventually periodic rays.
fn limit_map_coherence() -> Res {
    let rep = z3_z2_family(2.0).unwrap();
    let pres = rep.pres();
    let auto = e(geodesic_automaton(pres, 8, DEFAULT_R_PROBE))?;
    let synth = e(synthesize_family(&recurrent_cocycle(&rep)?, &SynthConfig::new(1, 40)))?;
    let mut r = rng(7);
    let mut seen = HashSet::new();
    let mut worst: f64 = 0.0;
    let mut seeds = BTreeMap::new();
    while seen.len() < 50 {
        let lead = if r.gen_bool(0.5) { "b" } else { "" };
        let k = r.gen_range(0..3);
        let prefix = format!("{lead}{}", alternating_word(&mut r, k));
        let m = r.gen_range(1..4);
        let period = alternating_word(&mut r, m);
        if !seen.insert((prefix.clone(), period.clone())) {
            continue;
        }
        let ray = e(BoundaryRay::parse(pres, &prefix, &period))?;
        let a = e(limit_map(&rep, 1, &ray, 60))?.subspace;
        let seed = seen.len() as u64;
        seeds.insert(ray.describe(pres), seed);
        let b = e(cone_limit_check(&rep, &auto, &synth.family, &ray, 60, Some(seed)))?.subspace;
        let c = e(periodic_limit(&rep, 1, &ray))?;
        for (x, y) in [(&a, &b), (&a, &c), (&b, &c)] {
            worst = worst.max(e(grassmann_distance(x, y))?);
        }
    }
    Ok(Outcome::check(worst < 1e-7, format!("{} rays, worst pairwise distance {worst:.1e}", seeds.len())))
}

fn main() {
    let criteria: [(&str, fn() -> Res); 7] = [
        ("worked example", worked_example),
        ("appendix property suite", appendix_suite),
        ("sequence splittings", sequence_splittings),
        ("cone types", cone_type_counts),
        ("multicone soundness", multicone_soundness),
        ("Morse audit", morse_uniformity),
        ("limit-map coherence", limit_map_coherence),
    ];
    let mut unexpected = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (outcome, t) = timed(run);
        let line = match outcome {
            Ok(o) if o.pass => format!("PASS {}. {name}: {} [{t:.1}s]", i + 1, o.detail),
            Ok(o) if o.expected => format!("FAIL {}. {name} (expected): {} [{t:.1}s]", i + 1, o.detail),
            Ok(o) => {
                unexpected += 1;
                format!("FAIL {}. {name}: {} [{t:.1}s]", i + 1, o.detail)
            }
            Err(msg) => {
                unexpected += 1;
                format!("FAIL {}. {name}: error {msg} [{t:.1}s]", i + 1)
            }
        };
        println!("{line}");
    }
    if unexpected > 0 {
        std::process::exit(1);
    }
}
