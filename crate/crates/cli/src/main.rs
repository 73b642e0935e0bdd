use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use anosov_core::cocycle::Verdict;
use anosov_core::group::{cone_types, geodesic_automaton, recurrent_subgraph, GeodesicAutomaton, DEFAULT_R_PROBE};
use anosov_core::io::{self, AutomatonFile, FamilyFile};
use anosov_core::matgeo::TOL_GAP;
use anosov_core::morse::{morse_audit, MorseCaps};
use anosov_core::multicone::{synthesize_family, verify_family, FamilyVerdict, SoficCocycle, SynthConfig, DEFAULT_MARGIN_FLOOR};
use anosov_core::reprcheck::{domination_report_tol, limit_map, BoundaryRay, Representation};
use anosov_core::Error;

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_NEGATIVE: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

/// Radius used to build the geodesic automaton behind multicone commands.
const AUTOMATON_RADIUS: usize = 8;

#[derive(Parser)]
#[command(name = "anosov", version, about = "Domination and Anosov checks for matrix groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args, Default, Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Opts {
    /// Flat TOML file with any of the options below; flags take precedence.
    #[arg(long, global = true)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    p: Option<usize>,
    #[arg(long, global = true)]
    radius: Option<usize>,
    #[arg(long, global = true)]
    depth: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long = "tol-gap", global = true)]
    tol_gap: Option<f64>,
    #[arg(long = "margin-floor", global = true)]
    margin_floor: Option<f64>,
    #[arg(long = "c-target", global = true)]
    c_target: Option<f64>,
    /// Cone family file for `multicone verify`.
    #[arg(long, global = true)]
    family: Option<PathBuf>,
    /// Flag indices for `morse`, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    theta: Option<Vec<usize>>,
    /// Ray list for `limitmap`: JSON [{"prefix": "...", "period": "..."}].
    #[arg(long, global = true)]
    rays: Option<PathBuf>,
    /// Without --rays, `limitmap` uses all periods up to this length.
    #[arg(long = "max-period", global = true)]
    max_period: Option<usize>,
}

impl Opts {
    fn merge(self, file: Opts) -> Opts {
        Opts {
            config: self.config,
            input: self.input.or(file.input),
            p: self.p.or(file.p),
            radius: self.radius.or(file.radius),
            depth: self.depth.or(file.depth),
            out: self.out.or(file.out),
            workers: self.workers.or(file.workers),
            seed: self.seed.or(file.seed),
            tol_gap: self.tol_gap.or(file.tol_gap),
            margin_floor: self.margin_floor.or(file.margin_floor),
            c_target: self.c_target.or(file.c_target),
            family: self.family.or(file.family),
            theta: self.theta.or(file.theta),
            rays: self.rays.or(file.rays),
            max_period: self.max_period.or(file.max_period),
        }
    }

    fn input(&self) -> Result<&Path> {
        self.input.as_deref().context("--input is required")
    }

    fn out(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn p(&self) -> usize {
        self.p.unwrap_or(1)
    }

    fn positive(&self) -> Result<()> {
        for (name, v) in [("tol-gap", self.tol_gap), ("margin-floor", self.margin_floor), ("c-target", self.c_target)] {
            if let Some(x) = v {
                if !(x > 0.0) {
                    bail!("--{name} must be positive");
                }
            }
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Ball enumeration of singular-value gaps.
    Domcheck,
    /// Verify or synthesize a strictly invariant multicone family.
    Multicone {
        #[command(subcommand)]
        action: MulticoneAction,
    },
    /// Limit map along eventually periodic rays.
    Limitmap,
    /// Parallel-set audit of an orbit.
    Morse,
    /// Cone types and the geodesic automaton.
    Conetypes,
}

#[derive(Subcommand, Clone, Copy)]
enum MulticoneAction {
    Verify,
    Synth,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    config: &'a Opts,
    provenance: BTreeMap<&'static str, &'static str>,
    result: T,
}

fn write_report<T: Serialize>(opts: &Opts, command: &str, name: &str, provenance: &[(&'static str, &'static str)], result: T) -> Result<()> {
    let env = Envelope { command, seed: opts.seed(), config: opts, provenance: provenance.iter().copied().collect(), result };
    io::write_json(&opts.out().join(name), &env)?;
    Ok(())
}

fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    io::write_atomic(path, &w.into_inner()?)?;
    Ok(())
}

fn recurrent_automaton(rep: &Representation) -> Result<GeodesicAutomaton> {
    let auto = geodesic_automaton(rep.pres(), AUTOMATON_RADIUS, DEFAULT_R_PROBE)?;
    if !auto.certified {
        bail!("geodesic automaton did not stabilize; supply an explicit automaton");
    }
    Ok(recurrent_subgraph(&auto)?)
}

fn cmd_domcheck(opts: &Opts) -> Result<u8> {
    let rep = io::read_representation(opts.input()?)?;
    let report = domination_report_tol(&rep, opts.p(), opts.radius.unwrap_or(10), opts.tol_gap.unwrap_or(TOL_GAP))?;
    #[derive(Serialize)]
    struct Row {
        length: usize,
        min_gap: f64,
        mean_gap: f64,
    }
    write_csv(
        &opts.out().join("gaps.csv"),
        report.rows.iter().map(|r| Row { length: r.length, min_gap: r.min_gap, mean_gap: r.mean_gap }),
    )?;
    let code = match report.verdict {
        Verdict::Dominated => EXIT_OK,
        Verdict::NotDominated => EXIT_NEGATIVE,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    };
    println!("{:?} lambda_hat={:.6} c_hat={:.6}", report.verdict, report.lambda_hat, report.c_hat);
    write_report(opts, "domcheck", "domination.json", &[("lambda_hat", "fitted"), ("c_hat", "fitted")], report)?;
    Ok(code)
}

#[derive(Serialize)]
struct MarginRow {
    edge: String,
    component: usize,
    target: Option<usize>,
    margin: f64,
}

fn margin_rows(v: &anosov_core::multicone::FamilyVerification) -> Vec<MarginRow> {
    v.edges
        .iter()
        .map(|e| MarginRow { edge: format!("{}-{}-{}", e.tail, e.label, e.head), component: e.component, target: e.target, margin: e.margin })
        .collect()
}

fn cmd_multicone(opts: &Opts, action: MulticoneAction) -> Result<u8> {
    let rep = io::read_representation(opts.input()?)?;
    let cocycle = SoficCocycle::from_representation(&rep, recurrent_automaton(&rep)?)?;
    let floor = opts.margin_floor.unwrap_or(DEFAULT_MARGIN_FLOOR);
    let provenance = [("margin", "certificate: S-procedure lower bound on containment")];
    match action {
        MulticoneAction::Verify => {
            let fam = io::read_family(opts.family.as_deref().context("--family is required for verify")?)?;
            if fam.p != opts.p.unwrap_or(fam.p) {
                return Err(Error::IndexMismatch(format!("family has index {} but --p is {}", fam.p, opts.p())).into());
            }
            let v = verify_family(&cocycle, &fam, floor)?;
            write_csv(&opts.out().join("margins.csv"), margin_rows(&v))?;
            println!("{:?} min_margin={:.6e}", v.verdict, v.min_margin);
            let code = if v.verdict == FamilyVerdict::Certified { EXIT_OK } else { EXIT_NEGATIVE };
            write_report(opts, "multicone verify", "verification.json", &provenance, v)?;
            Ok(code)
        }
        MulticoneAction::Synth => {
            let mut cfg = SynthConfig::new(opts.p(), opts.radius.unwrap_or(40));
            cfg.margin_floor = floor;
            cfg.seed = opts.seed();
            match synthesize_family(&cocycle, &cfg) {
                Ok(s) => {
                    io::write_json(&opts.out().join("family.json"), &FamilyFile::of(&s.family))?;
                    write_csv(&opts.out().join("margins.csv"), margin_rows(&s.verification))?;
                    println!("Certified candidate={} min_margin={:.6e}", s.candidate, s.verification.min_margin);
                    #[derive(Serialize)]
                    struct Out<'a> {
                        candidate: &'a str,
                        candidates_tried: usize,
                        verification: &'a anosov_core::multicone::FamilyVerification,
                    }
                    let out = Out { candidate: &s.candidate, candidates_tried: s.candidates_tried, verification: &s.verification };
                    write_report(opts, "multicone synth", "synthesis.json", &provenance, out)?;
                    Ok(EXIT_OK)
                }
                Err(Error::NoCandidateCertified { best_min_margin, table }) => {
                    #[derive(Serialize)]
                    struct Diag {
                        verdict: &'static str,
                        best_min_margin: f64,
                        table: Vec<anosov_core::multicone::EdgeMargin>,
                    }
                    println!("NoCandidateCertified best_min_margin={best_min_margin:.6e}");
                    let d = Diag { verdict: "NoCandidateCertified", best_min_margin, table };
                    write_report(opts, "multicone synth", "synthesis.json", &provenance, d)?;
                    Ok(EXIT_NEGATIVE)
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

#[derive(Deserialize)]
struct RaySpec {
    #[serde(default)]
    prefix: String,
    period: String,
}

fn all_periodic_rays(rep: &Representation, max_period: usize) -> Vec<BoundaryRay> {
    let pres = rep.pres();
    let k = pres.num_letters();
    let mut out = Vec::new();
    let mut words: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..max_period {
        words = words
            .iter()
            .flat_map(|w| (0..k).map(move |l| [w.as_slice(), &[l]].concat()))
            .collect();
        for w in &words {
            if let Ok(r) = BoundaryRay::new(pres, vec![], w.clone()) {
                // Skip periods that are powers of shorter ones.
                if (1..w.len()).any(|d| w.len() % d == 0 && w.iter().enumerate().all(|(i, &x)| x == w[i % d])) {
                    continue;
                }
                out.push(r);
            }
        }
    }
    out
}

fn cmd_limitmap(opts: &Opts) -> Result<u8> {
    let rep = io::read_representation(opts.input()?)?;
    let rays = match &opts.rays {
        Some(path) => {
            let specs: Vec<RaySpec> = io::read_json(path)?;
            specs
                .iter()
                .map(|s| BoundaryRay::parse(rep.pres(), &s.prefix, &s.period))
                .collect::<std::result::Result<Vec<_>, _>>()?
        }
        None => all_periodic_rays(&rep, opts.max_period.unwrap_or(4)),
    };
    if rays.is_empty() {
        bail!("no geodesic rays to evaluate");
    }
    let depth = opts.depth.unwrap_or(60);
    #[derive(Serialize)]
    struct RayResult {
        ray: String,
        converged: bool,
        point: Option<anosov_core::reprcheck::LimitPoint>,
        error: Option<String>,
    }
    let results: Vec<RayResult> = rays
        .iter()
        .map(|r| match limit_map(&rep, opts.p(), r, depth) {
            Ok(pt) => RayResult { ray: r.describe(rep.pres()), converged: true, point: Some(pt), error: None },
            Err(e) => RayResult { ray: r.describe(rep.pres()), converged: false, point: None, error: Some(e.to_string()) },
        })
        .collect();
    #[derive(Serialize)]
    struct Row<'a> {
        ray: &'a str,
        converged: bool,
        residual: Option<f64>,
        eigen_residual: Option<f64>,
    }
    write_csv(
        &opts.out().join("limitmap.csv"),
        results.iter().map(|r| Row {
            ray: &r.ray,
            converged: r.converged,
            residual: r.point.as_ref().map(|p| p.residual),
            eigen_residual: r.point.as_ref().and_then(|p| p.eigen_residual),
        }),
    )?;
    let failed = results.iter().filter(|r| !r.converged).count();
    println!("{} rays, {} failed", results.len(), failed);
    write_report(opts, "limitmap", "limitmap.json", &[("residual", "distance between the last two approximants")], &results)?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_NEGATIVE })
}

fn cmd_morse(opts: &Opts) -> Result<u8> {
    let orbit = io::read_orbit(opts.input()?)?;
    let theta = opts.theta.clone().unwrap_or_else(|| vec![opts.p()]);
    let c_target = opts.c_target.unwrap_or(1.0);
    let report = morse_audit(&orbit, &theta, c_target, &MorseCaps::default())?;
    write_csv(&opts.out().join("morse.csv"), &report.rows)?;
    println!("max_upper={:.6e} at k={} within_target={}", report.max_upper, report.argmax, report.within_target);
    let code = if report.within_target { EXIT_OK } else { EXIT_NEGATIVE };
    let provenance = [
        ("lower", "weakened-lower"),
        ("upper", "constructive-upper"),
        ("mu", "fitted"),
        ("c", "fitted"),
    ];
    write_report(opts, "morse", "morse.json", &provenance, report)?;
    Ok(code)
}

fn cmd_conetypes(opts: &Opts) -> Result<u8> {
    let pres = io::read_presentation(opts.input()?)?;
    let radius = opts.radius.unwrap_or(AUTOMATON_RADIUS);
    let auto = geodesic_automaton(&pres, radius, DEFAULT_R_PROBE)?;
    let recurrent = recurrent_subgraph(&auto)?;
    let names = pres.names();
    io::write_json(&opts.out().join("automaton.json"), &AutomatonFile::from_automaton(&auto, names))?;
    io::write_json(&opts.out().join("recurrent.json"), &AutomatonFile::from_automaton(&recurrent, names))?;
    #[derive(Serialize)]
    struct Summary {
        vertices: usize,
        recurrent_vertices: usize,
        certified: bool,
        witnesses: BTreeMap<usize, String>,
        stabilized: Option<bool>,
    }
    let stabilized = match pres.supplied_automaton() {
        Some(_) => None,
        None => Some(cone_types(&pres, radius, DEFAULT_R_PROBE)?.stabilized),
    };
    let summary = Summary {
        vertices: auto.vertices.len(),
        recurrent_vertices: recurrent.vertices.len(),
        certified: auto.certified,
        witnesses: auto.witnesses.iter().map(|(v, w)| (*v, pres.format_word(w))).collect(),
        stabilized,
    };
    println!("{} cone types, {} recurrent, certified={}", summary.vertices, summary.recurrent_vertices, summary.certified);
    let code = if auto.certified { EXIT_OK } else { EXIT_INCONCLUSIVE };
    write_report(opts, "conetypes", "conetypes.json", &[], summary)?;
    Ok(code)
}

fn run(cli: Cli) -> Result<u8> {
    let mut opts = cli.opts;
    if let Some(path) = &opts.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: Opts = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        opts = opts.merge(file);
    }
    opts.positive()?;
    if let Some(n) = opts.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Domcheck => cmd_domcheck(&opts),
        Command::Multicone { action } => cmd_multicone(&opts, action),
        Command::Limitmap => cmd_limitmap(&opts),
        Command::Morse => cmd_morse(&opts),
        Command::Conetypes => cmd_conetypes(&opts),
    }
}

fn main() -> ExitCode {
    // Usage errors share the input-error code; clap's own code 2 would read as a negative result.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
