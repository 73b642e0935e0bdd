//! JSON file formats and atomic writes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cocycle::MatrixSequence;
use crate::error::{Error, Result};
use crate::group::{Edge, Family, GeodesicAutomaton, GroupPresentation};
use crate::matgeo::{Mat, SquareMatrix};
use crate::multicone::{ConeFamily, Multicone, QuadraticCone};
use crate::reprcheck::Representation;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), cause: source }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let name = path.file_name().ok_or_else(|| Error::InvalidInput(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AutomatonFile {
    pub vertices: Vec<usize>,
    #[serde(default)]
    pub start: Option<usize>,
    /// [tail, label, head] with the label given by generator name.
    pub edges: Vec<(usize, String, usize)>,
    #[serde(default)]
    pub certified: bool,
}

impl AutomatonFile {
    pub fn from_automaton(auto: &GeodesicAutomaton, names: &[String]) -> Self {
        Self {
            vertices: auto.vertices.clone(),
            start: auto.start,
            edges: auto.edges.iter().map(|e| (e.tail, names[e.label].clone(), e.head)).collect(),
            certified: auto.certified,
        }
    }

    pub fn to_automaton(&self, names: &[String]) -> Result<GeodesicAutomaton> {
        let edges = self
            .edges
            .iter()
            .map(|(t, l, h)| {
                let label = names
                    .iter()
                    .position(|n| n == l)
                    .ok_or_else(|| Error::AutomatonMismatch(format!("edge label {l} is not a generator")))?;
                Ok(Edge { tail: *t, label, head: *h })
            })
            .collect::<Result<_>>()?;
        let mut auto = GeodesicAutomaton::new(self.vertices.clone(), self.start, edges)?;
        auto.certified = self.certified;
        Ok(auto)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PresentationParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genus: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse_pairs: Option<Vec<(String, String)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub automaton: Option<AutomatonFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PresentationSpec {
    pub family: String,
    #[serde(default)]
    pub params: PresentationParams,
    /// Relative paths resolve against the directory of the containing file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub automaton_file: Option<PathBuf>,
}

impl PresentationSpec {
    pub fn of(pres: &GroupPresentation) -> Self {
        let mut params = PresentationParams::default();
        let family = match pres.family() {
            Family::Free { rank } => {
                params.rank = Some(*rank);
                "free"
            }
            Family::FreeProduct { m, n } => {
                params.m = Some(*m);
                params.n = Some(*n);
                "free_product"
            }
            Family::Surface { genus } => {
                params.genus = Some(*genus);
                "surface"
            }
            Family::ExplicitAutomaton => {
                let names = pres.names().to_vec();
                let mut pairs = Vec::new();
                for l in 0..pres.num_letters() {
                    if let Some(j) = pres.inverse_letter(l) {
                        if l <= j {
                            pairs.push((names[l].clone(), names[j].clone()));
                        }
                    }
                }
                params.automaton = pres.supplied_automaton().map(|a| AutomatonFile::from_automaton(a, &names));
                params.generators = Some(names);
                params.inverse_pairs = Some(pairs);
                "automaton"
            }
        };
        Self { family: family.into(), params, automaton_file: None }
    }

    pub fn build(&self, base_dir: &Path) -> Result<GroupPresentation> {
        let need = |v: Option<usize>, key: &str| {
            v.ok_or_else(|| Error::InvalidInput(format!("presentation family {} needs params.{key}", self.family)))
        };
        match self.family.as_str() {
            "free" => GroupPresentation::free(need(self.params.rank, "rank")?),
            "free_product" => GroupPresentation::free_product(need(self.params.m, "m")?, need(self.params.n, "n")?),
            "surface" => GroupPresentation::surface(need(self.params.genus, "genus")?),
            "automaton" => {
                let names = self
                    .params
                    .generators
                    .clone()
                    .ok_or_else(|| Error::InvalidInput("automaton family needs params.generators".into()))?;
                let file = match (&self.params.automaton, &self.automaton_file) {
                    (Some(a), _) => a.clone(),
                    (None, Some(p)) => read_json(&base_dir.join(p))?,
                    (None, None) => {
                        return Err(Error::InvalidInput("automaton family needs an automaton or automaton_file".into()))
                    }
                };
                let auto = file.to_automaton(&names)?;
                GroupPresentation::explicit(names, self.params.inverse_pairs.as_deref().unwrap_or(&[]), auto)
            }
            other => Err(Error::InvalidInput(format!("unknown presentation family {other}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RepresentationFile {
    pub presentation: PresentationSpec,
    pub d: usize,
    pub images: BTreeMap<String, SquareMatrix>,
    #[serde(default)]
    pub unimodular: bool,
}

impl RepresentationFile {
    pub fn of(rep: &Representation) -> Self {
        Self {
            presentation: PresentationSpec::of(rep.pres()),
            d: rep.d(),
            images: rep.generator_images(),
            unimodular: rep.unimodular(),
        }
    }

    pub fn build(&self, base_dir: &Path) -> Result<Representation> {
        let pres = Arc::new(self.presentation.build(base_dir)?);
        let rep = Representation::new(pres, &self.images, self.unimodular)?;
        if rep.d() != self.d {
            return Err(Error::DimensionMismatch(format!("declared d = {} but images are {}x{}", self.d, rep.d(), rep.d())));
        }
        Ok(rep)
    }
}

fn base_of(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn read_presentation(path: &Path) -> Result<GroupPresentation> {
    read_json::<PresentationSpec>(path)?.build(&base_of(path))
}

pub fn read_representation(path: &Path) -> Result<Representation> {
    read_json::<RepresentationFile>(path)?.build(&base_of(path))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComponentFile {
    pub form: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyFile {
    pub p: usize,
    pub vertices: BTreeMap<String, Vec<ComponentFile>>,
}

impl FamilyFile {
    pub fn of(fam: &ConeFamily) -> Self {
        let vertices = fam
            .vertices
            .iter()
            .map(|(v, m)| {
                let comps = m
                    .components
                    .iter()
                    .map(|c| {
                        let f = c.form();
                        ComponentFile { form: (0..f.nrows()).map(|i| f.row(i).iter().copied().collect()).collect() }
                    })
                    .collect();
                (v.to_string(), comps)
            })
            .collect();
        Self { p: fam.p, vertices }
    }

    pub fn build(&self) -> Result<ConeFamily> {
        let mut vertices = BTreeMap::new();
        for (key, comps) in &self.vertices {
            let v: usize = key.parse().map_err(|_| Error::InvalidInput(format!("vertex id {key} is not an integer")))?;
            let cones = comps
                .iter()
                .map(|c| {
                    let d = c.form.len();
                    if c.form.iter().any(|r| r.len() != d) {
                        return Err(Error::DimensionMismatch(format!("form at vertex {v} is not square")));
                    }
                    QuadraticCone::new(Mat::from_fn(d, d, |i, j| c.form[i][j]), self.p)
                })
                .collect::<Result<_>>()?;
            vertices.insert(v, Multicone::new(self.p, cones)?);
        }
        ConeFamily::new(self.p, vertices)
    }
}

pub fn read_family(path: &Path) -> Result<ConeFamily> {
    read_json::<FamilyFile>(path)?.build()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceFile {
    #[serde(default)]
    pub index_origin: i64,
    pub matrices: Vec<SquareMatrix>,
}

pub fn read_sequence(path: &Path) -> Result<MatrixSequence> {
    let f: SequenceFile = read_json(path)?;
    MatrixSequence::new(f.index_origin, f.matrices)
}

/// Orbit input: a list of matrices h_n, or a representation and a word.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrbitFile {
    Points(Vec<SquareMatrix>),
    Word { representation: RepresentationFile, word: String },
}

pub fn read_orbit(path: &Path) -> Result<crate::morse::Orbit> {
    match read_json::<OrbitFile>(path)? {
        OrbitFile::Points(points) => crate::morse::Orbit::from_points(&points),
        OrbitFile::Word { representation, word } => {
            let rep = representation.build(&base_of(path))?;
            let w = rep.pres().parse_word(&word)?;
            if w.is_empty() {
                return Err(Error::TooShort("orbit word is empty".into()));
            }
            crate::morse::Orbit::from_word(&rep, &w)
        }
    }
}
