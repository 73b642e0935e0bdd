//! Word problems, geodesic balls, cone types and geodesic automata.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::RwLock;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::error::{Error, Result};

pub type Letter = usize;

pub const DEFAULT_BALL_CAP: usize = 2_000_000;
pub const DEFAULT_R_PROBE: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Family {
    Free { rank: usize },
    /// ℤ/m ∗ ℤ/n with generators a (order m) and b (order n).
    FreeProduct { m: usize, n: usize },
    Surface { genus: usize },
    ExplicitAutomaton,
}

#[derive(Debug)]
pub struct GroupPresentation {
    family: Family,
    names: Vec<String>,
    inverse: Vec<Option<Letter>>,
    relators: Vec<Vec<Letter>>,
    /// FreeProduct: letter → (factor, ±1).
    syllable: Vec<(usize, i64)>,
    automaton: Option<GeodesicAutomaton>,
    surface: Option<RwLock<SurfaceBall>>,
    ball_cap: usize,
}

impl Clone for GroupPresentation {
    fn clone(&self) -> Self {
        Self {
            family: self.family.clone(),
            names: self.names.clone(),
            inverse: self.inverse.clone(),
            relators: self.relators.clone(),
            syllable: self.syllable.clone(),
            automaton: self.automaton.clone(),
            surface: self
                .surface
                .as_ref()
                .map(|s| RwLock::new(s.read().unwrap().clone())),
            ball_cap: self.ball_cap,
        }
    }
}

fn letter_name(i: usize, upper: bool) -> String {
    let c = (b'a' + i as u8) as char;
    if upper {
        c.to_ascii_uppercase().to_string()
    } else {
        c.to_string()
    }
}

impl GroupPresentation {
    pub fn free(rank: usize) -> Result<Self> {
        if rank > 26 {
            return Err(Error::InvalidInput("free rank above 26 is not supported".into()));
        }
        let mut names = Vec::new();
        let mut inverse = Vec::new();
        for i in 0..rank {
            names.push(letter_name(i, false));
            names.push(letter_name(i, true));
            inverse.push(Some(2 * i + 1));
            inverse.push(Some(2 * i));
        }
        Ok(Self::assemble(Family::Free { rank }, names, inverse, vec![], vec![]))
    }

    pub fn free_product(m: usize, n: usize) -> Result<Self> {
        if m < 2 || n < 2 {
            return Err(Error::InvalidInput("free product factors need order >= 2".into()));
        }
        let mut names = Vec::new();
        let mut inverse = Vec::new();
        let mut syllable = Vec::new();
        let mut relators = Vec::new();
        for (factor, order) in [m, n].into_iter().enumerate() {
            let base = names.len();
            names.push(letter_name(factor, false));
            syllable.push((factor, 1));
            if order > 2 {
                names.push(letter_name(factor, true));
                syllable.push((factor, -1));
                inverse.push(Some(base + 1));
                inverse.push(Some(base));
            } else {
                inverse.push(Some(base));
            }
            relators.push(vec![base; order]);
        }
        Ok(Self::assemble(Family::FreeProduct { m, n }, names, inverse, relators, syllable))
    }

    pub fn surface(genus: usize) -> Result<Self> {
        if genus < 2 {
            return Err(Error::InvalidInput("surface genus must be >= 2".into()));
        }
        let mut names = Vec::new();
        let mut inverse = Vec::new();
        let mut relator = Vec::new();
        for i in 0..genus {
            let base = 4 * i;
            names.extend([
                format!("a{}", i + 1),
                format!("A{}", i + 1),
                format!("b{}", i + 1),
                format!("B{}", i + 1),
            ]);
            inverse.extend([Some(base + 1), Some(base), Some(base + 3), Some(base + 2)]);
            relator.extend([base, base + 2, base + 1, base + 3]);
        }
        let mut pres = Self::assemble(Family::Surface { genus }, names, inverse, vec![relator], vec![]);
        pres.surface = Some(RwLock::new(SurfaceBall::new(&pres)));
        Ok(pres)
    }

    /// A group given only through a user-supplied geodesic automaton.
    pub fn explicit(names: Vec<String>, inverse_pairs: &[(String, String)], automaton: GeodesicAutomaton) -> Result<Self> {
        let pos = |n: &str| {
            names
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| Error::InvalidInput(format!("unknown generator {n}")))
        };
        let mut inverse = vec![None; names.len()];
        for (a, b) in inverse_pairs {
            let (i, j) = (pos(a)?, pos(b)?);
            inverse[i] = Some(j);
            inverse[j] = Some(i);
        }
        for e in &automaton.edges {
            if e.label >= names.len() {
                return Err(Error::AutomatonMismatch(format!("edge label {} out of range", e.label)));
            }
        }
        let mut pres = Self::assemble(Family::ExplicitAutomaton, names, inverse, vec![], vec![]);
        pres.automaton = Some(automaton);
        Ok(pres)
    }

    fn assemble(
        family: Family,
        names: Vec<String>,
        inverse: Vec<Option<Letter>>,
        relators: Vec<Vec<Letter>>,
        syllable: Vec<(usize, i64)>,
    ) -> Self {
        Self {
            family,
            names,
            inverse,
            relators,
            syllable,
            automaton: None,
            surface: None,
            ball_cap: DEFAULT_BALL_CAP,
        }
    }

    pub fn with_ball_cap(mut self, cap: usize) -> Self {
        self.ball_cap = cap;
        self
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn num_letters(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, l: Letter) -> &str {
        &self.names[l]
    }

    pub fn relators(&self) -> &[Vec<Letter>] {
        &self.relators
    }

    pub fn supplied_automaton(&self) -> Option<&GeodesicAutomaton> {
        self.automaton.as_ref()
    }

    pub fn letter(&self, name: &str) -> Option<Letter> {
        self.names.iter().position(|n| n == name)
    }

    pub fn inverse_letter(&self, l: Letter) -> Option<Letter> {
        self.inverse[l]
    }

    pub fn inverse(&self, w: &[Letter]) -> Result<Vec<Letter>> {
        w.iter()
            .rev()
            .map(|&l| {
                self.inverse[l]
                    .ok_or_else(|| Error::InvalidWord(format!("generator {} has no inverse", self.names[l])))
            })
            .collect()
    }

    /// Parse a word by greedy longest match of generator names; spaces, '*' and '.' are ignored.
    pub fn parse_word(&self, s: &str) -> Result<Vec<Letter>> {
        let cleaned: String = s.chars().filter(|c| !c.is_whitespace() && *c != '*' && *c != '.').collect();
        let mut out = Vec::new();
        let mut rest = cleaned.as_str();
        while !rest.is_empty() {
            let best = (0..self.names.len())
                .filter(|&i| rest.starts_with(self.names[i].as_str()))
                .max_by_key(|&i| self.names[i].len())
                .ok_or_else(|| Error::InvalidWord(format!("cannot parse '{rest}'")))?;
            out.push(best);
            rest = &rest[self.names[best].len()..];
        }
        Ok(out)
    }

    pub fn parse_letters(&self, names: &[String]) -> Result<Vec<Letter>> {
        names
            .iter()
            .map(|n| self.letter(n).ok_or_else(|| Error::InvalidWord(format!("unknown generator {n}"))))
            .collect()
    }

    pub fn format_word(&self, w: &[Letter]) -> String {
        w.iter().map(|&l| self.names[l].as_str()).collect()
    }

    fn check_word(&self, w: &[Letter]) -> Result<()> {
        if let Some(&bad) = w.iter().find(|&&l| l >= self.names.len()) {
            return Err(Error::InvalidWord(format!("letter index {bad} out of range")));
        }
        Ok(())
    }

    /// Geodesic normal form.
    pub fn normalize(&self, w: &[Letter]) -> Result<Vec<Letter>> {
        self.check_word(w)?;
        match self.family {
            Family::Free { .. } => Ok(self.free_reduce(w)),
            Family::FreeProduct { m, n } => Ok(self.syllable_normal_form(w, [m, n])),
            Family::Surface { .. } => self.surface_normal_form(w),
            Family::ExplicitAutomaton => Err(Error::UnsupportedFamily(
                "explicit automaton input has no normalization table".into(),
            )),
        }
    }

    pub fn word_length(&self, w: &[Letter]) -> Result<usize> {
        Ok(self.normalize(w)?.len())
    }

    /// d(γ,η) = |η⁻¹γ|.
    pub fn distance(&self, g: &[Letter], h: &[Letter]) -> Result<usize> {
        let mut w = self.inverse(h)?;
        w.extend_from_slice(g);
        self.word_length(&w)
    }

    pub fn multiply(&self, u: &[Letter], v: &[Letter]) -> Result<Vec<Letter>> {
        let mut w = u.to_vec();
        w.extend_from_slice(v);
        self.normalize(&w)
    }

    fn free_reduce(&self, w: &[Letter]) -> Vec<Letter> {
        let mut out: Vec<Letter> = Vec::with_capacity(w.len());
        for &l in w {
            if out.last().is_some_and(|&t| self.inverse[t] == Some(l)) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        out
    }

    fn syllable_normal_form(&self, w: &[Letter], orders: [usize; 2]) -> Vec<Letter> {
        let mut stack: Vec<(usize, i64)> = Vec::new();
        for &l in w {
            let (f, e) = self.syllable[l];
            let order = orders[f] as i64;
            match stack.last_mut() {
                Some(top) if top.0 == f => {
                    top.1 = (top.1 + e).rem_euclid(order);
                    if top.1 == 0 {
                        stack.pop();
                    }
                }
                _ => stack.push((f, e.rem_euclid(order))),
            }
        }
        let mut out = Vec::new();
        for (f, e) in stack {
            let r = reduced_exponent(e, orders[f]);
            let gen = self.syllable.iter().position(|&s| s == (f, 1)).unwrap();
            let letter = if r > 0 {
                gen
            } else {
                self.syllable.iter().position(|&s| s == (f, -1)).unwrap()
            };
            out.extend(std::iter::repeat(letter).take(r.unsigned_abs() as usize));
        }
        out
    }

    fn surface_normal_form(&self, w: &[Letter]) -> Result<Vec<Letter>> {
        let lock = self.surface.as_ref().unwrap();
        let reduced = lock.read().unwrap().dehn(w);
        {
            let ball = lock.read().unwrap();
            if reduced.len() <= ball.radius {
                return Ok(ball.canonical(&reduced).expect("element within ball radius"));
            }
        }
        let mut ball = lock.write().unwrap();
        ball.grow(self, reduced.len(), self.ball_cap)?;
        Ok(ball.canonical(&reduced).expect("element within ball radius"))
    }

    /// All elements of length ≤ R with geodesic representatives, sorted by length.
    pub fn ball(&self, radius: usize) -> Result<Ball> {
        match self.family {
            Family::Surface { .. } => {
                let lock = self.surface.as_ref().unwrap();
                if lock.read().unwrap().radius < radius {
                    lock.write().unwrap().grow(self, radius, self.ball_cap)?;
                }
                let b = lock.read().unwrap();
                let elements: Vec<Vec<Letter>> =
                    b.elements.iter().filter(|w| w.len() <= radius).cloned().collect();
                Ok(Ball::new(radius, elements))
            }
            Family::ExplicitAutomaton => Err(Error::UnsupportedFamily(
                "ball enumeration needs a normal form".into(),
            )),
            _ => self.ball_by_normal_forms(radius),
        }
    }

    fn ball_by_normal_forms(&self, radius: usize) -> Result<Ball> {
        let mut elements = vec![vec![]];
        let mut seen: HashSet<Vec<Letter>> = HashSet::from([vec![]]);
        let mut sphere: Vec<Vec<Letter>> = vec![vec![]];
        for n in 0..radius {
            if elements.len() + sphere.len() * self.num_letters() > self.ball_cap {
                return Err(Error::BallTooLarge { radius, cap: self.ball_cap });
            }
            let mut next = Vec::new();
            for w in &sphere {
                for s in 0..self.num_letters() {
                    let mut c = w.clone();
                    c.push(s);
                    let c = self.normalize(&c)?;
                    if c.len() == n + 1 && seen.insert(c.clone()) {
                        next.push(c);
                    }
                }
            }
            next.sort();
            elements.extend(next.iter().cloned());
            sphere = next;
        }
        Ok(Ball::new(radius, elements))
    }

    /// Number of geodesic words of each length 0..=R (not elements).
    pub fn geodesic_word_counts(&self, radius: usize) -> Result<Vec<usize>> {
        let mut counts = vec![1usize];
        let mut layer: Vec<Vec<Letter>> = vec![vec![]];
        for n in 0..radius {
            let mut next = Vec::new();
            for w in &layer {
                for s in 0..self.num_letters() {
                    let mut c = w.clone();
                    c.push(s);
                    if self.word_length(&c)? == n + 1 {
                        next.push(c);
                    }
                }
            }
            counts.push(next.len());
            layer = next;
        }
        Ok(counts)
    }

    /// Exact cone-type key for built-in families, None when unavailable.
    fn closed_form_key(&self, g: &[Letter]) -> Option<Vec<i64>> {
        match self.family {
            Family::Free { .. } => Some(g.first().map(|&l| vec![l as i64]).unwrap_or_default()),
            Family::FreeProduct { m, n } => {
                let Some(&first) = g.first() else { return Some(vec![]) };
                let (f, sign) = self.syllable[first];
                let order = [m, n][f];
                let run = g.iter().take_while(|&&l| l == first).count() as i64;
                let e = sign * run;
                let mut key = vec![f as i64];
                for x in 1..order as i64 {
                    let fx = reduced_exponent(x, order);
                    if reduced_exponent(fx + e, order).abs() == fx.abs() + e.abs() {
                        key.push(fx);
                    }
                }
                Some(key)
            }
            _ => None,
        }
    }

    /// |γ^n|/n at n = n_max, and min_k |γ^k|/k.
    pub fn translation_length(&self, g: &[Letter], n_max: usize) -> Result<TranslationLength> {
        let base = self.normalize(g)?;
        if base.is_empty() {
            return Err(Error::InvalidWord("translation length of the identity".into()));
        }
        let n_max = n_max.max(1);
        let mut power: Vec<Letter> = vec![];
        let mut upper = f64::INFINITY;
        let mut last = 0.0;
        for k in 1..=n_max {
            power.extend_from_slice(&base);
            power = self.normalize(&power)?;
            last = power.len() as f64 / k as f64;
            upper = upper.min(last);
        }
        Ok(TranslationLength { estimate: last, upper_bound: upper, word_length: base.len(), n_max })
    }
}

/// Representative of e mod order in (−order/2, order/2].
fn reduced_exponent(e: i64, order: usize) -> i64 {
    let o = order as i64;
    let r = e.rem_euclid(o);
    if 2 * r > o {
        r - o
    } else {
        r
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TranslationLength {
    pub estimate: f64,
    pub upper_bound: f64,
    pub word_length: usize,
    pub n_max: usize,
}

/// Geodesic ball: one representative per element, sorted by length.
#[derive(Clone, Debug)]
pub struct Ball {
    pub radius: usize,
    pub elements: Vec<Vec<Letter>>,
    index: HashMap<Vec<Letter>, usize>,
}

impl Ball {
    fn new(radius: usize, elements: Vec<Vec<Letter>>) -> Self {
        let index = elements.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { radius, elements, index }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Index of a normal-form word.
    pub fn position(&self, w: &[Letter]) -> Option<usize> {
        self.index.get(w).copied()
    }

    pub fn sphere_sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.radius + 1];
        for w in &self.elements {
            out[w.len()] += 1;
        }
        out
    }

    pub fn sphere(&self, n: usize) -> impl Iterator<Item = &Vec<Letter>> {
        self.elements.iter().filter(move |w| w.len() == n)
    }
}

// ---------------------------------------------------------------------------
// Surface groups

/// Shortlex ball of a surface group, grown on demand.
#[derive(Clone, Debug)]
struct SurfaceBall {
    genus: usize,
    inverse: Vec<Letter>,
    /// Cyclic conjugates of the relator and its inverse.
    rotations: Vec<Vec<Letter>>,
    perms: Vec<Vec<Vec<u8>>>,
    radius: usize,
    elements: Vec<Vec<Letter>>,
    keys: Vec<Key>,
    buckets: HashMap<Key, Vec<usize>>,
}

type Key = (Vec<i32>, Vec<Vec<u8>>);

impl SurfaceBall {
    fn new(pres: &GroupPresentation) -> Self {
        let genus = match pres.family {
            Family::Surface { genus } => genus,
            _ => unreachable!(),
        };
        let inverse: Vec<Letter> = pres.inverse.iter().map(|i| i.unwrap()).collect();
        let r = &pres.relators[0];
        let r_inv: Vec<Letter> = r.iter().rev().map(|&l| inverse[l]).collect();
        let mut rotations = Vec::new();
        for rel in [r, &r_inv] {
            for s in 0..rel.len() {
                let mut rot = rel[s..].to_vec();
                rot.extend_from_slice(&rel[..s]);
                rotations.push(rot);
            }
        }
        // Finite quotients: a_i ↦ x, b_i ↦ y, a_{i+1} ↦ y, b_{i+1} ↦ x kills the relator.
        let seeds: [[u8; 7]; 4] = [
            [1, 2, 3, 4, 5, 6, 0],
            [1, 0, 3, 2, 5, 6, 4],
            [2, 4, 6, 1, 3, 5, 0],
            [6, 0, 1, 5, 2, 3, 4],
        ];
        let mut perms = Vec::new();
        for (x, y) in [(0, 1), (2, 3)] {
            let px = seeds[x].to_vec();
            let py = seeds[y].to_vec();
            let mut images = vec![vec![]; 4 * genus];
            for i in 0..genus {
                let (ga, gb) = if genus % 2 == 1 && i == genus - 1 {
                    (px.clone(), px.clone())
                } else if i % 2 == 0 {
                    (px.clone(), py.clone())
                } else {
                    (py.clone(), px.clone())
                };
                images[4 * i] = ga.clone();
                images[4 * i + 1] = invert_perm(&ga);
                images[4 * i + 2] = gb.clone();
                images[4 * i + 3] = invert_perm(&gb);
            }
            perms.push(images);
        }
        let mut ball = Self {
            genus,
            inverse,
            rotations,
            perms,
            radius: 0,
            elements: vec![],
            keys: vec![],
            buckets: HashMap::new(),
        };
        let k = ball.key(&[]);
        ball.insert(vec![], k);
        ball
    }

    fn free_reduce(&self, w: &[Letter]) -> Vec<Letter> {
        let mut out: Vec<Letter> = Vec::with_capacity(w.len());
        for &l in w {
            if out.last().is_some_and(|&t| self.inverse[t] == l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        out
    }

    /// Dehn's algorithm: replace any subword that is more than half of a relator.
    fn dehn(&self, w: &[Letter]) -> Vec<Letter> {
        let half = 2 * self.genus;
        let mut w = self.free_reduce(w);
        'outer: loop {
            for pos in 0..w.len() {
                for rot in &self.rotations {
                    let l = w[pos..].iter().zip(rot).take_while(|(a, b)| a == b).count();
                    if l > half {
                        let repl: Vec<Letter> = rot[l..].iter().rev().map(|&x| self.inverse[x]).collect();
                        let mut next = w[..pos].to_vec();
                        next.extend(repl);
                        next.extend_from_slice(&w[pos + l..]);
                        w = self.free_reduce(&next);
                        continue 'outer;
                    }
                }
            }
            return w;
        }
    }

    fn key(&self, w: &[Letter]) -> Key {
        let mut ab = vec![0i32; 2 * self.genus];
        for &l in w {
            let gen = l / 2;
            ab[gen] += if l % 2 == 0 { 1 } else { -1 };
        }
        let ps = self
            .perms
            .iter()
            .map(|images| {
                let mut acc: Vec<u8> = (0..7).collect();
                for &l in w {
                    acc = acc.iter().map(|&i| images[l][i as usize]).collect();
                }
                acc
            })
            .collect();
        (ab, ps)
    }

    fn insert(&mut self, w: Vec<Letter>, k: Key) {
        let idx = self.elements.len();
        self.buckets.entry(k.clone()).or_default().push(idx);
        self.keys.push(k);
        self.elements.push(w);
    }

    fn find(&self, w: &[Letter], k: &Key) -> Option<usize> {
        let inv: Vec<Letter> = w.iter().rev().map(|&l| self.inverse[l]).collect();
        self.buckets.get(k)?.iter().copied().find(|&i| {
            let mut probe = self.elements[i].clone();
            probe.extend_from_slice(&inv);
            self.dehn(&probe).is_empty()
        })
    }

    fn canonical(&self, w: &[Letter]) -> Option<Vec<Letter>> {
        let k = self.key(w);
        self.find(w, &k).map(|i| self.elements[i].clone())
    }

    fn grow(&mut self, pres: &GroupPresentation, radius: usize, cap: usize) -> Result<()> {
        while self.radius < radius {
            let n = self.radius;
            let sphere: Vec<usize> = (0..self.elements.len()).filter(|&i| self.elements[i].len() == n).collect();
            if self.elements.len() + sphere.len() * (pres.num_letters() - 1) > cap {
                return Err(Error::BallTooLarge { radius, cap });
            }
            for i in sphere {
                for s in 0..pres.num_letters() {
                    let w = &self.elements[i];
                    if w.last().is_some_and(|&t| self.inverse[t] == s) {
                        continue;
                    }
                    let mut c = w.clone();
                    c.push(s);
                    let k = self.key(&c);
                    if self.find(&c, &k).is_none() {
                        self.insert(c, k);
                    }
                }
            }
            self.radius += 1;
        }
        Ok(())
    }
}

fn invert_perm(p: &[u8]) -> Vec<u8> {
    let mut inv = vec![0u8; p.len()];
    for (i, &x) in p.iter().enumerate() {
        inv[x as usize] = i as u8;
    }
    inv
}

// ---------------------------------------------------------------------------
// Cone types and the automaton

#[derive(Clone, Debug, Serialize)]
pub struct ConeType {
    pub id: usize,
    /// Shortest (shortlex-first) element with this cone type.
    pub witness: Vec<Letter>,
    /// Ball indices η with |η| ≤ r_probe and |ηγ| = |η| + |γ|.
    pub profile: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ConeTypeAnalysis {
    pub types: Vec<ConeType>,
    /// Probe partition agrees at r_probe and r_probe + 1.
    pub stabilized: bool,
    /// Partition matches the closed-form classification of a built-in family.
    pub certified: bool,
    pub radius: usize,
    pub r_probe: usize,
    ball: Ball,
    profile_index: HashMap<Vec<usize>, usize>,
}

impl ConeTypeAnalysis {
    pub fn ball(&self) -> &Ball {
        &self.ball
    }

    /// Cone type id of an element with |γ| ≤ R − r_probe.
    pub fn type_of(&self, pres: &GroupPresentation, g: &[Letter]) -> Result<Option<usize>> {
        let g = pres.normalize(g)?;
        if g.len() + self.r_probe > self.radius {
            return Ok(None);
        }
        let prof = profile(pres, &self.ball, &g, self.r_probe)?;
        Ok(self.profile_index.get(&prof).copied())
    }
}

fn profile(pres: &GroupPresentation, ball: &Ball, g: &[Letter], r: usize) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, eta) in ball.elements.iter().enumerate() {
        if eta.len() > r {
            break;
        }
        if pres.multiply(eta, g)?.len() == eta.len() + g.len() {
            out.push(i);
        }
    }
    Ok(out)
}

/// Partition canonical ids: for each item its class number in order of first appearance.
fn partition_labels<K: std::hash::Hash + Eq>(keys: impl Iterator<Item = K>) -> Vec<usize> {
    let mut seen: HashMap<K, usize> = HashMap::new();
    keys.map(|k| {
        let n = seen.len();
        *seen.entry(k).or_insert(n)
    })
    .collect()
}

/// Empirical cone types from ball(R) with probe radius `r_probe`.
pub fn cone_types(pres: &GroupPresentation, radius: usize, r_probe: usize) -> Result<ConeTypeAnalysis> {
    if r_probe == 0 || radius < r_probe + 1 {
        return Err(Error::InvalidInput(format!("radius {radius} too small for probe {r_probe}")));
    }
    let ball = pres.ball(radius)?;
    let tested: Vec<&Vec<Letter>> = ball.elements.iter().filter(|w| w.len() + r_probe < radius).collect();
    let mut coarse = Vec::with_capacity(tested.len());
    let mut fine = Vec::with_capacity(tested.len());
    for g in &tested {
        coarse.push(profile(pres, &ball, g, r_probe)?);
        fine.push(profile(pres, &ball, g, r_probe + 1)?);
    }
    let coarse_labels = partition_labels(coarse.iter());
    let stabilized = coarse_labels == partition_labels(fine.iter());
    let closed: Vec<Option<Vec<i64>>> = tested.iter().map(|g| pres.closed_form_key(g)).collect();
    let certified = stabilized
        && closed.iter().all(|k| k.is_some())
        && partition_labels(closed.iter()) == coarse_labels;
    let mut types = Vec::new();
    let mut profile_index = HashMap::new();
    for (g, prof) in tested.iter().zip(coarse) {
        if !profile_index.contains_key(&prof) {
            let id = types.len();
            profile_index.insert(prof.clone(), id);
            types.push(ConeType { id, witness: (*g).clone(), profile: prof });
        }
    }
    Ok(ConeTypeAnalysis { types, stabilized, certified, radius, r_probe, ball, profile_index })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Edge {
    pub tail: usize,
    pub label: Letter,
    pub head: usize,
}

/// Labelled directed graph on cone types.
#[derive(Clone, Debug, Serialize)]
pub struct GeodesicAutomaton {
    pub vertices: Vec<usize>,
    pub start: Option<usize>,
    pub edges: Vec<Edge>,
    /// Witness words per vertex, when known.
    pub witnesses: BTreeMap<usize, Vec<Letter>>,
    pub certified: bool,
}

impl GeodesicAutomaton {
    pub fn new(vertices: Vec<usize>, start: Option<usize>, mut edges: Vec<Edge>) -> Result<Self> {
        let vs: HashSet<usize> = vertices.iter().copied().collect();
        for e in &edges {
            if !vs.contains(&e.tail) || !vs.contains(&e.head) {
                return Err(Error::AutomatonMismatch(format!("edge {e:?} uses an unknown vertex")));
            }
        }
        if start.is_some_and(|s| !vs.contains(&s)) {
            return Err(Error::AutomatonMismatch("start vertex unknown".into()));
        }
        edges.sort();
        let mut labels = HashSet::new();
        for e in &edges {
            if !labels.insert((e.tail, e.label)) {
                return Err(Error::AutomatonMismatch(format!(
                    "two edges leave vertex {} with label {}",
                    e.tail, e.label
                )));
            }
        }
        Ok(Self { vertices, start, edges, witnesses: BTreeMap::new(), certified: false })
    }

    pub fn out_edges(&self, v: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.tail == v)
    }

    pub fn in_edges(&self, v: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.head == v)
    }

    pub fn step(&self, v: usize, label: Letter) -> Option<usize> {
        self.edges.iter().find(|e| e.tail == v && e.label == label).map(|e| e.head)
    }

    /// Number of walks of each length 0..=n from `from`.
    pub fn walk_counts(&self, from: usize, n: usize) -> Vec<u128> {
        let mut cur: HashMap<usize, u128> = HashMap::from([(from, 1)]);
        let mut out = vec![1];
        for _ in 0..n {
            let mut next: HashMap<usize, u128> = HashMap::new();
            for (&v, &c) in &cur {
                for e in self.out_edges(v) {
                    *next.entry(e.head).or_default() += c;
                }
            }
            out.push(next.values().sum());
            cur = next;
        }
        out
    }

    /// All label sequences of walks of length exactly n from `from`.
    pub fn walks_from(&self, from: usize, n: usize) -> Vec<Vec<Letter>> {
        let mut layer = vec![(from, vec![])];
        for _ in 0..n {
            let mut next = Vec::new();
            for (v, w) in &layer {
                for e in self.out_edges(*v) {
                    let mut w2 = w.clone();
                    w2.push(e.label);
                    next.push((e.head, w2));
                }
            }
            layer = next;
        }
        layer.into_iter().map(|(_, w)| w).collect()
    }
}

/// Geodesic automaton from stabilized cone types: C →ᵃ aC for a ∈ C.
pub fn geodesic_automaton(pres: &GroupPresentation, radius: usize, r_probe: usize) -> Result<GeodesicAutomaton> {
    if let Some(a) = pres.supplied_automaton() {
        return Ok(a.clone());
    }
    let ct = cone_types(pres, radius, r_probe)?;
    if !ct.stabilized {
        return Err(Error::NotStabilized);
    }
    let mut edges = Vec::new();
    for t in &ct.types {
        for a in 0..pres.num_letters() {
            // a ∈ C iff |a·γ| = 1 + |γ| for the witness γ.
            let ag = pres.multiply(&[a], &t.witness)?;
            if ag.len() != t.witness.len() + 1 {
                continue;
            }
            let head = ct.type_of(pres, &ag)?.ok_or(Error::NotStabilized)?;
            edges.push(Edge { tail: t.id, label: a, head });
        }
    }
    let start = ct.type_of(pres, &[])?.ok_or(Error::NotStabilized)?;
    let mut auto = GeodesicAutomaton::new(ct.types.iter().map(|t| t.id).collect(), Some(start), edges)?;
    auto.witnesses = ct.types.iter().map(|t| (t.id, t.witness.clone())).collect();
    auto.certified = ct.certified;
    Ok(auto)
}

/// Per-length comparison of walks from the start vertex with geodesic words and elements.
#[derive(Clone, Debug, Serialize)]
pub struct WalkCheck {
    pub length: usize,
    pub walks: u128,
    pub geodesic_words: usize,
    pub elements: usize,
}

/// Check that every walk from the start spells (right to left) a geodesic word and that
/// walks and geodesic words are equinumerous, for every length ≤ R.
pub fn verify_walks(pres: &GroupPresentation, auto: &GeodesicAutomaton, radius: usize) -> Result<Vec<WalkCheck>> {
    let start = auto.start.ok_or_else(|| Error::AutomatonMismatch("automaton has no start vertex".into()))?;
    let words = pres.geodesic_word_counts(radius)?;
    let spheres = pres.ball(radius)?.sphere_sizes();
    let counts = auto.walk_counts(start, radius);
    let mut out = Vec::new();
    for n in 0..=radius {
        for w in auto.walks_from(start, n) {
            let rev: Vec<Letter> = w.into_iter().rev().collect();
            if pres.word_length(&rev)? != n {
                return Err(Error::Internal(format!(
                    "walk spells non-geodesic word {}",
                    pres.format_word(&rev)
                )));
            }
        }
        if counts[n] != words[n] as u128 {
            return Err(Error::Internal(format!(
                "length {n}: {} walks but {} geodesic words",
                counts[n], words[n]
            )));
        }
        out.push(WalkCheck { length: n, walks: counts[n], geodesic_words: words[n], elements: spheres[n] });
    }
    Ok(out)
}

/// Edges lying on directed cycles.
pub fn recurrent_subgraph(auto: &GeodesicAutomaton) -> Result<GeodesicAutomaton> {
    let mut g = DiGraph::<usize, ()>::new();
    let nodes: HashMap<usize, _> = auto.vertices.iter().map(|&v| (v, g.add_node(v))).collect();
    for e in &auto.edges {
        g.add_edge(nodes[&e.tail], nodes[&e.head], ());
    }
    let mut comp: HashMap<usize, usize> = HashMap::new();
    for (ci, scc) in tarjan_scc(&g).into_iter().enumerate() {
        let nontrivial = scc.len() > 1 || scc.iter().any(|&n| g.contains_edge(n, n));
        if nontrivial {
            for n in scc {
                comp.insert(g[n], ci);
            }
        }
    }
    if comp.is_empty() {
        return Err(Error::EmptyRecurrentPart);
    }
    let vertices: Vec<usize> = auto.vertices.iter().copied().filter(|v| comp.contains_key(v)).collect();
    let edges: Vec<Edge> = auto
        .edges
        .iter()
        .copied()
        .filter(|e| comp.get(&e.tail).is_some_and(|c| comp.get(&e.head) == Some(c)))
        .collect();
    let start = auto.start.filter(|s| comp.contains_key(s));
    let mut out = GeodesicAutomaton::new(vertices, start, edges)?;
    out.witnesses = auto
        .witnesses
        .iter()
        .filter(|(v, _)| comp.contains_key(v))
        .map(|(v, w)| (*v, w.clone()))
        .collect();
    out.certified = auto.certified;
    Ok(out)
}

/// Largest distance (within ball(R−2)) from an element to the union of two-sided
/// geodesics through the identity, read off from walks in the recurrent part.
pub fn geodesic_core_density(pres: &GroupPresentation, recurrent: &GeodesicAutomaton, radius: usize) -> Result<usize> {
    let ball = pres.ball(radius)?;
    let mut core: HashSet<Vec<Letter>> = HashSet::from([vec![]]);
    for &v in &recurrent.vertices {
        for n in 1..=radius {
            for w in recurrent.walks_from(v, n) {
                let rev: Vec<Letter> = w.into_iter().rev().collect();
                let g = pres.normalize(&rev)?;
                core.insert(pres.inverse(&g).and_then(|i| pres.normalize(&i))?);
                core.insert(g);
            }
        }
    }
    let mut dist = vec![usize::MAX; ball.len()];
    let mut queue = VecDeque::new();
    for (i, w) in ball.elements.iter().enumerate() {
        if core.contains(w) {
            dist[i] = 0;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        for s in 0..pres.num_letters() {
            let nb = pres.multiply(&ball.elements[i], &[s])?;
            if let Some(j) = ball.position(&nb) {
                if dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(ball
        .elements
        .iter()
        .zip(&dist)
        .filter(|(w, _)| w.len() + 2 <= radius)
        .map(|(_, &d)| d)
        .max()
        .unwrap_or(0))
}
