//! Labelled transition systems: data model, `.lts` text format, validation,
//! spanning trees, Parikh vectors and cycle bases.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct StateId(pub usize);

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct LabelId(pub usize);

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub src: StateId,
    pub label: LabelId,
    pub dst: StateId,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LtsError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: duplicate edge {src} {label} {dst}")]
    DuplicateEdge {
        line: usize,
        src: String,
        label: String,
        dst: String,
    },
    #[error("no `initial` header")]
    UnknownInitial,
    #[error("state index {0} out of range")]
    BadState(usize),
    #[error("label index {0} out of range")]
    BadLabel(usize),
    #[error("state {0} is not reachable from the initial state")]
    Unreachable(String),
}

/// A finite labelled transition system with an initial state.
///
/// States and labels are interned in first-appearance order. Edges are kept
/// sorted by `(src, label, dst)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lts {
    states: Vec<String>,
    labels: Vec<String>,
    edges: Vec<Edge>,
    initial: StateId,
    out: Vec<Vec<usize>>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Lts {
    /// Builds an LTS from names and index triples. Duplicate triples are rejected.
    pub fn new(
        states: Vec<String>,
        labels: Vec<String>,
        initial: usize,
        edges: impl IntoIterator<Item = (usize, usize, usize)>,
    ) -> Result<Lts, LtsError> {
        if initial >= states.len() {
            return Err(LtsError::BadState(initial));
        }
        let mut seen = BTreeSet::new();
        let mut list = Vec::new();
        for (s, t, d) in edges {
            if s >= states.len() {
                return Err(LtsError::BadState(s));
            }
            if d >= states.len() {
                return Err(LtsError::BadState(d));
            }
            if t >= labels.len() {
                return Err(LtsError::BadLabel(t));
            }
            let e = Edge {
                src: StateId(s),
                label: LabelId(t),
                dst: StateId(d),
            };
            if !seen.insert(e) {
                return Err(LtsError::DuplicateEdge {
                    line: 0,
                    src: states[s].clone(),
                    label: labels[t].clone(),
                    dst: states[d].clone(),
                });
            }
            list.push(e);
        }
        list.sort();
        let mut out = vec![Vec::new(); states.len()];
        for (i, e) in list.iter().enumerate() {
            out[e.src.0].push(i);
        }
        Ok(Lts {
            states,
            labels,
            edges: list,
            initial: StateId(initial),
            out,
        })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.states[s.0]
    }

    pub fn label_name(&self, t: LabelId) -> &str {
        &self.labels[t.0]
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn label_names(&self) -> &[String] {
        &self.labels
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|n| n == name).map(StateId)
    }

    pub fn label_id(&self, name: &str) -> Option<LabelId> {
        self.labels.iter().position(|n| n == name).map(LabelId)
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.states.len()).map(StateId)
    }

    pub fn labels(&self) -> impl Iterator<Item = LabelId> {
        (0..self.labels.len()).map(LabelId)
    }

    /// Outgoing edges of `s` in label order.
    pub fn out_edges(&self, s: StateId) -> impl Iterator<Item = &Edge> + '_ {
        self.out[s.0].iter().map(move |&i| &self.edges[i])
    }

    /// The (first) successor of `s` under `t`.
    pub fn successor(&self, s: StateId, t: LabelId) -> Option<StateId> {
        self.out_edges(s).find(|e| e.label == t).map(|e| e.dst)
    }

    pub fn enables(&self, s: StateId, t: LabelId) -> bool {
        self.successor(s, t).is_some()
    }

    /// Label-indexed enabledness table: `table[s][t]`.
    pub fn enabled_table(&self) -> Vec<Vec<bool>> {
        let mut table = vec![vec![false; self.labels.len()]; self.states.len()];
        for e in &self.edges {
            table[e.src.0][e.label.0] = true;
        }
        table
    }
}

/// Parses the `.lts` line format.
pub fn parse_lts(text: &str) -> Result<Lts, LtsError> {
    let mut states: Vec<String> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut state_ix: HashMap<String, usize> = HashMap::new();
    let mut label_ix: HashMap<String, usize> = HashMap::new();
    let mut initial = None;
    let mut edges = Vec::new();
    let mut seen = BTreeSet::new();

    fn intern(names: &mut Vec<String>, ix: &mut HashMap<String, usize>, n: &str) -> usize {
        if let Some(&i) = ix.get(n) {
            return i;
        }
        names.push(n.to_string());
        ix.insert(n.to_string(), names.len() - 1);
        names.len() - 1
    }

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let words: Vec<&str> = content.split_whitespace().collect();
        let syntax = |msg: &str| LtsError::Syntax {
            line,
            msg: msg.to_string(),
        };
        if words[0] == "initial" {
            if words.len() != 2 {
                return Err(syntax("expected `initial <state>`"));
            }
            if initial.is_some() {
                return Err(syntax("second `initial` header"));
            }
            if !valid_name(words[1]) {
                return Err(syntax("invalid state name"));
            }
            initial = Some(intern(&mut states, &mut state_ix, words[1]));
            continue;
        }
        if words.len() != 3 {
            return Err(syntax("expected `<src> <label> <dst>`"));
        }
        if !words.iter().all(|w| valid_name(w)) {
            return Err(syntax("names must match [A-Za-z0-9_]+"));
        }
        let s = intern(&mut states, &mut state_ix, words[0]);
        let t = intern(&mut labels, &mut label_ix, words[1]);
        let d = intern(&mut states, &mut state_ix, words[2]);
        if !seen.insert((s, t, d)) {
            return Err(LtsError::DuplicateEdge {
                line,
                src: words[0].into(),
                label: words[1].into(),
                dst: words[2].into(),
            });
        }
        edges.push((s, t, d));
    }
    let initial = initial.ok_or(LtsError::UnknownInitial)?;
    Lts::new(states, labels, initial, edges)
}

/// Writes the `.lts` format; `parse_lts` inverts it.
pub fn serialize_lts(lts: &Lts) -> String {
    let mut out = format!("initial {}\n", lts.state_name(lts.initial));
    for e in &lts.edges {
        out.push_str(&format!(
            "{} {} {}\n",
            lts.state_name(e.src),
            lts.label_name(e.label),
            lts.state_name(e.dst)
        ));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub deterministic: bool,
    /// Two edges sharing source and label, if any.
    pub nondeterminism: Option<(Edge, Edge)>,
    pub reachable: bool,
    pub unreachable: Vec<StateId>,
    pub self_loop_labels: BTreeSet<LabelId>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.deterministic && self.reachable
    }
}

pub fn validate(lts: &Lts) -> ValidationReport {
    let mut nondeterminism = None;
    for s in lts.states() {
        let out: Vec<&Edge> = lts.out_edges(s).collect();
        if let Some(w) = out.windows(2).find(|w| w[0].label == w[1].label) {
            nondeterminism = Some((*w[0], *w[1]));
            break;
        }
    }
    let mut seen = vec![false; lts.num_states()];
    let mut stack = vec![lts.initial];
    seen[lts.initial.0] = true;
    while let Some(s) = stack.pop() {
        for e in lts.out_edges(s) {
            if !seen[e.dst.0] {
                seen[e.dst.0] = true;
                stack.push(e.dst);
            }
        }
    }
    let unreachable: Vec<StateId> = lts.states().filter(|s| !seen[s.0]).collect();
    ValidationReport {
        deterministic: nondeterminism.is_none(),
        nondeterminism,
        reachable: unreachable.is_empty(),
        unreachable,
        self_loop_labels: self_loop_labels(lts),
    }
}

/// Labels with at least one edge `(s, t, s)`.
pub fn self_loop_labels(lts: &Lts) -> BTreeSet<LabelId> {
    lts.edges
        .iter()
        .filter(|e| e.src == e.dst)
        .map(|e| e.label)
        .collect()
}

/// Label-indexed integer vector; entries may be negative.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParikhVector(pub Vec<i64>);

impl ParikhVector {
    pub fn zero(n: usize) -> Self {
        ParikhVector(vec![0; n])
    }

    pub fn unit(n: usize, t: LabelId) -> Self {
        let mut v = vec![0; n];
        v[t.0] = 1;
        ParikhVector(v)
    }

    pub fn get(&self, t: LabelId) -> i64 {
        self.0.get(t.0).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }

    pub fn add(&self, other: &ParikhVector) -> ParikhVector {
        ParikhVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &ParikhVector) -> ParikhVector {
        ParikhVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, k: i64) -> ParikhVector {
        ParikhVector(self.0.iter().map(|a| a * k).collect())
    }

    /// Componentwise `≤`.
    pub fn le(&self, other: &ParikhVector) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Renders as e.g. `2a+1d+1e`, or `0`.
    pub fn display(&self, lts: &Lts) -> String {
        let mut parts = Vec::new();
        for (i, &c) in self.0.iter().enumerate() {
            if c != 0 {
                let sign = if c < 0 { "-" } else if parts.is_empty() { "" } else { "+" };
                parts.push(format!("{sign}{}{}", c.abs(), lts.label_name(LabelId(i))));
            }
        }
        if parts.is_empty() {
            "0".into()
        } else {
            parts.concat()
        }
    }
}

/// Parikh vector of a label word.
pub fn parikh_of_word(n: usize, word: &[LabelId]) -> ParikhVector {
    let mut v = ParikhVector::zero(n);
    for t in word {
        v.0[t.0] += 1;
    }
    v
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanningTree {
    /// `parent[s]` is `None` exactly for the initial state.
    pub parent: Vec<Option<(StateId, LabelId)>>,
    psi: Vec<ParikhVector>,
}

impl SpanningTree {
    pub fn is_tree_edge(&self, e: &Edge) -> bool {
        self.parent[e.dst.0] == Some((e.src, e.label))
    }

    /// Label word of the tree walk from the initial state to `s`.
    pub fn walk(&self, s: StateId) -> Vec<LabelId> {
        let mut word = Vec::new();
        let mut cur = s;
        while let Some((p, t)) = self.parent[cur.0] {
            word.push(t);
            cur = p;
        }
        word.reverse();
        word
    }
}

/// BFS tree from the initial state. Among the candidate edges into a newly
/// discovered state, the one with the smallest `(source id, label id)` wins.
pub fn spanning_tree(lts: &Lts) -> Result<SpanningTree, LtsError> {
    let n = lts.num_states();
    let mut parent: Vec<Option<(StateId, LabelId)>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[lts.initial.0] = true;
    let mut layer = vec![lts.initial];
    while !layer.is_empty() {
        let mut best: BTreeMap<StateId, (StateId, LabelId)> = BTreeMap::new();
        for &s in &layer {
            for e in lts.out_edges(s) {
                if seen[e.dst.0] {
                    continue;
                }
                let cand = (e.src, e.label);
                best.entry(e.dst)
                    .and_modify(|b| {
                        if cand < *b {
                            *b = cand
                        }
                    })
                    .or_insert(cand);
            }
        }
        layer = Vec::new();
        for (child, p) in best {
            seen[child.0] = true;
            parent[child.0] = Some(p);
            layer.push(child);
        }
    }
    if let Some(s) = (0..n).find(|&s| !seen[s]) {
        return Err(LtsError::Unreachable(lts.states[s].clone()));
    }
    let mut psi: Vec<Option<ParikhVector>> = vec![None; n];
    psi[lts.initial.0] = Some(ParikhVector::zero(lts.num_labels()));
    fn fill(
        s: usize,
        parent: &[Option<(StateId, LabelId)>],
        psi: &mut Vec<Option<ParikhVector>>,
        m: usize,
    ) -> ParikhVector {
        if let Some(v) = &psi[s] {
            return v.clone();
        }
        let (p, t) = parent[s].expect("non-initial state has a parent");
        let v = fill(p.0, parent, psi, m).add(&ParikhVector::unit(m, t));
        psi[s] = Some(v.clone());
        v
    }
    for s in 0..n {
        fill(s, &parent, &mut psi, lts.num_labels());
    }
    Ok(SpanningTree {
        parent,
        psi: psi.into_iter().map(|v| v.unwrap()).collect(),
    })
}

/// ψ_E(s): Parikh vector of the tree walk to `s`.
pub fn parikh_of_state(tree: &SpanningTree, s: StateId) -> &ParikhVector {
    &tree.psi[s.0]
}

/// ψ_E(s) + 1t − ψ_E(s') for the edge `s[t⟩s'`; zero on tree edges.
pub fn parikh_of_edge(tree: &SpanningTree, e: &Edge) -> ParikhVector {
    let mut v = tree.psi[e.src.0].sub(&tree.psi[e.dst.0]);
    v.0[e.label.0] += 1;
    v
}

/// Parikh vectors of all chords, in edge order.
pub fn chord_vectors(lts: &Lts, tree: &SpanningTree) -> Vec<ParikhVector> {
    lts.edges
        .iter()
        .filter(|e| !tree.is_tree_edge(e))
        .map(|e| parikh_of_edge(tree, e))
        .filter(|v| !v.is_zero())
        .collect()
}

/// Basis of the span of the chord vectors: reduced row echelon form over the
/// rationals, each row scaled to a coprime integer vector. Leading entries
/// are positive.
pub fn cycle_basis(lts: &Lts, tree: &SpanningTree) -> Vec<ParikhVector> {
    row_basis(&chord_vectors(lts, tree), lts.num_labels())
}

pub(crate) fn to_rational_rows(vectors: &[ParikhVector]) -> Vec<Vec<BigRational>> {
    vectors
        .iter()
        .map(|v| {
            v.0.iter()
                .map(|&x| BigRational::from_integer(BigInt::from(x)))
                .collect()
        })
        .collect()
}

/// Reduced row echelon form; returns the nonzero rows and their pivot columns.
pub(crate) fn rref(mut rows: Vec<Vec<BigRational>>, width: usize) -> (Vec<Vec<BigRational>>, Vec<usize>) {
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..width {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][col].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let lead = rows[r][col].clone();
        for x in rows[r].iter_mut() {
            *x = &*x / &lead;
        }
        for i in 0..rows.len() {
            if i != r && !rows[i][col].is_zero() {
                let f = rows[i][col].clone();
                for j in 0..width {
                    let d = &f * &rows[r][j];
                    rows[i][j] = &rows[i][j] - d;
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    rows.truncate(r);
    (rows, pivots)
}

pub(crate) fn row_basis(vectors: &[ParikhVector], width: usize) -> Vec<ParikhVector> {
    let (rows, _) = rref(to_rational_rows(vectors), width);
    rows.into_iter().map(|r| integer_row(&r)).collect()
}

fn integer_row(row: &[BigRational]) -> ParikhVector {
    let mut l = BigInt::one();
    for x in row {
        l = l.lcm(x.denom());
    }
    let ints: Vec<BigInt> = row.iter().map(|x| x.numer() * (&l / x.denom())).collect();
    let mut g = BigInt::zero();
    for x in &ints {
        g = g.gcd(x);
    }
    if g.is_zero() {
        g = BigInt::one();
    }
    let lead_neg = ints.iter().find(|x| !x.is_zero()).is_some_and(|x| x.is_negative());
    ParikhVector(
        ints.iter()
            .map(|x| {
                let v = (x / &g).to_i64().expect("cycle entry fits in i64");
                if lead_neg {
                    -v
                } else {
                    v
                }
            })
            .collect(),
    )
}

/// Whether `v` is a rational linear combination of `basis`.
pub fn in_span(basis: &[ParikhVector], v: &ParikhVector) -> bool {
    let width = v.len();
    let (r1, _) = rref(to_rational_rows(basis), width);
    let mut all = basis.to_vec();
    all.push(v.clone());
    let (r2, _) = rref(to_rational_rows(&all), width);
    r1.len() == r2.len()
}

impl fmt::Display for Lts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_lts(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = include_str!("../fixtures/fig1.lts");
    const CASE6B: &str = include_str!("../fixtures/case6b.lts");

    fn state(l: &Lts, n: &str) -> StateId {
        l.state_id(n).unwrap()
    }

    #[test]
    fn parses_fixture() {
        let l = parse_lts(FIG1).unwrap();
        assert_eq!(l.num_states(), 15);
        assert_eq!(l.edges().len(), 24);
        assert_eq!(l.num_labels(), 6);
    }

    #[test]
    fn initial_only() {
        let l = parse_lts("initial s0\n").unwrap();
        assert_eq!(l.num_states(), 1);
        assert!(l.edges().is_empty());
        let t = spanning_tree(&l).unwrap();
        assert!(t.parent.iter().all(|p| p.is_none()));
        assert!(cycle_basis(&l, &t).is_empty());
    }

    #[test]
    fn nondeterminism_is_reported_not_rejected() {
        let l = parse_lts("initial s0\ns0 a s1\ns0 a s2\n").unwrap();
        let r = validate(&l);
        assert!(!r.deterministic);
        assert!(r.nondeterminism.is_some());
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse_lts("initial s0\ns0 a s1\ns0 a s1\n"),
            Err(LtsError::DuplicateEdge { line: 3, .. })
        ));
        assert!(matches!(parse_lts("s0 a s1\n"), Err(LtsError::UnknownInitial)));
        assert!(matches!(
            parse_lts("initial s0\ns0 a\n"),
            Err(LtsError::Syntax { line: 2, .. })
        ));
        assert!(matches!(
            parse_lts("initial s0\ns0 a-b s1\n"),
            Err(LtsError::Syntax { line: 2, .. })
        ));
    }

    #[test]
    fn orphan_state() {
        let l = parse_lts("initial s0\ns0 a s1\ns9 a s1\n").unwrap();
        let r = validate(&l);
        assert!(!r.reachable);
        assert_eq!(r.unreachable, vec![state(&l, "s9")]);
        assert!(spanning_tree(&l).is_err());
    }

    #[test]
    fn self_loops() {
        let l = parse_lts(include_str!("../fixtures/case6a.lts")).unwrap();
        let r = validate(&l);
        assert!(r.is_valid());
        let c = l.label_id("c").unwrap();
        assert_eq!(r.self_loop_labels, BTreeSet::from([c]));
        assert!(validate(&parse_lts(FIG1).unwrap()).self_loop_labels.is_empty());
    }

    #[test]
    fn fig1_tree_and_parikh() {
        let l = parse_lts(FIG1).unwrap();
        let t = spanning_tree(&l).unwrap();
        let a = l.label_id("a").unwrap();
        let b = l.label_id("b").unwrap();
        assert_eq!(t.parent[state(&l, "s1").0], Some((l.initial(), a)));
        assert_eq!(t.parent[state(&l, "s3").0], Some((l.initial(), b)));
        assert_eq!(parikh_of_state(&t, state(&l, "s9")).display(&l), "2a+2c");
        assert_eq!(parikh_of_state(&t, state(&l, "s7")).display(&l), "2a+1d+1e");
        assert!(parikh_of_state(&t, l.initial()).is_zero());
        for e in l.edges() {
            let v = parikh_of_edge(&t, e);
            if t.is_tree_edge(e) {
                assert!(v.is_zero());
            }
            let name = |s| l.state_name(s).to_string();
            match (name(e.src).as_str(), l.label_name(e.label), name(e.dst).as_str()) {
                ("s7", "c", "s11") => assert!(v.is_zero()),
                ("s4", "b", "s1") => assert_eq!(v.display(&l), "1b+1c"),
                _ => {}
            }
        }
    }

    #[test]
    fn fig1_basis() {
        let l = parse_lts(FIG1).unwrap();
        let t = spanning_tree(&l).unwrap();
        let basis = cycle_basis(&l, &t);
        assert_eq!(basis.len(), 2);
        let n = l.num_labels();
        let id = |s| l.label_id(s).unwrap();
        let bc = ParikhVector::unit(n, id("b")).add(&ParikhVector::unit(n, id("c")));
        let adf = ParikhVector::unit(n, id("a"))
            .add(&ParikhVector::unit(n, id("d")))
            .add(&ParikhVector::unit(n, id("f")));
        assert!(in_span(&basis, &bc));
        assert!(in_span(&basis, &adf));
        for v in &basis {
            let lead = v.0.iter().find(|&&x| x != 0).unwrap();
            assert!(*lead > 0);
        }
    }

    #[test]
    fn case6b_basis() {
        let l = parse_lts(CASE6B).unwrap();
        let t = spanning_tree(&l).unwrap();
        let basis = cycle_basis(&l, &t);
        let n = l.num_labels();
        let id = |s| l.label_id(s).unwrap();
        let ab = ParikhVector::unit(n, id("a")).add(&ParikhVector::unit(n, id("b")));
        let c = ParikhVector::unit(n, id("c"));
        assert_eq!(basis.len(), 2);
        assert!(in_span(&basis, &ab));
        assert!(in_span(&basis, &c));
    }

    #[test]
    fn round_trip() {
        let l = parse_lts(FIG1).unwrap();
        let again = parse_lts(&serialize_lts(&l)).unwrap();
        let triples = |l: &Lts| -> BTreeSet<(String, String, String)> {
            l.edges()
                .iter()
                .map(|e| {
                    let n = |s| l.state_name(s).to_string();
                    (n(e.src), l.label_name(e.label).to_string(), n(e.dst))
                })
                .collect()
        };
        assert_eq!(triples(&l), triples(&again));
        assert_eq!(l.state_name(l.initial()), again.state_name(again.initial()));
    }
}
