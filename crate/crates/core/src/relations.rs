//! Label relations (enabledness implication, deactivation), the six-way case
//! split, the preset relation graph and its strengthening rules.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::Serialize;

use crate::lts::{self_loop_labels, LabelId, Lts};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    /// Same enabling states.
    Equiv,
    /// Every state enabling `a` enables `b`, not conversely.
    AGtrB,
    BGtrA,
    Interleave,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct PairRelation {
    pub kind: PairKind,
    /// One label's firing disables the other somewhere.
    pub merge: bool,
}

pub fn pair_relation(lts: &Lts, a: LabelId, b: LabelId) -> PairRelation {
    pair_relation_with(lts, &lts.enabled_table(), a, b)
}

fn pair_relation_with(lts: &Lts, en: &[Vec<bool>], a: LabelId, b: LabelId) -> PairRelation {
    let (mut a_only, mut b_only) = (false, false);
    for s in lts.states() {
        let (x, y) = (en[s.0][a.0], en[s.0][b.0]);
        a_only |= x && !y;
        b_only |= y && !x;
    }
    let kind = match (a_only, b_only) {
        (false, false) => PairKind::Equiv,
        (false, true) => PairKind::AGtrB,
        (true, false) => PairKind::BGtrA,
        (true, true) => PairKind::Interleave,
    };
    let kills = |x: LabelId, y: LabelId| {
        lts.edges()
            .iter()
            .any(|e| e.label == y && en[e.src.0][x.0] && !en[e.dst.0][x.0])
    };
    PairRelation {
        kind,
        merge: kills(a, b) || kills(b, a),
    }
}

/// Case number 1..=6.
pub fn classify_case(rel: PairRelation) -> u8 {
    match (rel.kind, rel.merge) {
        (PairKind::Interleave, true) => 1,
        (PairKind::Interleave, false) => 2,
        (PairKind::Equiv, true) => 3,
        (PairKind::Equiv, false) => 4,
        (_, true) => 5,
        (_, false) => 6,
    }
}

/// Preset relation between two labels.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "edge", rename_all = "snake_case")]
pub enum EdgeKind {
    Equivalent,
    Disjoint,
    /// `preset(lo) ⪇ preset(hi)`.
    Included { lo: LabelId, hi: LabelId },
    /// Disjoint or included; `lo` is a self-loop label.
    Doi { lo: LabelId, hi: LabelId },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Rule {
    /// Interleaving labels with deactivation.
    Case1,
    /// Triangle configuration 1..=25.
    Triangle(u8),
    /// A label touching two proper inclusions.
    InclusionChain,
    /// Front edge of a chain of two doi edges.
    FrontEdge,
    /// Members of one equivalence class disagree.
    Equivalence,
    /// Two triangles resolve one edge in opposite directions.
    Conflict(u8, u8),
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Case1 => write!(f, "case 1"),
            Rule::Triangle(n) => write!(f, "triangle {n}"),
            Rule::InclusionChain => write!(f, "inclusion chain"),
            Rule::FrontEdge => write!(f, "front edge"),
            Rule::Equivalence => write!(f, "equivalence"),
            Rule::Conflict(x, y) => write!(f, "conflict between triangles {x} and {y}"),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    Original,
    Strengthened { rule: Rule, via: Option<LabelId> },
}

impl Origin {
    pub fn is_original(&self) -> bool {
        matches!(self, Origin::Original)
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Original => write!(f, "original"),
            Origin::Strengthened { rule, via: None } => write!(f, "strengthened: {rule}"),
            Origin::Strengthened { rule, via: Some(c) } => {
                write!(f, "strengthened: {rule} via label #{}", c.0)
            }
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct GraphEdge {
    pub kind: EdgeKind,
    pub merge: bool,
    pub origin: Origin,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contradiction {
    pub labels: Vec<LabelId>,
    pub rule: Rule,
}

impl Contradiction {
    pub fn describe(&self, lts: &Lts) -> String {
        let names: Vec<&str> = self.labels.iter().map(|&l| lts.label_name(l)).collect();
        format!("{} on ({})", self.rule, names.join(","))
    }
}

/// Preset relations over the representatives of the equivalence classes.
/// Before quotienting every label represents itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationGraph {
    rep: Vec<LabelId>,
    edges: BTreeMap<(LabelId, LabelId), GraphEdge>,
}

fn key(a: LabelId, b: LabelId) -> (LabelId, LabelId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl RelationGraph {
    pub fn num_labels(&self) -> usize {
        self.rep.len()
    }

    pub fn rep(&self, a: LabelId) -> LabelId {
        self.rep[a.0]
    }

    pub fn is_rep(&self, a: LabelId) -> bool {
        self.rep[a.0] == a
    }

    pub fn nodes(&self) -> Vec<LabelId> {
        (0..self.rep.len())
            .map(LabelId)
            .filter(|&l| self.is_rep(l))
            .collect()
    }

    /// Members of `a`'s class, in id order.
    pub fn class_of(&self, a: LabelId) -> Vec<LabelId> {
        let r = self.rep(a);
        (0..self.rep.len())
            .map(LabelId)
            .filter(|&l| self.rep[l.0] == r)
            .collect()
    }

    /// Stored edge between two distinct nodes.
    pub fn get(&self, a: LabelId, b: LabelId) -> Option<&GraphEdge> {
        self.edges.get(&key(a, b))
    }

    /// Relation between any two labels, looked up through representatives.
    pub fn kind(&self, a: LabelId, b: LabelId) -> EdgeKind {
        let (ra, rb) = (self.rep(a), self.rep(b));
        if ra == rb {
            return EdgeKind::Equivalent;
        }
        let k = self.edges[&key(ra, rb)].kind;
        // report in terms of the labels asked about
        let map = |x: LabelId| if x == ra { a } else { b };
        match k {
            EdgeKind::Included { lo, hi } => EdgeKind::Included {
                lo: map(lo),
                hi: map(hi),
            },
            EdgeKind::Doi { lo, hi } => EdgeKind::Doi {
                lo: map(lo),
                hi: map(hi),
            },
            other => other,
        }
    }

    fn set(&mut self, a: LabelId, b: LabelId, kind: EdgeKind, origin: Origin) {
        let e = self.edges.get_mut(&key(a, b)).expect("edge exists");
        e.kind = kind;
        e.origin = origin;
    }

    /// Node-level edges in key order.
    pub fn edges(&self) -> impl Iterator<Item = (LabelId, LabelId, &GraphEdge)> {
        self.edges.iter().map(|(&(a, b), e)| (a, b, e))
    }

    pub fn doi_edges(&self) -> Vec<(LabelId, LabelId)> {
        let mut v: Vec<(LabelId, LabelId)> = self
            .edges
            .values()
            .filter_map(|e| match e.kind {
                EdgeKind::Doi { lo, hi } => Some((lo, hi)),
                _ => None,
            })
            .collect();
        v.sort();
        v
    }

    pub fn included_edges(&self) -> Vec<(LabelId, LabelId)> {
        let mut v: Vec<(LabelId, LabelId)> = self
            .edges
            .values()
            .filter_map(|e| match e.kind {
                EdgeKind::Included { lo, hi } => Some((lo, hi)),
                _ => None,
            })
            .collect();
        v.sort();
        v
    }

    /// Replaces doi edges by the given choices (`true` = included); all other
    /// doi edges become disjoint.
    pub fn resolve_doi(&self, included: &BTreeSet<(LabelId, LabelId)>) -> RelationGraph {
        let mut g = self.clone();
        for (lo, hi) in self.doi_edges() {
            let kind = if included.contains(&(lo, hi)) {
                EdgeKind::Included { lo, hi }
            } else {
                EdgeKind::Disjoint
            };
            g.set(lo, hi, kind, Origin::Original);
        }
        g
    }

    /// Overrides one relation; used to force interpretations in experiments.
    pub fn with_edge(&self, a: LabelId, b: LabelId, kind: EdgeKind) -> RelationGraph {
        let mut g = self.clone();
        let (ra, rb) = (self.rep(a), self.rep(b));
        let map = |x: LabelId| if x == a { ra } else { rb };
        let kind = match kind {
            EdgeKind::Included { lo, hi } => EdgeKind::Included {
                lo: map(lo),
                hi: map(hi),
            },
            EdgeKind::Doi { lo, hi } => EdgeKind::Doi {
                lo: map(lo),
                hi: map(hi),
            },
            k => k,
        };
        g.set(ra, rb, kind, Origin::Original);
        g
    }
}

/// All pairs `a < b` with their relation and case.
pub fn relation_table(lts: &Lts) -> Vec<(LabelId, LabelId, PairRelation, u8)> {
    let en = lts.enabled_table();
    let mut out = Vec::new();
    for a in lts.labels() {
        for b in lts.labels().filter(|&b| b > a) {
            let r = pair_relation_with(lts, &en, a, b);
            out.push((a, b, r, classify_case(r)));
        }
    }
    out
}

/// Every case-1 pair; empty iff `build_relation_graph` succeeds.
pub fn case1_pairs(lts: &Lts) -> Vec<Contradiction> {
    relation_table(lts)
        .into_iter()
        .filter(|t| t.3 == 1)
        .map(|(a, b, _, _)| Contradiction {
            labels: vec![a, b],
            rule: Rule::Case1,
        })
        .collect()
}

pub fn build_relation_graph(lts: &Lts) -> Result<RelationGraph, Contradiction> {
    let loops = self_loop_labels(lts);
    let mut edges = BTreeMap::new();
    for (a, b, rel, case) in relation_table(lts) {
        let kind = match case {
            1 => {
                return Err(Contradiction {
                    labels: vec![a, b],
                    rule: Rule::Case1,
                })
            }
            2 => EdgeKind::Disjoint,
            3 | 4 => EdgeKind::Equivalent,
            _ => {
                // a ▷ b means a's preset is the larger one
                let (lo, hi) = if rel.kind == PairKind::AGtrB { (b, a) } else { (a, b) };
                if case == 5 {
                    EdgeKind::Included { lo, hi }
                } else if loops.contains(&lo) {
                    EdgeKind::Doi { lo, hi }
                } else {
                    EdgeKind::Disjoint
                }
            }
        };
        edges.insert(
            (a, b),
            GraphEdge {
                kind,
                merge: rel.merge,
                origin: Origin::Original,
            },
        );
    }
    Ok(RelationGraph {
        rep: lts.labels().collect(),
        edges,
    })
}

// possible preset relations of two classes X, Y
const P_DISJ: u8 = 1;
const P_XY: u8 = 2; // X ⊊ Y
const P_YX: u8 = 4; // Y ⊊ X

fn possibilities(kind: EdgeKind, x: LabelId) -> u8 {
    match kind {
        EdgeKind::Disjoint => P_DISJ,
        EdgeKind::Included { lo, .. } if lo == x => P_XY,
        EdgeKind::Included { .. } => P_YX,
        EdgeKind::Doi { lo, .. } if lo == x => P_DISJ | P_XY,
        EdgeKind::Doi { .. } => P_DISJ | P_YX,
        EdgeKind::Equivalent => 0,
    }
}

/// Collapses every equivalence class to one representative, intersecting the
/// possible relations of all members towards each other class.
pub fn quotient_by_equivalence(g: &RelationGraph) -> Result<RelationGraph, Contradiction> {
    let n = g.num_labels();
    // union-find over equivalent edges
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for (a, b, e) in g.edges() {
        if e.kind == EdgeKind::Equivalent {
            let (ra, rb) = (find(&mut parent, a.0), find(&mut parent, b.0));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut classes: BTreeMap<usize, Vec<LabelId>> = BTreeMap::new();
    for l in 0..n {
        let r = find(&mut parent, l);
        classes.entry(r).or_default().push(LabelId(l));
    }
    let classes: Vec<Vec<LabelId>> = classes.into_values().collect();
    for c in &classes {
        for (i, &x) in c.iter().enumerate() {
            for &y in &c[i + 1..] {
                if g.get(x, y).map(|e| e.kind) != Some(EdgeKind::Equivalent) {
                    return Err(Contradiction {
                        labels: vec![x, y],
                        rule: Rule::Equivalence,
                    });
                }
            }
        }
    }
    let has_original_inclusion = |l: LabelId| {
        g.edges().any(|(a, b, e)| {
            (a == l || b == l)
                && e.origin.is_original()
                && matches!(e.kind, EdgeKind::Included { .. })
        })
    };
    let reps: Vec<LabelId> = classes
        .iter()
        .map(|c| {
            c.iter()
                .copied()
                .find(|&l| has_original_inclusion(l))
                .unwrap_or(c[0])
        })
        .collect();
    let mut rep = vec![LabelId(0); n];
    for (c, &r) in classes.iter().zip(&reps) {
        for &l in c {
            rep[l.0] = r;
        }
    }
    let mut edges = BTreeMap::new();
    for i in 0..classes.len() {
        for j in i + 1..classes.len() {
            let (x, y) = (reps[i], reps[j]);
            let mut poss = P_DISJ | P_XY | P_YX;
            let mut merge = false;
            let mut witness = Vec::new();
            for &m in &classes[i] {
                for &k in &classes[j] {
                    let e = g.get(m, k).expect("complete graph");
                    poss &= possibilities(e.kind, m);
                    merge |= e.merge;
                    witness.push((m, k, *e));
                }
            }
            let kind = match poss {
                P_DISJ => EdgeKind::Disjoint,
                P_XY => EdgeKind::Included { lo: x, hi: y },
                P_YX => EdgeKind::Included { lo: y, hi: x },
                p if p == P_DISJ | P_XY => EdgeKind::Doi { lo: x, hi: y },
                p if p == P_DISJ | P_YX => EdgeKind::Doi { lo: y, hi: x },
                _ => {
                    let mut labels: Vec<LabelId> = classes[i].clone();
                    labels.extend(&classes[j]);
                    return Err(Contradiction {
                        labels,
                        rule: Rule::Equivalence,
                    });
                }
            };
            // keep the edge original if some member pair already had this exact relation
            let translate = |m: LabelId, k: LabelId, kk: EdgeKind| {
                let map = |z: LabelId| if z == m { x } else if z == k { y } else { z };
                match kk {
                    EdgeKind::Included { lo, hi } => EdgeKind::Included {
                        lo: map(lo),
                        hi: map(hi),
                    },
                    EdgeKind::Doi { lo, hi } => EdgeKind::Doi {
                        lo: map(lo),
                        hi: map(hi),
                    },
                    o => o,
                }
            };
            let original = witness
                .iter()
                .any(|(m, k, e)| e.origin.is_original() && translate(*m, *k, e.kind) == kind);
            let origin = if original {
                Origin::Original
            } else {
                Origin::Strengthened {
                    rule: Rule::Equivalence,
                    via: None,
                }
            };
            edges.insert(key(x, y), GraphEdge { kind, merge, origin });
        }
    }
    Ok(RelationGraph { rep, edges })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Verdict {
    Unknown,
    Disjoint,
    Included,
    Contradiction,
}

/// Configuration number of the triangle with doi edge `a ⇢ b` and third
/// label `c`: columns by the a–c relation (none, a→c, c→a, a⇢c, c⇢a), rows
/// by the b–c relation (none, b→c, c→b, b⇢c, c⇢b).
fn configuration(g: &RelationGraph, a: LabelId, b: LabelId, c: LabelId) -> Option<u8> {
    let pos = |x: LabelId| -> Option<u8> {
        Some(match g.get(x, c)?.kind {
            EdgeKind::Disjoint => 0,
            EdgeKind::Included { lo, .. } if lo == x => 1,
            EdgeKind::Included { .. } => 2,
            EdgeKind::Doi { lo, .. } if lo == x => 3,
            EdgeKind::Doi { .. } => 4,
            EdgeKind::Equivalent => return None,
        })
    };
    Some(pos(b)? * 5 + pos(a)? + 1)
}

/// The solid edge between `a` and `c` in configurations 17, 22 and 23.
fn solid_edge_original(g: &RelationGraph, a: LabelId, c: LabelId) -> (bool, Option<LabelId>) {
    let e = g.get(a, c).expect("edge");
    match e.origin {
        Origin::Original => (true, None),
        Origin::Strengthened {
            rule: Rule::Triangle(12 | 13),
            via,
        } => (false, via),
        Origin::Strengthened { .. } => (false, None),
    }
}

struct Eval {
    verdict: Verdict,
    config: u8,
    labels: Vec<LabelId>,
}

fn evaluate(
    g: &RelationGraph,
    a: LabelId,
    b: LabelId,
    c: LabelId,
    brac: bool,
    depth: usize,
) -> Eval {
    let Some(config) = configuration(g, a, b, c) else {
        return Eval {
            verdict: Verdict::Unknown,
            config: 0,
            labels: vec![a, b, c],
        };
    };
    let mut labels = vec![a, b, c];
    let verdict = match config {
        8 | 10 | 18 | 20 => Verdict::Contradiction,
        22 | 23 => match solid_edge_original(g, a, c) {
            (true, _) => Verdict::Contradiction,
            (false, Some(w)) if depth < g.num_labels() => {
                // the solid edge came from triangle (a, c, w); look at the
                // triangles the two doi edges into b form with w
                let mut out = Verdict::Unknown;
                for x in [a, c] {
                    if w == x || w == b {
                        continue;
                    }
                    let sub = evaluate(g, x, b, w, brac, depth + 1);
                    if sub.verdict == Verdict::Contradiction {
                        out = Verdict::Contradiction;
                        labels.push(w);
                        break;
                    }
                }
                out
            }
            _ => Verdict::Unknown,
        },
        2 | 3 | 6 => Verdict::Disjoint,
        17 if solid_edge_original(g, a, c).0 => Verdict::Disjoint,
        12 | 13 => Verdict::Included,
        7 | 9 | 11 | 14 | 15 if brac => Verdict::Disjoint,
        _ => Verdict::Unknown,
    };
    Eval {
        verdict,
        config,
        labels,
    }
}

fn triangle_fixpoint(mut g: RelationGraph, brac: bool) -> Result<RelationGraph, Contradiction> {
    let nodes = g.nodes();
    loop {
        let dois = g.doi_edges();
        let mut evals: Vec<(LabelId, LabelId, LabelId, Eval)> = Vec::new();
        for &(a, b) in &dois {
            for &c in &nodes {
                if c == a || c == b {
                    continue;
                }
                let ev = evaluate(&g, a, b, c, brac, 0);
                if ev.verdict == Verdict::Contradiction {
                    return Err(Contradiction {
                        labels: ev.labels,
                        rule: Rule::Triangle(ev.config),
                    });
                }
                evals.push((a, b, c, ev));
            }
        }
        let mut applied = false;
        for &(a, b) in &dois {
            let mine: Vec<&(LabelId, LabelId, LabelId, Eval)> = evals
                .iter()
                .filter(|e| e.0 == a && e.1 == b && e.3.verdict != Verdict::Unknown)
                .collect();
            let Some(first) = mine.first() else { continue };
            if let Some(other) = mine.iter().find(|e| e.3.verdict != first.3.verdict) {
                return Err(Contradiction {
                    labels: vec![a, b, first.2, other.2],
                    rule: Rule::Conflict(first.3.config, other.3.config),
                });
            }
            let kind = match first.3.verdict {
                Verdict::Disjoint => EdgeKind::Disjoint,
                _ => EdgeKind::Included { lo: a, hi: b },
            };
            g.set(
                a,
                b,
                kind,
                Origin::Strengthened {
                    rule: Rule::Triangle(first.3.config),
                    via: Some(first.2),
                },
            );
            applied = true;
            break;
        }
        if !applied {
            return Ok(g);
        }
    }
}

/// Applies the triangle rules until nothing changes.
pub fn strengthen_wpi(g: &RelationGraph) -> Result<RelationGraph, Contradiction> {
    triangle_fixpoint(g.clone(), false)
}

fn inclusion_chain(g: &RelationGraph) -> Result<(), Contradiction> {
    let mut touching: BTreeMap<LabelId, Vec<(LabelId, LabelId)>> = BTreeMap::new();
    for (lo, hi) in g.included_edges() {
        touching.entry(lo).or_default().push((lo, hi));
        touching.entry(hi).or_default().push((lo, hi));
    }
    for (l, es) in touching {
        if es.len() >= 2 {
            let mut labels = vec![l];
            for (x, y) in &es[..2] {
                for z in [*x, *y] {
                    if !labels.contains(&z) {
                        labels.push(z);
                    }
                }
            }
            return Err(Contradiction {
                labels,
                rule: Rule::InclusionChain,
            });
        }
    }
    Ok(())
}

/// Triangle rules plus the BRAC restrictions: no label may touch two proper
/// inclusions, and in every chain `a ⇢ b ⇢ c` the front edge is disjoint.
pub fn strengthen_brac(g: &RelationGraph) -> Result<RelationGraph, Contradiction> {
    let mut g = g.clone();
    loop {
        inclusion_chain(&g)?;
        g = triangle_fixpoint(g, true)?;
        inclusion_chain(&g)?;
        let dois = g.doi_edges();
        let fronts: Vec<(LabelId, LabelId)> = dois
            .iter()
            .copied()
            .filter(|&(_, hi)| dois.iter().any(|&(lo2, _)| lo2 == hi))
            .collect();
        if fronts.is_empty() {
            return Ok(g);
        }
        for (lo, hi) in fronts {
            g.set(
                lo,
                hi,
                EdgeKind::Disjoint,
                Origin::Strengthened {
                    rule: Rule::FrontEdge,
                    via: None,
                },
            );
        }
    }
}

/// Maximum bipartite matching (Hopcroft–Karp) on `(left, right)` candidate
/// pairs. Adjacency is explored in id order. Succeeds iff every left label is
/// matched; otherwise returns the unmatched left labels.
pub fn resolve_inclusion_matching(
    candidates: &BTreeSet<(LabelId, LabelId)>,
) -> Result<BTreeMap<LabelId, LabelId>, Vec<LabelId>> {
    let lefts: Vec<LabelId> = candidates
        .iter()
        .map(|p| p.0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let rights: Vec<LabelId> = candidates
        .iter()
        .map(|p| p.1)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let adj: Vec<Vec<usize>> = lefts
        .iter()
        .map(|&l| {
            candidates
                .iter()
                .filter(|p| p.0 == l)
                .map(|p| rights.binary_search(&p.1).unwrap())
                .collect()
        })
        .collect();
    let m = hopcroft_karp(lefts.len(), rights.len(), &adj);
    let unmatched: Vec<LabelId> = (0..lefts.len())
        .filter(|&i| m[i].is_none())
        .map(|i| lefts[i])
        .collect();
    if !unmatched.is_empty() {
        return Err(unmatched);
    }
    Ok((0..lefts.len())
        .map(|i| (lefts[i], rights[m[i].unwrap()]))
        .collect())
}

/// Returns the partner of every left vertex.
pub fn hopcroft_karp(nl: usize, nr: usize, adj: &[Vec<usize>]) -> Vec<Option<usize>> {
    const INF: usize = usize::MAX;
    let mut ml: Vec<Option<usize>> = vec![None; nl];
    let mut mr: Vec<Option<usize>> = vec![None; nr];
    let mut dist = vec![INF; nl];
    loop {
        // layered BFS from the free left vertices
        let mut q = VecDeque::new();
        for u in 0..nl {
            if ml[u].is_none() {
                dist[u] = 0;
                q.push_back(u);
            } else {
                dist[u] = INF;
            }
        }
        let mut found = false;
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                match mr[v] {
                    None => found = true,
                    Some(w) if dist[w] == INF => {
                        dist[w] = dist[u] + 1;
                        q.push_back(w);
                    }
                    _ => {}
                }
            }
        }
        if !found {
            return ml;
        }
        fn augment(
            u: usize,
            adj: &[Vec<usize>],
            ml: &mut [Option<usize>],
            mr: &mut [Option<usize>],
            dist: &mut [usize],
        ) -> bool {
            for &v in &adj[u] {
                let ok = match mr[v] {
                    None => true,
                    Some(w) => dist[w] == dist[u] + 1 && augment(w, adj, ml, mr, dist),
                };
                if ok {
                    ml[u] = Some(v);
                    mr[v] = Some(u);
                    return true;
                }
            }
            dist[u] = usize::MAX;
            false
        }
        for u in 0..nl {
            if ml[u].is_none() {
                augment(u, adj, &mut ml, &mut mr, &mut dist);
            }
        }
    }
}
