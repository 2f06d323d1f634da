//! Place/transition nets: firing, reachability graphs, structural classes,
//! LTS isomorphism, the `.pn` text format and Graphviz output.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::lts::{LabelId, Lts, StateId};

pub const DEFAULT_RG_CAP: usize = 100_000;

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Marking(pub Vec<u64>);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PetriError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown id {name}")]
    UnknownId { line: usize, name: String },
    #[error("line {line}: id {name} declared twice")]
    DuplicateId { line: usize, name: String },
    #[error("{transition} is not enabled: place {place} is short of tokens")]
    NotEnabled { transition: String, place: String },
    #[error("reachability graph exceeds {0} markings")]
    CapExceeded(usize),
}

/// `pre[p][t] = W(p,t)`, `post[p][t] = W(t,p)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PetriNet {
    pub places: Vec<String>,
    pub transitions: Vec<String>,
    pub pre: Vec<Vec<u64>>,
    pub post: Vec<Vec<u64>>,
    pub m0: Marking,
}

impl PetriNet {
    pub fn new(transitions: Vec<String>) -> PetriNet {
        PetriNet {
            transitions,
            ..Default::default()
        }
    }

    pub fn num_places(&self) -> usize {
        self.places.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.len()
    }

    /// Appends a place; `consume[t]`/`produce[t]` are the arc weights.
    pub fn add_place(&mut self, name: String, tokens: u64, consume: Vec<u64>, produce: Vec<u64>) {
        assert_eq!(consume.len(), self.transitions.len());
        assert_eq!(produce.len(), self.transitions.len());
        self.places.push(name);
        self.pre.push(consume);
        self.post.push(produce);
        self.m0.0.push(tokens);
    }

    pub fn remove_place(&mut self, p: usize) {
        self.places.remove(p);
        self.pre.remove(p);
        self.post.remove(p);
        self.m0.0.remove(p);
    }

    pub fn transition_id(&self, name: &str) -> Option<usize> {
        self.transitions.iter().position(|t| t == name)
    }

    pub fn place_id(&self, name: &str) -> Option<usize> {
        self.places.iter().position(|p| p == name)
    }

    /// Places with `W(p,t) > 0`.
    pub fn preset(&self, t: usize) -> BTreeSet<usize> {
        (0..self.places.len()).filter(|&p| self.pre[p][t] > 0).collect()
    }

    /// Transitions with `W(p,t) > 0`.
    pub fn postset_of_place(&self, p: usize) -> BTreeSet<usize> {
        (0..self.transitions.len())
            .filter(|&t| self.pre[p][t] > 0)
            .collect()
    }

    fn producers(&self, p: usize) -> usize {
        self.post[p].iter().filter(|&&w| w > 0).count()
    }

    pub fn enabled(&self, m: &Marking, t: usize) -> bool {
        (0..self.places.len()).all(|p| m.0[p] >= self.pre[p][t])
    }
}

pub fn fire(net: &PetriNet, m: &Marking, t: usize) -> Result<Marking, PetriError> {
    let mut out = m.clone();
    for p in 0..net.places.len() {
        if m.0[p] < net.pre[p][t] {
            return Err(PetriError::NotEnabled {
                transition: net.transitions[t].clone(),
                place: net.places[p].clone(),
            });
        }
        out.0[p] = m.0[p] - net.pre[p][t] + net.post[p][t];
    }
    Ok(out)
}

/// Breadth-first reachability graph. States are named `m0, m1, …` in
/// discovery order; labels are the transitions that occur, in net order.
/// Also returns the marking of every state.
pub fn reachability_graph_with_markings(
    net: &PetriNet,
    cap: usize,
) -> Result<(Lts, Vec<Marking>), PetriError> {
    let mut index: HashMap<Marking, usize> = HashMap::new();
    let mut marks = vec![net.m0.clone()];
    index.insert(net.m0.clone(), 0);
    let mut edges = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        for t in 0..net.transitions.len() {
            if !net.enabled(&marks[i], t) {
                continue;
            }
            let m = fire(net, &marks[i], t)?;
            let j = match index.get(&m) {
                Some(&j) => j,
                None => {
                    if marks.len() >= cap {
                        return Err(PetriError::CapExceeded(cap));
                    }
                    marks.push(m.clone());
                    index.insert(m, marks.len() - 1);
                    queue.push_back(marks.len() - 1);
                    marks.len() - 1
                }
            };
            edges.push((i, t, j));
        }
    }
    let used: BTreeSet<usize> = edges.iter().map(|e| e.1).collect();
    let relabel: BTreeMap<usize, usize> = used.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let labels = used.iter().map(|&t| net.transitions[t].clone()).collect();
    let states = (0..marks.len()).map(|i| format!("m{i}")).collect();
    let lts = Lts::new(
        states,
        labels,
        0,
        edges.into_iter().map(|(s, t, d)| (s, relabel[&t], d)),
    )
    .expect("generated edges are well formed");
    Ok((lts, marks))
}

pub fn reachability_graph(net: &PetriNet, cap: usize) -> Result<Lts, PetriError> {
    reachability_graph_with_markings(net, cap).map(|r| r.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct NetClass {
    pub plain: bool,
    pub mg: bool,
    pub cf: bool,
    pub ec: bool,
    pub efc: bool,
    pub wpi: bool,
    pub wac: bool,
    pub ac: bool,
    pub rac: bool,
    pub brac: bool,
}

impl NetClass {
    pub fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let flags = [
            (self.plain, "plain"),
            (self.mg, "MG"),
            (self.cf, "CF"),
            (self.ec, "EC"),
            (self.efc, "EFC"),
            (self.wpi, "WPI"),
            (self.wac, "WAC"),
            (self.ac, "AC"),
            (self.rac, "RAC"),
            (self.brac, "BRAC"),
        ];
        for (on, n) in flags {
            if on {
                v.push(n);
            }
        }
        v
    }
}

/// `x ≤ y` or `y ≤ x` componentwise.
fn comparable(x: &[u64], y: &[u64]) -> bool {
    let le = x.iter().zip(y).all(|(a, b)| a <= b);
    let ge = x.iter().zip(y).all(|(a, b)| a >= b);
    le || ge
}

pub fn classify_net(net: &PetriNet) -> NetClass {
    let np = net.places.len();
    let nt = net.transitions.len();
    let plain = net
        .pre
        .iter()
        .chain(&net.post)
        .all(|row| row.iter().all(|&w| w <= 1));
    let post: Vec<BTreeSet<usize>> = (0..np).map(|p| net.postset_of_place(p)).collect();
    let pre: Vec<BTreeSet<usize>> = (0..nt).map(|t| net.preset(t)).collect();
    let column = |t: usize| -> Vec<u64> { (0..np).map(|p| net.pre[p][t]).collect() };
    let preset_of = |ts: &BTreeSet<usize>| -> BTreeSet<usize> {
        ts.iter().flat_map(|&t| pre[t].iter().copied()).collect()
    };

    let cf = post.iter().all(|s| s.len() <= 1);
    let mg = plain && cf && (0..np).all(|p| net.producers(p) <= 1);

    let mut ec = true;
    let mut wpi = true;
    for t in 0..nt {
        for u in t + 1..nt {
            if pre[t].is_disjoint(&pre[u]) {
                continue;
            }
            let (ct, cu) = (column(t), column(u));
            ec &= ct == cu;
            wpi &= comparable(&ct, &cu);
        }
    }

    let mut wac = true;
    let mut rac = plain;
    let mut brac = plain;
    for p in 0..np {
        for q in 0..np {
            if p == q || post[p].is_disjoint(&post[q]) {
                continue;
            }
            if p < q {
                wac &= comparable(&net.pre[p], &net.pre[q]);
            }
            let pair = BTreeSet::from([p, q]);
            let n_shape = |x: usize, y: usize| {
                post[x].len() == 1 && post[y].len() <= 2 && preset_of(&post[y]) == pair
            };
            rac &= n_shape(p, q) || n_shape(q, p);
            let block = |x: usize, y: usize| {
                let t2: BTreeSet<usize> = post[y].difference(&post[x]).copied().collect();
                post[x].is_subset(&post[y])
                    && !t2.is_empty()
                    && preset_of(&post[x]) == pair
                    && preset_of(&t2) == BTreeSet::from([y])
            };
            brac &= post[p] == post[q] || block(p, q) || block(q, p);
        }
    }
    NetClass {
        plain,
        mg,
        cf,
        ec,
        efc: ec && plain,
        wpi,
        wac,
        ac: wac && plain,
        rac,
        brac,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub state: String,
    pub label: Option<String>,
    pub reason: String,
}

/// State bijection from `a` to `b` matching initial states and labelled
/// edges, with labels identified by name. Determinism forces the candidate;
/// the first divergence in breadth-first order is reported otherwise.
pub fn isomorphic(a: &Lts, b: &Lts) -> Result<Vec<StateId>, Mismatch> {
    let names = |l: &Lts| -> BTreeSet<String> {
        l.edges()
            .iter()
            .map(|e| l.label_name(e.label).to_string())
            .collect()
    };
    if names(a) != names(b) {
        return Err(Mismatch {
            state: a.state_name(a.initial()).to_string(),
            label: None,
            reason: "label sets differ".into(),
        });
    }
    if a.num_states() != b.num_states() {
        return Err(Mismatch {
            state: a.state_name(a.initial()).to_string(),
            label: None,
            reason: format!("{} states against {}", a.num_states(), b.num_states()),
        });
    }
    let label_map: BTreeMap<LabelId, Option<LabelId>> =
        a.labels().map(|l| (l, b.label_id(a.label_name(l)))).collect();
    let mut fwd: Vec<Option<StateId>> = vec![None; a.num_states()];
    let mut back: Vec<Option<StateId>> = vec![None; b.num_states()];
    fwd[a.initial().0] = Some(b.initial());
    back[b.initial().0] = Some(a.initial());
    let mut queue = VecDeque::from([a.initial()]);
    while let Some(s) = queue.pop_front() {
        let t = fwd[s.0].unwrap();
        let mut la: Vec<&str> = a.out_edges(s).map(|e| a.label_name(e.label)).collect();
        let mut lb: Vec<&str> = b.out_edges(t).map(|e| b.label_name(e.label)).collect();
        la.sort();
        lb.sort();
        if la != lb {
            let first = la
                .iter()
                .find(|x| !lb.contains(x))
                .or_else(|| lb.iter().find(|x| !la.contains(x)))
                .map(|x| x.to_string());
            return Err(Mismatch {
                state: a.state_name(s).to_string(),
                label: first,
                reason: "enabled labels differ".into(),
            });
        }
        for e in a.out_edges(s) {
            let lb = label_map[&e.label].expect("label sets agree");
            let d = b.successor(t, lb).expect("enabled in both");
            let mismatch = |why: &str| Mismatch {
                state: a.state_name(s).to_string(),
                label: Some(a.label_name(e.label).to_string()),
                reason: why.into(),
            };
            match (fwd[e.dst.0], back[d.0]) {
                (None, None) => {
                    fwd[e.dst.0] = Some(d);
                    back[d.0] = Some(e.dst);
                    queue.push_back(e.dst);
                }
                (Some(x), Some(y)) if x == d && y == e.dst => {}
                _ => return Err(mismatch("successors cannot be matched")),
            }
        }
    }
    Ok(fwd.into_iter().map(|x| x.expect("reachable")).collect())
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn parse_net(text: &str) -> Result<PetriNet, PetriError> {
    enum Kind {
        Place(usize),
        Transition(usize),
    }
    let mut ids: HashMap<String, Kind> = HashMap::new();
    let mut places: Vec<(String, u64)> = Vec::new();
    let mut transitions: Vec<String> = Vec::new();
    let mut arcs: Vec<(usize, bool, usize, usize, u64)> = Vec::new(); // line, p→t?, p, t, w
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let words: Vec<&str> = content.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        let syntax = |msg: &str| PetriError::Syntax {
            line,
            msg: msg.to_string(),
        };
        let declare = |ids: &mut HashMap<String, Kind>, name: &str, k: Kind| {
            if !valid_name(name) {
                return Err(syntax(&format!("bad name {name:?}")));
            }
            if ids.contains_key(name) {
                return Err(PetriError::DuplicateId {
                    line,
                    name: name.to_string(),
                });
            }
            ids.insert(name.to_string(), k);
            Ok(())
        };
        let number = |w: &str| -> Result<u64, PetriError> {
            if w.starts_with('-') {
                return Err(syntax(&format!("negative number {w}")));
            }
            w.parse::<u64>()
                .map_err(|_| syntax(&format!("bad number {w:?}")))
        };
        match words[0] {
            "place" if words.len() == 3 => {
                let tokens = number(words[2])?;
                declare(&mut ids, words[1], Kind::Place(places.len()))?;
                places.push((words[1].to_string(), tokens));
            }
            "transition" if words.len() == 2 => {
                declare(&mut ids, words[1], Kind::Transition(transitions.len()))?;
                transitions.push(words[1].to_string());
            }
            "arc" if words.len() == 3 || words.len() == 4 => {
                let w = if words.len() == 4 { number(words[3])? } else { 1 };
                if w == 0 {
                    return Err(syntax("arc weight must be positive"));
                }
                arcs.push((line, true, 0, 0, w));
                let unknown = |n: &str| PetriError::UnknownId {
                    line,
                    name: n.to_string(),
                };
                let from = ids.get(words[1]).ok_or_else(|| unknown(words[1]))?;
                let to = ids.get(words[2]).ok_or_else(|| unknown(words[2]))?;
                let arc = arcs.last_mut().unwrap();
                match (from, to) {
                    (Kind::Place(p), Kind::Transition(t)) => {
                        (arc.1, arc.2, arc.3) = (true, *p, *t);
                    }
                    (Kind::Transition(t), Kind::Place(p)) => {
                        (arc.1, arc.2, arc.3) = (false, *p, *t);
                    }
                    _ => return Err(syntax("arc must join a place and a transition")),
                }
            }
            _ => return Err(syntax(&format!("cannot parse {:?}", content.trim()))),
        }
    }
    let mut net = PetriNet::new(transitions);
    let nt = net.transitions.len();
    for (name, tokens) in places {
        net.add_place(name, tokens, vec![0; nt], vec![0; nt]);
    }
    for (line, consume, p, t, w) in arcs {
        let cell = if consume {
            &mut net.pre[p][t]
        } else {
            &mut net.post[p][t]
        };
        if *cell != 0 {
            return Err(PetriError::Syntax {
                line,
                msg: "arc given twice".into(),
            });
        }
        *cell = w;
    }
    Ok(net)
}

pub fn serialize_net(net: &PetriNet) -> String {
    let mut out = String::new();
    for (p, name) in net.places.iter().enumerate() {
        writeln!(out, "place {name} {}", net.m0.0[p]).unwrap();
    }
    for t in &net.transitions {
        writeln!(out, "transition {t}").unwrap();
    }
    let arc = |out: &mut String, a: &str, b: &str, w: u64| {
        if w == 1 {
            writeln!(out, "arc {a} {b}").unwrap();
        } else {
            writeln!(out, "arc {a} {b} {w}").unwrap();
        }
    };
    for (p, name) in net.places.iter().enumerate() {
        for (t, tn) in net.transitions.iter().enumerate() {
            if net.pre[p][t] > 0 {
                arc(&mut out, name, tn, net.pre[p][t]);
            }
            if net.post[p][t] > 0 {
                arc(&mut out, tn, name, net.post[p][t]);
            }
        }
    }
    out
}

pub fn render_dot(net: &PetriNet) -> String {
    let mut out = String::from("digraph net {\n");
    for (p, name) in net.places.iter().enumerate() {
        let tokens = net.m0.0[p];
        let label = if tokens > 0 {
            format!("{name}\\n{tokens}")
        } else {
            name.clone()
        };
        writeln!(out, "  \"{name}\" [shape=circle, label=\"{label}\"];").unwrap();
    }
    for t in &net.transitions {
        writeln!(out, "  \"{t}\" [shape=box];").unwrap();
    }
    let arc = |out: &mut String, a: &str, b: &str, w: u64| {
        if w > 1 {
            writeln!(out, "  \"{a}\" -> \"{b}\" [label=\"{w}\"];").unwrap();
        } else {
            writeln!(out, "  \"{a}\" -> \"{b}\";").unwrap();
        }
    };
    for (p, name) in net.places.iter().enumerate() {
        for (t, tn) in net.transitions.iter().enumerate() {
            if net.pre[p][t] > 0 {
                arc(&mut out, name, tn, net.pre[p][t]);
            }
            if net.post[p][t] > 0 {
                arc(&mut out, tn, name, net.post[p][t]);
            }
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lts::parse_lts;

    fn fig1_net() -> PetriNet {
        parse_net(include_str!("../fixtures/fig1-net.pn")).unwrap()
    }

    #[test]
    fn fire_fig1() {
        let n = fig1_net();
        let a = n.transition_id("a").unwrap();
        assert_eq!(n.m0, Marking(vec![2, 1, 0, 0, 0]));
        assert_eq!(fire(&n, &n.m0, a).unwrap(), Marking(vec![1, 0, 1, 1, 0]));
        let c = n.transition_id("c").unwrap();
        let err = fire(&n, &n.m0, c).unwrap_err();
        assert_eq!(
            err,
            PetriError::NotEnabled { transition: "c".into(), place: "p4".into() }
        );
    }

    #[test]
    fn self_loop_keeps_marking() {
        let n = parse_net("place p 1\ntransition t\narc p t\narc t p\n").unwrap();
        assert_eq!(fire(&n, &n.m0, 0).unwrap(), n.m0);
    }

    #[test]
    fn rg_fig1() {
        let rg = reachability_graph(&fig1_net(), 1000).unwrap();
        assert_eq!(rg.num_states(), 15);
        assert_eq!(rg.edges().len(), 24);
        let lts = parse_lts(include_str!("../fixtures/fig1.lts")).unwrap();
        assert!(isomorphic(&lts, &rg).is_ok());
    }

    #[test]
    fn rg_brac7() {
        let n = parse_net(include_str!("../fixtures/brac7-net.pn")).unwrap();
        let rg = reachability_graph(&n, 1000).unwrap();
        assert_eq!(rg.num_states(), 8);
        let lts = parse_lts(include_str!("../fixtures/brac7.lts")).unwrap();
        assert!(isomorphic(&lts, &rg).is_ok());
    }

    #[test]
    fn rg_unbounded() {
        let n = parse_net("place p 0\ntransition t\narc t p\n").unwrap();
        assert_eq!(reachability_graph(&n, 50), Err(PetriError::CapExceeded(50)));
    }

    #[test]
    fn isomorphism_cases() {
        let fig1 = parse_lts(include_str!("../fixtures/fig1.lts")).unwrap();
        let genx = parse_lts(include_str!("../fixtures/genx.lts")).unwrap();
        let id = isomorphic(&fig1, &fig1).unwrap();
        assert!(id.iter().enumerate().all(|(i, s)| s.0 == i));
        let m = isomorphic(&fig1, &genx).unwrap_err();
        assert_eq!(m.state, "s0");
    }

    #[test]
    fn classes() {
        let f = classify_net(&fig1_net());
        assert!(f.plain && f.rac && f.brac && f.wpi && f.ac);
        let left = classify_net(&parse_net(include_str!("../fixtures/choice-left.pn")).unwrap());
        assert!(left.ec);
        let mid = classify_net(&parse_net(include_str!("../fixtures/choice-middle.pn")).unwrap());
        assert!(mid.wac && !mid.wpi);
        let right = parse_net(include_str!("../fixtures/choice-right.pn")).unwrap();
        let rc = classify_net(&right);
        assert!(rc.wac && !rc.wpi);
        let mut swapped = right.clone();
        let (p2, p3) = (swapped.place_id("p2").unwrap(), swapped.place_id("p3").unwrap());
        let (t2, t3) = (swapped.transition_id("t2").unwrap(), swapped.transition_id("t3").unwrap());
        swapped.pre[p2][t2] = 2;
        swapped.pre[p3][t3] = 4;
        let sc = classify_net(&swapped);
        assert!(sc.wpi && !sc.wac);
    }

    #[test]
    fn round_trip() {
        for text in [
            include_str!("../fixtures/fig1-net.pn"),
            include_str!("../fixtures/case6b-net.pn"),
            "",
        ] {
            let n = parse_net(text).unwrap();
            assert_eq!(parse_net(&serialize_net(&n)).unwrap(), n);
        }
    }

    #[test]
    fn parse_errors() {
        let e = parse_net("place p 0\narc p q\n").unwrap_err();
        assert_eq!(e, PetriError::UnknownId { line: 2, name: "q".into() });
        assert!(matches!(
            parse_net("place p -1\n"),
            Err(PetriError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse_net("place p 0\ntransition p\n"),
            Err(PetriError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn dot_output() {
        let d = render_dot(&fig1_net());
        assert_eq!(d.matches("shape=circle").count(), 5);
        assert_eq!(d.matches("shape=box").count(), 6);
        assert!(!d.contains("label=\"1\""));
        assert_eq!(render_dot(&PetriNet::default()), "digraph net {\n}\n");
        let w = render_dot(&parse_net(include_str!("../fixtures/case6b-net.pn")).unwrap());
        assert!(w.contains("[label=\"2\"]"));
    }
}
