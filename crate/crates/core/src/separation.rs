//! Separation problems, the inequality systems that solve them, and regions.
//!
//! Variables of every system: `R0` (index 0), then `B(t)` and `F(t)` per label.
//! The value of a region at state `s` is `R0 + (F − B)·ψ(s)`.

use std::collections::BTreeSet;
use std::fmt;

use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::linsys::{rat, LinearSystem, Rel, Solution, VarTag};
use crate::lts::{
    cycle_basis, parikh_of_state, self_loop_labels, spanning_tree, LabelId, Lts, LtsError,
    ParikhVector, SpanningTree, StateId,
};
use crate::relations::{EdgeKind, RelationGraph};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SeparationProblem {
    Ssp(StateId, StateId),
    Essp(StateId, LabelId),
}

impl SeparationProblem {
    pub fn describe(&self, lts: &Lts) -> String {
        match *self {
            SeparationProblem::Ssp(s, t) => {
                format!("SSP({},{})", lts.state_name(s), lts.state_name(t))
            }
            SeparationProblem::Essp(s, a) => {
                format!("ESSP({},{})", lts.state_name(s), lts.label_name(a))
            }
        }
    }
}

/// All SSPs over unordered state pairs, then all ESSPs, in id order.
pub fn enumerate_separation_problems(lts: &Lts) -> Vec<SeparationProblem> {
    let mut out = Vec::new();
    for s in lts.states() {
        for t in lts.states().filter(|&t| t > s) {
            out.push(SeparationProblem::Ssp(s, t));
        }
    }
    for s in lts.states() {
        for a in lts.labels() {
            if !lts.enables(s, a) {
                out.push(SeparationProblem::Essp(s, a));
            }
        }
    }
    out
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Sign {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Lt, Sign::Gt];

    fn rel(self) -> Rel {
        match self {
            Sign::Lt => Rel::Lt,
            Sign::Gt => Rel::Gt,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Lt => "<",
            Sign::Gt => ">",
        })
    }
}

/// Spanning tree, Parikh vectors and cycle basis of one LTS.
#[derive(Clone, Debug)]
pub struct Encoding<'a> {
    pub lts: &'a Lts,
    pub tree: SpanningTree,
    pub basis: Vec<ParikhVector>,
    loops: BTreeSet<LabelId>,
}

impl<'a> Encoding<'a> {
    pub fn new(lts: &'a Lts) -> Result<Encoding<'a>, LtsError> {
        let tree = spanning_tree(lts)?;
        let basis = cycle_basis(lts, &tree);
        Ok(Encoding {
            lts,
            tree,
            basis,
            loops: self_loop_labels(lts),
        })
    }

    pub fn num_labels(&self) -> usize {
        self.lts.num_labels()
    }

    pub fn r0(&self) -> usize {
        0
    }

    pub fn b(&self, t: LabelId) -> usize {
        1 + t.0
    }

    pub fn f(&self, t: LabelId) -> usize {
        1 + self.num_labels() + t.0
    }

    pub fn psi(&self, s: StateId) -> &ParikhVector {
        parikh_of_state(&self.tree, s)
    }

    pub fn is_self_loop(&self, t: LabelId) -> bool {
        self.loops.contains(&t)
    }

    /// Terms of `R(s)`.
    pub fn state_terms(&self, s: StateId) -> Vec<(usize, i64)> {
        let mut v = vec![(self.r0(), 1)];
        v.extend(self.effect_terms(self.psi(s)));
        v
    }

    /// Terms of `(F − B)·x`.
    pub fn effect_terms(&self, x: &ParikhVector) -> Vec<(usize, i64)> {
        let mut v = Vec::new();
        for t in self.lts.labels() {
            let k = x.get(t);
            if k != 0 {
                v.push((self.f(t), k));
                v.push((self.b(t), -k));
            }
        }
        v
    }

    /// Empty system with the region variables declared.
    pub fn variables(&self) -> LinearSystem {
        let mut sys = LinearSystem::new();
        sys.add_var("R0", VarTag::R0);
        for t in self.lts.labels() {
            sys.add_var(format!("B_{}", self.lts.label_name(t)), VarTag::B(t.0));
        }
        for t in self.lts.labels() {
            sys.add_var(format!("F_{}", self.lts.label_name(t)), VarTag::F(t.0));
        }
        sys
    }

    /// Region conditions only: `R(s) ≥ B(t)` per edge, `R(s) ≥ 0` at
    /// deadlocks, and zero effect on every basis cycle.
    pub fn generic(&self) -> LinearSystem {
        let mut sys = self.variables();
        let mut seen = BTreeSet::new();
        let mut push = |sys: &mut LinearSystem, terms: Vec<(usize, i64)>, rel: Rel| {
            let mut key = terms.clone();
            key.sort();
            if seen.insert((key, rel as u8)) {
                sys.add(&terms, rel, 0);
            }
        };
        for s in self.lts.states() {
            let mut any = false;
            for e in self.lts.out_edges(s) {
                any = true;
                let mut terms = self.state_terms(s);
                terms.push((self.b(e.label), -1));
                push(&mut sys, terms, Rel::Ge);
            }
            if !any {
                push(&mut sys, self.state_terms(s), Rel::Ge);
            }
        }
        for g in &self.basis {
            push(&mut sys, self.effect_terms(g), Rel::Eq);
        }
        sys
    }

    /// `R(s) − B(a) < 0`.
    pub fn add_essp_row(&self, sys: &mut LinearSystem, s: StateId, a: LabelId) {
        let mut terms = self.state_terms(s);
        terms.push((self.b(a), -1));
        sys.add(&terms, Rel::Lt, 0);
    }

    /// `(F − B)·(ψ(s) − ψ(s′)) ⋚ 0`.
    pub fn add_ssp_row(&self, sys: &mut LinearSystem, s: StateId, s2: StateId, sign: Sign) {
        let d = self.psi(s).sub(self.psi(s2));
        sys.add(&self.effect_terms(&d), sign.rel(), 0);
    }

    pub fn generic_essp(&self, s: StateId, a: LabelId) -> LinearSystem {
        let mut sys = self.generic();
        self.add_essp_row(&mut sys, s, a);
        sys
    }

    pub fn generic_ssp(&self, s: StateId, s2: StateId, sign: Sign) -> LinearSystem {
        let mut sys = self.generic();
        self.add_ssp_row(&mut sys, s, s2, sign);
        sys
    }

    /// Preset rows for a place attached to label `a`: equal weights for
    /// equivalent labels, comparable weights for inclusions, zero weight for
    /// disjoint labels. Unresolved doi edges give no row.
    pub fn add_relation_rows(&self, sys: &mut LinearSystem, g: &RelationGraph, a: LabelId) {
        for b in self.lts.labels().filter(|&b| b != a) {
            match g.kind(a, b) {
                EdgeKind::Equivalent => sys.add(&[(self.b(b), 1), (self.b(a), -1)], Rel::Eq, 0),
                EdgeKind::Disjoint => sys.add(&[(self.b(b), 1)], Rel::Eq, 0),
                EdgeKind::Included { lo, hi } => {
                    sys.add(&[(self.b(lo), 1), (self.b(hi), -1)], Rel::Le, 0)
                }
                EdgeKind::Doi { .. } => {}
            }
        }
    }

    /// Rows every place of a WPI solution must satisfy regardless of which
    /// label it serves: `B(lo) ≤ B(hi)` for inclusions and `B(x) = B(y)` for
    /// equivalences.
    pub fn add_consistency_rows(&self, sys: &mut LinearSystem, g: &RelationGraph) {
        for a in self.lts.labels() {
            for b in self.lts.labels().filter(|&b| b > a) {
                match g.kind(a, b) {
                    EdgeKind::Equivalent => {
                        sys.add(&[(self.b(a), 1), (self.b(b), -1)], Rel::Eq, 0)
                    }
                    EdgeKind::Included { lo, hi } => {
                        sys.add(&[(self.b(lo), 1), (self.b(hi), -1)], Rel::Le, 0)
                    }
                    _ => {}
                }
            }
        }
    }

    pub fn essp_system_wpi(&self, g: &RelationGraph, s: StateId, a: LabelId) -> LinearSystem {
        let mut sys = self.generic_essp(s, a);
        self.add_relation_rows(&mut sys, g, a);
        sys
    }

    pub fn ssp_system_wpi(
        &self,
        g: &RelationGraph,
        s: StateId,
        s2: StateId,
        a: LabelId,
        sign: Sign,
    ) -> LinearSystem {
        let mut sys = self.generic_ssp(s, s2, sign);
        self.add_relation_rows(&mut sys, g, a);
        sys
    }

    fn all_binary(&self, sys: &mut LinearSystem) {
        for t in self.lts.labels() {
            sys.set_binary(self.b(t));
            sys.set_binary(self.f(t));
        }
    }

    /// Fixes `B(t) = 1` for `t` in `one`, `B(t) = 0` otherwise.
    fn fix_presets(&self, sys: &mut LinearSystem, one: &BTreeSet<LabelId>) {
        for t in self.lts.labels() {
            let v = i64::from(one.contains(&t));
            sys.add(&[(self.b(t), 1)], Rel::Eq, v);
        }
    }

    /// The two places of the asymmetric choice block for `included(lo, hi)`.
    ///
    /// System 1 is the place shared by both presets; it must solve every
    /// ESSP of `lo`. System 2 is the extra place of `hi`; it must solve the
    /// ESSPs of `hi` at states enabling `lo`.
    pub fn brac_block_systems(
        &self,
        g: &RelationGraph,
        lo: LabelId,
        hi: LabelId,
    ) -> (LinearSystem, LinearSystem) {
        let lo_class: BTreeSet<LabelId> = g.class_of(lo).into_iter().collect();
        let hi_class: BTreeSet<LabelId> = g.class_of(hi).into_iter().collect();

        let mut s1 = self.generic();
        self.all_binary(&mut s1);
        self.fix_presets(&mut s1, &lo_class.union(&hi_class).copied().collect());
        for &t in &lo_class {
            if !self.is_self_loop(t) {
                s1.add(&[(self.f(t), 1)], Rel::Eq, 0);
            }
        }
        for s in self.lts.states() {
            if !self.lts.enables(s, lo) {
                self.add_essp_row(&mut s1, s, lo);
            }
        }

        let mut s2 = self.generic();
        self.all_binary(&mut s2);
        self.fix_presets(&mut s2, &hi_class);
        for s in self.lts.states() {
            if self.lts.enables(s, lo) && !self.lts.enables(s, hi) {
                self.add_essp_row(&mut s2, s, hi);
            }
        }
        (s1, s2)
    }

    /// Labels that are an endpoint of an inclusion, with their classes.
    fn inclusion_labels(&self, g: &RelationGraph) -> BTreeSet<LabelId> {
        let mut out = BTreeSet::new();
        for (lo, hi) in g.included_edges() {
            out.extend(g.class_of(lo));
            out.extend(g.class_of(hi));
        }
        out
    }

    /// ESSP place of a free-choice block: 0/1 weights, relation rows at `a`.
    pub fn brac_essp_system_freechoice(
        &self,
        g: &RelationGraph,
        s: StateId,
        a: LabelId,
    ) -> LinearSystem {
        let mut sys = self.essp_system_wpi(g, s, a);
        self.all_binary(&mut sys);
        sys
    }

    /// SSP place of a free-choice block: labels taking part in inclusions
    /// must not consume from it.
    pub fn brac_ssp_system_freechoice(
        &self,
        g: &RelationGraph,
        s: StateId,
        s2: StateId,
        a: LabelId,
        sign: Sign,
    ) -> LinearSystem {
        let mut sys = self.ssp_system_wpi(g, s, s2, a, sign);
        for t in self.inclusion_labels(g) {
            sys.add(&[(self.b(t), 1)], Rel::Eq, 0);
        }
        self.all_binary(&mut sys);
        sys
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Region {
    pub r0: u64,
    pub b: Vec<u64>,
    pub f: Vec<u64>,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Region {
    pub fn zero(n: usize) -> Region {
        Region {
            r0: 0,
            b: vec![0; n],
            f: vec![0; n],
        }
    }

    /// Reads an integral, nonnegative solution of a region system.
    pub fn from_solution(enc: &Encoding, sol: &Solution) -> Option<Region> {
        if !sol.is_feasible() {
            return None;
        }
        let get = |v: usize| -> Option<u64> {
            let x = sol.value(v);
            if !x.is_integer() || *x < Zero::zero() {
                return None;
            }
            x.to_integer().to_u64()
        };
        let mut r = Region::zero(enc.num_labels());
        r.r0 = get(enc.r0())?;
        for t in enc.lts.labels() {
            r.b[t.0] = get(enc.b(t))?;
            r.f[t.0] = get(enc.f(t))?;
        }
        Some(r)
    }

    pub fn value_at(&self, enc: &Encoding, s: StateId) -> i64 {
        let psi = enc.psi(s);
        let mut v = self.r0 as i64;
        for t in enc.lts.labels() {
            v += psi.get(t) * (self.f[t.0] as i64 - self.b[t.0] as i64);
        }
        v
    }

    /// Values at all states, or `None` unless the region conditions hold on
    /// every edge.
    pub fn values(&self, enc: &Encoding) -> Option<Vec<i64>> {
        let vals: Vec<i64> = enc.lts.states().map(|s| self.value_at(enc, s)).collect();
        if vals.iter().any(|&v| v < 0) {
            return None;
        }
        for e in enc.lts.edges() {
            let (b, f) = (self.b[e.label.0] as i64, self.f[e.label.0] as i64);
            if vals[e.src.0] < b || vals[e.dst.0] != vals[e.src.0] - b + f {
                return None;
            }
        }
        Some(vals)
    }

    pub fn is_region(&self, enc: &Encoding) -> bool {
        self.values(enc).is_some()
    }

    pub fn solves(&self, enc: &Encoding, p: SeparationProblem) -> bool {
        match p {
            SeparationProblem::Ssp(s, t) => self.value_at(enc, s) != self.value_at(enc, t),
            SeparationProblem::Essp(s, a) => self.value_at(enc, s) < self.b[a.0] as i64,
        }
    }

    /// Divides by the common gcd of all entries, then lowers `r0` as far as
    /// the region conditions allow.
    pub fn normalized(&self, enc: &Encoding) -> Region {
        let g = self
            .b
            .iter()
            .chain(&self.f)
            .fold(self.r0, |acc, &x| gcd(acc, x));
        let mut r = self.clone();
        if g > 1 {
            r.r0 /= g;
            r.b.iter_mut().for_each(|x| *x /= g);
            r.f.iter_mut().for_each(|x| *x /= g);
        }
        let slack = enc
            .lts
            .states()
            .map(|s| {
                let need = enc
                    .lts
                    .out_edges(s)
                    .map(|e| r.b[e.label.0] as i64)
                    .max()
                    .unwrap_or(0);
                r.value_at(enc, s) - need
            })
            .min()
            .unwrap_or(0);
        if slack > 0 {
            r.r0 -= slack as u64;
        }
        r
    }

    /// Region value as a solution vector in the variable layout of `enc`.
    pub fn assignment(&self, enc: &Encoding) -> Vec<crate::linsys::Rational> {
        let mut v = vec![rat(0); 1 + 2 * enc.num_labels()];
        v[enc.r0()] = rat(self.r0 as i64);
        for t in enc.lts.labels() {
            v[enc.b(t)] = rat(self.b[t.0] as i64);
            v[enc.f(t)] = rat(self.f[t.0] as i64);
        }
        v
    }
}

/// Initial tokens and consume/produce weights of the place for `r`.
pub fn region_to_place(r: &Region) -> (u64, Vec<u64>, Vec<u64>) {
    (r.r0, r.b.clone(), r.f.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::{solve_integer, solve_rational, IntegerOptions};
    use crate::lts::parse_lts;
    use crate::relations::{build_relation_graph, quotient_by_equivalence};

    fn load(text: &str) -> Lts {
        parse_lts(text).unwrap()
    }

    fn st(l: &Lts, n: &str) -> StateId {
        l.state_id(n).unwrap()
    }

    fn lb(l: &Lts, n: &str) -> LabelId {
        l.label_id(n).unwrap()
    }

    fn region(l: &Lts, r0: u64, b: &[(&str, u64)], f: &[(&str, u64)]) -> Region {
        let mut r = Region::zero(l.num_labels());
        r.r0 = r0;
        for (n, v) in b {
            r.b[lb(l, n).0] = *v;
        }
        for (n, v) in f {
            r.f[lb(l, n).0] = *v;
        }
        r
    }

    #[test]
    fn enumerate_examples() {
        let l = load(include_str!("../fixtures/fig1.lts"));
        let ps = enumerate_separation_problems(&l);
        let (s4, s5) = (st(&l, "s4"), st(&l, "s5"));
        assert!(ps.contains(&SeparationProblem::Ssp(s4.min(s5), s4.max(s5))));
        assert!(ps.contains(&SeparationProblem::Essp(st(&l, "s13"), lb(&l, "a"))));
        let g = load(include_str!("../fixtures/genx.lts"));
        let ps = enumerate_separation_problems(&g);
        let (s3, s7) = (st(&g, "s3"), st(&g, "s7"));
        assert!(ps.contains(&SeparationProblem::Ssp(s3.min(s7), s3.max(s7))));
        assert!(ps.contains(&SeparationProblem::Essp(st(&g, "s2"), lb(&g, "b"))));
        assert!(enumerate_separation_problems(&load("initial s0\n")).is_empty());
    }

    #[test]
    fn fig1_wpi_witnesses() {
        let l = load(include_str!("../fixtures/fig1.lts"));
        let e = Encoding::new(&l).unwrap();
        let g = quotient_by_equivalence(&build_relation_graph(&l).unwrap()).unwrap();
        let p1 = region(&l, 2, &[("a", 1)], &[("f", 1)]);
        let sys = e.essp_system_wpi(&g, st(&l, "s13"), lb(&l, "a"));
        assert_eq!(sys.first_violation(&p1.assignment(&e)), None);
        assert!(solve_rational(&sys).unwrap().is_feasible());
        let p3 = region(&l, 0, &[("d", 1)], &[("a", 1)]);
        // keyed to d, the label consuming from this place
        let sys = e.ssp_system_wpi(&g, st(&l, "s4"), st(&l, "s5"), lb(&l, "d"), Sign::Gt);
        let sys2 = e.ssp_system_wpi(&g, st(&l, "s4"), st(&l, "s5"), lb(&l, "d"), Sign::Lt);
        let ok = |s: &LinearSystem| s.first_violation(&p3.assignment(&e)).is_none();
        assert!(ok(&sys) || ok(&sys2));
        assert!(p1.is_region(&e) && p3.is_region(&e));
        assert!(sys.is_homogeneous() && sys2.is_homogeneous());
    }

    #[test]
    fn genx_generic_infeasible() {
        let l = load(include_str!("../fixtures/genx.lts"));
        let e = Encoding::new(&l).unwrap();
        let sys = e.generic_essp(st(&l, "s2"), lb(&l, "b"));
        assert!(!solve_rational(&sys).unwrap().is_feasible());
        for sign in Sign::BOTH {
            let sys = e.generic_ssp(st(&l, "s3"), st(&l, "s7"), sign);
            assert!(!solve_rational(&sys).unwrap().is_feasible());
        }
    }

    #[test]
    fn fig1_blocks_match_net() {
        let l = load(include_str!("../fixtures/fig1.lts"));
        let e = Encoding::new(&l).unwrap();
        let g = quotient_by_equivalence(&build_relation_graph(&l).unwrap()).unwrap();
        let opts = IntegerOptions::with_cap(30);
        let p2 = region(&l, 1, &[("a", 1), ("b", 1)], &[("c", 1), ("e", 1), ("f", 1)]);
        let p1 = region(&l, 2, &[("a", 1)], &[("f", 1)]);
        let (s1, s2) = e.brac_block_systems(&g, lb(&l, "b"), lb(&l, "a"));
        assert_eq!(s1.first_violation(&p2.assignment(&e)), None);
        assert_eq!(s2.first_violation(&p1.assignment(&e)), None);
        assert!(solve_integer(&s1, &opts).unwrap().is_feasible());
        assert!(solve_integer(&s2, &opts).unwrap().is_feasible());
        let p4 = region(&l, 0, &[("c", 1), ("d", 1)], &[("a", 1), ("b", 1)]);
        let p3 = region(&l, 0, &[("d", 1)], &[("a", 1)]);
        let (s1, s2) = e.brac_block_systems(&g, lb(&l, "c"), lb(&l, "d"));
        assert_eq!(s1.first_violation(&p4.assignment(&e)), None);
        assert_eq!(s2.first_violation(&p3.assignment(&e)), None);
    }

    #[test]
    fn region_places() {
        let l = load(include_str!("../fixtures/fig1.lts"));
        let p1 = region(&l, 2, &[("a", 1)], &[("f", 1)]);
        let (m, cons, prod) = region_to_place(&p1);
        assert_eq!(m, 2);
        assert_eq!(cons[lb(&l, "a").0], 1);
        assert_eq!(prod[lb(&l, "f").0], 1);
        assert_eq!(region_to_place(&Region::zero(6)), (0, vec![0; 6], vec![0; 6]));
    }

    #[test]
    fn normalization() {
        let l = load(include_str!("../fixtures/fig1.lts"));
        let e = Encoding::new(&l).unwrap();
        let big = region(&l, 10, &[("a", 2)], &[("f", 2)]);
        assert!(big.is_region(&e));
        let n = big.normalized(&e);
        assert_eq!(n, region(&l, 2, &[("a", 1)], &[("f", 1)]));
    }

    #[test]
    fn acyclic_empty_basis() {
        let l = load("initial s0\ns0 a s1\ns1 b s2\n");
        let e = Encoding::new(&l).unwrap();
        let sys = e.generic_essp(StateId(1), LabelId(0));
        // edge rows, one deadlock row and the strict row
        assert_eq!(sys.rows.len(), 4);
        assert!(solve_rational(&sys).unwrap().is_feasible());
    }
}
