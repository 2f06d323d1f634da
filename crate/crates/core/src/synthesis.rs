//! End-to-end synthesis of WPI and BRAC nets, with verification by
//! reachability graph regeneration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::linsys::{
    lift_homogeneous_to_integer, solve_integer, solve_rational, IntegerOptions, LinearSystem, Rel,
    SolveError,
};
use crate::lts::{validate, LabelId, Lts, StateId};
use crate::petri::{classify_net, isomorphic, reachability_graph, Mismatch, NetClass, PetriError, PetriNet};
use crate::relations::{
    build_relation_graph, quotient_by_equivalence, resolve_inclusion_matching, strengthen_brac,
    strengthen_wpi, Contradiction, EdgeKind, RelationGraph,
};
use crate::separation::{Encoding, Region, SeparationProblem, Sign};

/// Unsolved SSPs handled per parallel wave.
const SSP_WAVE: usize = 8;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetClass {
    Wpi,
    Brac,
}

impl FromStr for TargetClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wpi" => Ok(TargetClass::Wpi),
            "brac" => Ok(TargetClass::Brac),
            _ => Err(format!("unknown class {s:?} (expected wpi or brac)")),
        }
    }
}

impl fmt::Display for TargetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetClass::Wpi => "wpi",
            TargetClass::Brac => "brac",
        })
    }
}

impl TargetClass {
    pub fn holds(self, c: &NetClass) -> bool {
        match self {
            TargetClass::Wpi => c.wpi,
            TargetClass::Brac => c.brac,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthesisConfig {
    pub target: TargetClass,
    /// Maximum number of residual doi edges enumerated for WPI.
    pub selfloop_cap: usize,
    /// Maximum number of block re-solves when assigning SSPs to BRAC blocks.
    pub ssp_combo_cap: usize,
    pub rg_cap: usize,
    /// Bound on `R0` in integer solving; `None` means twice the state count.
    pub int_cap: Option<u64>,
    pub prune: bool,
}

impl SynthesisConfig {
    pub fn new(target: TargetClass) -> Self {
        SynthesisConfig {
            target,
            selfloop_cap: 12,
            ssp_combo_cap: 4096,
            rg_cap: crate::petri::DEFAULT_RG_CAP,
            int_cap: None,
            prune: false,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
    CapExceeded,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    InvalidInput { reason: String },
    Contradiction { rule: String, labels: Vec<String> },
    /// A separation problem none of the listed systems could solve.
    Unsolvable { problem: String, systems: Vec<String> },
    /// An AC block place without solution.
    Block { lo: String, hi: String, system: u8 },
    /// Self-loop labels without a free-choice preset and without a partner.
    Unmatched { labels: Vec<String>, problems: Vec<String> },
    Verification { reason: String },
    Internal { reason: String },
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::InvalidInput { reason } => write!(f, "invalid input: {reason}"),
            Witness::Contradiction { rule, labels } => {
                write!(f, "contradiction ({rule}) on {}", labels.join(","))
            }
            Witness::Unsolvable { problem, systems } => {
                write!(f, "{problem} is unsolvable ({} systems tried)", systems.len())
            }
            Witness::Block { lo, hi, system } => {
                write!(f, "no place for system {system} of the block ({lo},{hi})")
            }
            Witness::Unmatched { labels, .. } => {
                write!(f, "no free-choice or AC-block preset for {}", labels.join(","))
            }
            Witness::Verification { reason } => write!(f, "verification failed: {reason}"),
            Witness::Internal { reason } => write!(f, "internal error: {reason}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DoiChoice {
    pub lo: String,
    pub hi: String,
    pub choice: &'static str,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MatchingReport {
    pub candidates: Vec<[String; 2]>,
    pub assignment: Vec<[String; 2]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RegionReport {
    pub place: String,
    pub role: String,
    pub r0: u64,
    pub consume: BTreeMap<String, u64>,
    pub produce: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verification {
    pub rg_states: usize,
    pub rg_edges: usize,
    pub isomorphic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mismatch: Option<Mismatch>,
    pub classes: Vec<&'static str>,
    pub in_target: bool,
    #[serde(skip)]
    pub flags: NetClass,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.isomorphic && self.in_target
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SynthesisReport {
    pub schema: u32,
    pub target: TargetClass,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<String>,
    pub witness: Option<Witness>,
    pub interpretation: Vec<DoiChoice>,
    pub matching: Option<MatchingReport>,
    pub regions: Vec<RegionReport>,
    pub verification: Option<Verification>,
    #[serde(skip)]
    pub net: Option<PetriNet>,
}

impl SynthesisReport {
    fn new(target: TargetClass) -> Self {
        SynthesisReport {
            schema: 1,
            target,
            outcome: Outcome::Failure,
            cap: None,
            witness: None,
            interpretation: Vec::new(),
            matching: None,
            regions: Vec::new(),
            verification: None,
            net: None,
        }
    }

    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    fn stop(mut self, s: Stop) -> Self {
        match s {
            Stop::Fail(w) => {
                self.outcome = Outcome::Failure;
                self.witness = Some(w);
            }
            Stop::Cap(c) => {
                self.outcome = Outcome::CapExceeded;
                self.cap = Some(c);
            }
        }
        self
    }
}

/// Reachability graph, isomorphism and class check of a candidate net.
pub fn verify_solution(
    net: &PetriNet,
    lts: &Lts,
    target: TargetClass,
    rg_cap: usize,
) -> Result<Verification, PetriError> {
    let rg = reachability_graph(net, rg_cap)?;
    let iso = isomorphic(lts, &rg);
    let flags = classify_net(net);
    Ok(Verification {
        rg_states: rg.num_states(),
        rg_edges: rg.edges().len(),
        isomorphic: iso.is_ok(),
        mismatch: iso.err(),
        classes: flags.names(),
        in_target: target.holds(&flags),
        flags,
    })
}

#[derive(Debug)]
enum Stop {
    Fail(Witness),
    Cap(String),
}

fn from_solve(e: SolveError) -> Stop {
    match e {
        SolveError::CapExceeded(m) => Stop::Cap(format!("integer bound ({m})")),
        other => Stop::Fail(Witness::Internal {
            reason: other.to_string(),
        }),
    }
}

fn contradiction(lts: &Lts, c: &Contradiction) -> Stop {
    Stop::Fail(Witness::Contradiction {
        rule: c.rule.to_string(),
        labels: c.labels.iter().map(|&l| lts.label_name(l).to_string()).collect(),
    })
}

fn name(lts: &Lts, l: LabelId) -> String {
    lts.label_name(l).to_string()
}

fn check_input(lts: &Lts) -> Result<(), Stop> {
    let v = validate(lts);
    if v.is_valid() {
        return Ok(());
    }
    let reason = if !v.deterministic {
        let (e1, e2) = v.nondeterminism.expect("witness");
        format!(
            "nondeterministic at {} with label {} ({} and {})",
            lts.state_name(e1.src),
            lts.label_name(e1.label),
            lts.state_name(e1.dst),
            lts.state_name(e2.dst)
        )
    } else {
        let names: Vec<&str> = v.unreachable.iter().map(|&s| lts.state_name(s)).collect();
        format!("unreachable states {}", names.join(","))
    };
    Err(Stop::Fail(Witness::InvalidInput { reason }))
}

/// Regions found so far with the reason each was added.
#[derive(Clone, Debug, Default)]
struct Regions {
    list: Vec<(Region, String)>,
}

impl Regions {
    fn push(&mut self, r: Region, role: String) {
        if !self.list.iter().any(|(x, _)| *x == r) {
            self.list.push((r, role));
        }
    }

    fn solves(&self, enc: &Encoding, p: SeparationProblem) -> bool {
        self.list.iter().any(|(r, _)| r.solves(enc, p))
    }

    fn extend(&mut self, other: Vec<(Region, String)>) {
        for (r, role) in other {
            self.push(r, role);
        }
    }
}

/// The first `limit` state pairs (in id order) that no region tells apart.
fn unseparated<'r>(
    enc: &Encoding,
    regions: impl Iterator<Item = &'r Region>,
    limit: usize,
) -> Vec<(StateId, StateId)> {
    let regions: Vec<&Region> = regions.collect();
    let mut groups: BTreeMap<Vec<i64>, Vec<StateId>> = BTreeMap::new();
    for s in enc.lts.states() {
        let key: Vec<i64> = regions.iter().map(|r| r.value_at(enc, s)).collect();
        groups.entry(key).or_default().push(s);
    }
    let mut pairs = Vec::new();
    for g in groups.values() {
        for (i, &s) in g.iter().enumerate() {
            for &t in &g[i + 1..] {
                pairs.push((s, t));
            }
        }
    }
    pairs.sort();
    pairs.truncate(limit);
    pairs
}

fn interpretations(k: usize) -> Vec<Vec<usize>> {
    fn combos(n: usize, size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            combos(n, size, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for size in 0..=k {
        combos(k, size, 0, &mut Vec::new(), &mut out);
    }
    out
}

fn build_net(lts: &Lts, regions: &Regions) -> (PetriNet, Vec<RegionReport>) {
    let labels: BTreeSet<&str> = lts.label_names().iter().map(|s| s.as_str()).collect();
    let mut net = PetriNet::new(lts.label_names().to_vec());
    let mut reports = Vec::new();
    for (i, (r, role)) in regions.list.iter().enumerate() {
        let mut pname = format!("p{i}");
        while labels.contains(pname.as_str()) {
            pname.push('_');
        }
        net.add_place(pname.clone(), r.r0, r.b.clone(), r.f.clone());
        let pick = |v: &[u64]| -> BTreeMap<String, u64> {
            lts.labels()
                .filter(|t| v[t.0] > 0)
                .map(|t| (name(lts, t), v[t.0]))
                .collect()
        };
        reports.push(RegionReport {
            place: pname,
            role: role.clone(),
            r0: r.r0,
            consume: pick(&r.b),
            produce: pick(&r.f),
        });
    }
    (net, reports)
}

/// Builds, optionally prunes and verifies the net.
fn finish(
    lts: &Lts,
    cfg: &SynthesisConfig,
    regions: &Regions,
    mut report: SynthesisReport,
) -> SynthesisReport {
    let (mut net, mut reports) = build_net(lts, regions);
    let verify = |n: &PetriNet| verify_solution(n, lts, cfg.target, cfg.rg_cap);
    let mut ver = match verify(&net) {
        Ok(v) => v,
        Err(e) => return report.stop(Stop::Cap(format!("rg_cap ({e})"))),
    };
    if cfg.prune && ver.passed() {
        let mut p = 0;
        while p < net.num_places() {
            let mut smaller = net.clone();
            smaller.remove_place(p);
            match verify(&smaller) {
                Ok(v) if v.passed() => {
                    net = smaller;
                    reports.remove(p);
                    ver = v;
                }
                _ => p += 1,
            }
        }
    }
    report.regions = reports;
    if ver.passed() {
        report.outcome = Outcome::Success;
        report.net = Some(net);
    } else {
        let reason = match &ver.mismatch {
            Some(m) => format!("reachability graph differs at {}: {}", m.state, m.reason),
            None => format!("net is not in {}", cfg.target),
        };
        report.outcome = Outcome::Failure;
        report.witness = Some(Witness::Verification { reason });
    }
    report.verification = Some(ver);
    report
}

pub fn synthesize(lts: &Lts, cfg: &SynthesisConfig) -> SynthesisReport {
    match cfg.target {
        TargetClass::Wpi => synthesize_wpi(lts, cfg),
        TargetClass::Brac => synthesize_brac(lts, cfg),
    }
}

// ---------------------------------------------------------------- WPI

pub fn synthesize_wpi(lts: &Lts, cfg: &SynthesisConfig) -> SynthesisReport {
    synthesize_wpi_forced(lts, cfg, &[])
}

/// WPI synthesis with some relations overridden after strengthening, to
/// test what a given interpretation implies.
pub fn synthesize_wpi_forced(
    lts: &Lts,
    cfg: &SynthesisConfig,
    forced: &[(LabelId, LabelId, EdgeKind)],
) -> SynthesisReport {
    let report = SynthesisReport::new(TargetClass::Wpi);
    let prepared = check_input(lts).and_then(|_| {
        let g = build_relation_graph(lts).map_err(|c| contradiction(lts, &c))?;
        let q = quotient_by_equivalence(&g).map_err(|c| contradiction(lts, &c))?;
        let mut s = strengthen_wpi(&q).map_err(|c| contradiction(lts, &c))?;
        for &(a, b, k) in forced {
            s = s.with_edge(a, b, k);
        }
        Ok(s)
    });
    let g = match prepared {
        Ok(g) => g,
        Err(e) => return report.stop(e),
    };
    let enc = Encoding::new(lts).expect("validated input");
    wpi_with_graph(lts, &enc, &g, cfg, report)
}

fn wpi_with_graph(
    lts: &Lts,
    enc: &Encoding,
    g: &RelationGraph,
    cfg: &SynthesisConfig,
    mut report: SynthesisReport,
) -> SynthesisReport {
    let dois = g.doi_edges();
    if dois.len() > cfg.selfloop_cap {
        return report.stop(Stop::Cap(format!(
            "selfloop_cap ({} residual doi edges, cap {})",
            dois.len(),
            cfg.selfloop_cap
        )));
    }
    let mut first_failure = None;
    for choice in interpretations(dois.len()) {
        let included: BTreeSet<(LabelId, LabelId)> = choice.iter().map(|&i| dois[i]).collect();
        let resolved = g.resolve_doi(&included);
        report.interpretation = dois
            .iter()
            .map(|&(lo, hi)| DoiChoice {
                lo: name(lts, lo),
                hi: name(lts, hi),
                choice: if included.contains(&(lo, hi)) {
                    "included"
                } else {
                    "disjoint"
                },
            })
            .collect();
        match solve_wpi(enc, &resolved) {
            Ok(regions) => return finish(lts, cfg, &regions, report),
            Err(Stop::Cap(c)) => return report.stop(Stop::Cap(c)),
            Err(f) => {
                first_failure.get_or_insert(f);
            }
        }
    }
    report.stop(first_failure.expect("at least one interpretation"))
}

/// Label pairs whose presets must not intersect.
fn disjoint_pairs(lts: &Lts, g: &RelationGraph) -> Vec<(LabelId, LabelId)> {
    let mut v = Vec::new();
    for a in lts.labels() {
        for b in lts.labels().filter(|&b| b > a) {
            if g.kind(a, b) == EdgeKind::Disjoint {
                v.push((a, b));
            }
        }
    }
    v
}

fn wpi_region(
    enc: &Encoding,
    g: &RelationGraph,
    mut sys: LinearSystem,
    disjoint: &[(LabelId, LabelId)],
) -> Result<Option<Region>, Stop> {
    enc.add_consistency_rows(&mut sys, g);
    wpi_branch(enc, &sys, disjoint)
}

/// Rational solve and lift; if some disjoint pair would share the place,
/// retry with one of the two weights fixed to zero.
fn wpi_branch(
    enc: &Encoding,
    sys: &LinearSystem,
    disjoint: &[(LabelId, LabelId)],
) -> Result<Option<Region>, Stop> {
    let sol = solve_rational(sys).map_err(from_solve)?;
    if !sol.is_feasible() {
        return Ok(None);
    }
    let sol = lift_homogeneous_to_integer(&sol, sys).map_err(from_solve)?;
    let r = Region::from_solution(enc, &sol).ok_or_else(|| {
        Stop::Fail(Witness::Internal {
            reason: "lifted solution is not a nonnegative integer vector".into(),
        })
    })?;
    if let Some(&(x, y)) = disjoint.iter().find(|(x, y)| r.b[x.0] > 0 && r.b[y.0] > 0) {
        for z in [x, y] {
            let mut narrower = sys.clone();
            narrower.add(&[(enc.b(z), 1)], Rel::Eq, 0);
            if let Some(r) = wpi_branch(enc, &narrower, disjoint)? {
                return Ok(Some(r));
            }
        }
        return Ok(None);
    }
    Ok(Some(r.normalized(enc)))
}

fn solve_wpi(enc: &Encoding, g: &RelationGraph) -> Result<Regions, Stop> {
    let lts = enc.lts;
    let disjoint = disjoint_pairs(lts, g);
    let mut regions = Regions::default();
    let essps: Vec<(StateId, LabelId)> = lts
        .states()
        .flat_map(|s| lts.labels().map(move |a| (s, a)))
        .filter(|&(s, a)| !lts.enables(s, a))
        .collect();
    loop {
        let mut seen = BTreeSet::new();
        let batch: Vec<(StateId, LabelId)> = essps
            .iter()
            .copied()
            .filter(|&(s, a)| !regions.solves(enc, SeparationProblem::Essp(s, a)))
            .filter(|&(_, a)| seen.insert(a))
            .collect();
        if batch.is_empty() {
            break;
        }
        let results: Vec<Result<Option<Region>, Stop>> = batch
            .par_iter()
            .map(|&(s, a)| wpi_region(enc, g, enc.essp_system_wpi(g, s, a), &disjoint))
            .collect();
        for (&(s, a), res) in batch.iter().zip(results) {
            let p = SeparationProblem::Essp(s, a);
            match res? {
                Some(r) => regions.push(r, p.describe(lts)),
                None => {
                    return Err(Stop::Fail(Witness::Unsolvable {
                        problem: p.describe(lts),
                        systems: vec![format!("essp_wpi {}", p.describe(lts))],
                    }))
                }
            }
        }
    }
    let nodes = g.nodes();
    loop {
        let batch = unseparated(enc, regions.list.iter().map(|r| &r.0), SSP_WAVE);
        if batch.is_empty() {
            break;
        }
        let results: Vec<Result<Result<Region, Vec<String>>, Stop>> = batch
            .par_iter()
            .map(|&(s, t)| {
                let mut tried = Vec::new();
                for &a in &nodes {
                    for sign in Sign::BOTH {
                        let sys = enc.ssp_system_wpi(g, s, t, a, sign);
                        if let Some(r) = wpi_region(enc, g, sys, &disjoint)? {
                            return Ok(Ok(r));
                        }
                        tried.push(format!("ssp_wpi label {} sign {sign}", lts.label_name(a)));
                    }
                }
                Ok(Err(tried))
            })
            .collect();
        for (&(s, t), res) in batch.iter().zip(results) {
            let p = SeparationProblem::Ssp(s, t);
            match res? {
                Ok(r) => regions.push(r, p.describe(lts)),
                Err(systems) => {
                    return Err(Stop::Fail(Witness::Unsolvable {
                        problem: p.describe(lts),
                        systems,
                    }))
                }
            }
        }
    }
    Ok(regions)
}

// ---------------------------------------------------------------- BRAC

fn solve_int(sys: &LinearSystem, opts: &IntegerOptions, enc: &Encoding) -> Result<Option<Region>, Stop> {
    let sol = solve_integer(sys, opts).map_err(from_solve)?;
    if !sol.is_feasible() {
        return Ok(None);
    }
    Region::from_solution(enc, &sol)
        .map(|r| Some(r.normalized(enc)))
        .ok_or_else(|| {
            Stop::Fail(Witness::Internal {
                reason: "integer solution out of range".into(),
            })
        })
}

/// Free-choice ESSP places for each label, solved in waves; a label whose
/// ESSP has no solution is reported with that ESSP.
#[allow(clippy::type_complexity)]
fn fc_essps(
    enc: &Encoding,
    g: &RelationGraph,
    labels: &[LabelId],
    existing: &Regions,
    opts: &IntegerOptions,
) -> Result<BTreeMap<LabelId, Result<Vec<(Region, String)>, SeparationProblem>>, Stop> {
    let lts = enc.lts;
    let mut found: BTreeMap<LabelId, Regions> = labels.iter().map(|&a| (a, Regions::default())).collect();
    let mut failed: BTreeMap<LabelId, SeparationProblem> = BTreeMap::new();
    loop {
        let batch: Vec<(StateId, LabelId)> = labels
            .iter()
            .filter(|a| !failed.contains_key(a))
            .filter_map(|&a| {
                lts.states()
                    .find(|&s| {
                        let p = SeparationProblem::Essp(s, a);
                        !lts.enables(s, a) && !existing.solves(enc, p) && !found[&a].solves(enc, p)
                    })
                    .map(|s| (s, a))
            })
            .collect();
        if batch.is_empty() {
            break;
        }
        let results: Vec<Result<Option<Region>, Stop>> = batch
            .par_iter()
            .map(|&(s, a)| solve_int(&enc.brac_essp_system_freechoice(g, s, a), opts, enc))
            .collect();
        for (&(s, a), res) in batch.iter().zip(results) {
            let p = SeparationProblem::Essp(s, a);
            match res? {
                Some(r) => found.get_mut(&a).unwrap().push(r, p.describe(lts)),
                None => {
                    failed.insert(a, p);
                }
            }
        }
    }
    Ok(found
        .into_iter()
        .map(|(a, rs)| match failed.get(&a) {
            Some(&p) => (a, Err(p)),
            None => (a, Ok(rs.list)),
        })
        .collect())
}

struct Slot {
    lo: LabelId,
    hi: LabelId,
    which: u8,
    base: LinearSystem,
    extra: Vec<(StateId, StateId, Sign)>,
    region: Region,
}

impl Slot {
    fn role(&self, lts: &Lts) -> String {
        format!(
            "block({},{})/{}",
            lts.label_name(self.lo),
            lts.label_name(self.hi),
            self.which
        )
    }
}

pub fn synthesize_brac(lts: &Lts, cfg: &SynthesisConfig) -> SynthesisReport {
    let mut report = SynthesisReport::new(TargetClass::Brac);
    let prepared = check_input(lts).and_then(|_| {
        let g = build_relation_graph(lts).map_err(|c| contradiction(lts, &c))?;
        let q = quotient_by_equivalence(&g).map_err(|c| contradiction(lts, &c))?;
        let w = strengthen_wpi(&q).map_err(|c| contradiction(lts, &c))?;
        strengthen_brac(&w).map_err(|c| contradiction(lts, &c))
    });
    let g = match prepared {
        Ok(g) => g,
        Err(e) => return report.stop(e),
    };
    let enc = Encoding::new(lts).expect("validated input");
    match brac_pipeline(&enc, &g, cfg, &mut report) {
        Ok(regions) => finish(lts, cfg, &regions, report),
        Err(e) => report.stop(e),
    }
}

fn brac_pipeline(
    enc: &Encoding,
    g: &RelationGraph,
    cfg: &SynthesisConfig,
    report: &mut SynthesisReport,
) -> Result<Regions, Stop> {
    let lts = enc.lts;
    let opts = IntegerOptions::with_cap(cfg.int_cap.unwrap_or(2 * lts.num_states() as u64).max(1));
    let incl = g.included_edges();
    let mut incl_labels: BTreeSet<LabelId> = BTreeSet::new();
    for &(lo, hi) in &incl {
        incl_labels.extend(g.class_of(lo));
        incl_labels.extend(g.class_of(hi));
    }
    let dois: Vec<(LabelId, LabelId)> = g.doi_edges();
    let all_disjoint = g.resolve_doi(&BTreeSet::new());

    // labels with incoming doi edges must manage with a free-choice preset
    let targets: Vec<LabelId> = dois
        .iter()
        .map(|d| d.1)
        .filter(|y| !incl_labels.contains(y))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let target_fc = fc_essps(enc, &all_disjoint, &targets, &Regions::default(), &opts)?;
    for r in target_fc.values() {
        if let Err(p) = r {
            return Err(Stop::Fail(Witness::Unsolvable {
                problem: p.describe(lts),
                systems: vec![format!("essp_fc {}", p.describe(lts))],
            }));
        }
    }

    // self-loop sources: free-choice first, otherwise an AC block with a target
    let sources: Vec<LabelId> = dois
        .iter()
        .map(|d| d.0)
        .filter(|x| !incl_labels.contains(x))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let source_fc = fc_essps(enc, &all_disjoint, &sources, &Regions::default(), &opts)?;
    let needy: Vec<(LabelId, SeparationProblem)> = source_fc
        .iter()
        .filter_map(|(&x, r)| r.as_ref().err().map(|&p| (x, p)))
        .collect();
    let candidates: Vec<(LabelId, LabelId)> = needy
        .iter()
        .flat_map(|&(x, _)| {
            dois.iter()
                .filter(move |d| d.0 == x)
                .copied()
                .filter(|d| !incl_labels.contains(&d.1))
        })
        .collect();
    let tested: Vec<Result<Option<(Region, Region)>, Stop>> = candidates
        .par_iter()
        .map(|&(x, y)| {
            let gxy = all_disjoint.with_edge(x, y, EdgeKind::Included { lo: x, hi: y });
            let (s1, s2) = enc.brac_block_systems(&gxy, x, y);
            let r1 = solve_int(&s1, &opts, enc)?;
            let r2 = match r1 {
                Some(_) => solve_int(&s2, &opts, enc)?,
                None => None,
            };
            Ok(r1.zip(r2))
        })
        .collect();
    let mut lambda = BTreeSet::new();
    let mut block_regions: BTreeMap<(LabelId, LabelId), (Region, Region)> = BTreeMap::new();
    for (&c, res) in candidates.iter().zip(tested) {
        if let Some(rs) = res? {
            lambda.insert(c);
            block_regions.insert(c, rs);
        }
    }
    let mut matching = MatchingReport {
        candidates: lambda.iter().map(|&(x, y)| [name(lts, x), name(lts, y)]).collect(),
        assignment: Vec::new(),
    };
    let assignment = resolve_inclusion_matching(&lambda).unwrap_or_default();
    let unmatched: Vec<&(LabelId, SeparationProblem)> =
        needy.iter().filter(|(x, _)| !assignment.contains_key(x)).collect();
    matching.assignment = assignment.iter().map(|(&x, &y)| [name(lts, x), name(lts, y)]).collect();
    report.matching = Some(matching);
    let matched: BTreeSet<(LabelId, LabelId)> = assignment.iter().map(|(&x, &y)| (x, y)).collect();
    report.interpretation = dois
        .iter()
        .map(|&(lo, hi)| DoiChoice {
            lo: name(lts, lo),
            hi: name(lts, hi),
            choice: if matched.contains(&(lo, hi)) {
                "included"
            } else {
                "disjoint"
            },
        })
        .collect();
    if !unmatched.is_empty() {
        return Err(Stop::Fail(Witness::Unmatched {
            labels: unmatched.iter().map(|(x, _)| name(lts, *x)).collect(),
            problems: unmatched.iter().map(|(_, p)| p.describe(lts)).collect(),
        }));
    }
    let gf = g.resolve_doi(&matched);

    // AC blocks
    let mut blocks: Vec<(LabelId, LabelId)> = incl.iter().copied().chain(matched.iter().copied()).collect();
    blocks.sort();
    let to_solve: Vec<(LabelId, LabelId)> = blocks
        .iter()
        .copied()
        .filter(|b| !block_regions.contains_key(b))
        .collect();
    let solved: Vec<Result<(Option<Region>, Option<Region>), Stop>> = to_solve
        .par_iter()
        .map(|&(lo, hi)| {
            let (s1, s2) = enc.brac_block_systems(&gf, lo, hi);
            Ok((solve_int(&s1, &opts, enc)?, solve_int(&s2, &opts, enc)?))
        })
        .collect();
    for (&(lo, hi), res) in to_solve.iter().zip(solved) {
        let (r1, r2) = res?;
        let fail = |system| {
            Stop::Fail(Witness::Block {
                lo: name(lts, lo),
                hi: name(lts, hi),
                system,
            })
        };
        let r1 = r1.ok_or_else(|| fail(1))?;
        let r2 = r2.ok_or_else(|| fail(2))?;
        block_regions.insert((lo, hi), (r1, r2));
    }
    let mut slots: Vec<Slot> = Vec::new();
    for &(lo, hi) in &blocks {
        let (s1, s2) = enc.brac_block_systems(&gf, lo, hi);
        let (r1, r2) = block_regions[&(lo, hi)].clone();
        slots.push(Slot { lo, hi, which: 1, base: s1, extra: Vec::new(), region: r1 });
        slots.push(Slot { lo, hi, which: 2, base: s2, extra: Vec::new(), region: r2 });
    }
    let mut block_labels: BTreeSet<LabelId> = BTreeSet::new();
    for &(lo, hi) in &blocks {
        block_labels.extend(gf.class_of(lo));
        block_labels.extend(gf.class_of(hi));
    }

    // free-choice ESSPs
    let mut fixed = Regions::default();
    for (&x, r) in source_fc.iter().chain(target_fc.iter()) {
        if let Ok(rs) = r {
            if !block_labels.contains(&x) {
                fixed.extend(rs.clone());
            }
        }
    }
    let mut known = fixed.clone();
    for s in &slots {
        known.push(s.region.clone(), s.role(lts));
    }
    let fc_labels: Vec<LabelId> = lts.labels().filter(|a| !block_labels.contains(a)).collect();
    for (_, r) in fc_essps(enc, &gf, &fc_labels, &known, &opts)? {
        match r {
            Ok(rs) => fixed.extend(rs),
            Err(p) => {
                return Err(Stop::Fail(Witness::Unsolvable {
                    problem: p.describe(lts),
                    systems: vec![format!("essp_fc {}", p.describe(lts))],
                }))
            }
        }
    }
    let all_regions = |fixed: &Regions, slots: &[Slot]| -> Vec<Region> {
        slots
            .iter()
            .map(|s| s.region.clone())
            .chain(fixed.list.iter().map(|r| r.0.clone()))
            .collect()
    };
    for s in lts.states() {
        for a in lts.labels() {
            let p = SeparationProblem::Essp(s, a);
            if !lts.enables(s, a) && !all_regions(&fixed, &slots).iter().any(|r| r.solves(enc, p)) {
                return Err(Stop::Fail(Witness::Unsolvable {
                    problem: p.describe(lts),
                    systems: vec!["block systems".into()],
                }));
            }
        }
    }

    // SSPs: free-choice places first
    let mut ssp_labels: Vec<LabelId> = Vec::new();
    let mut producer_only = false;
    for a in gf.nodes() {
        if block_labels.contains(&a) {
            // every such system forces an empty postset; one copy suffices
            if producer_only {
                continue;
            }
            producer_only = true;
        }
        ssp_labels.push(a);
    }
    let mut hard: Vec<(StateId, StateId)> = Vec::new();
    loop {
        let regs = all_regions(&fixed, &slots);
        let batch: Vec<(StateId, StateId)> = unseparated(enc, regs.iter(), usize::MAX)
            .into_iter()
            .filter(|p| !hard.contains(p))
            .take(SSP_WAVE)
            .collect();
        if batch.is_empty() {
            break;
        }
        let results: Vec<Result<Option<Region>, Stop>> = batch
            .par_iter()
            .map(|&(s, t)| {
                for &a in &ssp_labels {
                    for sign in Sign::BOTH {
                        let sys = enc.brac_ssp_system_freechoice(&gf, s, t, a, sign);
                        if let Some(r) = solve_int(&sys, &opts, enc)? {
                            return Ok(Some(r));
                        }
                    }
                }
                Ok(None)
            })
            .collect();
        for (&(s, t), res) in batch.iter().zip(results) {
            match res? {
                Some(r) => fixed.push(r, SeparationProblem::Ssp(s, t).describe(lts)),
                None => hard.push((s, t)),
            }
        }
    }

    // remaining SSPs go to the AC block places
    if !hard.is_empty() {
        let mut budget = cfg.ssp_combo_cap;
        let fixed_regs: Vec<Region> = fixed.list.iter().map(|r| r.0.clone()).collect();
        let ok = assign_ssps(enc, &opts, &fixed_regs, &mut slots, &hard, 0, &mut budget)?;
        if !ok {
            let regs = all_regions(&fixed, &slots);
            let &(s, t) = hard
                .iter()
                .find(|&&(s, t)| regs.iter().all(|r| r.value_at(enc, s) == r.value_at(enc, t)))
                .unwrap_or(&hard[0]);
            let mut systems: Vec<String> = ssp_labels
                .iter()
                .flat_map(|&a| Sign::BOTH.map(|sg| format!("ssp_fc label {} sign {sg}", lts.label_name(a))))
                .collect();
            systems.extend(slots.iter().map(|s| s.role(lts)));
            return Err(Stop::Fail(Witness::Unsolvable {
                problem: SeparationProblem::Ssp(s, t).describe(lts),
                systems,
            }));
        }
    }

    let mut out = Regions::default();
    for s in &slots {
        out.push(s.region.clone(), s.role(lts));
    }
    out.extend(fixed.list);
    Ok(out)
}

/// Depth-first assignment of unsolved SSPs to block places, each place
/// re-solved with the extra `≠` rows fixed to one sign.
fn assign_ssps(
    enc: &Encoding,
    opts: &IntegerOptions,
    fixed: &[Region],
    slots: &mut [Slot],
    hard: &[(StateId, StateId)],
    i: usize,
    budget: &mut usize,
) -> Result<bool, Stop> {
    let Some(&(s, t)) = hard.get(i) else {
        return Ok(true);
    };
    let separated = |slots: &[Slot]| {
        fixed
            .iter()
            .chain(slots.iter().map(|x| &x.region))
            .any(|r| r.value_at(enc, s) != r.value_at(enc, t))
    };
    if separated(slots) {
        return assign_ssps(enc, opts, fixed, slots, hard, i + 1, budget);
    }
    for k in 0..slots.len() {
        for sign in Sign::BOTH {
            if *budget == 0 {
                return Err(Stop::Cap("ssp_combo_cap".into()));
            }
            *budget -= 1;
            let mut sys = slots[k].base.clone();
            for &(a, b, sg) in slots[k].extra.iter().chain([(s, t, sign)].iter()) {
                enc.add_ssp_row(&mut sys, a, b, sg);
            }
            let Some(r) = solve_int(&sys, opts, enc)? else {
                continue;
            };
            let old = std::mem::replace(&mut slots[k].region, r);
            slots[k].extra.push((s, t, sign));
            if assign_ssps(enc, opts, fixed, slots, hard, i + 1, budget)? {
                return Ok(true);
            }
            slots[k].extra.pop();
            slots[k].region = old;
        }
    }
    Ok(false)
}
