//! End-to-end acceptance checks, one line per criterion. Runs without the
//! libtest harness so the summary always reaches stdout.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use acsyn::linsys::{
    lift_homogeneous_to_integer, rat, solve_integer, solve_rational, IntegerOptions, LinearSystem,
    Rel, Status, VarTag,
};
use acsyn::lts::{parse_lts, Lts};
use acsyn::oracle::{
    brute_force_regions, random_brac_net, random_lts, random_net, BracNetParams, OracleBound,
};
use acsyn::petri::{classify_net, isomorphic, parse_net, reachability_graph, NetClass, PetriNet};
use acsyn::relations::EdgeKind;
use acsyn::separation::{enumerate_separation_problems, Encoding, Region, SeparationProblem, Sign};
use acsyn::synthesis::{
    synthesize_brac, synthesize_wpi, synthesize_wpi_forced, verify_solution, Outcome,
    SynthesisConfig, TargetClass,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const FIG1_LIMIT: Duration = Duration::from_secs(5);
const ORACLE_LIMIT: Duration = Duration::from_secs(60);
const ROUNDTRIP_LIMIT: Duration = Duration::from_secs(300);
const ORACLE_LTS: u64 = 200;
const ORACLE_STATES: usize = 8;
const ORACLE_LABELS: usize = 4;
const ORACLE_BOUND: u64 = 3;
const RANDOM_NETS: u64 = 1000;
const RANDOM_SYSTEMS: u64 = 500;
const ROUNDTRIP_NETS: u64 = 100;
const ROUNDTRIP_RG: usize = 2000;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn lts(name: &str) -> Lts {
    parse_lts(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn net(name: &str) -> PetriNet {
    parse_net(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn acsyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acsyn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("acsyn-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn column(n: &PetriNet, t: &str) -> Vec<u64> {
    let t = n.transition_id(t).unwrap();
    (0..n.num_places()).map(|p| n.pre[p][t]).collect()
}

fn disjoint(x: &[u64], y: &[u64]) -> bool {
    x.iter().zip(y).all(|(a, b)| *a == 0 || *b == 0)
}

fn proper_sub(x: &[u64], y: &[u64]) -> bool {
    x.iter().zip(y).all(|(a, b)| a <= b) && x != y && x.iter().any(|&a| a > 0)
}

fn fig1_end_to_end() -> Check {
    let start = Instant::now();
    let (out, report) = (tmp("fig1.pn"), tmp("fig1.json"));
    let o = acsyn(&[
        "synth",
        fixture("fig1.lts").to_str().unwrap(),
        "--class",
        "brac",
        "-o",
        out.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    let elapsed = start.elapsed();
    ensure(o.status.code() == Some(0), format!("exit {:?}", o.status.code()))?;
    let n = parse_net(&std::fs::read_to_string(&out).unwrap()).map_err(|e| e.to_string())?;
    let rg = reachability_graph(&n, 1000).map_err(|e| e.to_string())?;
    ensure(
        rg.num_states() == 15 && rg.edges().len() == 24,
        format!("rg has {} states, {} edges", rg.num_states(), rg.edges().len()),
    )?;
    isomorphic(&rg, &lts("fig1.lts")).map_err(|m| format!("not isomorphic: {}", m.reason))?;
    let c = classify_net(&n);
    ensure(c.brac && c.wpi, format!("classes {:?}", c.names()))?;
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    ensure(r["schema"] == 1, "report schema")?;
    ensure(r["verification"]["isomorphic"] == true, "report lacks verification")?;
    ensure(elapsed < FIG1_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!("15 states, 24 edges, {} places, {elapsed:.2?}", n.num_places()))
}

fn fig1_relations() -> Check {
    let o = acsyn(&["relations", fixture("fig1.lts").to_str().unwrap()]);
    ensure(o.status.success(), "relations failed")?;
    let v: Value = serde_json::from_slice(&o.stdout).map_err(|e| e.to_string())?;
    let mut seen = Vec::new();
    for p in v["pairs"].as_array().unwrap() {
        let (a, b, kind) = (
            p["a"].as_str().unwrap(),
            p["b"].as_str().unwrap(),
            p["kind"].as_str().unwrap(),
        );
        // normalize to "x>y" / "x=y" / interleave
        let rel = match kind {
            "equiv" => format!("{}={}", a.min(b), a.max(b)),
            "a_gtr_b" => format!("{a}>{b}"),
            "b_gtr_a" => format!("{b}>{a}"),
            "interleave" => continue,
            k => return Err(format!("unknown kind {k}")),
        };
        seen.push(rel);
    }
    seen.sort();
    let want = ["a>b", "d>c", "e=f"];
    ensure(seen == want, format!("non-interleaving pairs {seen:?}"))?;
    ensure(v["pairs"].as_array().unwrap().len() == 15, "expected 15 pairs")?;
    Ok(format!("{} with 12 interleaving pairs", want.join(", ")))
}

fn genx_negative() -> Check {
    for class in ["wpi", "brac"] {
        let o = acsyn(&["synth", fixture("genx.lts").to_str().unwrap(), "--class", class]);
        ensure(o.status.code() == Some(1), format!("{class}: exit {:?}", o.status.code()))?;
        let err = String::from_utf8_lossy(&o.stderr);
        let named = err.contains("case 1") && err.contains('a') && err.contains('b')
            || err.contains("SSP(s3,s7)")
            || err.contains("ESSP(s2,b)");
        ensure(named, format!("{class}: witness {err}"))?;
    }
    let l = lts("genx.lts");
    let e = Encoding::new(&l).unwrap();
    let (s2, s3, s7) = (
        l.state_id("s2").unwrap(),
        l.state_id("s3").unwrap(),
        l.state_id("s7").unwrap(),
    );
    let b = l.label_id("b").unwrap();
    ensure(!solve_rational(&e.generic_essp(s2, b)).unwrap().is_feasible(), "ESSP(s2,b) feasible")?;
    for sign in Sign::BOTH {
        let sys = e.generic_ssp(s3, s7, sign);
        ensure(!solve_rational(&sys).unwrap().is_feasible(), format!("SSP(s3,s7) {sign} feasible"))?;
    }
    Ok("exit 1 for wpi and brac, case 1 on (a,b); generic SSP(s3,s7), ESSP(s2,b) infeasible".into())
}

fn case6_dichotomy() -> Check {
    let cfg = SynthesisConfig::new(TargetClass::Wpi);
    let a = lts("case6a.lts");
    let r = synthesize_wpi(&a, &cfg);
    ensure(r.is_success(), "case6a failed")?;
    let n = r.net.unwrap();
    ensure(disjoint(&column(&n, "b"), &column(&n, "c")), "case6a presets overlap")?;
    let (b, c) = (a.label_id("b").unwrap(), a.label_id("c").unwrap());
    let forced = synthesize_wpi_forced(&a, &cfg, &[(c, b, EdgeKind::Included { lo: c, hi: b })]);
    ensure(forced.outcome == Outcome::Failure, "case6a forced inclusion succeeded")?;

    let bb = lts("case6b.lts");
    let r = synthesize_wpi(&bb, &cfg);
    ensure(r.is_success(), "case6b failed")?;
    let n = r.net.unwrap();
    ensure(proper_sub(&column(&n, "c"), &column(&n, "b")), "case6b: c is not below b")?;
    let (b, c) = (bb.label_id("b").unwrap(), bb.label_id("c").unwrap());
    let forced = synthesize_wpi_forced(&bb, &cfg, &[(c, b, EdgeKind::Disjoint)]);
    ensure(forced.outcome == Outcome::Failure, "case6b forced disjointness succeeded")?;
    Ok("case6a disjoint, case6b c below b (wpi); both opposite interpretations infeasible".into())
}

fn brac7_inclusion() -> Check {
    let report = tmp("brac7.json");
    let out = tmp("brac7.pn");
    let o = acsyn(&[
        "synth",
        fixture("brac7.lts").to_str().unwrap(),
        "--class",
        "brac",
        "-o",
        out.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    ensure(o.status.code() == Some(0), format!("exit {:?}", o.status.code()))?;
    let n = parse_net(&std::fs::read_to_string(&out).unwrap()).map_err(|e| e.to_string())?;
    ensure(proper_sub(&column(&n, "c"), &column(&n, "e")), "c is not below e")?;
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let cands = r["matching"]["candidates"].as_array().unwrap();
    ensure(
        cands.iter().any(|p| p[0] == "c" && p[1] == "e"),
        format!("candidates {cands:?}"),
    )?;
    Ok(format!("c below e, candidates {}", serde_json::to_string(cands).unwrap()))
}

/// Implications between the class flags.
fn implications(c: &NetClass) -> Vec<&'static str> {
    let rules = [
        ("MG=>CF", !c.mg || c.cf),
        ("CF=>EC", !c.cf || c.ec),
        ("EFC=>EC", !c.efc || c.ec),
        ("EC=>WAC", !c.ec || c.wac),
        ("EC=>WPI", !c.ec || c.wpi),
        ("BRAC=>WPI", !c.brac || c.wpi),
        ("BRAC=>AC", !c.brac || c.ac),
        ("AC=>WAC", !c.ac || c.wac),
        ("RAC=>BRAC", !c.rac || c.brac),
    ];
    rules.iter().filter(|r| !r.1).map(|r| r.0).collect()
}

fn class_predicates() -> Check {
    let mid = classify_net(&net("choice-middle.pn"));
    ensure(mid.wac && !mid.wpi, format!("middle {:?}", mid.names()))?;
    let mut swapped = net("choice-right.pn");
    let (p2, p3) = (swapped.place_id("p2").unwrap(), swapped.place_id("p3").unwrap());
    let (t2, t3) = (swapped.transition_id("t2").unwrap(), swapped.transition_id("t3").unwrap());
    let w = swapped.pre[p2][t2];
    swapped.pre[p2][t2] = swapped.pre[p3][t3];
    swapped.pre[p3][t3] = w;
    let sw = classify_net(&swapped);
    ensure(sw.wpi && !sw.wac, format!("swapped {:?}", sw.names()))?;
    let left = classify_net(&net("choice-left.pn"));
    ensure(left.ec, format!("left {:?}", left.names()))?;
    let mut hits = [0usize; 3];
    for seed in 0..RANDOM_NETS {
        let n = random_net(seed, 5, 5, 2);
        let c = classify_net(&n);
        let bad = implications(&c);
        ensure(bad.is_empty(), format!("seed {seed}: {bad:?}"))?;
        hits[0] += c.ec as usize;
        hits[1] += c.brac as usize;
        hits[2] += c.wpi as usize;
    }
    Ok(format!(
        "middle WAC not WPI, swapped WPI not WAC, left EC; {RANDOM_NETS} random nets ({} EC, {} BRAC, {} WPI)",
        hits[0], hits[1], hits[2]
    ))
}

fn random_homogeneous(seed: u64) -> LinearSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = LinearSystem::new();
    let nv = rng.gen_range(2..=5);
    for i in 0..nv {
        s.add_var(format!("x{i}"), VarTag::Other);
    }
    for _ in 0..rng.gen_range(1..=6) {
        let mut terms = Vec::new();
        for v in 0..nv {
            let c = rng.gen_range(-4..=4);
            if c != 0 && rng.gen_bool(0.7) {
                terms.push((v, c));
            }
        }
        let rel = [Rel::Le, Rel::Ge, Rel::Eq, Rel::Lt, Rel::Gt][rng.gen_range(0..5)];
        s.add(&terms, rel, 0);
    }
    s
}

fn lp_sanity() -> Check {
    // x+1 ≤ y ≤ x+y ≤ 2 ≤ 4x
    let mut s = LinearSystem::new();
    let x = s.add_var("x", VarTag::Other);
    let y = s.add_var("y", VarTag::Other);
    s.add(&[(x, 1), (y, -1)], Rel::Le, -1);
    s.add(&[(x, -1)], Rel::Le, 0);
    s.add(&[(x, 1), (y, 1)], Rel::Le, 2);
    s.add(&[(x, 4)], Rel::Ge, 2);
    let sol = solve_rational(&s).map_err(|e| e.to_string())?;
    ensure(sol.is_feasible(), "rationally infeasible")?;
    let int = solve_integer(&s, &IntegerOptions::default()).map_err(|e| e.to_string())?;
    ensure(int.status == Status::Infeasible, "integer feasible")?;
    let mut w = s.clone();
    w.add_row([(x, rat(2))], Rel::Eq, rat(1));
    w.add_row([(y, rat(2))], Rel::Eq, rat(3));
    ensure(solve_rational(&w).unwrap().is_feasible(), "x=1/2, y=3/2 rejected")?;

    let (mut feasible, mut fractional) = (0, 0);
    for seed in 0..RANDOM_SYSTEMS {
        let sys = random_homogeneous(seed);
        let sol = solve_rational(&sys).map_err(|e| format!("seed {seed}: {e}"))?;
        let lifted = lift_homogeneous_to_integer(&sol, &sys).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(lifted.status == sol.status, format!("seed {seed}: status changed"))?;
        if sol.is_feasible() {
            feasible += 1;
            fractional += (!sol.is_integral()) as usize;
            ensure(lifted.is_integral(), format!("seed {seed}: not integral"))?;
            ensure(sys.first_violation(&lifted.values).is_none(), format!("seed {seed}: violated"))?;
        }
    }
    Ok(format!(
        "intro system rational only; {RANDOM_SYSTEMS} homogeneous systems, {feasible} feasible, {fractional} lifted from fractions"
    ))
}

fn lp_feasible(enc: &Encoding, p: SeparationProblem) -> bool {
    match p {
        SeparationProblem::Essp(s, a) => solve_rational(&enc.generic_essp(s, a)).unwrap().is_feasible(),
        SeparationProblem::Ssp(s, t) => Sign::BOTH
            .iter()
            .any(|&sg| solve_rational(&enc.generic_ssp(s, t, sg)).unwrap().is_feasible()),
    }
}

/// Integer solve with every variable at most the oracle bound.
fn bounded_ilp(enc: &Encoding, p: SeparationProblem) -> Result<bool, String> {
    let systems = match p {
        SeparationProblem::Essp(s, a) => vec![enc.generic_essp(s, a)],
        SeparationProblem::Ssp(s, t) => Sign::BOTH.iter().map(|&sg| enc.generic_ssp(s, t, sg)).collect(),
    };
    for mut sys in systems {
        for v in 0..sys.vars.len() {
            sys.add(&[(v, 1)], Rel::Le, ORACLE_BOUND as i64);
        }
        let sol = solve_integer(&sys, &IntegerOptions::with_cap(ORACLE_BOUND)).map_err(|e| e.to_string())?;
        if sol.is_feasible() {
            return Ok(true);
        }
    }
    Ok(false)
}

fn oracle_agreement() -> Check {
    let start = Instant::now();
    let bound = OracleBound { max_value: ORACLE_BOUND };
    let (mut problems, mut found, mut lp_only) = (0, 0, 0);
    for seed in 0..ORACLE_LTS {
        let l = random_lts(seed, ORACLE_STATES, ORACLE_LABELS);
        let enc = Encoding::new(&l).unwrap();
        let ps = enumerate_separation_problems(&l);
        let oracle = brute_force_regions(&l, &ps, bound).map_err(|e| e.to_string())?;
        for (&p, r) in ps.iter().zip(&oracle) {
            problems += 1;
            let lp = lp_feasible(&enc, p);
            let ilp = bounded_ilp(&enc, p).map_err(|e| format!("seed {seed} {}: {e}", p.describe(&l)))?;
            let check = |r: &Region| r.is_region(&enc) && r.solves(&enc, p);
            match r {
                Some(r) => {
                    found += 1;
                    ensure(check(r), format!("seed {seed}: oracle region invalid"))?;
                    ensure(lp, format!("seed {seed} {}: oracle region, LP infeasible", p.describe(&l)))?;
                }
                None => lp_only += lp as usize,
            }
            ensure(
                ilp == r.is_some(),
                format!("seed {seed} {}: bounded ILP {ilp}, oracle {}", p.describe(&l), r.is_some()),
            )?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < ORACLE_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!(
        "{ORACLE_LTS} LTS, {problems} problems, {found} oracle regions, {lp_only} LP-only beyond bound, {elapsed:.2?}"
    ))
}

fn round_trip() -> Check {
    let start = Instant::now();
    let cfg = SynthesisConfig::new(TargetClass::Brac);
    let mut states = 0;
    for seed in 0..ROUNDTRIP_NETS {
        let n = random_brac_net(seed, BracNetParams::default());
        let rg = reachability_graph(&n, ROUNDTRIP_RG).map_err(|e| format!("seed {seed}: {e}"))?;
        states += rg.num_states();
        let r = synthesize_brac(&rg, &cfg);
        ensure(r.is_success(), format!("seed {seed}: {:?} {:?}", r.outcome, r.witness))?;
        let v = verify_solution(r.net.as_ref().unwrap(), &rg, TargetClass::Brac, ROUNDTRIP_RG)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(v.passed(), format!("seed {seed}: verification failed"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < ROUNDTRIP_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!("{ROUNDTRIP_NETS} nets, {states} RG states in total, {elapsed:.2?}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("fig1 end-to-end", fig1_end_to_end),
        ("fig1 relation table", fig1_relations),
        ("genx negative", genx_negative),
        ("case 6 dichotomy", case6_dichotomy),
        ("brac7 forced inclusion", brac7_inclusion),
        ("class predicates", class_predicates),
        ("LP sanity", lp_sanity),
        ("oracle equivalence", oracle_agreement),
        ("BRAC round trip", round_trip),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(msg) => println!("criterion {}: PASS {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {msg}", i + 1);
            }
        }
    }
    let _ = std::fs::remove_dir_all(tmp("x").parent().unwrap());
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
