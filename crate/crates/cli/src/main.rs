//! `acsyn` command-line tool.
//!
//! Exit codes: 0 success, 1 synthesis impossible or verification failed,
//! 2 invalid input, 3 cap exceeded.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acsyn::lts::{parse_lts, serialize_lts, validate, Lts};
use acsyn::oracle::{random_brac_net, random_lts, random_net, BracNetParams};
use acsyn::petri::{
    classify_net, parse_net, reachability_graph, render_dot, serialize_net, PetriError, PetriNet,
    DEFAULT_RG_CAP,
};
use acsyn::relations::{
    build_relation_graph, quotient_by_equivalence, relation_table, strengthen_brac, strengthen_wpi,
    EdgeKind, Origin, RelationGraph,
};
use acsyn::synthesis::{synthesize, verify_solution, Outcome, SynthesisConfig, TargetClass};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

const EXIT_FAIL: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_CAP: u8 = 3;

#[derive(Parser)]
#[command(name = "acsyn", version, about = "Synthesize WPI and BRAC Petri nets from labelled transition systems")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check that an LTS is deterministic and reachable, or that a net parses.
    Validate { input: PathBuf },
    /// Print label relations and the preset relation graph as JSON.
    Relations {
        input: PathBuf,
        /// Also apply the BRAC strengthening rules.
        #[arg(long, value_parser = parse_class)]
        class: Option<TargetClass>,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Synthesize a net whose reachability graph is isomorphic to the LTS.
    Synth {
        input: PathBuf,
        #[arg(long, value_parser = parse_class)]
        class: TargetClass,
        #[command(flatten)]
        out: Outputs,
        #[arg(long, default_value_t = 12)]
        selfloop_cap: usize,
        #[arg(long, default_value_t = 4096)]
        ssp_combo_cap: usize,
        #[arg(long, default_value_t = DEFAULT_RG_CAP)]
        rg_cap: usize,
        /// Bound on initial tokens in integer solving.
        #[arg(long)]
        int_cap: Option<u64>,
        /// Drop places whose removal keeps the reachability graph.
        #[arg(long)]
        prune: bool,
    },
    /// Print the structural classes of a net; with --class, exit 1 unless it belongs.
    Check {
        input: PathBuf,
        #[arg(long, value_parser = parse_class)]
        class: Option<TargetClass>,
    },
    /// Compute the reachability graph of a net.
    Rg {
        input: PathBuf,
        #[arg(short)]
        o: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_RG_CAP)]
        rg_cap: usize,
    },
    /// Check a net against an LTS: isomorphic reachability graph and class.
    Verify {
        net: PathBuf,
        lts: PathBuf,
        #[arg(long, value_parser = parse_class, default_value = "brac")]
        class: TargetClass,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_RG_CAP)]
        rg_cap: usize,
    },
    /// Render a net or an LTS in Graphviz format.
    Dot {
        input: PathBuf,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Generate random instances.
    Gen(GenArgs),
}

#[derive(Args)]
struct Outputs {
    #[arg(short)]
    o: Option<PathBuf>,
    #[arg(long)]
    dot: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum GenKind {
    Lts,
    Net,
    Brac,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: GenKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    states: usize,
    #[arg(long, default_value_t = 4)]
    labels: usize,
    #[arg(long, default_value_t = 5)]
    places: usize,
    #[arg(long, default_value_t = 5)]
    transitions: usize,
    #[arg(long, default_value_t = 2)]
    weight: u64,
    #[arg(short)]
    o: Option<PathBuf>,
}

fn parse_class(s: &str) -> Result<TargetClass, String> {
    s.parse()
}

/// Error carrying its exit code.
struct Fail(u8, String);

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail(EXIT_INPUT, e.to_string())
    }
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> Fail {
    Fail(EXIT_INPUT, format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| input_err(path, e))
}

fn load_lts(path: &Path) -> Result<Lts, Fail> {
    parse_lts(&read(path)?).map_err(|e| input_err(path, e))
}

fn load_net(path: &Path) -> Result<PetriNet, Fail> {
    parse_net(&read(path)?).map_err(|e| input_err(path, e))
}

fn is_net(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "pn")
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Fail> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Fail(EXIT_INPUT, format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn petri_fail(e: PetriError) -> Fail {
    match e {
        PetriError::CapExceeded(_) => Fail(EXIT_CAP, e.to_string()),
        e => Fail(EXIT_INPUT, e.to_string()),
    }
}

fn run(cli: Cli) -> Result<u8, Fail> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Fail(EXIT_INPUT, e.to_string()))?;
    }
    match cli.cmd {
        Cmd::Validate { input } => cmd_validate(&input),
        Cmd::Relations { input, class, o } => {
            let lts = load_lts(&input)?;
            let v = relations_json(&lts, class.unwrap_or(TargetClass::Wpi));
            emit(o.as_deref(), &(serde_json::to_string_pretty(&v).unwrap() + "\n"))?;
            Ok(0)
        }
        Cmd::Synth {
            input,
            class,
            out,
            selfloop_cap,
            ssp_combo_cap,
            rg_cap,
            int_cap,
            prune,
        } => {
            let lts = load_lts(&input)?;
            let cfg = SynthesisConfig {
                target: class,
                selfloop_cap,
                ssp_combo_cap,
                rg_cap,
                int_cap,
                prune,
            };
            cmd_synth(&lts, &cfg, &out)
        }
        Cmd::Check { input, class } => {
            let net = load_net(&input)?;
            let c = classify_net(&net);
            println!("{}", c.names().join(" "));
            Ok(match class {
                Some(t) if !t.holds(&c) => {
                    eprintln!("net is not {}", t.to_string().to_uppercase());
                    EXIT_FAIL
                }
                _ => 0,
            })
        }
        Cmd::Rg { input, o, rg_cap } => {
            let net = load_net(&input)?;
            let rg = reachability_graph(&net, rg_cap).map_err(petri_fail)?;
            emit(o.as_deref(), &serialize_lts(&rg))?;
            Ok(0)
        }
        Cmd::Verify {
            net,
            lts,
            class,
            report,
            rg_cap,
        } => {
            let (n, l) = (load_net(&net)?, load_lts(&lts)?);
            let v = verify_solution(&n, &l, class, rg_cap).map_err(petri_fail)?;
            if let Some(p) = report {
                let json = json!({"schema": 1, "target": class, "verification": v});
                emit(Some(&p), &(serde_json::to_string_pretty(&json).unwrap() + "\n"))?;
            }
            println!(
                "states {} edges {} isomorphic {} classes {}",
                v.rg_states,
                v.rg_edges,
                v.isomorphic,
                v.classes.join(" ")
            );
            if let Some(m) = &v.mismatch {
                eprintln!("mismatch at state {}: {}", m.state, m.reason);
            }
            if !v.in_target {
                eprintln!("net is not {}", class.to_string().to_uppercase());
            }
            Ok(if v.passed() { 0 } else { EXIT_FAIL })
        }
        Cmd::Dot { input, o } => {
            let text = if is_net(&input) {
                render_dot(&load_net(&input)?)
            } else {
                lts_dot(&load_lts(&input)?)
            };
            emit(o.as_deref(), &text)?;
            Ok(0)
        }
        Cmd::Gen(g) => {
            let text = match g.kind {
                GenKind::Lts => serialize_lts(&random_lts(g.seed, g.states, g.labels)),
                GenKind::Net => serialize_net(&random_net(g.seed, g.places, g.transitions, g.weight)),
                GenKind::Brac => {
                    let params = BracNetParams {
                        max_places: g.places,
                        ..BracNetParams::default()
                    };
                    serialize_net(&random_brac_net(g.seed, params))
                }
            };
            emit(g.o.as_deref(), &text)?;
            Ok(0)
        }
    }
}

fn cmd_validate(input: &Path) -> Result<u8, Fail> {
    if is_net(input) {
        let n = load_net(input)?;
        println!("net: {} places, {} transitions", n.num_places(), n.num_transitions());
        return Ok(0);
    }
    let lts = load_lts(input)?;
    let r = validate(&lts);
    println!(
        "lts: {} states, {} labels, {} edges",
        lts.num_states(),
        lts.num_labels(),
        lts.edges().len()
    );
    if !r.self_loop_labels.is_empty() {
        let names: Vec<&str> = r.self_loop_labels.iter().map(|&t| lts.label_name(t)).collect();
        println!("self-loop labels: {}", names.join(" "));
    }
    if let Some((e1, e2)) = r.nondeterminism {
        eprintln!(
            "nondeterministic: {} {} {} and {} {} {}",
            lts.state_name(e1.src),
            lts.label_name(e1.label),
            lts.state_name(e1.dst),
            lts.state_name(e2.src),
            lts.label_name(e2.label),
            lts.state_name(e2.dst)
        );
    }
    if !r.reachable {
        let names: Vec<&str> = r.unreachable.iter().map(|&s| lts.state_name(s)).collect();
        eprintln!("unreachable: {}", names.join(" "));
    }
    Ok(if r.is_valid() { 0 } else { EXIT_INPUT })
}

fn cmd_synth(lts: &Lts, cfg: &SynthesisConfig, out: &Outputs) -> Result<u8, Fail> {
    let report = synthesize(lts, cfg);
    if let Some(p) = &out.report {
        emit(Some(p), &(report.to_json() + "\n"))?;
    }
    match report.outcome {
        Outcome::Success => {
            let net = report.net.as_ref().expect("successful report has a net");
            emit(out.o.as_deref(), &serialize_net(net))?;
            if let Some(p) = &out.dot {
                emit(Some(p), &render_dot(net))?;
            }
            Ok(0)
        }
        Outcome::Failure => {
            let w = report.witness.as_ref().expect("failure has a witness");
            eprintln!("synthesis failed: {w}");
            Ok(match w {
                acsyn::synthesis::Witness::InvalidInput { .. } => EXIT_INPUT,
                _ => EXIT_FAIL,
            })
        }
        Outcome::CapExceeded => {
            eprintln!("cap exceeded: {}", report.cap.as_deref().unwrap_or("?"));
            Ok(EXIT_CAP)
        }
    }
}

fn edge_json(lts: &Lts, a: acsyn::lts::LabelId, b: acsyn::lts::LabelId, k: EdgeKind) -> Value {
    let name = |t: acsyn::lts::LabelId| lts.label_name(t);
    let mut v = json!({"a": name(a), "b": name(b)});
    let (edge, ends) = match k {
        EdgeKind::Equivalent => ("equivalent", None),
        EdgeKind::Disjoint => ("disjoint", None),
        EdgeKind::Included { lo, hi } => ("included", Some((lo, hi))),
        EdgeKind::Doi { lo, hi } => ("doi", Some((lo, hi))),
    };
    v["edge"] = json!(edge);
    if let Some((lo, hi)) = ends {
        v["lo"] = json!(name(lo));
        v["hi"] = json!(name(hi));
    }
    v
}

fn origin_str(lts: &Lts, o: &Origin) -> String {
    match o {
        Origin::Original => "original".into(),
        Origin::Strengthened { rule, via: None } => format!("{rule}"),
        Origin::Strengthened { rule, via: Some(c) } => format!("{rule} via {}", lts.label_name(*c)),
    }
}

/// Pair table, strengthened preset graph over all label pairs, contradictions.
fn relations_json(lts: &Lts, class: TargetClass) -> Value {
    let pairs: Vec<Value> = relation_table(lts)
        .into_iter()
        .map(|(a, b, rel, case)| {
            json!({
                "a": lts.label_name(a),
                "b": lts.label_name(b),
                "kind": rel.kind,
                "merge": rel.merge,
                "case": case,
            })
        })
        .collect();
    let mut contradictions = Vec::new();
    let g = strengthened(lts, class, &mut contradictions);
    let mut graph = Vec::new();
    if let Some(g) = &g {
        for a in lts.labels() {
            for b in lts.labels().filter(|&b| b > a) {
                let mut v = edge_json(lts, a, b, g.kind(a, b));
                let (ra, rb) = (g.rep(a), g.rep(b));
                v["origin"] = json!(if ra == rb {
                    "original".to_string()
                } else {
                    origin_str(lts, &g.get(ra, rb).expect("edge between nodes").origin)
                });
                graph.push(v);
            }
        }
    }
    json!({"pairs": pairs, "graph": graph, "contradictions": contradictions})
}

fn strengthened(lts: &Lts, class: TargetClass, out: &mut Vec<Value>) -> Option<RelationGraph> {
    let step = |r: Result<RelationGraph, acsyn::relations::Contradiction>, out: &mut Vec<Value>| match r {
        Ok(g) => Some(g),
        Err(c) => {
            let labels: Vec<&str> = c.labels.iter().map(|&l| lts.label_name(l)).collect();
            out.push(json!({"rule": c.rule.to_string(), "labels": labels}));
            None
        }
    };
    let g = step(build_relation_graph(lts), out)?;
    let g = step(quotient_by_equivalence(&g), out)?;
    let g = step(strengthen_wpi(&g), out)?;
    match class {
        TargetClass::Wpi => Some(g),
        TargetClass::Brac => step(strengthen_brac(&g), out),
    }
}

fn lts_dot(lts: &Lts) -> String {
    let mut s = String::from("digraph lts {\n");
    let _ = writeln!(s, "  \"{}\" [shape=doublecircle];", lts.state_name(lts.initial()));
    for e in lts.edges() {
        let _ = writeln!(
            s,
            "  \"{}\" -> \"{}\" [label=\"{}\"];",
            lts.state_name(e.src),
            lts.state_name(e.dst),
            lts.label_name(e.label)
        );
    }
    s.push_str("}\n");
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
