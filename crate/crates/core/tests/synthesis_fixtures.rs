use acsyn::lts::{parse_lts, Lts};
use acsyn::petri::{parse_net, PetriNet};
use acsyn::relations::EdgeKind;
use acsyn::synthesis::{
    synthesize, synthesize_brac, synthesize_wpi, synthesize_wpi_forced, verify_solution, Outcome,
    SynthesisConfig, TargetClass, Witness,
};

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn lts(name: &str) -> Lts {
    parse_lts(&fixture(name)).unwrap()
}

fn net(name: &str) -> PetriNet {
    parse_net(&fixture(name)).unwrap()
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

fn cfg(t: TargetClass) -> SynthesisConfig {
    SynthesisConfig::new(t)
}

#[test]
fn case6a_disjoint_presets() {
    let l = lts("case6a.lts");
    for t in [TargetClass::Wpi, TargetClass::Brac] {
        let r = synthesize(&l, &cfg(t));
        assert!(r.is_success(), "{t}: {:?}", r.witness);
        let n = r.net.unwrap();
        assert!(disjoint(&column(&n, "b"), &column(&n, "c")));
    }
}

#[test]
fn case6a_forced_inclusion_fails() {
    let l = lts("case6a.lts");
    let (b, c) = (l.label_id("b").unwrap(), l.label_id("c").unwrap());
    let r = synthesize_wpi_forced(&l, &cfg(TargetClass::Wpi), &[(c, b, EdgeKind::Included { lo: c, hi: b })]);
    assert_eq!(r.outcome, Outcome::Failure, "{:?}", r.regions);
}

#[test]
fn case6b_proper_inclusion() {
    let l = lts("case6b.lts");
    let r = synthesize_wpi(&l, &cfg(TargetClass::Wpi));
    assert!(r.is_success(), "{:?}", r.witness);
    let n = r.net.unwrap();
    assert!(proper_sub(&column(&n, "c"), &column(&n, "b")));
    let (b, c) = (l.label_id("b").unwrap(), l.label_id("c").unwrap());
    let forced = synthesize_wpi_forced(&l, &cfg(TargetClass::Wpi), &[(c, b, EdgeKind::Disjoint)]);
    assert_eq!(forced.outcome, Outcome::Failure);
}

#[test]
fn case6b_needs_weights() {
    // the only solutions consume two tokens with b
    let r = synthesize_brac(&lts("case6b.lts"), &cfg(TargetClass::Brac));
    assert_eq!(r.outcome, Outcome::Failure);
}

#[test]
fn brac7_forced_inclusion() {
    let l = lts("brac7.lts");
    let r = synthesize_brac(&l, &cfg(TargetClass::Brac));
    assert!(r.is_success(), "{:?}", r.witness);
    let m = r.matching.as_ref().unwrap();
    assert!(m.candidates.contains(&["c".to_string(), "e".to_string()]));
    assert_eq!(m.assignment, vec![["c".to_string(), "e".to_string()]]);
    let n = r.net.unwrap();
    assert!(proper_sub(&column(&n, "c"), &column(&n, "e")));
}

#[test]
fn genx_both_classes_fail() {
    let l = lts("genx.lts");
    for t in [TargetClass::Wpi, TargetClass::Brac] {
        let r = synthesize(&l, &cfg(t));
        assert_eq!(r.outcome, Outcome::Failure);
        match r.witness {
            Some(Witness::Contradiction { rule, mut labels }) => {
                assert_eq!(rule, "case 1");
                labels.sort();
                assert_eq!(labels, ["a", "b"]);
            }
            w => panic!("unexpected witness {w:?}"),
        }
    }
}

#[test]
fn fixture_nets_verify() {
    let v = verify_solution(&net("fig1-net.pn"), &lts("fig1.lts"), TargetClass::Brac, 1000).unwrap();
    assert!(v.passed());
    let v = verify_solution(&net("brac7-net.pn"), &lts("brac7.lts"), TargetClass::Brac, 1000).unwrap();
    assert!(v.passed());
    let v = verify_solution(&net("fig1-net.pn"), &lts("genx.lts"), TargetClass::Wpi, 1000).unwrap();
    assert!(!v.isomorphic);
    for (n, l) in [("case6a-net.pn", "case6a.lts"), ("case6b-net.pn", "case6b.lts")] {
        let v = verify_solution(&net(n), &lts(l), TargetClass::Wpi, 1000).unwrap();
        assert!(v.passed(), "{n}");
    }
}

#[test]
fn deterministic_output() {
    let l = lts("fig1.lts");
    for t in [TargetClass::Wpi, TargetClass::Brac] {
        let a = synthesize(&l, &cfg(t));
        let b = synthesize(&l, &cfg(t));
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(
            acsyn::petri::serialize_net(a.net.as_ref().unwrap()),
            acsyn::petri::serialize_net(b.net.as_ref().unwrap())
        );
    }
}

#[test]
fn equivalent_labels_share_presets() {
    let l = lts("fig1.lts");
    for t in [TargetClass::Wpi, TargetClass::Brac] {
        let n = synthesize(&l, &cfg(t)).net.unwrap();
        assert_eq!(column(&n, "e"), column(&n, "f"));
    }
}

#[test]
fn prune_keeps_solution() {
    let l = lts("fig1.lts");
    let mut c = cfg(TargetClass::Brac);
    let full = synthesize(&l, &c);
    c.prune = true;
    let pruned = synthesize(&l, &c);
    assert!(pruned.is_success());
    assert!(pruned.net.unwrap().num_places() <= full.net.unwrap().num_places());
}
