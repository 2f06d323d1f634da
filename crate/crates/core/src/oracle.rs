//! Brute-force region search and seeded random instances for property tests.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lts::Lts;
use crate::petri::{classify_net, reachability_graph, PetriNet};
use crate::separation::{Encoding, Region, SeparationProblem};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct OracleBound {
    pub max_value: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance too large for exhaustive search ({states} states × {labels} labels > 64)")]
    Guard { states: usize, labels: usize },
    #[error("bound must be at least 1")]
    Bound,
}

fn guard(lts: &Lts, bound: OracleBound) -> Result<(), OracleError> {
    if bound.max_value < 1 {
        return Err(OracleError::Bound);
    }
    if lts.num_states() * lts.num_labels() > 64 {
        return Err(OracleError::Guard {
            states: lts.num_states(),
            labels: lts.num_labels(),
        });
    }
    Ok(())
}

/// First region solving `p` with `B` and `F` entries in `0..=max_value`,
/// enumerated lexicographically over `(B, F)`, each with its smallest valid
/// `r0 ≤ max_value`.
pub fn brute_force_region(
    lts: &Lts,
    p: SeparationProblem,
    bound: OracleBound,
) -> Result<Option<Region>, OracleError> {
    Ok(brute_force_regions(lts, &[p], bound)?.pop().unwrap())
}

/// As `brute_force_region` for many problems in one enumeration pass.
pub fn brute_force_regions(
    lts: &Lts,
    problems: &[SeparationProblem],
    bound: OracleBound,
) -> Result<Vec<Option<Region>>, OracleError> {
    guard(lts, bound)?;
    let mut out = vec![None; problems.len()];
    if problems.is_empty() {
        return Ok(out);
    }
    let enc = Encoding::new(lts).expect("validated input");
    let n = lts.num_labels();
    let ns = lts.num_states();
    let max = bound.max_value as i64;
    let psi: Vec<Vec<i64>> = lts.states().map(|s| enc.psi(s).0.clone()).collect();
    let mut open = problems.len();
    let mut bf = vec![0i64; 2 * n];
    let mut eff = vec![0i64; ns];
    loop {
        let (b, f) = bf.split_at(n);
        for s in 0..ns {
            eff[s] = (0..n).map(|t| psi[s][t] * (f[t] - b[t])).sum();
        }
        let consistent = lts
            .edges()
            .iter()
            .all(|e| eff[e.dst.0] == eff[e.src.0] - b[e.label.0] + f[e.label.0]);
        if consistent {
            let r0 = lts
                .states()
                .map(|s| {
                    let need = lts.out_edges(s).map(|e| b[e.label.0]).max().unwrap_or(0);
                    need - eff[s.0]
                })
                .max()
                .unwrap_or(0)
                .max(0);
            if r0 <= max {
                for (i, p) in problems.iter().enumerate() {
                    if out[i].is_some() {
                        continue;
                    }
                    let hit = match *p {
                        SeparationProblem::Ssp(s, t) => eff[s.0] != eff[t.0],
                        SeparationProblem::Essp(s, a) => r0 + eff[s.0] < b[a.0],
                    };
                    if hit {
                        out[i] = Some(Region {
                            r0: r0 as u64,
                            b: b.iter().map(|&x| x as u64).collect(),
                            f: f.iter().map(|&x| x as u64).collect(),
                        });
                        open -= 1;
                    }
                }
                if open == 0 {
                    return Ok(out);
                }
            }
        }
        // next vector, last position fastest
        let mut i = 2 * n;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if bf[i] < max {
                bf[i] += 1;
                break;
            }
            bf[i] = 0;
        }
    }
}

fn label_name(i: usize) -> String {
    let letters = b"abcdefghijklmnopqrstuvwxyz";
    if i < letters.len() {
        (letters[i] as char).to_string()
    } else {
        format!("l{i}")
    }
}

/// Random deterministic reachable LTS with `1..=max_states` states and
/// `1..=max_labels` labels; a random spanning tree plus extra edges,
/// self-loops included.
pub fn random_lts(seed: u64, max_states: usize, max_labels: usize) -> Lts {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = rng.gen_range(1..=max_states.max(1));
    let nl = rng.gen_range(1..=max_labels.max(1));
    let mut used = vec![vec![false; nl]; ns];
    let mut edges = Vec::new();
    for s in 1..ns {
        let parents: Vec<usize> = (0..s).filter(|&p| used[p].iter().any(|u| !u)).collect();
        let Some(&p) = parents.choose(&mut rng) else {
            // every earlier state uses all labels
            return finish_lts(s, nl, edges);
        };
        let free: Vec<usize> = (0..nl).filter(|&t| !used[p][t]).collect();
        let t = *free.choose(&mut rng).unwrap();
        used[p][t] = true;
        edges.push((p, t, s));
    }
    let extra = rng.gen_range(0..=ns * nl);
    for _ in 0..extra {
        let s = rng.gen_range(0..ns);
        let t = rng.gen_range(0..nl);
        if used[s][t] {
            continue;
        }
        used[s][t] = true;
        edges.push((s, t, rng.gen_range(0..ns)));
    }
    finish_lts(ns, nl, edges)
}

fn finish_lts(ns: usize, nl: usize, edges: Vec<(usize, usize, usize)>) -> Lts {
    // keep only labels that occur so every label is meaningful
    let present: BTreeSet<usize> = edges.iter().map(|e| e.1).collect();
    let remap: Vec<Option<usize>> = (0..nl)
        .map(|t| present.iter().position(|&x| x == t))
        .collect();
    Lts::new(
        (0..ns).map(|i| format!("s{i}")).collect(),
        (0..present.len()).map(label_name).collect(),
        0,
        edges.into_iter().map(|(s, t, d)| (s, remap[t].unwrap(), d)),
    )
    .expect("generated edges are well formed")
}

/// Arbitrary net with weights up to `max_weight`, for class predicates.
pub fn random_net(seed: u64, max_places: usize, max_transitions: usize, max_weight: u64) -> PetriNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let np = rng.gen_range(1..=max_places.max(1));
    let nt = rng.gen_range(1..=max_transitions.max(1));
    let density = rng.gen_range(0.1..0.6);
    let mut net = PetriNet::new((0..nt).map(|i| format!("t{i}")).collect());
    for p in 0..np {
        let mut w = || -> u64 {
            if rng.gen_bool(density) {
                rng.gen_range(1..=max_weight.max(1))
            } else {
                0
            }
        };
        let cons: Vec<u64> = (0..nt).map(|_| w()).collect();
        let prod: Vec<u64> = (0..nt).map(|_| w()).collect();
        let tokens = rng.gen_range(0..=2);
        net.add_place(format!("p{p}"), tokens, cons, prod);
    }
    net
}

#[derive(Copy, Clone, Debug)]
pub struct BracNetParams {
    pub max_places: usize,
    pub max_blocks: usize,
    pub max_tokens: u64,
    /// Largest accepted reachability graph.
    pub rg_limit: usize,
}

impl Default for BracNetParams {
    fn default() -> Self {
        BracNetParams {
            max_places: 6,
            max_blocks: 3,
            max_tokens: 3,
            rg_limit: 100,
        }
    }
}

/// Random plain BRAC net built from free-choice blocks and N-shaped
/// asymmetric choice blocks. Every transition produces as many tokens as it
/// consumes, so the net is bounded. Nets with dead transitions or a
/// reachability graph above `rg_limit` are rejected and redrawn.
pub fn random_brac_net(seed: u64, params: BracNetParams) -> PetriNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        if let Some(n) = draw_brac(&mut rng, params) {
            return n;
        }
    }
}

fn draw_brac(rng: &mut ChaCha8Rng, params: BracNetParams) -> Option<PetriNet> {
    let np = rng.gen_range(2..=params.max_places.max(2));
    let mut free: Vec<usize> = (0..np).collect();
    free.shuffle(rng);
    // (preset, number of transitions) per group of identical presets
    let mut groups: Vec<(Vec<usize>, usize)> = Vec::new();
    let blocks = rng.gen_range(1..=params.max_blocks.max(1));
    for _ in 0..blocks {
        if free.is_empty() {
            break;
        }
        if free.len() >= 2 && rng.gen_bool(0.4) {
            let (p, q) = (free.pop().unwrap(), free.pop().unwrap());
            groups.push((vec![p, q], rng.gen_range(1..=2)));
            groups.push((vec![q], rng.gen_range(1..=2)));
        } else {
            let k = rng.gen_range(1..=free.len().min(2));
            let preset: Vec<usize> = (0..k).map(|_| free.pop().unwrap()).collect();
            groups.push((preset, rng.gen_range(1..=2)));
        }
    }
    let mut pre: Vec<Vec<u64>> = vec![Vec::new(); np];
    let mut post: Vec<Vec<u64>> = vec![Vec::new(); np];
    let mut names = Vec::new();
    for (preset, count) in &groups {
        for _ in 0..*count {
            let t = names.len();
            names.push(format!("t{t}"));
            for p in 0..np {
                pre[p].push(u64::from(preset.contains(&p)));
                post[p].push(0);
            }
            // self-loop on one input place, or a fresh set of outputs
            let mut outs: Vec<usize> = (0..np).collect();
            outs.shuffle(rng);
            let mut targets: Vec<usize> = outs.into_iter().take(preset.len()).collect();
            if rng.gen_bool(0.2) {
                targets[0] = preset[0];
            }
            for &p in &targets {
                post[p][t] = 1;
            }
        }
    }
    let mut net = PetriNet::new(names);
    let nt = net.num_transitions();
    let mut tokens = vec![0u64; np];
    for _ in 0..rng.gen_range(1..=params.max_tokens.max(1)) {
        tokens[rng.gen_range(0..np)] += 1;
    }
    for p in 0..np {
        net.add_place(format!("p{p}"), tokens[p], pre[p].clone(), post[p].clone());
    }
    debug_assert_eq!(net.pre[0].len(), nt);
    let rg = reachability_graph(&net, params.rg_limit).ok()?;
    if rg.num_labels() != nt {
        return None;
    }
    let c = classify_net(&net);
    (c.brac && c.plain).then_some(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lts::{parse_lts, validate, StateId};

    #[test]
    fn genx_essp_has_no_region() {
        let l = parse_lts(include_str!("../fixtures/genx.lts")).unwrap();
        let p = SeparationProblem::Essp(l.state_id("s2").unwrap(), l.label_id("b").unwrap());
        assert_eq!(brute_force_region(&l, p, OracleBound { max_value: 3 }).unwrap(), None);
    }

    #[test]
    fn acyclic_ssp_found() {
        let l = parse_lts("initial s0\ns0 a s1\ns1 b s2\n").unwrap();
        let p = SeparationProblem::Ssp(StateId(0), StateId(2));
        let r = brute_force_region(&l, p, OracleBound { max_value: 1 }).unwrap().unwrap();
        let enc = Encoding::new(&l).unwrap();
        assert!(r.is_region(&enc) && r.solves(&enc, p));
    }

    #[test]
    fn trivial_and_guard() {
        let l = parse_lts("initial s0\n").unwrap();
        assert_eq!(brute_force_regions(&l, &[], OracleBound { max_value: 1 }).unwrap(), vec![]);
        let big = parse_lts(include_str!("../fixtures/fig1.lts")).unwrap();
        let p = SeparationProblem::Ssp(StateId(0), StateId(1));
        assert!(matches!(
            brute_force_region(&big, p, OracleBound { max_value: 1 }),
            Err(OracleError::Guard { .. })
        ));
    }

    #[test]
    fn random_lts_properties() {
        assert_eq!(random_lts(1, 8, 4), random_lts(1, 8, 4));
        assert_ne!(random_lts(1, 8, 4), random_lts(2, 8, 4));
        for seed in 0..200 {
            assert!(validate(&random_lts(seed, 8, 4)).is_valid(), "seed {seed}");
        }
    }

    #[test]
    fn random_brac_nets() {
        assert_eq!(
            random_brac_net(5, BracNetParams::default()),
            random_brac_net(5, BracNetParams::default())
        );
        for seed in 0..30 {
            let n = random_brac_net(seed, BracNetParams::default());
            let c = classify_net(&n);
            assert!(c.brac && c.plain);
            assert!(reachability_graph(&n, 100).is_ok());
        }
    }
}
