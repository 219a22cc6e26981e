//! `verify`: run the brute-force suites and exit nonzero on any violation.

use std::process::ExitCode;

use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use fairbound::cra::Strategy;
use fairbound::graph::{d_separated, markov_boundary, CausalDiagram, NodeSet, Roles};
use fairbound::oracle::{containment, oracle_dsep, oracle_markov_boundary};

use super::Globals;
use crate::io::AnyError;

#[derive(Args)]
pub struct VerifyArgs {
    /// Repair-containment instances per strategy
    #[arg(long, default_value_t = 40)]
    instances: usize,
    /// Random separation/boundary queries for the graph oracles
    #[arg(long, default_value_t = 150)]
    graph_checks: usize,
}

fn random_dag(rng: &mut ChaCha12Rng, n: usize) -> CausalDiagram {
    let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < 0.4 {
                edges.push((names[i].clone(), names[j].clone()));
            }
        }
    }
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let edge_refs: Vec<(&str, &str)> =
        edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    CausalDiagram::new(
        &refs,
        &edge_refs,
        Roles { outcome: "n0".into(), protected: "n1".into(), admissible: NodeSet::new() },
    )
    .unwrap()
}

pub fn run(globals: &Globals, args: VerifyArgs) -> Result<ExitCode, AnyError> {
    let seed = globals.seed.unwrap_or(0);
    let mut failures = 0usize;

    // graph oracle equivalence
    let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(17));
    let mut dsep_mismatch = 0usize;
    let mut mb_mismatch = 0usize;
    for _ in 0..args.graph_checks {
        let n = rng.random_range(3..=7);
        let g = random_dag(&mut rng, n);
        let names = g.node_names().to_vec();
        let l = rng.random_range(0..n);
        let mut r = rng.random_range(0..n);
        while r == l {
            r = rng.random_range(0..n);
        }
        let given: NodeSet = names
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != l && *i != r && rng.random::<f64>() < 0.3)
            .map(|(_, s)| s.clone())
            .collect();
        if d_separated(&g, &names[l], &names[r], &given)?
            != oracle_dsep(&g, &names[l], &names[r], &given)?
        {
            dsep_mismatch += 1;
        }
        let target = &names[rng.random_range(0..n)];
        if markov_boundary(&g, target)? != oracle_markov_boundary(&g, target)? {
            mb_mismatch += 1;
        }
    }
    let graph_ok = dsep_mismatch == 0 && mb_mismatch == 0;
    println!(
        "graph oracles: {} ({} separation / {} boundary mismatches in {} checks)",
        if graph_ok { "PASS" } else { "FAIL" },
        dsep_mismatch,
        mb_mismatch,
        args.graph_checks
    );
    if !graph_ok {
        failures += 1;
    }

    // repair containment per strategy
    for strategy in [
        Strategy::Equality,
        Strategy::NoExternal,
        Strategy::Exact,
        Strategy::PartialU,
        Strategy::MissingA,
    ] {
        let outcome = containment::run(strategy, args.instances, seed)?;
        let ok = outcome.violations == 0;
        println!(
            "containment {}: {} ({} instances, {} survivors, worst excess {:.2e})",
            strategy,
            if ok { "PASS" } else { "FAIL" },
            outcome.instances,
            outcome.survivors_total,
            outcome.worst_excess,
        );
        if !ok {
            failures += 1;
        }
    }

    if failures > 0 {
        eprintln!("verify: {failures} suite(s) failed");
        return Ok(ExitCode::from(1));
    }
    println!("verify: all suites passed");
    Ok(ExitCode::SUCCESS)
}
