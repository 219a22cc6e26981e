//! `diagnose`: structural report on selection-induced unfairness.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use fairbound::graph::diagnose;

use super::{load_collection_diagram, Globals};
use crate::io::{write_artifact, AnyError};

#[derive(Args)]
pub struct DiagnoseArgs {
    /// Data collection diagram JSON
    #[arg(long)]
    diagram: PathBuf,
}

pub fn run(globals: &Globals, args: DiagnoseArgs) -> Result<ExitCode, AnyError> {
    let g = load_collection_diagram(&args.diagram)?;
    let report = diagnose(&g)?;
    let roles = g.roles();

    println!("diagram: {}", args.diagram.display());
    println!(
        "selection node {} with parents {:?}; protected {}, outcome {}, admissible {:?}",
        g.selection_node(),
        g.selection_parents(),
        roles.protected,
        roles.outcome,
        roles.admissible,
    );
    if report.originally_unfair {
        println!(
            "originally unfair: the optimal classifier already depends on {} through {:?}",
            roles.protected, report.witnesses
        );
    } else {
        println!("base distribution: no open path from the protected attribute into the outcome's Markov boundary");
    }
    let c1 = g.selection_parents().contains(&roles.outcome);
    println!(
        "condition C1 (outcome drives selection): {}",
        if c1 { "holds" } else { "does not hold" }
    );
    if report.selection_induces_unfairness {
        println!(
            "condition C2 (selection tied to the protected attribute): holds via {:?}",
            report.witnesses
        );
        println!("=> selection can induce unfairness on an otherwise fair distribution");
    } else {
        println!("=> selection cannot induce unfairness beyond what the base distribution carries");
    }
    println!("suggested separating set U = {:?}", report.chosen_u);
    println!(
        "note: these are structural conditions; with an unfaithful distribution they are \
         necessary for unfairness but not sufficient"
    );

    if globals.out.is_some() {
        let dir = crate::io::out_dir(&globals.out)?;
        write_artifact(
            &dir.join("diagnosis.json"),
            serde_json::json!({ "diagram": args.diagram.display().to_string() }),
            &report,
        )?;
    }
    Ok(ExitCode::SUCCESS)
}
