//! Command-line front door: load JSON scenes, run computations, emit JSON
//! reports, and run the bundled identity suites.
//!
//! Exit codes: 0 on success (and all requested assertions passing), 1 on an
//! assertion failure, 2 on malformed input.

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use std::process::ExitCode;

mod report;
mod suites;

#[derive(Parser)]
#[command(name = "bimat", version, about = "Bimodules over multi-matrix algebras: fusion, duality, and index computations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pretty-print JSON output with this indent width (0 = compact).
    #[arg(long, global = true, default_value_t = 2)]
    json_indent: usize,
    /// Tolerance for residual checks.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Seed for randomized computations.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct SceneArg {
    /// Path to a JSON scene file.
    #[arg(long)]
    scene: std::path::PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Dimension matrix ⟦B:A⟧ of a homomorphism in the scene.
    Dim {
        #[command(flatten)]
        scene: SceneArg,
        /// Name of the homomorphism.
        #[arg(long)]
        hom: String,
    },
    /// Index report for a homomorphism, or inequality checks for a
    /// concrete configuration scene.
    Index {
        #[command(flatten)]
        scene: SceneArg,
        /// Name of the homomorphism (omit for an inequality scene).
        #[arg(long)]
        hom: Option<String>,
    },
    /// Connes fusion of two bimodules in the scene, with the Gram model.
    Fuse {
        #[command(flatten)]
        scene: SceneArg,
        #[arg(long)]
        left: String,
        #[arg(long)]
        right: String,
    },
    /// Canonical duality of a bimodule: zig-zag and normalization
    /// residuals, optionally after skewing and re-normalizing.
    Normalize {
        #[command(flatten)]
        scene: SceneArg,
        #[arg(long)]
        bimodule: String,
        /// Skew the canonical data by a random positive invertible
        /// endomorphism before normalizing.
        #[arg(long)]
        skew: bool,
    },
    /// Evaluate a diagram against an environment.
    Eval {
        /// Path to the environment JSON (a scene with bindings).
        #[arg(long)]
        env: std::path::PathBuf,
        /// Path to the diagram text.
        #[arg(long)]
        diagram: std::path::PathBuf,
        /// Require the evaluated map to be the identity.
        #[arg(long)]
        assert_identity: bool,
    },
    /// The L² map of a homomorphism: matrix and scaling report.
    L2map {
        #[command(flatten)]
        scene: SceneArg,
        #[arg(long)]
        hom: String,
    },
    /// Run the bundled identity suites.
    Check {
        /// Run a single suite (default: all).
        #[arg(long)]
        suite: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let indent = cli.json_indent;
    match run(cli) {
        Ok((value, ok)) => {
            print_json(&value, indent);
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            print_json(&json!({"error": e}), indent);
            ExitCode::from(2)
        }
    }
}

fn print_json(value: &Value, indent: usize) {
    if indent == 0 {
        println!("{}", serde_json::to_string(value).expect("serializable"));
    } else {
        let spaces = b" ".repeat(indent);
        let formatter = serde_json::ser::PrettyFormatter::with_indent(&spaces);
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, formatter);
        serde::Serialize::serialize(value, &mut ser).expect("serializable");
        println!("{}", String::from_utf8(out).expect("utf8"));
    }
}

fn run(cli: Cli) -> Result<(Value, bool), String> {
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "tolerance": cli.tol,
        "seed": cli.seed,
    });
    match cli.command {
        Command::Dim { scene, hom } => report::dim(&scene.scene, &hom, meta),
        Command::Index { scene, hom } => report::index(&scene.scene, hom.as_deref(), cli.seed, meta),
        Command::Fuse { scene, left, right } => {
            report::fuse(&scene.scene, &left, &right, cli.tol, meta)
        }
        Command::Normalize { scene, bimodule, skew } => {
            report::normalize(&scene.scene, &bimodule, skew, cli.seed, cli.tol, meta)
        }
        Command::Eval { env, diagram, assert_identity } => {
            report::eval(&env, &diagram, assert_identity, cli.tol, meta)
        }
        Command::L2map { scene, hom } => report::l2map(&scene.scene, &hom, meta),
        Command::Check { suite } => suites::run(suite.as_deref(), cli.seed, cli.tol, meta),
    }
}
