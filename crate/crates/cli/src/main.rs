//! Command-line driver: decide realizability, emit and verify certificates,
//! solve local Hurwitz problems, and export diagrams.
//!
//! Exit codes: 0 realizable (or conditionally realizable, or accepted), 1 not
//! realizable (or rejected, or unsolvable), 2 unknown / threshold / limit
//! verdicts, 3 input errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use hmod_core::check::{check_instance, CheckOptions, Verdict};
use hmod_core::dot::{certificate_dot, instance_dot};
use hmod_core::hurwitz::{solve, SolveOutcome};
use hmod_core::json::{
    certificate_from_json, certificate_to_string, instance_from_json, instance_hash,
    instance_to_json, problem_from_json, witness_to_json, Instance,
};
use hmod_core::modify::verify_certificate;
use hmod_core::multirank::coordinatewise_report;
use hmod_core::realize1::necessity_probe;

#[derive(Parser)]
#[command(name = "hmod", about = "Realizability of balanced functions on tropical curves", version)]
struct Cli {
    /// Degree bound for local Hurwitz searches.
    #[arg(long, global = true, default_value_t = 8)]
    max_degree: u64,
    /// Ray depth for the bounded necessity probe.
    #[arg(long, global = true, default_value_t = 3)]
    search_depth: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide realizability of an instance file.
    Check {
        instance: PathBuf,
        /// Also run the bounded modification search on negative verdicts.
        #[arg(long)]
        probe: bool,
    },
    /// Construct a certificate and write it next to the instance.
    Certify {
        instance: PathBuf,
        /// Output path (default: instance path with extension `cert.json`).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Verify a certificate file against an instance file.
    VerifyCert { instance: PathBuf, certificate: PathBuf },
    /// Solve a local Hurwitz problem file.
    Hurwitz { problem: PathBuf },
    /// Export an instance (or its certificate) as a DOT diagram.
    Export {
        instance: PathBuf,
        /// Render this certificate instead of the bare instance.
        #[arg(long)]
        certificate: Option<PathBuf>,
        /// Output path (default: stdout).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("bad JSON in {}: {e}", path.display()))
}

fn verdict_json(inst: &Instance, v: &Verdict) -> Value {
    match v {
        Verdict::Realizable { certificate, note } => json!({
            "verdict": "REALIZABLE",
            "note": note,
            "certificate": certificate.as_ref().map(|c| {
                serde_json::from_str::<Value>(&certificate_to_string(inst, c)).unwrap()
            }),
        }),
        Verdict::NotRealizable { witness_path, note } => json!({
            "verdict": "NOT_REALIZABLE",
            "witness_path": witness_path.iter().map(|e| e.0).collect::<Vec<_>>(),
            "note": note,
        }),
        Verdict::LimitRealizable { perturbation, sample_instance, sample } => json!({
            "verdict": "LIMIT_REALIZABLE",
            "perturbation": {
                "description": perturbation.description,
                "epsilon": hmod_core::rat::rat_to_string(&perturbation.epsilon),
            },
            "sample_instance": instance_to_json(&Instance::Scalar((**sample_instance).clone())),
            "sample_certificate": serde_json::from_str::<Value>(&certificate_to_string(
                &Instance::Scalar((**sample_instance).clone()),
                sample,
            ))
            .unwrap(),
        }),
        Verdict::ThresholdFail { bounds } => json!({
            "verdict": "THRESHOLD_FAIL",
            "bounds": bounds.iter().map(|(e, req, got)| json!({
                "connecting_edge": e.0,
                "required_exceeds": hmod_core::rat::rat_to_string(req),
                "actual": hmod_core::rat::rat_to_string(got),
            })).collect::<Vec<_>>(),
        }),
        Verdict::Unknown { reason } => json!({
            "verdict": "UNKNOWN",
            "reason": reason,
        }),
    }
}

fn run() -> Result<i32, String> {
    let cli = Cli::parse();
    let opts = CheckOptions { degree_bound: cli.max_degree, search_depth: cli.search_depth };
    match cli.command {
        Command::Check { instance, probe } => {
            let inst = instance_from_json(&read_json(&instance)?).map_err(|e| e.to_string())?;
            match &inst {
                Instance::Scalar(f) => {
                    let v = check_instance(f, &opts).map_err(|e| e.to_string())?;
                    let mut out = verdict_json(&inst, &v);
                    if probe {
                        if let Verdict::NotRealizable { .. } = &v {
                            let found = necessity_probe(f, opts.search_depth, 4, opts.degree_bound)
                                .map_err(|e| e.to_string())?;
                            out["probe"] = json!({
                                "searched": true,
                                "certificate_found": found.is_some(),
                            });
                        }
                    }
                    println!("{}", serde_json::to_string_pretty(&out).unwrap());
                    Ok(v.exit_code())
                }
                Instance::Vector(fr) => {
                    let basis: Vec<Vec<i64>> = (0..fr.rank)
                        .map(|i| (0..fr.rank).map(|j| i64::from(i == j)).collect())
                        .collect();
                    let rep =
                        coordinatewise_report(fr, &basis, &opts).map_err(|e| e.to_string())?;
                    let out = json!({
                        "verdict": match rep.combined {
                            hmod_core::multirank::CombinedVerdict::Realizable => "REALIZABLE",
                            hmod_core::multirank::CombinedVerdict::ConditionallyRealizable =>
                                "CONDITIONALLY_REALIZABLE",
                            hmod_core::multirank::CombinedVerdict::ConditionallyRealizableLimit =>
                                "CONDITIONALLY_REALIZABLE_LIMIT",
                            hmod_core::multirank::CombinedVerdict::NotRealizable => "NOT_REALIZABLE",
                            hmod_core::multirank::CombinedVerdict::Unknown => "UNKNOWN",
                        },
                        "maximally_degenerate": rep.maximally_degenerate,
                        "note": rep.codimension_hypothesis_note,
                        "per_character": rep.per_character.iter().map(|(chi, v)| json!({
                            "character": chi,
                            "verdict": v.name(),
                        })).collect::<Vec<_>>(),
                    });
                    println!("{}", serde_json::to_string_pretty(&out).unwrap());
                    Ok(rep.exit_code())
                }
            }
        }
        Command::Certify { instance, output } => {
            let inst = instance_from_json(&read_json(&instance)?).map_err(|e| e.to_string())?;
            let Instance::Scalar(f) = &inst else {
                return Err("certify supports rank-1 instances; use check for higher rank".into());
            };
            let v = check_instance(f, &opts).map_err(|e| e.to_string())?;
            match &v {
                Verdict::Realizable { certificate: Some(cert), .. } => {
                    let path = output.unwrap_or_else(|| instance.with_extension("cert.json"));
                    std::fs::write(&path, certificate_to_string(&inst, cert))
                        .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
                    println!("{}", path.display());
                    Ok(0)
                }
                Verdict::Realizable { certificate: None, note } => Err(format!(
                    "no certificate to write: {}",
                    note.clone().unwrap_or_default()
                )),
                other => {
                    eprintln!("{}", serde_json::to_string_pretty(&verdict_json(&inst, other)).unwrap());
                    Ok(other.exit_code())
                }
            }
        }
        Command::VerifyCert { instance, certificate } => {
            let inst = instance_from_json(&read_json(&instance)?).map_err(|e| e.to_string())?;
            let Instance::Scalar(f) = &inst else {
                return Err("verify-cert supports rank-1 instances".into());
            };
            let (hash, cert) =
                certificate_from_json(&read_json(&certificate)?).map_err(|e| e.to_string())?;
            if hash != instance_hash(&inst) {
                println!("REJECT: base mismatch at instance hash");
                return Ok(1);
            }
            let verdict = verify_certificate(f, &cert, cli.max_degree);
            println!("{}", verdict.describe());
            Ok(if verdict.is_accept() { 0 } else { 1 })
        }
        Command::Hurwitz { problem } => {
            let p = problem_from_json(&read_json(&problem)?).map_err(|e| e.to_string())?;
            match solve(&p, cli.max_degree).map_err(|e| e.to_string())? {
                SolveOutcome::Witness(w) => {
                    println!("{}", serde_json::to_string_pretty(&witness_to_json(&w)).unwrap());
                    Ok(0)
                }
                SolveOutcome::Unsolvable => {
                    println!("UNSOLVABLE");
                    Ok(1)
                }
            }
        }
        Command::Export { instance, certificate, output } => {
            let inst = instance_from_json(&read_json(&instance)?).map_err(|e| e.to_string())?;
            let dot = match certificate {
                None => match &inst {
                    Instance::Scalar(f) => instance_dot(f),
                    Instance::Vector(_) => {
                        return Err("export renders rank-1 instances".into());
                    }
                },
                Some(cpath) => {
                    let (hash, cert) =
                        certificate_from_json(&read_json(&cpath)?).map_err(|e| e.to_string())?;
                    if hash != instance_hash(&inst) {
                        return Err("certificate does not belong to this instance".into());
                    }
                    certificate_dot(&cert)
                }
            };
            match output {
                Some(path) => std::fs::write(&path, dot)
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
                None => print!("{dot}"),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
