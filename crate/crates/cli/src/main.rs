use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use spn_core::codec::{spn_decode, spn_encode, CodecParams, CompressedMessage, CompressionBudget};
use spn_core::learner::{pac_learn, run_scaling, write_csv, ExperimentConfig};
use spn_core::metrics::{similarity, tv_bound_similar, tv_exact, tv_monte_carlo};
use spn_core::model::io::{model_to_json, read_model, StructureSpec};
use spn_core::{parse_signature, structure_stats, SpnModel};

#[derive(Parser)]
#[command(name = "spn", version, about = "Sum-product networks: validation, metrics, compression and learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a signature and print its e, k, n and depth.
    Validate {
        /// File holding the signature text.
        #[arg(long, conflicts_with = "signature", required_unless_present = "signature")]
        sig: Option<PathBuf>,
        /// Signature text given inline.
        #[arg(long)]
        signature: Option<String>,
        #[arg(long)]
        n: usize,
    },
    /// Structure counts and leaf path weights of a model.
    Stats {
        #[arg(long)]
        model: PathBuf,
        /// Also list the leaves negligible at this accuracy.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Draw labelled samples as CSV.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        count: usize,
        #[command(flatten)]
        seed: SeedArg,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Density (or pmf) at a point.
    Density {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated coordinates.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        point: Vec<f64>,
    },
    /// Total variation distance between two models.
    Tv {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, conflicts_with = "mc", required_unless_present = "mc")]
        exact: bool,
        #[arg(long)]
        mc: bool,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Same-structure check and the (eps, alpha) similarity certificate.
    Similarity {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Sample from a model and encode it into a binary message.
    Compress {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        codec: CodecArgs,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a binary message into a model file.
    Decompress {
        /// Structure file, or any model file with the same structure.
        #[arg(long)]
        structure: PathBuf,
        #[command(flatten)]
        codec: CodecArgs,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn a categorical model from a sample CSV by candidate enumeration.
    Learn {
        #[arg(long)]
        structure: PathBuf,
        /// CSV as written by `spn sample`.
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 1_000_000)]
        cap: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Batch experiments.
    Experiment {
        #[command(subcommand)]
        kind: ExperimentKind,
    },
}

#[derive(Subcommand)]
enum ExperimentKind {
    /// Error against sample size; writes one CSV row per trial and eps.
    Scaling {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SeedArg {
    #[arg(long, env = "SPN_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CodecArgs {
    #[arg(long)]
    eps: f64,
    /// Use the weak variant (eps/2n leaves, eps/k weight net, no negligible leaves).
    #[arg(long)]
    weak: bool,
}

impl CodecArgs {
    fn params(&self) -> CodecParams {
        if self.weak {
            CodecParams::weak(self.eps)
        } else {
            CodecParams::strong(self.eps)
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> Result<SpnModel> {
    read_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "{v}")?;
    Ok(())
}

fn write_samples_csv<W: Write>(model: &SpnModel, seed: u64, count: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=model.n()).map(|i| format!("x{i}")).collect();
    header.push("leaf_path".into());
    w.write_record(&header)?;
    for s in model.sample(seed, count) {
        let mut rec: Vec<String> = s.point.iter().map(|v| v.to_string()).collect();
        rec.push(s.leaf_path.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";"));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_samples_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let cols: Vec<usize> = r
        .headers()?
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with('x'))
        .map(|(i, _)| i)
        .collect();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let point = cols
            .iter()
            .map(|&c| rec[c].trim().parse::<f64>().with_context(|| format!("bad value {:?}", &rec[c])))
            .collect::<Result<Vec<_>>>()?;
        out.push(point);
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { sig, signature, n } => {
            let text = match (sig, signature) {
                (Some(path), _) => read_text(&path)?,
                (None, Some(text)) => text,
                (None, None) => unreachable!("clap requires one of --sig/--signature"),
            };
            let node = parse_signature(text.trim(), n)?;
            print_json(&serde_json::to_value(structure_stats(&node))?)
        }
        Command::Stats { model, eps } => {
            let m = load_model(&model)?;
            let mut v = serde_json::to_value(structure_stats(m.structure()))?;
            v["path_weights"] = json!(m.path_weights());
            if let Some(eps) = eps {
                v["negligible"] = json!(m.negligible_leaves(eps));
            }
            print_json(&v)
        }
        Command::Sample { model, count, seed, out } => {
            let m = load_model(&model)?;
            match out {
                Some(path) => write_samples_csv(&m, seed.seed, count, fs::File::create(&path)?),
                None => write_samples_csv(&m, seed.seed, count, io::stdout().lock()),
            }
        }
        Command::Density { model, point } => {
            let m = load_model(&model)?;
            let log_density = m.log_density(&point)?;
            print_json(&json!({"density": log_density.exp(), "log_density": log_density}))
        }
        Command::Tv { a, b, exact, mc: _, samples, seed } => {
            let (a, b) = (load_model(&a)?, load_model(&b)?);
            if exact {
                print_json(&json!({"estimate": tv_exact(&a, &b)?, "method": "exact"}))
            } else {
                let est = tv_monte_carlo(&a, &b, samples, seed.seed)?;
                print_json(&json!({"estimate": est.estimate, "std_error": est.std_error, "method": "monte_carlo"}))
            }
        }
        Command::Similarity { a, b } => {
            let (a, b) = (load_model(&a)?, load_model(&b)?);
            let report = similarity(&a, &b);
            let mut v = serde_json::to_value(&report)?;
            if report.is_same_structure {
                v["tv_bound"] = json!(tv_bound_similar(&report, a.n(), a.structure().weight_count())?);
            }
            print_json(&v)
        }
        Command::Compress { model, codec, seed, out } => {
            let m = load_model(&model)?;
            let params = codec.params();
            let budget = CompressionBudget::new(&StructureSpec::of_model(&m), &params)?;
            let samples = m.sample(seed.seed, budget.m0);
            let msg = spn_encode(&m, &samples, &params)?;
            msg.write(&out).with_context(|| format!("writing {}", out.display()))?;
            print_json(&json!({
                "samples_drawn": samples.len(),
                "points": msg.points.len(),
                "bits": msg.bits.len(),
                "point_budget": budget.point_budget(),
                "bit_budget": budget.bit_budget(),
            }))
        }
        Command::Decompress { structure, codec, input, out } => {
            let spec = StructureSpec::from_json(&read_text(&structure)?)?;
            let msg = CompressedMessage::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let model = spn_decode(&spec, &msg, &codec.params())?;
            fs::write(&out, model_to_json(&model)).with_context(|| format!("writing {}", out.display()))?;
            Ok(())
        }
        Command::Learn { structure, samples, eps, delta, cap, out } => {
            let spec = StructureSpec::from_json(&read_text(&structure)?)?;
            let sample = read_samples_csv(&samples)?;
            let result = pac_learn(&spec, &sample, eps, delta, cap as u128)?;
            fs::write(&out, model_to_json(&result.chosen)).with_context(|| format!("writing {}", out.display()))?;
            print_json(&result.summary_json())
        }
        Command::Experiment { kind: ExperimentKind::Scaling { config, out } } => {
            let cfg = ExperimentConfig::from_json(&read_text(&config)?)?;
            let rows = run_scaling(&cfg)?;
            let file = fs::File::create(&out).with_context(|| format!("writing {}", out.display()))?;
            write_csv(&rows, file)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
