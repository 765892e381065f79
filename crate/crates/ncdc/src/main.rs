//! Command line front end: load terms from canonical JSON documents, run
//! them, rewrite them and render them.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::Value;

use ncdc_core::align::{configure, configure_by_name, Configuration};
use ncdc_core::codec::{configuration_from_json, load, save, tensor_from_json, tensor_json};
use ncdc_core::diagram::{render_svg, Options};
use ncdc_core::eval::{eval, eval_oracle, init_params};
use ncdc_core::examples;
use ncdc_core::hypergraph::{extract, to_hypergraph, to_json};
use ncdc_core::rewrite::{rewrite, Rule};
use ncdc_core::tensor::tensors_close;
use ncdc_core::{Term, TensorValue, Uid};

#[derive(Parser)]
#[command(name = "ncdc", version, about = "Categorical IR for broadcasted tensor programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a term document and report its free axes.
    Check {
        term: PathBuf,
    },
    /// Assign sizes to free axes.
    Config {
        term: PathBuf,
        /// name=size pairs, comma separated; names may be axis uids in hex.
        #[arg(long, value_delimiter = ',')]
        set: Vec<String>,
        /// JSON file mapping axis uid hex strings to sizes.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Evaluate a term on concrete inputs.
    Eval {
        term: PathBuf,
        /// JSON array of input tensors, innermost axis first.
        #[arg(long)]
        inputs: PathBuf,
        /// Seed for learned parameters.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Diff the interpreter against the brute-force oracle.
    Oracle {
        term: PathBuf,
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Normalize a term through hypergraph rewriting.
    Rewrite {
        term: PathBuf,
        /// Comma-separated subset of fuse, cleanup, yoneda.
        #[arg(long, value_delimiter = ',', default_value = "fuse,cleanup,yoneda")]
        rules: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        max_steps: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Dump the hypergraph of a term as JSON.
    Hypergraph {
        term: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Render a term as a string diagram (SVG).
    Diagram {
        term: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Draw datatype wires even for real arrays.
        #[arg(long)]
        show_dtypes: bool,
    },
    /// Emit a bundled example term (attention, convolution, resnet-block).
    Examples {
        name: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn read_term(path: &Path) -> Result<Term> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn read_inputs(path: &Path) -> Result<Vec<TensorValue>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let arr = v
        .as_array()
        .ok_or_else(|| anyhow!("{}: expected a JSON array of tensors", path.display()))?;
    arr.iter()
        .enumerate()
        .map(|(i, t)| tensor_from_json(t, &format!("/{i}")).map_err(|e| anyhow!("{e}")))
        .collect()
}

fn emit(output: Option<&PathBuf>, text: &str) -> Result<()> {
    match output {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn checked(t: &Term) -> Result<()> {
    let violations = t.validate();
    if !violations.is_empty() {
        bail!("term is not well formed:\n{}", violations.join("\n"));
    }
    Ok(())
}

fn run_eval(t: &Term, inputs: &Path, seed: u64) -> Result<(Vec<TensorValue>, Vec<TensorValue>)> {
    checked(t)?;
    let free = t.free_axes();
    if !free.is_empty() {
        let names: Vec<&str> = free.iter().map(|a| a.name.as_str()).collect();
        bail!("term has unconfigured axes {names:?}; run `ncdc config` first");
    }
    let xs = read_inputs(inputs)?;
    let params = init_params(seed, t)?;
    let ys = eval(t, &xs, &params)?;
    Ok((xs, ys))
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Check { term } => {
            let t = read_term(&term)?;
            checked(&t)?;
            let free = t.free_axes();
            if free.is_empty() {
                println!("ok: fully configured");
            } else {
                println!("ok: {} free axes", free.len());
                for a in free {
                    println!("  {}  {}", a.uid.to_hex(), a.name);
                }
            }
        }
        Cmd::Config { term, set, config, output } => {
            let t = read_term(&term)?;
            let mut out = t;
            if let Some(path) = config {
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let v: Value = serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", path.display()))?;
                let c: Configuration = configuration_from_json(&v, "")?;
                out = configure(&out, &c)?;
            }
            if !set.is_empty() {
                let pairs: Result<Vec<(String, u64)>> = set
                    .iter()
                    .map(|s| {
                        let (name, size) = s
                            .split_once('=')
                            .ok_or_else(|| anyhow!("--set expects name=size, got '{s}'"))?;
                        Ok((name.to_string(), size.parse::<u64>().context("size must be a nonnegative integer")?))
                    })
                    .collect();
                out = configure_by_name(&out, &pairs?)?;
            }
            checked(&out)?;
            emit(output.as_ref(), &save(&out))?;
        }
        Cmd::Eval { term, inputs, seed, output } => {
            let t = read_term(&term)?;
            let (_, ys) = run_eval(&t, &inputs, seed)?;
            let doc = Value::Array(ys.iter().map(tensor_json).collect());
            emit(output.as_ref(), &serde_json::to_string(&doc)?)?;
        }
        Cmd::Oracle { term, inputs, seed } => {
            let t = read_term(&term)?;
            let (xs, ys) = run_eval(&t, &inputs, seed)?;
            let params = init_params(seed, &t)?;
            let want = eval_oracle(&t, &xs, &params)?;
            for (i, (got, expect)) in ys.iter().zip(&want).enumerate() {
                if !tensors_close(got, expect, 1e-9, 1e-12) {
                    bail!("output {i} disagrees with the oracle");
                }
            }
            println!("ok: {} outputs match the oracle", ys.len());
        }
        Cmd::Rewrite { term, rules, max_steps, output } => {
            let t = read_term(&term)?;
            checked(&t)?;
            let rules: Result<Vec<Rule>> = rules
                .iter()
                .map(|r| Rule::parse(r).map_err(|e| anyhow!("{e}")))
                .collect();
            // fresh uids minted by rewriting are deterministic across runs
            Uid::set_deterministic(1 << 40);
            let g = to_hypergraph(&t)?;
            let outcome = rewrite(&g, &rules?, max_steps);
            if outcome.exhausted {
                eprintln!("note: step budget {max_steps} exhausted after {} steps", outcome.steps);
            }
            let t2 = extract(&outcome.graph)?;
            emit(output.as_ref(), &save(&t2))?;
        }
        Cmd::Hypergraph { term, output } => {
            let t = read_term(&term)?;
            checked(&t)?;
            let g = to_hypergraph(&t)?;
            emit(output.as_ref(), &serde_json::to_string(&to_json(&g))?)?;
        }
        Cmd::Diagram { term, output, show_dtypes } => {
            let t = read_term(&term)?;
            let svg = render_svg(&t, &Options { show_dtypes })?;
            emit(output.as_ref(), &svg)?;
        }
        Cmd::Examples { name, output } => {
            // bundled terms mint the same uids on every invocation
            Uid::set_deterministic(1);
            let t = examples::bundled(&name)?;
            emit(output.as_ref(), &save(&t))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("NCDC_THREADS") {
        let n: usize = match threads.parse() {
            Ok(n) => n,
            Err(_) => {
                eprintln!("error: NCDC_THREADS must be an integer (0 means automatic)");
                return ExitCode::from(2);
            }
        };
        if n > 0 {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
