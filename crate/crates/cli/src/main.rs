use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use debut::chain::{estimate_cost, layer_compression, parse_factors, validate_factors};
use debut::io;
use debut::kernels::{bipolar_test, chain_apply, chain_apply_counted, materialize, sign_pattern};
use debut::{
    als_fit, conv_via_chain, fixtures, generate_chains, model_compression, parse_chain, parse_manifest, AlsOptions,
    ChainSpec, ConvShape, DebutChain, DebutError, DenseMatrix, Exec, GeneratorOptions, InitScheme, Style,
};

/// Exit status for a well-formed input that fails a check.
const EXIT_FAILED: u8 = 1;
/// Exit status for unreadable or malformed input.
const EXIT_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "debut", version, about = "Build, check and apply deformable butterfly chains")]
struct Cli {
    /// Worker threads for the data-parallel kernels (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Matrix output format; defaults to csv for `.csv` paths and bin otherwise.
    #[arg(long, global = true, value_enum)]
    format: Option<MatrixFormat>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MatrixFormat {
    Csv,
    Bin,
}

/// Where factor values come from.
#[derive(Args)]
struct Values {
    /// Directory written by `fit` (chain.txt plus factor_NN.dbf1 files).
    #[arg(long)]
    factors: Option<PathBuf>,

    /// Random values when no factor directory is given:
    /// bipolar, gaussian:SIGMA or uniform:LO,HI.
    #[arg(long, default_value = "bipolar")]
    init: String,
}

#[derive(Subcommand)]
enum Command {
    /// Check adjacency, densification and full density.
    Validate {
        /// Chain file, chain text, or bundled fixture name.
        chain: String,
    },
    /// Print sizes, compression and multiply-accumulate counts.
    Info {
        chain: String,
        /// Convolution context: c_i,c_o,k,stride,pad,H,W.
        #[arg(long)]
        conv: Option<String>,
        /// Model manifest for model-wise compression (`lenet` and `vgg16_bn` are bundled).
        #[arg(long, requires = "layer")]
        manifest: Option<String>,
        /// Layer the chain replaces.
        #[arg(long, requires = "manifest")]
        layer: Option<String>,
    },
    /// Bind random +-1 values and check that the product is dense and +-1.
    Bipolar {
        chain: String,
        /// Also print the sign grid of the product.
        #[arg(long)]
        pattern: bool,
    },
    /// Write the explicit product of the chain.
    Materialize {
        chain: String,
        #[command(flatten)]
        values: Values,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Multiply a matrix by the chain.
    Apply {
        chain: String,
        #[command(flatten)]
        values: Values,
        /// Input matrix (DBMT or CSV), `cols_in` rows.
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Multiply by the materialized dense matrix instead.
        #[arg(long)]
        dense: bool,
    },
    /// Fit chain values to a target matrix by alternating least squares.
    Fit {
        chain: String,
        /// Target matrix (DBMT or CSV).
        #[arg(short, long)]
        target: PathBuf,
        /// Output directory for the fitted factors and error history.
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        sweeps: Option<usize>,
        /// Stop when a sweep improves the relative error by less than this.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
    },
    /// Run a convolution with the chain as its kernel matrix.
    Conv {
        chain: String,
        #[command(flatten)]
        values: Values,
        /// Input tensor (DBT3).
        #[arg(short, long)]
        input: PathBuf,
        /// c_i,c_o,k,stride,pad,H,W
        #[arg(long)]
        shape: String,
        /// Bias values, one per output channel (CSV).
        #[arg(long)]
        bias: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Time the chain product against the dense product.
    Bench {
        chain: String,
        #[arg(long, default_value_t = 256)]
        columns: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Propose valid chains for a rows_out x cols_in matrix.
    Generate {
        rows_out: usize,
        cols_in: usize,
        #[arg(long, default_value = "monotonic")]
        style: String,
        #[arg(long, default_value_t = 6)]
        max_factors: usize,
        #[arg(long, default_value_t = 20)]
        max_candidates: usize,
        #[arg(long, default_value_t = 2.0)]
        max_bulge_ratio: f64,
    },
}

/// Reads a chain from a file, inline arrow text, or a fixture name.
fn chain_text(arg: &str) -> Result<String> {
    let path = Path::new(arg);
    if path.is_file() {
        return fs::read_to_string(path).with_context(|| format!("reading {arg}"));
    }
    if arg.contains("<-") {
        return Ok(arg.to_string());
    }
    if let Some(f) = fixtures::get(arg) {
        return Ok(f.text.to_string());
    }
    bail!("{arg}: no such file, fixture, or chain text")
}

fn load_spec(arg: &str) -> Result<ChainSpec> {
    Ok(parse_chain(&chain_text(arg)?)?)
}

fn load_chain(spec: &ChainSpec, values: &Values, seed: u64) -> Result<DebutChain> {
    match &values.factors {
        Some(dir) => {
            let chain = io::read_chain_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
            if chain.spec() != *spec {
                return Err(DebutError::ShapeMismatch(format!(
                    "{} holds {} but the chain argument is {}",
                    dir.display(),
                    chain.spec(),
                    spec
                ))
                .into());
            }
            Ok(chain)
        }
        None => {
            let scheme: InitScheme = values.init.parse()?;
            Ok(DebutChain::random(spec, scheme, seed))
        }
    }
}

fn load_manifest(arg: &str) -> Result<debut::ModelManifest> {
    match arg {
        "lenet" => Ok(fixtures::lenet_manifest()),
        "vgg16_bn" => Ok(fixtures::vgg16_bn_manifest()),
        path => Ok(parse_manifest(&fs::read_to_string(path).with_context(|| format!("reading {path}"))?)?),
    }
}

fn write_matrix(path: &Path, m: &DenseMatrix, format: Option<MatrixFormat>) -> Result<()> {
    let csv = match format {
        Some(f) => f == MatrixFormat::Csv,
        None => path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")),
    };
    if csv {
        fs::write(path, io::matrix_to_csv(m))?;
    } else {
        io::write_matrix(path, m)?;
    }
    Ok(())
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let seed = cli.seed;
    match cli.command {
        Command::Validate { chain } => {
            let factors = parse_factors(&chain_text(&chain)?)?;
            let report = validate_factors(&factors);
            println!("{report}");
            return Ok(if report.pass() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_FAILED) });
        }
        Command::Info {
            chain,
            conv,
            manifest,
            layer,
        } => {
            let spec = load_spec(&chain)?;
            let conv = conv.map(|c| c.parse::<ConvShape>()).transpose()?;
            println!("chain: {spec}");
            println!("factors: {}", spec.len());
            println!("size: {} x {}", spec.rows_out(), spec.cols_in());
            println!("nonzeros: {}", spec.nonzeros());
            println!("LC: {}", pct(layer_compression(&spec)));
            println!("valid: {}", if spec.validate().pass() { "yes" } else { "no" });
            let cost = estimate_cost(&spec, conv.as_ref())?;
            println!(
                "MACs per column: chain {}, dense {}, ratio {:.4}",
                cost.debut_macs_per_column,
                cost.gemm_macs_per_column,
                cost.mac_ratio()
            );
            println!("largest factor nonzeros: {}", cost.max_factor_nonzeros);
            if conv.is_some() {
                println!(
                    "MACs per image ({} columns): chain {}, dense {}",
                    cost.num_columns,
                    cost.debut_macs(),
                    cost.gemm_macs()
                );
            }
            if let (Some(manifest), Some(layer)) = (manifest, layer) {
                let m = load_manifest(&manifest)?;
                let mut rep = BTreeMap::new();
                rep.insert(layer, spec);
                let mc = model_compression(&m, &rep)?;
                println!("MC: {}", pct(mc.mc));
                println!("params: {} of {}", mc.remaining_params, mc.total_params);
            }
        }
        Command::Bipolar { chain, pattern } => {
            let spec = load_spec(&chain)?;
            let report = bipolar_test(&spec, seed);
            println!("{report}");
            if pattern {
                print!("{}", sign_pattern(&materialize(&DebutChain::random(&spec, InitScheme::Bipolar, seed))));
            }
            return Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(EXIT_FAILED) });
        }
        Command::Materialize { chain, values, output } => {
            let spec = load_spec(&chain)?;
            let c = load_chain(&spec, &values, seed)?;
            write_matrix(&output, &materialize(&c), cli.format)?;
            println!("wrote {} x {} matrix to {}", spec.rows_out(), spec.cols_in(), output.display());
        }
        Command::Apply {
            chain,
            values,
            input,
            output,
            dense,
        } => {
            let spec = load_spec(&chain)?;
            let c = load_chain(&spec, &values, seed)?;
            let x = io::read_matrix_any(&input).with_context(|| format!("reading {}", input.display()))?;
            let y = if dense { materialize(&c).matmul(&x)? } else { chain_apply(&c, &x)? };
            write_matrix(&output, &y, cli.format)?;
            println!("wrote {} x {} matrix to {}", y.rows(), y.cols(), output.display());
        }
        Command::Fit {
            chain,
            target,
            output,
            sweeps,
            tol,
            ridge,
        } => {
            let spec = load_spec(&chain)?;
            let f = io::read_matrix_any(&target).with_context(|| format!("reading {}", target.display()))?;
            let mut opts = AlsOptions::for_target(f.rows(), f.cols());
            opts.max_sweeps = sweeps.unwrap_or(opts.max_sweeps);
            opts.rel_tol = tol.unwrap_or(opts.rel_tol);
            opts.ridge = ridge;
            opts.seed = seed;
            if opts.max_sweeps == 0 {
                bail!("--sweeps must be at least 1");
            }
            let res = als_fit(&f, &spec, &opts)?;
            for w in &res.warnings {
                eprintln!("warning: {w}");
            }
            io::write_chain_dir(&output, &res.chain)?;
            fs::write(output.join("error_history.csv"), io::error_history_csv(&res.error_history))?;
            println!("sweeps: {}", res.sweeps_run);
            println!("converged: {}", if res.converged { "yes" } else { "no" });
            println!("final relative error: {:.6e}", res.final_error());
            println!("wrote {}", output.display());
        }
        Command::Conv {
            chain,
            values,
            input,
            shape,
            bias,
            output,
        } => {
            let spec = load_spec(&chain)?;
            let c = load_chain(&spec, &values, seed)?;
            let shape: ConvShape = shape.parse()?;
            let x = io::read_tensor(&input).with_context(|| format!("reading {}", input.display()))?;
            let bias = match bias {
                Some(p) => Some(io::matrix_from_csv(&fs::read_to_string(&p)?)?.into_data()),
                None => None,
            };
            let y = conv_via_chain(&c, &x, &shape, bias.as_deref())?;
            io::write_tensor(&output, &y)?;
            let (ch, h, w) = y.dims();
            println!("wrote {ch} x {h} x {w} tensor to {}", output.display());
        }
        Command::Bench { chain, columns, repeats } => {
            let spec = load_spec(&chain)?;
            let c = DebutChain::random(&spec, InitScheme::Gaussian { sigma: 1.0 }, seed);
            let x = DenseMatrix::random_gaussian(spec.cols_in(), columns, seed);
            let dense = materialize(&c);
            let best = |f: &dyn Fn()| {
                (0..repeats.max(1))
                    .map(|_| {
                        let t = Instant::now();
                        f();
                        t.elapsed()
                    })
                    .min()
                    .unwrap_or(Duration::ZERO)
            };
            let (_, macs) = chain_apply_counted(&c, &x, Exec::Parallel)?;
            let t_chain = best(&|| {
                chain_apply(&c, &x).expect("dimensions checked");
            });
            let t_dense = best(&|| {
                dense.matmul(&x).expect("dimensions checked");
            });
            let gemm = (spec.rows_out() * spec.cols_in() * columns) as u64;
            println!("chain: {spec}");
            println!("columns: {columns}");
            println!("chain MACs: {macs}");
            println!("dense MACs: {gemm}");
            println!("MAC ratio: {:.4}", macs as f64 / gemm as f64);
            println!("chain time: {t_chain:.2?}");
            println!("dense time: {t_dense:.2?}");
            println!("threads: {}", rayon::current_num_threads());
        }
        Command::Generate {
            rows_out,
            cols_in,
            style,
            max_factors,
            max_candidates,
            max_bulge_ratio,
        } => {
            let style: Style = style.parse()?;
            let opts = GeneratorOptions {
                max_factors,
                max_bulge_ratio,
                max_candidates,
            };
            for spec in generate_chains(rows_out, cols_in, style, &opts)? {
                println!(
                    "{spec}    # nonzeros {}, LC {}",
                    spec.nonzeros(),
                    pct(layer_compression(&spec))
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<DebutError>() {
        Some(DebutError::SingularSystem { .. } | DebutError::ZeroTarget | DebutError::NoChainFound { .. }) => EXIT_FAILED,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {}", anyhow!(e));
            return ExitCode::from(EXIT_INPUT);
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
