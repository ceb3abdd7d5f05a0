use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use blscale_core::{
    bl_estimate, derive_adjoint_params, feasibility_check, geometricity, make_holder, make_loomis_whitney,
    make_random_feasible_with, make_remark_datum, maximize_gaussian_with, nearest_geometric, rank1_scalar_oracle,
    run_flow, sandwich_check, validate, DatumFile, Feasibility, FlowConfig64, FlowTrace64, GaussianSearch,
    NamedDatum, SandwichConfig, DEFAULT_GEOMETRICITY_TOL,
};
use log::{debug, info};
use rayon::prelude::*;
use serde::Serialize;

use crate::{Cli, Command, Shared};

pub const GENERATORS: [&str; 4] = ["holder", "loomis-whitney", "remark", "random-feasible"];

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_FAILED: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Input {
        path: PathBuf,
        source: blscale_core::Error,
    },
    #[error(transparent)]
    Core(#[from] blscale_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        EXIT_INPUT
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<u8> {
    if let Some(jobs) = cli.shared.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let shared = &cli.shared;
    match cli.command {
        Command::Validate { files } => Ok(batch(&files, validate_one)),
        Command::Flow { files } => {
            let config = flow_config(shared, None)?;
            let out = shared.out.clone().unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&out)?;
            Ok(batch(&files, |p| flow_one(p, &config, &out)))
        }
        Command::Bl { file, tol, grid } => cmd_bl(shared, &file, tol, grid),
        Command::Gaussian {
            file,
            iters,
            tol,
            restarts,
            grid,
        } => cmd_gaussian(shared, &file, iters, tol, restarts, grid),
        Command::Adjoint {
            file,
            theta,
            p,
            samples,
        } => cmd_adjoint(shared, &file, theta.as_deref(), p, samples),
        Command::Generate {
            name,
            n,
            c,
            dims,
            angle,
            max_cond,
        } => cmd_generate(shared, &name, n, c.as_deref(), dims.as_deref(), angle, max_cond),
        Command::Demo => cmd_demo(shared),
    }
}

/// Flow settings from the shared flags; `fallback` replaces the library
/// defaults for flags the user did not give.
fn flow_config(shared: &Shared, fallback: Option<FlowConfig64>) -> CliResult<FlowConfig64> {
    let defaults = fallback.unwrap_or_default();
    let config = FlowConfig64 {
        max_iters: shared.max_iters.unwrap_or(defaults.max_iters),
        geo_tol: shared.geo_tol.unwrap_or(defaults.geo_tol),
        stall_tol: shared.stall_tol.unwrap_or(defaults.stall_tol),
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn load(path: &Path) -> CliResult<DatumFile> {
    DatumFile::read(path).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_csv(flag: &str, text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("--{flag}: cannot parse {s:?} as a number")))
        })
        .collect()
}

/// Output of one file in a batch.
struct Item {
    code: u8,
    stdout: String,
    stderr: String,
}

/// Runs `f` over `files` on the rayon pool and prints the results in input
/// order. Returns the largest exit code.
fn batch(files: &[PathBuf], f: impl Fn(&Path) -> CliResult<Item> + Sync) -> u8 {
    let items: Vec<Item> = files
        .par_iter()
        .map(|p| {
            f(p).unwrap_or_else(|e| Item {
                code: e.exit_code(),
                stdout: String::new(),
                stderr: format!("error: {e}\n"),
            })
        })
        .collect();
    let mut code = EXIT_OK;
    for item in items {
        print!("{}", item.stdout);
        eprint!("{}", item.stderr);
        code = code.max(item.code);
    }
    code
}

fn validate_one(path: &Path) -> CliResult<Item> {
    let raw = fs::read_to_string(path)?;
    let file: DatumFile = serde_json::from_str(&raw).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    let report = validate(&file.datum);
    let mut out = String::new();
    let mut err = String::new();
    writeln!(out, "{}:", path.display()).unwrap();
    if !report.is_valid() {
        for v in &report.violations {
            writeln!(err, "error: {}: {v}", path.display()).unwrap();
        }
        writeln!(out, "  valid: false").unwrap();
        return Ok(Item {
            code: EXIT_INPUT,
            stdout: out,
            stderr: err,
        });
    }
    let geo = geometricity(&file.datum, DEFAULT_GEOMETRICITY_TOL);
    let feas = feasibility_check(&file.datum);
    writeln!(out, "  valid: true").unwrap();
    writeln!(out, "  n: {}, m: {}, dims: {:?}", file.datum.n(), file.datum.m(), file.datum.dims()).unwrap();
    writeln!(out, "  projection_defect: {:e}", geo.projection_defect).unwrap();
    writeln!(out, "  isotropy_defect: {:e}", geo.isotropy_defect).unwrap();
    writeln!(out, "  geometric: {}", geo.is_geometric).unwrap();
    let verdict = match feas.verdict {
        Feasibility::PossiblyFeasible => "possibly feasible",
        Feasibility::Infeasible => "infeasible",
    };
    writeln!(out, "  feasibility: {verdict}").unwrap();
    for reason in feas.reasons() {
        writeln!(err, "warning: {}: {reason}", path.display()).unwrap();
    }
    Ok(Item {
        code: EXIT_OK,
        stdout: out,
        stderr: err,
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "datum".into())
}

fn write_trace(trace: &FlowTrace64, out: &Path, stem: &str) -> CliResult<(PathBuf, PathBuf)> {
    let csv_path = out.join(format!("{stem}.trace.csv"));
    let json_path = out.join(format!("{stem}.trace.json"));
    trace.write_csv(BufWriter::new(File::create(&csv_path)?))?;
    trace.write_json(BufWriter::new(File::create(&json_path)?))?;
    Ok((csv_path, json_path))
}

fn flow_one(path: &Path, config: &FlowConfig64, out: &Path) -> CliResult<Item> {
    let file = load(path)?;
    info!("{}: running flow with {config:?}", path.display());
    let trace = run_flow(&file.datum, config);
    let (csv_path, json_path) = write_trace(&trace, out, &stem(path))?;
    let last = trace.final_record();
    let mut text = String::new();
    let mut err = String::new();
    writeln!(text, "{}:", path.display()).unwrap();
    writeln!(text, "  termination: {}", trace.termination).unwrap();
    writeln!(text, "  iterations: {}", trace.iterations()).unwrap();
    writeln!(text, "  isotropy_defect: {:e}", last.isotropy_defect).unwrap();
    let code = match bl_estimate(&trace) {
        Ok(est) => {
            writeln!(text, "  bl_estimate: {}", est.value).unwrap();
            writeln!(text, "  bl_log: {}", est.log_value).unwrap();
            EXIT_OK
        }
        Err(_) => {
            let (_, best) = nearest_geometric(&trace);
            writeln!(text, "  bl_estimate: none").unwrap();
            writeln!(text, "  best_isotropy_defect: {best:e}").unwrap();
            for reason in trace.feasibility.reasons() {
                writeln!(err, "warning: {}: {reason}", path.display()).unwrap();
            }
            EXIT_FAILED
        }
    };
    writeln!(text, "  trace: {} {}", csv_path.display(), json_path.display()).unwrap();
    Ok(Item {
        code,
        stdout: text,
        stderr: err,
    })
}

#[derive(Serialize)]
struct BlReport {
    termination: String,
    iterations: usize,
    bl_estimate: Option<f64>,
    bl_log: Option<f64>,
    expected_bl_log: Option<f64>,
    deviation: Option<f64>,
    gaussian_log_lower: Option<f64>,
    rank1_oracle_log: Option<f64>,
    ok: bool,
}

fn cmd_bl(shared: &Shared, path: &Path, tol: f64, grid: usize) -> CliResult<u8> {
    let file = load(path)?;
    let config = flow_config(shared, None)?;
    let trace = run_flow(&file.datum, &config);
    let est = bl_estimate(&trace).ok();
    let expected = file.expected.as_ref().map(|e| e.bl_log);
    let deviation = match (est, expected) {
        (Some(e), Some(x)) => Some((e.log_value - x).abs()),
        _ => None,
    };
    let search = GaussianSearch {
        iters: 2_000,
        seed: shared.seed.unwrap_or(0),
        ..GaussianSearch::default()
    };
    let gaussian = maximize_gaussian_with(&file.datum, &search)
        .map(|g| g.log_bl_lower)
        .ok();
    let rank1 = if file.datum.dims().iter().all(|&d| d == 1) {
        rank1_scalar_oracle(&file.datum, grid).ok()
    } else {
        None
    };
    let ok = est.is_some() && deviation.is_none_or(|d| d <= tol);
    let report = BlReport {
        termination: trace.termination.to_string(),
        iterations: trace.iterations(),
        bl_estimate: est.map(|e| e.value),
        bl_log: est.map(|e| e.log_value),
        expected_bl_log: expected,
        deviation,
        gaussian_log_lower: gaussian,
        rank1_oracle_log: rank1,
        ok,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    if !ok {
        for reason in trace.feasibility.reasons() {
            eprintln!("warning: {}: {reason}", path.display());
        }
    }
    Ok(if ok { EXIT_OK } else { EXIT_FAILED })
}

#[derive(Serialize)]
struct GaussianReport {
    log_bl_lower: f64,
    bl_lower: f64,
    iterations: usize,
    converged: bool,
    rank1_oracle_log: Option<f64>,
}

fn cmd_gaussian(shared: &Shared, path: &Path, iters: usize, tol: f64, restarts: usize, grid: usize) -> CliResult<u8> {
    let file = load(path)?;
    let search = GaussianSearch {
        iters,
        tol,
        restarts,
        seed: shared.seed.unwrap_or(0),
    };
    let g = match maximize_gaussian_with(&file.datum, &search) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            for reason in feasibility_check(&file.datum).reasons() {
                eprintln!("warning: {}: {reason}", path.display());
            }
            return Ok(EXIT_FAILED);
        }
    };
    let rank1 = if file.datum.dims().iter().all(|&d| d == 1) {
        Some(rank1_scalar_oracle(&file.datum, grid)?)
    } else {
        None
    };
    let report = GaussianReport {
        log_bl_lower: g.log_bl_lower,
        bl_lower: g.log_bl_lower.exp(),
        iterations: g.iterations,
        converged: g.converged,
        rank1_oracle_log: rank1,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(EXIT_OK)
}

fn cmd_adjoint(shared: &Shared, path: &Path, theta: Option<&str>, p: f64, samples: usize) -> CliResult<u8> {
    let file = load(path)?;
    let m = file.datum.m();
    let theta = match theta {
        Some(text) => parse_csv("theta", text)?,
        None => vec![1.0 / m as f64; m],
    };
    let params = derive_adjoint_params(&file.datum, &theta, p).map_err(|e| CliError::Usage(e.to_string()))?;
    let config = flow_config(shared, None)?;
    let trace = run_flow(&file.datum, &config);
    let est = match bl_estimate(&trace) {
        Ok(est) => est,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return Ok(EXIT_FAILED);
        }
    };
    let sandwich = SandwichConfig {
        samples,
        seed: shared.seed.unwrap_or(0),
        ..SandwichConfig::default()
    };
    let report = sandwich_check(&file.datum, &params, est.log_value, Some(&trace.last.transport), &sandwich)?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(out) = &shared.out {
        fs::create_dir_all(out)?;
        let target = out.join(format!("{}.sandwich.json", stem(path)));
        fs::write(&target, format!("{json}\n"))?;
        debug!("wrote {}", target.display());
    }
    Ok(if report.upper_ok && report.lower_ok {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

fn generate(
    shared: &Shared,
    name: &str,
    n: Option<usize>,
    c: Option<&str>,
    dims: Option<&str>,
    angle: Option<f64>,
    max_cond: f64,
) -> CliResult<(String, NamedDatum<f64>)> {
    let c = c.map(|t| parse_csv("c", t)).transpose()?;
    match name {
        "holder" => {
            let n = n.unwrap_or(2);
            let c = c.unwrap_or_else(|| vec![0.5, 0.5]);
            Ok((format!("holder{n}"), make_holder(n, &c)?))
        }
        "loomis-whitney" => {
            let n = n.unwrap_or(3);
            Ok((format!("lw{n}"), make_loomis_whitney(n)?))
        }
        "remark" => Ok((
            "remark".into(),
            make_remark_datum(angle.unwrap_or(std::f64::consts::FRAC_PI_4))?,
        )),
        "random-feasible" => {
            let n = n.unwrap_or(3);
            let dims: Vec<usize> = match dims {
                Some(text) => text
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| CliError::Usage(format!("--dims: cannot parse {s:?}")))
                    })
                    .collect::<CliResult<_>>()?,
                None => vec![n - 1; n],
            };
            let total: usize = dims.iter().sum();
            let c = c.unwrap_or_else(|| vec![n as f64 / total.max(1) as f64; dims.len()]);
            let seed = shared.seed.unwrap_or(0);
            let nd = make_random_feasible_with(n, dims.len(), &dims, &c, seed, Some(max_cond))?;
            Ok((format!("random-feasible-{seed}"), nd))
        }
        other => Err(CliError::Usage(format!(
            "unknown generator {other:?}; available: {}",
            GENERATORS.join(", ")
        ))),
    }
}

fn cmd_generate(
    shared: &Shared,
    name: &str,
    n: Option<usize>,
    c: Option<&str>,
    dims: Option<&str>,
    angle: Option<f64>,
    max_cond: f64,
) -> CliResult<u8> {
    let (file_stem, nd) = generate(shared, name, n, c, dims, angle, max_cond)?;
    let file = DatumFile::from(nd);
    match &shared.out {
        Some(out) => {
            fs::create_dir_all(out)?;
            let path = out.join(format!("{file_stem}.json"));
            file.write(&path)?;
            println!("{}", path.display());
        }
        None => println!("{}", file.to_json()?),
    }
    Ok(EXIT_OK)
}

fn cmd_demo(shared: &Shared) -> CliResult<u8> {
    // The remark datum converges sublinearly: about 1/(2k²) in defect and
    // 1/(4k) in log-constant. The demo budget is sized so that its estimate
    // lands within 1e-6 of the closed form.
    let config = flow_config(
        shared,
        Some(FlowConfig64 {
            max_iters: 1_000_000,
            geo_tol: 1e-12,
            ..FlowConfig64::default()
        }),
    )?;
    let seed = shared.seed.unwrap_or(7);
    let cases = vec![
        ("lw3".to_string(), make_loomis_whitney(3)?),
        ("holder2".to_string(), make_holder(2, &[0.5, 0.5])?),
        ("remark".to_string(), make_remark_datum(std::f64::consts::FRAC_PI_4)?),
        (
            format!("random-feasible-{seed}"),
            make_random_feasible_with(3, 3, &[2, 2, 2], &[0.5; 3], seed, Some(10.0))?,
        ),
    ];
    if let Some(out) = &shared.out {
        fs::create_dir_all(out)?;
    }
    let rows: Vec<CliResult<(String, String, u8)>> = cases
        .into_par_iter()
        .map(|(stem, nd)| {
            let trace = run_flow(&nd.datum, &config);
            if let Some(out) = &shared.out {
                DatumFile::from(nd.clone()).write(out.join(format!("{stem}.json")))?;
                write_trace(&trace, out, &stem)?;
            }
            let expected = nd.expected.as_ref().map(|e| e.bl_log);
            let (est, code) = match bl_estimate(&trace) {
                Ok(e) => {
                    let ok = expected.is_none_or(|x| (e.log_value - x).abs() <= 1e-6);
                    (format!("{:.10}", e.value), if ok { EXIT_OK } else { EXIT_FAILED })
                }
                Err(_) => ("-".to_string(), EXIT_FAILED),
            };
            let exp = expected.map_or("-".into(), |x| format!("{:.10}", x.exp()));
            let line = format!(
                "{stem:<20} {:<12} {:>8} {:>14} {:>14}",
                trace.termination.label(),
                trace.iterations(),
                est,
                exp
            );
            Ok((stem, line, code))
        })
        .collect();
    println!(
        "{:<20} {:<12} {:>8} {:>14} {:>14}",
        "datum", "termination", "iters", "bl_estimate", "expected"
    );
    let mut code = EXIT_OK;
    for row in rows {
        let (_, line, c) = row?;
        println!("{line}");
        code = code.max(c);
    }
    Ok(code)
}
