use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use quadblow_core::ensemble::{run_ensemble, EnsembleSpec};
use quadblow_core::io::{
    quadratic_map_from_json, write_trajectory_csv, Envelope, TrajectorySummary,
};
use quadblow_core::spherical::{blowup_certificate_with, CertificateOptions};
use quadblow_core::{
    circle_map_degree, find_invariant_lines, integrate, min_norm_on_sphere, real_spectrum,
    DegeneracyReport, InvariantLine, IntegratorConfig, QuadraticMap, SquareMatrix, StateVector,
    TOOL_VERSION,
};
use serde::{Deserialize, Serialize};

use crate::args::{Cli, Command, EnsembleArgs, Format, IntegratorArgs};

#[derive(Debug)]
pub enum CliError {
    Domain(quadblow_core::Error),
    Usage(String),
    Io(String),
}

impl From<quadblow_core::Error> for CliError {
    fn from(e: quadblow_core::Error) -> Self {
        CliError::Domain(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) | CliError::Io(_) => 1,
        }
    }

    pub fn to_json_line(&self) -> String {
        let (kind, message) = match self {
            CliError::Domain(e) => (e.kind(), e.to_string()),
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Io(m) => ("io", m.clone()),
        };
        serde_json::json!({ "error": kind, "message": message }).to_string()
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Serialize, Deserialize)]
pub struct LinesOutput {
    pub lines: Vec<InvariantLine>,
    pub degeneracy: DegeneracyReport,
}

struct Output {
    path: Option<PathBuf>,
    force: bool,
}

impl Output {
    fn write(&self, text: &str) -> CliResult<()> {
        match &self.path {
            None => {
                let mut out = std::io::stdout().lock();
                writeln!(out, "{text}").map_err(|e| CliError::Io(e.to_string()))
            }
            Some(p) => write_file(p, text, self.force),
        }
    }
}

fn write_file(path: &Path, text: &str, force: bool) -> CliResult<()> {
    if path.exists() && !force {
        return Err(CliError::Io(format!("{} exists; pass --force to overwrite", path.display())));
    }
    fs::write(path, format!("{text}\n")).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_q(path: &Path) -> CliResult<QuadraticMap> {
    let (q, defect) = quadratic_map_from_json(&read(path)?)?;
    if defect > 0.0 {
        eprintln!("quadblow: symmetrized input tensor (defect {defect:e})");
    }
    Ok(q)
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Domain(e.into()))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

fn envelope<T: Serialize>(seed: u64, body: T) -> String {
    to_json(&Envelope { seed, tool_version: TOOL_VERSION.to_string(), body })
}

fn integrator_config(base: IntegratorConfig, a: &IntegratorArgs) -> IntegratorConfig {
    IntegratorConfig {
        rtol: a.rtol.unwrap_or(base.rtol),
        atol: a.atol.unwrap_or(base.atol),
        t_end: a.t_end.unwrap_or(base.t_end),
        r_max: a.r_max.unwrap_or(base.r_max),
        ..base
    }
}

fn require_json(format: Format, command: &str) -> CliResult<()> {
    match format {
        Format::Json => Ok(()),
        Format::Csv => Err(CliError::Usage(format!("`{command}` has no csv output"))),
    }
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    let seed = cli.seed.unwrap_or_else(rand::random);
    eprintln!("quadblow: seed={seed}");
    let out = Output { path: cli.output.clone(), force: cli.force };

    match cli.command {
        Command::Eval { input, x0 } => {
            require_json(cli.format, "eval")?;
            let q = load_q(&input)?;
            let x: StateVector = load_json(&x0)?;
            out.write(&envelope(seed, q.eval(&x)?))
        }
        Command::Integrate { input, x0, integrator } => {
            let q = load_q(&input)?;
            let x: StateVector = load_json(&x0)?;
            let cfg = integrator_config(IntegratorConfig::default(), &integrator);
            let traj = integrate(&q, &x, &cfg)?;
            let summary =
                Envelope { seed, tool_version: TOOL_VERSION.to_string(), body: TrajectorySummary::of(&traj) };
            let sidecar = to_json(&summary);
            match cli.format {
                Format::Json => out.write(&sidecar),
                Format::Csv => {
                    let mut csv = Vec::new();
                    write_trajectory_csv(&traj, &mut csv).map_err(|e| CliError::Io(e.to_string()))?;
                    let csv = String::from_utf8(csv).expect("ascii csv");
                    match &out.path {
                        Some(path) => {
                            write_file(path, csv.trim_end(), out.force)?;
                            write_file(&sidecar_path(path), &sidecar, out.force)
                        }
                        None => {
                            print!("{csv}");
                            eprintln!("{}", serde_json::to_string(&summary).expect("plain data serializes"));
                            Ok(())
                        }
                    }
                }
            }
        }
        Command::Matrix { input } => {
            require_json(cli.format, "matrix")?;
            let a: SquareMatrix = load_json(&input)?;
            out.write(&envelope(seed, real_spectrum(&a)?))
        }
        Command::Lines { input, starts } => {
            let q = load_q(&input)?;
            let starts = starts.unwrap_or(50 * q.dim());
            let degeneracy = min_norm_on_sphere(&q, starts, seed);
            if degeneracy.is_degenerate {
                eprintln!(
                    "quadblow: warning: Q vanishes numerically on the sphere (min |Q(v)| = {:e})",
                    degeneracy.min_norm
                );
            }
            let lines = find_invariant_lines(&q, starts, seed);
            match cli.format {
                Format::Json => out.write(&envelope(seed, LinesOutput { lines, degeneracy })),
                Format::Csv => {
                    let n = q.dim();
                    let mut text = String::from("lambda,residual");
                    for i in 0..n {
                        text.push_str(&format!(",v_{i}"));
                    }
                    for l in &lines {
                        text.push_str(&format!("\n{:.16e},{:.16e}", l.lambda, l.residual));
                        for c in l.v.coords() {
                            text.push_str(&format!(",{c:.16e}"));
                        }
                    }
                    out.write(&text)
                }
            }
        }
        Command::Degree { input, samples } => {
            require_json(cli.format, "degree")?;
            let q = load_q(&input)?;
            out.write(&envelope(seed, circle_map_degree(&q, samples)?))
        }
        Command::SearchBlowup { input, starts, integrator } => {
            require_json(cli.format, "search-blowup")?;
            let q = load_q(&input)?;
            let opts = CertificateOptions {
                starts,
                verify: true,
                integrator: integrator_config(IntegratorConfig::with_t_end(2.0), &integrator),
            };
            let cert = blowup_certificate_with(&q, seed, &opts)?;
            out.write(&envelope(seed, cert))
        }
        Command::McQ1 { dim, ensemble } => {
            require_json(cli.format, "mc-q1")?;
            let spec = ensemble_spec(EnsembleSpec::q1(dim, ensemble.samples, seed), &ensemble);
            run_and_persist(&spec, &ensemble, &out)
        }
        Command::McQ2 { d, ensemble } => {
            require_json(cli.format, "mc-q2")?;
            let spec = ensemble_spec(EnsembleSpec::q2(d, ensemble.samples, seed), &ensemble);
            run_and_persist(&spec, &ensemble, &out)
        }
    }
}

fn ensemble_spec(base: EnsembleSpec, args: &EnsembleArgs) -> EnsembleSpec {
    EnsembleSpec {
        integrator: integrator_config(base.integrator.clone(), &args.integrator),
        verify_fraction: args.verify_fraction,
        ..base
    }
}

fn run_and_persist(spec: &EnsembleSpec, args: &EnsembleArgs, out: &Output) -> CliResult<()> {
    // Refuse before spending the compute.
    if let Some(p) = &out.path {
        if p.exists() && !out.force {
            return Err(CliError::Io(format!("{} exists; pass --force to overwrite", p.display())));
        }
    }
    let result = run_ensemble(spec, args.workers)?;
    out.write(&to_json(&result))
}

/// `traj.csv` → `traj.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}
