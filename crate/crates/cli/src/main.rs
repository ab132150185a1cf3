//! `defect-bands`: spectra of periodic lattices with defects, from JSON
//! problem files to CSV and JSON reports.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use defect_bands::config::{ConfigDocument, ConfigError};
use defect_bands::model::validate;
use defect_bands::oracle::{self, Boundary};
use defect_bands::quadrature::node;
use defect_bands::spectrum::{
    bands, full_spectrum, membership, Branch, SpectralResult, SweepGrids, Verdict,
};
use defect_bands::{Error, ProblemSpec};

#[derive(Parser)]
#[command(
    name = "defect-bands",
    version,
    about = "Spectra of periodic lattices with embedded defects"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (output does not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args)]
struct Common {
    /// Problem description (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Write the main CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a JSON report instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Bc {
    Periodic,
    Open,
}

#[derive(Subcommand)]
enum Command {
    /// Check a problem file for structural violations.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Bulk dispersion ω(k) on a grid or along a path.
    Bands {
        #[command(flatten)]
        common: Common,
        /// Uniform grid points per axis.
        #[arg(long)]
        k_points: Option<usize>,
        /// Explicit wavevectors: components separated by ',' and points by ';'.
        #[arg(long, conflicts_with = "k_points", allow_hyphen_values = true)]
        k_path: Option<String>,
    },
    /// Decide whether one ω lies in the spectrum.
    Membership {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        omega: f64,
        #[arg(long)]
        k_points: Option<usize>,
    },
    /// Assemble the set of possible states over the ω window.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k_points: Option<usize>,
    },
    /// Diagonalize a finite box and compare with the engine.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Box half-width (open) or cells per axis (periodic).
        #[arg(long = "L")]
        l: usize,
        #[arg(long, value_enum, default_value = "open")]
        bc: Bc,
        /// Match tolerance for the comparison.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
}

/// Process exit codes.
const EXIT_DOMAIN: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }

    fn domain(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DOMAIN,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::domain(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        // A closed downstream pipe is a normal way for a reader to stop.
        if e.kind() == io::ErrorKind::BrokenPipe {
            return Self {
                code: 0,
                message: String::new(),
            };
        }
        Self::io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self::io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::io(e.to_string())
    }
}

type Outcome = Result<u8, Failure>;

/// Shortest round-trip representation (exponent form for very small or
/// large magnitudes); negative zero prints as `0.0`.
fn num(x: f64) -> String {
    format!("{:?}", if x == 0.0 { 0.0 } else { x })
}

fn load(path: &Path) -> Result<(ConfigDocument, ProblemSpec), Failure> {
    let doc = ConfigDocument::load(path).map_err(config_failure)?;
    let spec = doc.to_problem().map_err(config_failure)?;
    Ok((doc, spec))
}

fn config_failure(e: ConfigError) -> Failure {
    match e {
        ConfigError::Invalid(_) => Failure::domain(e.to_string()),
        _ => Failure::io(e.to_string()),
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => {
            Box::new(File::create(p).map_err(|e| Failure::io(format!("{}: {e}", p.display())))?)
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn grids_with(doc: &ConfigDocument, k_points: Option<usize>) -> Result<SweepGrids, Failure> {
    let mut g = doc.grids;
    if let Some(n) = k_points {
        if n < 4 || !n.is_power_of_two() {
            return Err(Failure::domain(format!(
                "--k-points must be a power of two >= 4, got {n}"
            )));
        }
        g.k_points = n;
    }
    Ok(g)
}

fn cmd_validate(common: &Common) -> Outcome {
    let mut out = io::stdout().lock();
    let doc = ConfigDocument::load(&common.config).map_err(config_failure)?;
    let spec = match doc.build() {
        Ok(s) => s,
        Err(ConfigError::Invalid(v)) => {
            if common.json {
                writeln!(out, "{}", json!({ "valid": false, "violations": v }))?;
            } else {
                for x in &v {
                    writeln!(out, "violation: {x}")?;
                }
            }
            return Ok(EXIT_DOMAIN);
        }
        Err(e) => return Err(config_failure(e)),
    };
    let report = validate(&spec);
    if common.json {
        writeln!(
            out,
            "{}",
            json!({
                "valid": report.is_ok(),
                "violations": report.violations,
                "symbols": report.symbols,
                "max_omega_power": report.max_omega_power,
            })
        )?;
    } else {
        for v in &report.violations {
            writeln!(out, "violation: {v}")?;
        }
        for s in &report.symbols {
            writeln!(
                out,
                "{}: hermitian family {}, max omega power {}",
                s.name, s.hermitian_family, s.max_omega_power
            )?;
        }
        writeln!(out, "{}", if report.is_ok() { "valid" } else { "invalid" })?;
    }
    Ok(if report.is_ok() { 0 } else { EXIT_DOMAIN })
}

fn parse_component(s: &str) -> Result<f64, Failure> {
    let t = s.trim();
    let pi = std::f64::consts::PI;
    match t {
        "pi" => Ok(pi),
        "-pi" => Ok(-pi),
        _ => t
            .parse()
            .map_err(|_| Failure::domain(format!("cannot read k component '{t}'"))),
    }
}

fn parse_path(text: &str, n: usize) -> Result<Vec<Vec<f64>>, Failure> {
    text.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let k = p
                .split(',')
                .map(parse_component)
                .collect::<Result<Vec<_>, _>>()?;
            if k.len() != n {
                return Err(Failure::domain(format!(
                    "k point '{p}' has {} components, expected {n}",
                    k.len()
                )));
            }
            Ok(k)
        })
        .collect()
}

fn uniform_grid(n_dim: usize, n: usize) -> Vec<Vec<f64>> {
    (0..n.pow(n_dim as u32))
        .map(|i| {
            let mut rest = i;
            let mut k = vec![0.0; n_dim];
            for d in (0..n_dim).rev() {
                k[d] = node(rest % n, n);
                rest /= n;
            }
            k
        })
        .collect()
}

fn cmd_bands(common: &Common, k_points: Option<usize>, k_path: &Option<String>) -> Outcome {
    let (doc, spec) = load(&common.config)?;
    let n = spec.dimension;
    let points = match k_path {
        Some(p) => parse_path(p, n)?,
        None => {
            let pts = k_points.unwrap_or(doc.grids.k_points);
            if pts == 0 {
                return Err(Failure::domain("--k-points must be positive"));
            }
            uniform_grid(n, pts)
        }
    };
    let values = points
        .iter()
        .map(|k| bands(&spec, k))
        .collect::<Result<Vec<_>, _>>()?;
    if common.json {
        let rows: Vec<_> = points
            .iter()
            .zip(&values)
            .map(|(k, w)| json!({ "k": k, "omega": w }))
            .collect();
        writeln!(sink(&common.out)?, "{}", json!({ "bands": rows }))?;
        return Ok(0);
    }
    let mut w = csv::Writer::from_writer(sink(&common.out)?);
    let mut header: Vec<String> = (1..=n).map(|i| format!("k_{i}")).collect();
    header.extend(["band_index".into(), "omega".into()]);
    w.write_record(&header)?;
    for (k, ws) in points.iter().zip(&values) {
        for (i, omega) in ws.iter().enumerate() {
            let mut row: Vec<String> = k.iter().copied().map(num).collect();
            row.push(i.to_string());
            row.push(num(*omega));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(0)
}

fn cmd_membership(common: &Common, omega: f64, k_points: Option<usize>) -> Outcome {
    let (doc, spec) = load(&common.config)?;
    let grids = grids_with(&doc, k_points)?;
    let cert = membership(&spec, omega, &grids)?;
    let mut out = sink(&common.out)?;
    if common.json {
        writeln!(out, "{}", serde_json::to_string(&cert)?)?;
    } else {
        let verdict = match (cert.verdict, cert.detected_at_step) {
            (Verdict::In, Some(j)) => format!("IN (step {j})"),
            (Verdict::In, None) => "IN".into(),
            (Verdict::Out, _) => "OUT".into(),
            (Verdict::Inconclusive, _) => "INCONCLUSIVE".into(),
        };
        writeln!(out, "{verdict}")?;
        writeln!(out, "omega: {}", num(cert.omega))?;
        if let Some(d) = cert.detection {
            writeln!(out, "detection: {d:?}")?;
        }
        let sig: Vec<String> = cert.min_sigma_per_level.iter().copied().map(num).collect();
        writeln!(out, "min sigma per level: {}", sig.join(", "))?;
        let wk: Vec<String> = cert.witness_k.iter().copied().map(num).collect();
        writeln!(out, "witness k: ({})", wk.join(", "))?;
        if let (Some(b), Verdict::Out) = (&cert.final_matrix, cert.verdict) {
            let n = spec.dimension;
            if b.dim() == 1 {
                let z = b[(0, 0)];
                writeln!(out, "B_{n} = {} + {}i", num(z.re), num(z.im))?;
            } else {
                let d = defect_bands::symbol::det(b);
                writeln!(out, "det B_{n} = {} + {}i", num(d.re), num(d.im))?;
            }
        }
        if let Some(note) = &cert.note {
            writeln!(out, "note: {note}")?;
        }
    }
    Ok(if cert.is_inconclusive() {
        EXIT_INCONCLUSIVE
    } else {
        0
    })
}

fn branch_path(out: &Path, codim: usize) -> PathBuf {
    let stem = out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("spectrum");
    out.with_file_name(format!("{stem}_branch_codim{codim}.csv"))
}

fn write_branch(path: &Path, branch: &Branch, n_dim: usize) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (branch.codim + 1..=n_dim)
        .map(|i| format!("k_{i}"))
        .collect();
    header.push("omega".into());
    w.write_record(&header)?;
    for (k, omega) in branch.samples() {
        let mut row: Vec<String> = k.iter().copied().map(num).collect();
        row.push(num(omega));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn spectrum_json(result: &SpectralResult) -> serde_json::Value {
    json!({
        "omega_window": result.omega_window,
        "components": result.components,
        "omega_set": result.omega_set(),
        "branches": result.branches.iter().map(|b| json!({
            "codim": b.codim,
            "samples": b.samples().map(|(k, w)| json!({ "k": k, "omega": w })).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "gaps": result.gaps,
    })
}

fn cmd_spectrum(common: &Common, k_points: Option<usize>) -> Outcome {
    let (doc, spec) = load(&common.config)?;
    let grids = grids_with(&doc, k_points)?;
    let result = full_spectrum(&spec, &grids)?;
    for g in &result.gaps {
        log::warn!(
            "inconclusive: codim {} at k = {:?}, omega in [{}, {}]: {}",
            g.codim,
            g.k,
            g.lo,
            g.hi,
            g.reason
        );
    }
    if common.json {
        writeln!(sink(&common.out)?, "{}", spectrum_json(&result))?;
    } else {
        let mut w = csv::Writer::from_writer(sink(&common.out)?);
        w.write_record(["kind", "codim", "omega_lo", "omega_hi"])?;
        for c in &result.components {
            w.write_record([
                c.kind.as_str().to_string(),
                c.codim.to_string(),
                num(c.lo),
                num(c.hi),
            ])?;
        }
        w.flush()?;
        if let Some(out) = &common.out {
            for b in &result.branches {
                write_branch(&branch_path(out, b.codim), b, spec.dimension)?;
            }
        }
    }
    Ok(0)
}

fn cmd_oracle(common: &Common, l: usize, bc: Bc, tol: f64) -> Outcome {
    let (doc, spec) = load(&common.config)?;
    let bc = match bc {
        Bc::Periodic => Boundary::Periodic,
        Bc::Open => Boundary::Open,
    };
    let op = oracle::assemble_truncated(&spec, l, bc)?;
    let spectrum = oracle::oracle_spectrum(&op)?;

    let mut report = json!({ "L": l, "bc": bc.to_string(), "dimension": op.dim() });
    let mut lines: Vec<String> = vec![format!("box: L = {l}, {bc}, dimension {}", op.dim())];
    let mut code = 0;
    if bc == Boundary::Periodic && spec.defects.is_empty() {
        let dev = oracle::periodic_box_check(&spec, l)?;
        report["periodic_box_deviation"] = json!(dev);
        lines.push(format!("periodic box max deviation: {}", num(dev)));
    } else if bc == Boundary::Open {
        let result = full_spectrum(&spec, &doc.grids)?;
        let cmp = oracle::compare_spectra(&result, &spectrum, tol);
        lines.push(format!(
            "max distance to Omega (non-edge): {}",
            num(cmp.max_distance)
        ));
        lines.push(format!("edge modes flagged: {}", cmp.edge_modes));
        for e in &cmp.outside {
            lines.push(format!("outside Omega: {}", num(*e)));
        }
        for m in &cmp.isolated {
            lines.push(format!(
                "isolated {}: nearest {}, difference {} {}",
                num(m.predicted),
                m.nearest.map_or("none".into(), num),
                num(m.difference),
                if m.matched { "ok" } else { "UNMATCHED" }
            ));
        }
        let points: Vec<f64> = result.isolated_points().collect();
        if !points.is_empty() && l >= 2 {
            let decay = oracle::decay_check(&spec, &points, l / 2, l)?;
            for d in &decay {
                lines.push(format!(
                    "decay {}: gap {} at L = {}, {} at L = {}",
                    num(d.predicted),
                    num(d.gap_small),
                    d.small_l,
                    num(d.gap_large),
                    d.large_l
                ));
            }
            report["decay"] = json!(decay);
        }
        if !cmp.passed() {
            code = EXIT_DOMAIN;
        }
        report["comparison"] = json!(cmp);
        report["passed"] = json!(cmp.passed());
    }
    if let Some(out) = &common.out {
        let mut w = csv::Writer::from_path(out)?;
        w.write_record(["index", "omega", "edge_mass"])?;
        for (i, (v, m)) in spectrum.values.iter().zip(&spectrum.edge_mass).enumerate() {
            w.write_record([i.to_string(), num(*v), num(*m)])?;
        }
        w.flush()?;
    } else if common.json {
        report["eigenvalues"] = json!(spectrum.values);
    }
    let mut stdout = io::stdout().lock();
    if common.json {
        writeln!(stdout, "{report}")?;
    } else {
        if common.out.is_none() {
            for v in &spectrum.values {
                lines.push(format!("eigenvalue {}", num(*v)));
            }
        }
        for line in lines {
            writeln!(stdout, "{line}")?;
        }
    }
    Ok(code)
}

fn run(cli: &Cli) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::domain("--threads must be at least 1"));
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::domain(e.to_string()))?;
        defect_bands::exec::set_parallel(n > 1);
    }
    match &cli.command {
        Command::Validate { common } => cmd_validate(common),
        Command::Bands {
            common,
            k_points,
            k_path,
        } => cmd_bands(common, *k_points, k_path),
        Command::Membership {
            common,
            omega,
            k_points,
        } => cmd_membership(common, *omega, *k_points),
        Command::Spectrum { common, k_points } => cmd_spectrum(common, *k_points),
        Command::Oracle { common, l, bc, tol } => cmd_oracle(common, *l, *bc, *tol),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DEFECT_BANDS_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) if f.code == 0 => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
