//! `hecke`: command-line front end for the transfer-operator computations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hecke_core::coding::{cached_length_spectrum, spectrum_cache_path};
use hecke_core::determinant::{
    compare_traces, describe_word, golden_min, trace_by_matrix, trace_by_words, TraceComparison,
};
use hecke_core::moebius::group_identity_deviations;
use hecke_core::moebius::hecke_generators;
use hecke_core::operator::{build_disk_system, write_binary_dump};
use hecke_core::period::{extend_from_fundamental, Interpolant};
use hecke_core::zeta::euler_product_from;
use hecke_core::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

mod complex;

use complex::parse_complex;

#[derive(Parser, Debug)]
#[command(name = "hecke", version, about = "Selberg zeta functions of Hecke triangle groups via transfer operators")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Global {
    /// Arithmetic for matrix products in the coding layer.
    #[arg(long, global = true, value_enum, default_value = "double")]
    precision: PrecisionArg,
    #[arg(long, global = true, value_enum, default_value = "json")]
    output: Output,
    /// Directory for cached length spectra.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Size of the worker pool; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for sampled checks.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PrecisionArg {
    Double,
    Dd,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Double => Precision::Double,
            PrecisionArg::Dd => Precision::DoubleDouble,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Output {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DetMode {
    Truncate,
    Hurwitz,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TraceMode {
    Words,
    Matrix,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SymArg {
    Full,
    Plus,
    Minus,
}

impl From<SymArg> for Symmetry {
    fn from(s: SymArg) -> Self {
        match s {
            SymArg::Full => Symmetry::Full,
            SymArg::Plus => Symmetry::Plus,
            SymArg::Minus => Symmetry::Minus,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ParityArg {
    Even,
    Odd,
}

impl From<ParityArg> for Parity {
    fn from(p: ParityArg) -> Self {
        match p {
            ParityArg::Even => Parity::Even,
            ParityArg::Odd => Parity::Odd,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generator matrices and the defining identities.
    Generators {
        #[arg(long)]
        q: u32,
    },
    /// Primitive length spectrum up to a length cutoff.
    Geodesics {
        #[arg(long)]
        q: u32,
        #[arg(long)]
        lmax: f64,
        /// Cache directory; overrides --cache-dir.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Tr L_s^n from regular words or from the Galerkin matrix.
    Trace {
        #[arg(long)]
        q: u32,
        #[arg(long)]
        n: usize,
        #[arg(long, value_parser = parse_complex)]
        s: Complex64,
        #[arg(long, value_enum, default_value = "both")]
        mode: TraceMode,
        #[arg(long, default_value_t = 24)]
        order: usize,
        /// Largest parabolic exponent summed term by term.
        #[arg(long, default_value_t = 400)]
        cap: u32,
    },
    /// Fredholm determinant det(1 - L_s).
    Det {
        #[arg(long)]
        q: u32,
        #[arg(long, value_parser = parse_complex)]
        s: Complex64,
        #[arg(long, default_value_t = 24)]
        order: usize,
        #[arg(long, value_enum, default_value = "hurwitz")]
        mode: DetMode,
        #[arg(long, value_enum, default_value = "full")]
        symmetry: SymArg,
        /// Direct terms in truncate mode.
        #[arg(long, default_value_t = 200)]
        n_tail: usize,
        /// Richardson levels in truncate mode.
        #[arg(long, default_value_t = 5)]
        extrapolation: usize,
        /// Also write the matrix as a binary dump.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Euler product of the Selberg zeta function with its tail bound.
    Zeta {
        #[arg(long)]
        q: u32,
        #[arg(long, value_parser = parse_complex)]
        s: Complex64,
        #[arg(long)]
        lmax: f64,
        /// Number of k factors; chosen automatically if omitted.
        #[arg(long)]
        kmax: Option<usize>,
    },
    /// Zeros of det(1 - L_s) on the critical line.
    Zeros {
        #[arg(long)]
        q: u32,
        #[arg(long, value_enum, default_value = "full")]
        symmetry: SymArg,
        #[arg(long)]
        tmin: f64,
        #[arg(long)]
        tmax: f64,
        #[arg(long, default_value_t = 0.02)]
        tstep: f64,
        #[arg(long, default_value_t = 24)]
        order: usize,
    },
    /// Runs the invariant suite; exits non-zero if any check fails.
    Verify {
        #[arg(long)]
        q: u32,
    },
    /// Eigenfunction of L_s at s = 1/2 + i t, exported as JSON.
    Eigfun {
        #[arg(long)]
        q: u32,
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value = "minus")]
        symmetry: SymArg,
        #[arg(long, default_value_t = 24)]
        order: usize,
        /// Refine t to the nearest minimum of |det| within this distance first.
        #[arg(long)]
        refine: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extends samples on [1, 1 + lambda] by the functional equation.
    Extend {
        #[arg(long)]
        q: u32,
        #[arg(long, value_parser = parse_complex)]
        s: Complex64,
        /// JSON file `{"parity": "odd", "samples": [[t, re, im], ...]}`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        steps: usize,
        /// Output points on the extended interval.
        #[arg(long, default_value_t = 50)]
        points: usize,
    },
}

#[derive(Deserialize)]
struct ExtendInput {
    parity: ParityArg,
    samples: Vec<[f64; 3]>,
}

impl<'de> Deserialize<'de> for ParityArg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ParityArg::from_str(&s, true).map_err(serde::de::Error::custom)
    }
}

/// Stdout payload: provenance header plus a result, or a table for CSV.
struct Report {
    provenance: Value,
    result: Value,
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    /// Extra CSV comment lines after the provenance.
    notes: Vec<String>,
}

impl Report {
    fn new(provenance: Value, result: Value) -> Self {
        Report { provenance, result, columns: Vec::new(), rows: Vec::new(), notes: Vec::new() }
    }

    fn table(mut self, columns: Vec<&'static str>, rows: Vec<Vec<String>>) -> Self {
        self.columns = columns;
        self.rows = rows;
        self
    }

    fn write(&self, out: Output, w: &mut impl Write) -> std::io::Result<()> {
        match out {
            Output::Json => {
                let doc = json!({ "provenance": self.provenance, "result": self.result });
                serde_json::to_writer_pretty(&mut *w, &doc)?;
                writeln!(w)
            }
            Output::Csv => {
                if let Value::Object(map) = &self.provenance {
                    for (k, v) in map {
                        writeln!(w, "# {k} = {v}")?;
                    }
                }
                for n in &self.notes {
                    writeln!(w, "# {n}")?;
                }
                writeln!(w, "{}", self.columns.join(","))?;
                for r in &self.rows {
                    writeln!(w, "{}", r.join(","))?;
                }
                Ok(())
            }
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn cplx(z: Complex64) -> Value {
    json!([z.re, z.im])
}

fn c_param(q: u32, order: usize) -> Result<f64> {
    let cfg = OperatorConfig::new(order);
    Ok(build_disk_system(q, cfg.c_init, cfg.points())?.c_param)
}

fn generators(q: u32) -> Result<Report> {
    let gens = hecke_generators(q)?;
    let mut named = vec![("T".to_string(), gens.t.clone()), ("S".to_string(), gens.s.clone()), ("U".to_string(), gens.u.clone())];
    named.extend(gens.g.iter().enumerate().map(|(i, g)| (format!("g_{}", i + 1), g.clone())));
    let identities = group_identity_deviations(q)?;
    let result = json!({
        "generators": named.iter().map(|(n, g)| json!({ "name": n, "matrix": [[g.a, g.b], [g.c, g.d]] })).collect::<Vec<_>>(),
        "identities": identities.iter().map(|(n, d)| json!({ "identity": n, "deviation": d })).collect::<Vec<_>>(),
    });
    let rows = named.iter().map(|(n, g)| vec![n.clone(), num(g.a), num(g.b), num(g.c), num(g.d)]).collect();
    let mut rep = Report::new(json!({ "q": q, "lambda": gens.lambda }), result).table(vec!["name", "a", "b", "c", "d"], rows);
    rep.notes = identities.iter().map(|(n, d)| format!("identity {n}: deviation {d:e}")).collect();
    Ok(rep)
}

fn geodesics(q: u32, lmax: f64, precision: Precision, cache: Option<&Path>) -> Result<Report> {
    let entries = cached_length_spectrum(q, lmax, precision, cache)?;
    let mut prov = json!({ "q": q, "lmax": lmax, "precision": precision, "count": entries.len() });
    if let Some(dir) = cache {
        prov["cache_file"] = json!(spectrum_cache_path(dir, q, lmax, precision));
    }
    let rows = entries
        .iter()
        .map(|e| vec![num(e.length), num(e.trace), e.primitive.to_string(), describe_word(&e.word)])
        .collect();
    Ok(Report::new(prov, serde_json::to_value(&entries)?).table(vec!["length", "trace", "primitive", "word"], rows))
}

fn trace(q: u32, n: usize, s: Complex64, mode: TraceMode, order: usize, cap: u32) -> Result<Report> {
    let policy = CutoffPolicy { cap, ..CutoffPolicy::default() };
    let mut prov = json!({ "q": q, "n": n, "s": cplx(s), "mode": format!("{mode:?}").to_lowercase() });
    let (result, rows) = match mode {
        TraceMode::Words => {
            let w = trace_by_words(q, n, s, &policy)?;
            prov["cap"] = json!(cap);
            let rows = vec![vec!["words".into(), num(w.value.re), num(w.value.im), num(w.error_bound)]];
            (serde_json::to_value(w)?, rows)
        }
        TraceMode::Matrix => {
            let v = trace_by_matrix(q, n, s, order)?;
            prov["M"] = json!(order);
            prov["c_param"] = json!(c_param(q, order)?);
            (json!({ "value": cplx(v) }), vec![vec!["matrix".into(), num(v.re), num(v.im), String::new()]])
        }
        TraceMode::Both => {
            let cmp: TraceComparison = compare_traces(q, n, s, order, &policy)?;
            prov["M"] = json!(order);
            prov["cap"] = json!(cap);
            prov["c_param"] = json!(c_param(q, order)?);
            let rows = vec![
                vec!["matrix".into(), num(cmp.by_matrix.re), num(cmp.by_matrix.im), num(cmp.matrix_estimate)],
                vec!["words".into(), num(cmp.by_words.re), num(cmp.by_words.im), num(cmp.word_bound)],
            ];
            let result = json!({
                "by_matrix": cplx(cmp.by_matrix),
                "by_words": cplx(cmp.by_words),
                "matrix_estimate": cmp.matrix_estimate,
                "word_bound": cmp.word_bound,
                "difference": cmp.difference(),
                "combined_bound": cmp.combined_bound(),
                "consistent": cmp.consistent(),
            });
            (result, rows)
        }
    };
    Ok(Report::new(prov, result).table(vec!["method", "re", "im", "error"], rows))
}

#[allow(clippy::too_many_arguments)]
fn det(
    q: u32,
    s: Complex64,
    order: usize,
    mode: DetMode,
    symmetry: Symmetry,
    n_tail: usize,
    extrapolation: usize,
    dump: Option<&Path>,
) -> Result<Report> {
    let mode = match mode {
        DetMode::Hurwitz => TailMode::default(),
        DetMode::Truncate => TailMode::Truncate { n_tail, extrapolation },
    };
    let cfg = OperatorConfig::new(order).with_mode(mode);
    let op = assemble(q, s, symmetry, &cfg)?;
    let d = fredholm_det(&op);
    if !(d.re.is_finite() && d.im.is_finite()) {
        return Err(Error::Evaluation(format!("non-finite determinant at s = {s}")));
    }
    if let Some(path) = dump {
        write_binary_dump(&op, BufWriter::new(File::create(path)?))?;
    }
    let prov = json!({
        "q": q,
        "s": cplx(s),
        "M": order,
        "mode": mode,
        "symmetry": symmetry,
        "c_param": c_param(q, order)?,
        "quadrature_points": cfg.points(),
        "tail_bound": op.tail_bound,
    });
    let rows = vec![vec![num(s.re), num(s.im), num(d.re), num(d.im), num(d.norm())]];
    Ok(Report::new(prov, json!({ "det": cplx(d), "abs": d.norm() })).table(vec!["re_s", "im_s", "re_det", "im_det", "abs_det"], rows))
}

fn zeta(q: u32, s: Complex64, lmax: f64, kmax: Option<usize>, precision: Precision, cache: Option<&Path>) -> Result<Report> {
    let entries = cached_length_spectrum(q, lmax, precision, cache)?;
    let e = euler_product_from(&entries, s, lmax, kmax)?;
    let prov = json!({
        "q": q,
        "s": cplx(s),
        "lmax": lmax,
        "k_max": e.k_max,
        "entries": e.entries,
        "precision": precision,
        "tail_bound": e.tail_bound,
        "growth_fit": [e.growth.0, e.growth.1],
    });
    let rows = vec![vec![num(s.re), num(s.im), num(e.value.re), num(e.value.im), num(e.tail_bound)]];
    Ok(Report::new(prov, json!({ "value": cplx(e.value), "relative_tail_bound": e.tail_bound }))
        .table(vec!["re_s", "im_s", "re_z", "im_z", "tail_bound"], rows))
}

fn zeros(q: u32, symmetry: Symmetry, cfg: ScanConfig, order: usize) -> Result<Report> {
    let op = OperatorConfig::new(order);
    let scan = scan_zeros(q, symmetry, &cfg, &op)?;
    let prov = json!({
        "q": q,
        "symmetry": symmetry,
        "M": order,
        "mode": op.mode,
        "c_param": c_param(q, order)?,
        "t_min": cfg.t_min,
        "t_max": cfg.t_max,
        "t_step": cfg.t_step,
        "median_abs_det": scan.median_abs_det,
    });
    let rows = scan
        .grid
        .iter()
        .map(|g| vec![num(g.t), num(g.det.re), num(g.det.im), num(g.det.norm())])
        .collect();
    let mut rep = Report::new(prov, json!({ "zeros": scan.zeros, "rejected": scan.rejected }))
        .table(vec!["t", "re_det", "im_det", "abs_det"], rows);
    for z in &scan.zeros {
        rep.notes.push(format!("zero {}", serde_json::to_string(z)?));
    }
    Ok(rep)
}

fn verify_cmd(q: u32, seed: u64) -> Result<(Report, bool)> {
    let report = verify(q, seed)?;
    let ok = report.passed();
    let rows = report
        .checks
        .iter()
        .map(|c| vec![format!("\"{}\"", c.name), num(c.value), num(c.tolerance), c.passed.to_string()])
        .collect();
    let prov = json!({ "q": q, "seed": seed, "M": 24, "c_param": c_param(q, 24)?, "passed": ok });
    Ok((Report::new(prov, serde_json::to_value(&report.checks)?).table(vec!["check", "value", "tolerance", "passed"], rows), ok))
}

fn eigfun(q: u32, t: f64, symmetry: Symmetry, order: usize, refine: Option<f64>, out: &Path) -> Result<Report> {
    let cfg = OperatorConfig::new(order);
    let t = match refine {
        Some(h) => golden_min(|x| det_at(q, Complex64::new(0.5, x), symmetry, &cfg).map(|d| d.norm()), t - h, t + h, 1e-12)?.0,
        None => t,
    };
    let fe = extract_eigenfunction(q, Complex64::new(0.5, t), symmetry, &cfg)?;
    let export = fe.export();
    let mut w = BufWriter::new(File::create(out)?);
    serde_json::to_writer_pretty(&mut w, &export)?;
    w.flush()?;
    let prov = json!({ "q": q, "t": t, "symmetry": symmetry, "M": order, "mode": cfg.mode, "c_param": c_param(q, order)? });
    let result = json!({
        "file": out,
        "residual": fe.residual,
        "decay_rho": fe.decay_rho,
        "isolation": fe.isolation,
        "multiplicity_warning": fe.multiplicity_warning,
    });
    let rows = vec![vec![num(t), num(fe.residual), num(fe.decay_rho), num(fe.isolation)]];
    Ok(Report::new(prov, result).table(vec!["t", "residual", "decay_rho", "isolation"], rows))
}

fn extend(q: u32, s: Complex64, input: &Path, steps: usize, points: usize) -> Result<Report> {
    let data: ExtendInput = serde_json::from_reader(File::open(input)?)?;
    let (nodes, values): (Vec<f64>, Vec<Complex64>) = data.samples.iter().map(|r| (r[0], Complex64::new(r[1], r[2]))).unzip();
    let interp = Interpolant::new(nodes, values)?;
    let parity: Parity = data.parity.into();
    let ext = extend_from_fundamental(q, s, parity, &interp, steps)?;
    let hi = ext.upper();
    let pts: Vec<f64> = (0..points).map(|i| 1.0 + (hi - 1.0) * i as f64 / (points.max(2) - 1) as f64).collect();
    let vals = ext.sample(&pts)?;
    let prov = json!({ "q": q, "s": cplx(s), "parity": parity, "steps": steps, "interval": [1.0, hi], "input_samples": data.samples.len() });
    let rows = pts.iter().zip(&vals).map(|(t, v)| vec![num(*t), num(v.re), num(v.im)]).collect();
    let result = json!(pts.iter().zip(&vals).map(|(t, v)| json!({ "t": t, "value": cplx(*v) })).collect::<Vec<_>>());
    Ok(Report::new(prov, result).table(vec!["t", "re", "im"], rows))
}

fn run(cli: Cli) -> Result<(Report, bool)> {
    let g = &cli.global;
    let precision: Precision = g.precision.into();
    let cache = g.cache_dir.as_deref();
    let report = match cli.command {
        Command::Generators { q } => generators(q)?,
        Command::Geodesics { q, lmax, ref cache } => geodesics(q, lmax, precision, cache.as_deref().or(g.cache_dir.as_deref()))?,
        Command::Trace { q, n, s, mode, order, cap } => trace(q, n, s, mode, order, cap)?,
        Command::Det { q, s, order, mode, symmetry, n_tail, extrapolation, ref dump } => {
            det(q, s, order, mode, symmetry.into(), n_tail, extrapolation, dump.as_deref())?
        }
        Command::Zeta { q, s, lmax, kmax } => zeta(q, s, lmax, kmax, precision, cache)?,
        Command::Zeros { q, symmetry, tmin, tmax, tstep, order } => {
            let cfg = ScanConfig { t_min: tmin, t_max: tmax, t_step: tstep, ..ScanConfig::default() };
            zeros(q, symmetry.into(), cfg, order)?
        }
        Command::Verify { q } => return verify_cmd(q, g.seed),
        Command::Eigfun { q, t, symmetry, order, refine, ref out } => eigfun(q, t, symmetry.into(), order, refine, out)?,
        Command::Extend { q, s, ref input, steps, points } => extend(q, s, input, steps, points)?,
    };
    Ok((report, true))
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    kind: &'a str,
    message: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let output = cli.global.output;
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", json!({ "error": { "kind": "threads", "message": e.to_string() } }));
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok((report, ok)) => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            if report.write(output, &mut lock).and_then(|_| lock.flush()).is_err() {
                return ExitCode::from(1);
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            let err = ErrorReport { kind: e.kind(), message: e.to_string() };
            eprintln!("{}", json!({ "error": err }));
            ExitCode::from(1)
        }
    }
}
