//! Command-line interface: eigenbases, Gram matrices, dispersion scans,
//! resonance solves, asymptotics, forced fields and the verification suite.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use slabres::asymptotics;
use slabres::config::{fmt_f64, CsvTable, ResultDocument, RunConfig};
use slabres::error::SlabError;
use slabres::field;
use slabres::geometry::{EigenBasis, HoleShape};
use slabres::gram::SingleGram;
use slabres::matching::{truncation_report, Assembly, Parity};
use slabres::solver;
use slabres::verify;

#[derive(Parser)]
#[command(
    name = "slabres",
    version,
    about = "Resonances and field enhancement of a sound-hard slab with subwavelength cylindrical holes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Override the hole scale h.
    #[arg(long)]
    h: Option<f64>,
    /// Override the mode truncation M.
    #[arg(long)]
    modes: Option<usize>,
    /// Override the quadrature order.
    #[arg(long)]
    quad_order: Option<usize>,
    /// Override the singular-quadrature tolerance.
    #[arg(long)]
    tol_quad: Option<f64>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, SlabError> {
        let mut cfg = RunConfig::from_file(&self.config)?;
        if let Some(h) = self.h {
            cfg.h = h;
        }
        if let Some(m) = self.modes {
            cfg.modes = m;
        }
        if let Some(q) = self.quad_order {
            cfg.quad_order = Some(q);
        }
        if let Some(t) = self.tol_quad {
            cfg.tol_quad = Some(t);
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        cfg.validate()?;
        init_threads(&cfg);
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Write the full result document as JSON.
    #[arg(long, value_name = "FILE")]
    json_out: Option<PathBuf>,
    /// Write the tabular payload as CSV.
    #[arg(long, value_name = "FILE")]
    csv_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build an eigenbasis and report eigenvalues and orthonormality.
    Eigen {
        /// square, disk, or a custom-shape JSON file.
        #[arg(long, default_value = "square")]
        shape: String,
        #[arg(long, default_value_t = 20)]
        modes: usize,
        #[arg(long)]
        quad_order: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Assemble the static Gram matrix s0 (plus a sample d(eps)).
    Gram {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Evaluate d(eps) at this eps (format: re[,im]).
        #[arg(long, allow_hyphen_values = true)]
        eps: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Evaluate det(reduced) over a complex-k grid (CSV for contour plots).
    Det {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "even")]
        parity: String,
        #[arg(long)]
        re_min: f64,
        #[arg(long)]
        re_max: f64,
        #[arg(long, default_value_t = 81)]
        re_steps: usize,
        #[arg(long, allow_hyphen_values = true)]
        im_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        im_max: f64,
        #[arg(long, default_value_t = 41)]
        im_steps: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Locate resonances near the requested Fabry-Perot modes.
    Solve {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Per-parity mode range, e.g. 1..2 or a single integer.
        #[arg(long, default_value = "1..1")]
        m_range: String,
        /// even, odd or both.
        #[arg(long, default_value = "both")]
        parity: String,
        /// Alias of --json-out.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[command(flatten)]
        outputs: OutArgs,
    },
    /// Shape constants and closed-form resonance predictions.
    Asym {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "1..2")]
        m_range: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Forced solve at a real frequency; field samples and enhancement sweeps.
    Field {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Drive frequency (defaults to the resonance selected by --fp).
        #[arg(long)]
        k0: Option<f64>,
        /// even or odd half-problem.
        #[arg(long, default_value = "odd")]
        parity: String,
        /// Evaluation points x1,x2,x3 (repeatable).
        #[arg(long = "at", value_name = "X1,X2,X3", allow_hyphen_values = true)]
        at: Vec<String>,
        /// Emit |u| at this many points along the first hole axis.
        #[arg(long)]
        profile_axis: Option<usize>,
        /// Run the enhancement sweep over these h values.
        #[arg(long, value_name = "H1,H2,...")]
        enhancement_sweep: Option<String>,
        /// Fabry-Perot index for the enhancement sweep / default k0.
        #[arg(long, default_value_t = 2)]
        fp: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Direct-vs-asymptotic resonance sweep over hole scales (CSV).
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "H1,H2,...")]
        h_values: String,
        #[arg(long, default_value = "1..1")]
        m_range: String,
        #[arg(long, default_value = "both")]
        parity: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Truncation self-convergence report.
    Truncation {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Ascending truncations, e.g. 5,10,20.
        #[arg(long, value_name = "M1,M2,...")]
        m_list: String,
        /// Real part of the probe frequency.
        #[arg(long)]
        k_re: f64,
        /// Imaginary part of the probe frequency.
        #[arg(long, default_value_t = -0.01, allow_hyphen_values = true)]
        k_im: f64,
        #[arg(long, default_value = "even")]
        parity: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the invariant suite; exit 0 iff every check passes.
    Verify {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn init_threads(cfg: &RunConfig) {
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.thread_count())
        .build_global();
}

fn parse_parity(s: &str) -> Result<Vec<Parity>, SlabError> {
    match s {
        "even" => Ok(vec![Parity::Even]),
        "odd" => Ok(vec![Parity::Odd]),
        "both" => Ok(vec![Parity::Even, Parity::Odd]),
        other => Err(SlabError::Config(format!(
            "parity must be even, odd or both (got '{other}')"
        ))),
    }
}

fn parse_m_range(s: &str) -> Result<std::ops::RangeInclusive<usize>, SlabError> {
    if let Some((a, b)) = s.split_once("..") {
        let lo: usize = a
            .parse()
            .map_err(|_| SlabError::Config(format!("bad m-range '{s}'")))?;
        let hi: usize = b
            .trim_start_matches('=')
            .parse()
            .map_err(|_| SlabError::Config(format!("bad m-range '{s}'")))?;
        Ok(lo..=hi)
    } else {
        let v: usize = s
            .parse()
            .map_err(|_| SlabError::Config(format!("bad m-range '{s}'")))?;
        Ok(v..=v)
    }
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, SlabError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| SlabError::Config(format!("bad number '{t}'")))
        })
        .collect()
}

fn write_outputs<T: serde::Serialize>(
    doc: &ResultDocument<T>,
    csv: Option<&CsvTable>,
    out: &OutArgs,
) -> Result<(), SlabError> {
    if let Some(path) = &out.json_out {
        std::fs::write(path, doc.to_json()?)?;
    }
    if let (Some(path), Some(table)) = (&out.csv_out, csv) {
        table.write(path)?;
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, SlabError> {
    match cli.command {
        Command::Eigen {
            shape,
            modes,
            quad_order,
            out,
        } => cmd_eigen(&shape, modes, quad_order, &out),
        Command::Gram { cfg, eps, out } => cmd_gram(&cfg, eps.as_deref(), &out),
        Command::Det {
            cfg,
            parity,
            re_min,
            re_max,
            re_steps,
            im_min,
            im_max,
            im_steps,
            out,
        } => cmd_det(
            &cfg, &parity, re_min, re_max, re_steps, im_min, im_max, im_steps, &out,
        ),
        Command::Solve {
            cfg,
            m_range,
            parity,
            out: out_alias,
            mut outputs,
        } => {
            if outputs.json_out.is_none() {
                outputs.json_out = out_alias;
            }
            cmd_solve(&cfg, &m_range, &parity, &outputs)
        }
        Command::Asym { cfg, m_range, out } => cmd_asym(&cfg, &m_range, &out),
        Command::Field {
            cfg,
            k0,
            parity,
            at,
            profile_axis,
            enhancement_sweep,
            fp,
            out,
        } => cmd_field(
            &cfg,
            k0,
            &parity,
            &at,
            profile_axis,
            enhancement_sweep.as_deref(),
            fp,
            &out,
        ),
        Command::Sweep {
            cfg,
            h_values,
            m_range,
            parity,
            out,
        } => cmd_sweep(&cfg, &h_values, &m_range, &parity, &out),
        Command::Truncation {
            cfg,
            m_list,
            k_re,
            k_im,
            parity,
            out,
        } => cmd_truncation(&cfg, &m_list, k_re, k_im, &parity, &out),
        Command::Verify { cfg, out } => cmd_verify(&cfg, &out),
    }
}

fn shape_from_name(name: &str) -> Result<HoleShape, SlabError> {
    match name {
        "square" => Ok(HoleShape::UnitSquare),
        "disk" | "circle" => Ok(HoleShape::UnitDisk),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                SlabError::Config(format!(
                    "shape must be square, disk or a readable custom file: {e}"
                ))
            })?;
            slabres::geometry::load_custom_shape(&text)
        }
    }
}

fn cmd_eigen(
    shape: &str,
    modes: usize,
    quad_order: Option<usize>,
    out: &OutArgs,
) -> Result<i32, SlabError> {
    let start = Instant::now();
    let shape = shape_from_name(shape)?;
    let basis = match quad_order {
        Some(q) => EigenBasis::build_with_order(&shape, modes, q)?,
        None => EigenBasis::build(&shape, modes)?,
    };
    #[derive(serde::Serialize)]
    struct Payload {
        eigenvalues: Vec<f64>,
        orthonormality_defect: f64,
    }
    let payload = Payload {
        eigenvalues: basis.eigenvalues().to_vec(),
        orthonormality_defect: basis.orthonormality_defect(),
    };
    println!(
        "modes: {}  lambda_1: {:.9}  lambda_M: {:.9}  orthonormality defect: {:.3e}",
        modes,
        payload.eigenvalues.get(1).copied().unwrap_or(0.0),
        payload.eigenvalues.last().copied().unwrap_or(0.0),
        payload.orthonormality_defect
    );
    let mut table = CsvTable::new(&["mode", "eigenvalue"]);
    for (m, l) in payload.eigenvalues.iter().enumerate() {
        table.push(vec![m.to_string(), fmt_f64(*l)]);
    }
    // eigen runs without a user config; wrap a minimal synthetic one
    let cfg = RunConfig::from_json(&format!(
        r#"{{"l": 1.0, "h": 0.01, "holes": [{{"center": [0.0, 0.0], "shape": "square"}}], "modes": {modes}}}"#
    ))?;
    let doc = ResultDocument::new(&cfg, 0, payload, start.elapsed().as_secs_f64());
    write_outputs(&doc, Some(&table), out)?;
    Ok(0)
}

fn cmd_gram(cfg: &ConfigArgs, eps: Option<&str>, out: &OutArgs) -> Result<i32, SlabError> {
    let start = Instant::now();
    let config = cfg.load()?;
    let slab = config.to_slab_config()?;
    let opts = config.s0_options();
    let basis = Arc::new(EigenBasis::build_with_order(
        &slab.holes[0].1,
        slab.truncation,
        config
            .quad_order
            .unwrap_or(slabres::geometry::DEFAULT_BASIS_ORDER),
    )?);
    let gram = SingleGram::get(&basis, &opts)?;
    let eps_c = match eps {
        Some(text) => {
            let parts = parse_f64_list(text)?;
            Complex64::new(parts[0], parts.get(1).copied().unwrap_or(0.0))
        }
        None => Complex64::new(0.05, 0.0),
    };
    let d = gram.d(eps_c)?;
    #[derive(serde::Serialize)]
    struct Payload {
        s0: Vec<Vec<f64>>,
        s0_error_estimate: Option<f64>,
        content_hash: String,
        eps: (f64, f64),
        d_eps: Vec<Vec<(f64, f64)>>,
    }
    let m1 = gram.s0().nrows();
    let payload = Payload {
        s0: (0..m1)
            .map(|a| (0..m1).map(|b| gram.s0()[(a, b)]).collect())
            .collect(),
        s0_error_estimate: gram.s0_error_estimate(),
        content_hash: format!("{:016x}", gram.content_hash()),
        eps: (eps_c.re, eps_c.im),
        d_eps: (0..m1)
            .map(|a| (0..m1).map(|b| (d[(a, b)].re, d[(a, b)].im)).collect())
            .collect(),
    };
    println!(
        "s0(0,0) = {:.9}  error estimate: {:?}  cache hash: {}",
        gram.s0()[(0, 0)],
        gram.s0_error_estimate(),
        payload.content_hash
    );
    let mut table = CsvTable::new(&["row", "col", "s0", "d_re", "d_im"]);
    for a in 0..m1 {
        for b in 0..m1 {
            table.push(vec![
                a.to_string(),
                b.to_string(),
                fmt_f64(gram.s0()[(a, b)]),
                fmt_f64(d[(a, b)].re),
                fmt_f64(d[(a, b)].im),
            ]);
        }
    }
    let doc = ResultDocument::new(
        &config,
        gram.content_hash(),
        payload,
        start.elapsed().as_secs_f64(),
    );
    write_outputs(&doc, Some(&table), out)?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_det(
    cfg: &ConfigArgs,
    parity: &str,
    re_min: f64,
    re_max: f64,
    re_steps: usize,
    im_min: f64,
    im_max: f64,
    im_steps: usize,
    out: &OutArgs,
) -> Result<i32, SlabError> {
    let start = Instant::now();
    let config = cfg.load()?;
    let slab = config.to_slab_config()?;
    let opts = config.s0_options();
    let assembly = Assembly::new(slab, &opts)?;
    let p = parse_parity(parity)?[0];
    let mut table = CsvTable::new(&["re_k", "im_k", "abs_det", "log10_sigma_min"]);
    let mut rows = Vec::new();
    for i in 0..re_steps {
        let re = re_min + (re_max - re_min) * i as f64 / (re_steps.max(2) - 1) as f64;
        for j in 0..im_steps {
            let im = im_min + (im_max - im_min) * j as f64 / (im_steps.max(2) - 1) as f64;
            let k = Complex64::new(re, im);
            let sys = assembly.dispersion(k, p)?;
            let det = slabres::linalg::det(&sys.reduced).norm();
            let smin = slabres::linalg::sigma_min(&sys.reduced);
            table.push(vec![
                fmt_f64(re),
                fmt_f64(im),
                fmt_f64(det),
                fmt_f64(smin.log10()),
            ]);
            rows.push((re, im, det, smin.log10()));
        }
    }
    println!("evaluated {} grid points", rows.len());
    let doc = ResultDocument::new(
        &config,
        assembly.grams.content_hash(),
        rows,
        start.elapsed().as_secs_f64(),
    );
    write_outputs(&doc, Some(&table), out)?;
    Ok(0)
}

fn cmd_solve(
    cfg: &ConfigArgs,
    m_range: &str,
    parity: &str,
    out: &OutArgs,
) -> Result<i32, SlabError> {
    let start = Instant::now();
    let config = cfg.load()?;
    let slab = config.to_slab_config()?;
    let opts = config.s0_options();
    let assembly = Assembly::new(slab, &opts)?;
    let constants = asymptotics::shape_constants_for(&assembly, &opts)?;
    let parities = parse_parity(parity)?;
    let range = parse_m_range(m_range)?;
    let mut resonances = Vec::new();
    for &p in &parities {
        for m in range.clone() {
            let found = solver::find_resonances_near(&assembly, p, m, Some(&constants))?;
            resonances.extend(found);
        }
    }
    for r in &resonances {
        println!(
            "{} fp={} branch {}: k = {:.12} {:+.6e} i   Q = {:.4e}  residual {:.2e}",
            r.parity, r.fp_index, r.branch, r.k.re, r.k.im, r.q, r.residual
        );
    }
    let mut table = CsvTable::new(&[
        "parity", "fp_index", "branch", "re_k", "im_k", "q", "residual",
    ]);
    for r in &resonances {
        table.push(vec![
            r.parity.to_string(),
            r.fp_index.to_string(),
            r.branch.to_string(),
            fmt_f64(r.k.re),
            fmt_f64(r.k.im),
            fmt_f64(r.q),
            fmt_f64(r.residual),
        ]);
    }
    let doc = ResultDocument::new(
        &config,
        assembly.grams.content_hash(),
        resonances,
        start.elapsed().as_secs_f64(),
    );
    write_outputs(&doc, Some(&table), out)?;
    Ok(0)
}

fn cmd_asym(cfg: &ConfigArgs, m_range: &str, out: &OutArgs) -> Result<i32, SlabError> {
    let start = Instant::now();
    let config = cfg.load()?;
    let slab = config.to_slab_config()?;
    let opts = config.s0_options();
    let assembly = Assembly::new(slab.clone(), &opts)?;
    let constants = asymptotics::shape_constants_for(&assembly, &opts)?;
    let range = parse_m_range(m_range)?;
    let centers: Vec<[f64; 2]> = slab.holes.iter().map(|(c, _)| *c).collect();

    #[derive(serde::Serialize)]
    struct Prediction {
        fp_index: usize,
        parity: String,
        values: Vec<(f64, f64)>,
        q_of_prediction: Vec<f64>,
    }
    #[derive(serde::Serialize)]
    struct Payload {
        constants: Vec<asymptotics::ShapeConstants>,
        q_leading_single: Vec<(usize, f64)>,
        predictions: Vec<Prediction>,
    }

    let mut predictions = Vec::new();
    let mut q_leading_single = Vec::new();
    for parity in [Parity::Even, Parity::Odd] {
        for m in range.clone() {
            let fp = parity.fp_index(m);
            let pred = asymptotics::multi_hole_asymptotic(
                &constants,
                &centers,
                slab.thickness,
                slab.h,
                fp,
            )?;
            let q: Vec<f64> = pred
                .values
                .iter()
                .map(|k| solver::quality_factor(*k).unwrap_or(f64::NAN))
                .collect();
            q_leading_single.push((fp, asymptotics::q_leading(fp, slab.h, None)?));
            predictions.push(Prediction {
                fp_index: fp,
                parity: parity.to_string(),
                values: pred.values.iter().map(|k| (k.re, k.im)).collect(),
                q_of_prediction: q,
            });
        }
    }
    for c in &constants {
        println!(
            "shape constants: (S0 1,1) = {:.9}, alpha = {:.9} (Cauchy {:.2e} at M = {})",
            c.s0_one_one, c.alpha, c.alpha_convergence, c.m_used
        );
    }
    for p in &predictions {
        println!("{} fp={}: {:?}", p.parity, p.fp_index, p.values);
    }
    let payload = Payload {
        constants,
        q_leading_single,
        predictions,
    };
    let doc = ResultDocument::new(
        &config,
        assembly.grams.content_hash(),
        payload,
        start.elapsed().as_secs_f64(),
    );
    write_outputs(&doc, None, out)?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_field(
    cfg: &ConfigArgs,
    k0: Option<f64>,
    parity: &str,
    at: &[String],
    profile_axis: Option<usize>,
    enhancement_sweep: Option<&str>,
    fp: usize,
    out: &OutArgs,
) -> Result<i32, SlabError> {
    let start = Instant::now();
    let config = cfg.load()?;
    let slab = config.to_slab_config()?;
    let opts = config.s0_options();

    #[derive(serde::Serialize)]
    struct Payload {
        k0: f64,
        parity: String,
        b0: Vec<(f64, f64)>,
        a_norms: Vec<f64>,
        residual: f64,
        samples: Vec<([f64; 3], f64, f64)>,
        enhancement: Option<field::EnhancementReport>,
    }

    if let Some(list) = enhancement_sweep {
        let h_values = parse_f64_list(list)?;
        let report = field::enhancement_exponents(&slab, &h_values, fp, &opts)?;
        println!(
            "enhancement slopes: b0 {:.3}, interior {:.3}",
            report.slope_b0, report.slope_interior
        );
        let mut table = CsvTable::new(&["h", "k0", "abs_b0", "abs_interior", "a_norm"]);
        for r in &report.rows {
            table.push(vec![
                fmt_f64(r.h),
                fmt_f64(r.k0),
                fmt_f64(r.abs_b0),
                fmt_f64(r.abs_interior),
                fmt_f64(r.a_norm),
            ]);
        }
        let payload = Payload {
            k0: f64::NAN,
            parity: parity.into(),
            b0: vec![],
            a_norms: vec![],
            residual: 0.0,
            samples: vec![],
            enhancement: Some(report),
        };
        let doc = ResultDocument::new(&config, 0, payload, start.elapsed().as_secs_f64());
        write_outputs(&doc, Some(&table), out)?;
        return Ok(0);
    }

    let assembly = Assembly::new(slab.clone(), &opts)?;
    let p = parse_parity(parity)?[0];
    let k0 = match k0 {
        Some(v) => v,
        None => {
            let constants = asymptotics::shape_constants_for(&assembly, &opts)?;
            let (pp, m) = Parity::from_fp_index(fp.max(1));
            solver::find_resonances_near(&assembly, pp, m, Some(&constants))?[0]
                .k
                .re
        }
    };
    let solution = field::solve_incident(&assembly, k0, p)?;
    let mut samples = Vec::new();
    for spec in at {
        let coords = parse_f64_list(spec)?;
        if coords.len() != 3 {
            return Err(SlabError::Config(format!(
                "--at needs x1,x2,x3 (got '{spec}')"
            )));
        }
        let point = [coords[0], coords[1], coords[2]];
        let v = field::evaluate_field(&solution, &assembly, point)?;
        samples.push((point, v.value.norm(), v.tail_estimate));
    }
    if let Some(n) = profile_axis {
        let l = slab.thickness;
        let center = slab.holes[0].0;
        for i in 0..n {
            let x3 = -l / 2.0 + (l / 2.0 - l * 1e-6) * (i as f64 + 0.5) / n as f64;
            let v = field::evaluate_field(&solution, &assembly, [center[0], center[1], x3])?;
            samples.push(([center[0], center[1], x3], v.value.norm(), v.tail_estimate));
        }
    }
    println!(
        "k0 = {k0:.9} ({p}) |b0| = {:.6e}, residual {:.2e}, {} samples",
        solution.b0[0].norm(),
        solution.residual,
        samples.len()
    );
    let mut table = CsvTable::new(&["x1", "x2", "x3", "abs_u", "tail"]);
    for (pt, a, t) in &samples {
        table.push(vec![
            fmt_f64(pt[0]),
            fmt_f64(pt[1]),
            fmt_f64(pt[2]),
            fmt_f64(*a),
            fmt_f64(*t),
        ]);
    }
    let payload = Payload {
        k0,
        parity: p.to_string(),
        b0: solution.b0.iter().map(|c| (c.re, c.im)).collect(),
        a_norms: (0..solution.a.len()).map(|j| solution.a_norm(j)).collect(),
        residual: solution.residual,
        samples,
        enhancement: None,
    };
    let doc = ResultDocument::new(
        &config,
        assembly.grams.content_hash(),
        payload,
        start.elapsed().as_secs_f64(),
    );
    write_outputs(&doc, Some(&table), out)?;
    Ok(0)
}

fn cmd_sweep(
    cfg: &ConfigArgs,
    h_values: &str,
    m_range: &str,
    parity: &str,
    out: &OutArgs,
) -> Result<i32, SlabError> {
    let start = Instant::now();
    let config = cfg.load()?;
    let slab = config.to_slab_config()?;
    let opts = config.s0_options();
    let h_list = parse_f64_list(h_values)?;
    let parities = parse_parity(parity)?;
    let range = parse_m_range(m_range)?;
    let rows = solver::resonance_sweep(&slab, &h_list, range, &parities, &opts)?;
    let mut table = CsvTable::new(&[
        "h",
        "fp_index",
        "parity",
        "branch",
        "re_k_direct",
        "im_k_direct",
        "re_k_asym",
        "im_k_asym",
        "deviation",
        "q_direct",
        "q_scaled",
        "runtime_s",
        "convergence_order",
    ]);
    for r in &rows {
        println!(
            "h={:.4} {} fp={} branch {}: |k_d - k_a| = {:.3e}, Q 2 m h^2 = {:.4}",
            r.h, r.parity, r.fp_index, r.branch, r.deviation, r.q_scaled
        );
        table.push(vec![
            fmt_f64(r.h),
            r.fp_index.to_string(),
            r.parity.to_string(),
            r.branch.to_string(),
            fmt_f64(r.k_direct.re),
            fmt_f64(r.k_direct.im),
            fmt_f64(r.k_asymptotic.re),
            fmt_f64(r.k_asymptotic.im),
            fmt_f64(r.deviation),
            fmt_f64(r.q_direct),
            fmt_f64(r.q_scaled),
            fmt_f64(r.runtime_s),
            r.convergence_order
                .map(fmt_f64)
                .unwrap_or_else(|| "".into()),
        ]);
    }
    let doc = ResultDocument::new(&config, 0, rows, start.elapsed().as_secs_f64());
    write_outputs(&doc, Some(&table), out)?;
    Ok(0)
}

fn cmd_truncation(
    cfg: &ConfigArgs,
    m_list: &str,
    k_re: f64,
    k_im: f64,
    parity: &str,
    out: &OutArgs,
) -> Result<i32, SlabError> {
    let start = Instant::now();
    let config = cfg.load()?;
    let mut slab = config.to_slab_config()?;
    let m_values: Vec<usize> = m_list
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| SlabError::Config(format!("bad truncation '{t}'")))
        })
        .collect::<Result<_, _>>()?;
    let max_m = m_values.iter().copied().max().unwrap_or(1);
    slab.truncation = max_m;
    let opts = config.s0_options();
    let assembly = Assembly::new(slab, &opts)?;
    let p = parse_parity(parity)?[0];
    let rows = truncation_report(&assembly, Complex64::new(k_re, k_im), p, &m_values)?;
    let mut table = CsvTable::new(&["truncation", "a_block_cond", "cauchy_diff"]);
    for r in &rows {
        println!(
            "M = {:3}: cond(a-block) = {:.3e}, Cauchy diff = {:?}",
            r.truncation, r.a_block_cond, r.cauchy_diff
        );
        table.push(vec![
            r.truncation.to_string(),
            fmt_f64(r.a_block_cond),
            r.cauchy_diff.map(fmt_f64).unwrap_or_default(),
        ]);
    }
    let doc = ResultDocument::new(
        &config,
        assembly.grams.content_hash(),
        rows,
        start.elapsed().as_secs_f64(),
    );
    write_outputs(&doc, Some(&table), out)?;
    Ok(0)
}

fn cmd_verify(cfg: &ConfigArgs, out: &OutArgs) -> Result<i32, SlabError> {
    let start = Instant::now();
    let config = cfg.load()?;
    let report = verify::run(&config)?;
    for c in &report.checks {
        println!(
            "[{}] {} - {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let passed = report.passed;
    let doc = ResultDocument::new(&config, 0, report, start.elapsed().as_secs_f64());
    write_outputs(&doc, None, out)?;
    if passed {
        println!("verification passed");
        Ok(0)
    } else {
        println!("verification FAILED");
        Ok(1)
    }
}
