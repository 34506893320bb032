use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::experiment::{load_frame, read_meta, write_meta, ExperimentConfig};
use super::{
    exit_code, EvaluateArgs, GenerateArgs, Kind, RecoverArgs, SampleArgs, SolverArgs, SweepArgs,
    EXIT_DIVERGED, EXIT_MAX_ITERS, EXIT_OK,
};
use crate::config::{parse_floats, KeyValues};
use crate::error::{Error, Result};
use crate::imaging::{bmode, cnr, envelope, relative_error, BmodeImage, RegionSpec};
use crate::lrjs::{read_real, write_matrix};
use crate::model::{
    FourierSupport, RfFrame, SamplingPattern, SamplingScheme, SolverConfig, SolverTrace,
    Termination,
};
use crate::operators::{measure, PartialFourierOp};
use crate::solver::{reconstruct, solve_full};
use crate::synth::{gen_lowrank_jointsparse, gen_pattern, gen_phantom_rf, PhantomSpec};

const DEFAULT_FS: f64 = 25e6;
const SYNTHETIC_FC: f64 = 2.25e6;
const SYNTHETIC_M: usize = 128;
const PHANTOM_M: usize = 1024;
const DEFAULT_N: usize = 64;

pub fn generate(a: &GenerateArgs) -> Result<i32> {
    fs::create_dir_all(&a.out_dir)?;
    let frame_path = a.out_dir.join("frame.lrjs");
    let mut meta = KeyValues::default();
    let frame = match a.kind {
        Kind::Synthetic => {
            if a.spec.is_some() {
                return Err(Error::Config("--spec only applies to --kind phantom".into()));
            }
            let m = a.m.unwrap_or(SYNTHETIC_M);
            let n = a.n.unwrap_or(DEFAULT_N);
            let fc = a.fc.unwrap_or(SYNTHETIC_FC);
            let fs = a.fs.unwrap_or(DEFAULT_FS);
            let seed = a.seed.unwrap_or(1);
            let support = Arc::new(FourierSupport::from_band(m, fc, fs)?);
            let (x, d) = gen_lowrank_jointsparse(m, n, support.clone(), a.rank, a.ksparse, seed)?;
            write_matrix(a.out_dir.join("coeffs.lrjs"), &d.data().clone().into())?;
            meta.insert("kind", "synthetic");
            meta.insert("k", support.k().to_string());
            meta.insert("rank", a.rank.to_string());
            meta.insert("ksparse", a.ksparse.to_string());
            meta.insert("seed", seed.to_string());
            x
        }
        Kind::Phantom => {
            let kv = match &a.spec {
                Some(p) => KeyValues::read(p)?,
                None => KeyValues::default(),
            };
            let mut spec = PhantomSpec::from_key_values(&kv)?;
            let fs = match a.fs {
                Some(v) => v,
                None => kv.parse_value("fs")?.unwrap_or(DEFAULT_FS),
            };
            let m = match a.m {
                Some(v) => v,
                None => kv.parse_value("m")?.unwrap_or(PHANTOM_M),
            };
            if let Some(n) = a.n {
                spec.n_elements = n;
            }
            if let Some(fc) = a.fc {
                spec.pulse.fc = fc;
            }
            if let Some(seed) = a.seed {
                spec.seed = seed;
            }
            let x = gen_phantom_rf(&spec, fs, m)?;
            meta.insert("kind", "phantom");
            meta.insert("seed", spec.seed.to_string());
            x
        }
    };
    write_matrix(&frame_path, &frame.data().clone().into())?;
    meta.insert("fs", frame.fs().to_string());
    meta.insert("fc", frame.fc().to_string());
    meta.insert("m", frame.samples().to_string());
    meta.insert("n", frame.channels().to_string());
    write_meta(&frame_path, &meta)?;
    println!("wrote {}", frame_path.display());
    Ok(EXIT_OK)
}

pub fn sample(a: &SampleArgs) -> Result<i32> {
    let (m, n) = read_real(&a.frame)?.shape();
    let pattern = gen_pattern(m, n, a.sr, a.scheme, a.seed)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_matrix(&a.out, &pattern.to_mask().into())?;
    let mut meta = KeyValues::default();
    meta.insert("kind", "mask");
    meta.insert("sr", a.sr.to_string());
    meta.insert("scheme", a.scheme.to_string());
    meta.insert("seed", a.seed.to_string());
    meta.insert("count", pattern.len().to_string());
    write_meta(&a.out, &meta)?;
    println!("wrote {} ({} of {} samples)", a.out.display(), pattern.len(), m * n);
    Ok(EXIT_OK)
}

fn experiment(frame: &Path, out_dir: &Path, s: &SolverArgs) -> Result<ExperimentConfig> {
    let mut e = ExperimentConfig::new(frame.to_path_buf(), out_dir.to_path_buf());
    if let Some(path) = &s.config {
        e.apply(&KeyValues::read(path)?)?;
    }
    if let Some(v) = s.gamma {
        e.cfg.gamma = v;
    }
    if let Some(v) = s.alpha {
        e.cfg.alpha = v;
    }
    if let Some(v) = s.mu {
        e.cfg.mu = v;
    }
    if let Some(v) = s.max_iters {
        e.cfg.max_iters = v;
    }
    if let Some(v) = s.tol {
        e.cfg.tol = v;
    }
    if let Some(v) = s.scheme {
        e.scheme = v;
    }
    if let Some(v) = s.seed {
        e.seed = v;
    }
    if let Some(v) = s.noise_sigma {
        e.noise_sigma = v;
    }
    if let Some(v) = s.noise_seed {
        e.noise_seed = Some(v);
    }
    Ok(e)
}

fn load_pattern(path: &Path, shape: (usize, usize)) -> Result<SamplingPattern> {
    let mask = read_real(path)?;
    if mask.shape() != shape {
        return Err(Error::Dimension(format!(
            "mask is {}x{}, frame is {}x{}",
            mask.nrows(),
            mask.ncols(),
            shape.0,
            shape.1
        )));
    }
    let meta = read_meta(path)?.unwrap_or_default();
    let seed = meta.parse_value("seed")?.unwrap_or(0);
    let scheme = meta.parse_value("scheme")?.unwrap_or(SamplingScheme::UniformGlobal);
    SamplingPattern::from_mask(&mask, seed, scheme)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Full,
    SparsityOnly,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::SparsityOnly => "sparsity-only",
        }
    }

    fn config(self, cfg: SolverConfig) -> SolverConfig {
        match self {
            Mode::Full => cfg,
            Mode::SparsityOnly => cfg.sparsity_only(),
        }
    }
}

/// Result of one measure, solve, reconstruct run written to its own directory.
struct Cell {
    trace: SolverTrace,
    xhat: Option<RfFrame>,
    relative_error: Option<f64>,
    wall_time_s: f64,
}

impl Cell {
    fn terminated_by(&self) -> Termination {
        self.trace.terminated_by
    }
}

fn write_trace(path: &Path, trace: &SolverTrace) -> Result<()> {
    trace.write_csv(BufWriter::new(fs::File::create(path)?))?;
    Ok(())
}

fn run_cell(
    x: &RfFrame,
    pattern: &SamplingPattern,
    e: &ExperimentConfig,
    cfg: &SolverConfig,
    mode: Mode,
    out_dir: &Path,
) -> Result<Cell> {
    fs::create_dir_all(out_dir)?;
    let b = measure(x, pattern, e.noise_sigma, e.noise_seed())?;
    let support = FourierSupport::from_band(x.samples(), x.fc(), x.fs())?;
    let op = PartialFourierOp::new(support);

    let start = Instant::now();
    let solved = solve_full(&b, &op, cfg, None);
    let wall_time_s = start.elapsed().as_secs_f64();

    let solution = match solved {
        Ok(s) => s,
        Err(Error::Diverged { trace, .. }) => {
            write_trace(&out_dir.join("trace.csv"), &trace)?;
            return Ok(Cell { trace: *trace, xhat: None, relative_error: None, wall_time_s });
        }
        Err(e) => return Err(e),
    };
    write_trace(&out_dir.join("trace.csv"), &solution.trace)?;

    let (xhat, _) = reconstruct(&solution.coefficients, &op)?;
    let err = relative_error(&xhat, x)?;
    let xhat_path = out_dir.join("xhat.lrjs");
    write_matrix(&xhat_path, &xhat.data().clone().into())?;
    write_matrix(out_dir.join("dhat.lrjs"), &solution.coefficients.data().clone().into())?;

    let mut meta = KeyValues::default();
    meta.insert("kind", "reconstruction");
    meta.insert("fs", x.fs().to_string());
    meta.insert("fc", x.fc().to_string());
    meta.insert("mode", mode.name());
    meta.insert("sr", pattern.sampling_rate().to_string());
    meta.insert("scheme", pattern.scheme().to_string());
    meta.insert("seed", pattern.seed().to_string());
    meta.insert("noise_sigma", e.noise_sigma.to_string());
    meta.insert("noise_seed", e.noise_seed().to_string());
    meta.insert("gamma", cfg.gamma.to_string());
    meta.insert("alpha", cfg.alpha.to_string());
    meta.insert("mu", cfg.mu.to_string());
    meta.insert("nuclear_weight", cfg.nuclear_weight.to_string());
    meta.insert("terminated_by", solution.trace.terminated_by.to_string());
    meta.insert("iterations", solution.trace.iterations().to_string());
    meta.insert("relative_error", err.to_string());
    meta.insert("wall_time_s", wall_time_s.to_string());
    write_meta(&xhat_path, &meta)?;

    Ok(Cell { trace: solution.trace, xhat: Some(xhat), relative_error: Some(err), wall_time_s })
}

pub fn recover(a: &RecoverArgs) -> Result<i32> {
    let mut e = experiment(&a.frame, &a.out_dir, &a.solver)?;
    if let Some(sr) = a.sr {
        e.sr_list = vec![sr];
        e.pattern = None;
    }
    if let Some(p) = &a.pattern {
        e.pattern = Some(p.clone());
    }
    if a.sparsity_only {
        e.cfg = e.cfg.sparsity_only();
    }
    e.validate()?;
    let x = load_frame(&e.frame, a.solver.fc, a.solver.fs)?;
    let pattern = match &e.pattern {
        Some(p) => load_pattern(p, (x.samples(), x.channels()))?,
        None => match e.sr_list[..] {
            [sr] => gen_pattern(x.samples(), x.channels(), sr, e.scheme, e.seed)?,
            _ => return Err(Error::Config("recover takes a single sampling rate".into())),
        },
    };
    let mode = if a.sparsity_only { Mode::SparsityOnly } else { Mode::Full };
    let cell = run_cell(&x, &pattern, &e, &e.cfg, mode, &e.out_dir)?;
    let last = cell.trace.last();
    println!(
        "terminated_by={} iterations={} objective={} relative_error={} wall_time_s={:.3}",
        cell.terminated_by(),
        cell.trace.iterations(),
        last.map_or(f64::NAN, |r| r.objective),
        cell.relative_error.unwrap_or(f64::NAN),
        cell.wall_time_s
    );
    if cell.terminated_by() == Termination::Diverged {
        eprintln!("error: solver diverged after {} iterations", cell.trace.iterations());
    }
    Ok(exit_code(cell.terminated_by()))
}

fn image(frame: &RfFrame, dynamic_range_db: f64) -> Result<BmodeImage> {
    bmode(&envelope(frame)?, dynamic_range_db)
}

pub fn evaluate(a: &EvaluateArgs) -> Result<i32> {
    let mut e = ExperimentConfig::new(a.reference.clone(), a.out_dir.clone());
    if let Some(path) = &a.config {
        e.apply(&KeyValues::read(path)?)?;
    }
    if a.target.is_some() {
        e.target = a.target;
    }
    if a.background.is_some() {
        e.background = a.background;
    }
    if let Some(dr) = a.dynamic_range_db {
        e.dynamic_range_db = dr;
    }
    e.validate()?;
    let regions = e
        .regions()?
        .ok_or_else(|| Error::Config("evaluate needs --target and --background regions".into()))?;

    let xref = load_frame(&a.reference, a.fc, a.fs)?;
    let xhat = load_frame(&a.reconstruction, a.fc, a.fs)?;
    let err = relative_error(&xhat, &xref)?;
    regions.check_bounds(xref.samples(), xref.channels())?;

    fs::create_dir_all(&a.out_dir)?;
    let img_ref = image(&xref, e.dynamic_range_db)?;
    let img_hat = image(&xhat, e.dynamic_range_db)?;
    img_ref.write_pgm(a.out_dir.join("reference.pgm"))?;
    img_hat.write_pgm(a.out_dir.join("reconstruction.pgm"))?;
    let cnr_ref = cnr(&img_ref, &regions)?;
    let cnr_hat = cnr(&img_hat, &regions)?;

    let meta = read_meta(&a.reconstruction)?.unwrap_or_default();
    let field = |key: &str| meta.get(key).unwrap_or("").to_string();
    let mut csv = String::from(
        "sr,cnr_db,reference_cnr_db,delta_cnr_db,relative_error,iterations,wall_time_s\n",
    );
    writeln!(
        csv,
        "{},{cnr_hat:e},{cnr_ref:e},{:e},{err:e},{},{}",
        field("sr"),
        cnr_hat - cnr_ref,
        field("iterations"),
        field("wall_time_s")
    )
    .expect("writing to a String cannot fail");
    fs::write(a.out_dir.join("metrics.csv"), &csv)?;
    println!(
        "cnr_db={cnr_hat:.3} reference_cnr_db={cnr_ref:.3} delta_cnr_db={:.3} relative_error={err:.3e}",
        cnr_hat - cnr_ref
    );
    Ok(EXIT_OK)
}

struct SweepRow {
    sr: f64,
    mode: Mode,
    cell: Cell,
    cnr_db: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn sweep(a: &SweepArgs) -> Result<i32> {
    let mut e = experiment(&a.frame, &a.out_dir, &a.solver)?;
    if let Some(list) = &a.sr_list {
        e.sr_list = parse_floats(list)?;
    }
    if a.target.is_some() {
        e.target = a.target;
    }
    if a.background.is_some() {
        e.background = a.background;
    }
    if let Some(dr) = a.dynamic_range_db {
        e.dynamic_range_db = dr;
    }
    e.validate()?;
    let regions: Option<RegionSpec> = e.regions()?;
    let x = load_frame(&e.frame, a.solver.fc, a.solver.fs)?;
    fs::create_dir_all(&e.out_dir)?;

    let reference_cnr = match &regions {
        Some(r) => {
            r.check_bounds(x.samples(), x.channels())?;
            let img = image(&x, e.dynamic_range_db)?;
            img.write_pgm(e.out_dir.join("reference.pgm"))?;
            Some(cnr(&img, r)?)
        }
        None => None,
    };

    let cells: Vec<(f64, Mode)> = e
        .sr_list
        .iter()
        .flat_map(|&sr| [(sr, Mode::Full), (sr, Mode::SparsityOnly)])
        .collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(sr, mode)| {
            let dir = e.out_dir.join(format!("sr{sr}_{}", mode.name()));
            let pattern = gen_pattern(x.samples(), x.channels(), sr, e.scheme, e.seed)?;
            let cell = run_cell(&x, &pattern, &e, &mode.config(e.cfg), mode, &dir)?;
            let cnr_db = match (&regions, &cell.xhat) {
                (Some(r), Some(xhat)) => {
                    let img = image(xhat, e.dynamic_range_db)?;
                    img.write_pgm(dir.join("bmode.pgm"))?;
                    Some(cnr(&img, r)?)
                }
                _ => None,
            };
            Ok(SweepRow { sr, mode, cell, cnr_db })
        })
        .collect::<Result<_>>()?;

    let mut csv = String::from(
        "sr,mode,seed,relative_error,cnr_db,reference_cnr_db,iterations,terminated_by,final_objective\n",
    );
    let mut timing = String::from("sr,mode,wall_time_s\n");
    let mut summary = format!(
        "{:>6}  {:<14}{:>14}{:>10}{:>8}  {}\n",
        "sr", "mode", "rel_error", "cnr_db", "iters", "stop"
    );
    for row in &rows {
        let c = &row.cell;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            row.sr,
            row.mode.name(),
            e.seed,
            opt(c.relative_error),
            opt(row.cnr_db),
            opt(reference_cnr),
            c.trace.iterations(),
            c.terminated_by(),
            opt(c.trace.last().map(|r| r.objective)),
        )
        .expect("writing to a String cannot fail");
        writeln!(timing, "{},{},{}", row.sr, row.mode.name(), c.wall_time_s)
            .expect("writing to a String cannot fail");
        writeln!(
            summary,
            "{:>6}  {:<14}{:>14}{:>10}{:>8}  {}",
            row.sr,
            row.mode.name(),
            c.relative_error.map_or("-".into(), |v| format!("{v:.3e}")),
            row.cnr_db.map_or("-".into(), |v| format!("{v:.2}")),
            c.trace.iterations(),
            c.terminated_by()
        )
        .expect("writing to a String cannot fail");
    }
    if let Some(r) = reference_cnr {
        writeln!(summary, "reference cnr_db {r:.2}").expect("writing to a String cannot fail");
    }
    fs::write(e.out_dir.join("sweep.csv"), &csv)?;
    fs::write(e.out_dir.join("timing.csv"), &timing)?;
    fs::write(e.out_dir.join("summary.txt"), &summary)?;
    print!("{summary}");

    let worst = rows
        .iter()
        .map(|r| match r.cell.terminated_by() {
            Termination::Diverged => EXIT_DIVERGED,
            Termination::MaxIters => EXIT_MAX_ITERS,
            Termination::Tol => EXIT_OK,
        })
        .max()
        .unwrap_or(EXIT_OK);
    Ok(worst)
}
