//! Benchmark drivers and their on-disk artifacts.

use crate::config::{Benchmark, CompareConfig, RunConfig};
use crate::cook::{max_y_displacement, CookConfig, CookDomain};
use crate::CliError;
use qclat_core::assembly::{BeamRecord, Model};
use qclat_core::fracture::{
    fit_toughness_scaling, run_boundary_layer, run_through_thickness, stress_histogram, FractureCase, OrderMode,
    ThroughThicknessCase, ToughnessFit,
};
use qclat_core::io;
use qclat_core::mesh::{MeshDoc, QCMesh};
use qclat_core::sampling::{build_scheme, SamplingMode};
use qclat_core::solver::{staged_solve, Dirichlet, IterLog, SolveResult, StageRecord};
use qclat_core::{Cell, QcError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const HISTOGRAM_BINS: usize = 80;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamSummary {
    pub cell_a: Cell,
    pub node_a: usize,
    pub cell_b: Cell,
    pub node_b: usize,
    pub axial: f64,
    pub sigma_t: f64,
}

impl From<&BeamRecord> for BeamSummary {
    fn from(b: &BeamRecord) -> Self {
        BeamSummary {
            cell_a: b.cell_a,
            node_a: b.node_a,
            cell_b: b.cell_b,
            node_b: b.node_b,
            axial: b.stress.axial,
            sigma_t: b.stress.total,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: usize,
    pub r0: f64,
    pub n_reps: usize,
    pub rep_density: f64,
    pub energy: f64,
    pub max_sigma_t: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl From<&StageRecord> for StageSummary {
    fn from(s: &StageRecord) -> Self {
        StageSummary {
            stage: s.stage,
            r0: s.r0,
            n_reps: s.n_reps,
            rep_density: s.rep_density,
            energy: s.energy,
            max_sigma_t: s.max_stress,
            iterations: s.iterations,
            residual: s.residual,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractureSummary {
    pub relative_density: f64,
    pub k_applied: f64,
    pub k_ic: f64,
    pub k_ic_bar: f64,
    /// Distance of the critical beam from the crack tip, in unit cells.
    pub tip_distance: f64,
    pub linearity: f64,
    pub shear_modulus: f64,
    pub poisson: f64,
    pub young: f64,
    pub soft_mode: bool,
    pub critical: BeamSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughThicknessSummary {
    pub thickness: i64,
    pub displacement: f64,
    /// Face displacement at first failure, in unit-cell sizes.
    pub critical_displacement: f64,
    pub on_surface: bool,
    pub critical: BeamSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub benchmark: Benchmark,
    pub name: String,
    pub seed: u64,
    pub topology: String,
    pub n_cells: usize,
    pub n_reps: usize,
    /// Representatives over unit cells.
    pub rep_density: f64,
    pub n_sampling_points: usize,
    pub total_weight: u64,
    pub energy: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub max_sigma_t: f64,
    pub max_uy: Option<f64>,
    pub fracture: Option<FractureSummary>,
    pub through_thickness: Option<ThroughThicknessSummary>,
    pub stages: Vec<StageSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub name: String,
    pub benchmark: Benchmark,
    pub points: Vec<RunSummary>,
    /// Fracture: K̄_IC = D ρ̄^d.
    pub fit: Option<ToughnessFit>,
    /// Through-thickness: (max − min) / mean of the critical displacement.
    pub variation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub spacing: i64,
    pub order: OrderMode,
    pub n_reps: usize,
    pub rep_density: f64,
    pub max_uy: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub name: String,
    pub topology: String,
    pub n_cells: usize,
    pub reference_max_uy: f64,
    pub rows: Vec<CompareRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub topology: String,
    pub n_cells: usize,
    pub n_elements: usize,
    pub n_points: usize,
    pub total_weight: u64,
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub interiors: usize,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn write_solver_log(dir: &Path, log: &[IterLog]) -> Result<(), CliError> {
    let mut w = create(dir, "solver_log.csv")?;
    writeln!(w, "iter,energy,residual,step")?;
    for l in log {
        writeln!(w, "{},{:e},{:e},{:e}", l.iter, l.energy, l.residual, l.step)?;
    }
    Ok(())
}

fn write_stages(dir: &Path, stages: &[StageRecord]) -> Result<(), CliError> {
    let mut w = create(dir, "stages.csv")?;
    writeln!(w, "stage,r0,n_reps,rep_density,energy,max_sigma_t,iterations,residual")?;
    for s in stages {
        writeln!(
            w,
            "{},{:e},{},{},{:e},{:e},{},{:e}",
            s.stage, s.r0, s.n_reps, s.rep_density, s.energy, s.max_stress, s.iterations, s.residual
        )?;
    }
    Ok(())
}

/// Artifacts shared by every benchmark.
fn write_fields(
    dir: &Path,
    model: &Model,
    u: &[f64],
    f: &[f64],
    beams: &[BeamRecord],
    vtk: bool,
) -> Result<(), CliError> {
    model.scheme.write_csv(create(dir, "weights.csv")?)?;
    write_json(&dir.join("mesh.json"), &model.mesh.to_doc(&model.lat, true))?;
    let rep = model.energy_report(u, f);
    io::write_point_energy_csv(create(dir, "point_energy.csv")?, &model.scheme, &rep.per_point)?;
    let sig: Vec<f64> = beams.iter().map(|b| b.stress.total).collect();
    io::write_histogram_csv(create(dir, "histogram.csv")?, &stress_histogram(&sig, HISTOGRAM_BINS))?;
    if vtk {
        io::write_mesh_vtk(create(dir, "mesh.vtk")?, model, Some(u))?;
        io::write_lattice_vtk(create(dir, "lattice.vtk")?, model, u, beams)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn base_summary(
    cfg: &RunConfig,
    name: &str,
    model: &Model,
    res: &SolveResult,
    beams: &[BeamRecord],
    stages: &[StageRecord],
) -> RunSummary {
    RunSummary {
        benchmark: cfg.benchmark,
        name: name.to_string(),
        seed: cfg.seed,
        topology: model.lat.topo.name.clone(),
        n_cells: model.lat.n_cells(),
        n_reps: model.n_reps(),
        rep_density: model.rep_density(),
        n_sampling_points: model.scheme.points.len(),
        total_weight: model.scheme.total_weight(),
        energy: res.energy,
        residual: res.residual(),
        iterations: res.iterations,
        converged: res.converged,
        max_sigma_t: beams.iter().map(|b| b.stress.total).fold(0.0, f64::max),
        max_uy: None,
        fracture: None,
        through_thickness: None,
        stages: stages.iter().map(StageSummary::from).collect(),
    }
}

/// Build and solve a Cook membrane model with the given mesh.
pub fn solve_cook(dom: &CookDomain, cook: &CookConfig, mesh: QCMesh) -> Result<(Model, SolveResult, Vec<StageRecord>), CliError> {
    let model = Model::new(dom.lat.clone(), mesh, dom.props, cook.sampling)?;
    let loads = dom.loads(cook.load);
    let problem = |m: &Model| -> qclat_core::Result<(Dirichlet, Vec<f64>)> {
        Ok((dom.constraints(m)?, m.load_vector(&loads)?))
    };
    Ok(staged_solve(model, &problem, &cook.schedule, &cook.solver)?)
}

fn run_cook(cfg: &RunConfig, cook: &CookConfig, name: &str, dir: &Path) -> Result<RunSummary, CliError> {
    let dom = cook.domain()?;
    let mesh = dom.mesh(cook.spacing, cook.order)?;
    let (model, res, stages) = solve_cook(&dom, cook, mesh)?;
    let beams = model.beam_stresses(&res.u)?;
    let f = model.load_vector(&dom.loads(cook.load))?;
    write_fields(dir, &model, &res.u, &f, &beams, cfg.vtk)?;
    write_solver_log(dir, &res.log)?;
    write_stages(dir, &stages)?;
    let mut s = base_summary(cfg, name, &model, &res, &beams, &stages);
    s.max_uy = Some(max_y_displacement(&model, &res.u)?);
    Ok(s)
}

fn run_fracture(cfg: &RunConfig, case: &FractureCase, name: &str, dir: &Path) -> Result<RunSummary, CliError> {
    let r = run_boundary_layer(case)?;
    let zero = vec![0.0; r.model.ndof()];
    write_fields(dir, &r.model, &r.u, &zero, &r.beams, cfg.vtk)?;
    write_stages(dir, &r.stages)?;
    let res = SolveResult {
        converged: true,
        u: Vec::new(),
        iterations: r.stages.last().map_or(0, |s| s.iterations),
        energy: r.stages.last().map_or(0.0, |s| s.energy),
        log: vec![IterLog {
            iter: 0,
            energy: r.stages.last().map_or(0.0, |s| s.energy),
            residual: r.stages.last().map_or(0.0, |s| s.residual),
            step: 0.0,
        }],
    };
    let mut s = base_summary(cfg, name, &r.model, &res, &r.beams, &r.stages);
    s.fracture = Some(FractureSummary {
        relative_density: case.relative_density,
        k_applied: r.k_applied,
        k_ic: r.k_ic,
        k_ic_bar: r.k_ic_bar,
        tip_distance: r.tip_distance,
        linearity: r.linearity,
        shear_modulus: r.moduli.shear,
        poisson: r.moduli.poisson,
        young: r.moduli.young,
        soft_mode: r.moduli.soft,
        critical: (&r.critical).into(),
    });
    Ok(s)
}

fn run_tt(cfg: &RunConfig, case: &ThroughThicknessCase, name: &str, dir: &Path) -> Result<RunSummary, CliError> {
    let r = run_through_thickness(case)?;
    let zero = vec![0.0; r.model.ndof()];
    write_fields(dir, &r.model, &r.u, &zero, &r.beams, cfg.vtk)?;
    write_stages(dir, &r.stages)?;
    let last = r.stages.last();
    let res = SolveResult {
        converged: true,
        u: Vec::new(),
        iterations: last.map_or(0, |s| s.iterations),
        energy: last.map_or(0.0, |s| s.energy),
        log: vec![IterLog { iter: 0, energy: 0.0, residual: last.map_or(0.0, |s| s.residual), step: 0.0 }],
    };
    let mut s = base_summary(cfg, name, &r.model, &res, &r.beams, &r.stages);
    s.through_thickness = Some(ThroughThicknessSummary {
        thickness: case.thickness,
        displacement: case.displacement,
        critical_displacement: r.critical_displacement,
        on_surface: r.on_surface,
        critical: (&r.critical).into(),
    });
    Ok(s)
}

fn prepare(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let mut full = cfg.clone();
    match cfg.benchmark {
        Benchmark::Cook => full.cook = Some(cfg.cook()),
        Benchmark::Fracture => full.fracture = Some(cfg.fracture()),
        Benchmark::ThroughThickness => full.through_thickness = Some(cfg.through_thickness()),
    }
    let text = toml::to_string(&full).map_err(|e| CliError::Config(e.to_string()))?;
    fs::write(dir.join("case.toml"), text)?;
    Ok(())
}

/// `qclat run`: one solve of the configured benchmark.
pub fn run(cfg: &RunConfig, root: Option<&Path>) -> Result<(PathBuf, RunSummary), CliError> {
    let dir = cfg.output_dir(root);
    prepare(&dir, cfg)?;
    let name = cfg.name.clone().unwrap_or_default();
    let s = match cfg.benchmark {
        Benchmark::Cook => run_cook(cfg, &cfg.cook(), &name, &dir)?,
        Benchmark::Fracture => run_fracture(cfg, &cfg.fracture(), &name, &dir)?,
        Benchmark::ThroughThickness => run_tt(cfg, &cfg.through_thickness(), &name, &dir)?,
    };
    write_json(&dir.join("summary.json"), &s)?;
    Ok((dir, s))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Io(std::io::Error::other(e)))
}

/// `qclat sweep`: independent runs over the sweep parameter, `jobs` at a time.
pub fn sweep(cfg: &RunConfig, root: Option<&Path>, jobs: usize) -> Result<(PathBuf, SweepSummary), CliError> {
    let dir = cfg.output_dir(root);
    prepare(&dir, cfg)?;
    let sw = cfg.sweep.clone().unwrap_or_default();
    let name = cfg.name.clone().unwrap_or_default();
    let point = |label: String, f: &(dyn Fn(&Path) -> Result<RunSummary, CliError> + Sync)| -> Result<RunSummary, CliError> {
        let d = dir.join(&label);
        fs::create_dir_all(&d)?;
        let s = f(&d)?;
        write_json(&d.join("summary.json"), &s)?;
        Ok(s)
    };
    let outer = pool(jobs)?;
    // each sweep point runs its own assembly on a single thread when points
    // run concurrently, so results do not depend on the job count
    let inner = if jobs > 1 { Some(pool(1)?) } else { None };
    let within = |f: &(dyn Fn() -> Result<RunSummary, CliError> + Sync)| match &inner {
        Some(p) => p.install(f),
        None => f(),
    };
    let mut summary = SweepSummary { name: name.clone(), benchmark: cfg.benchmark, points: Vec::new(), fit: None, variation: None };
    match cfg.benchmark {
        Benchmark::Fracture => {
            if sw.densities.len() < 2 {
                return Err(CliError::Config("a fracture sweep needs at least two densities".into()));
            }
            let base = cfg.fracture();
            let pts: Result<Vec<RunSummary>, CliError> = outer.install(|| {
                sw.densities
                    .par_iter()
                    .map(|&rho| {
                        let case = FractureCase { relative_density: rho, ..base.clone() };
                        within(&|| point(format!("rho_{rho}"), &|d| run_fracture(cfg, &case, &name, d)))
                    })
                    .collect()
            });
            summary.points = pts?;
            let samples: Vec<(f64, f64)> =
                summary.points.iter().filter_map(|p| p.fracture.as_ref().map(|f| (f.relative_density, f.k_ic_bar))).collect();
            summary.fit = Some(fit_toughness_scaling(&samples)?);
            let mut w = create(&dir, "toughness.csv")?;
            writeln!(w, "relative_density,k_ic_bar,tip_distance,rep_density")?;
            for p in &summary.points {
                let f = p.fracture.as_ref().unwrap();
                writeln!(w, "{},{:e},{},{}", f.relative_density, f.k_ic_bar, f.tip_distance, p.rep_density)?;
            }
        }
        Benchmark::ThroughThickness => {
            if sw.thicknesses.is_empty() {
                return Err(CliError::Config("a through-thickness sweep needs thicknesses".into()));
            }
            let base = cfg.through_thickness();
            let pts: Result<Vec<RunSummary>, CliError> = outer.install(|| {
                sw.thicknesses
                    .par_iter()
                    .map(|&t| {
                        let case = ThroughThicknessCase { thickness: t, ..base.clone() };
                        within(&|| point(format!("t_{t}"), &|d| run_tt(cfg, &case, &name, d)))
                    })
                    .collect()
            });
            summary.points = pts?;
            let u: Vec<f64> = summary
                .points
                .iter()
                .filter_map(|p| p.through_thickness.as_ref().map(|t| t.critical_displacement))
                .collect();
            let (lo, hi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            summary.variation = Some((hi - lo) / (u.iter().sum::<f64>() / u.len() as f64));
            let mut w = create(&dir, "thickness.csv")?;
            writeln!(w, "thickness,critical_displacement,on_surface")?;
            for p in &summary.points {
                let t = p.through_thickness.as_ref().unwrap();
                writeln!(w, "{},{:e},{}", t.thickness, t.critical_displacement, t.on_surface)?;
            }
        }
        Benchmark::Cook => {
            if sw.spacings.is_empty() {
                return Err(CliError::Config("a Cook sweep needs spacings".into()));
            }
            let base = cfg.cook();
            let pts: Result<Vec<RunSummary>, CliError> = outer.install(|| {
                sw.spacings
                    .par_iter()
                    .map(|&h| {
                        let cook = CookConfig { spacing: h, ..base.clone() };
                        within(&|| point(format!("spacing_{h}"), &|d| run_cook(cfg, &cook, &name, d)))
                    })
                    .collect()
            });
            summary.points = pts?;
        }
    }
    write_json(&dir.join("summary.json"), &summary)?;
    Ok((dir, summary))
}

/// `qclat compare-orders`: first- against mixed-order tip displacement error,
/// relative to the fully resolved membrane, on identical representatives.
pub fn compare_orders(cfg: &RunConfig, root: Option<&Path>, jobs: usize) -> Result<(PathBuf, CompareSummary), CliError> {
    if cfg.benchmark != Benchmark::Cook {
        return Err(CliError::Config("compare-orders needs a cook benchmark".into()));
    }
    let dir = cfg.output_dir(root);
    prepare(&dir, cfg)?;
    let cmp: CompareConfig = cfg.compare.clone().unwrap_or_default();
    let cook = cfg.cook();
    let dom = cook.domain()?;
    if dom.lat.n_cells() > cmp.max_reference_cells {
        return Err(CliError::Config(format!(
            "fully resolved reference has {} unit cells (cap {})",
            dom.lat.n_cells(),
            cmp.max_reference_cells
        )));
    }
    let exact = CookConfig { sampling: SamplingMode::Exact, ..cook.clone() };
    let (rm, rres, _) = solve_cook(&dom, &exact, dom.atomistic_mesh()?)?;
    let reference = max_y_displacement(&rm, &rres.u)?;
    drop(rm);
    let outer = pool(jobs)?;
    let rows: Result<Vec<Vec<CompareRow>>, CliError> = outer.install(|| {
        cmp.spacings
            .par_iter()
            .map(|&h| {
                let mut out = Vec::new();
                for order in [OrderMode::First, OrderMode::Mixed] {
                    let mesh = dom.mesh(h, order)?;
                    let (m, res, _) = solve_cook(&dom, &cook, mesh)?;
                    let uy = max_y_displacement(&m, &res.u)?;
                    out.push(CompareRow {
                        spacing: h,
                        order,
                        n_reps: m.n_reps(),
                        rep_density: m.rep_density(),
                        max_uy: uy,
                        error: ((uy - reference) / reference).abs(),
                    });
                }
                Ok(out)
            })
            .collect()
    });
    let rows: Vec<CompareRow> = rows?.into_iter().flatten().collect();
    let mut w = create(&dir, "orders.csv")?;
    writeln!(w, "spacing,order,n_reps,rep_density,max_uy,error")?;
    for r in &rows {
        let o = match r.order {
            OrderMode::First => "first",
            OrderMode::Second => "second",
            OrderMode::Mixed => "mixed",
        };
        writeln!(w, "{},{o},{},{},{:e},{:e}", r.spacing, r.n_reps, r.rep_density, r.max_uy, r.error)?;
    }
    drop(w);
    let s = CompareSummary {
        name: cfg.name.clone().unwrap_or_default(),
        topology: cook.topology.clone(),
        n_cells: dom.lat.n_cells(),
        reference_max_uy: reference,
        rows,
    };
    write_json(&dir.join("summary.json"), &s)?;
    Ok((dir, s))
}

/// `qclat weights-audit`: optimal sampling weights of a stored mesh (JSON
/// or TOML mesh document); fails if they do not add up to the cell count.
pub fn weights_audit(mesh_path: &Path, root: Option<&Path>) -> Result<(PathBuf, AuditSummary), CliError> {
    let text = fs::read_to_string(mesh_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", mesh_path.display())))?;
    let doc: MeshDoc = if mesh_path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?
    };
    let (mesh, lat) = QCMesh::from_doc(&doc)?;
    mesh.validate(&lat)?;
    let scheme = build_scheme(&mesh, &lat, SamplingMode::Optimal)?;
    let stem = mesh_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "mesh".into());
    // a run directory holds `mesh.json`; keep audits of different runs apart
    let stem = match mesh_path.parent().and_then(Path::file_name) {
        Some(p) => format!("{}-{stem}", p.to_string_lossy()),
        None => stem,
    };
    let root = root
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(crate::OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let dir = root.join(format!("{stem}-weights"));
    fs::create_dir_all(&dir)?;
    scheme.write_csv(create(&dir, "weights.csv")?)?;
    use qclat_core::sampling::Category;
    let s = AuditSummary {
        topology: doc.topology.clone(),
        n_cells: lat.n_cells(),
        n_elements: mesh.elements.len(),
        n_points: scheme.points.len(),
        total_weight: scheme.total_weight(),
        vertices: scheme.count(Category::Vertex),
        edges: scheme.count(Category::Edge),
        faces: scheme.count(Category::Face),
        interiors: scheme.count(Category::Interior),
    };
    write_json(&dir.join("summary.json"), &s)?;
    if s.total_weight != s.n_cells as u64 {
        return Err(QcError::NonConforming(format!("weights sum to {} for {} unit cells", s.total_weight, s.n_cells)).into());
    }
    Ok((dir, s))
}
