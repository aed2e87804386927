//! Document formats, seeded generators, and the batch experiment driver.
//!
//! Every artifact is JSON with a fixed field order; writes go through a
//! temp-file rename so partial outputs never appear. Reports embed the
//! config hash, the space hash, and the library version.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decomp::{
    coefficient_report, decompose, reconstruct, AtomicDecomposition, CoefficientReport,
    DecompParams, LevelStats,
};
use crate::dyadic::{
    build_dyadic_system, verify_dyadic, verify_whitney, whitney_cover, DyadicCubeSystem,
    DyadicVerifyReport, Generation, WhitneyMode, WhitneyVerifyReport,
};
use crate::hardy::{
    hardy_decompose, validate_hardy_atom, GraphSpec, HardyDecomposeReport, HardyParams,
    SpectralOperator,
};
use crate::hash::hash_hex;
use crate::space::{DoublingReport, MetricMeasureSpace};
use crate::tent::{tent_norm, TGrid, TentFunction};
use crate::weights::{
    generate_weight, rh_constant, verify_weight_lemma, WeightFunction, WeightKind,
    WeightLemmaReport,
};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Documents

/// Space description: coordinates with a named metric, or an explicit table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure: Option<Vec<f64>>,
    pub metric: String,
}

impl SpaceDoc {
    pub fn to_space(&self) -> Result<MetricMeasureSpace> {
        match self.metric.as_str() {
            "euclidean" => {
                let pts = self.points.clone().ok_or_else(|| {
                    Error::InvalidDocument("euclidean metric requires points".into())
                })?;
                MetricMeasureSpace::from_coords(pts, self.measure.clone())
            }
            "explicit" => {
                let d = self.distances.clone().ok_or_else(|| {
                    Error::InvalidDocument("explicit metric requires distances".into())
                })?;
                let n = (d.len() as f64).sqrt() as usize;
                if n * n != d.len() {
                    return Err(Error::InvalidDocument(
                        "distance table is not square".into(),
                    ));
                }
                MetricMeasureSpace::from_distances(n, d, self.measure.clone())
            }
            other => Err(Error::InvalidDocument(format!("unknown metric '{other}'"))),
        }
    }

    pub fn from_space(space: &MetricMeasureSpace) -> Self {
        match space.coords() {
            Some(coords) => Self {
                points: Some(coords.to_vec()),
                distances: None,
                measure: Some(space.masses().to_vec()),
                metric: "euclidean".into(),
            },
            None => Self {
                points: None,
                distances: Some(
                    (0..space.len())
                        .flat_map(|i| (0..space.len()).map(move |j| (i, j)))
                        .map(|(i, j)| space.dist(i, j))
                        .collect(),
                ),
                measure: Some(space.masses().to_vec()),
                metric: "explicit".into(),
            },
        }
    }
}

pub fn load_space(path: &Path) -> Result<MetricMeasureSpace> {
    let doc: SpaceDoc = serde_json::from_str(&fs::read_to_string(path)?)?;
    doc.to_space()
}

/// Weight file: a bare array of positive reals in point order.
pub fn load_weight(path: &Path, n: usize) -> Result<WeightFunction> {
    let values: Vec<f64> = serde_json::from_str(&fs::read_to_string(path)?)?;
    if values.len() != n {
        return Err(Error::InvalidDocument(format!(
            "weight has {} entries, space has {n}",
            values.len()
        )));
    }
    WeightFunction::new(values)
}

/// Per-point function file: a bare array of reals.
pub fn load_function(path: &Path, n: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = serde_json::from_str(&fs::read_to_string(path)?)?;
    if values.len() != n {
        return Err(Error::InvalidDocument(format!(
            "function has {} entries, space has {n}",
            values.len()
        )));
    }
    Ok(values)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TentDoc {
    pub grid: TGrid,
    pub values: Vec<f64>,
}

impl TentDoc {
    pub fn to_tent(&self, n_points: usize) -> Result<TentFunction> {
        let mut grid = self.grid.clone();
        grid.rebuild();
        TentFunction::from_values(n_points, grid, self.values.clone())
    }

    pub fn from_tent(f: &TentFunction) -> Self {
        Self {
            grid: f.grid().clone(),
            values: f.values().to_vec(),
        }
    }
}

pub fn load_tent(path: &Path, n_points: usize) -> Result<TentFunction> {
    let doc: TentDoc = serde_json::from_str(&fs::read_to_string(path)?)?;
    doc.to_tent(n_points)
}

/// Dyadic system file: generations of cubes with centers and parent links.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemDoc {
    pub delta: f64,
    pub c0: f64,
    pub c_big: f64,
    pub k_min: i32,
    pub k_max: i32,
    pub max_children: usize,
    pub generations: Vec<Generation>,
}

impl SystemDoc {
    pub fn from_system(sys: &DyadicCubeSystem) -> Self {
        Self {
            delta: sys.delta(),
            c0: crate::dyadic::NET_C0,
            c_big: crate::dyadic::NET_C_BIG,
            k_min: sys.k_min(),
            k_max: sys.k_max(),
            max_children: sys.max_children(),
            generations: sys.generations().to_vec(),
        }
    }

    pub fn to_system(&self) -> Result<DyadicCubeSystem> {
        DyadicCubeSystem::from_generations(self.delta, self.generations.clone())
    }
}

/// Graph spec file.
pub fn load_graph(path: &Path) -> Result<GraphSpec> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Decomposition artifact: entries with sparse atom samples, ordered by
/// (level, cube); byte-identical across reruns of the same inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionDoc {
    pub version: String,
    pub space_hash: String,
    pub weight_hash: String,
    pub p: f64,
    pub q: f64,
    pub params: DecompParams,
    pub grid: TGrid,
    pub n_points: usize,
    pub level_stats: Vec<LevelStats>,
    pub entries: Vec<EntryDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryDoc {
    pub k: i32,
    pub cube: usize,
    pub coefficient: f64,
    pub ball_center: usize,
    pub ball_radius: f64,
    pub ball_enlarged: bool,
    /// Nonzero atom samples (point, t-index, value), ordered.
    pub samples: Vec<(u32, u32, f64)>,
}

impl DecompositionDoc {
    pub fn from_decomposition(
        d: &AtomicDecomposition,
        grid: &TGrid,
        n_points: usize,
    ) -> Self {
        let entries = d
            .entries
            .iter()
            .map(|e| {
                let mut samples = Vec::new();
                for y in 0..n_points {
                    for m in 0..grid.len() {
                        let v = e.atom.value(y, m);
                        if v != 0.0 {
                            samples.push((y as u32, m as u32, v));
                        }
                    }
                }
                EntryDoc {
                    k: e.k,
                    cube: e.cube,
                    coefficient: e.coefficient,
                    ball_center: e.ball.center,
                    ball_radius: e.ball.radius,
                    ball_enlarged: e.ball_enlarged,
                    samples,
                }
            })
            .collect();
        Self {
            version: crate::VERSION.into(),
            space_hash: format!("{:016x}", d.space_hash),
            weight_hash: format!("{:016x}", d.weight_hash),
            p: d.p,
            q: d.q,
            params: d.params,
            grid: grid.clone(),
            n_points,
            level_stats: d.level_stats.clone(),
            entries,
        }
    }

    /// Sums the stored entries back into a tent function.
    pub fn reconstruct(&self) -> Result<TentFunction> {
        let mut grid = self.grid.clone();
        grid.rebuild();
        let mut out = TentFunction::zeros(self.n_points, grid);
        for e in &self.entries {
            for &(y, m, v) in &e.samples {
                let cur = out.value(y as usize, m as usize);
                out.set(y as usize, m as usize, cur + e.coefficient * v);
            }
        }
        Ok(out)
    }
}

/// Hardy atom artifact: coefficients, balls, and the (a, b) pair per atom.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardyAtomsDoc {
    pub version: String,
    pub space_hash: String,
    pub p: f64,
    pub q: f64,
    pub m_order: u32,
    pub atoms: Vec<HardyAtomDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardyAtomDoc {
    pub coefficient: f64,
    pub ball_center: usize,
    pub ball_radius: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub rescale: f64,
}

impl HardyAtomsDoc {
    pub fn from_atoms(
        space: &MetricMeasureSpace,
        atoms: &[crate::hardy::HardyAtom],
        p: f64,
        q: f64,
        m_order: u32,
    ) -> Self {
        Self {
            version: crate::VERSION.into(),
            space_hash: format!("{:016x}", space.content_hash()),
            p,
            q,
            m_order,
            atoms: atoms
                .iter()
                .map(|a| HardyAtomDoc {
                    coefficient: a.coefficient,
                    ball_center: a.ball.center,
                    ball_radius: a.ball.radius,
                    a: a.a.clone(),
                    b: a.b.clone(),
                    rescale: a.rescale,
                })
                .collect(),
        }
    }
}

/// Writes bytes atomically (temp file + rename in the target directory).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out")
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

// ---------------------------------------------------------------------------
// Seeded generators (shared by configs and tests)

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random point cloud in `[0,10]^dim` with masses in `[0.5, 2)`.
pub fn random_space(seed: u64, n: usize, dim: usize) -> MetricMeasureSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(0.0..10.0)).collect())
        .collect();
    let mass: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    MetricMeasureSpace::from_coords(coords, Some(mass)).expect("random cloud is a metric space")
}

/// Random tent function on the given grid with the given fill density.
pub fn random_tent_on(
    n_points: usize,
    grid: &TGrid,
    seed: u64,
    density: f64,
) -> TentFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = TentFunction::zeros(n_points, grid.clone());
    for y in 0..n_points {
        for m in 0..grid.len() {
            if rng.gen_bool(density) {
                f.set(y, m, rng.gen_range(-2.0..2.0));
            }
        }
    }
    f
}

/// Random per-point function with values in [-1, 1).
pub fn random_function(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

// ---------------------------------------------------------------------------
// Experiment configuration and driver

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum SpaceSource {
    File { path: String },
    Grid1d { n: usize },
    Grid2d { width: usize, height: usize },
    Random { n: usize, dim: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum WeightSource {
    File { path: String },
    Generate { kind: WeightKind },
    Ones,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum TentSource {
    File { path: String },
    Random { density: f64 },
    /// Heat extension of a random per-point function under the graph.
    HardyInduced,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineStep {
    SpaceCheck,
    Dyadic,
    Weights,
    TentNorm,
    Decompose,
    Hardy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamSet {
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub c1: Option<f64>,
    #[serde(default = "default_mode")]
    pub mode: crate::decomp::AtomMode,
    #[serde(default = "default_m_order")]
    pub m_order: u32,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default)]
    pub n_exp: Option<f64>,
}

fn default_p() -> f64 {
    0.5
}
fn default_q() -> f64 {
    2.0
}
fn default_gamma() -> f64 {
    0.5
}
fn default_kappa() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    1.0 / 16.0
}
fn default_mode() -> crate::decomp::AtomMode {
    crate::decomp::AtomMode::Strict
}
fn default_m_order() -> u32 {
    1
}
fn default_nu() -> f64 {
    4.0
}

impl Default for ParamSet {
    fn default() -> Self {
        Self {
            p: default_p(),
            q: default_q(),
            gamma: default_gamma(),
            kappa: default_kappa(),
            delta: default_delta(),
            c1: None,
            mode: default_mode(),
            m_order: default_m_order(),
            nu: default_nu(),
            n_exp: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub space: SpaceSource,
    pub weight: WeightSource,
    #[serde(default)]
    pub tent_function: Option<TentSource>,
    #[serde(default)]
    pub graph: Option<GraphSpec>,
    pub pipeline: Vec<PipelineStep>,
    #[serde(default)]
    pub params: ParamSet,
    #[serde(default)]
    pub emit_plots: Vec<String>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if !(p.p > 0.0 && p.p <= 1.0) {
            return Err(Error::InvalidParam(format!("p = {} outside (0,1]", p.p)));
        }
        if !(p.q > 1.0) {
            return Err(Error::InvalidParam(format!("q = {} must exceed 1", p.q)));
        }
        if !(p.gamma > 0.0 && p.gamma < 1.0) {
            return Err(Error::InvalidParam("gamma outside (0,1)".into()));
        }
        if !(p.kappa > 0.0) {
            return Err(Error::InvalidParam("kappa must be positive".into()));
        }
        if self
            .pipeline
            .iter()
            .any(|s| matches!(s, PipelineStep::Hardy))
            && self.graph.is_none()
        {
            return Err(Error::InvalidParam(
                "hardy step requires a graph spec".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TentNormReport {
    pub p: f64,
    pub norm: f64,
}

/// The full experiment report; sections appear for executed steps only.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub version: String,
    pub config_hash: String,
    pub space_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub space_check: Option<DoublingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dyadic: Option<DyadicVerifyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub whitney: Option<WhitneyVerifyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightLemmaReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rh_2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tent_norm: Option<TentNormReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decompose: Option<CoefficientReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstruction_max_rel_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hardy: Option<HardyDecomposeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hardy_max_leak: Option<f64>,
    pub hard_failures: Vec<String>,
}

pub struct ExperimentOutcome {
    pub exit_code: i32,
    pub report: ExperimentReport,
    pub files: Vec<PathBuf>,
}

/// Executes the configured pipeline, writing the report (and artifacts)
/// under `out_dir`. Exit code 0 on success, 1 on invariant violations (the
/// report is still written), 2 on configuration or input errors.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    config.validate()?;
    let config_bytes = serde_json::to_vec(config)?;
    let config_hash = hash_hex(&config_bytes);

    let space = match &config.space {
        SpaceSource::File { path } => load_space(Path::new(path))?,
        SpaceSource::Grid1d { n } => crate::space::grid_1d(*n)?,
        SpaceSource::Grid2d { width, height } => crate::space::grid_2d(*width, *height)?,
        SpaceSource::Random { n, dim } => random_space(config.seed, *n, *dim),
    };
    let n = space.len();
    let weight = match &config.weight {
        WeightSource::File { path } => load_weight(Path::new(path), n)?,
        WeightSource::Generate { kind } => generate_weight(&space, kind, config.seed)?,
        WeightSource::Ones => WeightFunction::constant(n, 1.0)?,
    };
    let grid = TGrid::default_for_space(&space)?;

    let mut report = ExperimentReport {
        version: crate::VERSION.into(),
        config_hash,
        space_hash: format!("{:016x}", space.content_hash()),
        weight_hash: Some(format!("{:016x}", weight.content_hash())),
        space_check: None,
        dyadic: None,
        whitney: None,
        weights: None,
        rh_2: None,
        tent_norm: None,
        decompose: None,
        reconstruction_max_rel_error: None,
        hardy: None,
        hardy_max_leak: None,
        hard_failures: Vec::new(),
    };
    let mut files = Vec::new();
    let mut decomposition: Option<(AtomicDecomposition, TentFunction)> = None;

    let tent_input = |seed: u64| -> Result<TentFunction> {
        match &config.tent_function {
            Some(TentSource::File { path }) => load_tent(Path::new(path), n),
            Some(TentSource::Random { density }) => {
                Ok(random_tent_on(n, &grid, seed, (*density).clamp(0.0, 1.0)))
            }
            Some(TentSource::HardyInduced) => {
                let gs = config.graph.clone().ok_or_else(|| {
                    Error::InvalidParam("hardy-induced tent needs a graph".into())
                })?;
                let op = SpectralOperator::build(&space, &gs)?;
                let f = random_function(n, seed);
                let fp = op.null_complement(&f);
                Ok(crate::hardy::heat_extension(&op, &grid, &fp))
            }
            None => Ok(random_tent_on(n, &grid, seed, 0.4)),
        }
    };

    for step in &config.pipeline {
        let step_result = run_step(
            step,
            config,
            &space,
            &weight,
            &grid,
            out_dir,
            &tent_input,
            &mut report,
            &mut files,
            &mut decomposition,
        );
        if let Err(e) = step_result {
            match &e {
                // Invariant-class failures: record and keep the report so
                // the counterexample stays inspectable.
                Error::Decomposition(_) | Error::InvariantViolated(_) => {
                    report.hard_failures.push(e.to_string());
                    break;
                }
                _ => return Err(e),
            }
        }
    }

    // Plot series not already written by a step.
    for kind in &config.emit_plots {
        let path = out_dir.join(format!("{kind}.csv"));
        if files.contains(&path) {
            continue;
        }
        let csv = emit_plot_data(kind, &report, decomposition.as_ref(), &space)?;
        atomic_write(&path, csv.as_bytes())?;
        files.push(path);
    }

    let report_path = out_dir.join("report.json");
    write_json(&report_path, &report)?;
    files.push(report_path);

    let exit_code = if report.hard_failures.is_empty() { 0 } else { 1 };
    Ok(ExperimentOutcome {
        exit_code,
        report,
        files,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_step(
    step: &PipelineStep,
    config: &ExperimentConfig,
    space: &MetricMeasureSpace,
    weight: &WeightFunction,
    grid: &TGrid,
    out_dir: &Path,
    tent_input: &dyn Fn(u64) -> Result<TentFunction>,
    report: &mut ExperimentReport,
    files: &mut Vec<PathBuf>,
    decomposition: &mut Option<(AtomicDecomposition, TentFunction)>,
) -> Result<()> {
    let n = space.len();
    {
        match step {
            PipelineStep::SpaceCheck => {
                report.space_check = Some(space.doubling_report());
            }
            PipelineStep::Dyadic => {
                let sys = build_dyadic_system(&space, config.params.delta, None)?;
                let rep = verify_dyadic(&space, &sys);
                if !rep.all_ok {
                    report.hard_failures.push("dyadic axioms failed".into());
                }
                // A deterministic Whitney exercise: the space minus the
                // seed-selected point.
                if n > 1 {
                    let hole = (config.seed as usize) % n;
                    let omega: Vec<usize> = (0..n).filter(|&i| i != hole).collect();
                    let cover = whitney_cover(&space, &sys, &omega, WhitneyMode::Strict)?;
                    let wrep = verify_whitney(&space, &sys, &cover);
                    if !wrep.all_ok {
                        report.hard_failures.push("whitney cover failed".into());
                    }
                    report.whitney = Some(wrep);
                }
                let sys_path = out_dir.join("system.json");
                write_json(&sys_path, &SystemDoc::from_system(&sys))?;
                files.push(sys_path);
                report.dyadic = Some(rep);
            }
            PipelineStep::Weights => {
                let rep = verify_weight_lemma(&space, &weight, 1.5, config.params.q.max(2.0));
                if rep.subset_violations > 0 || !rep.monotone_ok {
                    report.hard_failures.push("weight lemma failed".into());
                }
                report.rh_2 = Some(rh_constant(&space, &weight, 2.0));
                report.weights = Some(rep);
            }
            PipelineStep::TentNorm => {
                let f = tent_input(config.seed ^ 0x7e17)?;
                report.tent_norm = Some(TentNormReport {
                    p: config.params.p,
                    norm: tent_norm(&space, &f, config.params.p, &weight),
                });
            }
            PipelineStep::Decompose => {
                let f = tent_input(config.seed ^ 0x7e17)?;
                let mut params = DecompParams {
                    delta: config.params.delta,
                    gamma: config.params.gamma,
                    kappa: config.params.kappa,
                    c1: DecompParams::c1_floor(config.params.delta),
                    mode: config.params.mode,
                };
                if let Some(c1) = config.params.c1 {
                    params.c1 = c1;
                }
                let d = decompose(&space, &f, config.params.p, config.params.q, &weight, &params)?;
                let crep = coefficient_report(&space, &d, &f, &weight);
                let recon = reconstruct(&d, n, f.grid());
                let scale = f.max_abs().max(1e-300);
                let mut worst = 0.0f64;
                for (a, b) in recon.values().iter().zip(f.values()) {
                    worst = worst.max((a - b).abs() / scale);
                }
                report.reconstruction_max_rel_error = Some(worst);
                if worst > 1e-12 {
                    report
                        .hard_failures
                        .push(format!("reconstruction error {worst} above 1e-12"));
                }
                if matches!(config.params.mode, crate::decomp::AtomMode::Strict)
                    && crep.atoms_valid != crep.n_entries
                {
                    report
                        .hard_failures
                        .push("strict mode emitted invalid atoms".into());
                }
                let doc = DecompositionDoc::from_decomposition(&d, f.grid(), n);
                let dpath = out_dir.join("decomp.json");
                write_json(&dpath, &doc)?;
                files.push(dpath);
                report.decompose = Some(crep);
                *decomposition = Some((d, f));
            }
            PipelineStep::Hardy => {
                let gs = config
                    .graph
                    .clone()
                    .ok_or_else(|| Error::InvalidParam("hardy step requires graph".into()))?;
                let op = SpectralOperator::build(&space, &gs)?;
                let f = random_function(n, config.seed ^ 0x4a12);
                let n_int = config
                    .params
                    .n_exp
                    .unwrap_or_else(|| space.doubling_report().n_exp)
                    .ceil()
                    .max(1.0) as u32;
                let hparams = HardyParams {
                    m_order: config.params.m_order,
                    n_int,
                    tent: DecompParams {
                        delta: config.params.delta,
                        gamma: config.params.gamma,
                        kappa: config.params.kappa,
                        c1: DecompParams::c1_floor(config.params.delta),
                        mode: config.params.mode,
                    },
                    ..HardyParams::default()
                };
                let hd = hardy_decompose(
                    &op,
                    &space,
                    &grid,
                    &f,
                    config.params.p.min(1.0),
                    config.params.q,
                    &weight,
                    &hparams,
                )?;
                let mut max_leak = 0.0f64;
                for atom in &hd.atoms {
                    let arep = validate_hardy_atom(
                        &space,
                        &op,
                        atom,
                        config.params.p.min(1.0),
                        config.params.q,
                        &weight,
                        hparams.leak_tol,
                    );
                    max_leak = max_leak.max(arep.max_leak);
                }
                report.hardy_max_leak = Some(max_leak);
                report.hardy = Some(hd.report);
                if config.emit_plots.iter().any(|k| k == "calderon-defects") {
                    let calc = crate::hardy::CalculusFunctions::build(
                        hparams.c0,
                        hparams.m_order,
                        hparams.n_int,
                        hparams.quad_resolution,
                    )?;
                    let csv = calderon_sweep_csv(&op, grid, &calc);
                    let path = out_dir.join("calderon-defects.csv");
                    atomic_write(&path, csv.as_bytes())?;
                    files.push(path);
                }
            }
        }
    }
    Ok(())
}

/// CSV series from a finished run. Header row always present; numeric
/// fields print with full shortest-roundtrip precision.
pub fn emit_plot_data(
    kind: &str,
    report: &ExperimentReport,
    decomposition: Option<&(AtomicDecomposition, TentFunction)>,
    space: &MetricMeasureSpace,
) -> Result<String> {
    match kind {
        "area-profile" => {
            let mut out = String::from("x,area\n");
            if let Some((_, f)) = decomposition {
                let a = crate::tent::area_functional(space, f);
                for (x, v) in a.iter().enumerate() {
                    out.push_str(&format!("{x},{v}\n"));
                }
            }
            Ok(out)
        }
        "level-stats" => {
            let mut out = String::from("k,whitney_cubes,entries,sum_lambda_p\n");
            if let Some((d, _)) = decomposition {
                for ls in &d.level_stats {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        ls.k, ls.whitney_cubes, ls.entries, ls.sum_lambda_p
                    ));
                }
            }
            Ok(out)
        }
        "lambda-spectrum" => {
            let mut out = String::from("index,k,cube,coefficient\n");
            if let Some((d, _)) = decomposition {
                for (i, e) in d.entries.iter().enumerate() {
                    out.push_str(&format!("{i},{},{},{}\n", e.k, e.cube, e.coefficient));
                }
            }
            Ok(out)
        }
        "weight-profile" => {
            let mut out = String::from("p,ap_constant\n");
            if let Some(w) = &report.weights {
                for (p, c) in &w.ap_profile {
                    out.push_str(&format!("{p},{c}\n"));
                }
            }
            Ok(out)
        }
        // Written directly by the hardy step (needs the operator).
        "calderon-defects" => Ok(String::from("eigenvalue,defect\n")),
        other => Err(Error::InvalidParam(format!("unknown plot kind '{other}'"))),
    }
}

/// Calderon defect sweep as CSV (eigenvalue, defect) for an operator/grid.
pub fn calderon_sweep_csv(
    op: &SpectralOperator,
    grid: &TGrid,
    calc: &crate::hardy::CalculusFunctions,
) -> String {
    let mut out = String::from("eigenvalue,defect\n");
    for (i, &lam) in op.eigenvalues().iter().enumerate() {
        if i < op.null_dim() {
            continue;
        }
        let defect = (1.0 - crate::hardy::calderon_factor(grid, lam, calc)).abs();
        out.push_str(&format!("{lam},{defect}\n"));
    }
    out
}
