use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ecsk_core::avoid::{convergence_gap, solve_avoid, AvoidSolution};
use ecsk_core::exec::Execution;
use ecsk_core::hj_solver::StepProgress;
use ecsk_core::reach::{frs_from_point, frs_from_sensing_complement, ReachSolution};
use ecsk_core::setops::{build_unsafe_tube, UnsafeTube};
use ecsk_core::sim::{batch_verify, VerifyOptions, VerifyReport};
use log::{debug, info};
use serde::Serialize;

use crate::artifact::{load_kernel, Artifact, ArtifactMeta};
use crate::config::{Model, PipelineConfig};
use crate::error::{stage, CliError, CliResult};
use crate::export::{csv_slice, export_vtk, Slice};

pub const CONFIG_ECHO: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotStats {
    pub time: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSummary {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub counts: Vec<usize>,
    pub periodic: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSummary {
    pub kind: String,
    pub grid: GridSummary,
    pub snapshots: Vec<SnapshotStats>,
}

impl FieldSummary {
    pub fn of(art: &Artifact) -> Self {
        let spec = art.field.spec();
        Self {
            kind: art.meta.kind().into(),
            grid: GridSummary {
                mins: spec.mins().to_vec(),
                maxs: spec.maxs().to_vec(),
                counts: spec.counts().to_vec(),
                periodic: spec.periodic().to_vec(),
            },
            snapshots: art
                .field
                .snapshots()
                .iter()
                .map(|s| SnapshotStats {
                    time: s.time(),
                    min: s.min_value(),
                    max: s.max_value(),
                })
                .collect(),
        }
    }
}

/// Quality figures of an avoid solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    /// Largest change between the two earliest snapshots.
    pub convergence_gap: f64,
    /// Largest `V - d` over nodes and snapshots.
    pub cap_violation: f64,
    /// Largest `V(t) - V(s)` over nodes and snapshot pairs `t <= s`.
    pub horizon_monotonicity_violation: f64,
    /// Share of nodes inside the kernel at zero elapsed time.
    pub kernel_fraction: f64,
}

impl ConvergenceReport {
    pub fn of(sol: &AvoidSolution) -> CliResult<Self> {
        let first = sol.tube.first().values();
        let inside = first.iter().filter(|&&v| v >= 0.0).count();
        Ok(Self {
            convergence_gap: stage("convergence", convergence_gap(sol))?,
            cap_violation: sol.cap_violation(),
            horizon_monotonicity_violation: sol.horizon_monotonicity_violation(),
            kernel_fraction: inside as f64 / first.len() as f64,
        })
    }
}

/// In-memory results of a pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub reach: ReachSolution,
    pub unsafe_tube: Arc<UnsafeTube>,
    pub avoid: AvoidSolution,
    pub sensing: Option<ReachSolution>,
}

fn log_step(name: &'static str) -> impl FnMut(&StepProgress) {
    move |p: &StepProgress| {
        debug!(
            "{name} step {} t={:.4} dt={:.2e} cfl={:.3} range [{:.4}, {:.4}]",
            p.step, p.time, p.dt, p.cfl_number, p.min_value, p.max_value
        )
    }
}

/// Forward reachable set of the external system from the relative-frame
/// origin.
pub fn compute_reach(cfg: &PipelineConfig) -> CliResult<ReachSolution> {
    let spec = stage("grid", cfg.grid.spec())?;
    let ext = stage("reach", cfg.external.build())?;
    let origin = vec![0.0; spec.dims()];
    info!("reach: {} nodes, t in [{}, {}]", spec.len(), cfg.t0, cfg.tf);
    let mut progress = log_step("reach");
    stage(
        "reach",
        frs_from_point(
            ext.as_ref(),
            &origin,
            cfg.r0,
            cfg.t0,
            cfg.tf,
            &spec,
            &cfg.solver(),
            Some(&mut progress),
        ),
    )
}

/// Runs reach, unsafe tube and avoid, plus the sensing variant when
/// configured. Nothing is written.
pub fn run_pipeline(cfg: &PipelineConfig) -> CliResult<PipelineRun> {
    cfg.validate()?;
    let spec = stage("grid", cfg.grid.spec())?;
    let solver = cfg.solver();
    let reach = compute_reach(cfg)?;
    info!("unsafe tube: collision radius {}", cfg.collision_radius);
    let tube = Arc::new(stage(
        "unsafe tube",
        build_unsafe_tube(&reach, cfg.collision_radius, &spec, Execution::Parallel),
    )?);
    let int = stage("avoid", cfg.internal.build())?;
    info!("avoid: backward from t = {}", cfg.tf);
    let mut progress = log_step("avoid");
    let avoid = stage(
        "avoid",
        solve_avoid(tube.clone(), int.as_ref(), &solver, Some(&mut progress)),
    )?;
    let sensing = match cfg.r_sense {
        Some(r) => {
            info!("sensing reach: r_sense = {r}");
            let ext = stage("sensing reach", cfg.external.build())?;
            let mut progress = log_step("sensing reach");
            Some(stage(
                "sensing reach",
                frs_from_sensing_complement(
                    ext.as_ref(),
                    r,
                    cfg.t0,
                    cfg.tf,
                    &spec,
                    &solver,
                    Some(&mut progress),
                ),
            )?)
        }
        None => None,
    };
    Ok(PipelineRun {
        reach,
        unsafe_tube: tube,
        avoid,
        sensing,
    })
}

/// Artifacts and reports a pipeline run writes, by name.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutputs {
    pub dir: PathBuf,
    pub reach: PathBuf,
    pub unsafe_tube: PathBuf,
    pub avoid: PathBuf,
    /// Only for planar Dubins configurations.
    pub kernel: Option<PathBuf>,
    pub sensing: Option<PathBuf>,
    pub convergence: PathBuf,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn prepare_dir(cfg: &PipelineConfig) -> CliResult<PathBuf> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let echo = dir.join(CONFIG_ECHO);
    fs::write(&echo, cfg.to_json_pretty()).map_err(|e| CliError::io(&echo, e))?;
    Ok(dir)
}

pub fn write_pipeline(cfg: &PipelineConfig, run: &PipelineRun) -> CliResult<PipelineOutputs> {
    let dir = prepare_dir(cfg)?;
    let reach = Artifact::from_reach(&run.reach, &cfg.external).save(&dir, "reach")?;
    let unsafe_tube = Artifact::from_unsafe_tube(&run.unsafe_tube).save(&dir, "unsafe_tube")?;
    let avoid = Artifact::new(
        ArtifactMeta::Avoid {
            system: cfg.internal.clone(),
            collision_radius: cfg.collision_radius,
            r0: cfg.r0,
        },
        run.avoid.tube.clone(),
    )
    .save(&dir, "avoid")?;
    let kernel = if cfg.internal.model == Model::Dubins {
        let art = Artifact::new(
            ArtifactMeta::Kernel {
                internal: cfg.internal.clone(),
                external: cfg.external.clone(),
                collision_radius: cfg.collision_radius,
                r0: cfg.r0,
                switch_tolerance: cfg.switch_tolerance,
            },
            run.avoid.tube.clone(),
        );
        // Fail here rather than at deployment if the filter cannot be built.
        art.to_kernel()?;
        Some(art.save(&dir, "kernel")?)
    } else {
        None
    };
    let sensing = match &run.sensing {
        Some(s) => Some(Artifact::from_reach(s, &cfg.external).save(&dir, "sensing_reach")?),
        None => None,
    };
    let convergence = dir.join("convergence.json");
    write_json(&convergence, &ConvergenceReport::of(&run.avoid)?)?;
    Ok(PipelineOutputs {
        dir,
        reach,
        unsafe_tube,
        avoid,
        kernel,
        sensing,
        convergence,
    })
}

pub fn cmd_pipeline(cfg: &PipelineConfig) -> CliResult<PipelineOutputs> {
    let run = run_pipeline(cfg)?;
    let out = write_pipeline(cfg, &run)?;
    info!("pipeline outputs in {}", out.dir.display());
    Ok(out)
}

/// Writes the reach artifact and `reach_summary.json`; returns the
/// artifact header path.
pub fn cmd_reach(cfg: &PipelineConfig) -> CliResult<PathBuf> {
    cfg.validate()?;
    let sol = compute_reach(cfg)?;
    let dir = prepare_dir(cfg)?;
    let art = Artifact::from_reach(&sol, &cfg.external);
    let path = art.save(&dir, "reach")?;
    write_json(&dir.join("reach_summary.json"), &FieldSummary::of(&art))?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub stream: u64,
    pub x_int0: Vec<f64>,
    pub x_ext0: Vec<f64>,
    pub start_value: f64,
    pub min_d: f64,
    pub safety_steps: usize,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRecord {
    pub kernel: String,
    pub seed: u64,
    pub margin: f64,
    pub trials: usize,
    pub collisions: usize,
    pub aborted: usize,
    /// Null when there were no trials.
    pub worst_min_d: Option<f64>,
    pub passed: bool,
    pub outcomes: Vec<TrialRecord>,
}

impl VerifyRecord {
    fn new(kernel: &Path, seed: u64, margin: f64, r: &VerifyReport) -> Self {
        Self {
            kernel: kernel.display().to_string(),
            seed,
            margin,
            trials: r.trials,
            collisions: r.collisions,
            aborted: r.aborted,
            worst_min_d: r.worst_min_d.is_finite().then_some(r.worst_min_d),
            passed: r.passed(),
            outcomes: r
                .outcomes
                .iter()
                .map(|o| TrialRecord {
                    stream: o.seed_stream,
                    x_int0: o.x_int0.clone(),
                    x_ext0: o.x_ext0.clone(),
                    start_value: o.start_value,
                    min_d: o.min_d,
                    safety_steps: o.safety_steps,
                    aborted: o.aborted.clone(),
                })
                .collect(),
        }
    }
}

/// Closed-loop check of a kernel artifact under full observation loss.
/// The report is written before a failed verification is returned as an
/// error.
pub fn cmd_verify(
    kernel_path: &Path,
    trials: usize,
    margin: f64,
    seed: u64,
    report_path: &Path,
) -> CliResult<VerifyRecord> {
    let (kernel, external) = load_kernel(kernel_path)?;
    let opts = VerifyOptions {
        horizon: kernel.horizon(),
        ..VerifyOptions::default()
    };
    info!("verify: {trials} trials, margin {margin}, seed {seed}");
    let report = stage(
        "verify",
        batch_verify(&kernel, external, trials, margin, seed, &opts),
    )?;
    let record = VerifyRecord::new(kernel_path, seed, margin, &report);
    if let Some(parent) = report_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
    }
    write_json(report_path, &record)?;
    if !record.passed {
        return Err(CliError::VerificationFailed {
            collisions: record.collisions,
            aborted: record.aborted,
        });
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExportFormat {
    Vtk,
    CsvSlice,
}

/// Exports an artifact. VTK writes one file per snapshot into `out`; a
/// CSV slice writes the single file `out` at time `time` (defaults to the
/// first snapshot).
pub fn cmd_export(
    artifact: &Path,
    format: ExportFormat,
    slice: Option<Slice>,
    time: Option<f64>,
    out: &Path,
) -> CliResult<Vec<PathBuf>> {
    let art = Artifact::load(artifact)?;
    match format {
        ExportFormat::Vtk => {
            let stem = artifact
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("field");
            export_vtk(&art, out, stem)
        }
        ExportFormat::CsvSlice => {
            let t = time.unwrap_or(art.field.start_time());
            let field = art
                .field
                .field_at(t)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let text = csv_slice(&field, slice)?;
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
                }
            }
            fs::write(out, text).map_err(|e| CliError::io(out, e))?;
            Ok(vec![out.to_path_buf()])
        }
    }
}
