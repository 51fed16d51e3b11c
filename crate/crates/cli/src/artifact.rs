//! On-disk field artifacts.
//!
//! An artifact is a JSON header `<name>.json` next to a raw file
//! `<name>.bin` of 64-bit little-endian floats, row-major with the last
//! dimension fastest, snapshots concatenated in time order. Reading one
//! from another language takes the header's `counts` and `times` and a
//! single reshape of the raw buffer.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ecsk_core::grid::{GridSpec, ScalarField, TimeSampledField};
use ecsk_core::kernel_runtime::{KernelMeta, SafetyKernel};
use ecsk_core::reach::{ReachOrigin, ReachSolution};
use ecsk_core::setops::UnsafeTube;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{stage, CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub dtype: String,
    pub byte_order: String,
    pub order: String,
    pub snapshots: String,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            dtype: "f64".into(),
            byte_order: "little".into(),
            order: "row_major_last_fastest".into(),
            snapshots: "time_ascending".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Origin {
    Point { state: Vec<f64> },
    SensingComplement { r_sense: f64 },
}

impl From<&ReachOrigin> for Origin {
    fn from(o: &ReachOrigin) -> Self {
        match o {
            ReachOrigin::Point(x) => Origin::Point { state: x.clone() },
            ReachOrigin::SensingComplement { r_sense } => {
                Origin::SensingComplement { r_sense: *r_sense }
            }
        }
    }
}

impl From<&Origin> for ReachOrigin {
    fn from(o: &Origin) -> Self {
        match o {
            Origin::Point { state } => ReachOrigin::Point(state.clone()),
            Origin::SensingComplement { r_sense } => {
                ReachOrigin::SensingComplement { r_sense: *r_sense }
            }
        }
    }
}

/// What the stored values mean, plus whatever is needed to rebuild the
/// library object they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "metadata", rename_all = "snake_case")]
pub enum ArtifactMeta {
    /// Forward reachable set value; reachable where <= 0.
    Reach {
        system: SystemConfig,
        origin: Origin,
        r0: f64,
        position_dims: Vec<usize>,
    },
    /// Pessimistic signed distance of the internal system to the unsafe set.
    UnsafeTube {
        collision_radius: f64,
        r0: f64,
        origin: Origin,
    },
    /// Avoid tube value; the kernel is where it is >= 0.
    Avoid {
        system: SystemConfig,
        collision_radius: f64,
        r0: f64,
    },
    /// Avoid tube value packaged for the runtime filter.
    Kernel {
        internal: SystemConfig,
        external: SystemConfig,
        collision_radius: f64,
        r0: f64,
        switch_tolerance: Option<f64>,
    },
}

impl ArtifactMeta {
    pub fn kind(&self) -> &'static str {
        match self {
            ArtifactMeta::Reach { .. } => "reach",
            ArtifactMeta::UnsafeTube { .. } => "unsafe_tube",
            ArtifactMeta::Avoid { .. } => "avoid",
            ArtifactMeta::Kernel { .. } => "kernel",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    #[serde(flatten)]
    pub meta: ArtifactMeta,
    pub dims: usize,
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub counts: Vec<usize>,
    pub periodic: Vec<bool>,
    pub times: Vec<f64>,
    pub layout: Layout,
    /// Raw value file, relative to the header's directory.
    pub data_file: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub meta: ArtifactMeta,
    pub field: TimeSampledField,
}

impl Artifact {
    pub fn new(meta: ArtifactMeta, field: TimeSampledField) -> Self {
        Self { meta, field }
    }

    pub fn from_reach(sol: &ReachSolution, system: &SystemConfig) -> Self {
        Self::new(
            ArtifactMeta::Reach {
                system: system.clone(),
                origin: (&sol.origin).into(),
                r0: sol.r0,
                position_dims: sol.position_dims.clone(),
            },
            sol.tube.clone(),
        )
    }

    pub fn from_unsafe_tube(tube: &UnsafeTube) -> Self {
        Self::new(
            ArtifactMeta::UnsafeTube {
                collision_radius: tube.collision_radius,
                r0: tube.r0,
                origin: (&tube.source).into(),
            },
            tube.d_tilde.clone(),
        )
    }

    pub fn header(&self, data_file: String) -> Header {
        let spec = self.field.spec();
        Header {
            format_version: FORMAT_VERSION,
            meta: self.meta.clone(),
            dims: spec.dims(),
            mins: spec.mins().to_vec(),
            maxs: spec.maxs().to_vec(),
            counts: spec.counts().to_vec(),
            periodic: spec.periodic().to_vec(),
            times: self.field.times(),
            layout: Layout::default(),
            data_file,
        }
    }

    /// Writes `<dir>/<name>.json` and `<dir>/<name>.bin`; returns the
    /// header path.
    pub fn save(&self, dir: &Path, name: &str) -> CliResult<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let data_name = format!("{name}.bin");
        let n: usize = self.field.snapshots().iter().map(|s| s.values().len()).sum();
        let mut raw = Vec::with_capacity(8 * n);
        for snap in self.field.snapshots() {
            for v in snap.values() {
                raw.extend_from_slice(&v.to_le_bytes());
            }
        }
        let data_path = dir.join(&data_name);
        fs::write(&data_path, raw).map_err(|e| CliError::io(&data_path, e))?;
        let header_path = dir.join(format!("{name}.json"));
        let text = serde_json::to_string_pretty(&self.header(data_name)).expect("header serializes");
        fs::write(&header_path, text).map_err(|e| CliError::io(&header_path, e))?;
        Ok(header_path)
    }

    /// Reads an artifact from its header path. Unreadable files are I/O
    /// errors; malformed or inconsistent contents are usage errors.
    pub fn load(header_path: &Path) -> CliResult<Self> {
        if header_path.as_os_str().is_empty() {
            return Err(CliError::io(header_path, "empty artifact path"));
        }
        let text = fs::read_to_string(header_path).map_err(|e| CliError::io(header_path, e))?;
        let header: Header = serde_json::from_str(&text)
            .map_err(|e| CliError::io(header_path, format!("malformed artifact header: {e}")))?;
        if header.format_version != FORMAT_VERSION || header.layout != Layout::default() {
            return Err(CliError::io(
                header_path,
                format!("unsupported artifact format version {}", header.format_version),
            ));
        }
        let spec = GridSpec::new(
            header.mins.clone(),
            header.maxs.clone(),
            header.counts.clone(),
            header.periodic.clone(),
        )
        .map_err(|e| CliError::io(header_path, e))?;
        if spec.dims() != header.dims {
            return Err(CliError::io(header_path, "dims disagrees with the grid lists"));
        }
        let dir = header_path.parent().unwrap_or(Path::new("."));
        let data_path = dir.join(&header.data_file);
        let raw = fs::read(&data_path).map_err(|e| CliError::io(&data_path, e))?;
        let per = spec.len();
        if raw.len() != 8 * per * header.times.len() {
            return Err(CliError::io(
                &data_path,
                format!(
                    "expected {} bytes for {} snapshots of {per} values, found {}",
                    8 * per * header.times.len(),
                    header.times.len(),
                    raw.len()
                ),
            ));
        }
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        let mut snaps = Vec::with_capacity(header.times.len());
        for (k, &t) in header.times.iter().enumerate() {
            let slice = values[k * per..(k + 1) * per].to_vec();
            snaps.push(ScalarField::new(spec.clone(), slice, t).map_err(|e| CliError::io(&data_path, e))?);
        }
        let field = TimeSampledField::new(snaps).map_err(|e| CliError::io(header_path, e))?;
        Ok(Self {
            meta: header.meta,
            field,
        })
    }

    pub fn to_reach(&self) -> CliResult<ReachSolution> {
        match &self.meta {
            ArtifactMeta::Reach {
                origin,
                r0,
                position_dims,
                ..
            } => Ok(ReachSolution {
                tube: self.field.clone(),
                origin: origin.into(),
                r0: *r0,
                position_dims: position_dims.clone(),
            }),
            other => Err(wrong_kind("reach", other)),
        }
    }

    pub fn to_unsafe_tube(&self) -> CliResult<UnsafeTube> {
        match &self.meta {
            ArtifactMeta::UnsafeTube {
                collision_radius,
                r0,
                origin,
            } => Ok(UnsafeTube {
                d_tilde: self.field.clone(),
                collision_radius: *collision_radius,
                r0: *r0,
                source: origin.into(),
            }),
            other => Err(wrong_kind("unsafe_tube", other)),
        }
    }

    /// Builds the runtime filter. Only planar Dubins kernels qualify.
    pub fn to_kernel(&self) -> CliResult<(SafetyKernel, SystemConfig)> {
        match &self.meta {
            ArtifactMeta::Kernel {
                internal,
                external,
                collision_radius,
                r0,
                switch_tolerance,
            } => {
                let system = stage("kernel", internal.build())?;
                let meta = KernelMeta {
                    collision_radius: *collision_radius,
                    r0: *r0,
                    external_speed: external.max_speed(),
                };
                let mut kernel = stage("kernel", SafetyKernel::new(self.field.clone(), system, meta))?;
                if let Some(tol) = switch_tolerance {
                    kernel = stage("kernel", kernel.with_switch_tolerance(*tol))?;
                }
                Ok((kernel, external.clone()))
            }
            other => Err(wrong_kind("kernel", other)),
        }
    }
}

fn wrong_kind(want: &str, got: &ArtifactMeta) -> CliError {
    CliError::Usage(format!("expected a {want} artifact, got {}", got.kind()))
}

/// Loads a kernel artifact and wraps it as a shareable filter.
pub fn load_kernel(path: &Path) -> CliResult<(SafetyKernel, Arc<dyn ecsk_core::dynamics::DynamicalSystem>)> {
    let art = Artifact::load(path)?;
    let (kernel, external) = art.to_kernel()?;
    let ext = stage("kernel", external.build())?;
    Ok((kernel, ext))
}
