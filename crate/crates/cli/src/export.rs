//! Text exports for external viewers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ecsk_core::grid::{GridSpec, ScalarField};

use crate::artifact::Artifact;
use crate::error::{CliError, CliResult};

/// Legacy VTK structured-points text for one snapshot. Grid dimension 0
/// maps to the VTK x axis; missing axes get a single node.
pub fn vtk_string(field: &ScalarField, title: &str) -> CliResult<String> {
    let spec = field.spec();
    if spec.dims() > 3 {
        return Err(CliError::Usage(format!(
            "vtk export supports up to 3 dimensions, artifact has {}",
            spec.dims()
        )));
    }
    let mut n = [1usize; 3];
    let mut origin = [0.0; 3];
    let mut spacing = [1.0; 3];
    for d in 0..spec.dims() {
        n[d] = spec.counts()[d];
        origin[d] = spec.mins()[d];
        spacing[d] = spec.spacing(d);
    }
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "{}", title.replace('\n', " "));
    s.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    let _ = writeln!(s, "DIMENSIONS {} {} {}", n[0], n[1], n[2]);
    let _ = writeln!(s, "ORIGIN {} {} {}", origin[0], origin[1], origin[2]);
    let _ = writeln!(s, "SPACING {} {} {}", spacing[0], spacing[1], spacing[2]);
    let _ = writeln!(s, "POINT_DATA {}", n[0] * n[1] * n[2]);
    s.push_str("SCALARS value double 1\nLOOKUP_TABLE default\n");
    // VTK runs x fastest; the field runs its last dimension fastest.
    let strides = spec.strides();
    let stride = |d: usize| if d < spec.dims() { strides[d] } else { 0 };
    let vals = field.values();
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let flat = i * stride(0) + j * stride(1) + k * stride(2);
                let _ = writeln!(s, "{}", vals[flat]);
            }
        }
    }
    Ok(s)
}

/// Writes one `<stem>_<k>.vtk` per snapshot; returns the paths.
pub fn export_vtk(art: &Artifact, out_dir: &Path, stem: &str) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut paths = Vec::new();
    for (k, snap) in art.field.snapshots().iter().enumerate() {
        let title = format!("{} t={}", art.meta.kind(), snap.time());
        let path = out_dir.join(format!("{stem}_{k:04}.vtk"));
        fs::write(&path, vtk_string(snap, &title)?).map_err(|e| CliError::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

/// A fixed coordinate along one grid dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slice {
    pub dim: usize,
    pub coord: f64,
}

/// 2D section of a field as CSV. The first row holds the coordinates of
/// the second free dimension, the first column those of the first free
/// dimension. Values come from multilinear interpolation at the slice
/// coordinate.
pub fn csv_slice(field: &ScalarField, slice: Option<Slice>) -> CliResult<String> {
    let spec = field.spec();
    let free: Vec<usize> = match (spec.dims(), slice) {
        (2, None) => vec![0, 1],
        (3, Some(s)) => {
            check_slice(spec, s)?;
            (0..3).filter(|&d| d != s.dim).collect()
        }
        (3, None) => {
            return Err(CliError::Usage(
                "csv-slice of a 3-dimensional artifact needs --slice-dim and --slice-coord".into(),
            ))
        }
        (d, _) => {
            return Err(CliError::Usage(format!(
                "csv-slice needs a 2-dimensional section; artifact has {d} dims"
            )))
        }
    };
    let (a, b) = (free[0], free[1]);
    let mut s = String::from("x\\y");
    for j in 0..spec.counts()[b] {
        let _ = write!(s, ",{}", spec.coord(b, j));
    }
    s.push('\n');
    let mut x = vec![0.0; spec.dims()];
    if let Some(sl) = slice {
        x[sl.dim] = spec.wrap_coord(sl.dim, sl.coord);
    }
    for i in 0..spec.counts()[a] {
        x[a] = spec.coord(a, i);
        let _ = write!(s, "{}", x[a]);
        for j in 0..spec.counts()[b] {
            x[b] = spec.coord(b, j);
            let v = field
                .interpolate(&x)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    Ok(s)
}

fn check_slice(spec: &GridSpec, s: Slice) -> CliResult<()> {
    if s.dim >= spec.dims() {
        return Err(CliError::Usage(format!(
            "slice dimension {} outside a {}-dimensional grid",
            s.dim,
            spec.dims()
        )));
    }
    let inside = if spec.periodic()[s.dim] {
        s.coord.is_finite()
    } else {
        s.coord >= spec.mins()[s.dim] && s.coord <= spec.maxs()[s.dim]
    };
    if !inside {
        return Err(CliError::Usage(format!(
            "slice coordinate {} outside [{}, {}] in dimension {}",
            s.coord,
            spec.mins()[s.dim],
            spec.maxs()[s.dim],
            s.dim
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ecsk_core::exec::Execution;

    #[test]
    fn vtk_orders_x_fastest() {
        let spec = GridSpec::aperiodic(vec![0.0, 0.0], vec![2.0, 1.0], vec![3, 4]).unwrap();
        let f = ScalarField::from_fn(spec, 0.0, Execution::Sequential, |x| 10.0 * x[0] + 3.0 * x[1])
            .unwrap();
        let text = vtk_string(&f, "t").unwrap();
        let body: Vec<f64> = text
            .lines()
            .skip(10)
            .map(|l| l.parse().unwrap())
            .collect();
        assert_eq!(body.len(), 12);
        assert_eq!(&body[..4], &[0.0, 10.0, 20.0, 1.0]);
        assert!(text.contains("DIMENSIONS 3 4 1\n"));
        assert!(text.contains("SPACING 1 0.3333333333333333 1\n"));
    }

    #[test]
    fn csv_slice_interpolates_the_fixed_axis() {
        let spec = GridSpec::new(
            vec![-1.0, -1.0, -std::f64::consts::PI],
            vec![1.0, 1.0, std::f64::consts::PI],
            vec![3, 5, 8],
            vec![false, false, true],
        )
        .unwrap();
        let f = ScalarField::from_fn(spec, 0.0, Execution::Sequential, |x| x[0] + 2.0 * x[1])
            .unwrap();
        let csv = csv_slice(&f, Some(Slice { dim: 2, coord: std::f64::consts::PI })).unwrap();
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0], "x\\y,-1,-0.5,0,0.5,1");
        assert_eq!(rows[1], "-1,-3,-2,-1,0,1");
        assert!(csv_slice(&f, Some(Slice { dim: 0, coord: 1.5 })).is_err());
        assert!(csv_slice(&f, Some(Slice { dim: 3, coord: 0.0 })).is_err());
        assert!(csv_slice(&f, None).is_err());
    }
}
