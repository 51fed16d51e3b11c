//! Rectangular grids, sampled value fields, interpolation, one-sided
//! differences and Euclidean distance transforms.
//!
//! Storage is row-major with the last dimension fastest. Periodic dimensions
//! exclude their max edge: a periodic axis with `n` nodes over `[min, max)`
//! has spacing `(max - min) / n` and node `n` coincides with node `0`.

use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    mins: Vec<f64>,
    maxs: Vec<f64>,
    counts: Vec<usize>,
    periodic: Vec<bool>,
}

impl GridSpec {
    pub fn new(
        mins: Vec<f64>,
        maxs: Vec<f64>,
        counts: Vec<usize>,
        periodic: Vec<bool>,
    ) -> Result<Self> {
        let d = mins.len();
        if d == 0 {
            return Err(Error::InvalidGrid(
                "grid needs at least one dimension".into(),
            ));
        }
        if maxs.len() != d || counts.len() != d || periodic.len() != d {
            return Err(Error::InvalidGrid(format!(
                "dimension lists disagree: mins {}, maxs {}, counts {}, periodic {}",
                d,
                maxs.len(),
                counts.len(),
                periodic.len()
            )));
        }
        for i in 0..d {
            if !(mins[i].is_finite() && maxs[i].is_finite()) || maxs[i] <= mins[i] {
                return Err(Error::InvalidGrid(format!(
                    "dimension {i}: need finite min < max, got [{}, {}]",
                    mins[i], maxs[i]
                )));
            }
            if counts[i] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "dimension {i}: need at least 3 nodes, got {}",
                    counts[i]
                )));
            }
        }
        Ok(Self {
            mins,
            maxs,
            counts,
            periodic,
        })
    }

    /// Shorthand for a grid with no periodic dimensions.
    pub fn aperiodic(mins: Vec<f64>, maxs: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        let n = mins.len();
        Self::new(mins, maxs, counts, vec![false; n])
    }

    pub fn dims(&self) -> usize {
        self.mins.len()
    }
    pub fn mins(&self) -> &[f64] {
        &self.mins
    }
    pub fn maxs(&self) -> &[f64] {
        &self.maxs
    }
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, d: usize) -> f64 {
        let span = self.maxs[d] - self.mins[d];
        if self.periodic[d] {
            span / self.counts[d] as f64
        } else {
            span / (self.counts[d] - 1) as f64
        }
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.dims()).map(|d| self.spacing(d)).collect()
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacings().into_iter().fold(0.0, f64::max)
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.spacings().iter().map(|h| h * h).sum::<f64>().sqrt()
    }

    /// Length of the domain diagonal; sets the scale of distance sentinels.
    pub fn domain_diagonal(&self) -> f64 {
        self.mins
            .iter()
            .zip(&self.maxs)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    /// Flat-index stride of each dimension.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims()];
        for d in (0..self.dims().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * self.counts[d + 1];
        }
        strides
    }

    pub fn coord(&self, d: usize, i: usize) -> f64 {
        self.mins[d] + i as f64 * self.spacing(d)
    }

    pub fn coord_of(&self, index: &[usize]) -> Result<Vec<f64>> {
        self.check_index(index)?;
        Ok(index
            .iter()
            .enumerate()
            .map(|(d, &i)| self.coord(d, i))
            .collect())
    }

    pub fn flat_index(&self, index: &[usize]) -> Result<usize> {
        self.check_index(index)?;
        Ok(index.iter().zip(self.strides()).map(|(&i, s)| i * s).sum())
    }

    pub fn index_of(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        let mut out = vec![0; self.dims()];
        for d in (0..self.dims()).rev() {
            out[d] = rem % self.counts[d];
            rem /= self.counts[d];
        }
        out
    }

    /// Coordinates of the node at a flat index.
    pub fn node_coords(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dims()];
        self.node_coords_into(flat, &mut x);
        x
    }

    pub fn node_coords_into(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for d in (0..self.dims()).rev() {
            let i = rem % self.counts[d];
            rem /= self.counts[d];
            out[d] = self.coord(d, i);
        }
    }

    fn check_index(&self, index: &[usize]) -> Result<()> {
        if index.len() != self.dims() || index.iter().zip(&self.counts).any(|(&i, &n)| i >= n) {
            return Err(Error::IndexOutOfRange {
                index: index.to_vec(),
                counts: self.counts.clone(),
            });
        }
        Ok(())
    }

    /// Wraps a coordinate of a periodic dimension into `[min, max)`;
    /// non-periodic coordinates pass through.
    pub fn wrap_coord(&self, d: usize, x: f64) -> f64 {
        if !self.periodic[d] {
            return x;
        }
        wrap_into(x, self.mins[d], self.maxs[d])
    }

    /// Signed difference `a - b` along dimension `d`, using the shortest
    /// representative on periodic dimensions.
    pub fn coord_delta(&self, d: usize, a: f64, b: f64) -> f64 {
        let delta = a - b;
        if !self.periodic[d] {
            return delta;
        }
        let period = self.maxs[d] - self.mins[d];
        delta - period * (delta / period).round()
    }

    /// True when every non-periodic coordinate lies inside `[min, max]`.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims()
            && (0..self.dims())
                .all(|d| self.periodic[d] || (x[d] >= self.mins[d] && x[d] <= self.maxs[d]))
    }

    /// Grid over a subset of dimensions, in the given order.
    pub fn sub_spec(&self, dims: &[usize]) -> Result<GridSpec> {
        if dims.is_empty() || dims.iter().any(|&d| d >= self.dims()) {
            return Err(Error::InvalidArgument(format!(
                "sub-grid dims {dims:?} invalid for a {}-dimensional grid",
                self.dims()
            )));
        }
        GridSpec::new(
            dims.iter().map(|&d| self.mins[d]).collect(),
            dims.iter().map(|&d| self.maxs[d]).collect(),
            dims.iter().map(|&d| self.counts[d]).collect(),
            dims.iter().map(|&d| self.periodic[d]).collect(),
        )
    }

    /// Appends the dimensions of `other` after those of `self`.
    pub fn product(&self, other: &GridSpec) -> GridSpec {
        let cat = |a: &[f64], b: &[f64]| a.iter().chain(b).copied().collect::<Vec<_>>();
        GridSpec {
            mins: cat(&self.mins, &other.mins),
            maxs: cat(&self.maxs, &other.maxs),
            counts: self.counts.iter().chain(&other.counts).copied().collect(),
            periodic: self
                .periodic
                .iter()
                .chain(&other.periodic)
                .copied()
                .collect(),
        }
    }

    /// Cell containing `x` along dimension `d`: lower node, upper node and
    /// the fractional position between them.
    fn locate(&self, d: usize, x: f64) -> Option<(usize, usize, f64)> {
        let n = self.counts[d];
        let h = self.spacing(d);
        if self.periodic[d] {
            let s = (self.wrap_coord(d, x) - self.mins[d]) / h;
            let i0 = (s.floor() as usize).min(n - 1);
            let frac = (s - i0 as f64).clamp(0.0, 1.0);
            return Some((i0, (i0 + 1) % n, frac));
        }
        let slack = 1e-9 * h;
        if !(x >= self.mins[d] - slack && x <= self.maxs[d] + slack) {
            return None;
        }
        let s = ((x - self.mins[d]) / h).max(0.0);
        let i0 = (s.floor() as usize).min(n - 2);
        let frac = (s - i0 as f64).clamp(0.0, 1.0);
        Some((i0, i0 + 1, frac))
    }
}

pub(crate) fn wrap_into(x: f64, lo: f64, hi: f64) -> f64 {
    let period = hi - lo;
    let w = lo + (x - lo).rem_euclid(period);
    if w >= hi {
        lo
    } else {
        w
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    wrap_into(theta, -std::f64::consts::PI, std::f64::consts::PI)
}

/// A value function sampled on a grid at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f64>,
    time: f64,
}

impl ScalarField {
    pub fn new(spec: GridSpec, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                spec.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value {} at node {k}",
                values[k]
            )));
        }
        Ok(Self { spec, values, time })
    }

    /// Samples `f` at every node.
    pub fn from_fn<F>(spec: GridSpec, time: f64, exec: Execution, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let dims = spec.dims();
        let values = exec.map_range(spec.len(), |k| {
            let mut x = [0.0; 8];
            let x = &mut x[..dims];
            spec.node_coords_into(k, x);
            f(x)
        });
        Self::new(spec, values, time)
    }

    pub(crate) fn from_parts_unchecked(spec: GridSpec, values: Vec<f64>, time: f64) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        Self { spec, values, time }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn at(&self, index: &[usize]) -> Result<f64> {
        Ok(self.values[self.spec.flat_index(index)?])
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// L-infinity distance between two fields on the same grid.
    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Multilinear interpolation. Periodic coordinates wrap; other
    /// coordinates must lie inside the grid.
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        let dims = self.spec.dims();
        if x.len() != dims || dims > 8 {
            return Err(Error::InvalidArgument(format!(
                "query of length {} for a {dims}-dimensional grid",
                x.len()
            )));
        }
        let strides = self.spec.strides();
        let mut lo = [0usize; 8];
        let mut hi = [0usize; 8];
        let mut frac = [0.0f64; 8];
        for d in 0..dims {
            let (i0, i1, t) = self
                .spec
                .locate(d, x[d])
                .ok_or_else(|| Error::OutOfDomain { point: x.to_vec() })?;
            lo[d] = i0 * strides[d];
            hi[d] = i1 * strides[d];
            frac[d] = t;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dims) {
            let mut w = 1.0;
            let mut k = 0;
            for d in 0..dims {
                if corner >> d & 1 == 1 {
                    w *= frac[d];
                    k += hi[d];
                } else {
                    w *= 1.0 - frac[d];
                    k += lo[d];
                }
            }
            if w != 0.0 {
                acc += w * self.values[k];
            }
        }
        Ok(acc)
    }

    /// First-order one-sided differences `(D-, D+)` along `dim`.
    pub fn upwind_diffs(&self, dim: usize) -> Result<(ScalarField, ScalarField)> {
        if dim >= self.spec.dims() {
            return Err(Error::InvalidArgument(format!("no dimension {dim}")));
        }
        let strides = self.spec.strides();
        let (mut left, mut right) = (Vec::with_capacity(self.values.len()), Vec::new());
        right.reserve(self.values.len());
        for k in 0..self.values.len() {
            let (dm, dp) = one_sided(&self.values, &self.spec, &strides, k, dim);
            left.push(dm);
            right.push(dp);
        }
        Ok((
            ScalarField::from_parts_unchecked(self.spec.clone(), left, self.time),
            ScalarField::from_parts_unchecked(self.spec.clone(), right, self.time),
        ))
    }
}

/// One-sided differences at flat node `k` along `dim`. Periodic dimensions
/// wrap; other boundaries use the linear-extrapolation ghost node
/// `v[-1] = 2 v[0] - v[1]`, which copies the interior difference.
#[inline]
pub(crate) fn one_sided(
    values: &[f64],
    spec: &GridSpec,
    strides: &[usize],
    k: usize,
    dim: usize,
) -> (f64, f64) {
    let n = spec.counts[dim];
    let s = strides[dim];
    let i = (k / s) % n;
    let h = spec.spacing(dim);
    let v = values[k];
    if spec.periodic[dim] {
        let left = if i > 0 { k - s } else { k + (n - 1) * s };
        let right = if i + 1 < n { k + s } else { k - (n - 1) * s };
        return ((v - values[left]) / h, (values[right] - v) / h);
    }
    if i == 0 {
        let dp = (values[k + s] - v) / h;
        (dp, dp)
    } else if i + 1 == n {
        let dm = (v - values[k - s]) / h;
        (dm, dm)
    } else {
        ((v - values[k - s]) / h, (values[k + s] - v) / h)
    }
}

/// Second-order ENO version of [`one_sided`]: each first difference is
/// corrected by the smaller in magnitude of the two adjacent second
/// differences. Ghost nodes past a non-periodic edge are linear
/// extrapolations, so the correction vanishes there.
#[inline]
pub(crate) fn one_sided_eno2(
    values: &[f64],
    spec: &GridSpec,
    strides: &[usize],
    k: usize,
    dim: usize,
) -> (f64, f64) {
    let n = spec.counts[dim] as isize;
    let s = strides[dim];
    let i = ((k / s) % spec.counts[dim]) as isize;
    let base = k - i as usize * s;
    let h = spec.spacing(dim);
    let periodic = spec.periodic[dim];
    let at = |j: isize| -> f64 {
        if periodic {
            values[base + j.rem_euclid(n) as usize * s]
        } else if j < 0 {
            let (v0, v1) = (values[base], values[base + s]);
            v0 + j as f64 * (v1 - v0)
        } else if j >= n {
            let (a, b) = (values[base + (n - 2) as usize * s], values[base + (n - 1) as usize * s]);
            b + (j - n + 1) as f64 * (b - a)
        } else {
            values[base + j as usize * s]
        }
    };
    let v: [f64; 5] = std::array::from_fn(|o| at(i + o as isize - 2));
    let d2 = |c: usize| v[c + 1] - 2.0 * v[c] + v[c - 1];
    let smaller = |a: f64, b: f64| if a.abs() <= b.abs() { a } else { b };
    let minus = (v[2] - v[1]) / h + 0.5 * smaller(d2(1), d2(2)) / h;
    let plus = (v[3] - v[2]) / h - 0.5 * smaller(d2(2), d2(3)) / h;
    (minus, plus)
}

/// Snapshots of one grid at uniformly spaced, increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSampledField {
    snapshots: Vec<ScalarField>,
}

impl TimeSampledField {
    pub fn new(snapshots: Vec<ScalarField>) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::InvalidArgument("no snapshots".into()))?;
        if snapshots.iter().any(|s| s.spec != first.spec) {
            return Err(Error::GridMismatch(
                "snapshots live on different grids".into(),
            ));
        }
        if snapshots.len() >= 2 {
            let step = snapshots[1].time - snapshots[0].time;
            for w in snapshots.windows(2) {
                let dt = w[1].time - w[0].time;
                if !(dt > 0.0) {
                    return Err(Error::InvalidArgument(
                        "snapshot times must increase".into(),
                    ));
                }
                if (dt - step).abs() > 1e-9 * step.abs().max(1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "snapshot spacing {dt} differs from {step}"
                    )));
                }
            }
        }
        Ok(Self { snapshots })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.snapshots[0].spec
    }
    pub fn snapshots(&self) -> &[ScalarField] {
        &self.snapshots
    }
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }
    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
    pub fn first(&self) -> &ScalarField {
        &self.snapshots[0]
    }
    pub fn last(&self) -> &ScalarField {
        &self.snapshots[self.snapshots.len() - 1]
    }
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }
    pub fn start_time(&self) -> f64 {
        self.first().time
    }
    pub fn end_time(&self) -> f64 {
        self.last().time
    }

    /// Bracketing snapshot index and weight of the later snapshot.
    pub fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        let (t0, t1) = (self.start_time(), self.end_time());
        let slack = 1e-9 * (t1 - t0).abs().max(1.0);
        if !(t >= t0 - slack && t <= t1 + slack) {
            return Err(Error::TimeOutOfRange {
                time: t,
                start: t0,
                end: t1,
            });
        }
        if self.snapshots.len() == 1 {
            return Ok((0, 0.0));
        }
        let step = (t1 - t0) / (self.snapshots.len() - 1) as f64;
        let s = ((t - t0) / step).max(0.0);
        let k = (s.floor() as usize).min(self.snapshots.len() - 2);
        Ok((k, (s - k as f64).clamp(0.0, 1.0)))
    }

    /// Space- and time-interpolated value.
    pub fn value_at(&self, x: &[f64], t: f64) -> Result<f64> {
        let (k, w) = self.bracket(t)?;
        let a = self.snapshots[k].interpolate(x)?;
        if w == 0.0 {
            return Ok(a);
        }
        let b = self.snapshots[k + 1].interpolate(x)?;
        Ok((1.0 - w) * a + w * b)
    }

    /// Snapshot linearly interpolated in time.
    pub fn field_at(&self, t: f64) -> Result<ScalarField> {
        let (k, w) = self.bracket(t)?;
        if w == 0.0 {
            return Ok(self.snapshots[k].clone().with_time(t));
        }
        let (a, b) = (&self.snapshots[k].values, &self.snapshots[k + 1].values);
        let values = a
            .iter()
            .zip(b)
            .map(|(x, y)| (1.0 - w) * x + w * y)
            .collect();
        Ok(ScalarField::from_parts_unchecked(
            self.spec().clone(),
            values,
            t,
        ))
    }

    /// Time-interpolated value of a single node.
    pub fn node_value_at(&self, flat: usize, t: f64) -> Result<f64> {
        let (k, w) = self.bracket(t)?;
        let a = self.snapshots[k].values[flat];
        if w == 0.0 {
            return Ok(a);
        }
        Ok((1.0 - w) * a + w * self.snapshots[k + 1].values[flat])
    }
}

/// Signed Euclidean distance transform of a node mask.
///
/// Positive outside the mask (distance to the nearest masked node), negative
/// inside (minus the distance to the nearest unmasked node), measured between
/// node coordinates with the wrapped metric on periodic dimensions. A uniform
/// mask has no opposite nodes; it yields `+2 * domain_diagonal` (all clear) or
/// `-2 * domain_diagonal` (all masked) everywhere.
pub fn signed_distance(spec: &GridSpec, mask: &[bool], exec: Execution) -> Result<ScalarField> {
    if mask.len() != spec.len() {
        return Err(Error::GridMismatch(format!(
            "mask of {} nodes for a grid of {}",
            mask.len(),
            spec.len()
        )));
    }
    let inside = mask.iter().filter(|&&m| m).count();
    let sentinel = 2.0 * spec.domain_diagonal();
    if inside == 0 {
        return Ok(ScalarField::from_parts_unchecked(
            spec.clone(),
            vec![sentinel; mask.len()],
            0.0,
        ));
    }
    if inside == mask.len() {
        return Ok(ScalarField::from_parts_unchecked(
            spec.clone(),
            vec![-sentinel; mask.len()],
            0.0,
        ));
    }
    let to_inside = squared_distance_transform(spec, mask, true, exec);
    let to_outside = squared_distance_transform(spec, mask, false, exec);
    let values = mask
        .iter()
        .zip(to_inside.iter().zip(&to_outside))
        .map(|(&m, (di, dout))| if m { -dout.sqrt() } else { di.sqrt() })
        .collect();
    Ok(ScalarField::from_parts_unchecked(spec.clone(), values, 0.0))
}

/// Squared distance from every node to the nearest node whose mask equals
/// `seed`. Separable lower-envelope algorithm, one pass per dimension.
pub fn squared_distance_transform(
    spec: &GridSpec,
    mask: &[bool],
    seed: bool,
    exec: Execution,
) -> Vec<f64> {
    let mut buf: Vec<f64> = mask
        .iter()
        .map(|&m| if m == seed { 0.0 } else { f64::INFINITY })
        .collect();
    let strides = spec.strides();
    let total = spec.len();
    for d in 0..spec.dims() {
        let n = spec.counts[d];
        let s = strides[d];
        let lines = total / n;
        let h = spec.spacing(d);
        let periodic = spec.periodic[d];
        let base_of = |line: usize| (line / s) * (n * s) + line % s;
        let src = &buf;
        let transformed = exec.map_range(lines, |line| {
            let base = base_of(line);
            let f: Vec<f64> = (0..n).map(|i| src[base + i * s]).collect();
            if periodic {
                let tiled: Vec<f64> = (0..3 * n).map(|j| f[j % n]).collect();
                lower_envelope(&tiled, h)[n..2 * n].to_vec()
            } else {
                lower_envelope(&f, h)
            }
        });
        for (line, vals) in transformed.into_iter().enumerate() {
            let base = base_of(line);
            for (i, v) in vals.into_iter().enumerate() {
                buf[base + i * s] = v;
            }
        }
    }
    buf
}

/// `out[q] = min_p ((q - p) h)^2 + f[p]` over finite `f[p]`.
fn lower_envelope(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n);
    let pos = |i: usize| i as f64 * h;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let Some(&p) = v.last() else {
                v.push(q);
                z.push(f64::NEG_INFINITY);
                break;
            };
            let s =
                ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
    }
    if v.is_empty() {
        return vec![f64::INFINITY; n];
    }
    let mut out = vec![0.0; n];
    let mut k = 0;
    for (q, slot) in out.iter_mut().enumerate() {
        let x = pos(q);
        while k + 1 < v.len() && z[k + 1] < x {
            k += 1;
        }
        let dx = x - pos(v[k]);
        *slot = dx * dx + f[v[k]];
    }
    out
}
