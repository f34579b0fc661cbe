//! Periodic tensor grids, trigonometric interpolation and projection, and
//! spectral norms.
//!
//! Node storage keeps the `N` distinct nodes `x_j = a + j h`, `j = 0..N-1`; the
//! endpoint `x_N = b` is identified with `x_0`. Coefficients are stored in
//! FFT-natural order per axis (`0..N/2-1, -N/2..-1`) and carry the `1/N`
//! factor, so the stored numbers are the discrete Fourier coefficients of the
//! interpolant `sum_l c_l exp(i mu_l (x - a))`. All public accessors take
//! signed mode indices `l` in `{-N/2, ..., N/2-1}`.

use std::borrow::Cow;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::fft::FftNd;

/// Product of intervals `(a, b)`, one per axis, `d` in `{1, 2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    bounds: Vec<(f64, f64)>,
}

impl Domain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() || bounds.len() > 2 {
            return Err(invalid(format!("dimension must be 1 or 2, got {}", bounds.len())));
        }
        for (axis, &(a, b)) in bounds.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(invalid(format!("axis {axis}: need finite a < b, got ({a}, {b})")));
            }
        }
        Ok(Self { bounds })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![(a, b)])
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64)) -> Result<Self> {
        Self::new(vec![x, y])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.bounds[axis].0
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.bounds[axis].1
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.bounds[axis].1 - self.bounds[axis].0
    }

    /// Length (1D) or area (2D).
    pub fn measure(&self) -> f64 {
        (0..self.dim()).map(|k| self.length(k)).product()
    }

    /// Maps `x` into `[a, b)` on the given axis.
    pub fn wrap(&self, axis: usize, x: f64) -> f64 {
        let (a, _) = self.bounds[axis];
        a + (x - a).rem_euclid(self.length(axis))
    }
}

/// Uniform periodic grid with an even number of nodes per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    domain: Domain,
    n: Vec<usize>,
}

impl SpectralGrid {
    pub fn new(domain: Domain, n: &[usize]) -> Result<Self> {
        if n.len() != domain.dim() {
            return Err(invalid(format!(
                "got {} node counts for a {}-dimensional domain",
                n.len(),
                domain.dim()
            )));
        }
        for (axis, &k) in n.iter().enumerate() {
            if k < 4 || k % 2 != 0 {
                return Err(invalid(format!("axis {axis}: N must be even and >= 4, got {k}")));
            }
        }
        Ok(Self { domain, n: n.to_vec() })
    }

    /// Grid with mesh size closest to `h` on every axis; errors unless the
    /// resulting node count reproduces `h` to 1e-9 relative.
    pub fn with_mesh_size(domain: Domain, h: &[f64]) -> Result<Self> {
        if h.len() != domain.dim() {
            return Err(invalid("mesh size count does not match dimension"));
        }
        let mut n = Vec::with_capacity(h.len());
        for (axis, &hk) in h.iter().enumerate() {
            if !(hk > 0.0 && hk.is_finite()) {
                return Err(invalid(format!("axis {axis}: mesh size must be positive, got {hk}")));
            }
            let len = domain.length(axis);
            let count = (len / hk).round();
            if (count * hk - len).abs() > 1e-9 * len {
                return Err(invalid(format!(
                    "axis {axis}: mesh size {hk} does not divide domain length {len}"
                )));
            }
            n.push(count as usize);
        }
        Self::new(domain, &n)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.n
    }

    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }

    /// Total number of stored nodes.
    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.domain.length(axis) / self.n[axis] as f64
    }

    pub fn min_h(&self) -> f64 {
        (0..self.dim()).map(|k| self.h(k)).fold(f64::INFINITY, f64::min)
    }

    /// Time-step bound `h^2 / pi` (smallest mesh size over axes).
    pub fn cfl_limit(&self) -> f64 {
        let h = self.min_h();
        h * h / PI
    }

    /// `x_j = a + j h`; valid for `j = 0..=N`.
    pub fn node(&self, axis: usize, j: usize) -> f64 {
        self.domain.lower(axis) + j as f64 * self.h(axis)
    }

    pub fn nodes(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|j| self.node(axis, j)).collect()
    }

    /// Coordinates of the node at flat (row-major) index `idx`.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        match self.dim() {
            1 => [self.node(0, idx), 0.0],
            _ => {
                let ny = self.n[1];
                [self.node(0, idx / ny), self.node(1, idx % ny)]
            }
        }
    }

    /// `mu_l = 2 pi l / (b - a)`.
    pub fn wavenumber(&self, axis: usize, l: i64) -> f64 {
        2.0 * PI * l as f64 / self.domain.length(axis)
    }

    /// Wavenumbers in FFT-natural order for one axis.
    pub fn natural_wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.n[axis];
        (0..n).map(|k| self.wavenumber(axis, mode_of(k, n))).collect()
    }

    /// `|mu|^2` (summed over axes) for every coefficient in FFT-natural layout.
    pub fn mu_squared(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = (0..self.dim())
            .map(|k| self.natural_wavenumbers(k).into_iter().map(|m| m * m).collect())
            .collect();
        match self.dim() {
            1 => per_axis[0].clone(),
            _ => {
                let mut out = Vec::with_capacity(self.len());
                for mx in &per_axis[0] {
                    for my in &per_axis[1] {
                        out.push(mx + my);
                    }
                }
                out
            }
        }
    }

    /// Same domain with `factor` times as many nodes per axis.
    pub fn refined(&self, factor: usize) -> Self {
        let n: Vec<usize> = self.n.iter().map(|k| k * factor).collect();
        Self { domain: self.domain.clone(), n }
    }

    /// Same domain with the given node counts.
    pub fn resized(&self, n: &[usize]) -> Result<Self> {
        Self::new(self.domain.clone(), n)
    }

    pub fn same_domain(&self, other: &SpectralGrid) -> bool {
        self.domain == other.domain
    }
}

/// `build_grid` entry point.
pub fn build_grid(domain: Domain, n: &[usize]) -> Result<SpectralGrid> {
    SpectralGrid::new(domain, n)
}

/// Signed mode of FFT-natural index `k` on an `n`-point axis.
#[inline]
pub fn mode_of(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// FFT-natural index of mode `l` on an `n`-point axis; `None` outside `T_n`.
#[inline]
pub fn index_of(l: i64, n: usize) -> Option<usize> {
    let half = (n / 2) as i64;
    if l < -half || l >= half {
        None
    } else {
        Some(l.rem_euclid(n as i64) as usize)
    }
}

/// Copies coefficients from shape `src_dims` into `dst` with shape `dst_dims`,
/// keeping the modes present in both and zeroing the rest of `dst`.
///
/// This is zero padding when `dst` is larger on every axis and truncation when
/// smaller.
pub fn remap_modes(src: &[Complex64], src_dims: &[usize], dst: &mut [Complex64], dst_dims: &[usize]) {
    debug_assert_eq!(src_dims.len(), dst_dims.len());
    dst.iter_mut().for_each(|c| *c = Complex64::default());
    match src_dims.len() {
        1 => remap_axis(src, src_dims[0], dst, dst_dims[0]),
        _ => {
            let (sx, sy) = (src_dims[0], src_dims[1]);
            let (dx, dy) = (dst_dims[0], dst_dims[1]);
            let kx = sx.min(dx);
            for k in 0..kx {
                let l = mode_of(k, kx);
                let si = index_of(l, sx).unwrap();
                let di = index_of(l, dx).unwrap();
                remap_axis(&src[si * sy..(si + 1) * sy], sy, &mut dst[di * dy..(di + 1) * dy], dy);
            }
        }
    }
}

fn remap_axis(src: &[Complex64], sn: usize, dst: &mut [Complex64], dn: usize) {
    let m = sn.min(dn);
    let half = m / 2;
    // non-negative modes 0..half-1
    dst[..half].copy_from_slice(&src[..half]);
    // negative modes -half..-1
    dst[dn - half..].copy_from_slice(&src[sn - half..]);
}

/// Trigonometric interpolant on a grid, stored by its Fourier coefficients
/// with an optional cache of node values.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: Arc<SpectralGrid>,
    coeffs: Vec<Complex64>,
    values: Option<Vec<Complex64>>,
}

impl SpectralField {
    pub fn zeros(grid: Arc<SpectralGrid>) -> Self {
        let len = grid.len();
        Self { grid, coeffs: vec![Complex64::default(); len], values: None }
    }

    /// Interpolates node values (`interp_coeffs`); the values are kept as cache.
    pub fn from_values(grid: Arc<SpectralGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "expected {} node values, got {}",
                grid.len(),
                values.len()
            )));
        }
        let mut coeffs = values.clone();
        let mut fft = FftNd::new(grid.dims());
        forward_normalized(&mut fft, &mut coeffs);
        Ok(Self { grid, coeffs, values: Some(values) })
    }

    /// Wraps coefficients already in FFT-natural layout.
    pub fn from_natural_coeffs(grid: Arc<SpectralGrid>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(invalid(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        Ok(Self { grid, coeffs, values: None })
    }

    /// Builds a field from a function of the (signed) mode multi-index.
    pub fn from_mode_fn(grid: Arc<SpectralGrid>, f: impl Fn(&[i64]) -> Complex64) -> Self {
        let dims = grid.dims().to_vec();
        let coeffs = natural_modes(&dims).map(|m| f(&m[..dims.len()])).collect();
        Self { grid, coeffs, values: None }
    }

    /// Samples `f` at the grid nodes and interpolates.
    pub fn from_fn(grid: Arc<SpectralGrid>, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self::from_values(grid, values).expect("length matches by construction")
    }

    pub(crate) fn from_parts(
        grid: Arc<SpectralGrid>,
        coeffs: Vec<Complex64>,
        values: Option<Vec<Complex64>>,
    ) -> Self {
        Self { grid, coeffs, values }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    /// Coefficients in FFT-natural layout.
    pub fn natural_coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_natural_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient of mode `l` (one signed index per axis); zero outside `T_N`.
    pub fn coeff(&self, l: &[i64]) -> Complex64 {
        self.flat_index(l).map(|i| self.coeffs[i]).unwrap_or_default()
    }

    pub fn set_coeff(&mut self, l: &[i64], value: Complex64) -> Result<()> {
        let i = self
            .flat_index(l)
            .ok_or_else(|| invalid(format!("mode {l:?} outside the grid's mode set")))?;
        self.coeffs[i] = value;
        self.values = None;
        Ok(())
    }

    fn flat_index(&self, l: &[i64]) -> Option<usize> {
        let dims = self.grid.dims();
        if l.len() != dims.len() {
            return None;
        }
        let mut idx = 0;
        for (k, &n) in dims.iter().enumerate() {
            idx = idx * n + index_of(l[k], n)?;
        }
        Some(idx)
    }

    /// Coefficients ordered by signed mode, `-N/2` first (row-major in 2D).
    pub fn mode_ordered_coeffs(&self) -> Vec<Complex64> {
        let dims = self.grid.dims();
        mode_ordered(dims)
            .map(|m| self.coeff(&m[..dims.len()]))
            .collect()
    }

    /// Inverse of [`Self::mode_ordered_coeffs`].
    pub fn from_mode_ordered(grid: Arc<SpectralGrid>, ordered: &[Complex64]) -> Result<Self> {
        if ordered.len() != grid.len() {
            return Err(invalid("coefficient count does not match grid"));
        }
        let mut field = Self::zeros(grid);
        let dims = field.grid.dims().to_vec();
        for (m, c) in mode_ordered(&dims).zip(ordered) {
            let i = field.flat_index(&m[..dims.len()]).unwrap();
            field.coeffs[i] = *c;
        }
        Ok(field)
    }

    /// Node values `j = 0..N-1` (row-major), from cache or by inverse FFT.
    pub fn node_values(&self) -> Cow<'_, [Complex64]> {
        match &self.values {
            Some(v) => Cow::Borrowed(v),
            None => {
                let mut v = self.coeffs.clone();
                FftNd::new(self.grid.dims()).inverse(&mut v);
                Cow::Owned(v)
            }
        }
    }

    pub fn has_cached_values(&self) -> bool {
        self.values.is_some()
    }

    pub fn cache_values(&mut self) {
        if self.values.is_none() {
            let v = self.node_values().into_owned();
            self.values = Some(v);
        }
    }

    /// Node values with the periodic endpoint duplicated (`N+1` per axis),
    /// intended for file output.
    pub fn node_values_with_endpoint(&self) -> Vec<Complex64> {
        let v = self.node_values();
        let dims = self.grid.dims();
        match dims.len() {
            1 => {
                let mut out = v.to_vec();
                out.push(v[0]);
                out
            }
            _ => {
                let (nx, ny) = (dims[0], dims[1]);
                let mut out = Vec::with_capacity((nx + 1) * (ny + 1));
                for i in 0..=nx {
                    let row = &v[(i % nx) * ny..(i % nx + 1) * ny];
                    out.extend_from_slice(row);
                    out.push(row[0]);
                }
                out
            }
        }
    }

    /// Evaluates the trigonometric polynomial at an arbitrary point.
    pub fn eval_at(&self, point: &[f64]) -> Complex64 {
        let dims = self.grid.dims();
        let d = dims.len();
        let phases: Vec<Vec<Complex64>> = (0..d)
            .map(|k| {
                let a = self.grid.domain().lower(k);
                self.grid
                    .natural_wavenumbers(k)
                    .into_iter()
                    .map(|mu| Complex64::from_polar(1.0, mu * (point[k] - a)))
                    .collect()
            })
            .collect();
        match d {
            1 => self.coeffs.iter().zip(&phases[0]).map(|(c, p)| c * p).sum(),
            _ => {
                let ny = dims[1];
                let mut acc = Complex64::default();
                for (i, px) in phases[0].iter().enumerate() {
                    let row: Complex64 = self.coeffs[i * ny..(i + 1) * ny]
                        .iter()
                        .zip(&phases[1])
                        .map(|(c, p)| c * p)
                        .sum();
                    acc += row * px;
                }
                acc
            }
        }
    }

    /// Values at the nodes of `query`, which must share the domain.
    ///
    /// Refinements (`M >= N` on every axis) use zero padding and an inverse
    /// FFT; coarser grids fall back to direct summation.
    pub fn eval_on(&self, query: &SpectralGrid) -> Result<Vec<Complex64>> {
        if !self.grid.same_domain(query) {
            return Err(invalid("query grid does not share the field's domain"));
        }
        let refine = query.dims().iter().zip(self.grid.dims()).all(|(m, n)| m >= n);
        if refine {
            let mut buf = vec![Complex64::default(); query.len()];
            remap_modes(&self.coeffs, self.grid.dims(), &mut buf, query.dims());
            FftNd::new(query.dims()).inverse(&mut buf);
            Ok(buf)
        } else {
            Ok((0..query.len())
                .map(|i| {
                    let p = query.point(i);
                    self.eval_at(&p[..query.dim()])
                })
                .collect())
        }
    }

    /// Projection onto `T_n` (drops modes outside).
    pub fn truncate(&self, n: &[usize]) -> Result<Self> {
        if n.len() != self.grid.dim() || n.iter().zip(self.grid.dims()).any(|(t, s)| t > s) {
            return Err(invalid(format!(
                "cannot truncate {:?} modes to {:?}",
                self.grid.dims(),
                n
            )));
        }
        self.remap(n)
    }

    /// Embeds into `T_m` with zero high modes.
    pub fn zero_pad(&self, m: &[usize]) -> Result<Self> {
        if m.len() != self.grid.dim() || m.iter().zip(self.grid.dims()).any(|(t, s)| t < s) {
            return Err(invalid(format!(
                "cannot zero-pad {:?} modes to {:?}",
                self.grid.dims(),
                m
            )));
        }
        self.remap(m)
    }

    fn remap(&self, n: &[usize]) -> Result<Self> {
        let grid = Arc::new(self.grid.resized(n)?);
        let mut coeffs = vec![Complex64::default(); grid.len()];
        remap_modes(&self.coeffs, self.grid.dims(), &mut coeffs, n);
        Ok(Self { grid, coeffs, values: None })
    }

    /// `(||u||_{L2}, ||u||_{H1})` from the coefficients.
    pub fn norms(&self) -> (f64, f64) {
        coeff_norms(&self.grid, &self.coeffs)
    }

    pub fn l2_norm(&self) -> f64 {
        self.norms().0
    }

    /// Elementwise difference of two fields on the same grid.
    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        if *self.grid != *other.grid {
            return Err(invalid("fields live on different grids"));
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(Self { grid: self.grid.clone(), coeffs, values: None })
    }

    pub fn scale(&mut self, s: Complex64) {
        self.coeffs.iter_mut().for_each(|c| *c *= s);
        if let Some(v) = &mut self.values {
            v.iter_mut().for_each(|c| *c *= s);
        }
    }
}

/// Spectral `L2` and `H1` norms of a coefficient array in natural layout.
pub fn coeff_norms(grid: &SpectralGrid, coeffs: &[Complex64]) -> (f64, f64) {
    let mu2 = grid.mu_squared();
    let (mut l2, mut h1) = (0.0, 0.0);
    for (c, m) in coeffs.iter().zip(&mu2) {
        let p = c.norm_sqr();
        l2 += p;
        h1 += (1.0 + m) * p;
    }
    let vol = grid.domain().measure();
    ((vol * l2).sqrt(), (vol * h1).sqrt())
}

/// `interp_coeffs`: discrete Fourier coefficients of node values.
pub fn interp_coeffs(grid: Arc<SpectralGrid>, values: Vec<Complex64>) -> Result<SpectralField> {
    SpectralField::from_values(grid, values)
}

/// `eval_modes`: values of a field at the nodes of a compatible grid.
pub fn eval_modes(field: &SpectralField, query: &SpectralGrid) -> Result<Vec<Complex64>> {
    field.eval_on(query)
}

/// `norms`.
pub fn norms(field: &SpectralField) -> (f64, f64) {
    field.norms()
}

/// Forward transform including the `1/N` factor.
pub(crate) fn forward_normalized(fft: &mut FftNd, data: &mut [Complex64]) {
    fft.forward(data);
    let s = 1.0 / data.len() as f64;
    data.iter_mut().for_each(|c| *c *= s);
}

/// Iterates mode multi-indices (padded to two entries) in FFT-natural order.
fn natural_modes(dims: &[usize]) -> impl Iterator<Item = [i64; 2]> + '_ {
    let (nx, ny) = (dims[0], dims.get(1).copied().unwrap_or(1));
    (0..nx * ny).map(move |i| {
        let lx = mode_of(i / ny, nx);
        let ly = if dims.len() > 1 { mode_of(i % ny, ny) } else { 0 };
        [lx, ly]
    })
}

/// Iterates mode multi-indices in ascending signed order, `-N/2` first.
fn mode_ordered(dims: &[usize]) -> impl Iterator<Item = [i64; 2]> + '_ {
    let (nx, ny) = (dims[0], dims.get(1).copied().unwrap_or(1));
    (0..nx * ny).map(move |i| {
        let lx = (i / ny) as i64 - (nx / 2) as i64;
        let ly = if dims.len() > 1 { (i % ny) as i64 - (ny / 2) as i64 } else { 0 };
        [lx, ly]
    })
}
