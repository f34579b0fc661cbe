//! Time-dependent potentials built from static base profiles.
//!
//! Every rough term stores the Fourier coefficients of its base profile on the
//! extended band `T_{2N}` once. Its coefficients at time `t` are then
//! `A(t) * exp(i mu . alpha(t)) * V0_hat`, i.e. amplitude modulation and
//! translation `V0(x + alpha(t))` cost one elementwise pass.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::spectral::{Domain, SpectralField, SpectralGrid};

/// Extended coefficient band is `BAND_FACTOR * N` modes per axis.
pub const BAND_FACTOR: usize = 2;
/// Products are evaluated on `EXTENDED_GRID_FACTOR * N` nodes per axis.
pub const EXTENDED_GRID_FACTOR: usize = 4;
/// Default oversampling of the quadrature fallback.
pub const DEFAULT_OVERSAMPLING: usize = 16;
/// Quadrature estimates above this are logged.
pub const QUADRATURE_WARN: f64 = 1e-8;

/// Axis-aligned open box `{x : |x_k - center_k| < half_width_k}` with a height.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub height: f64,
}

impl BoxRegion {
    pub fn interval(center: f64, half_width: f64, height: f64) -> Self {
        Self { center: vec![center], half_widths: vec![half_width], height }
    }

    pub fn rect(center: [f64; 2], half_widths: [f64; 2], height: f64) -> Self {
        Self { center: center.to_vec(), half_widths: half_widths.to_vec(), height }
    }
}

/// Polynomial `sum_k coeffs[k] x^k` on the closed interval `[lo, hi]` (1D).
/// Infinite endpoints are clipped to the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyPiece {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

pub type ProfileFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Static spatial profile `V0`.
#[derive(Clone)]
pub enum BaseProfile {
    /// `background + sum of boxes`; coefficients in closed form.
    PiecewiseConstant { background: f64, boxes: Vec<BoxRegion> },
    /// 1D piecewise polynomial, zero outside its pieces (first match wins);
    /// coefficients in closed form.
    PiecewisePolynomial { pieces: Vec<PolyPiece> },
    /// Arbitrary real profile, coefficients by oversampled quadrature.
    Sampled { profile: ProfileFn, oversampling: usize },
    /// Explicit coefficients (remapped to the band of the target grid).
    Coefficients(SpectralField),
}

impl fmt::Debug for BaseProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PiecewiseConstant { background, boxes } => f
                .debug_struct("PiecewiseConstant")
                .field("background", background)
                .field("boxes", boxes)
                .finish(),
            Self::PiecewisePolynomial { pieces } => {
                f.debug_struct("PiecewisePolynomial").field("pieces", pieces).finish()
            }
            Self::Sampled { oversampling, .. } => {
                f.debug_struct("Sampled").field("oversampling", oversampling).finish_non_exhaustive()
            }
            Self::Coefficients(c) => f.debug_tuple("Coefficients").field(&c.grid().dims()).finish(),
        }
    }
}

impl BaseProfile {
    pub fn constant(c: f64) -> Self {
        Self::PiecewiseConstant { background: c, boxes: Vec::new() }
    }

    pub fn boxes(background: f64, boxes: Vec<BoxRegion>) -> Self {
        Self::PiecewiseConstant { background, boxes }
    }

    pub fn sampled(profile: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::Sampled { profile: Arc::new(profile), oversampling: DEFAULT_OVERSAMPLING }
    }

    /// Pointwise value at `x` (periodically wrapped into the domain).
    pub fn value_at(&self, domain: &Domain, x: &[f64]) -> f64 {
        match self {
            Self::PiecewiseConstant { background, boxes } => {
                let mut v = *background;
                for b in boxes {
                    let inside = (0..domain.dim()).all(|k| {
                        let len = domain.length(k);
                        let dx = (x[k] - b.center[k] + 0.5 * len).rem_euclid(len) - 0.5 * len;
                        dx.abs() < b.half_widths[k]
                    });
                    if inside {
                        v += b.height;
                    }
                }
                v
            }
            Self::PiecewisePolynomial { pieces } => {
                let xw = domain.wrap(0, x[0]);
                pieces
                    .iter()
                    .find(|p| p.lo <= xw && xw <= p.hi)
                    .map(|p| p.coeffs.iter().rev().fold(0.0, |acc, c| acc * xw + c))
                    .unwrap_or(0.0)
            }
            Self::Sampled { profile, .. } => {
                let w: Vec<f64> = (0..domain.dim()).map(|k| domain.wrap(k, x[k])).collect();
                profile(&w)
            }
            Self::Coefficients(field) => field.eval_at(x).re,
        }
    }
}

/// Band-limited coefficients of a base profile on `T_{2N}`.
#[derive(Debug, Clone)]
pub struct BaseCoefficients {
    pub field: SpectralField,
    /// Estimated quadrature error (max abs coefficient change under doubling
    /// the oversampling); `None` for closed forms.
    pub quadrature_error: Option<f64>,
}

/// Band grid `2N` for a simulation grid.
pub fn band_grid(grid: &SpectralGrid) -> SpectralGrid {
    grid.refined(BAND_FACTOR)
}

/// Extended evaluation grid `4N` for a simulation grid.
pub fn extended_grid(grid: &SpectralGrid) -> SpectralGrid {
    grid.refined(EXTENDED_GRID_FACTOR)
}

/// Coefficients `(1/|Omega|) int V0 exp(-i mu.(x - a)) dx` for `l` in
/// `T_band` (`band` per axis, default `2N`).
pub fn base_coeffs(base: &BaseProfile, grid: &SpectralGrid, band: Option<&[usize]>) -> Result<BaseCoefficients> {
    let band: Vec<usize> = match band {
        Some(b) => b.to_vec(),
        None => grid.dims().iter().map(|n| BAND_FACTOR * n).collect(),
    };
    if band.len() != grid.dim() || band.iter().zip(grid.dims()).any(|(b, n)| b % 2 != 0 || b < n) {
        return Err(invalid(format!("band {band:?} must be even and >= N = {:?}", grid.dims())));
    }
    let bgrid = Arc::new(grid.resized(&band)?);
    let domain = grid.domain();
    match base {
        BaseProfile::PiecewiseConstant { background, boxes } => {
            for b in boxes {
                if b.center.len() != grid.dim() || b.half_widths.len() != grid.dim() {
                    return Err(Error::InvalidProfile("box dimension mismatch".into()));
                }
                if !b.height.is_finite() || b.half_widths.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::InvalidProfile(format!("bad box {b:?}")));
                }
            }
            if !background.is_finite() {
                return Err(Error::InvalidProfile("non-finite background".into()));
            }
            let bg = *background;
            let per_box: Vec<Vec<Vec<Complex64>>> = boxes
                .iter()
                .map(|b| {
                    (0..grid.dim())
                        .map(|k| interval_coeffs(domain, k, band[k], b.center[k], b.half_widths[k]))
                        .collect()
                })
                .collect();
            let field = SpectralField::from_mode_fn(bgrid.clone(), |l| {
                let mut acc = if l.iter().all(|&m| m == 0) { Complex64::new(bg, 0.0) } else { Complex64::default() };
                for (b, axes) in boxes.iter().zip(&per_box) {
                    let mut prod = Complex64::new(b.height, 0.0);
                    for (k, ax) in axes.iter().enumerate() {
                        prod *= ax[mode_slot(l[k], band[k])];
                    }
                    acc += prod;
                }
                acc
            });
            Ok(BaseCoefficients { field, quadrature_error: None })
        }
        BaseProfile::PiecewisePolynomial { pieces } => {
            if grid.dim() != 1 {
                return Err(Error::InvalidProfile("piecewise polynomials are 1D only".into()));
            }
            let (a, b) = (domain.lower(0), domain.upper(0));
            let len = domain.length(0);
            let mut acc = vec![Complex64::default(); band[0]];
            for p in pieces {
                if p.coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidProfile("non-finite polynomial coefficient".into()));
                }
                let (lo, hi) = (p.lo.max(a), p.hi.min(b));
                if hi <= lo {
                    continue;
                }
                for (slot, l) in (-(band[0] as i64) / 2..band[0] as i64 / 2).enumerate() {
                    let mu = grid.wavenumber(0, l);
                    let mut s = Complex64::default();
                    for (k, c) in p.coeffs.iter().enumerate() {
                        if *c != 0.0 {
                            s += *c * monomial_integral(k, mu, lo, hi, a);
                        }
                    }
                    acc[slot] += s / len;
                }
            }
            let field = SpectralField::from_mode_fn(bgrid, |l| acc[mode_slot(l[0], band[0])]);
            Ok(BaseCoefficients { field, quadrature_error: None })
        }
        BaseProfile::Sampled { profile, oversampling } => {
            if *oversampling == 0 {
                return Err(Error::InvalidProfile("oversampling must be positive".into()));
            }
            let coarse = sampled_coeffs(profile, &bgrid, *oversampling)?;
            let fine = sampled_coeffs(profile, &bgrid, 2 * oversampling)?;
            let err = coarse
                .natural_coeffs()
                .iter()
                .zip(fine.natural_coeffs())
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            if err > QUADRATURE_WARN {
                log::warn!("sampled potential: estimated quadrature error {err:e} exceeds {QUADRATURE_WARN:e}");
            }
            Ok(BaseCoefficients { field: fine, quadrature_error: Some(err) })
        }
        BaseProfile::Coefficients(field) => {
            if !field.grid().same_domain(grid) {
                return Err(invalid("explicit coefficients live on a different domain"));
            }
            let mut out = SpectralField::zeros(bgrid.clone());
            for (m, c) in iter_modes(field) {
                let _ = out.set_coeff(&m, c);
            }
            Ok(BaseCoefficients { field: out, quadrature_error: None })
        }
    }
}

fn iter_modes(field: &SpectralField) -> impl Iterator<Item = (Vec<i64>, Complex64)> + '_ {
    let dims = field.grid().dims().to_vec();
    let ny = dims.get(1).copied().unwrap_or(1);
    let ordered = field.mode_ordered_coeffs();
    ordered.into_iter().enumerate().map(move |(i, c)| {
        let mut m = vec![(i / ny) as i64 - (dims[0] / 2) as i64];
        if dims.len() > 1 {
            m.push((i % ny) as i64 - (ny / 2) as i64);
        }
        (m, c)
    })
}

/// Position of mode `l` in an ascending `T_band` table.
#[inline]
fn mode_slot(l: i64, band: usize) -> usize {
    (l + band as i64 / 2) as usize
}

/// Per-axis factor `(1/L) int_{c-w}^{c+w} exp(-i mu_l (x - a)) dx` for `l` in
/// ascending `T_band` order.
fn interval_coeffs(domain: &Domain, axis: usize, band: usize, center: f64, half: f64) -> Vec<Complex64> {
    let len = domain.length(axis);
    let a = domain.lower(axis);
    (-(band as i64) / 2..band as i64 / 2)
        .map(|l| {
            if l == 0 {
                Complex64::new(2.0 * half / len, 0.0)
            } else {
                let mu = 2.0 * PI * l as f64 / len;
                Complex64::from_polar(2.0 * (mu * half).sin() / (mu * len), -mu * (center - a))
            }
        })
        .collect()
}

/// `int_lo^hi x^k exp(-i mu (x - a)) dx`.
fn monomial_integral(k: usize, mu: f64, lo: f64, hi: f64, a: f64) -> Complex64 {
    if mu == 0.0 {
        return Complex64::new((hi.powi(k as i32 + 1) - lo.powi(k as i32 + 1)) / (k as f64 + 1.0), 0.0);
    }
    // antiderivative exp(s x) sum_j (-1)^j k!/(k-j)! x^(k-j) / s^(j+1), s = -i mu
    let s = Complex64::new(0.0, -mu);
    let anti = |x: f64| {
        let mut sum = Complex64::default();
        let mut falling = 1.0;
        let mut spow = s;
        for j in 0..=k {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * falling * x.powi((k - j) as i32) / spow;
            falling *= (k - j) as f64;
            spow *= s;
        }
        sum * Complex64::from_polar(1.0, -mu * (x - a))
    };
    anti(hi) - anti(lo)
}

fn sampled_coeffs(profile: &ProfileFn, bgrid: &Arc<SpectralGrid>, q: usize) -> Result<SpectralField> {
    let fine = Arc::new(bgrid.refined(q));
    let mut values = Vec::with_capacity(fine.len());
    for i in 0..fine.len() {
        let p = fine.point(i);
        let v = profile(&p[..fine.dim()]);
        if !v.is_finite() {
            return Err(Error::InvalidProfile(format!("non-finite sample {v} at {:?}", &p[..fine.dim()])));
        }
        values.push(Complex64::new(v, 0.0));
    }
    SpectralField::from_values(fine, values)?.truncate(bgrid.dims())
}

/// Amplitude modulation `A(t)`.
#[derive(Clone)]
pub enum Amplitude {
    One,
    /// `amplitude * cos(omega t)`
    Cosine { amplitude: f64, omega: f64 },
    /// `slope * t + intercept`
    Linear { slope: f64, intercept: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Amplitude {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::One => 1.0,
            Self::Cosine { amplitude, omega } => amplitude * (omega * t).cos(),
            Self::Linear { slope, intercept } => slope * t + intercept,
            Self::Custom(f) => f(t),
        }
    }
}

/// Translation `alpha(t)`: the term at time `t` is `V0(x + alpha(t))`.
#[derive(Clone)]
pub enum Shift {
    Zero,
    /// `amplitude * sin(omega t)` (per axis)
    Sine { amplitude: Vec<f64>, omega: f64 },
    /// `offset + velocity * t`
    Linear { velocity: Vec<f64>, offset: Vec<f64> },
    Custom(Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>),
}

impl Shift {
    pub fn eval(&self, t: f64, dim: usize) -> Vec<f64> {
        match self {
            Self::Zero => vec![0.0; dim],
            Self::Sine { amplitude, omega } => amplitude.iter().map(|a| a * (omega * t).sin()).collect(),
            Self::Linear { velocity, offset } => velocity
                .iter()
                .zip(offset.iter().chain(std::iter::repeat(&0.0)))
                .map(|(v, o)| o + v * t)
                .collect(),
            Self::Custom(f) => f(t),
        }
    }
}

#[derive(Clone)]
pub struct TimeLaw {
    pub amplitude: Amplitude,
    pub shift: Shift,
}

impl TimeLaw {
    pub fn identity() -> Self {
        Self { amplitude: Amplitude::One, shift: Shift::Zero }
    }

    pub fn amplitude(amplitude: Amplitude) -> Self {
        Self { amplitude, shift: Shift::Zero }
    }

    pub fn shift(shift: Shift) -> Self {
        Self { amplitude: Amplitude::One, shift }
    }

    pub fn is_identity(&self) -> bool {
        matches!((&self.amplitude, &self.shift), (Amplitude::One, Shift::Zero))
    }
}

impl Default for TimeLaw {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Debug for TimeLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = match &self.amplitude {
            Amplitude::One => "one".to_string(),
            Amplitude::Cosine { amplitude, omega } => format!("{amplitude}*cos({omega}t)"),
            Amplitude::Linear { slope, intercept } => format!("{slope}t+{intercept}"),
            Amplitude::Custom(_) => "custom".into(),
        };
        let s = match &self.shift {
            Shift::Zero => "zero".to_string(),
            Shift::Sine { amplitude, omega } => format!("{amplitude:?}*sin({omega}t)"),
            Shift::Linear { velocity, offset } => format!("{offset:?}+{velocity:?}t"),
            Shift::Custom(_) => "custom".into(),
        };
        write!(f, "TimeLaw {{ amplitude: {a}, shift: {s} }}")
    }
}

/// One rough term: base profile, its time law and precomputed band coefficients.
#[derive(Debug, Clone)]
pub struct PotentialTerm {
    base: BaseProfile,
    law: TimeLaw,
    coeffs: BaseCoefficients,
    band_mu: Vec<Vec<f64>>,
}

impl PotentialTerm {
    pub fn new(base: BaseProfile, law: TimeLaw, grid: &SpectralGrid) -> Result<Self> {
        let coeffs = base_coeffs(&base, grid, None)?;
        let bg = coeffs.field.grid();
        let band_mu = (0..bg.dim()).map(|k| bg.natural_wavenumbers(k)).collect();
        Ok(Self { base, law, coeffs, band_mu })
    }

    pub fn base(&self) -> &BaseProfile {
        &self.base
    }

    pub fn law(&self) -> &TimeLaw {
        &self.law
    }

    pub fn base_coefficients(&self) -> &BaseCoefficients {
        &self.coeffs
    }

    pub fn is_static(&self) -> bool {
        self.law.is_identity()
    }

    /// Band coefficients at time `t`.
    pub fn coeffs_at_time(&self, t: f64) -> SpectralField {
        if self.law.is_identity() {
            return self.coeffs.field.clone();
        }
        let mut buf = vec![Complex64::default(); self.coeffs.field.natural_coeffs().len()];
        self.coeffs_at_time_into(t, &mut buf);
        SpectralField::from_natural_coeffs(self.coeffs.field.grid_arc().clone(), buf)
            .expect("band length is fixed")
    }

    /// Writes the natural-layout band coefficients at time `t` into `out`.
    pub fn coeffs_at_time_into(&self, t: f64, out: &mut [Complex64]) {
        let base = self.coeffs.field.natural_coeffs();
        if self.law.is_identity() {
            out.copy_from_slice(base);
            return;
        }
        let amp = self.law.amplitude.eval(t);
        let dim = self.band_mu.len();
        let alpha = self.law.shift.eval(t, dim);
        let phases: Vec<Vec<Complex64>> = self
            .band_mu
            .iter()
            .zip(&alpha)
            .map(|(mus, al)| mus.iter().map(|mu| Complex64::from_polar(1.0, mu * al)).collect())
            .collect();
        match dim {
            1 => {
                for ((o, b), p) in out.iter_mut().zip(base).zip(&phases[0]) {
                    *o = amp * b * p;
                }
            }
            _ => {
                let ny = phases[1].len();
                for (i, px) in phases[0].iter().enumerate() {
                    let s = amp * px;
                    for j in 0..ny {
                        out[i * ny + j] = s * phases[1][j] * base[i * ny + j];
                    }
                }
            }
        }
    }

    /// `A(t) V0(x + alpha(t))`.
    pub fn value_at(&self, domain: &Domain, x: &[f64], t: f64) -> f64 {
        let amp = self.law.amplitude.eval(t);
        if amp == 0.0 {
            return 0.0;
        }
        let alpha = self.law.shift.eval(t, domain.dim());
        let shifted: Vec<f64> = x.iter().zip(&alpha).map(|(x, a)| x + a).collect();
        amp * self.base.value_at(domain, &shifted)
    }
}

pub type SmoothFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// Smooth part `V2(x, t)`, applied pointwise at nodes.
#[derive(Clone)]
pub struct SmoothPart {
    f: SmoothFn,
}

impl SmoothPart {
    pub fn new(f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f) }
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        (self.f)(x, t)
    }
}

impl fmt::Debug for SmoothPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SmoothPart(..)")
    }
}

/// Grid-independent potential description; instantiate with [`PotentialModel::on_grid`].
#[derive(Debug, Clone, Default)]
pub struct PotentialModel {
    pub rough: Vec<(BaseProfile, TimeLaw)>,
    pub smooth: Option<SmoothPart>,
}

impl PotentialModel {
    pub fn zero() -> Self {
        Self { rough: vec![(BaseProfile::constant(0.0), TimeLaw::identity())], smooth: None }
    }

    pub fn rough(base: BaseProfile, law: TimeLaw) -> Self {
        Self { rough: vec![(base, law)], smooth: None }
    }

    pub fn with_term(mut self, base: BaseProfile, law: TimeLaw) -> Self {
        self.rough.push((base, law));
        self
    }

    pub fn with_smooth(mut self, smooth: SmoothPart) -> Self {
        self.smooth = Some(smooth);
        self
    }

    pub fn on_grid(&self, grid: Arc<SpectralGrid>) -> Result<PotentialSpec> {
        let rough = self
            .rough
            .iter()
            .map(|(b, l)| PotentialTerm::new(b.clone(), l.clone(), &grid))
            .collect::<Result<Vec<_>>>()?;
        PotentialSpec::new(grid, rough, self.smooth.clone())
    }

    /// All parts moved into the smooth (pointwise) slot, for schemes that
    /// never use the extended band.
    pub fn pointwise_value(&self, domain: &Domain, x: &[f64], t: f64) -> f64 {
        let mut v = self.smooth.as_ref().map(|s| s.eval(x, t)).unwrap_or(0.0);
        for (b, l) in &self.rough {
            let amp = l.amplitude.eval(t);
            let alpha = l.shift.eval(t, domain.dim());
            let shifted: Vec<f64> = x.iter().zip(&alpha).map(|(x, a)| x + a).collect();
            v += amp * b.value_at(domain, &shifted);
        }
        v
    }
}

/// Potential instantiated on a simulation grid.
#[derive(Debug, Clone)]
pub struct PotentialSpec {
    grid: Arc<SpectralGrid>,
    rough: Vec<PotentialTerm>,
    smooth: Option<SmoothPart>,
}

impl PotentialSpec {
    pub fn new(grid: Arc<SpectralGrid>, rough: Vec<PotentialTerm>, smooth: Option<SmoothPart>) -> Result<Self> {
        if rough.is_empty() && smooth.is_none() {
            return Err(invalid("potential needs at least one rough term or a smooth part"));
        }
        for t in &rough {
            let bg = t.coeffs.field.grid();
            if !bg.same_domain(&grid) || bg.dims().iter().zip(grid.dims()).any(|(b, n)| *b != BAND_FACTOR * n) {
                return Err(invalid("potential term was built for a different grid"));
            }
        }
        Ok(Self { grid, rough, smooth })
    }

    pub fn zero(grid: Arc<SpectralGrid>) -> Result<Self> {
        PotentialModel::zero().on_grid(grid)
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn rough_terms(&self) -> &[PotentialTerm] {
        &self.rough
    }

    pub fn smooth(&self) -> Option<&SmoothPart> {
        self.smooth.as_ref()
    }

    /// Total `V(x, t)` evaluated pointwise.
    pub fn value_at(&self, x: &[f64], t: f64) -> f64 {
        self.rough_value_at(x, t) + self.smooth_value_at(x, t)
    }

    pub fn rough_value_at(&self, x: &[f64], t: f64) -> f64 {
        let d = self.grid.domain();
        self.rough.iter().map(|term| term.value_at(d, x, t)).sum()
    }

    pub fn smooth_value_at(&self, x: &[f64], t: f64) -> f64 {
        self.smooth.as_ref().map(|s| s.eval(x, t)).unwrap_or(0.0)
    }

    /// `V(x_j, t)` at the simulation nodes.
    pub fn sample_nodes(&self, t: f64) -> Vec<f64> {
        self.sample_on(&self.grid, t, |x, t| self.value_at(x, t))
    }

    pub fn sample_smooth(&self, grid: &SpectralGrid, t: f64) -> Vec<f64> {
        self.sample_on(grid, t, |x, t| self.smooth_value_at(x, t))
    }

    fn sample_on(&self, grid: &SpectralGrid, t: f64, f: impl Fn(&[f64], f64) -> f64) -> Vec<f64> {
        let d = grid.dim();
        (0..grid.len()).map(|i| f(&grid.point(i)[..d], t)).collect()
    }
}

/// `coeffs_at_time`.
pub fn coeffs_at_time(term: &PotentialTerm, t: f64) -> SpectralField {
    term.coeffs_at_time(t)
}

/// `sample_extended`: values of a `T_{2N}` band at the nodes of the grid with
/// twice as many points per axis (`4N` for a band built on an `N` grid).
pub fn sample_extended(band: &SpectralField) -> Vec<Complex64> {
    let fine = band.grid().refined(EXTENDED_GRID_FACTOR / BAND_FACTOR);
    band.eval_on(&fine).expect("refinement shares the domain")
}

/// Parameters for the named presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetParams {
    /// Barrier half-width `l` of `trap_plus_ramp`.
    pub barrier_half_width: f64,
    /// Obstacle speed `v` of `ho2d_plus_obstacle`.
    pub obstacle_speed: f64,
}

impl Default for PresetParams {
    fn default() -> Self {
        Self { barrier_half_width: 0.5, obstacle_speed: 10.0 }
    }
}

pub const PRESETS: &[&str] = &[
    "square_well",
    "modulated_barrier",
    "moving_barrier",
    "trap_plus_ramp",
    "ho2d_plus_obstacle",
    "trap",
    "ho2d",
];

fn square_well_profile() -> BaseProfile {
    // 0 on (-4, 4), 10 elsewhere
    BaseProfile::boxes(10.0, vec![BoxRegion::interval(0.0, 4.0, -10.0)])
}

fn barrier_profile() -> BaseProfile {
    // 10 on (-2, 2)
    BaseProfile::boxes(0.0, vec![BoxRegion::interval(0.0, 2.0, 10.0)])
}

/// Trap: 0 on (-6, 6), x^2/2 elsewhere.
pub fn trap_profile() -> BaseProfile {
    let half_sq = vec![0.0, 0.0, 0.5];
    BaseProfile::PiecewisePolynomial {
        pieces: vec![
            PolyPiece { lo: f64::NEG_INFINITY, hi: -6.0, coeffs: half_sq.clone() },
            PolyPiece { lo: 6.0, hi: f64::INFINITY, coeffs: half_sq },
        ],
    }
}

/// Named potential models.
pub fn preset_model(name: &str, dim: usize, params: PresetParams) -> Result<PotentialModel> {
    let need = |d: usize| {
        if dim == d {
            Ok(())
        } else {
            Err(invalid(format!("preset {name} needs a {d}D domain, got {dim}D")))
        }
    };
    let omega = 8.0 * PI;
    match name {
        "square_well" => {
            need(1)?;
            Ok(PotentialModel::rough(square_well_profile(), TimeLaw::identity()))
        }
        "modulated_barrier" => {
            need(1)?;
            Ok(PotentialModel::rough(
                barrier_profile(),
                TimeLaw::amplitude(Amplitude::Cosine { amplitude: 1.0, omega }),
            ))
        }
        "moving_barrier" => {
            need(1)?;
            Ok(PotentialModel::rough(square_well_profile(), TimeLaw::identity()).with_term(
                barrier_profile(),
                TimeLaw::shift(Shift::Sine { amplitude: vec![2.0], omega }),
            ))
        }
        "trap_plus_ramp" => {
            need(1)?;
            let l = params.barrier_half_width;
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid(format!("barrier half-width must be positive, got {l}")));
            }
            Ok(PotentialModel::rough(trap_profile(), TimeLaw::identity()).with_term(
                BaseProfile::boxes(0.0, vec![BoxRegion::interval(0.0, l, 1.0)]),
                TimeLaw::amplitude(Amplitude::Linear { slope: 5.0, intercept: 0.0 }),
            ))
        }
        "trap" => {
            need(1)?;
            Ok(PotentialModel::rough(trap_profile(), TimeLaw::identity()))
        }
        "ho2d" => {
            need(2)?;
            Ok(PotentialModel::zero().with_smooth(SmoothPart::new(|x, _| 0.5 * x[0] * x[0] + 8.0 * x[1] * x[1])))
        }
        "ho2d_plus_obstacle" => {
            need(2)?;
            let v = params.obstacle_speed;
            if !v.is_finite() {
                return Err(invalid("obstacle speed must be finite"));
            }
            Ok(PotentialModel::rough(
                BaseProfile::boxes(0.0, vec![BoxRegion::rect([5.0, 0.0], [0.125, 0.125], 10.0)]),
                TimeLaw::shift(Shift::Linear { velocity: vec![v, 0.0], offset: vec![0.0, 0.0] }),
            )
            .with_smooth(SmoothPart::new(|x, _| 0.5 * x[0] * x[0] + 8.0 * x[1] * x[1])))
        }
        _ => Err(invalid(format!("unknown potential preset '{name}' (known: {})", PRESETS.join(", ")))),
    }
}

/// A named preset instantiated on `grid`.
pub fn preset_potential(name: &str, grid: Arc<SpectralGrid>, params: PresetParams) -> Result<PotentialSpec> {
    preset_model(name, grid.dim(), params)?.on_grid(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::build_grid;

    fn grid(n: usize) -> Arc<SpectralGrid> {
        Arc::new(build_grid(Domain::interval(-16.0, 16.0).unwrap(), &[n]).unwrap())
    }

    /// Midpoint-rule oracle for `(1/L) int f exp(-i mu (x-a))`, with many points.
    fn quad_oracle(f: impl Fn(f64) -> f64, l: i64, pts: usize) -> Complex64 {
        let (a, len) = (-16.0, 32.0);
        let mu = 2.0 * PI * l as f64 / len;
        let h = len / pts as f64;
        (0..pts)
            .map(|j| {
                let x = a + (j as f64 + 0.5) * h;
                f(x) * Complex64::from_polar(1.0, -mu * (x - a))
            })
            .sum::<Complex64>()
            * (h / len)
    }

    #[test]
    fn indicator_closed_form() {
        let g = grid(64);
        let c = base_coeffs(&barrier_profile(), &g, None).unwrap();
        assert_eq!(c.field.grid().dims(), &[128]);
        assert!((c.field.coeff(&[0]) - Complex64::new(1.25, 0.0)).norm() < 1e-14);
        let v1 = c.field.coeff(&[1]);
        assert!((v1.re - (-(10.0 / PI) * (PI / 8.0).sin())).abs() < 1e-14);
        assert!((v1.re + 1.218119).abs() < 1e-6);
        assert!(v1.im.abs() < 1e-14);
        for l in [1, 2, 5, 17, 63] {
            let want = (-1f64).powi(l as i32) * 10.0 / (PI * l as f64) * (PI * l as f64 / 8.0).sin();
            assert!((c.field.coeff(&[l]).re - want).abs() < 1e-13, "l={l}");
        }
    }

    #[test]
    fn constant_profile_only_mean() {
        let c = base_coeffs(&BaseProfile::constant(3.5), &grid(16), None).unwrap();
        for (i, z) in c.field.natural_coeffs().iter().enumerate() {
            let want = if i == 0 { 3.5 } else { 0.0 };
            assert!((z - Complex64::new(want, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn square_well_mean() {
        let v = preset_potential("square_well", grid(128), PresetParams::default()).unwrap();
        let c = v.rough_terms()[0].base_coefficients();
        assert!((c.field.coeff(&[0]).re - 7.5).abs() < 1e-14);
    }

    #[test]
    fn polynomial_pieces_match_quadrature() {
        let g = grid(32);
        let c = base_coeffs(&trap_profile(), &g, None).unwrap();
        let f = |x: f64| if x.abs() >= 6.0 { 0.5 * x * x } else { 0.0 };
        for l in [0, 1, -3, 7, 31] {
            let want = quad_oracle(f, l, 1 << 20);
            assert!((c.field.coeff(&[l]) - want).norm() < 1e-8, "l={l}");
        }
    }

    #[test]
    fn sampled_profile_quadrature() {
        let g = grid(32);
        let smooth = BaseProfile::sampled(|x| (PI * x[0] / 16.0).cos().powi(2));
        let c = base_coeffs(&smooth, &g, None).unwrap();
        assert!(c.quadrature_error.unwrap() < 1e-12);
        assert!((c.field.coeff(&[0]).re - 0.5).abs() < 1e-13);
        assert!((c.field.coeff(&[2]).re - 0.25).abs() < 1e-13);

        let bad = BaseProfile::sampled(|x| 1.0 / x[0]);
        assert!(matches!(base_coeffs(&bad, &g, None), Err(Error::InvalidProfile(_))));
    }

    #[test]
    fn band_precondition() {
        let g = grid(16);
        assert!(base_coeffs(&barrier_profile(), &g, Some(&[8])).is_err());
        assert!(base_coeffs(&barrier_profile(), &g, Some(&[17])).is_err());
        assert!(base_coeffs(&barrier_profile(), &g, Some(&[16])).is_ok());
    }

    #[test]
    fn hermitian_symmetry() {
        let g2 = Arc::new(build_grid(Domain::rectangle((-8.0, 8.0), (-4.0, 4.0)).unwrap(), &[16, 8]).unwrap());
        let terms = [
            base_coeffs(&square_well_profile(), &grid(32), None).unwrap(),
            base_coeffs(&trap_profile(), &grid(32), None).unwrap(),
            base_coeffs(&BaseProfile::boxes(1.0, vec![BoxRegion::rect([5.0, 0.3], [0.125, 0.5], 10.0)]), &g2, None)
                .unwrap(),
        ];
        for c in &terms {
            let dims = c.field.grid().dims().to_vec();
            let hx = dims[0] as i64 / 2;
            for lx in -hx + 1..hx {
                if dims.len() == 1 {
                    let d = c.field.coeff(&[-lx]) - c.field.coeff(&[lx]).conj();
                    assert!(d.norm() < 1e-10);
                } else {
                    let hy = dims[1] as i64 / 2;
                    for ly in -hy + 1..hy {
                        let d = c.field.coeff(&[-lx, -ly]) - c.field.coeff(&[lx, ly]).conj();
                        assert!(d.norm() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn box_2d_is_separable_product() {
        let g2 = Arc::new(build_grid(Domain::rectangle((-8.0, 8.0), (-4.0, 4.0)).unwrap(), &[8, 8]).unwrap());
        let b = BaseProfile::boxes(0.0, vec![BoxRegion::rect([5.0, 0.0], [0.125, 0.125], 10.0)]);
        let c = base_coeffs(&b, &g2, None).unwrap();
        // mean = 10 * (0.25 * 0.25) / (16 * 8)
        assert!((c.field.coeff(&[0, 0]).re - 10.0 * 0.0625 / 128.0).abs() < 1e-15);
        let fx = |l: i64| {
            let mu = 2.0 * PI * l as f64 / 16.0;
            if l == 0 { Complex64::new(0.25 / 16.0, 0.0) } else {
                Complex64::from_polar(2.0 * (mu * 0.125).sin() / (mu * 16.0), -mu * 13.0)
            }
        };
        let fy = |l: i64| {
            let mu = 2.0 * PI * l as f64 / 8.0;
            if l == 0 { Complex64::new(0.25 / 8.0, 0.0) } else {
                Complex64::from_polar(2.0 * (mu * 0.125).sin() / (mu * 8.0), -mu * 4.0)
            }
        };
        for (lx, ly) in [(1, 0), (3, -2), (-7, 5)] {
            assert!((c.field.coeff(&[lx, ly]) - 10.0 * fx(lx) * fy(ly)).norm() < 1e-15);
        }
    }

    #[test]
    fn separable_law_zero_at_quarter_period() {
        let g = grid(64);
        let v = preset_potential("modulated_barrier", g, PresetParams::default()).unwrap();
        let c = v.rough_terms()[0].coeffs_at_time(1.0 / 16.0);
        assert!(c.natural_coeffs().iter().all(|z| z.norm() < 1e-15));
        // time periodicity of cos(8 pi t)
        let t = 0.137;
        let a = v.rough_terms()[0].coeffs_at_time(t);
        let b = v.rough_terms()[0].coeffs_at_time(t + 0.25);
        for (x, y) in a.natural_coeffs().iter().zip(b.natural_coeffs()) {
            assert!((x - y).norm() < 1e-13);
        }
    }

    #[test]
    fn identity_law_is_bitwise_base() {
        let g = grid(32);
        let t = PotentialTerm::new(square_well_profile(), TimeLaw::identity(), &g).unwrap();
        assert_eq!(t.coeffs_at_time(0.7).natural_coeffs(), t.base_coefficients().field.natural_coeffs());
    }

    #[test]
    fn full_period_shift_is_identity() {
        let g = grid(32);
        let t = PotentialTerm::new(barrier_profile(), TimeLaw::shift(Shift::Linear { velocity: vec![32.0], offset: vec![0.0] }), &g)
            .unwrap();
        let c = t.coeffs_at_time(1.0);
        for (x, y) in c.natural_coeffs().iter().zip(t.base_coefficients().field.natural_coeffs()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn moving_law_matches_direct_shift() {
        let g = grid(64);
        let law = TimeLaw::shift(Shift::Sine { amplitude: vec![2.0], omega: 8.0 * PI });
        let t = PotentialTerm::new(barrier_profile(), law, &g).unwrap();
        let time = 1.0 / 16.0;
        let moved = t.coeffs_at_time(time);
        // V0(x + 2) is the box centred at -2
        let direct = base_coeffs(&BaseProfile::boxes(0.0, vec![BoxRegion::interval(-2.0, 2.0, 10.0)]), &g, None).unwrap();
        for (x, y) in moved.natural_coeffs().iter().zip(direct.field.natural_coeffs()) {
            assert!((x - y).norm() < 1e-10);
        }
        let base = t.base_coefficients().field.coeff(&[3]);
        let mu3 = g.wavenumber(0, 3);
        assert!((moved.coeff(&[3]) - base * Complex64::from_polar(1.0, 2.0 * mu3)).norm() < 1e-14);
    }

    #[test]
    fn laws_commute() {
        let g = grid(32);
        let both = TimeLaw { amplitude: Amplitude::Cosine { amplitude: 2.0, omega: 3.0 }, shift: Shift::Sine { amplitude: vec![1.5], omega: 2.0 } };
        let term = PotentialTerm::new(barrier_profile(), both, &g).unwrap();
        let amp_only = PotentialTerm::new(barrier_profile(), TimeLaw::amplitude(Amplitude::Cosine { amplitude: 2.0, omega: 3.0 }), &g).unwrap();
        let t: f64 = 0.3;
        let alpha = 1.5 * (2.0f64 * t).sin();
        let c = term.coeffs_at_time(t);
        let a = amp_only.coeffs_at_time(t);
        for l in -32..32 {
            let expect = a.coeff(&[l]) * Complex64::from_polar(1.0, g.wavenumber(0, l) * alpha);
            assert!((c.coeff(&[l]) - expect).norm() < 1e-13);
        }
    }

    #[test]
    fn extended_samples() {
        let g = grid(8);
        let bg = Arc::new(band_grid(&g));
        let constant = SpectralField::from_mode_fn(bg.clone(), |l| if l[0] == 0 { Complex64::new(2.0, 0.0) } else { Complex64::default() });
        let s = sample_extended(&constant);
        assert_eq!(s.len(), 32);
        assert!(s.iter().all(|z| (z - Complex64::new(2.0, 0.0)).norm() < 1e-15));

        let mode = SpectralField::from_mode_fn(bg.clone(), |l| if l[0] == 1 { Complex64::new(1.0, 0.0) } else { Complex64::default() });
        let s = sample_extended(&mode);
        let ext = extended_grid(&g);
        for (j, z) in s.iter().enumerate() {
            let y = ext.node(0, j);
            assert!((z - Complex64::from_polar(1.0, g.wavenumber(0, 1) * (y + 16.0))).norm() < 1e-14);
        }

        let sw = base_coeffs(&square_well_profile(), &g, None).unwrap();
        let s = sample_extended(&sw.field);
        let back = SpectralField::from_values(Arc::new(ext), s).unwrap();
        for l in -8..8 {
            assert!((back.coeff(&[l]) - sw.field.coeff(&[l])).norm() < 1e-14);
        }
    }

    #[test]
    fn presets() {
        let g = grid(64);
        let mb = preset_potential("moving_barrier", g.clone(), PresetParams::default()).unwrap();
        for &x in &[-10.0, -3.9, -3.0, -1.0, 0.0, 1.9, 2.5, 4.0, 12.0] {
            let want = if (-4.0 < x && x < -2.0) || (2.0 < x && x < 4.0) { 0.0 } else { 10.0 };
            assert_eq!(mb.value_at(&[x], 0.0), want, "x={x}");
        }
        assert!(preset_potential("no_such", g.clone(), PresetParams::default()).is_err());
        assert!(preset_potential("ho2d_plus_obstacle", g, PresetParams::default()).is_err());

        let g2 = Arc::new(build_grid(Domain::rectangle((-8.0, 8.0), (-4.0, 4.0)).unwrap(), &[32, 16]).unwrap());
        let ob = preset_potential("ho2d_plus_obstacle", g2, PresetParams { obstacle_speed: 10.0, ..Default::default() }).unwrap();
        let term = &ob.rough_terms()[0];
        match term.base() {
            BaseProfile::PiecewiseConstant { boxes, .. } => {
                assert_eq!(boxes[0].height, 10.0);
                assert_eq!(boxes[0].half_widths, vec![0.125, 0.125]);
                assert_eq!(boxes[0].center, vec![5.0, 0.0]);
            }
            other => panic!("unexpected {other:?}"),
        }
        // obstacle at x0 - v t
        assert_eq!(ob.rough_value_at(&[5.0, 0.0], 0.0), 10.0);
        assert_eq!(ob.rough_value_at(&[4.0, 0.0], 0.1), 10.0);
        assert_eq!(ob.rough_value_at(&[5.0, 0.0], 0.1), 0.0);
        assert_eq!(ob.smooth_value_at(&[2.0, 1.0], 0.0), 10.0);
    }

    #[test]
    fn trap_ramp_pointwise() {
        let g = grid(64);
        let v = preset_potential("trap_plus_ramp", g, PresetParams { barrier_half_width: 0.5, ..Default::default() }).unwrap();
        assert_eq!(v.value_at(&[0.0], 0.4), 2.0);
        assert_eq!(v.value_at(&[3.0], 0.4), 0.0);
        assert_eq!(v.value_at(&[8.0], 0.4), 32.0);
        assert_eq!(v.value_at(&[-6.0], 0.0), 18.0);
    }
}
