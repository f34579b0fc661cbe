//! Fully discrete first-order splitting schemes and the time loop.
//!
//! One step maps node values `psi^n` to `psi^{n+1}`: a pointwise
//! potential/nonlinear stage followed by the exact kinetic multiplier
//! `exp(-i tau |mu_l|^2)` on the modes `T_N`. The schemes differ only in the
//! first stage:
//!
//! * `Tsfp`: `psi_j exp(-i tau (V(x_j) + beta |psi_j|^2))`
//! * `Ltsfp`: `(1 - i tau V(x_j)) psi_j exp(-i tau beta |psi_j|^2)`
//! * `Ltsefp`: `w = I_N(psi exp(-i tau beta |psi|^2))`, then
//!   `w_hat - i tau P_N(V w)` with the product formed exactly on the `4N` grid
//!   from the `T_{2N}` coefficients of `V(., t_n)`
//! * `LtsefpSplit`: as `Ltsefp` for the rough terms, with the smooth part
//!   joining the nonlinear phase.

use std::fmt;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft::FftNd;
use crate::potential::{PotentialSpec, BAND_FACTOR, EXTENDED_GRID_FACTOR};
use crate::spectral::{forward_normalized, remap_modes, SpectralField, SpectralGrid};

/// Node modulus above which a run is declared diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Ltsefp,
    Tsfp,
    Ltsfp,
    LtsefpSplit,
}

impl Scheme {
    pub fn id(self) -> u32 {
        match self {
            Scheme::Ltsefp => 0,
            Scheme::Tsfp => 1,
            Scheme::Ltsfp => 2,
            Scheme::LtsefpSplit => 3,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        [Scheme::Ltsefp, Scheme::Tsfp, Scheme::Ltsfp, Scheme::LtsefpSplit]
            .into_iter()
            .find(|s| s.id() == id)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Ltsefp => "ltsefp",
            Scheme::Tsfp => "tsfp",
            Scheme::Ltsfp => "ltsfp",
            Scheme::LtsefpSplit => "ltsefp_split",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ltsefp" => Ok(Scheme::Ltsefp),
            "tsfp" => Ok(Scheme::Tsfp),
            "ltsfp" => Ok(Scheme::Ltsfp),
            "ltsefp_split" => Ok(Scheme::LtsefpSplit),
            other => Err(invalid(format!("unknown scheme '{other}'"))),
        }
    }
}

/// What to do when `tau > h^2 / pi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CflPolicy {
    Enforce,
    #[default]
    Warn,
    Off,
}

impl std::str::FromStr for CflPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "enforce" => Ok(CflPolicy::Enforce),
            "warn" => Ok(CflPolicy::Warn),
            "off" => Ok(CflPolicy::Off),
            other => Err(invalid(format!("unknown cfl policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub tau: f64,
    pub beta: f64,
    pub t_final: f64,
    pub cfl: CflPolicy,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, tau: f64, beta: f64, t_final: f64) -> Self {
        Self { scheme, tau, beta, t_final, cfl: CflPolicy::default() }
    }

    pub fn with_cfl(mut self, cfl: CflPolicy) -> Self {
        self.cfl = cfl;
        self
    }

    /// `round(T / tau)`, requiring `T` to be a multiple of `tau` to 1e-9 relative.
    pub fn step_count(&self) -> Result<usize> {
        step_count(self.t_final, self.tau)
    }

    /// Applies the CFL policy for `grid`; returns whether `tau <= h^2/pi`.
    pub fn check_cfl(&self, grid: &SpectralGrid) -> Result<bool> {
        let limit = grid.cfl_limit();
        let ok = self.tau <= limit;
        if !ok {
            match self.cfl {
                CflPolicy::Enforce => {
                    return Err(Error::CflViolation { tau: self.tau, h: grid.min_h(), limit })
                }
                CflPolicy::Warn => log::warn!(
                    "tau={:e} exceeds h^2/pi={limit:e} (h={:e}); expect order reduction",
                    self.tau,
                    grid.min_h()
                ),
                CflPolicy::Off => {}
            }
        }
        Ok(ok)
    }
}

/// Number of steps of size `tau` covering `[0, t_final]`.
pub fn step_count(t_final: f64, tau: f64) -> Result<usize> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid(format!("tau must be positive, got {tau}")));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(invalid(format!("final time must be non-negative, got {t_final}")));
    }
    let n = (t_final / tau).round();
    let rem = t_final - n * tau;
    if rem.abs() > 1e-9 * t_final.max(tau) {
        return Err(invalid(format!(
            "final time T={t_final} is not an integer multiple of tau={tau} (remainder {rem:e})"
        )));
    }
    Ok(n as usize)
}

/// Wave function at step `n`, with node values and coefficients kept in sync.
#[derive(Debug, Clone)]
pub struct EvolutionState {
    step: usize,
    tau: f64,
    field: SpectralField,
    wall_seconds: f64,
}

impl EvolutionState {
    pub fn new(mut psi0: SpectralField, tau: f64) -> Self {
        psi0.cache_values();
        Self { step: 0, tau, field: psi0, wall_seconds: 0.0 }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// `t_n = n tau`.
    pub fn time(&self) -> f64 {
        self.step as f64 * self.tau
    }

    pub fn field(&self) -> &SpectralField {
        &self.field
    }

    pub fn into_field(self) -> SpectralField {
        self.field
    }

    pub fn wall_seconds(&self) -> f64 {
        self.wall_seconds
    }
}

/// Per-step quantities reported to observers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Index of the state just produced.
    pub step: usize,
    /// Time of the potential evaluation, `t_{n}` for step `n -> n+1`.
    pub t_potential: f64,
    /// `||I_N(psi^n exp(-i tau f))||_{L2}` (for TSFP: after the full phase).
    pub pre_potential_norm: f64,
    /// Largest `|V|` entering the Lawson factor (4N samples for the extended
    /// schemes, node values otherwise).
    pub v_sup: f64,
    /// `||psi^{n+1}||_{L2}`.
    pub norm: f64,
}

/// Hook invoked at step 0 (`info = None`) and after every step.
pub trait Observer {
    fn observe(&mut self, state: &EvolutionState, info: Option<&StepInfo>) -> Result<()>;
}

impl<F> Observer for F
where
    F: FnMut(&EvolutionState, Option<&StepInfo>) -> Result<()>,
{
    fn observe(&mut self, state: &EvolutionState, info: Option<&StepInfo>) -> Result<()> {
        self(state, info)
    }
}

/// Records `(step, t, ||psi||_{L2})` every `stride` steps (and at the end).
#[derive(Debug, Clone)]
pub struct NormTrace {
    stride: usize,
    pub samples: Vec<(usize, f64, f64)>,
}

impl NormTrace {
    pub fn new(stride: usize) -> Self {
        Self { stride: stride.max(1), samples: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,t,l2_norm\n");
        for (n, t, norm) in &self.samples {
            s.push_str(&format!("{n},{t:.12e},{norm:.16e}\n"));
        }
        s
    }
}

impl Observer for NormTrace {
    fn observe(&mut self, state: &EvolutionState, info: Option<&StepInfo>) -> Result<()> {
        let norm = match info {
            Some(i) => i.norm,
            None => state.field().l2_norm(),
        };
        if state.step() % self.stride == 0 {
            self.samples.push((state.step(), state.time(), norm));
        }
        Ok(())
    }
}

/// Captures the field at requested times, which must fall on step boundaries.
#[derive(Debug, Clone)]
pub struct SnapshotSampler {
    targets: Vec<(usize, f64)>,
    pub snapshots: Vec<(f64, SpectralField)>,
}

impl SnapshotSampler {
    pub fn new(times: &[f64], tau: f64, t_final: f64) -> Result<Self> {
        let total = step_count(t_final, tau)?;
        let mut targets = Vec::with_capacity(times.len());
        for &t in times {
            let n = step_count(t, tau)
                .map_err(|_| invalid(format!("sample time {t} is not a multiple of tau={tau}")))?;
            if n > total {
                return Err(invalid(format!("sample time {t} lies beyond T={t_final}")));
            }
            targets.push((n, t));
        }
        targets.sort_by(|a, b| a.0.cmp(&b.0));
        targets.dedup_by_key(|x| x.0);
        Ok(Self { targets, snapshots: Vec::new() })
    }
}

impl Observer for SnapshotSampler {
    fn observe(&mut self, state: &EvolutionState, _info: Option<&StepInfo>) -> Result<()> {
        for &(n, t) in &self.targets {
            if n == state.step() {
                self.snapshots.push((t, state.field().clone()));
            }
        }
        Ok(())
    }
}

/// Precomputed plans, multipliers and scratch for one grid/potential/config.
pub struct Stepper<'a> {
    potential: &'a PotentialSpec,
    config: SchemeConfig,
    grid: SpectralGrid,
    ext_dims: Vec<usize>,
    band_dims: Vec<usize>,
    fft_n: FftNd,
    fft_ext: FftNd,
    kinetic: Vec<Complex64>,
    vol: f64,
    /// Sum of 4N samples of static rough terms.
    static_ext: Option<Vec<Complex64>>,
    static_nodes: Option<Vec<f64>>,
    band_buf: Vec<Complex64>,
    band_acc: Vec<Complex64>,
    ext_v: Vec<Complex64>,
    ext_w: Vec<Complex64>,
    phase_buf: Vec<Complex64>,
    trunc: Vec<Complex64>,
}

impl<'a> Stepper<'a> {
    pub fn new(potential: &'a PotentialSpec, config: SchemeConfig) -> Result<Self> {
        if !(config.tau > 0.0 && config.tau.is_finite()) {
            return Err(invalid(format!("tau must be positive, got {}", config.tau)));
        }
        if !config.beta.is_finite() {
            return Err(invalid("beta must be finite"));
        }
        let grid = (**potential.grid()).clone();
        match config.scheme {
            Scheme::Ltsefp if potential.smooth().is_some() => {
                return Err(invalid(
                    "ltsefp applies every term through the extended band; use ltsefp_split for a smooth part",
                ))
            }
            Scheme::LtsefpSplit if potential.smooth().is_none() => {
                return Err(invalid("ltsefp_split needs a declared smooth part"))
            }
            _ => {}
        }
        config.check_cfl(&grid)?;

        let ext_dims: Vec<usize> = grid.dims().iter().map(|n| EXTENDED_GRID_FACTOR * n).collect();
        let band_dims: Vec<usize> = grid.dims().iter().map(|n| BAND_FACTOR * n).collect();
        let ext_len: usize = ext_dims.iter().product();
        let band_len: usize = band_dims.iter().product();
        let tau = config.tau;
        let kinetic = grid
            .mu_squared()
            .into_iter()
            .map(|m2| Complex64::from_polar(1.0, -tau * m2))
            .collect();
        let extended = matches!(config.scheme, Scheme::Ltsefp | Scheme::LtsefpSplit);
        let mut stepper = Self {
            potential,
            config,
            vol: grid.domain().measure(),
            fft_n: FftNd::new(grid.dims()),
            fft_ext: FftNd::new(if extended { &ext_dims } else { &[4][..1] }),
            kinetic,
            static_ext: None,
            static_nodes: None,
            band_buf: vec![Complex64::default(); if extended { band_len } else { 0 }],
            band_acc: vec![Complex64::default(); if extended { band_len } else { 0 }],
            ext_v: vec![Complex64::default(); if extended { ext_len } else { 0 }],
            ext_w: vec![Complex64::default(); if extended { ext_len } else { 0 }],
            phase_buf: vec![Complex64::default(); grid.len()],
            trunc: vec![Complex64::default(); grid.len()],
            ext_dims,
            band_dims,
            grid,
        };
        if extended {
            stepper.prepare_static_extended();
        } else {
            let all_static = potential.smooth().is_none() && potential.rough_terms().iter().all(|t| t.is_static());
            if all_static {
                stepper.static_nodes = Some(potential.sample_nodes(0.0));
            }
        }
        Ok(stepper)
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    fn prepare_static_extended(&mut self) {
        let statics: Vec<_> = self.potential.rough_terms().iter().filter(|t| t.is_static()).collect();
        if statics.is_empty() {
            return;
        }
        self.band_acc.iter_mut().for_each(|c| *c = Complex64::default());
        for term in statics {
            term.coeffs_at_time_into(0.0, &mut self.band_buf);
            for (a, b) in self.band_acc.iter_mut().zip(&self.band_buf) {
                *a += b;
            }
        }
        let mut ext = vec![Complex64::default(); self.ext_v.len()];
        remap_modes(&self.band_acc, &self.band_dims, &mut ext, &self.ext_dims);
        self.fft_ext.inverse(&mut ext);
        self.static_ext = Some(ext);
    }

    /// Samples `P_{2N} V_rough(., t)` on the `4N` grid into `ext_v`.
    fn sample_rough_extended(&mut self, t: f64) {
        let dynamic: Vec<_> = self.potential.rough_terms().iter().filter(|t| !t.is_static()).collect();
        if dynamic.is_empty() {
            match &self.static_ext {
                Some(s) => self.ext_v.copy_from_slice(s),
                None => self.ext_v.iter_mut().for_each(|c| *c = Complex64::default()),
            }
            return;
        }
        self.band_acc.iter_mut().for_each(|c| *c = Complex64::default());
        for term in dynamic {
            term.coeffs_at_time_into(t, &mut self.band_buf);
            for (a, b) in self.band_acc.iter_mut().zip(&self.band_buf) {
                *a += b;
            }
        }
        remap_modes(&self.band_acc, &self.band_dims, &mut self.ext_v, &self.ext_dims);
        self.fft_ext.inverse(&mut self.ext_v);
        if let Some(s) = &self.static_ext {
            for (v, s) in self.ext_v.iter_mut().zip(s) {
                *v += s;
            }
        }
    }

    fn nodal_potential(&self, t: f64) -> std::borrow::Cow<'_, [f64]> {
        match &self.static_nodes {
            Some(v) => std::borrow::Cow::Borrowed(v),
            None => std::borrow::Cow::Owned(self.potential.sample_nodes(t)),
        }
    }

    fn l2_of_coeffs(&self, c: &[Complex64]) -> f64 {
        (self.vol * c.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// Advances `state` by one step of the configured scheme.
    pub fn step(&mut self, state: &mut EvolutionState) -> Result<StepInfo> {
        if *state.field.grid() != self.grid {
            return Err(invalid("state lives on a different grid than the potential"));
        }
        let started = Instant::now();
        let tau = self.config.tau;
        let beta = self.config.beta;
        let t_n = state.time();
        state.field.cache_values();
        let mut values = state.field.node_values().into_owned();

        let (mut coeffs, pre_norm, v_sup) = match self.config.scheme {
            Scheme::Tsfp => {
                let v = self.nodal_potential(t_n);
                let v_sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                for (psi, vj) in values.iter_mut().zip(v.iter()) {
                    *psi *= Complex64::from_polar(1.0, -tau * (vj + beta * psi.norm_sqr()));
                }
                forward_normalized(&mut self.fft_n, &mut values);
                let pre = self.l2_of_coeffs(&values);
                (values, pre, v_sup)
            }
            Scheme::Ltsfp => {
                let v = self.nodal_potential(t_n).into_owned();
                let v_sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                apply_nonlinear_phase(&mut values, tau, beta);
                self.phase_buf.copy_from_slice(&values);
                forward_normalized(&mut self.fft_n, &mut self.phase_buf);
                let pre = self.l2_of_coeffs(&self.phase_buf);
                for (psi, vj) in values.iter_mut().zip(&v) {
                    *psi *= Complex64::new(1.0, -tau * vj);
                }
                forward_normalized(&mut self.fft_n, &mut values);
                (values, pre, v_sup)
            }
            Scheme::Ltsefp | Scheme::LtsefpSplit => {
                if self.config.scheme == Scheme::LtsefpSplit {
                    let v2 = self.potential.sample_smooth(&self.grid, t_n);
                    for (psi, vj) in values.iter_mut().zip(&v2) {
                        *psi *= Complex64::from_polar(1.0, -tau * (vj + beta * psi.norm_sqr()));
                    }
                } else {
                    apply_nonlinear_phase(&mut values, tau, beta);
                }
                forward_normalized(&mut self.fft_n, &mut values);
                let pre = self.l2_of_coeffs(&values);
                let v_sup = if self.potential.rough_terms().is_empty() {
                    0.0
                } else {
                    self.sample_rough_extended(t_n);
                    // w on the 4N grid
                    remap_modes(&values, self.grid.dims(), &mut self.ext_w, &self.ext_dims);
                    self.fft_ext.inverse(&mut self.ext_w);
                    let mut v_sup = 0.0f64;
                    for (w, v) in self.ext_w.iter_mut().zip(&self.ext_v) {
                        v_sup = v_sup.max(v.norm());
                        *w *= v;
                    }
                    forward_normalized(&mut self.fft_ext, &mut self.ext_w);
                    remap_modes(&self.ext_w, &self.ext_dims, &mut self.trunc, self.grid.dims());
                    let s = Complex64::new(0.0, -tau);
                    for (c, g) in values.iter_mut().zip(&self.trunc) {
                        *c += s * g;
                    }
                    v_sup
                };
                (values, pre, v_sup)
            }
        };

        for (c, k) in coeffs.iter_mut().zip(&self.kinetic) {
            *c *= k;
        }
        let norm = self.l2_of_coeffs(&coeffs);
        let mut new_values = coeffs.clone();
        self.fft_n.inverse(&mut new_values);
        state.step += 1;
        let diverged = !norm.is_finite()
            || new_values.iter().any(|z| !(z.norm_sqr() <= DIVERGENCE_LIMIT * DIVERGENCE_LIMIT));
        state.field = SpectralField::from_parts(state.field.grid_arc().clone(), coeffs, Some(new_values));
        state.wall_seconds += started.elapsed().as_secs_f64();
        if diverged {
            return Err(Error::Diverged { step: state.step });
        }
        Ok(StepInfo { step: state.step, t_potential: t_n, pre_potential_norm: pre_norm, v_sup, norm })
    }
}

fn apply_nonlinear_phase(values: &mut [Complex64], tau: f64, beta: f64) {
    if beta == 0.0 {
        return;
    }
    for psi in values.iter_mut() {
        *psi *= Complex64::from_polar(1.0, -tau * beta * psi.norm_sqr());
    }
}

/// Outcome of [`evolve`].
#[derive(Debug, Clone)]
pub struct Evolution {
    pub state: EvolutionState,
    pub steps: usize,
    pub initial_norm: f64,
    pub final_norm: f64,
    pub cfl_satisfied: bool,
}

/// Runs `round(T/tau)` steps from `psi0`, calling observers at every step boundary.
pub fn evolve(
    psi0: &SpectralField,
    potential: &PotentialSpec,
    config: &SchemeConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<Evolution> {
    let steps = config.step_count()?;
    if psi0.grid() != &**potential.grid() {
        return Err(invalid("initial field and potential live on different grids"));
    }
    let cfl_satisfied = config.tau <= potential.grid().cfl_limit();
    let mut stepper = Stepper::new(potential, *config)?;
    let mut state = EvolutionState::new(psi0.clone(), config.tau);
    let initial_norm = psi0.l2_norm();
    for o in observers.iter_mut() {
        o.observe(&state, None)?;
    }
    let mut final_norm = initial_norm;
    for _ in 0..steps {
        let info = stepper.step(&mut state)?;
        final_norm = info.norm;
        for o in observers.iter_mut() {
            o.observe(&state, Some(&info))?;
        }
    }
    Ok(Evolution { state, steps, initial_norm, final_norm, cfl_satisfied })
}

/// `kinetic_step`: multiplies mode `l` by `exp(-i tau |mu_l|^2)`.
pub fn kinetic_step(field: &SpectralField, tau: f64) -> SpectralField {
    let mu2 = field.grid().mu_squared();
    let coeffs = field
        .natural_coeffs()
        .iter()
        .zip(mu2)
        .map(|(c, m)| c * Complex64::from_polar(1.0, -tau * m))
        .collect();
    SpectralField::from_natural_coeffs(field.grid_arc().clone(), coeffs).expect("same length")
}

/// `nonlinear_phase`: `v_j exp(-i tau beta |v_j|^2)`.
pub fn nonlinear_phase(values: &[Complex64], tau: f64, beta: f64) -> Vec<Complex64> {
    let mut out = values.to_vec();
    apply_nonlinear_phase(&mut out, tau, beta);
    out
}

/// `lawson_potential_apply`: `w_hat - i tau P_N(V w)`, with `V` given by its
/// `T_{2N}` coefficients and the product formed on the `4N` grid.
pub fn lawson_potential_apply(w: &SpectralField, v: &SpectralField, tau: f64) -> Result<SpectralField> {
    let n = w.grid().dims();
    let band: Vec<usize> = n.iter().map(|k| BAND_FACTOR * k).collect();
    if !w.grid().same_domain(v.grid()) {
        return Err(invalid("w and V live on different domains"));
    }
    if v.grid().dims() != band.as_slice() {
        return Err(invalid(format!(
            "potential band {:?} must be {:?} for w on {:?}",
            v.grid().dims(),
            band,
            n
        )));
    }
    let ext: Vec<usize> = n.iter().map(|k| EXTENDED_GRID_FACTOR * k).collect();
    let len: usize = ext.iter().product();
    let mut fft = FftNd::new(&ext);
    let mut vy = vec![Complex64::default(); len];
    remap_modes(v.natural_coeffs(), &band, &mut vy, &ext);
    fft.inverse(&mut vy);
    let mut wy = vec![Complex64::default(); len];
    remap_modes(w.natural_coeffs(), n, &mut wy, &ext);
    fft.inverse(&mut wy);
    for (a, b) in wy.iter_mut().zip(&vy) {
        *a *= b;
    }
    forward_normalized(&mut fft, &mut wy);
    let mut g = vec![Complex64::default(); w.grid().len()];
    remap_modes(&wy, &ext, &mut g, n);
    let s = Complex64::new(0.0, -tau);
    let coeffs = w.natural_coeffs().iter().zip(&g).map(|(a, b)| a + s * b).collect();
    SpectralField::from_natural_coeffs(w.grid_arc().clone(), coeffs)
}
