//! Reference solutions, error norms, convergence sweeps and order fits.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::potential::{preset_model, PotentialModel, PotentialSpec, PresetParams};
use crate::propagator::{evolve, step_count, CflPolicy, Observer, Scheme, SchemeConfig, SnapshotSampler, StepInfo};
use crate::propagator::EvolutionState;
use crate::spectral::{Domain, SpectralField, SpectralGrid};

/// Relative rounding floor used to drop saturated rows from slope fits.
pub const ROUNDING_FLOOR: f64 = 1e-12;
/// Rows must exceed this multiple of the floor to enter a fit.
pub const FLOOR_MARGIN: f64 = 100.0;

#[derive(Debug, Clone)]
pub enum InitialDatum {
    /// `exp(-|x|^2/2)` interpolated on the grid.
    Gaussian,
    /// A field on the same domain, resampled by truncation or zero padding.
    Field(SpectralField),
}

#[derive(Debug, Clone)]
pub struct ProblemSetup {
    pub domain: Domain,
    pub beta: f64,
    pub t_final: f64,
    pub initial: InitialDatum,
    pub potential: PotentialModel,
}

impl ProblemSetup {
    /// Square well on `(-16, 16)`, `beta = 1`, `T = 1`, Gaussian datum.
    pub fn square_well() -> Self {
        Self::preset("square_well", Domain::interval(-16.0, 16.0).expect("valid"), 1.0, 1.0, PresetParams::default())
            .expect("known preset")
    }

    pub fn preset(name: &str, domain: Domain, beta: f64, t_final: f64, params: PresetParams) -> Result<Self> {
        let potential = preset_model(name, domain.dim(), params)?;
        Ok(Self { domain, beta, t_final, initial: InitialDatum::Gaussian, potential })
    }

    /// Grid with mesh size `h` on every axis.
    pub fn grid(&self, h: f64) -> Result<Arc<SpectralGrid>> {
        Ok(Arc::new(SpectralGrid::with_mesh_size(self.domain.clone(), &vec![h; self.domain.dim()])?))
    }

    pub fn initial_field(&self, grid: &Arc<SpectralGrid>) -> Result<SpectralField> {
        match &self.initial {
            InitialDatum::Gaussian => {
                let d = grid.dim();
                Ok(SpectralField::from_fn(grid.clone(), |p| {
                    let r2: f64 = p[..d].iter().map(|x| x * x).sum();
                    Complex64::new((-r2 / 2.0).exp(), 0.0)
                }))
            }
            InitialDatum::Field(f) => resample(f, grid),
        }
    }

    pub fn potential_on(&self, grid: &Arc<SpectralGrid>) -> Result<PotentialSpec> {
        self.potential.on_grid(grid.clone())
    }
}

/// Moves `f` onto `grid` by keeping the shared modes.
pub fn resample(f: &SpectralField, grid: &Arc<SpectralGrid>) -> Result<SpectralField> {
    if !f.grid().same_domain(grid) {
        return Err(invalid("initial field lives on a different domain"));
    }
    let mut coeffs = vec![Complex64::default(); grid.len()];
    crate::spectral::remap_modes(f.natural_coeffs(), f.grid().dims(), &mut coeffs, grid.dims());
    SpectralField::from_natural_coeffs(grid.clone(), coeffs)
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub grid: Arc<SpectralGrid>,
    pub samples: Vec<(f64, SpectralField)>,
    pub scheme: Scheme,
    pub tau: f64,
    pub h: f64,
}

impl ReferenceSolution {
    /// Wraps an externally computed field as the reference at time `t`.
    pub fn from_field(field: SpectralField, t: f64, scheme: Scheme, tau: f64) -> Self {
        let h = field.grid().min_h();
        Self { grid: field.grid_arc().clone(), samples: vec![(t, field)], scheme, tau, h }
    }

    pub fn at(&self, t: f64) -> Option<&SpectralField> {
        self.samples
            .iter()
            .find(|(s, _)| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .map(|(_, f)| f)
    }
}

/// Fine-grid run of `scheme`; errors if `tau_e > h_e^2/pi`.
pub fn compute_reference(
    setup: &ProblemSetup,
    scheme: Scheme,
    h_e: f64,
    tau_e: f64,
    times: &[f64],
) -> Result<ReferenceSolution> {
    let grid = setup.grid(h_e)?;
    if tau_e > grid.cfl_limit() {
        return Err(invalid(format!(
            "reference tau_e={tau_e:e} violates tau <= h^2/pi = {:e} for h_e={h_e:e}",
            grid.cfl_limit()
        )));
    }
    let times: Vec<f64> = if times.is_empty() { vec![setup.t_final] } else { times.to_vec() };
    let psi0 = setup.initial_field(&grid)?;
    let pot = setup.potential_on(&grid)?;
    let cfg = SchemeConfig::new(scheme, tau_e, setup.beta, setup.t_final).with_cfl(CflPolicy::Enforce);
    let mut sampler = SnapshotSampler::new(&times, tau_e, setup.t_final)?;
    evolve(&psi0, &pot, &cfg, &mut [&mut sampler])?;
    Ok(ReferenceSolution { grid, samples: sampler.snapshots, scheme, tau: tau_e, h: h_e })
}

/// `(||psi_ref - I_N psi||_{L2}, ..._{H1})` with the coarse field zero-padded to the reference modes.
pub fn field_error(numeric: &SpectralField, reference: &SpectralField) -> Result<(f64, f64)> {
    if !numeric.grid().same_domain(reference.grid()) {
        return Err(invalid("numeric and reference fields live on different domains"));
    }
    let padded = numeric.zero_pad(reference.grid().dims())?;
    Ok(reference.sub(&padded)?.norms())
}

pub fn error_against_reference(numeric: &SpectralField, reference: &ReferenceSolution, t: f64) -> Result<(f64, f64)> {
    let r = reference.at(t).ok_or_else(|| invalid(format!("no reference sample at t={t}")))?;
    field_error(numeric, r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub h: f64,
    pub tau: f64,
    pub e_l2: f64,
    pub e_h1: f64,
    pub cfl: bool,
    pub seconds: f64,
    /// Step at which the run diverged, if it did.
    pub diverged: Option<usize>,
    /// Largest `||psi^{n+1}|| / (sqrt(1 + tau^2 ||V||_inf^2) ||w||)` over all steps.
    pub lawson_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    VsTau,
    VsH,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    L2,
    H1,
}

impl ErrorNorm {
    fn pick(self, r: &SweepRow) -> f64 {
        match self {
            ErrorNorm::L2 => r.e_l2,
            ErrorNorm::H1 => r.e_h1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ErrorNorm::L2 => "L2",
            ErrorNorm::H1 => "H1",
        }
    }
}

/// Least-squares fit of `log10(error)` against `log10(parameter)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    /// Max absolute deviation of the fit, in decades.
    pub residual: f64,
    pub points: usize,
}

/// Slope of `log(error)` vs `log(parameter)` over rows with finite positive errors.
pub fn estimate_order(rows: &[SweepRow], which: SweepKind, norm: ErrorNorm) -> Result<OrderFit> {
    estimate_order_above(rows, which, norm, 0.0)
}

/// As [`estimate_order`], keeping only rows whose error exceeds `floor`.
pub fn estimate_order_above(rows: &[SweepRow], which: SweepKind, norm: ErrorNorm, floor: f64) -> Result<OrderFit> {
    let mut pts = Vec::new();
    for r in rows {
        let e = norm.pick(r);
        let x = match which {
            SweepKind::VsTau => r.tau,
            SweepKind::VsH => r.h,
        };
        if r.diverged.is_some() || !e.is_finite() || e <= floor || e <= 0.0 {
            log::info!("order fit: excluding row h={} tau={} ({} error {e:e})", r.h, r.tau, norm.name());
            continue;
        }
        pts.push((x.log10(), e.log10()));
    }
    if pts.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 usable rows for a {} slope, got {}",
            norm.name(),
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all usable rows share one parameter value".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let residual = pts.iter().map(|p| (p.1 - icpt - slope * p.0).abs()).fold(0.0, f64::max);
    Ok(OrderFit { slope, residual, points: pts.len() })
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub scheme: Scheme,
    pub rows: Vec<SweepRow>,
    /// `||psi_0||_{L2}`, scaling the rounding floor.
    pub initial_norm: f64,
}

/// One fitted slope of a report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupFit {
    /// The fixed parameter of the group (`h` for temporal sweeps, `tau` for spatial).
    pub fixed: f64,
    pub norm: ErrorNorm,
    pub fit: std::result::Result<OrderFit, ()>,
}

impl SweepReport {
    pub fn floor(&self) -> f64 {
        FLOOR_MARGIN * ROUNDING_FLOOR * self.initial_norm
    }

    fn groups(&self) -> Vec<(f64, Vec<SweepRow>)> {
        let mut out: Vec<(f64, Vec<SweepRow>)> = Vec::new();
        for r in &self.rows {
            let key = match self.kind {
                SweepKind::VsTau => r.h,
                SweepKind::VsH => r.tau,
            };
            match out.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(*r),
                None => out.push((key, vec![*r])),
            }
        }
        out
    }

    /// Slope for the rows sharing `fixed` (or the only group when `None`).
    pub fn fit(&self, norm: ErrorNorm, fixed: Option<f64>) -> Result<OrderFit> {
        let groups = self.groups();
        let rows = match fixed {
            Some(k) => groups
                .into_iter()
                .find(|(g, _)| (g - k).abs() <= 1e-12 * k.abs())
                .map(|(_, r)| r)
                .ok_or_else(|| invalid(format!("no rows with fixed parameter {k}")))?,
            None => self.rows.clone(),
        };
        estimate_order_above(&rows, self.kind, norm, self.floor())
    }

    pub fn fits(&self) -> Vec<GroupFit> {
        let mut out = Vec::new();
        for (fixed, rows) in self.groups() {
            for norm in [ErrorNorm::L2, ErrorNorm::H1] {
                let fit = estimate_order_above(&rows, self.kind, norm, self.floor()).map_err(|_| ());
                out.push(GroupFit { fixed, norm, fit });
            }
        }
        out
    }

    /// CSV with header `h,tau,e_l2,e_h1,cfl,seconds` and `#` footer lines.
    /// Without `timings` the seconds column is written as 0 so reruns are byte-identical.
    pub fn to_csv(&self, timings: bool) -> String {
        let mut s = String::from("h,tau,e_l2,e_h1,cfl,seconds\n");
        for r in &self.rows {
            let secs = if timings { r.seconds } else { 0.0 };
            let _ = writeln!(s, "{:e},{:e},{:.16e},{:.16e},{},{:.6}", r.h, r.tau, r.e_l2, r.e_h1, r.cfl, secs);
        }
        let (kind, fixed) = match self.kind {
            SweepKind::VsTau => ("vs_tau", "h"),
            SweepKind::VsH => ("vs_h", "tau"),
        };
        let _ = writeln!(s, "# scheme={} sweep={kind}", self.scheme);
        for r in self.rows.iter().filter(|r| r.diverged.is_some()) {
            let _ = writeln!(s, "# diverged h={:e} tau={:e} step={}", r.h, r.tau, r.diverged.unwrap_or(0));
        }
        for g in self.fits() {
            match g.fit {
                Ok(f) => {
                    let _ = writeln!(
                        s,
                        "# fit {kind} {fixed}={:e} norm={} slope={:.6} residual={:.3e} points={}",
                        g.fixed,
                        g.norm.name(),
                        f.slope,
                        f.residual,
                        f.points
                    );
                }
                Err(()) => {
                    let _ = writeln!(s, "# fit {kind} {fixed}={:e} norm={} insufficient-data", g.fixed, g.norm.name());
                }
            }
        }
        s
    }
}

/// How sweep points are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    /// Rayon worker pool (sequential when built without the `parallel` feature).
    #[default]
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub exec: ExecMode,
    pub cfl: CflPolicy,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { exec: ExecMode::Parallel, cfl: CflPolicy::Off }
    }
}

fn map_jobs<T, F>(jobs: &[(f64, f64)], exec: ExecMode, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(f64, f64) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => jobs.par_iter().map(|&(h, tau)| f(h, tau)).collect(),
        _ => jobs.iter().map(|&(h, tau)| f(h, tau)).collect(),
    }
}

struct LawsonRatio {
    tau: f64,
    worst: f64,
}

impl Observer for LawsonRatio {
    fn observe(&mut self, _state: &EvolutionState, info: Option<&StepInfo>) -> Result<()> {
        if let Some(i) = info {
            let bound = (1.0 + (self.tau * i.v_sup).powi(2)).sqrt() * i.pre_potential_norm;
            if bound > 0.0 {
                self.worst = self.worst.max(i.norm / bound);
            }
        }
        Ok(())
    }
}

/// Runs one sweep point and measures its error at `T`.
pub fn run_point(
    setup: &ProblemSetup,
    scheme: Scheme,
    h: f64,
    tau: f64,
    reference: &ReferenceSolution,
    cfl: CflPolicy,
) -> Result<SweepRow> {
    let grid = setup.grid(h)?;
    let psi0 = setup.initial_field(&grid)?;
    let pot = setup.potential_on(&grid)?;
    let cfg = SchemeConfig::new(scheme, tau, setup.beta, setup.t_final).with_cfl(cfl);
    let cfl_ok = tau <= grid.cfl_limit();
    let started = Instant::now();
    let mut ratio = LawsonRatio { tau, worst: 0.0 };
    let row = |e_l2, e_h1, seconds, diverged, lawson_ratio| SweepRow {
        h,
        tau,
        e_l2,
        e_h1,
        cfl: cfl_ok,
        seconds,
        diverged,
        lawson_ratio,
    };
    match evolve(&psi0, &pot, &cfg, &mut [&mut ratio]) {
        Ok(out) => {
            let seconds = started.elapsed().as_secs_f64();
            let (e_l2, e_h1) = error_against_reference(out.state.field(), reference, setup.t_final)?;
            Ok(row(e_l2, e_h1, seconds, None, ratio.worst))
        }
        Err(Error::Diverged { step }) => {
            log::warn!("sweep point h={h:e} tau={tau:e} diverged at step {step}");
            Ok(row(f64::NAN, f64::NAN, started.elapsed().as_secs_f64(), Some(step), ratio.worst))
        }
        Err(e) => Err(e),
    }
}

fn check_lists(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(invalid(format!("{name} list is empty")));
    }
    if let Some(x) = v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(invalid(format!("{name} list has non-positive entry {x}")));
    }
    Ok(())
}

fn initial_norm(setup: &ProblemSetup, h: f64) -> Result<f64> {
    Ok(setup.initial_field(&setup.grid(h)?)?.l2_norm())
}

/// One row per `(h, tau)`, errors at `T`; diverged runs become flagged rows.
pub fn temporal_sweep(
    setup: &ProblemSetup,
    scheme: Scheme,
    hs: &[f64],
    taus: &[f64],
    reference: &ReferenceSolution,
    opts: SweepOptions,
) -> Result<SweepReport> {
    check_lists("h", hs)?;
    check_lists("tau", taus)?;
    for &tau in taus {
        step_count(setup.t_final, tau)?;
    }
    let mut hs = hs.to_vec();
    hs.sort_by(f64::total_cmp);
    let mut taus = taus.to_vec();
    taus.sort_by(f64::total_cmp);
    let jobs: Vec<(f64, f64)> = hs.iter().flat_map(|&h| taus.iter().map(move |&t| (h, t))).collect();
    let rows = map_jobs(&jobs, opts.exec, |h, tau| run_point(setup, scheme, h, tau, reference, opts.cfl));
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { kind: SweepKind::VsTau, scheme, rows, initial_norm: initial_norm(setup, hs[0])? })
}

/// One row per `h` at fixed `tau`.
pub fn spatial_sweep(
    setup: &ProblemSetup,
    scheme: Scheme,
    tau: f64,
    hs: &[f64],
    reference: &ReferenceSolution,
    opts: SweepOptions,
) -> Result<SweepReport> {
    check_lists("h", hs)?;
    step_count(setup.t_final, tau)?;
    let mut hs = hs.to_vec();
    hs.sort_by(f64::total_cmp);
    if opts.cfl == CflPolicy::Enforce {
        let limit = hs[0] * hs[0] / std::f64::consts::PI;
        if tau > limit {
            return Err(Error::CflViolation { tau, h: hs[0], limit });
        }
    }
    let jobs: Vec<(f64, f64)> = hs.iter().map(|&h| (h, tau)).collect();
    let rows = map_jobs(&jobs, opts.exec, |h, tau| run_point(setup, scheme, h, tau, reference, opts.cfl));
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { kind: SweepKind::VsH, scheme, rows, initial_norm: initial_norm(setup, hs[0])? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{BaseProfile, SmoothPart, TimeLaw};
    use crate::spectral::build_grid;

    fn row(x: f64, e: f64) -> SweepRow {
        SweepRow { h: x, tau: x, e_l2: e, e_h1: e, cfl: true, seconds: 0.0, diverged: None, lawson_ratio: 0.0 }
    }

    #[test]
    fn order_examples() {
        let f = estimate_order(&[row(1e-2, 1e-2), row(1e-3, 1e-3)], SweepKind::VsTau, ErrorNorm::L2).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        let rows: Vec<_> = [3, 4, 5].iter().map(|k| {
            let h = 2f64.powi(-k);
            row(h, h.powf(2.5))
        }).collect();
        let f = estimate_order(&rows, SweepKind::VsH, ErrorNorm::H1).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-12 && f.residual < 1e-12);
        assert!(matches!(
            estimate_order(&[row(1e-2, 1e-2)], SweepKind::VsTau, ErrorNorm::L2),
            Err(Error::InsufficientData(_))
        ));
        // zero rows are excluded
        let f = estimate_order(&[row(1e-1, 0.0), row(1e-2, 1e-4), row(1e-3, 1e-6)], SweepKind::VsTau, ErrorNorm::L2)
            .unwrap();
        assert_eq!(f.points, 2);
        assert!((f.slope - 2.0).abs() < 1e-12);
    }

    fn dom() -> Domain {
        Domain::interval(-16.0, 16.0).unwrap()
    }

    #[test]
    fn error_examples() {
        let g = Arc::new(build_grid(dom(), &[32]).unwrap());
        let gf = Arc::new(build_grid(dom(), &[128]).unwrap());
        let f = SpectralField::from_fn(g.clone(), |p| Complex64::new((-p[0] * p[0]).exp(), 0.1 * p[0].sin()));
        let padded = f.zero_pad(&[128]).unwrap();
        assert_eq!(field_error(&f, &padded).unwrap(), (0.0, 0.0));
        assert_eq!(field_error(&padded, &padded).unwrap(), (0.0, 0.0));

        // reference = coarse + eps * mode N (of the fine grid)
        let eps = 1e-3;
        let mut c = padded.natural_coeffs().to_vec();
        let idx = crate::spectral::index_of(32, 128).unwrap();
        c[idx] += Complex64::new(eps, 0.0);
        let reference = SpectralField::from_natural_coeffs(gf.clone(), c).unwrap();
        let (l2, h1) = field_error(&f, &reference).unwrap();
        let mu = gf.wavenumber(0, 32);
        assert!((l2 - eps * 32f64.sqrt()).abs() < 1e-15);
        assert!((h1 - eps * (32.0 * (1.0 + mu * mu)).sqrt()).abs() < 1e-14);

        let r = ReferenceSolution::from_field(reference, 1.0, Scheme::Ltsefp, 1e-6);
        assert!(error_against_reference(&f, &r, 1.0).is_ok());
        assert!(error_against_reference(&f, &r, 0.5).is_err());
        // coarse reference is rejected
        assert!(field_error(&padded, &f).is_err());
    }

    #[test]
    fn reference_rules() {
        let setup = ProblemSetup { t_final: 0.0, ..ProblemSetup::square_well() };
        let r = compute_reference(&setup, Scheme::Ltsefp, 0.25, 1e-3, &[]).unwrap();
        let g = setup.grid(0.25).unwrap();
        let psi0 = setup.initial_field(&g).unwrap();
        assert_eq!(r.at(0.0).unwrap().natural_coeffs(), psi0.natural_coeffs());
        // tau_e > h_e^2/pi
        assert!(matches!(
            compute_reference(&setup, Scheme::Ltsefp, 0.25, 1e-1, &[]),
            Err(Error::InvalidArgument(_))
        ));
        // desk default is admissible
        assert!(1e-6 <= 2f64.powi(-16) / std::f64::consts::PI);
    }

    #[test]
    fn free_linear_problem_has_no_temporal_error() {
        let setup = ProblemSetup {
            domain: dom(),
            beta: 0.0,
            t_final: 0.1,
            initial: InitialDatum::Gaussian,
            potential: PotentialModel::zero().with_smooth(SmoothPart::new(|_, _| 0.0)),
        };
        let reference = compute_reference(&setup, Scheme::LtsefpSplit, 0.25, 1e-3, &[]).unwrap();
        let rep = temporal_sweep(&setup, Scheme::LtsefpSplit, &[0.25], &[1e-2, 5e-3], &reference, SweepOptions::default())
            .unwrap();
        for r in &rep.rows {
            assert!(r.e_l2 < 1e-13, "{r:?}");
        }
        assert!(rep.fit(ErrorNorm::L2, None).is_err());
        assert!(rep.to_csv(false).contains("insufficient-data"));
    }

    #[test]
    fn band_limited_spatial_floor() {
        // band-limited datum and constant potential, beta = 0: exact beyond the bandwidth
        let g0 = Arc::new(build_grid(dom(), &[16]).unwrap());
        let datum = SpectralField::from_mode_fn(g0, |l| {
            if l[0].abs() <= 3 { Complex64::new(0.1, 0.02 * l[0] as f64) } else { Complex64::default() }
        });
        let setup = ProblemSetup {
            domain: dom(),
            beta: 0.0,
            t_final: 0.05,
            initial: InitialDatum::Field(datum),
            potential: PotentialModel::rough(BaseProfile::constant(2.0), TimeLaw::identity()),
        };
        let reference = compute_reference(&setup, Scheme::Ltsefp, 0.125, 1e-3, &[]).unwrap();
        let rep = spatial_sweep(&setup, Scheme::Ltsefp, 1e-3, &[1.0, 0.5, 0.25], &reference, SweepOptions::default())
            .unwrap();
        assert!(rep.rows.iter().all(|r| r.e_l2 < 1e-13), "{:?}", rep.rows);
    }

    #[test]
    fn sweep_csv_shape_and_determinism() {
        let setup = ProblemSetup { t_final: 0.05, ..ProblemSetup::square_well() };
        let reference = compute_reference(&setup, Scheme::Ltsefp, 0.125, 1e-3, &[]).unwrap();
        let run = |exec| {
            temporal_sweep(&setup, Scheme::Ltsefp, &[0.25], &[1e-2, 5e-3, 2.5e-3], &reference, SweepOptions {
                exec,
                ..Default::default()
            })
            .unwrap()
        };
        let a = run(ExecMode::Parallel);
        let b = run(ExecMode::Sequential);
        let c = run(ExecMode::Parallel);
        assert_eq!(a.to_csv(false), b.to_csv(false));
        assert_eq!(a.to_csv(false), c.to_csv(false));
        let csv = a.to_csv(true);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("h,tau,e_l2,e_h1,cfl,seconds"));
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 4);
        assert!(csv.contains("# fit vs_tau h=2.5e-1 norm=L2 slope="));
        let taus: Vec<f64> = a.rows.iter().map(|r| r.tau).collect();
        assert!(taus.windows(2).all(|w| w[0] < w[1]));
        // h = 0.25: h^2/pi ~ 0.0199, all rows satisfy CFL
        assert!(a.rows.iter().all(|r| r.cfl));
    }

    #[test]
    fn sweep_preconditions() {
        let setup = ProblemSetup::square_well();
        let r = ReferenceSolution::from_field(
            setup.initial_field(&setup.grid(0.125).unwrap()).unwrap(),
            1.0,
            Scheme::Ltsefp,
            1e-3,
        );
        let o = SweepOptions::default();
        assert!(temporal_sweep(&setup, Scheme::Ltsefp, &[], &[1e-3], &r, o).is_err());
        assert!(temporal_sweep(&setup, Scheme::Ltsefp, &[0.25], &[3e-4], &r, o).is_err());
        let enforce = SweepOptions { cfl: CflPolicy::Enforce, ..o };
        assert!(matches!(
            spatial_sweep(&setup, Scheme::Ltsefp, 1e-2, &[0.125], &r, enforce),
            Err(Error::CflViolation { .. })
        ));
    }

    #[test]
    fn diverged_rows_are_flagged() {
        let setup = ProblemSetup {
            domain: dom(),
            beta: 0.0,
            t_final: 20.0,
            initial: InitialDatum::Gaussian,
            potential: PotentialModel::rough(BaseProfile::constant(1e8), TimeLaw::identity()),
        };
        let g = setup.grid(0.5).unwrap();
        let r = ReferenceSolution::from_field(setup.initial_field(&g).unwrap(), 20.0, Scheme::Ltsefp, 1e-3);
        let rep = temporal_sweep(&setup, Scheme::Ltsefp, &[0.5], &[0.5], &r, SweepOptions::default()).unwrap();
        assert!(rep.rows[0].diverged.is_some());
        assert!(rep.to_csv(false).contains("# diverged"));
    }
}
