//! Ground states by gradient flow with discrete normalization.
//!
//! Each iteration takes a semi-implicit step of the imaginary-time flow
//! shifted by the current Rayleigh quotient `mu_k`,
//!
//! ```text
//! psi* = (1 + dt |mu_l|^2)^{-1} F[psi - dt (V + beta |psi|^2 - mu_k) psi],
//! ```
//!
//! then rescales `psi*` to the target mass. The shift leaves the normalization
//! factor at one on a fixed point, so converged states satisfy the discrete
//! eigenproblem `-Delta psi + (V + beta |psi|^2) psi = mu psi` at the nodes.
//! `V` is sampled pointwise at the nodes (at `t = 0`).

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::fft::FftNd;
use crate::potential::{extended_grid, sample_extended, PotentialSpec};
use crate::spectral::{forward_normalized, SpectralField, SpectralGrid};

/// Largest number of consecutive step halvings before giving up.
const MAX_HALVINGS: u32 = 40;
/// Slack allowed in the energy decrease check.
pub const ENERGY_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GfdnConfig {
    pub dt: f64,
    /// Tolerance on `||psi^{k+1} - psi^k||_{L2} / dt`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Target `||psi||_{L2}^2`.
    pub mass: f64,
}

impl Default for GfdnConfig {
    fn default() -> Self {
        Self { dt: 1e-2, tol: 1e-8, max_iterations: 100_000, mass: 1.0 }
    }
}

impl GfdnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("gfdn dt must be positive, got {}", self.dt)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(invalid(format!("gfdn tol must be positive, got {}", self.tol)));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(invalid(format!("target mass must be positive, got {}", self.mass)));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub field: SpectralField,
    /// Diagnostic energy from [`energy_and_mu`].
    pub energy: f64,
    /// Diagnostic chemical potential from [`energy_and_mu`].
    pub mu: f64,
    pub iterations: usize,
    /// Last increment `||psi^{k+1} - psi^k|| / dt`.
    pub residual: f64,
    pub converged: bool,
    /// Nodal energy after each accepted iteration (index 0 is the initial guess).
    pub energy_trace: Vec<f64>,
    pub rejections: usize,
    pub final_dt: f64,
}

/// Normalized Gaussian `exp(-|x|^2/2)` scaled to `mass`.
pub fn gaussian_guess(grid: Arc<SpectralGrid>, mass: f64) -> SpectralField {
    let d = grid.dim();
    let mut f = SpectralField::from_fn(grid, |p| {
        let r2: f64 = p[..d].iter().map(|x| x * x).sum();
        Complex64::new((-r2 / 2.0).exp(), 0.0)
    });
    let m = f.l2_norm().powi(2);
    f.scale(Complex64::new((mass / m).sqrt(), 0.0));
    f
}

/// Runs GFDN from the Gaussian guess; fails with `NotConverged` if the
/// increment criterion is not met within the iteration budget.
pub fn gfdn_solve(potential: &PotentialSpec, beta: f64, config: &GfdnConfig) -> Result<GroundState> {
    let guess = gaussian_guess(potential.grid().clone(), config.mass);
    let gs = gfdn_run(potential, beta, config, guess)?;
    if !gs.converged {
        return Err(Error::NotConverged { iterations: gs.iterations, residual: gs.residual });
    }
    Ok(gs)
}

/// Runs GFDN from `initial`, returning the last iterate whether or not it converged.
pub fn gfdn_run(
    potential: &PotentialSpec,
    beta: f64,
    config: &GfdnConfig,
    initial: SpectralField,
) -> Result<GroundState> {
    config.validate()?;
    if !beta.is_finite() {
        return Err(invalid("beta must be finite"));
    }
    let grid = potential.grid().clone();
    if initial.grid() != &*grid {
        return Err(invalid("initial guess lives on a different grid than the potential"));
    }
    let mut it = Iteration::new(potential.sample_nodes(0.0), beta, grid.clone());
    let mut c = initial.into_natural_coeffs();
    let m0 = it.mass(&c);
    if !(m0 > 0.0) {
        return Err(invalid("initial guess has zero mass"));
    }
    scale(&mut c, (config.mass / m0).sqrt());

    let mut dt = config.dt;
    let mut u = it.values(&c);
    let mut energy = it.energy(&c, &u);
    let mut trace = vec![energy];
    let mut rejections = 0usize;
    let mut residual = f64::INFINITY;
    let mut iterations = 0usize;
    let mut converged = false;

    while iterations < config.max_iterations {
        let mut halvings = 0;
        let (next, next_u, next_e) = loop {
            let next = it.step(&c, &u, dt, config.mass);
            let next_u = it.values(&next);
            let e = it.energy(&next, &next_u);
            if e <= energy + ENERGY_SLACK {
                break (next, next_u, e);
            }
            rejections += 1;
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::NotConverged { iterations, residual });
            }
            log::debug!("gfdn: energy rose {:e} -> {:e}; dt {dt:e} -> {:e}", energy, e, dt / 2.0);
            dt /= 2.0;
        };
        iterations += 1;
        residual = it.distance(&next, &c) / dt;
        c = next;
        u = next_u;
        energy = next_e;
        trace.push(energy);
        if residual < config.tol {
            converged = true;
            break;
        }
    }

    gauge(&mut c);
    let field = SpectralField::from_natural_coeffs(grid, c)?;
    let (e, mu) = energy_and_mu(&field, potential, beta);
    if !converged {
        log::warn!("gfdn: not converged after {iterations} iterations (residual {residual:e})");
    }
    Ok(GroundState {
        field,
        energy: e,
        mu,
        iterations,
        residual,
        converged,
        energy_trace: trace,
        rejections,
        final_dt: dt,
    })
}

struct Iteration {
    grid: Arc<SpectralGrid>,
    v: Vec<f64>,
    beta: f64,
    mu2: Vec<f64>,
    fft: FftNd,
    vol: f64,
}

impl Iteration {
    fn new(v: Vec<f64>, beta: f64, grid: Arc<SpectralGrid>) -> Self {
        Self {
            v,
            beta,
            mu2: grid.mu_squared(),
            fft: FftNd::new(grid.dims()),
            vol: grid.domain().measure(),
            grid,
        }
    }

    fn mass(&self, c: &[Complex64]) -> f64 {
        self.vol * c.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    fn distance(&self, a: &[Complex64], b: &[Complex64]) -> f64 {
        (self.vol * a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>()).sqrt()
    }

    fn values(&mut self, c: &[Complex64]) -> Vec<Complex64> {
        let mut u = c.to_vec();
        self.fft.inverse(&mut u);
        u
    }

    fn kinetic(&self, c: &[Complex64]) -> f64 {
        self.vol * c.iter().zip(&self.mu2).map(|(z, m)| m * z.norm_sqr()).sum::<f64>()
    }

    /// Nodal quadrature `(|Omega|/N) sum g_j`.
    fn nodal(&self, g: impl Iterator<Item = f64>) -> f64 {
        self.vol / self.grid.len() as f64 * g.sum::<f64>()
    }

    fn energy(&self, c: &[Complex64], u: &[Complex64]) -> f64 {
        let b = self.beta;
        self.kinetic(c)
            + self.nodal(u.iter().zip(&self.v).map(|(z, v)| {
                let r = z.norm_sqr();
                v * r + 0.5 * b * r * r
            }))
    }

    fn step(&mut self, c: &[Complex64], u: &[Complex64], dt: f64, mass: f64) -> Vec<Complex64> {
        let b = self.beta;
        let m = self.mass(c);
        let p = self.nodal(u.iter().zip(&self.v).map(|(z, v)| {
            let r = z.norm_sqr();
            (v + b * r) * r
        }));
        let mu_k = (self.kinetic(c) + p) / m;
        let mut r: Vec<Complex64> = u
            .iter()
            .zip(&self.v)
            .map(|(z, v)| z - dt * (v + b * z.norm_sqr() - mu_k) * z)
            .collect();
        forward_normalized(&mut self.fft, &mut r);
        for (z, m2) in r.iter_mut().zip(&self.mu2) {
            *z /= 1.0 + dt * m2;
        }
        let m_star = self.mass(&r);
        scale(&mut r, (mass / m_star).sqrt());
        r
    }
}

fn scale(c: &mut [Complex64], s: f64) {
    c.iter_mut().for_each(|z| *z *= s);
}

/// Rotates the global phase so the spatial average is real and nonnegative.
fn gauge(c: &mut [Complex64]) {
    let mean = c[0];
    if mean.norm() > 0.0 {
        let rot = mean.conj() / mean.norm();
        c.iter_mut().for_each(|z| *z *= rot);
    }
}

/// `(E, mu)` at `t = 0` with
/// `E = int |grad psi|^2 + V |psi|^2 + beta/2 |psi|^4` and
/// `mu = (int |grad psi|^2 + V |psi|^2 + beta |psi|^4) / ||psi||^2`.
///
/// The gradient term is spectral; the potential and quartic terms use
/// quadrature on the `4N` grid with the rough part of `V` represented by its
/// `T_{2N}` coefficients.
pub fn energy_and_mu(field: &SpectralField, potential: &PotentialSpec, beta: f64) -> (f64, f64) {
    energy_and_mu_at(field, potential, beta, 0.0)
}

pub fn energy_and_mu_at(field: &SpectralField, potential: &PotentialSpec, beta: f64, t: f64) -> (f64, f64) {
    let grid = field.grid();
    let vol = grid.domain().measure();
    let mu2 = grid.mu_squared();
    let c = field.natural_coeffs();
    let mass = vol * c.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let kinetic = vol * c.iter().zip(&mu2).map(|(z, m)| m * z.norm_sqr()).sum::<f64>();

    let ext = extended_grid(grid);
    let psi = field.eval_on(&ext).expect("extended grid shares the domain");
    let mut v = potential.sample_smooth(&ext, t);
    for term in potential.rough_terms() {
        for (acc, s) in v.iter_mut().zip(sample_extended(&term.coeffs_at_time(t))) {
            *acc += s.re;
        }
    }
    let w = vol / ext.len() as f64;
    let (mut pv, mut q) = (0.0, 0.0);
    for (z, vj) in psi.iter().zip(&v) {
        let r = z.norm_sqr();
        pv += vj * r;
        q += r * r;
    }
    pv *= w;
    q *= w;
    let energy = kinetic + pv + 0.5 * beta * q;
    let mu = if mass > 0.0 { (kinetic + pv + beta * q) / mass } else { 0.0 };
    (energy, mu)
}

/// `||(-Delta + V + beta|psi|^2) psi - mu psi||_{L2}` with nodal `V` at `t = 0`
/// and `mu` the nodal Rayleigh quotient.
pub fn eigen_residual(field: &SpectralField, potential: &PotentialSpec, beta: f64) -> f64 {
    let grid = potential.grid().clone();
    let mut it = Iteration::new(potential.sample_nodes(0.0), beta, grid);
    let c = field.natural_coeffs();
    let u = it.values(c);
    let m = it.mass(c);
    let p = it.nodal(u.iter().zip(&it.v).map(|(z, v)| {
        let r = z.norm_sqr();
        (v + beta * r) * r
    }));
    let mu = (it.kinetic(c) + p) / m;
    let mut h: Vec<Complex64> = u.iter().zip(&it.v).map(|(z, v)| (v + beta * z.norm_sqr() - mu) * z).collect();
    forward_normalized(&mut it.fft, &mut h);
    for ((hz, cz), m2) in h.iter_mut().zip(c).zip(&it.mu2) {
        *hz += m2 * cz;
    }
    it.mass(&h).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{preset_potential, BaseProfile, PotentialModel, PresetParams, SmoothPart, TimeLaw};
    use crate::spectral::{build_grid, Domain};
    use std::f64::consts::SQRT_2;

    fn grid(n: usize) -> Arc<SpectralGrid> {
        Arc::new(build_grid(Domain::interval(-16.0, 16.0).unwrap(), &[n]).unwrap())
    }

    fn harmonic(g: &Arc<SpectralGrid>) -> PotentialSpec {
        PotentialModel::zero().with_smooth(SmoothPart::new(|x, _| 0.5 * x[0] * x[0])).on_grid(g.clone()).unwrap()
    }

    /// `exp(-x^2/(2 sqrt 2))` normalized on the grid.
    fn analytic(g: &Arc<SpectralGrid>) -> SpectralField {
        let mut f = SpectralField::from_fn(g.clone(), |p| Complex64::new((-p[0] * p[0] / (2.0 * SQRT_2)).exp(), 0.0));
        let n = f.l2_norm();
        f.scale(Complex64::new(1.0 / n, 0.0));
        f
    }

    fn assert_monotone(trace: &[f64]) {
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + ENERGY_SLACK, "energy rose {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn config_validation() {
        assert!(GfdnConfig::default().validate().is_ok());
        assert!(GfdnConfig { dt: 0.0, ..Default::default() }.validate().is_err());
        assert!(GfdnConfig { tol: -1.0, ..Default::default() }.validate().is_err());
        assert!(GfdnConfig { mass: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn flat_ground_state() {
        let g = grid(64);
        let zero = PotentialSpec::zero(g.clone()).unwrap();
        let gs = gfdn_solve(&zero, 0.0, &GfdnConfig { dt: 1.0, tol: 1e-12, ..Default::default() }).unwrap();
        let want = 1.0 / 32f64.sqrt();
        for v in gs.field.node_values().iter() {
            assert!((v - Complex64::new(want, 0.0)).norm() < 1e-8, "{v}");
        }
        assert!(gs.energy.abs() < 1e-12);
        assert!((gs.field.l2_norm().powi(2) - 1.0).abs() < 1e-12);
        assert_monotone(&gs.energy_trace);
    }

    #[test]
    fn harmonic_ground_state() {
        let g = grid(512);
        let pot = harmonic(&g);
        let cfg = GfdnConfig::default();
        let gs = gfdn_solve(&pot, 0.0, &cfg).unwrap();
        let err = gs.field.sub(&analytic(&g)).unwrap().l2_norm();
        assert!(err <= 1e-6, "L2 error {err:e}");
        assert!((gs.mu - 1.0 / SQRT_2).abs() <= 1e-6, "mu {}", gs.mu);
        assert!((gs.energy - 1.0 / SQRT_2).abs() <= 1e-6, "E {}", gs.energy);
        assert!((gs.field.l2_norm().powi(2) - 1.0).abs() < 1e-12);
        assert_monotone(&gs.energy_trace);
        let r = eigen_residual(&gs.field, &pot, 0.0);
        assert!(r <= 10.0 * cfg.tol, "eigen residual {r:e}");
        // gauge: real nonnegative average
        let mean = gs.field.coeff(&[0]);
        assert!(mean.re >= 0.0 && mean.im.abs() < 1e-15);
    }

    #[test]
    fn energy_and_mu_examples() {
        let g = grid(64);
        let zero = PotentialSpec::zero(g.clone()).unwrap();
        let flat = SpectralField::from_fn(g.clone(), |_| Complex64::new(0.3, 0.0));
        let (e, mu) = energy_and_mu(&flat, &zero, 0.0);
        assert!(e.abs() < 1e-15 && mu.abs() < 1e-15);

        let amp = 1.0 / 32f64.sqrt();
        let wave = SpectralField::from_mode_fn(g.clone(), |l| {
            if l[0] == 1 { Complex64::new(amp, 0.0) } else { Complex64::default() }
        });
        let mu1 = g.wavenumber(0, 1).powi(2);
        let (e, mu) = energy_and_mu(&wave, &zero, 0.0);
        assert!((e - mu1).abs() < 1e-14 && (mu - mu1).abs() < 1e-14);

        let g = grid(512);
        let (e, mu) = energy_and_mu(&analytic(&g), &harmonic(&g), 0.0);
        assert!((e - 1.0 / SQRT_2).abs() < 1e-10 && (mu - 1.0 / SQRT_2).abs() < 1e-10, "{e} {mu}");
    }

    #[test]
    fn quartic_term_uses_exact_quadrature() {
        // psi = A (1 + cos(mu_1 x)) has int |psi|^4 = A^4 L (1 + 3 + 3/8) = A^4 L 35/8
        let g = grid(8);
        let zero = PotentialSpec::zero(g.clone()).unwrap();
        let a = 0.2;
        let f = SpectralField::from_mode_fn(g.clone(), |l| match l[0] {
            0 => Complex64::new(a, 0.0),
            1 | -1 => Complex64::new(a / 2.0, 0.0),
            _ => Complex64::default(),
        });
        let (e0, _) = energy_and_mu(&f, &zero, 0.0);
        let (e1, _) = energy_and_mu(&f, &zero, 2.0);
        let quartic = a.powi(4) * 32.0 * (1.0 + 3.0 + 3.0 / 8.0);
        assert!((e1 - e0 - quartic).abs() < 1e-14, "{} vs {quartic}", e1 - e0);
    }

    #[test]
    fn rough_potential_energy_matches_nodal_limit() {
        // constant rough potential shifts E and mu by the constant
        let g = grid(64);
        let pot = PotentialModel::rough(BaseProfile::constant(3.0), TimeLaw::identity()).on_grid(g.clone()).unwrap();
        let zero = PotentialSpec::zero(g.clone()).unwrap();
        let f = gaussian_guess(g, 1.0);
        let (e0, mu0) = energy_and_mu(&f, &zero, 1.0);
        let (e, mu) = energy_and_mu(&f, &pot, 1.0);
        assert!((e - e0 - 3.0).abs() < 1e-12 && (mu - mu0 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_well_monotone_and_normalized() {
        let g = grid(256);
        let pot = preset_potential("square_well", g, PresetParams::default()).unwrap();
        let gs = gfdn_solve(&pot, 1.0, &GfdnConfig { tol: 1e-7, ..Default::default() }).unwrap();
        assert_monotone(&gs.energy_trace);
        assert!((gs.field.l2_norm().powi(2) - 1.0).abs() < 1e-12);
        let vals = gs.field.node_values();
        let min_re = vals.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        let max_im = vals.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        // spectral Laplacian allows tiny negative lobes in the wall tails
        let peak = vals.iter().map(|z| z.re).fold(0.0, f64::max);
        assert!(min_re > -1e-6 * peak && max_im < 1e-12, "{min_re:e} {max_im:e}");
    }

    #[test]
    fn trap_self_refinement_shrinks() {
        let cfg = GfdnConfig { tol: 1e-9, ..Default::default() };
        let solve = |n: usize, dt: f64| {
            let pot = preset_potential("trap_plus_ramp", grid(n), PresetParams::default()).unwrap();
            gfdn_solve(&pot, 1.0, &GfdnConfig { dt, ..cfg }).unwrap().field
        };
        let a = solve(256, 1e-2);
        let b = solve(512, 5e-3);
        let c = solve(1024, 2.5e-3);
        let d1 = b.sub(&a.zero_pad(&[512]).unwrap()).unwrap().l2_norm();
        let d2 = c.sub(&b.zero_pad(&[1024]).unwrap()).unwrap().l2_norm();
        eprintln!("trap self-refinement: {d1:e} {d2:e}");
        assert!(d2 < d1, "{d1:e} {d2:e}");
    }

    #[test]
    fn not_converged_reports_iterate() {
        let g = grid(64);
        let pot = harmonic(&g);
        let cfg = GfdnConfig { max_iterations: 3, ..Default::default() };
        match gfdn_solve(&pot, 0.0, &cfg) {
            Err(Error::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("{other:?}"),
        }
        let gs = gfdn_run(&pot, 0.0, &cfg, gaussian_guess(g, 1.0)).unwrap();
        assert!(!gs.converged && gs.iterations == 3);
    }

    #[test]
    fn two_dim_harmonic() {
        // V = x^2/2 + y^2/2 separates: mu = 2/sqrt 2
        let g = Arc::new(build_grid(Domain::rectangle((-8.0, 8.0), (-8.0, 8.0)).unwrap(), &[64, 64]).unwrap());
        let pot = PotentialModel::zero()
            .with_smooth(SmoothPart::new(|x, _| 0.5 * (x[0] * x[0] + x[1] * x[1])))
            .on_grid(g)
            .unwrap();
        let gs = gfdn_solve(&pot, 0.0, &GfdnConfig { dt: 5e-2, tol: 1e-9, ..Default::default() }).unwrap();
        assert!((gs.mu - SQRT_2).abs() < 1e-7, "{}", gs.mu);
    }
}
