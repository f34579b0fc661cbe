//! Run configuration: TOML file, flag overrides, validation and echo.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_state::GfdnConfig;
use crate::potential::{PresetParams, PRESETS};
use crate::propagator::{step_count, CflPolicy, Scheme};
use crate::spectral::{Domain, SpectralGrid};

/// Environment variable that overrides the configured output directory (a flag still wins).
pub const OUT_DIR_ENV: &str = "LTSEFP_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainSpec {
    Interval([f64; 2]),
    Boxed(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CountSpec {
    One(usize),
    PerAxis(Vec<usize>),
}

/// Every key optional; merged layer by layer (defaults, file, flags).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<CountSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub barrier_half_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub obstacle_speed: Option<f64>,
    /// `gaussian`, `ground_state`, or a snapshot path.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    /// Preset whose ground state seeds `initial = "ground_state"` (default: `potential`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_state_potential: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_times: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cfl_policy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_trace_stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<RawSweep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gfdn: Option<RawGfdn>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parallel: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGfdn {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().replace('\n', " ")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Keys set in `top` replace those in `self`. Setting one of `N`/`h`
    /// clears the other so a flag always wins over the file.
    pub fn overlay(&mut self, top: &RawConfig) {
        if top.n.is_some() {
            self.h = None;
        }
        if top.h.is_some() {
            self.n = None;
        }
        overlay!(
            self, top, domain, n, h, scheme, tau, t_final, beta, potential, barrier_half_width, obstacle_speed,
            initial, ground_state_potential, output_dir, sample_times, cfl_policy, norm_trace_stride
        );
        if let Some(ts) = &top.sweep {
            let s = self.sweep.get_or_insert_with(Default::default);
            overlay!(s, ts, h, tau, reference_h, reference_tau, reference_file, timings, parallel);
        }
        if let Some(tg) = &top.gfdn {
            let g = self.gfdn.get_or_insert_with(Default::default);
            overlay!(g, tg, dt, tol, max_iterations, mass);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Gaussian,
    GroundState,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub h: Vec<f64>,
    pub tau: Vec<f64>,
    pub reference_h: f64,
    pub reference_tau: f64,
    pub reference_file: Option<PathBuf>,
    pub timings: bool,
    pub parallel: bool,
}

/// Fully resolved and validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain: Domain,
    pub n: Vec<usize>,
    pub scheme: Scheme,
    pub tau: f64,
    pub t_final: f64,
    pub beta: f64,
    pub potential: String,
    pub params: PresetParams,
    pub initial: InitialSpec,
    pub ground_state_potential: String,
    pub output_dir: PathBuf,
    pub sample_times: Vec<f64>,
    pub cfl: CflPolicy,
    pub norm_trace_stride: usize,
    pub sweep: SweepConfig,
    pub gfdn: GfdnConfig,
}

/// `T / round(T / tau)`: the nearest step size that divides `T`.
pub fn snap_tau(t_final: f64, tau: f64) -> f64 {
    t_final / (t_final / tau).round().max(1.0)
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn rewrap(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) | Error::Config(m) => Error::Config(m),
        other => Error::Config(other.to_string()),
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(cfg_err(format!("{name} must be finite and positive, got {v}")))
    }
}

/// Layers `defaults`, the optional file, and `flags`, then validates.
pub fn parse_config(path: Option<&Path>, defaults: &RawConfig, flags: &RawConfig) -> Result<RunConfig> {
    let mut raw = defaults.clone();
    if let Some(p) = path {
        raw.overlay(&RawConfig::load(p)?);
    }
    raw.overlay(flags);
    resolve(&raw)
}

pub fn resolve(raw: &RawConfig) -> Result<RunConfig> {
    let bounds: Vec<(f64, f64)> = match raw.domain.as_ref().ok_or_else(|| cfg_err("missing key 'domain'"))? {
        DomainSpec::Interval([a, b]) => vec![(*a, *b)],
        DomainSpec::Boxed(v) => v.iter().map(|[a, b]| (*a, *b)).collect(),
    };
    let domain = Domain::new(bounds).map_err(|e| cfg_err(format!("domain: {e}")))?;
    let dim = domain.dim();
    let n = match (&raw.n, raw.h) {
        (Some(_), Some(_)) => return Err(cfg_err("give either 'N' or 'h', not both")),
        (Some(CountSpec::One(k)), None) => vec![*k; dim],
        (Some(CountSpec::PerAxis(v)), None) => v.clone(),
        (None, Some(h)) => {
            let h = positive("h", h)?;
            SpectralGrid::with_mesh_size(domain.clone(), &vec![h; dim])
                .map_err(rewrap)?
                .dims()
                .to_vec()
        }
        (None, None) => return Err(cfg_err("missing key 'N' (or 'h')")),
    };
    SpectralGrid::new(domain.clone(), &n).map_err(|e| cfg_err(format!("N: {e}")))?;

    let scheme: Scheme = raw.scheme.as_deref().unwrap_or("ltsefp").parse().map_err(rewrap)?;
    let tau = positive("tau", raw.tau.ok_or_else(|| cfg_err("missing key 'tau'"))?)?;
    let t_final = raw.t_final.ok_or_else(|| cfg_err("missing key 'T'"))?;
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(cfg_err(format!("T must be finite and non-negative, got {t_final}")));
    }
    step_count(t_final, tau).map_err(rewrap)?;
    let beta = raw.beta.unwrap_or(1.0);
    if !beta.is_finite() {
        return Err(cfg_err("beta must be finite"));
    }

    let potential = raw.potential.clone().ok_or_else(|| cfg_err("missing key 'potential'"))?;
    let known = |p: &str| -> Result<()> {
        if PRESETS.contains(&p) {
            Ok(())
        } else {
            Err(cfg_err(format!("unknown potential preset '{p}' (known: {})", PRESETS.join(", "))))
        }
    };
    known(&potential)?;
    let ground_state_potential = raw.ground_state_potential.clone().unwrap_or_else(|| potential.clone());
    known(&ground_state_potential)?;
    let defaults = PresetParams::default();
    let params = PresetParams {
        barrier_half_width: positive("barrier_half_width", raw.barrier_half_width.unwrap_or(defaults.barrier_half_width))?,
        obstacle_speed: raw.obstacle_speed.unwrap_or(defaults.obstacle_speed),
    };
    if !params.obstacle_speed.is_finite() {
        return Err(cfg_err("obstacle_speed must be finite"));
    }

    let initial = match raw.initial.as_deref().unwrap_or("gaussian") {
        "gaussian" => InitialSpec::Gaussian,
        "ground_state" => InitialSpec::GroundState,
        path => {
            let p = PathBuf::from(path);
            if !p.is_file() {
                return Err(cfg_err(format!("initial datum file '{path}' does not exist")));
            }
            InitialSpec::File(p)
        }
    };

    let output_dir = raw.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));

    let mut sample_times = raw.sample_times.clone().unwrap_or_else(|| vec![t_final]);
    for &t in &sample_times {
        if !(t >= 0.0 && t <= t_final * (1.0 + 1e-12)) {
            return Err(cfg_err(format!("sample time {t} lies outside [0, T={t_final}]")));
        }
        step_count(t, tau).map_err(|_| cfg_err(format!("sample time {t} is not a multiple of tau={tau}")))?;
    }
    sample_times.sort_by(f64::total_cmp);
    sample_times.dedup();

    let cfl: CflPolicy = raw.cfl_policy.as_deref().unwrap_or("warn").parse().map_err(rewrap)?;
    let norm_trace_stride = raw.norm_trace_stride.unwrap_or(1);
    if norm_trace_stride == 0 {
        return Err(cfg_err("norm_trace_stride must be at least 1"));
    }

    let rs = raw.sweep.clone().unwrap_or_default();
    let list = |name: &str, v: Option<Vec<f64>>, default: Vec<f64>| -> Result<Vec<f64>> {
        let v = v.unwrap_or(default);
        if v.is_empty() {
            return Err(cfg_err(format!("sweep.{name} must not be empty")));
        }
        v.into_iter().map(|x| positive(&format!("sweep.{name} entry"), x)).collect()
    };
    let default_taus = [7e-5, 3.5e-5, 1.75e-5].iter().map(|&t| snap_tau(t_final.max(tau), t)).collect();
    let sweep = SweepConfig {
        h: list("h", rs.h, vec![2f64.powi(-6)])?,
        tau: list("tau", rs.tau, default_taus)?,
        reference_h: positive("sweep.reference_h", rs.reference_h.unwrap_or(2f64.powi(-8)))?,
        reference_tau: positive("sweep.reference_tau", rs.reference_tau.unwrap_or(1e-6))?,
        reference_file: rs.reference_file,
        timings: rs.timings.unwrap_or(true),
        parallel: rs.parallel.unwrap_or(true),
    };
    if let Some(p) = &sweep.reference_file {
        if !p.is_file() {
            return Err(cfg_err(format!("reference file '{}' does not exist", p.display())));
        }
    }

    let rg = raw.gfdn.clone().unwrap_or_default();
    let d = GfdnConfig::default();
    let gfdn = GfdnConfig {
        dt: rg.dt.unwrap_or(d.dt),
        tol: rg.tol.unwrap_or(d.tol),
        max_iterations: rg.max_iterations.unwrap_or(d.max_iterations),
        mass: rg.mass.unwrap_or(d.mass),
    };
    gfdn.validate().map_err(|e| cfg_err(format!("gfdn: {e}")))?;

    Ok(RunConfig {
        domain,
        n,
        scheme,
        tau,
        t_final,
        beta,
        potential,
        params,
        initial,
        ground_state_potential,
        output_dir,
        sample_times,
        cfl,
        norm_trace_stride,
        sweep,
        gfdn,
    })
}

impl RunConfig {
    pub fn grid(&self) -> Result<SpectralGrid> {
        SpectralGrid::new(self.domain.clone(), &self.n)
    }

    /// A raw config that resolves back to `self`.
    pub fn to_raw(&self) -> RawConfig {
        let domain = if self.domain.dim() == 1 {
            DomainSpec::Interval([self.domain.lower(0), self.domain.upper(0)])
        } else {
            DomainSpec::Boxed(self.domain.bounds().iter().map(|&(a, b)| [a, b]).collect())
        };
        RawConfig {
            domain: Some(domain),
            n: Some(CountSpec::PerAxis(self.n.clone())),
            h: None,
            scheme: Some(self.scheme.name().to_string()),
            tau: Some(self.tau),
            t_final: Some(self.t_final),
            beta: Some(self.beta),
            potential: Some(self.potential.clone()),
            barrier_half_width: Some(self.params.barrier_half_width),
            obstacle_speed: Some(self.params.obstacle_speed),
            initial: Some(match &self.initial {
                InitialSpec::Gaussian => "gaussian".into(),
                InitialSpec::GroundState => "ground_state".into(),
                InitialSpec::File(p) => p.display().to_string(),
            }),
            ground_state_potential: Some(self.ground_state_potential.clone()),
            output_dir: Some(self.output_dir.clone()),
            sample_times: Some(self.sample_times.clone()),
            cfl_policy: Some(
                match self.cfl {
                    CflPolicy::Enforce => "enforce",
                    CflPolicy::Warn => "warn",
                    CflPolicy::Off => "off",
                }
                .into(),
            ),
            norm_trace_stride: Some(self.norm_trace_stride),
            sweep: Some(RawSweep {
                h: Some(self.sweep.h.clone()),
                tau: Some(self.sweep.tau.clone()),
                reference_h: Some(self.sweep.reference_h),
                reference_tau: Some(self.sweep.reference_tau),
                reference_file: self.sweep.reference_file.clone(),
                timings: Some(self.sweep.timings),
                parallel: Some(self.sweep.parallel),
            }),
            gfdn: Some(RawGfdn {
                dt: Some(self.gfdn.dt),
                tol: Some(self.gfdn.tol),
                max_iterations: Some(self.gfdn.max_iterations),
                mass: Some(self.gfdn.mass),
            }),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_raw()).expect("config serializes")
    }
}
