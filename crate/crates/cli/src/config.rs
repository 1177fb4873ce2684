//! Run configuration: JSON file, then command-line overrides.

use std::path::PathBuf;

use imexglm::catalogue::{right_angle_beta, MethodFamily};
use imexglm::problems::{linear_split, prothero_robinson, shallow_water, swe_split};
use imexglm::stability::{BoundaryOptions, NelderMeadOptions, ScanSettings};
use imexglm::{Complex64, ImexScheme};
use serde::{Deserialize, Serialize};

use crate::{CliError, Flags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Pr,
    Linear,
    Swe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GridPreset {
    Default,
    Figure,
    Coarse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub t0: f64,
    /// End time; the problem's own default when absent.
    pub tf: Option<f64>,
    pub mu: f64,
    pub forcing_in_g: bool,
    /// `[re, im]`.
    pub lambda0: [f64; 2],
    pub lambda1: [f64; 2],
    pub y0: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub g_grav: f64,
    /// Split the shallow-water operator as `J U + (F - J U)`; otherwise the
    /// whole operator is explicit.
    pub split: bool,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            kind: ProblemKind::Pr,
            t0: 0.0,
            tf: None,
            mu: -1e6,
            forcing_in_g: false,
            lambda0: [-1.0, 0.0],
            lambda1: [-10.0, 0.0],
            y0: [1.0, 0.0],
            nx: 20,
            ny: 20,
            g_grav: 9.81,
            split: true,
        }
    }
}

pub type Problem = Box<dyn imexglm::integrate::IvpProblem>;

impl ProblemConfig {
    pub fn build(&self) -> Result<Problem, CliError> {
        let c = |v: [f64; 2]| Complex64::new(v[0], v[1]);
        Ok(match self.kind {
            ProblemKind::Pr => {
                let tf = self.tf.unwrap_or(self.t0 + 10.0);
                Box::new(prothero_robinson(self.mu, self.t0, tf)?.forcing_in_g(self.forcing_in_g))
            }
            ProblemKind::Linear => {
                let tf = self.tf.unwrap_or(self.t0 + 1.0);
                if !(tf > self.t0) {
                    return Err(CliError::Validation("empty time interval".into()));
                }
                Box::new(linear_split(c(self.lambda0), c(self.lambda1), c(self.y0)).with_span(self.t0, tf))
            }
            ProblemKind::Swe => {
                let tf = self.tf.unwrap_or(self.t0 + 10.0);
                if !(tf > self.t0) {
                    return Err(CliError::Validation("empty time interval".into()));
                }
                let p = shallow_water(self.nx, self.ny, self.g_grav)?.with_span(self.t0, tf);
                if self.split {
                    Box::new(swe_split(p))
                } else {
                    Box::new(p)
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub method: String,
    pub theta: Option<f64>,
    pub lambda: Option<f64>,
    /// Extrapolation parameters `β21, β31, β32, ...`; the right-angle
    /// defaults of the family when absent.
    pub beta: Option<Vec<f64>>,
    /// Tableau JSON checked instead of a catalogued method.
    pub tableau: Option<PathBuf>,
    /// Sector half-angle in degrees; absent means the explicit region.
    pub alpha_deg: Option<f64>,
    pub grid: GridPreset,
    pub scan: Option<ScanSettings>,
    pub rays: usize,
    pub boundary: BoundaryOptions,
    pub locus_y: f64,
    pub locus_samples: usize,
    pub locus_windings: usize,
    /// Optimizer start; the family's `β` (and parameter) when absent.
    pub x0: Option<Vec<f64>>,
    pub vary_parameter: bool,
    pub search: NelderMeadOptions,
    pub problem: ProblemConfig,
    pub h: Option<f64>,
    pub hs: Vec<f64>,
    /// Methods compared by `converge`; the single `method` when empty.
    pub methods: Vec<String>,
    pub h_ref: Option<f64>,
    pub ref_tol: f64,
    pub trace: bool,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: "dimsim2".into(),
            theta: None,
            lambda: None,
            beta: None,
            tableau: None,
            alpha_deg: None,
            grid: GridPreset::Default,
            scan: None,
            rays: 180,
            boundary: BoundaryOptions::default(),
            locus_y: 0.0,
            locus_samples: 720,
            locus_windings: 1,
            x0: None,
            vary_parameter: false,
            search: NelderMeadOptions::default(),
            problem: ProblemConfig::default(),
            h: None,
            hs: vec![],
            methods: vec![],
            h_ref: None,
            ref_tol: 1e-6,
            trace: false,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(flags: &Flags) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        cfg.apply(flags);
        if cfg.scan.is_none() {
            cfg.scan = Some(match cfg.grid {
                GridPreset::Default => ScanSettings::default(),
                GridPreset::Figure => ScanSettings::figure_grid(),
                GridPreset::Coarse => ScanSettings::coarse(),
            });
        }
        if let Some(d) = flags.delta {
            cfg.scan.as_mut().expect("scan set above").delta = d;
        }
        Ok(cfg)
    }

    fn apply(&mut self, f: &Flags) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &f.$field {
                    self.$field = v.clone();
                }
            )*};
        }
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if f.$field.is_some() {
                    self.$field = f.$field.clone();
                }
            )*};
        }
        set!(method, rays, locus_y, locus_samples, locus_windings, hs, methods, ref_tol, out_dir);
        set_opt!(theta, lambda, beta, tableau, alpha_deg, x0, h, h_ref);
        if let Some(g) = f.grid {
            self.grid = g;
            self.scan = None;
        }
        if f.vary_parameter {
            self.vary_parameter = true;
        }
        if f.trace {
            self.trace = true;
        }
        if let Some(b) = f.budget {
            self.search.budget = b;
        }
        let p = &mut self.problem;
        if let Some(k) = f.problem {
            p.kind = k;
        }
        if let Some(v) = f.mu {
            p.mu = v;
        }
        if f.tf.is_some() {
            p.tf = f.tf;
        }
        if let Some(v) = f.nx {
            p.nx = v;
            p.ny = f.ny.unwrap_or(v);
        } else if let Some(v) = f.ny {
            p.ny = v;
        }
        if f.unsplit {
            p.split = false;
        }
    }

    pub fn scan(&self) -> &ScanSettings {
        self.scan.as_ref().expect("scan resolved at load")
    }

    pub fn alpha(&self) -> Result<Option<f64>, CliError> {
        match self.alpha_deg {
            None => Ok(None),
            Some(d) if d > 0.0 && d <= 90.0 => Ok(Some(d.to_radians())),
            Some(d) => Err(CliError::Validation(format!("sector angle {d} degrees outside (0, 90]"))),
        }
    }

    pub fn family_named(&self, name: &str) -> Result<MethodFamily, CliError> {
        let param = match name.to_ascii_lowercase().as_str() {
            "theta" => self.theta,
            "dimsim2" => self.lambda,
            _ => None,
        };
        Ok(MethodFamily::from_name(name, param)?)
    }

    pub fn family(&self) -> Result<MethodFamily, CliError> {
        self.family_named(&self.method)
    }

    pub fn scheme(&self) -> Result<ImexScheme, CliError> {
        let family = self.family()?;
        let beta = self.beta.clone().unwrap_or_else(|| right_angle_beta(&family));
        Ok(ImexScheme::for_family(&family, &beta)?)
    }

    /// `(name, scheme)` pairs for a convergence study. An explicit `beta` only
    /// applies when a single method is studied.
    pub fn schemes(&self) -> Result<Vec<(String, ImexScheme)>, CliError> {
        if self.methods.is_empty() {
            return Ok(vec![(self.family()?.name().to_string(), self.scheme()?)]);
        }
        self.methods
            .iter()
            .map(|m| {
                let family = self.family_named(m)?;
                let scheme = ImexScheme::for_family(&family, &right_angle_beta(&family))?;
                Ok((family.name().to_string(), scheme))
            })
            .collect()
    }
}
