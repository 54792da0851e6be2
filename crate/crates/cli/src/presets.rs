//! Preset registry: names, parameters and the map each one builds.

use std::collections::BTreeMap;

use distortion_lab::cusp::CuspParams;
use distortion_lab::family::MapFamily;
use distortion_lab::spiral::SpiralMap;

use crate::options::Options;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    CuspLpDuality,
    CuspSigmaLs,
    CuspExpK,
    SpiralBoundedSigma,
    SpiralLp,
    TripleLog,
    PowerLog,
}

pub const ALL: [Preset; 7] = [
    Preset::CuspLpDuality,
    Preset::CuspSigmaLs,
    Preset::CuspExpK,
    Preset::SpiralBoundedSigma,
    Preset::SpiralLp,
    Preset::TripleLog,
    Preset::PowerLog,
];

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::CuspLpDuality => "cusp-lp-duality",
            Preset::CuspSigmaLs => "cusp-sigma-ls",
            Preset::CuspExpK => "cusp-exp-k",
            Preset::SpiralBoundedSigma => "spiral-bounded-sigma",
            Preset::SpiralLp => "spiral-lp",
            Preset::TripleLog => "triple-log",
            Preset::PowerLog => "power-log",
        }
    }

    pub fn parse(name: &str) -> Result<Self, CliError> {
        ALL.into_iter().find(|p| p.name() == name).ok_or_else(|| {
            let names: Vec<&str> = ALL.iter().map(|p| p.name()).collect();
            CliError::Usage(format!(
                "unknown preset {name:?}; expected one of {}",
                names.join(", ")
            ))
        })
    }
}

pub struct Resolved {
    pub preset: Preset,
    pub map: MapFamily,
    pub parameters: BTreeMap<String, f64>,
}

impl Resolved {
    pub fn param(&self, key: &str) -> f64 {
        self.parameters[key]
    }
}

pub fn resolve(opts: &Options) -> Result<Resolved, CliError> {
    let name = opts
        .preset
        .as_deref()
        .ok_or_else(|| CliError::Usage("--preset is required".into()))?;
    let preset = Preset::parse(name)?;
    let bad = |e: &dyn std::fmt::Display| CliError::Usage(format!("{name}: {e}"));
    let mut parameters = BTreeMap::new();
    let map = match preset {
        Preset::CuspLpDuality => {
            let (p, eps) = (opts.p.unwrap_or(2.0), opts.eps.unwrap_or(0.5));
            parameters.insert("p".into(), p);
            parameters.insert("eps".into(), eps);
            MapFamily::Cusp(CuspParams::lp_duality(p, eps).map_err(|e| bad(&e))?)
        }
        Preset::CuspSigmaLs => {
            let p = opts.p.unwrap_or(2.0);
            parameters.insert("p".into(), p);
            MapFamily::Cusp(CuspParams::sigma_ls(p).map_err(|e| bad(&e))?)
        }
        Preset::CuspExpK => {
            let mu = opts.mu.unwrap_or(1.5);
            let params = CuspParams::exp_k(mu, opts.nu).map_err(|e| bad(&e))?;
            let nu = match params.regime {
                distortion_lab::cusp::CuspRegime::ExpK { nu, .. } => nu,
                _ => unreachable!(),
            };
            parameters.insert("mu".into(), mu);
            parameters.insert("nu".into(), nu);
            MapFamily::Cusp(params)
        }
        Preset::SpiralBoundedSigma => MapFamily::Spiral(SpiralMap::bounded_sigma()),
        Preset::SpiralLp => {
            let p = opts.p.unwrap_or(2.0);
            parameters.insert("p".into(), p);
            MapFamily::Spiral(SpiralMap::lp(p).map_err(|e| bad(&e))?)
        }
        Preset::TripleLog => MapFamily::TripleLog,
        Preset::PowerLog => {
            let alpha = opts.alpha.unwrap_or(1.0);
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(bad(&format!("alpha = {alpha} must be positive")));
            }
            parameters.insert("alpha".into(), alpha);
            MapFamily::PowerLog { alpha }
        }
    };
    Ok(Resolved {
        preset,
        map,
        parameters,
    })
}
