use std::path::Path;

use serde::Deserialize;
use starjitter::event_io::AlignParams;
use starjitter::recovery::{HypothesisGrid, PipelineConfig};
use starjitter::sim::SequenceConfig;
use starjitter::{BandName, Execution};

use crate::args::PipelineArgs;
use crate::Failure;

/// Contents of a `--config` file. Command-line flags win over it.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sequence: SequenceConfig,
    pub pipeline: PipelineOptions,
    pub align: AlignOptions,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    pub band: Option<BandName>,
    pub t_batch_ms: Option<f64>,
    pub n_c: Option<usize>,
    pub eps: Option<f64>,
    pub min_pts: Option<usize>,
    pub radius: Option<f64>,
    pub min_support: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignOptions {
    pub bin_us: Option<u64>,
    pub rate_factor: Option<f64>,
    pub trailing_us: Option<u64>,
    pub spot_px: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
    }
}

impl PipelineOptions {
    pub fn merged(&self, cli: &PipelineArgs) -> Self {
        Self {
            band: cli.band.or(self.band),
            t_batch_ms: cli.t_batch_ms.or(self.t_batch_ms),
            n_c: cli.n_c.or(self.n_c),
            eps: cli.eps.or(self.eps),
            min_pts: cli.min_pts.or(self.min_pts),
            radius: cli.radius.or(self.radius),
            min_support: cli.min_support.or(self.min_support),
        }
    }

    pub fn band(&self) -> BandName {
        self.band.unwrap_or(BandName::Slow)
    }

    /// Band defaults with the overrides applied, range-checked.
    pub fn build(&self, execution: Execution) -> Result<PipelineConfig, Failure> {
        let t_batch_s = match self.t_batch_ms {
            Some(ms) => {
                positive("t_batch_ms", ms)?;
                ms * 1e-3
            }
            None => self.band().band().batch_duration(),
        };
        let mut cfg = PipelineConfig { execution, ..PipelineConfig::with_batch(t_batch_s) };
        if let Some(n) = self.n_c {
            at_least("n_c", n, 1)?;
            cfg.n_c = n;
        }
        if let Some(e) = self.eps {
            positive("eps", e)?;
            cfg.eps = e;
        }
        if let Some(m) = self.min_pts {
            at_least("min_pts", m, 1)?;
            cfg.min_pts = m;
        }
        if let Some(r) = self.radius {
            positive("radius", r)?;
            if r > 1000.0 {
                return Err(Failure::Usage(format!("radius must be at most 1000 px, got {r}")));
            }
            cfg.radius = r;
            cfg.grid = HypothesisGrid::covering(r);
        }
        if let Some(s) = self.min_support {
            cfg.min_support = s;
        }
        Ok(cfg)
    }
}

impl AlignOptions {
    pub fn build(&self) -> Result<AlignParams, Failure> {
        let mut p = AlignParams::default();
        if let Some(b) = self.bin_us {
            at_least("bin_us", b as usize, 1)?;
            p.bin_us = b;
        }
        if let Some(f) = self.rate_factor {
            positive("rate_factor", f)?;
            p.rate_factor = f;
        }
        if let Some(t) = self.trailing_us {
            at_least("trailing_us", t as usize, 1)?;
            p.trailing_us = t;
        }
        if let Some(s) = self.spot_px {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Failure::Usage(format!("spot_px must be a non-negative number, got {s}")));
            }
            p.spot_px = s;
        }
        Ok(p)
    }
}

pub fn positive(name: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{name} must be a positive number, got {v}")))
    }
}

pub fn at_least(name: &str, v: usize, min: usize) -> Result<(), Failure> {
    if v >= min {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{name} must be at least {min}, got {v}")))
    }
}
