use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Event;

/// `value = slope * t + intercept`, stored around a reference time so that
/// evaluation near the data avoids cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    t_ref: f64,
    value_at_ref: f64,
}

impl LineFit {
    pub fn at(&self, t: f64) -> f64 {
        self.value_at_ref + self.slope * (t - self.t_ref)
    }
}

/// Least-squares line through `(t, value)` pairs, solved from the normal
/// equations after centering `t` on its mean.
pub fn fit_line(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.len() < 2 {
        return Err(Error::DegenerateFit);
    }
    let n = points.len() as f64;
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let v_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stt, mut stv) = (0.0, 0.0);
    for &(t, v) in points {
        let dt = t - t_mean;
        stt += dt * dt;
        stv += dt * (v - v_mean);
    }
    if stt == 0.0 {
        return Err(Error::DegenerateFit);
    }
    let slope = stv / stt;
    Ok(LineFit { slope, intercept: v_mean - slope * t_mean, t_ref: t_mean, value_at_ref: v_mean })
}

/// XT and YT fits of one cluster, with time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterFit {
    pub x: LineFit,
    pub y: LineFit,
}

pub fn fit_cluster_lines<'a, I>(events: I) -> Result<ClusterFit>
where
    I: IntoIterator<Item = &'a Event>,
{
    let (xs, ys): (Vec<(f64, f64)>, Vec<(f64, f64)>) = events
        .into_iter()
        .map(|e| {
            let t = e.t as f64 * 1e-6;
            ((t, e.x as f64), (t, e.y as f64))
        })
        .unzip();
    Ok(ClusterFit { x: fit_line(&xs)?, y: fit_line(&ys)? })
}

/// Sub-pixel star position at an evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StarCentroid {
    pub x: f64,
    pub y: f64,
}

pub fn estimate_centroid(fit: &ClusterFit, t_q_s: f64) -> StarCentroid {
    StarCentroid { x: fit.x.at(t_q_s), y: fit.y.at(t_q_s) }
}
