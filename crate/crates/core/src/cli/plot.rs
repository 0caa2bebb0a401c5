//! `x,y,series` rows for redrawing fits and sweeps with external tools.

use crate::error::{Error, Result};
use crate::linmodel::LinSimResult;
use crate::losslink::{apply_link, LossLink};
use crate::records::PairedPoint;

pub const FIT_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub x: f64,
    pub y: f64,
    pub series: &'static str,
}

/// Paired data as `data` rows and the fitted curve as `fit` rows spanning the data range.
pub fn link_series(link: &LossLink, pairs: &[PairedPoint]) -> Result<Vec<SeriesPoint>> {
    if pairs.is_empty() {
        return Err(Error::validation("no paired points to plot"));
    }
    let mut out: Vec<SeriesPoint> = pairs
        .iter()
        .map(|p| SeriesPoint {
            x: p.loss_x,
            y: p.loss_y,
            series: "data",
        })
        .collect();
    let lo = pairs.iter().map(|p| p.loss_x).fold(f64::INFINITY, f64::min);
    let hi = pairs.iter().map(|p| p.loss_x).fold(f64::NEG_INFINITY, f64::max);
    for i in 0..FIT_POINTS {
        let x = lo + (hi - lo) * i as f64 / (FIT_POINTS - 1) as f64;
        out.push(SeriesPoint {
            x,
            y: apply_link(link, x)?,
            series: "fit",
        });
    }
    Ok(out)
}

/// Monte-Carlo means and theory against `D`.
pub fn sim_series(rows: &[LinSimResult]) -> Result<Vec<SeriesPoint>> {
    if rows.is_empty() {
        return Err(Error::validation("no simulation rows to plot"));
    }
    let mc = rows.iter().map(|r| SeriesPoint {
        x: r.d as f64,
        y: r.mc_mean,
        series: "mc",
    });
    let th = rows.iter().map(|r| SeriesPoint {
        x: r.d as f64,
        y: r.theory,
        series: "theory",
    });
    Ok(mc.chain(th).collect())
}

pub fn series_csv(points: &[SeriesPoint]) -> Result<String> {
    if points.is_empty() {
        return Err(Error::validation("refusing to write an empty plot series"));
    }
    let mut s = String::from("x,y,series\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.x, p.y, p.series));
    }
    Ok(s)
}
