//! Decision-boundary lattices over two features.

use anyhow::{bail, Result};
use dbrf::cascade::CascadeModel;
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bounds {
    /// Training min/max of each feature, widened by 5% of the range.
    Auto,
    Fixed { x: (f64, f64), y: (f64, f64) },
}

impl std::str::FromStr for Bounds {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Bounds::Auto);
        }
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| anyhow::anyhow!("bounds must be 'auto' or xmin,xmax,ymin,ymax"))?;
        if v.len() != 4 || v[0] > v[1] || v[2] > v[3] || v.iter().any(|x| !x.is_finite()) {
            bail!("bounds must be 'auto' or xmin,xmax,ymin,ymax with min <= max");
        }
        Ok(Bounds::Fixed {
            x: (v[0], v[1]),
            y: (v[2], v[3]),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    pub class: u32,
}

fn auto_range(min: f64, max: f64) -> (f64, f64) {
    let margin = if max > min { 0.05 * (max - min) } else { 0.5 };
    (min - margin, max + margin)
}

fn axis(lo: f64, hi: f64, r: usize) -> Vec<f64> {
    if r == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..r)
        .map(|k| lo + (hi - lo) * k as f64 / (r - 1) as f64)
        .collect()
}

/// `resolution x resolution` predictions, `y` outer and `x` inner. Features
/// other than `fx` and `fy` are held at their training medians.
pub fn grid(
    model: &CascadeModel,
    fx: usize,
    fy: usize,
    resolution: usize,
    bounds: Bounds,
) -> Result<Vec<GridPoint>> {
    let n = model.n_features();
    for f in [fx, fy] {
        if f >= n {
            bail!("feature index {f} out of range (model has {n} features)");
        }
    }
    if fx == fy {
        bail!("grid features must differ");
    }
    if resolution < 1 {
        bail!("resolution must be >= 1");
    }
    let cols = &model.schema.columns;
    let (xr, yr) = match bounds {
        Bounds::Auto => (
            auto_range(cols[fx].min, cols[fx].max),
            auto_range(cols[fy].min, cols[fy].max),
        ),
        Bounds::Fixed { x, y } => (x, y),
    };
    let xs = axis(xr.0, xr.1, resolution);
    let ys = axis(yr.0, yr.1, resolution);
    let base: Vec<f64> = cols.iter().map(|c| c.median).collect();
    let points = ys
        .par_iter()
        .flat_map_iter(|&y| {
            let mut row = base.clone();
            xs.iter()
                .map(move |&x| {
                    row[fx] = x;
                    row[fy] = y;
                    let class = model.predict_row(&row).map(|p| p.class);
                    class.map(|class| GridPoint { x, y, class })
                })
                .collect::<Vec<_>>()
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(points)
}

pub fn write_grid<W: std::io::Write>(w: W, model: &CascadeModel, points: &[GridPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "y", "label"])?;
    for p in points {
        out.write_record([
            p.x.to_string(),
            p.y.to_string(),
            model.schema.class_name(p.class).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
