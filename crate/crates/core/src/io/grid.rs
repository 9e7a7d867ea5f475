//! Grid files: certificate values sampled on a regular grid, written as
//! comma-separated text with a one-line header.
//!
//! Columns are the state coordinates, `v`, `w`, `u`, `T` and `inside`,
//! where `inside = (v + u·T ≥ 0)` is written as 0 or 1.

use std::fmt::Write as _;

use super::OutputError;
use crate::relax::Certificate;

/// One plotted axis: `res` equally spaced values on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub index: usize,
    pub min: f64,
    pub max: f64,
    pub res: usize,
}

impl GridAxis {
    pub fn value(&self, k: usize) -> f64 {
        if self.res <= 1 {
            0.5 * (self.min + self.max)
        } else {
            self.min + (self.max - self.min) * k as f64 / (self.res - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub x: Vec<f64>,
    pub v: f64,
    pub w: f64,
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub variables: Vec<String>,
    pub axes: Vec<GridAxis>,
    pub u: f64,
    pub t: u32,
    pub rows: Vec<GridRow>,
}

pub fn inside_flag(v: f64, u: f64, t: u32) -> bool {
    v + u * t as f64 >= 0.0
}

/// Evaluates `cert` on the product grid of `axes`; coordinates not on an
/// axis are held at `base`.
pub fn grid(
    cert: &Certificate<f64>,
    axes: &[GridAxis],
    base: &[f64],
) -> Result<GridFile, OutputError> {
    let n = cert.n_vars();
    if base.len() != n {
        return Err(OutputError::Format(format!(
            "base point has {} coordinates for {n} variables",
            base.len()
        )));
    }
    if let Some(a) = axes
        .iter()
        .find(|a| a.index >= n || a.res == 0 || !(a.min <= a.max))
    {
        return Err(OutputError::Format(format!("invalid grid axis {a:?}")));
    }
    let t = cert.horizon.multiplier();
    let total: usize = axes.iter().map(|a| a.res).product();
    let mut rows = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..total {
        let mut x = base.to_vec();
        for (a, &k) in axes.iter().zip(&idx) {
            x[a.index] = a.value(k);
        }
        let v = cert.v.evaluate(&x).expect("dimension checked");
        let w = cert.w.evaluate(&x).expect("dimension checked");
        rows.push(GridRow {
            inside: inside_flag(v, cert.u, t),
            x,
            v,
            w,
        });
        // last axis varies fastest
        for j in (0..axes.len()).rev() {
            idx[j] += 1;
            if idx[j] < axes[j].res {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(GridFile {
        variables: cert.variables.clone(),
        axes: axes.to_vec(),
        u: cert.u,
        t,
        rows,
    })
}

impl GridFile {
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        for name in &self.variables {
            s.push_str(name);
            s.push(',');
        }
        s.push_str("v,w,u,T,inside\n");
        for r in &self.rows {
            for x in &r.x {
                let _ = write!(s, "{x:?},");
            }
            let _ = writeln!(
                s,
                "{:?},{:?},{:?},{},{}",
                r.v, r.w, self.u, self.t, r.inside as u8
            );
        }
        s
    }

    /// Parses the rows back; axis definitions are not stored in the file.
    pub fn from_text(text: &str) -> Result<Self, OutputError> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| OutputError::Format("empty grid file".into()))?
            .split(',')
            .collect();
        if header.len() < 5 || header[header.len() - 5..] != ["v", "w", "u", "T", "inside"] {
            return Err(OutputError::Format(
                "grid header must end with v,w,u,T,inside".into(),
            ));
        }
        let n = header.len() - 5;
        let bad =
            |line: usize| OutputError::Format(format!("malformed grid row at line {}", line + 2));
        let mut rows = Vec::new();
        let (mut u, mut t) = (0.0, 0);
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != n + 5 {
                return Err(bad(i));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i));
            let x = f[..n]
                .iter()
                .map(|s| num(s))
                .collect::<Result<Vec<_>, _>>()?;
            u = num(f[n + 2])?;
            t = f[n + 3].parse().map_err(|_| bad(i))?;
            let inside = match f[n + 4] {
                "0" => false,
                "1" => true,
                _ => return Err(bad(i)),
            };
            rows.push(GridRow {
                x,
                v: num(f[n])?,
                w: num(f[n + 1])?,
                inside,
            });
        }
        Ok(GridFile {
            variables: header[..n].iter().map(|s| s.to_string()).collect(),
            axes: Vec::new(),
            u,
            t,
            rows,
        })
    }
}
