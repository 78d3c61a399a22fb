use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ceb_core::tabular::PlanePoint;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::sweep::{Manifest, RunStatus};

pub const PLANE_HEADER: [&str; 5] = ["rho", "i_xz", "i_yz", "residual", "converged"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Nats,
    Bits,
}

impl Units {
    /// Multiplier from nats.
    pub fn scale(self) -> f64 {
        match self {
            Units::Nats => 1.0,
            Units::Bits => std::f64::consts::LOG2_E,
        }
    }
}

impl std::str::FromStr for Units {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nats" => Ok(Units::Nats),
            "bits" => Ok(Units::Bits),
            other => Err(LabError::Config(format!("unknown unit `{other}`"))),
        }
    }
}

/// One information-plane point, always stored in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneRow {
    pub rho: f64,
    pub i_xz: f64,
    pub i_yz: f64,
    pub residual: f64,
    pub converged: bool,
}

impl From<&PlanePoint> for PlaneRow {
    fn from(p: &PlanePoint) -> Self {
        Self {
            rho: p.rho,
            i_xz: p.i_xz,
            i_yz: p.i_yz,
            residual: p.residual,
            converged: p.converged,
        }
    }
}

/// Variational plane estimates of a sweep: rate against H(Y) + ⟨log c⟩.
pub fn rows_from_manifest(m: &Manifest) -> Vec<PlaneRow> {
    m.runs
        .iter()
        .filter_map(|r| {
            let metrics = r.metrics?;
            Some(PlaneRow {
                rho: r.rho?,
                i_xz: metrics.rate?,
                i_yz: metrics.i_yz_lower?,
                residual: metrics.re_x.unwrap_or(f64::NAN),
                converged: r.status == RunStatus::Ok,
            })
        })
        .collect()
}

/// Writes the header even when there are no rows.
pub fn write_plane_csv<W: Write>(rows: &[PlaneRow], units: Units, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(PLANE_HEADER)?;
    let s = units.scale();
    for r in rows {
        w.write_record([
            r.rho.to_string(),
            (r.i_xz * s).to_string(),
            (r.i_yz * s).to_string(),
            (r.residual * s).to_string(),
            r.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a plane CSV written in `units` back into nats.
pub fn read_plane_csv<R: Read>(reader: R, units: Units) -> Result<Vec<PlaneRow>> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().collect::<Vec<_>>() != PLANE_HEADER {
        return Err(LabError::Config(format!("plane CSV header must be {}", PLANE_HEADER.join(","))));
    }
    let s = units.scale();
    r.deserialize::<PlaneRow>()
        .map(|row| {
            let row = row?;
            Ok(PlaneRow {
                i_xz: row.i_xz / s,
                i_yz: row.i_yz / s,
                residual: row.residual / s,
                ..row
            })
        })
        .collect()
}

/// Scatter of the plane with the I(Y;Z) = I(X;Z) diagonal and the optional I(X;Y) ceiling.
pub fn render_svg(rows: &[PlaneRow], units: Units, ceiling: Option<f64>) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let s = units.scale();
    let finite = rows.iter().filter(|r| r.i_xz.is_finite() && r.i_yz.is_finite());
    let top = finite
        .flat_map(|r| [r.i_xz * s, r.i_yz * s])
        .chain(ceiling.map(|c| c * s))
        .fold(0.0f64, f64::max)
        .max(1e-3)
        * 1.1;
    let px = |v: f64| PAD + v / top * (W - 2.0 * PAD);
    let py = |v: f64| H - PAD - v / top * (H - 2.0 * PAD);
    let unit = match units {
        Units::Nats => "nats",
        Units::Bits => "bits",
    };
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{:.2} {:.2} H{:.2} M{:.2} {:.2} V{:.2}" stroke="black" fill="none"/>"#,
        px(0.0),
        py(0.0),
        px(top),
        px(0.0),
        py(0.0),
        py(top)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        px(0.0),
        py(0.0),
        px(top),
        py(top)
    );
    if let Some(c) = ceiling {
        let c = c * s;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
            px(0.0),
            py(c),
            px(top),
            py(c)
        );
    }
    for r in rows.iter().filter(|r| r.i_xz.is_finite() && r.i_yz.is_finite()) {
        let fill = if r.converged { "steelblue" } else { "firebrick" };
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{fill}"><title>rho {}</title></circle>"#,
            px(r.i_xz * s),
            py(r.i_yz * s),
            r.rho
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">I(X;Z) [{unit}]</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {:.2})">I(Y;Z) [{unit}]</text>"#,
        H / 2.0,
        H / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}

/// Writes `plane.csv` and `plane.svg` into `dir`.
pub fn emit_plane(rows: &[PlaneRow], units: Units, ceiling: Option<f64>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_plane_csv(rows, units, fs::File::create(dir.join("plane.csv"))?)?;
    fs::write(dir.join("plane.svg"), render_svg(rows, units, ceiling))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ceb_core::info::mutual_information;
    use ceb_core::tabular::{plane_sweep, SweepOptions, TabularObjective};
    use ceb_core::Joint;

    #[test]
    fn empty_input_is_header_only() {
        let mut out = Vec::new();
        write_plane_csv(&[], Units::Nats, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "rho,i_xz,i_yz,residual,converged\n");
        assert!(read_plane_csv(&b"rho,i_xz,i_yz,residual,converged\n"[..], Units::Nats).unwrap().is_empty());
    }

    #[test]
    fn bits_toggle_scales_information_only() {
        let rows = [PlaneRow {
            rho: 1.5,
            i_xz: 2f64.ln(),
            i_yz: 2f64.ln() / 2.0,
            residual: 2f64.ln() / 2.0,
            converged: true,
        }];
        let mut out = Vec::new();
        write_plane_csv(&rows, Units::Bits, &mut out).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "1.5,1,0.5,0.5,true");
        let back = read_plane_csv(&out[..], Units::Bits).unwrap();
        assert!((back[0].i_xz - rows[0].i_xz).abs() < 1e-15);
        assert!(read_plane_csv(&b"a,b\n"[..], Units::Nats).is_err());
    }

    #[test]
    fn deterministic_sweep_lies_on_rectified_boundary() {
        let j = Joint::uniform_deterministic(8, 4).unwrap();
        let rhos: Vec<f64> = (-4..=10).map(|k| f64::from(k) * 0.5).collect();
        let points = plane_sweep(&j, &rhos, TabularObjective::Ceb, &SweepOptions::default()).unwrap();
        let rows: Vec<PlaneRow> = points.iter().map(PlaneRow::from).collect();
        let i_xy = mutual_information(&j);
        for r in &rows {
            // Y is a function of X: every feasible point has I(Y;Z) ≤ min(I(X;Z), I(X;Y))
            assert!(r.i_yz <= r.i_xz.min(i_xy) + 1e-9, "{r:?}");
            // and the optimum sits on the diagonal edge of that region
            assert!(r.residual.abs() < 1e-6, "{r:?}");
        }
        let svg = render_svg(&rows, Units::Bits, Some(i_xy));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), rows.len());
        let dir = tempfile::tempdir().unwrap();
        emit_plane(&rows, Units::Nats, Some(i_xy), dir.path()).unwrap();
        let back = read_plane_csv(fs::File::open(dir.path().join("plane.csv")).unwrap(), Units::Nats).unwrap();
        assert_eq!(back.len(), rows.len());
    }
}
