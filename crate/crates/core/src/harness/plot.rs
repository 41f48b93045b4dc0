//! Reward-versus-step charts from metrics files: an SVG line chart plus a
//! merged CSV on the union of the step grids.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{io_err, Error, Result};

pub const STEP_COLUMN: &str = "step";
pub const REWARD_COLUMN: &str = "average_reward";

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(u64, f64)>,
}

/// Union step grid and one optional value per series at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Merged {
    pub names: Vec<String>,
    pub steps: Vec<u64>,
    pub values: Vec<Vec<Option<f64>>>,
}

fn parse_error(path: &Path, line: u64, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message,
    }
}

/// Reads `(step, average_reward)` pairs. Any malformed line is an error that
/// names its line number.
pub fn read_series(path: &Path) -> Result<Series> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let csv_error = |e: csv::Error| {
        let line = e.position().map_or(1, |p| p.line());
        parse_error(path, line, e.to_string())
    };
    let header = reader.headers().map_err(csv_error)?.clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_error(path, 1, format!("missing column {name:?}")))
    };
    let (step_col, reward_col) = (column(STEP_COLUMN)?, column(REWARD_COLUMN)?);
    let mut points: Vec<(u64, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let step: u64 = field(step_col)
            .parse()
            .map_err(|e| parse_error(path, line, format!("bad step {:?}: {e}", field(step_col))))?;
        let reward: f64 = field(reward_col)
            .parse()
            .map_err(|e| parse_error(path, line, format!("bad reward {:?}: {e}", field(reward_col))))?;
        if !reward.is_finite() {
            return Err(parse_error(path, line, format!("non-finite reward {reward}")));
        }
        if let Some(&(prev, _)) = points.last() {
            if step <= prev {
                return Err(parse_error(path, line, format!("step {step} does not increase past {prev}")));
            }
        }
        points.push((step, reward));
    }
    Ok(Series {
        name: path.display().to_string(),
        points,
    })
}

pub fn merge(series: &[Series]) -> Merged {
    let mut grid: BTreeMap<u64, Vec<Option<f64>>> = BTreeMap::new();
    for (i, s) in series.iter().enumerate() {
        for &(step, v) in &s.points {
            grid.entry(step).or_insert_with(|| vec![None; series.len()])[i] = Some(v);
        }
    }
    let (steps, values) = grid.into_iter().unzip();
    Merged {
        names: series.iter().map(|s| s.name.clone()).collect(),
        steps,
        values,
    }
}

pub fn merged_csv(m: &Merged) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Csv {
        path: "<merged>".into(),
        message: e.to_string(),
    };
    let mut header = vec![STEP_COLUMN.to_string()];
    header.extend(m.names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (step, row) in m.steps.iter().zip(&m.values) {
        let mut rec = vec![step.to_string()];
        rec.extend(row.iter().map(|v| v.map_or_else(String::new, |v| v.to_string())));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv {
        path: "<merged>".into(),
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Line chart with one polyline per run of consecutive grid points where a
/// series has values; every point also carries its step and value as data
/// attributes.
pub fn render_svg(m: &Merged) -> String {
    let (w, h) = (800.0, 480.0);
    let (left, right, top, bottom) = (80.0, 220.0, 30.0, 50.0);
    let all: Vec<f64> = m.values.iter().flatten().flatten().copied().collect();
    let (mut lo, mut hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if all.is_empty() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let (s_lo, s_hi) = match (m.steps.first(), m.steps.last()) {
        (Some(&a), Some(&b)) if b > a => (a as f64, b as f64),
        (Some(&a), _) => (a as f64 - 1.0, a as f64 + 1.0),
        _ => (0.0, 1.0),
    };
    let px = |step: u64| left + (step as f64 - s_lo) / (s_hi - s_lo) * (w - left - right);
    let py = |v: f64| top + (hi - v) / (hi - lo) * (h - top - bottom);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (left, w - right, top, h - bottom);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0} {y0} L{x0} {y1} L{x1} {y1}" stroke="black" fill="none"/>"#
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">step</text>"#, (x0 + x1) / 2.0, h - 10.0);
    let _ = writeln!(svg, r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">average reward</text>"#, (y0 + y1) / 2.0, (y0 + y1) / 2.0);
    for (label, y) in [(hi, y0), (lo, y1)] {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{label:.3}</text>"#, x0 - 5.0, y + 4.0);
    }
    for (label, x) in [(s_lo, x0), (s_hi, x1)] {
        let _ = writeln!(svg, r#"<text x="{x}" y="{}" font-size="11" text-anchor="middle">{label}</text>"#, y1 + 15.0);
    }

    for (si, name) in m.names.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut runs: Vec<Vec<(u64, f64)>> = vec![Vec::new()];
        for (step, row) in m.steps.iter().zip(&m.values) {
            match row[si] {
                Some(v) => runs.last_mut().unwrap().push((*step, v)),
                None if !runs.last().unwrap().is_empty() => runs.push(Vec::new()),
                None => {}
            }
        }
        let _ = writeln!(svg, r#"<g data-series="{}">"#, escape(name));
        for run in runs.iter().filter(|r| r.len() > 1) {
            let pts: Vec<String> = run.iter().map(|&(s, v)| format!("{:.2},{:.2}", px(s), py(v))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" stroke="{color}" stroke-width="1.5" fill="none"/>"#,
                pts.join(" ")
            );
        }
        for &(s, v) in runs.iter().flatten() {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" data-step="{s}" data-value="{v}"/>"#,
                px(s),
                py(v)
            );
        }
        let _ = writeln!(svg, "</g>");
        let ly = top + 15.0 + 18.0 * si as f64;
        let _ = writeln!(svg, r#"<rect x="{}" y="{}" width="12" height="3" fill="{color}"/>"#, w - right + 15.0, ly - 4.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}" font-size="11">{}</text>"#, w - right + 32.0, escape(name));
    }
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Clone)]
pub struct PlotOutputs {
    pub svg: PathBuf,
    pub csv: PathBuf,
}

/// Writes the chart to `out` and the merged CSV next to it with a `.csv`
/// extension.
pub fn run_plot(files: &[PathBuf], out: &Path) -> Result<PlotOutputs> {
    if files.is_empty() {
        return Err(Error::Config("plot needs at least one metrics file".into()));
    }
    let mut series = files.iter().map(|f| read_series(f)).collect::<Result<Vec<_>>>()?;
    for i in 1..series.len() {
        let dupes = series[..i].iter().filter(|s| s.name == series[i].name).count();
        if dupes > 0 {
            series[i].name = format!("{} #{}", series[i].name, dupes + 1);
        }
    }
    let merged = merge(&series);
    let outputs = PlotOutputs {
        svg: out.to_path_buf(),
        csv: out.with_extension("csv"),
    };
    if outputs.csv == outputs.svg {
        return Err(Error::Config("plot output must not be a .csv path".into()));
    }
    std::fs::write(&outputs.svg, render_svg(&merged)).map_err(io_err(&outputs.svg))?;
    std::fs::write(&outputs.csv, merged_csv(&merged)?).map_err(io_err(&outputs.csv))?;
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn one_file_gives_one_series() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.csv", "step,average_reward,x\n10,-5.5,1\n20,-4,2\n");
        let out = run_plot(&[a], &dir.path().join("p.svg")).unwrap();
        let svg = std::fs::read_to_string(&out.svg).unwrap();
        assert_eq!(svg.matches("<g data-series").count(), 1);
        assert_eq!(svg.matches("<polyline").count(), 1);
        let csv = std::fs::read_to_string(&out.csv).unwrap();
        assert!(csv.starts_with("step,"));
        assert!(csv.contains("10,-5.5\n"));
    }

    #[test]
    fn disjoint_grids_are_not_connected() {
        let a = Series {
            name: "a".into(),
            points: vec![(0, 1.0), (2, 2.0), (4, 3.0)],
        };
        let b = Series {
            name: "b".into(),
            points: vec![(1, 5.0), (3, 6.0)],
        };
        let m = merge(&[a, b]);
        assert_eq!(m.steps, vec![0, 1, 2, 3, 4]);
        assert_eq!(m.values[1], vec![None, Some(5.0)]);
        let svg = render_svg(&m);
        assert_eq!(svg.matches("<polyline").count(), 0);
        assert_eq!(svg.matches("<circle").count(), 5);
        let csv = merged_csv(&m).unwrap();
        assert_eq!(csv.lines().nth(2).unwrap(), "1,,5");
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let dir = tempfile::tempdir().unwrap();
        let bad = write(dir.path(), "bad.csv", "step,average_reward\n1,2\n2,oops\n");
        match read_series(&bad).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        let ragged = write(dir.path(), "r.csv", "step,average_reward\n1,2\n2,3,4\n");
        assert!(matches!(read_series(&ragged).unwrap_err(), Error::Parse { line: 3, .. }));
        let nocol = write(dir.path(), "n.csv", "step,reward\n1,2\n");
        assert!(matches!(read_series(&nocol).unwrap_err(), Error::Parse { line: 1, .. }));
        let backwards = write(dir.path(), "b.csv", "step,average_reward\n5,2\n4,3\n");
        assert!(matches!(read_series(&backwards).unwrap_err(), Error::Parse { line: 3, .. }));
    }

    #[test]
    fn no_files_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(run_plot(&[], &dir.path().join("p.svg")).is_err());
    }
}
