//! Artifact writers: trajectory and basin CSV, JSON with 17 significant
//! digits, and plot documents.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::finders::BasinGrid;
use crate::integrator::{DenseTrajectory, IntegrateError};
use crate::models::SystemKind;

/// `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn coordinate_names(kind: SystemKind) -> &'static [&'static str] {
    match kind {
        SystemKind::Cart => &["q", "p", "x", "y"],
        SystemKind::Sphere => &["phi", "dphi", "theta", "dtheta"],
        _ => &["q", "p"],
    }
}

pub fn trajectory_header(kind: SystemKind) -> String {
    let mut h = String::from("t");
    for name in coordinate_names(kind) {
        h.push(',');
        h.push_str(name);
    }
    h
}

/// `t0, t0 + step, ...` up to `t_end`, with `t_end` always last.
pub fn sample_times(t0: f64, t_end: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0, "sample step must be positive");
    let span = t_end - t0;
    let slack = 1e-9 * step;
    let k_max = ((span + slack) / step).floor() as usize;
    let mut times: Vec<f64> = (0..=k_max).map(|k| t0 + k as f64 * step).collect();
    match times.last_mut() {
        Some(last) if (t_end - *last).abs() <= slack => *last = t_end,
        _ => times.push(t_end),
    }
    times
}

#[derive(Debug)]
pub enum EmitError {
    Io(io::Error),
    Sample(IntegrateError),
    InvalidStep(f64),
}

impl std::fmt::Display for EmitError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EmitError::Io(e) => write!(f, "{e}"),
            EmitError::Sample(e) => write!(f, "{e}"),
            EmitError::InvalidStep(s) => write!(f, "sample step must be > 0, got {s}"),
        }
    }
}

impl std::error::Error for EmitError {}

impl From<io::Error> for EmitError {
    fn from(e: io::Error) -> Self {
        EmitError::Io(e)
    }
}

/// Writes the trajectory sampled every `sample_step` over its span.
/// Returns the number of data rows.
pub fn write_trajectory_csv<W: Write>(
    out: &mut W,
    kind: SystemKind,
    trajectory: &DenseTrajectory,
    sample_step: f64,
) -> Result<usize, EmitError> {
    if !(sample_step > 0.0) {
        return Err(EmitError::InvalidStep(sample_step));
    }
    let times = sample_times(trajectory.start_time(), trajectory.end_time(), sample_step);
    let states = trajectory.sample(&times).map_err(EmitError::Sample)?;
    writeln!(out, "{}", trajectory_header(kind))?;
    for (t, y) in times.iter().zip(&states) {
        let mut line = fmt_f64(*t);
        for v in y {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        writeln!(out, "{line}")?;
    }
    Ok(times.len())
}

pub fn emit_trajectory_csv(
    path: &Path,
    kind: SystemKind,
    trajectory: &DenseTrajectory,
    sample_step: f64,
) -> Result<usize, EmitError> {
    let mut buf = Vec::new();
    let rows = write_trajectory_csv(&mut buf, kind, trajectory, sample_step)?;
    fs::write(path, buf)?;
    Ok(rows)
}

/// Row-major basin CSV: `i,j,<axis 0>,<axis 1>,tag,exit_time_proxy`.
pub fn write_basin_csv<W: Write>(out: &mut W, kind: SystemKind, basin: &BasinGrid) -> io::Result<()> {
    let names = coordinate_names(kind);
    let [a0, a1] = &basin.grid.axes;
    writeln!(
        out,
        "i,j,{},{},tag,exit_time_proxy",
        names[a0.coordinate], names[a1.coordinate]
    )?;
    for c in &basin.cells {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            c.i,
            c.j,
            fmt_f64(c.state[a0.coordinate]),
            fmt_f64(c.state[a1.coordinate]),
            c.tag.name(),
            fmt_f64(c.exit_time_proxy)
        )?;
    }
    Ok(())
}

/// Pretty JSON whose finite floats carry 17 significant digits.
struct Digits17<'a>(PrettyFormatter<'a>);

impl Formatter for Digits17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("in-memory serialization");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    fs::write(path, to_json(value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    Trajectory,
    Basin,
    BracketHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Renderer-agnostic plot description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

impl PlotSpec {
    /// One series per state coordinate against time.
    pub fn trajectory(title: &str, kind: SystemKind, times: &[f64], states: &[Vec<f64>]) -> Self {
        let series = coordinate_names(kind)
            .iter()
            .enumerate()
            .map(|(i, name)| Series {
                label: name.to_string(),
                x: times.to_vec(),
                y: states.iter().map(|s| s[i]).collect(),
            })
            .collect();
        PlotSpec {
            kind: PlotKind::Trajectory,
            title: title.into(),
            x_label: "t".into(),
            y_label: "state".into(),
            series,
        }
    }

    /// One scatter series per fate tag, in order of first appearance.
    pub fn basin(title: &str, kind: SystemKind, basin: &BasinGrid) -> Self {
        let names = coordinate_names(kind);
        let [a0, a1] = &basin.grid.axes;
        let mut series: Vec<Series> = Vec::new();
        for c in &basin.cells {
            let label = c.tag.name();
            let idx = match series.iter().position(|s| s.label == label) {
                Some(i) => i,
                None => {
                    series.push(Series {
                        label: label.into(),
                        x: Vec::new(),
                        y: Vec::new(),
                    });
                    series.len() - 1
                }
            };
            series[idx].x.push(c.state[a0.coordinate]);
            series[idx].y.push(c.state[a1.coordinate]);
        }
        PlotSpec {
            kind: PlotKind::Basin,
            title: title.into(),
            x_label: names[a0.coordinate].into(),
            y_label: names[a1.coordinate].into(),
            series,
        }
    }

    /// Bracket ends against bisection step.
    pub fn bracket_history(title: &str, lo: &[f64], hi: &[f64]) -> Self {
        let steps: Vec<f64> = (0..lo.len()).map(|k| k as f64).collect();
        PlotSpec {
            kind: PlotKind::BracketHistory,
            title: title.into(),
            x_label: "step".into(),
            y_label: "s".into(),
            series: vec![
                Series {
                    label: "s_lo".into(),
                    x: steps.clone(),
                    y: lo.to_vec(),
                },
                Series {
                    label: "s_hi".into(),
                    x: steps,
                    y: hi.to_vec(),
                },
            ],
        }
    }
}
