//! CSV rows, reference tables and SVG charts.
//!
//! Two number formats are used. Sweep and metrics files keep full double
//! precision (shortest round-trip representation). The reference tables are
//! golden files printed at fixed precision: ratios and probabilities at a
//! fixed number of decimals, rates in scientific notation with three
//! significant digits.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::config::Scenario;
use crate::design::{sweep, Axis, DesignError, SweepPoint, SweepSpec, REFERENCE_DECOY_GRID};
use crate::enumeration::{Metrics, Ratio};
use crate::photon_stats::{emission_profile, fiber_segment, solve_photon_loss_prob, DomainError};

pub const METRICS_HEADER: [&str; 8] = [
    "lambda_s", "lambda_d", "l_total", "rho_e_sd", "rho_y_sd", "R_k", "y_bs", "y_bd",
];

/// One scenario's metrics as a flat record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub lambda_s: f64,
    pub lambda_d: f64,
    pub l_total: f64,
    pub rho_e_sd: Ratio,
    pub rho_y_sd: Ratio,
    #[serde(rename = "R_k")]
    pub r_k: f64,
    pub y_bs: f64,
    pub y_bd: f64,
    pub n_err_sift: f64,
}

impl MetricsRecord {
    pub fn new(scenario: &Scenario, m: &Metrics) -> Self {
        Self {
            lambda_s: scenario.source.lambda_s,
            lambda_d: scenario.source.lambda_d,
            l_total: scenario.link.l_total,
            rho_e_sd: m.rho_e_sd,
            rho_y_sd: m.rho_y_sd,
            r_k: m.r_k,
            y_bs: m.y_bs,
            y_bd: m.y_bd,
            n_err_sift: m.n_err_sift,
        }
    }

    fn csv_fields(&self) -> [String; 8] {
        [
            self.lambda_s.to_string(),
            self.lambda_d.to_string(),
            self.l_total.to_string(),
            self.rho_e_sd.to_string(),
            self.rho_y_sd.to_string(),
            self.r_k.to_string(),
            self.y_bs.to_string(),
            self.y_bd.to_string(),
        ]
    }
}

/// Writes one full-precision metrics row per record.
pub fn write_metrics_csv<W: io::Write>(records: &[MetricsRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for r in records {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn sweep_records(points: &[SweepPoint]) -> Vec<MetricsRecord> {
    points
        .iter()
        .map(|p| MetricsRecord::new(&p.scenario, &p.metrics))
        .collect()
}

/// Rates such as `R_k`: three significant digits, `6.08e-5`.
pub fn fmt_rate(x: f64) -> String {
    format!("{x:.2e}")
}

/// Ratios at two decimals; `undef` when undefined.
pub fn fmt_ratio(r: Ratio) -> String {
    format!("{r:.2}")
}

/// A fixed-precision table destined for a golden CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fiber loss examples at 0.2 dB/km with 100 photons launched: loss in dB,
/// loss ratio, mean arrivals and the per-photon loss probability from the
/// solver.
pub fn loss_table() -> Result<Table, DomainError> {
    const ALPHA: f64 = 0.2;
    const LAUNCHED: f64 = 100.0;
    let mut rows = Vec::new();
    for l in [15.0, 50.0, 100.0] {
        let seg = fiber_segment(ALPHA, l)?;
        let n = LAUNCHED / seg.rho;
        let p_fl = solve_photon_loss_prob(LAUNCHED, n)?;
        rows.push(vec![
            format!("{l}"),
            format!("{:.2}", seg.loss_db),
            format!("{:.2}", seg.rho),
            format!("{LAUNCHED}"),
            format!("{n:.2}"),
            format!("{p_fl:.2}"),
        ]);
    }
    Ok(Table {
        header: vec!["l_km", "L_dB", "rho", "lambda", "n", "p_fl"],
        rows,
    })
}

/// Emission probabilities for a few source means, with both tail masses
/// `P(j > 1)` and `P(j > 2)`.
pub fn emission_table() -> Result<Table, DomainError> {
    let mut rows = Vec::new();
    for lambda in [0.1, 0.2, 0.5, 1.0] {
        let p = emission_profile(lambda, 2)?;
        rows.push(vec![
            format!("{lambda:.1}"),
            format!("{:.4}", p.probs[0]),
            format!("{:.4}", p.probs[1]),
            format!("{:.4}", p.probs[2]),
            format!("{:.4}", p.mass_above(1)),
            format!("{:.4}", p.mass_above(2)),
        ]);
    }
    Ok(Table {
        header: vec!["lambda", "phi_0", "phi_1", "phi_2", "phi_gt1", "phi_gt2"],
        rows,
    })
}

/// The design table: both ratios and the key rate over the reference decoy
/// grid around `base`.
pub fn decoy_table(base: &Scenario) -> Result<Table, DesignError> {
    let spec = SweepSpec::new(*base, Axis::LambdaD, REFERENCE_DECOY_GRID.to_vec())?;
    let rows = sweep(&spec)?
        .iter()
        .map(|p| {
            vec![
                format!("{:.2}", p.value),
                fmt_ratio(p.metrics.rho_e_sd),
                fmt_ratio(p.metrics.rho_y_sd),
                fmt_rate(p.metrics.r_k),
            ]
        })
        .collect();
    Ok(Table {
        header: vec!["lambda_d", "rho_e_sd", "rho_y_sd", "R_k"],
        rows,
    })
}

/// A named polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Base-10 logarithmic y axis; non-positive values are dropped.
    pub log_y: bool,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn linear_ticks(lo: f64, hi: f64) -> (f64, f64, Vec<f64>) {
    let step = nice_step(hi - lo, 5);
    let lo = (lo / step).floor() * step;
    let hi = (hi / step).ceil() * step;
    let n = ((hi - lo) / step).round() as usize;
    (lo, hi, (0..=n).map(|i| lo + i as f64 * step).collect())
}

fn tick_label(v: f64) -> String {
    let s = format!("{:.6}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LineChart {
    /// Renders a standalone SVG document. Output depends only on the chart
    /// contents.
    pub fn to_svg(&self) -> String {
        let ty = |y: f64| if self.log_y { y.log10() } else { y };
        let pts: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_y || *y > 0.0))
                    .map(|&(x, y)| (x, ty(y)))
                    .collect()
            })
            .collect();
        let all = || pts.iter().flatten();
        let (mut x0, mut x1) = all().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
        let (mut y0, mut y1) = all().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let (x0, x1, xticks) = linear_ticks(x0, x1);
        let (y0, y1, yticks) = if self.log_y {
            let (lo, hi) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
            let n = (hi - lo) as i32;
            (lo, hi, (0..=n).map(|i| lo + f64::from(i)).collect())
        } else {
            linear_ticks(y0, y1)
        };

        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        for &t in &xticks {
            let x = sx(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.1}" y1="{TOP}" x2="{x:.1}" y2="{:.1}" stroke="#e0e0e0"/>"##,
                TOP + ph
            );
            let _ = writeln!(
                s,
                r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                TOP + ph + 18.0,
                tick_label(t)
            );
        }
        for &t in &yticks {
            let y = sy(t);
            let label = if self.log_y {
                format!("1e{}", t as i32)
            } else {
                tick_label(t)
            };
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e0e0e0"/>"##,
                LEFT + pw
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"#,
                LEFT - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, (series, p)) in self.series.iter().zip(&pts).enumerate() {
            let color = COLORS[i % COLORS.len()];
            let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                path.join(" ")
            );
            for &(x, y) in p {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                    sx(x),
                    sy(y)
                );
            }
            let ly = TOP + 12.0 + 20.0 * i as f64;
            let lx = LEFT + pw + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
                lx + 20.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 26.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// `R_k` against the swept axis, log scale.
pub fn rate_chart(axis: Axis, points: &[SweepPoint]) -> LineChart {
    LineChart {
        title: format!("Key generation rate vs {axis}"),
        x_label: axis.name().to_string(),
        y_label: "R_k (bits per slot)".to_string(),
        log_y: true,
        series: vec![Series {
            name: "R_k".to_string(),
            points: points.iter().map(|p| (p.value, p.metrics.r_k)).collect(),
        }],
    }
}

/// Both design ratios against the swept axis. Undefined ratios leave gaps.
pub fn ratio_chart(axis: Axis, points: &[SweepPoint]) -> LineChart {
    let series = |name: &str, f: fn(&Metrics) -> Ratio| Series {
        name: name.to_string(),
        points: points
            .iter()
            .filter_map(|p| f(&p.metrics).value().map(|v| (p.value, v)))
            .collect(),
    };
    LineChart {
        title: format!("Signal-to-decoy ratios vs {axis}"),
        x_label: axis.name().to_string(),
        y_label: "ratio".to_string(),
        log_y: false,
        series: vec![series("rho_e_sd", |m| m.rho_e_sd), series("rho_y_sd", |m| m.rho_y_sd)],
    }
}
