//! Parameter sweeps and decoy-mean selection.
//!
//! A design is acceptable when Bob can see Eve, i.e. the signal-to-decoy
//! yield ratio `ρ^y_sd` is comfortably above one, and Eve's two-photon haul is
//! cluttered with decoys, i.e. `ρ^e_sd` is not too large. Both ratios fall as
//! the decoy mean approaches the signal mean, so the two goals pull in
//! opposite directions; [`select_decoy_mean`] walks a grid of decoy means and
//! reports which ones satisfy both.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Scenario, ValidationErrors};
use crate::enumeration::{metrics, AnalysisError, Metrics, Ratio};

/// The decoy means evaluated in the reference design table.
pub const REFERENCE_DECOY_GRID: [f64; 8] = [0.01, 0.05, 0.10, 0.15, 0.20, 0.30, 0.40, 0.50];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    LambdaD,
    LTotal,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::LambdaD => "lambda_d",
            Axis::LTotal => "l_total",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &Scenario, value: f64) -> Scenario {
        let mut s = *base;
        match self {
            Axis::LambdaD => s.source.lambda_d = value,
            Axis::LTotal => s.link.l_total = value,
        }
        s
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lambda_d" => Ok(Axis::LambdaD),
            "l_total" => Ok(Axis::LTotal),
            other => Err(DesignError::UnknownAxis(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DesignError {
    #[error("unknown sweep axis {0:?} (expected lambda_d or l_total)")]
    UnknownAxis(String),
    #[error("sweep needs at least one axis value")]
    EmptyValues,
    #[error("axis values must be finite and strictly increasing (value #{index} = {value})")]
    NotIncreasing { index: usize, value: f64 },
    #[error("at {axis} = {value}: {source}")]
    InvalidPoint {
        axis: Axis,
        value: f64,
        #[source]
        source: ValidationErrors,
    },
    #[error("decoy grid values must be in (0, lambda_s = {lambda_s}] (got {value})")]
    GridOutOfRange { value: f64, lambda_s: f64 },
    #[error("min_yield_ratio must be > 1 (got {0})")]
    MinYieldRatio(f64),
    #[error("max_eve_ratio must be a positive number (got {0})")]
    MaxEveRatio(f64),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// A one-dimensional sweep around a base scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: Scenario,
    pub axis: Axis,
    pub values: Vec<f64>,
}

impl SweepSpec {
    /// Checks the value list and that every point yields a valid scenario.
    pub fn new(base: Scenario, axis: Axis, values: Vec<f64>) -> Result<Self, DesignError> {
        if values.is_empty() {
            return Err(DesignError::EmptyValues);
        }
        for (index, &value) in values.iter().enumerate() {
            let increasing = index == 0 || value > values[index - 1];
            if !value.is_finite() || !increasing {
                return Err(DesignError::NotIncreasing { index, value });
            }
            axis.apply(&base, value)
                .validated()
                .map_err(|source| DesignError::InvalidPoint { axis, value, source })?;
        }
        Ok(Self { base, axis, values })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub scenario: Scenario,
    pub metrics: Metrics,
}

/// Evaluates every point of the sweep, in input order.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepPoint>, DesignError> {
    spec.values
        .par_iter()
        .map(|&value| {
            let scenario = spec.axis.apply(&spec.base, value);
            let metrics = metrics(&scenario).map_err(|e| match e {
                AnalysisError::Invalid(source) => DesignError::InvalidPoint {
                    axis: spec.axis,
                    value,
                    source,
                },
                other => other.into(),
            })?;
            Ok(SweepPoint {
                value,
                scenario,
                metrics,
            })
        })
        .collect()
}

/// Acceptability thresholds for a decoy design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignConstraints {
    /// Smallest acceptable `ρ^y_sd`.
    pub min_yield_ratio: f64,
    /// Largest acceptable `ρ^e_sd`.
    pub max_eve_ratio: f64,
}

impl Default for DesignConstraints {
    fn default() -> Self {
        Self {
            min_yield_ratio: 2.0,
            max_eve_ratio: 12.0,
        }
    }
}

/// Percentage of Eve's two-photon pulses that are decoys, `100/ρ^e_sd`.
pub fn decoy_clutter_percent(rho_e_sd: Ratio) -> Option<f64> {
    rho_e_sd.value().map(|r| 100.0 / r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityRow {
    pub lambda_d: f64,
    pub rho_y_sd: Ratio,
    pub rho_e_sd: Ratio,
    pub clutter_percent: Option<f64>,
    pub meets_yield: bool,
    pub meets_eve: bool,
}

impl FeasibilityRow {
    pub fn feasible(&self) -> bool {
        self.meets_yield && self.meets_eve
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Infeasibility {
    /// `ρ^e_sd ≥ m_s/m_d` for every decoy mean not above the signal mean.
    ScaleLaw { max_eve_ratio: f64, bound: f64 },
    /// No grid point meets both thresholds.
    NoGridPoint,
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Infeasibility::ScaleLaw { max_eve_ratio, bound } => write!(
                f,
                "max_eve_ratio {max_eve_ratio} is not above m_s/m_d = {bound}; rho_e_sd cannot drop below m_s/m_d while lambda_d <= lambda_s"
            ),
            Infeasibility::NoGridPoint => f.write_str("no grid point satisfies both constraints"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Selection {
    Recommended {
        /// The feasible decoy mean that makes Eve most visible to Bob.
        lambda_d: f64,
        rho_y_sd: f64,
        rho_e_sd: f64,
        /// The feasible decoy mean that buries Eve in the most decoys.
        most_clutter_lambda_d: f64,
    },
    Infeasible {
        reasons: Vec<Infeasibility>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub constraints: DesignConstraints,
    pub rows: Vec<FeasibilityRow>,
    pub selection: Selection,
}

impl DesignReport {
    pub fn is_feasible(&self) -> bool {
        matches!(self.selection, Selection::Recommended { .. })
    }

    pub fn recommended(&self) -> Option<f64> {
        match self.selection {
            Selection::Recommended { lambda_d, .. } => Some(lambda_d),
            Selection::Infeasible { .. } => None,
        }
    }
}

impl fmt::Display for DesignReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "constraints: rho_y_sd >= {}, rho_e_sd <= {}",
            self.constraints.min_yield_ratio, self.constraints.max_eve_ratio
        )?;
        writeln!(
            f,
            "{:>9} {:>10} {:>10} {:>10}  feasible",
            "lambda_d", "rho_e_sd", "rho_y_sd", "clutter%"
        )?;
        for r in &self.rows {
            let clutter = r.clutter_percent.map_or("undef".to_string(), |c| format!("{c:.2}"));
            writeln!(
                f,
                "{:>9} {:>10.2} {:>10.2} {:>10}  {}",
                r.lambda_d,
                r.rho_e_sd,
                r.rho_y_sd,
                clutter,
                if r.feasible() { "yes" } else { "no" }
            )?;
        }
        match &self.selection {
            Selection::Recommended {
                lambda_d,
                rho_y_sd,
                rho_e_sd,
                most_clutter_lambda_d,
            } => {
                writeln!(
                    f,
                    "recommended lambda_d = {lambda_d} (rho_y_sd = {rho_y_sd:.2}, rho_e_sd = {rho_e_sd:.2}, {:.2}% decoy clutter at Eve)",
                    100.0 / rho_e_sd
                )?;
                if most_clutter_lambda_d != lambda_d {
                    writeln!(
                        f,
                        "most decoy clutter among feasible points: lambda_d = {most_clutter_lambda_d}"
                    )?;
                }
            }
            Selection::Infeasible { reasons } => {
                writeln!(f, "infeasible:")?;
                for r in reasons {
                    writeln!(f, "  - {r}")?;
                }
            }
        }
        Ok(())
    }
}

/// Picks a decoy mean from `grid` under `constraints`.
///
/// Among grid points with `ρ^y_sd ≥ min_yield_ratio` and
/// `ρ^e_sd ≤ max_eve_ratio`, recommends the one with the largest yield ratio,
/// i.e. detectability of Eve takes precedence over decoy clutter. The
/// feasible point with the most clutter is reported alongside. When nothing
/// qualifies the report says why instead of falling back to some point.
pub fn select_decoy_mean(
    base: &Scenario,
    constraints: &DesignConstraints,
    grid: &[f64],
) -> Result<DesignReport, DesignError> {
    if !(constraints.min_yield_ratio > 1.0 && constraints.min_yield_ratio.is_finite()) {
        return Err(DesignError::MinYieldRatio(constraints.min_yield_ratio));
    }
    if constraints.max_eve_ratio.is_nan() || constraints.max_eve_ratio <= 0.0 {
        return Err(DesignError::MaxEveRatio(constraints.max_eve_ratio));
    }
    if grid.is_empty() {
        return Err(DesignError::EmptyValues);
    }
    let lambda_s = base.source.lambda_s;
    if let Some(&value) = grid.iter().find(|&&v| !(v > 0.0 && v <= lambda_s)) {
        return Err(DesignError::GridOutOfRange { value, lambda_s });
    }

    let spec = SweepSpec::new(*base, Axis::LambdaD, grid.to_vec())?;
    let rows: Vec<FeasibilityRow> = sweep(&spec)?
        .into_iter()
        .map(|p| {
            let m = p.metrics;
            FeasibilityRow {
                lambda_d: p.value,
                rho_y_sd: m.rho_y_sd,
                rho_e_sd: m.rho_e_sd,
                clutter_percent: decoy_clutter_percent(m.rho_e_sd),
                meets_yield: m.rho_y_sd.value().is_some_and(|r| r >= constraints.min_yield_ratio),
                meets_eve: m.rho_e_sd.value().is_some_and(|r| r <= constraints.max_eve_ratio),
            }
        })
        .collect();

    let mut reasons = Vec::new();
    let bound = base.source.m_s as f64 / base.source.m_d as f64;
    if constraints.max_eve_ratio <= bound {
        reasons.push(Infeasibility::ScaleLaw {
            max_eve_ratio: constraints.max_eve_ratio,
            bound,
        });
    }

    let feasible = || rows.iter().filter(|r| r.feasible());
    let by = |f: fn(&FeasibilityRow) -> Ratio| {
        move |a: &&FeasibilityRow, b: &&FeasibilityRow| {
            let (a, b) = (f(a).value().unwrap_or(f64::NAN), f(b).value().unwrap_or(f64::NAN));
            a.total_cmp(&b)
        }
    };
    let best = feasible().max_by(by(|r| r.rho_y_sd));
    let most_clutter = feasible().min_by(by(|r| r.rho_e_sd));

    let selection = match (best, most_clutter) {
        (Some(best), Some(clutter)) => Selection::Recommended {
            lambda_d: best.lambda_d,
            rho_y_sd: best.rho_y_sd.value().unwrap_or(f64::NAN),
            rho_e_sd: best.rho_e_sd.value().unwrap_or(f64::NAN),
            most_clutter_lambda_d: clutter.lambda_d,
        },
        _ => {
            reasons.push(Infeasibility::NoGridPoint);
            Selection::Infeasible { reasons }
        }
    };

    Ok(DesignReport {
        constraints: *constraints,
        rows,
        selection,
    })
}
