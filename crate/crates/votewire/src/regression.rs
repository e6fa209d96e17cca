//! Ordinary least squares with classical standard errors for the
//! bytes-versus-votes analyses.
//!
//! The fit uses a centered formulation (means subtracted before any
//! products) so that byte magnitudes around 1e4..1e5 do not lose precision
//! to cancellation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{MachineClassification, Subgroup};
use crate::model::{ElectionId, TallySheet, TrafficClass};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressionError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("all x values identical; slope undefined")]
    DegenerateX,
    #[error("selector matched {0} machines; need at least 3")]
    EmptySelection(usize),
}

/// OLS slope/intercept with standard errors and residual statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    /// Bytes per vote.
    pub slope: f64,
    /// Bytes.
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub r_squared: f64,
    pub n: usize,
    pub residual_std: f64,
}

impl RegressionFit {
    /// Relative slope error in percent, the presentation used in figure
    /// captions (e.g. "0.2% error").
    pub fn slope_error_percent(&self) -> f64 {
        if self.slope == 0.0 {
            f64::INFINITY
        } else {
            100.0 * self.slope_se / self.slope.abs()
        }
    }
}

/// Least-squares line through `points` with n-2 residual variance.
pub fn ols_fit(points: &[(f64, f64)]) -> Result<RegressionFit, RegressionError> {
    let n = points.len();
    if n < 3 {
        return Err(RegressionError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in points {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(RegressionError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|&(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let sigma2 = ss_res / (nf - 2.0);
    let residual_std = sigma2.sqrt();
    let slope_se = (sigma2 / sxx).sqrt();
    let intercept_se = (sigma2 * (1.0 / nf + mean_x * mean_x / sxx)).sqrt();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RegressionFit {
        slope,
        intercept,
        slope_se,
        intercept_se,
        r_squared,
        n,
        residual_std,
    })
}

/// Octet direction of a fit, seen from the voting machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Bytes the machine received (server to machine).
    Incoming,
    /// Bytes the machine sent (machine to server).
    Outgoing,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Incoming => "incoming",
            Direction::Outgoing => "outgoing",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "incoming" | "in" => Some(Direction::Incoming),
            "outgoing" | "out" => Some(Direction::Outgoing),
            _ => None,
        }
    }
}

/// Which machines participate in a group fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupSelector {
    Class(TrafficClass),
    Subgroup(Subgroup),
}

impl GroupSelector {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "G1" | "g1" => Some(GroupSelector::Subgroup(Subgroup::G1)),
            "G2" | "g2" => Some(GroupSelector::Subgroup(Subgroup::G2)),
            other => TrafficClass::parse(other).map(GroupSelector::Class),
        }
    }

    pub fn label(&self) -> String {
        match self {
            GroupSelector::Class(c) => c.letter().to_string(),
            GroupSelector::Subgroup(Subgroup::G1) => "G1".into(),
            GroupSelector::Subgroup(Subgroup::G2) => "G2".into(),
        }
    }

    fn matches(&self, m: &MachineClassification) -> bool {
        match self {
            GroupSelector::Class(c) => m.traffic_class == *c,
            GroupSelector::Subgroup(g) => m.subgroup == Some(*g),
        }
    }
}

/// One exported scatter point of a group fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub votes: f64,
    pub bytes: f64,
    pub machine_id: String,
}

/// Joins classifications with referendum tallies and fits votes against the
/// chosen octet direction for the selected group. Returns the fit plus the
/// scatter points it was computed from, ready for plotting.
pub fn group_regression(
    machines: &[MachineClassification],
    tallies: &[TallySheet],
    selector: GroupSelector,
    direction: Direction,
) -> Result<(RegressionFit, Vec<ScatterPoint>), RegressionError> {
    let votes_by_machine: std::collections::BTreeMap<&str, u64> = tallies
        .iter()
        .filter(|t| t.election_id == ElectionId::Prr2004)
        .map(|t| (t.machine_id.as_str(), t.total_votes))
        .collect();
    let mut scatter = Vec::new();
    for m in machines {
        if !selector.matches(m) {
            continue;
        }
        let Some(&votes) = votes_by_machine.get(m.machine_id.as_str()) else {
            continue;
        };
        let bytes = match direction {
            Direction::Incoming => m.final_session.output_octets,
            Direction::Outgoing => m.final_session.input_octets,
        };
        scatter.push(ScatterPoint {
            votes: votes as f64,
            bytes: bytes as f64,
            machine_id: m.machine_id.clone(),
        });
    }
    if scatter.len() < 3 {
        return Err(RegressionError::EmptySelection(scatter.len()));
    }
    let points: Vec<(f64, f64)> = scatter.iter().map(|p| (p.votes, p.bytes)).collect();
    let fit = ols_fit(&points)?;
    Ok((fit, scatter))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let fit = ols_fit(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]).unwrap();
        assert_eq!(fit.slope, 1.0);
        assert_eq!(fit.intercept, 0.0);
        assert_eq!(fit.residual_std, 0.0);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn hand_computed_normal_equations() {
        // (0,0),(1,2),(2,2): slope 1, intercept 1/3 by the normal equations.
        let fit = ols_fit(&[(0.0, 0.0), (1.0, 2.0), (2.0, 2.0)]).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn line_passes_through_mean_point() {
        let pts = [(1.0, 3.2), (2.0, 4.9), (4.0, 9.1), (5.5, 11.0), (9.0, 20.2)];
        let fit = ols_fit(&pts).unwrap();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let predicted = fit.intercept + fit.slope * mx;
        assert!((predicted - my).abs() <= 1e-9 * my.abs());
    }

    #[test]
    fn errors() {
        assert!(matches!(
            ols_fit(&[(0.0, 1.0), (1.0, 2.0)]),
            Err(RegressionError::TooFewPoints(2))
        ));
        assert!(matches!(
            ols_fit(&[(3.0, 1.0), (3.0, 2.0), (3.0, 5.0)]),
            Err(RegressionError::DegenerateX)
        ));
    }

    #[test]
    fn slope_error_percent() {
        let fit = RegressionFit {
            slope: 47.11,
            intercept: 5606.0,
            slope_se: 0.14,
            intercept_se: 52.0,
            r_squared: 0.99,
            n: 100,
            residual_std: 300.0,
        };
        assert!((fit.slope_error_percent() - 100.0 * 0.14 / 47.11).abs() < 1e-12);
    }
}
