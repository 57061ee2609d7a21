use serde::{Deserialize, Serialize};

use super::SpectraError;

/// Evenly spaced, descending wavenumber grid in cm⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavenumberAxis {
    start: f64,
    end: f64,
    n_points: usize,
}

impl WavenumberAxis {
    pub fn new(start: f64, end: f64, n_points: usize) -> Result<Self, SpectraError> {
        if !start.is_finite() || !end.is_finite() {
            return Err(SpectraError::Validation(
                "axis bounds must be finite".into(),
            ));
        }
        if n_points < 2 {
            return Err(SpectraError::Validation(format!(
                "axis needs at least 2 points, got {n_points}"
            )));
        }
        if start <= end {
            return Err(SpectraError::Validation(format!(
                "axis must be descending (start {start} <= end {end})"
            )));
        }
        Ok(Self {
            start,
            end,
            n_points,
        })
    }

    /// Grid that places `hi` and `lo` exactly on points with `inner_points`
    /// samples between them (inclusive), extended by whole steps out to
    /// `outer_hi`/`outer_lo`.
    pub fn aligned(
        hi: f64,
        lo: f64,
        inner_points: usize,
        outer_hi: f64,
        outer_lo: f64,
    ) -> Result<Self, SpectraError> {
        if inner_points < 2 || hi <= lo {
            return Err(SpectraError::Validation(
                "aligned axis needs hi > lo and at least 2 inner points".into(),
            ));
        }
        let step = (hi - lo) / (inner_points - 1) as f64;
        let above = ((outer_hi - hi).max(0.0) / step + 1e-9).floor() as usize;
        let below = ((lo - outer_lo).max(0.0) / step + 1e-9).floor() as usize;
        let start = hi + above as f64 * step;
        let end = lo - below as f64 * step;
        Self::new(start, end, above + below + inner_points)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.start - self.end) / (self.n_points - 1) as f64
    }

    pub fn point(&self, index: usize) -> f64 {
        if index + 1 == self.n_points {
            self.end
        } else {
            self.start - index as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// Index range of points with `lo <= p <= hi`. Points within a
    /// millionth of a step of a bound count as inside.
    pub fn index_range(&self, hi: f64, lo: f64) -> Option<std::ops::Range<usize>> {
        let tol = 1e-6 * self.spacing();
        let first = (0..self.n_points).find(|&i| self.point(i) <= hi + tol)?;
        let last = (first..self.n_points)
            .take_while(|&i| self.point(i) >= lo - tol)
            .last()?;
        Some(first..last + 1)
    }

    /// Sub-axis covering `range` (indices into this axis).
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self, SpectraError> {
        if range.end > self.n_points || range.len() < 2 {
            return Err(SpectraError::Range(format!(
                "slice {range:?} invalid for axis of {} points",
                self.n_points
            )));
        }
        Self::new(
            self.point(range.start),
            self.point(range.end - 1),
            range.len(),
        )
    }

    /// Nearest grid index to a wavenumber.
    pub fn nearest_index(&self, wavenumber: f64) -> usize {
        let raw = (self.start - wavenumber) / self.spacing();
        raw.round().clamp(0.0, (self.n_points - 1) as f64) as usize
    }

    /// Same grid within a relative tolerance of one step.
    pub fn matches(&self, other: &Self) -> bool {
        let tol = 1e-6 * self.spacing();
        self.n_points == other.n_points
            && (self.start - other.start).abs() <= tol
            && (self.end - other.end).abs() <= tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ascending_and_short_axes() {
        assert!(WavenumberAxis::new(900.0, 1800.0, 10).is_err());
        assert!(WavenumberAxis::new(1800.0, 900.0, 1).is_err());
    }

    #[test]
    fn full_range_axis_has_expected_spacing() {
        let axis = WavenumberAxis::aligned(1800.0, 900.0, 467, 3950.0, 900.0).unwrap();
        assert!((axis.spacing() - 900.0 / 466.0).abs() < 1e-12);
        assert!(axis.start() <= 3950.0);
        assert!(axis.start() > 3950.0 - axis.spacing());
        assert_eq!(axis.end(), 900.0);
    }

    #[test]
    fn index_range_is_inclusive() {
        let axis = WavenumberAxis::new(1700.0, 1500.0, 3).unwrap();
        assert_eq!(axis.index_range(1650.0, 1450.0), Some(1..3));
        assert_eq!(axis.index_range(1700.0, 1500.0), Some(0..3));
        assert_eq!(axis.index_range(1450.0, 1400.0), None);
    }
}
