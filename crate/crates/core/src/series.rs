use serde::{Deserialize, Serialize};

use crate::model::TimeGrid;

/// Uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t_start: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t_start: f64, dt: f64, values: Vec<f64>) -> Self {
        Self { t_start, dt, values }
    }

    pub fn zeros(grid: &TimeGrid) -> Self {
        Self::new(grid.t_start, grid.dt, vec![0.0; grid.n_samples])
    }

    pub fn on_grid(grid: &TimeGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_samples);
        Self::new(grid.t_start, grid.dt, values)
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.t_start, self.dt, self.values.len())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|k| self.time(k))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.t_start, self.dt, self.values.iter().map(|v| v * factor).collect())
    }

    /// Index and value of the largest sample (first one on ties).
    pub fn argmax(&self) -> Option<(usize, f64)> {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold(None, |best, (k, v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((k, v)),
            })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |self - other|` over the shared samples.
    pub fn max_abs_diff(&self, other: &TimeSeries) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn same_grid(&self, other: &TimeSeries) -> bool {
        self.values.len() == other.values.len()
            && (self.t_start - other.t_start).abs() <= 1e-9 * self.dt
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }

    pub fn sub(&self, other: &TimeSeries) -> TimeSeries {
        TimeSeries::new(
            self.t_start,
            self.dt,
            self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        )
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}
