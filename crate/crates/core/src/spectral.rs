//! Fourier-spectral solution of the periodic advection–diffusion–degradation
//! equation.
//!
//! The concentration on a loop of length `L` is expanded as
//! `c(x, t) = Σ_{n=-N}^{N} ĉ_n(t) e^{j k_n x}` with `k_n = 2πn/L`. The
//! coefficients obey `∂_t ĉ = A ĉ` after an impulsive release, where
//!
//! ```text
//! A_{n,n} = -D k_n² - j v k_n - f̂_0
//! A_{n,m} = -f̂_{n-m}          (n ≠ m)
//! ```
//!
//! and `f̂_m` are the Fourier coefficients of the two-level degradation rate.
//! Impulsive sources are folded into the post-release coefficients `ĉ(0⁺)`,
//! which are then propagated with a one-step propagator `E = exp(A·dt)`.
//!
//! All vectors and matrices use the mode order `n = -N..=N`.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::model::{ChannelConfig, DampingProfile, ReceiverSpec, SourceSpec, TimeGrid};
use crate::series::TimeSeries;

const REALNESS_TOLERANCE: f64 = 1e-9;
/// Largest coefficient-vector dimension the open-loop extension will build.
pub const MAX_EXTENDED_MODES: usize = 4001;

/// Wavenumbers `k_n = 2πn/L` for `n = -N..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavenumberGrid {
    pub order: usize,
    pub loop_length: f64,
    pub values: Vec<f64>,
}

impl WavenumberGrid {
    pub fn k(&self, n: i64) -> f64 {
        self.values[mode_index(self.order, n)]
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> {
        let n = self.order as i64;
        -n..=n
    }
}

pub fn wavenumbers(order: usize, loop_length: f64) -> WavenumberGrid {
    let n = order as i64;
    let values = (-n..=n).map(|m| 2.0 * PI * m as f64 / loop_length).collect();
    WavenumberGrid {
        order,
        loop_length,
        values,
    }
}

#[inline]
fn mode_index(order: usize, n: i64) -> usize {
    debug_assert!(n.unsigned_abs() as usize <= order);
    (n + order as i64) as usize
}

/// `e^{j 2π n x / L}` with the phase reduced before the trigonometric call,
/// so that `x = L` reproduces `x = 0` exactly.
#[inline]
fn basis(n: i64, x_over_l: f64) -> C64 {
    let turns = n as f64 * x_over_l;
    let frac = turns - turns.round();
    let phase = 2.0 * PI * frac;
    C64::new(phase.cos(), phase.sin())
}

/// Fourier coefficient `f̂_m` of the two-level damping profile.
pub fn damping_fourier_coeff(profile: &DampingProfile, loop_length: f64, m: i64) -> C64 {
    let width = profile.region_width();
    let excess = profile.alpha - profile.beta;
    if m == 0 {
        return C64::new(profile.beta + excess * width / loop_length, 0.0);
    }
    if excess == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let k = 2.0 * PI * m as f64 / loop_length;
    let center = 0.5 * (profile.x_a + profile.x_b);
    let magnitude = excess / (PI * m as f64) * (0.5 * k * width).sin();
    // e^{-j k (x_a + x_b)/2}, phase reduced modulo one turn
    magnitude * basis(-m, center / loop_length)
}

/// Dense `(2N+1)×(2N+1)` coupling matrix `A`.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    pub order: usize,
    pub loop_length: f64,
    pub entries: Array2<C64>,
}

impl CouplingMatrix {
    pub fn get(&self, n: i64, m: i64) -> C64 {
        self.entries[[mode_index(self.order, n), mode_index(self.order, m)]]
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }
}

pub fn assemble_matrix(config: &ChannelConfig) -> CouplingMatrix {
    let order = config.truncation_order;
    let n = order as i64;
    let dim = 2 * order + 1;
    let ks = wavenumbers(order, config.loop_length);
    // Toeplitz: only differences -2N..=2N are needed
    let fhat: Vec<C64> = (-2 * n..=2 * n)
        .map(|d| damping_fourier_coeff(&config.damping, config.loop_length, d))
        .collect();
    let mut entries = Array2::<C64>::zeros((dim, dim));
    for (i, row) in (-n..=n).enumerate() {
        for (j, col) in (-n..=n).enumerate() {
            let f = fhat[(row - col + 2 * n) as usize];
            entries[[i, j]] = if i == j {
                let k = ks.values[i];
                C64::new(-config.d_eff * k * k - f.re, -config.v_eff * k)
            } else {
                -f
            };
        }
    }
    CouplingMatrix {
        order,
        loop_length: config.loop_length,
        entries,
    }
}

/// Fourier coefficients `ĉ_n` for `n = -N..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub order: usize,
    pub values: Array1<C64>,
}

impl CoefficientVector {
    pub fn get(&self, n: i64) -> C64 {
        self.values[mode_index(self.order, n)]
    }

    pub fn zero_mode(&self) -> C64 {
        self.get(0)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `max_n |ĉ_{-n} - conj(ĉ_n)|`.
    pub fn symmetry_defect(&self) -> f64 {
        symmetry_defect(self.values.view(), self.order)
    }
}

fn symmetry_defect(v: ArrayView1<C64>, order: usize) -> f64 {
    let n = order as i64;
    (0..=n)
        .map(|m| (v[mode_index(order, -m)] - v[mode_index(order, m)].conj()).norm())
        .fold(0.0, f64::max)
}

/// Post-release coefficients for `N_P` molecules released at `x = 0`:
/// every entry equals `N_P / L`.
pub fn point_source_coeffs(config: &ChannelConfig) -> CoefficientVector {
    let value = config.n_molecules as f64 / config.loop_length;
    CoefficientVector {
        order: config.truncation_order,
        values: Array1::from_elem(config.n_modes(), C64::new(value, 0.0)),
    }
}

/// Post-release coefficients for a uniform release over `[0, x_w]`:
/// `(N_P/L)·φ_n` with `φ_0 = 1`, `φ_n = (1 - e^{-j k_n x_w}) / (j k_n x_w)`.
pub fn distributed_source_coeffs(config: &ChannelConfig) -> Result<CoefficientVector> {
    let SourceSpec::Distributed { release_width } = config.source else {
        return Err(Error::invalid("source.kind", "distributed release expected"));
    };
    let scale = config.n_molecules as f64 / config.loop_length;
    let l = config.loop_length;
    let n = config.truncation_order as i64;
    let values = (-n..=n)
        .map(|m| {
            if m == 0 {
                return C64::new(scale, 0.0);
            }
            let k = 2.0 * PI * m as f64 / l;
            let kw = k * release_width;
            let numerator = C64::new(1.0, 0.0) - basis(-m, release_width / l);
            scale * numerator / C64::new(0.0, kw)
        })
        .collect();
    Ok(CoefficientVector {
        order: config.truncation_order,
        values,
    })
}

pub fn initial_coeffs(config: &ChannelConfig) -> CoefficientVector {
    match config.source {
        SourceSpec::Point => point_source_coeffs(config),
        SourceSpec::Distributed { .. } => {
            distributed_source_coeffs(config).expect("source kind checked")
        }
    }
}

/// Coefficient trajectory on a uniform time grid.
#[derive(Debug, Clone)]
pub struct SpectralSolution {
    pub order: usize,
    pub loop_length: f64,
    pub grid: TimeGrid,
    /// One row per grid time, columns in mode order `-N..=N`.
    pub trajectory: Array2<C64>,
}

impl SpectralSolution {
    pub fn coeffs(&self, k: usize) -> ArrayView1<'_, C64> {
        self.trajectory.row(k)
    }

    pub fn coefficient_vector(&self, k: usize) -> CoefficientVector {
        CoefficientVector {
            order: self.order,
            values: self.trajectory.row(k).to_owned(),
        }
    }

    pub fn n_times(&self) -> usize {
        self.trajectory.nrows()
    }

    /// `ĉ_0(t)` (mean concentration over the loop).
    pub fn zero_mode_series(&self) -> TimeSeries {
        let idx = mode_index(self.order, 0);
        TimeSeries::on_grid(&self.grid, self.trajectory.column(idx).iter().map(|z| z.re).collect())
    }

    /// `L·ĉ_0(t)`, the number of molecules in the loop.
    pub fn mass_series(&self) -> TimeSeries {
        self.zero_mode_series().scaled(self.loop_length)
    }

    pub fn max_symmetry_defect(&self) -> f64 {
        (0..self.n_times())
            .map(|k| symmetry_defect(self.coeffs(k), self.order))
            .fold(0.0, f64::max)
    }

    /// `c(x, t_k) = Re Σ_n ĉ_n(t_k) e^{j k_n x}`.
    pub fn reconstruct(&self, x: f64, k: usize) -> Result<f64> {
        let weights = self.point_weights(x);
        weighted_real(self.coeffs(k), &weights)
    }

    /// Field at many positions for one time index.
    pub fn field(&self, xs: &[f64], k: usize) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.reconstruct(x, k)).collect()
    }

    fn point_weights(&self, x: f64) -> Vec<C64> {
        let u = x / self.loop_length;
        let n = self.order as i64;
        (-n..=n).map(|m| basis(m, u)).collect()
    }

    fn interval_weights(&self, a: f64, b: f64) -> Vec<C64> {
        let l = self.loop_length;
        let n = self.order as i64;
        (-n..=n)
            .map(|m| {
                if m == 0 {
                    C64::new(b - a, 0.0)
                } else {
                    let k = 2.0 * PI * m as f64 / l;
                    (basis(m, b / l) - basis(m, a / l)) / C64::new(0.0, k)
                }
            })
            .collect()
    }
}

fn weighted_real(coeffs: ArrayView1<C64>, weights: &[C64]) -> Result<f64> {
    let mut acc = C64::new(0.0, 0.0);
    let mut norm_sq = 0.0;
    for (c, w) in coeffs.iter().zip(weights) {
        let term = c * w;
        acc += term;
        norm_sq += term.norm_sqr();
    }
    let tolerance = REALNESS_TOLERANCE * norm_sq.sqrt();
    if acc.im.abs() > tolerance {
        return Err(Error::RealnessViolation {
            residue: acc.im.abs(),
            tolerance,
        });
    }
    Ok(acc.re)
}

/// One-step propagator `exp(A·dt)`.
pub fn propagator(matrix: &CouplingMatrix, dt: f64) -> Result<Array2<C64>> {
    linalg::expm(&matrix.entries.mapv(|z| z * dt))
}

/// `ĉ(t_k) = exp(A t_k) ĉ(0⁺)` on every grid time, by repeated application
/// of the one-step propagator.
pub fn evolve(
    initial: &CoefficientVector,
    matrix: &CouplingMatrix,
    grid: &TimeGrid,
) -> Result<SpectralSolution> {
    grid.validate()?;
    if grid.t_start < 0.0 {
        return Err(Error::invalid("grid.t_start", "t_start ≥ 0 violated"));
    }
    let dim = matrix.dim();
    if initial.values.len() != dim {
        return Err(Error::Dimension(format!(
            "coefficient vector has {} entries, matrix is {dim}x{dim}",
            initial.values.len()
        )));
    }
    let step = propagator(matrix, grid.dt)?;
    let first = if grid.t_start > 0.0 {
        let start = linalg::expm(&matrix.entries.mapv(|z| z * grid.t_start))?;
        linalg::matvec(start.view(), initial.values.view())
    } else {
        initial.values.clone()
    };

    let mut trajectory = Array2::<C64>::zeros((grid.n_samples, dim));
    trajectory.row_mut(0).assign(&first);
    for k in 1..grid.n_samples {
        let (prev, mut next) = trajectory.multi_slice_mut((ndarray::s![k - 1, ..], ndarray::s![k, ..]));
        linalg::matvec_into(step.view(), prev.view(), next.as_slice_mut().expect("row-major"));
    }
    if trajectory.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::PropagatorFailure("trajectory diverged".into()));
    }
    Ok(SpectralSolution {
        order: initial.order,
        loop_length: matrix.loop_length,
        grid: *grid,
        trajectory,
    })
}

/// Assemble, initialize and evolve in one go.
pub fn solve(config: &ChannelConfig, grid: &TimeGrid) -> Result<SpectralSolution> {
    config.validate()?;
    let matrix = assemble_matrix(config);
    let initial = initial_coeffs(config);
    evolve(&initial, &matrix, grid)
}

/// Received signal: point sample of the field, or its integral over the
/// receiver interval (computed from the analytic integrals of the basis).
pub fn rx_signal(solution: &SpectralSolution, rx: &ReceiverSpec) -> Result<TimeSeries> {
    rx.validate(solution.loop_length)?;
    let weights = match *rx {
        ReceiverSpec::PointSample { x_rx } => solution.point_weights(x_rx),
        ReceiverSpec::Interval { x_rx_a, x_rx_b } => solution.interval_weights(x_rx_a, x_rx_b),
    };
    let values = (0..solution.n_times())
        .map(|k| weighted_real(solution.coeffs(k), &weights))
        .collect::<Result<Vec<_>>>()?;
    Ok(TimeSeries::on_grid(&solution.grid, values))
}

/// Receiver series and zero mode of the open-loop (non-recirculating) system.
#[derive(Debug, Clone)]
pub struct OpenLoopResponse {
    pub rx: TimeSeries,
    /// Surviving open-loop molecule count divided by the original loop length.
    pub zero_mode: TimeSeries,
    pub extension_factor: usize,
    /// Time after which the response was continued analytically, if any.
    pub cutoff: Option<f64>,
}

fn front_reach(config: &ChannelConfig, t: f64) -> f64 {
    config.v_eff * t + 6.0 * (2.0 * config.d_eff * t.max(0.0)).sqrt()
}

/// Smallest `M = ceil(reach/L) + 1` for which no molecule wraps around the
/// extended loop before `t_end`.
pub fn default_extension_factor(config: &ChannelConfig, t_end: f64) -> usize {
    let reach = front_reach(config, t_end);
    let mut m = (reach / config.loop_length).ceil() as usize + 1;
    while reach >= (m as f64 - 1.0) * config.loop_length {
        m += 1;
    }
    m.max(2)
}

fn extended_config(config: &ChannelConfig, factor: usize) -> ChannelConfig {
    ChannelConfig {
        loop_length: config.loop_length * factor as f64,
        truncation_order: config.truncation_order * factor,
        ..config.clone()
    }
}

/// Open-loop reference obtained by solving on a loop `M` times longer with
/// `M·N` modes. Damping region and receiver keep their absolute coordinates.
pub fn open_loop_response(
    config: &ChannelConfig,
    rx: &ReceiverSpec,
    grid: &TimeGrid,
    extension_factor: usize,
) -> Result<OpenLoopResponse> {
    config.validate()?;
    rx.validate(config.loop_length)?;
    if extension_factor < 2 {
        return Err(Error::invalid("extension_factor", "M ≥ 2 violated"));
    }
    let reach = front_reach(config, grid.t_end());
    let limit = (extension_factor as f64 - 1.0) * config.loop_length;
    if !(reach < limit) {
        return Err(Error::HorizonTooLong {
            factor: extension_factor,
            reach,
            limit,
        });
    }
    let ext = extended_config(config, extension_factor);
    if ext.n_modes() > MAX_EXTENDED_MODES {
        return Err(Error::invalid(
            "extension_factor",
            format!("extended problem needs {} modes (limit {MAX_EXTENDED_MODES})", ext.n_modes()),
        ));
    }
    let solution = solve(&ext, grid)?;
    let rx_series = rx_signal(&solution, rx)?;
    let zero_mode = solution.zero_mode_series().scaled(extension_factor as f64);
    Ok(OpenLoopResponse {
        rx: rx_series,
        zero_mode,
        extension_factor,
        cutoff: None,
    })
}

/// Time after which the whole released pulse (down to an 8σ tail) has moved
/// past both the receiver and the damping region, or `None` without flow.
pub fn open_loop_cutoff(config: &ChannelConfig, rx: &ReceiverSpec) -> Option<f64> {
    let v = config.v_eff;
    if v <= 0.0 {
        return None;
    }
    let mut x_max = rx.upper();
    if !config.damping.is_uniform() {
        x_max = x_max.max(config.damping.x_b);
    }
    // v t - 8 sqrt(2 D t) = x_max, solved for sqrt(t)
    let a = 8.0 * (2.0 * config.d_eff).sqrt();
    let s = (a + (a * a + 4.0 * v * x_max).sqrt()) / (2.0 * v);
    Some(s * s)
}

/// Open-loop reference over an arbitrarily long horizon.
///
/// Once the pulse has cleared the receiver and the damping region, the
/// receiver sees nothing further and the remaining molecules only decay at the
/// baseline rate; the extended-loop solve is therefore stopped at
/// [`open_loop_cutoff`] and continued in closed form.
pub fn open_loop_reference(
    config: &ChannelConfig,
    rx: &ReceiverSpec,
    grid: &TimeGrid,
) -> Result<OpenLoopResponse> {
    grid.validate()?;
    let cutoff = open_loop_cutoff(config, rx).filter(|&t| t < grid.t_end() && t >= grid.t_start);
    let Some(t_cut) = cutoff else {
        let m = default_extension_factor(config, grid.t_end());
        return open_loop_response(config, rx, grid, m);
    };
    let prefix_len = (((t_cut - grid.t_start) / grid.dt).ceil() as usize + 1).clamp(2, grid.n_samples);
    let prefix = TimeGrid::new(grid.t_start, grid.dt, prefix_len);
    let m = default_extension_factor(config, prefix.t_end());
    let head = open_loop_response(config, rx, &prefix, m)?;

    let mut rx_values = head.rx.values;
    rx_values.resize(grid.n_samples, 0.0);
    let mut zero = head.zero_mode.values;
    let last = *zero.last().expect("non-empty prefix");
    let t_last = prefix.t_end();
    let beta = config.damping.beta;
    for k in prefix_len..grid.n_samples {
        zero.push(last * (-beta * (grid.time(k) - t_last)).exp());
    }
    Ok(OpenLoopResponse {
        rx: TimeSeries::on_grid(grid, rx_values),
        zero_mode: TimeSeries::on_grid(grid, zero),
        extension_factor: m,
        cutoff: Some(t_last),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DampingProfile;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn base(order: usize) -> ChannelConfig {
        ChannelConfig {
            truncation_order: order,
            ..ChannelConfig::standard()
        }
    }

    #[test]
    fn wavenumber_values() {
        let k = wavenumbers(1, 6.0);
        assert_eq!(k.values.len(), 3);
        assert!((k.values[0] + PI / 3.0).abs() < 1e-15);
        assert_eq!(k.values[1], 0.0);
        assert!((k.values[2] - PI / 3.0).abs() < 1e-15);
        let k3 = wavenumbers(3, 6.0);
        assert!((k3.k(3) - PI).abs() < 1e-15);
        for n in k3.modes() {
            assert_eq!(k3.k(-n), -k3.k(n));
        }
    }

    #[test]
    fn damping_coefficients_closed_form() {
        let g = DampingProfile::global(0.01, 6.0);
        assert!((damping_fourier_coeff(&g, 6.0, 0) - c(0.01, 0.0)).norm() < 1e-17);
        for m in 1..5 {
            assert_eq!(damping_fourier_coeff(&g, 6.0, m), c(0.0, 0.0));
        }
        let p = DampingProfile::two_level(0.05, 0.01, 3.0, 4.0);
        let f0 = damping_fourier_coeff(&p, 6.0, 0);
        assert!((f0.re - (0.01 + 0.04 / 6.0)).abs() < 1e-16 && f0.im == 0.0);
        let f1 = damping_fourier_coeff(&p, 6.0, 1);
        assert!((f1.norm() - 0.04 / PI * (PI / 6.0).sin()).abs() < 1e-16);
        let want_phase = (-(PI / 3.0) * 3.5).rem_euclid(2.0 * PI);
        assert!((f1.arg().rem_euclid(2.0 * PI) - want_phase).abs() < 1e-12);
        for m in 1..20 {
            let plus = damping_fourier_coeff(&p, 6.0, m);
            let minus = damping_fourier_coeff(&p, 6.0, -m);
            assert_eq!(minus, plus.conj());
        }
    }

    #[test]
    fn matrix_special_cases() {
        let mut cfg = base(4);
        cfg.damping = DampingProfile::none(cfg.loop_length);
        let a = assemble_matrix(&cfg);
        let k = wavenumbers(4, cfg.loop_length);
        for n in -4i64..=4 {
            for m in -4i64..=4 {
                if n == m {
                    let kn = k.k(n);
                    let want = c(-cfg.d_eff * kn * kn, -cfg.v_eff * kn);
                    assert!((a.get(n, n) - want).norm() < 1e-16);
                } else {
                    assert_eq!(a.get(n, m), c(0.0, 0.0));
                }
            }
        }
        assert_eq!(a.get(0, 0), c(0.0, 0.0));

        cfg.damping = DampingProfile::global(0.02, cfg.loop_length);
        let b = assemble_matrix(&cfg);
        for n in -4i64..=4 {
            assert!((b.get(n, n) - a.get(n, n) - c(-0.02, 0.0)).norm() < 1e-16);
        }
    }

    #[test]
    fn matrix_structure() {
        let cfg = base(6);
        let a = assemble_matrix(&cfg);
        for n in -6i64..=6 {
            for m in -6i64..=6 {
                assert_eq!(a.get(-n, -m), a.get(n, m).conj());
                if n != m && (n + 1).abs() <= 6 && (m + 1).abs() <= 6 {
                    assert_eq!(a.get(n, m), a.get(n + 1, m + 1));
                }
            }
        }
    }

    #[test]
    fn point_source_values() {
        let cfg = base(5);
        let s = point_source_coeffs(&cfg);
        assert!(s.values.iter().all(|z| (z.re - 10_000.0 / 6.0).abs() < 1e-12 && z.im == 0.0));
        let mut unit = cfg.clone();
        unit.n_molecules = 1;
        let s = point_source_coeffs(&unit);
        assert!(s.values.iter().all(|z| (z.re - 1.0 / 6.0).abs() < 1e-16));
    }

    #[test]
    fn distributed_source_limits() {
        let mut cfg = base(8);
        cfg.n_molecules = 1;
        cfg.source = SourceSpec::Distributed { release_width: 1e-7 };
        let s = distributed_source_coeffs(&cfg).unwrap();
        assert_eq!(s.zero_mode(), c(1.0 / 6.0, 0.0));
        for z in s.values.iter() {
            assert!((z * 6.0 - c(1.0, 0.0)).norm() < 1e-5);
        }
        assert!(s.symmetry_defect() < 1e-15);
        cfg.source = SourceSpec::Point;
        assert!(distributed_source_coeffs(&cfg).is_err());
    }

    #[test]
    fn zero_matrix_keeps_initial() {
        let matrix = CouplingMatrix {
            order: 2,
            loop_length: 6.0,
            entries: Array2::zeros((5, 5)),
        };
        let init = CoefficientVector {
            order: 2,
            values: Array1::from_iter((0..5).map(|i| c(i as f64, 1.0 - i as f64))),
        };
        let sol = evolve(&init, &matrix, &TimeGrid::new(0.0, 0.5, 6)).unwrap();
        for k in 0..6 {
            assert_eq!(sol.coeffs(k), init.values.view());
        }
    }

    #[test]
    fn diagonal_evolution_is_entrywise() {
        let mut cfg = base(10);
        cfg.damping = DampingProfile::none(cfg.loop_length);
        let grid = TimeGrid::new(0.0, 0.25, 41);
        let sol = solve(&cfg, &grid).unwrap();
        let k = wavenumbers(10, cfg.loop_length);
        let c0 = cfg.n_molecules as f64 / cfg.loop_length;
        for step in [0usize, 7, 40] {
            let t = grid.time(step);
            for n in -10i64..=10 {
                let kn = k.k(n);
                let want = c0 * (c(-cfg.d_eff * kn * kn, -cfg.v_eff * kn) * t).exp();
                let got = sol.coeffs(step)[mode_index(10, n)];
                assert!((got - want).norm() < 1e-12 * c0, "t={t} n={n}");
            }
        }
    }

    #[test]
    fn start_offset_matches_continuation() {
        let cfg = base(8);
        let full = solve(&cfg, &TimeGrid::new(0.0, 0.5, 21)).unwrap();
        let late = solve(&cfg, &TimeGrid::new(5.0, 0.5, 11)).unwrap();
        for k in 0..11 {
            let a = full.coeffs(k + 10);
            let b = late.coeffs(k);
            let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(diff < 1e-10 * a.iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
    }

    #[test]
    fn constant_mode_reconstructs_constant() {
        let sol = SpectralSolution {
            order: 3,
            loop_length: 6.0,
            grid: TimeGrid::new(0.0, 1.0, 2),
            trajectory: {
                let mut t = Array2::zeros((2, 7));
                t[[0, 3]] = c(2.5, 0.0);
                t
            },
        };
        for x in [0.0, 0.7, 3.3, 6.0] {
            assert!((sol.reconstruct(x, 0).unwrap() - 2.5).abs() < 1e-15);
        }
    }

    #[test]
    fn asymmetric_coefficients_flagged() {
        let mut t = Array2::zeros((2, 3));
        t[[0, 2]] = c(0.0, 1.0);
        let sol = SpectralSolution {
            order: 1,
            loop_length: 6.0,
            grid: TimeGrid::new(0.0, 1.0, 2),
            trajectory: t,
        };
        assert!(matches!(sol.reconstruct(0.0, 0), Err(Error::RealnessViolation { .. })));
    }

    #[test]
    fn full_loop_interval_is_total_mass() {
        let cfg = base(12);
        let sol = solve(&cfg, &TimeGrid::new(0.0, 1.0, 11)).unwrap();
        let full = rx_signal(&sol, &ReceiverSpec::Interval { x_rx_a: 0.0, x_rx_b: 6.0 }).unwrap();
        let mass = sol.mass_series();
        for (a, b) in full.values.iter().zip(&mass.values) {
            assert!((a - b).abs() < 1e-9 * b.abs());
        }
    }

    #[test]
    fn narrow_interval_approaches_point_sample() {
        let cfg = base(30);
        let sol = solve(&cfg, &TimeGrid::new(0.0, 1.0, 21)).unwrap();
        let x = 1.8;
        let point = rx_signal(&sol, &ReceiverSpec::PointSample { x_rx: x }).unwrap();
        let w = 1e-5;
        let interval = rx_signal(&sol, &ReceiverSpec::Interval { x_rx_a: x - w / 2.0, x_rx_b: x + w / 2.0 }).unwrap();
        let scale = point.max_abs();
        for (p, i) in point.values.iter().zip(&interval.values) {
            assert!((p * w - i).abs() < 1e-6 * scale * w);
        }
    }

    #[test]
    fn horizon_check_rejects_short_extension() {
        let cfg = base(4);
        let rx = ReceiverSpec::PointSample { x_rx: 1.8 };
        let grid = TimeGrid::new(0.0, 1.0, 101);
        assert!(matches!(
            open_loop_response(&cfg, &rx, &grid, 2),
            Err(Error::HorizonTooLong { .. })
        ));
        assert!(open_loop_response(&cfg, &rx, &grid, 1).is_err());
        let m = default_extension_factor(&cfg, grid.t_end());
        assert!(front_reach(&cfg, 100.0) < (m as f64 - 1.0) * cfg.loop_length);
    }
}
