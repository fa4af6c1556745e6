//! Independent reference computations shared by the integration tests.
//! Nothing here calls the closed forms it is used to check.

#![allow(dead_code)]

use std::f64::consts::PI;

use closedloop::{ChannelConfig, DampingProfile, ReceiverSpec, SourceSpec};
use num_complex::Complex64 as C64;

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn kronrod15(f: &dyn Fn(f64) -> C64, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kron += pair * WGK[j];
        if j % 2 == 1 {
            gauss += pair * WG[j / 2];
        }
    }
    (kron * h, ((kron - gauss) * h).norm())
}

fn adapt(f: &dyn Fn(f64) -> C64, a: f64, b: f64, tol: f64, depth: usize) -> C64 {
    let (value, err) = kronrod15(f, a, b);
    // Below a few ulps of the panel value the estimate is rounding noise.
    let floor = 50.0 * f64::EPSILON * value.norm();
    if err <= tol.max(floor) || depth == 0 || (b - a).abs() < 1e-15 {
        return value;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss–Kronrod integral of `f` over `[a, b]`, split at `breaks`.
pub fn integrate(f: impl Fn(f64) -> C64, a: f64, b: f64, breaks: &[f64], tol: f64) -> C64 {
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.windows(2)
        .map(|w| adapt(&f, w[0], w[1], tol / (pts.len() as f64), 40))
        .sum()
}

pub fn k(m: i64, l: f64) -> f64 {
    2.0 * PI * m as f64 / l
}

/// `(1/L) ∫_0^L f(x) e^{-j k_m x} dx` by quadrature.
pub fn damping_coeff_quad(d: &DampingProfile, l: f64, m: i64) -> C64 {
    let km = k(m, l);
    integrate(
        |x| C64::from_polar(d.rate_at(x), -km * x),
        0.0,
        l,
        &[d.x_a, d.x_b],
        1e-15,
    ) / l
}

/// `(1/L) ∫ c(x, 0^+) e^{-j k_m x} dx` for a uniform release over `[0, x_w]`.
pub fn distributed_coeff_quad(n_p: f64, x_w: f64, l: f64, m: i64) -> C64 {
    let km = k(m, l);
    integrate(|x| C64::from_polar(n_p / x_w, -km * x), 0.0, x_w, &[], 1e-15) / l
}

/// Coupling matrix rebuilt from quadrature coefficients, indexed `[n + N][m + N]`.
pub fn oracle_matrix(c: &ChannelConfig) -> Vec<Vec<C64>> {
    let n = c.truncation_order as i64;
    let l = c.loop_length;
    let fhat: Vec<C64> = (-2 * n..=2 * n).map(|m| damping_coeff_quad(&c.damping, l, m)).collect();
    let f = |m: i64| fhat[(m + 2 * n) as usize];
    (-n..=n)
        .map(|row| {
            (-n..=n)
                .map(|col| {
                    let mut a = -f(row - col);
                    if row == col {
                        let kn = k(row, l);
                        a += C64::new(-c.d_eff * kn * kn, -c.v_eff * kn);
                    }
                    a
                })
                .collect()
        })
        .collect()
}

fn apply(a: &[Vec<C64>], x: &[C64]) -> Vec<C64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// Classical RK4 for `dc/dt = A c`, returning the state at each of `times`.
pub fn rk4(a: &[Vec<C64>], c0: &[C64], h: f64, times: &[f64]) -> Vec<Vec<C64>> {
    let mut c = c0.to_vec();
    let mut t = 0.0;
    let mut out = Vec::new();
    for &target in times {
        let steps = ((target - t) / h).round() as usize;
        for _ in 0..steps {
            let k1 = apply(a, &c);
            let y: Vec<C64> = c.iter().zip(&k1).map(|(c, k)| c + k * (0.5 * h)).collect();
            let k2 = apply(a, &y);
            let y: Vec<C64> = c.iter().zip(&k2).map(|(c, k)| c + k * (0.5 * h)).collect();
            let k3 = apply(a, &y);
            let y: Vec<C64> = c.iter().zip(&k3).map(|(c, k)| c + k * h).collect();
            let k4 = apply(a, &y);
            for i in 0..c.len() {
                c[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
            }
        }
        t = target;
        out.push(c.clone());
    }
    out
}

/// Undamped point release on the loop: sum of periodic images of the free
/// Gaussian, `N_P Σ_j G(x - v t + j L; 2 D t)`.
pub fn wrapped_gaussian(c: &ChannelConfig, x: f64, t: f64) -> f64 {
    let var = 2.0 * c.d_eff * t;
    let l = c.loop_length;
    let center = c.v_eff * t;
    let reach = (10.0 * var.sqrt() / l).ceil() as i64 + 2;
    let base = ((x - center) / l).round() as i64;
    (base - reach..=base + reach)
        .map(|j| {
            let d = x - center - j as f64 * l;
            (-d * d / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
        })
        .sum::<f64>()
        * c.n_molecules as f64
}

pub fn standard_config(order: usize) -> ChannelConfig {
    ChannelConfig {
        truncation_order: order,
        ..ChannelConfig::standard()
    }
}

pub fn undamped(order: usize) -> ChannelConfig {
    let c = standard_config(order);
    c.with_damping(DampingProfile::none(c.loop_length))
}

pub fn distributed_config() -> ChannelConfig {
    ChannelConfig {
        damping: DampingProfile::two_level(0.01, 0.001, 3.0, 3.6),
        source: SourceSpec::Distributed { release_width: 0.3 },
        ..ChannelConfig::standard()
    }
}

pub fn scenario1_rx() -> ReceiverSpec {
    ReceiverSpec::Interval { x_rx_a: 1.5, x_rx_b: 2.1 }
}

/// Relative L2 distance `‖a - b‖ / ‖b‖`.
pub fn rel_l2(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}
