//! Dense complex helpers: matrix exponential, LU solves, matrix-vector products.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

// Backward-error bounds for the [m/m] Padé approximants (Higham 2005).
const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Induced 1-norm (maximum absolute column sum).
pub fn norm1(a: ArrayView2<C64>) -> f64 {
    a.axis_iter(Axis(1))
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn identity(n: usize) -> Array2<C64> {
    Array2::from_diag_elem(n, C64::new(1.0, 0.0))
}

fn scaled_add(acc: &mut Array2<C64>, coef: f64, m: &Array2<C64>) {
    acc.zip_mut_with(m, |a, b| *a += b * coef);
}

fn add_identity(acc: &mut Array2<C64>, coef: f64) {
    for i in 0..acc.nrows() {
        acc[[i, i]] += coef;
    }
}

/// Matrix exponential by scaling and squaring with a Padé approximant of
/// order 3, 5, 7, 9 or 13, chosen from the 1-norm.
pub fn expm(a: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("expm of non-square {}x{}", n, a.ncols())));
    }
    if n == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    let norm = norm1(a.view());
    if !norm.is_finite() {
        return Err(Error::PropagatorFailure("non-finite matrix entries".into()));
    }

    let low: [(f64, &[f64]); 4] = [
        (THETA_3, &PADE_3),
        (THETA_5, &PADE_5),
        (THETA_7, &PADE_7),
        (THETA_9, &PADE_9),
    ];
    for (theta, coeffs) in low {
        if norm <= theta {
            let (u, v) = pade_low(a, coeffs);
            return pade_quotient(u, v);
        }
    }

    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    if squarings > 1000 {
        return Err(Error::PropagatorFailure(format!("norm {norm:e} needs {squarings} squarings")));
    }
    let scale = 0.5f64.powi(squarings);
    let a_s = a.mapv(|z| z * scale);
    let (u, v) = pade_13(&a_s);
    let mut x = pade_quotient(u, v)?;
    for _ in 0..squarings {
        x = x.dot(&x);
    }
    check_finite(&x)?;
    Ok(x)
}

fn pade_low(a: &Array2<C64>, b: &[f64]) -> (Array2<C64>, Array2<C64>) {
    let n = a.nrows();
    let a2 = a.dot(a);
    let mut powers = vec![identity(n), a2.clone()];
    while 2 * powers.len() < b.len() {
        let next = powers.last().unwrap().dot(&a2);
        powers.push(next);
    }
    let mut odd = Array2::<C64>::zeros((n, n));
    let mut even = Array2::<C64>::zeros((n, n));
    for (k, p) in powers.iter().enumerate() {
        scaled_add(&mut odd, b[2 * k + 1], p);
        scaled_add(&mut even, b[2 * k], p);
    }
    (a.dot(&odd), even)
}

fn pade_13(a: &Array2<C64>) -> (Array2<C64>, Array2<C64>) {
    let b = &PADE_13;
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);

    let mut inner_u = a6.mapv(|z| z * b[13]);
    scaled_add(&mut inner_u, b[11], &a4);
    scaled_add(&mut inner_u, b[9], &a2);
    let mut u = a6.dot(&inner_u);
    scaled_add(&mut u, b[7], &a6);
    scaled_add(&mut u, b[5], &a4);
    scaled_add(&mut u, b[3], &a2);
    add_identity(&mut u, b[1]);
    let u = a.dot(&u);

    let mut inner_v = a6.mapv(|z| z * b[12]);
    scaled_add(&mut inner_v, b[10], &a4);
    scaled_add(&mut inner_v, b[8], &a2);
    let mut v = a6.dot(&inner_v);
    scaled_add(&mut v, b[6], &a6);
    scaled_add(&mut v, b[4], &a4);
    scaled_add(&mut v, b[2], &a2);
    add_identity(&mut v, b[0]);
    (u, v)
}

/// Solves `(V - U) X = (V + U)`.
fn pade_quotient(u: Array2<C64>, v: Array2<C64>) -> Result<Array2<C64>> {
    let p = &v + &u;
    let q = v - u;
    solve(q, p)
}

fn check_finite(x: &Array2<C64>) -> Result<()> {
    if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::PropagatorFailure("non-finite result".into()))
    }
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
pub fn solve(a: Array2<C64>, b: Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Dimension("solve: incompatible shapes".into()));
    }
    let m = b.ncols();
    let mut a = a.as_standard_layout().into_owned();
    let mut b = b.as_standard_layout().into_owned();
    let scale = a.iter().fold(0.0f64, |s, z| s.max(z.norm()));

    {
        let a_s = a.as_slice_mut().expect("standard layout");
        let b_s = b.as_slice_mut().expect("standard layout");
        for k in 0..n {
            let (piv, piv_abs) = (k..n)
                .map(|i| (i, a_s[i * n + k].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(piv_abs > scale * f64::EPSILON * 1e-3) {
                return Err(Error::PropagatorFailure(format!("singular pivot at column {k}")));
            }
            if piv != k {
                swap_rows(a_s, n, k, piv);
                swap_rows(b_s, m, k, piv);
            }
            let pivot_inv = a_s[k * n + k].inv();
            let (top, bottom) = a_s.split_at_mut((k + 1) * n);
            let row_k = &top[k * n + k + 1..(k + 1) * n];
            let (btop, bbottom) = b_s.split_at_mut((k + 1) * m);
            let brow_k = &btop[k * m..(k + 1) * m];
            for (i, row) in bottom.chunks_exact_mut(n).enumerate() {
                let l = row[k] * pivot_inv;
                if l == C64::new(0.0, 0.0) {
                    continue;
                }
                row[k] = l;
                axpy_neg(&mut row[k + 1..], l, row_k);
                axpy_neg(&mut bbottom[i * m..(i + 1) * m], l, brow_k);
            }
        }
        // back substitution, row by row from the bottom
        for k in (0..n).rev() {
            let (upper, lower) = b_s.split_at_mut(k * m + m);
            let row = &mut upper[k * m..];
            for j in k + 1..n {
                let u = a_s[k * n + j];
                if u != C64::new(0.0, 0.0) {
                    let done = &lower[(j - k - 1) * m..(j - k) * m];
                    axpy_neg(row, u, done);
                }
            }
            let d_inv = a_s[k * n + k].inv();
            for z in row.iter_mut() {
                *z *= d_inv;
            }
        }
    }
    check_finite(&b)?;
    Ok(b)
}

fn swap_rows(s: &mut [C64], width: usize, i: usize, j: usize) {
    let (lo, hi) = (i.min(j), i.max(j));
    let (a, b) = s.split_at_mut(hi * width);
    a[lo * width..(lo + 1) * width].swap_with_slice(&mut b[..width]);
}

#[inline]
fn axpy_neg(y: &mut [C64], a: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        yi.re -= a.re * xi.re - a.im * xi.im;
        yi.im -= a.re * xi.im + a.im * xi.re;
    }
}

/// `y = M x` for a row-major matrix.
pub fn matvec(m: ArrayView2<C64>, x: ArrayView1<C64>) -> Array1<C64> {
    let mut y = Array1::zeros(m.nrows());
    matvec_into(m, x, y.view_mut().into_slice().expect("contiguous"));
    y
}

pub fn matvec_into(m: ArrayView2<C64>, x: ArrayView1<C64>, y: &mut [C64]) {
    let xs = x.to_vec();
    for (row, out) in m.axis_iter(Axis(0)).zip(y.iter_mut()) {
        let mut re = 0.0;
        let mut im = 0.0;
        match row.as_slice() {
            Some(r) => {
                for (a, b) in r.iter().zip(&xs) {
                    re += a.re * b.re - a.im * b.im;
                    im += a.re * b.im + a.im * b.re;
                }
            }
            None => {
                for (a, b) in row.iter().zip(&xs) {
                    re += a.re * b.re - a.im * b.im;
                    im += a.re * b.im + a.im * b.re;
                }
            }
        }
        *out = C64::new(re, im);
    }
}
