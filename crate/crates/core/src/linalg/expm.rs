use ndarray::Array2;
use ndarray_linalg::Inverse;

use crate::dense::C64;
use crate::error::{invalid, Result, TntError};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152e0;

fn pade_coefficients(degree: usize) -> &'static [f64] {
    match degree {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
        9 => &[
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
        ],
        _ => &[
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
        ],
    }
}

fn one_norm(m: &Array2<C64>) -> f64 {
    m.columns().into_iter().map(|c| c.iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max)
}

fn scaled(m: &Array2<C64>, s: f64) -> Array2<C64> {
    m.mapv(|v| v * s)
}

/// `exp(m)` by scaling and squaring with a diagonal Padé approximant.
pub fn matrix_exponential(m: &Array2<C64>) -> Result<Array2<C64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(invalid(format!("matrix exponential of non-square {}x{} matrix", n, m.ncols())));
    }
    let id = Array2::<C64>::eye(n);
    let norm = one_norm(m);
    if norm == 0.0 {
        return Ok(id);
    }
    let a2 = m.dot(m);
    for (degree, theta) in THETA {
        if norm <= theta {
            let b = pade_coefficients(degree);
            let mut powers = vec![id.clone(), a2.clone()];
            while powers.len() * 2 <= degree {
                let next = powers.last().unwrap().dot(&a2);
                powers.push(next);
            }
            let mut u = Array2::<C64>::zeros((n, n));
            let mut v = Array2::<C64>::zeros((n, n));
            for (k, p) in powers.iter().enumerate() {
                u = u + scaled(p, b[2 * k + 1]);
                v = v + scaled(p, b[2 * k]);
            }
            let u = m.dot(&u);
            return solve_pade(&u, &v);
        }
    }
    let s = ((norm / THETA_13).log2().ceil()).max(0.0) as i32;
    let factor = 0.5f64.powi(s);
    let a = scaled(m, factor);
    let a2 = scaled(&a2, factor * factor);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let b = pade_coefficients(13);
    let inner_u = scaled(&a6, b[13]) + scaled(&a4, b[11]) + scaled(&a2, b[9]);
    let u = a6.dot(&inner_u) + scaled(&a6, b[7]) + scaled(&a4, b[5]) + scaled(&a2, b[3]) + scaled(&id, b[1]);
    let u = a.dot(&u);
    let inner_v = scaled(&a6, b[12]) + scaled(&a4, b[10]) + scaled(&a2, b[8]);
    let v = a6.dot(&inner_v) + scaled(&a6, b[6]) + scaled(&a4, b[4]) + scaled(&a2, b[2]) + scaled(&id, b[0]);
    let mut x = solve_pade(&u, &v)?;
    for _ in 0..s {
        x = x.dot(&x);
    }
    Ok(x)
}

fn solve_pade(u: &Array2<C64>, v: &Array2<C64>) -> Result<Array2<C64>> {
    let q = v - u;
    let p = v + u;
    let qinv = q
        .inv()
        .map_err(|e| TntError::DecompositionFailed(format!("Padé denominator of size {}: {e}", q.nrows())))?;
    Ok(qinv.dot(&p))
}
