use nalgebra::{DMatrix, DVector};

const DELTA: f64 = 1e-9;
const REFINE_STEPS: usize = 5;

pub(crate) struct PolishInput<'a> {
    pub p: &'a DMatrix<f64>,
    pub a: &'a DMatrix<f64>,
    pub q: &'a DVector<f64>,
    pub lo: &'a DVector<f64>,
    pub up: &'a DVector<f64>,
    pub x: &'a DVector<f64>,
    pub z: &'a DVector<f64>,
    pub y: &'a DVector<f64>,
}

/// Guesses the active set from a splitting iterate and solves the
/// equality-constrained KKT system it defines. The system is regularized
/// by `DELTA` and the regularization is removed by iterative refinement.
/// Returns `None` when the reduced system cannot be solved.
pub(crate) fn polish(inp: PolishInput<'_>) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = inp.x.len();
    let m = inp.z.len();

    // (row, bound value)
    let mut active: Vec<(usize, f64)> = Vec::new();
    for i in 0..m {
        let (l, u, z, y) = (inp.lo[i], inp.up[i], inp.z[i], inp.y[i]);
        if l == u || z - l < -y {
            active.push((i, l));
        } else if u - z < y {
            active.push((i, u));
        }
    }
    let k = active.len();
    let dim = n + k;

    let mut exact = DMatrix::zeros(dim, dim);
    exact.view_mut((0, 0), (n, n)).copy_from(inp.p);
    for (r, &(row, _)) in active.iter().enumerate() {
        for j in 0..n {
            let v = inp.a[(row, j)];
            exact[(n + r, j)] = v;
            exact[(j, n + r)] = v;
        }
    }
    let mut reg = exact.clone();
    for i in 0..n {
        reg[(i, i)] += DELTA;
    }
    for r in 0..k {
        reg[(n + r, n + r)] -= DELTA;
    }
    let lu = reg.lu();

    let mut rhs = DVector::zeros(dim);
    for j in 0..n {
        rhs[j] = -inp.q[j];
    }
    for (r, &(_, b)) in active.iter().enumerate() {
        rhs[n + r] = b;
    }

    let mut sol = lu.solve(&rhs)?;
    for _ in 0..REFINE_STEPS {
        let resid = &rhs - &exact * &sol;
        let step = lu.solve(&resid)?;
        sol += step;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }

    let x = sol.rows(0, n).into_owned();
    let mut y = DVector::zeros(m);
    for (r, &(row, _)) in active.iter().enumerate() {
        y[row] = sol[n + r];
    }
    Some((x, y))
}
