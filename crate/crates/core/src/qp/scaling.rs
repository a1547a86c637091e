use nalgebra::{DMatrix, DVector};

const MIN_NORM: f64 = 1e-4;
const MAX_NORM: f64 = 1e4;

/// Diagonal equilibration `P̄ = k·D P D`, `Ā = E A D`, found by modified
/// Ruiz iterations on the columns of the KKT matrix.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    pub d: DVector<f64>,
    pub e: DVector<f64>,
    pub d_inv: DVector<f64>,
    pub e_inv: DVector<f64>,
    /// Cost scaling `k`.
    pub cost: f64,
    pub p: DMatrix<f64>,
    pub a: DMatrix<f64>,
}

fn clamp_norm(v: f64) -> f64 {
    if v < MIN_NORM {
        1.0
    } else {
        v.min(MAX_NORM)
    }
}

impl Scaling {
    pub fn compute(p: &DMatrix<f64>, a: &DMatrix<f64>, iters: usize) -> Self {
        let n = p.ncols();
        let m = a.nrows();
        let mut ps = p.clone();
        let mut as_ = a.clone();
        let mut d = DVector::from_element(n, 1.0);
        let mut e = DVector::from_element(m, 1.0);

        for _ in 0..iters {
            let mut dd = DVector::zeros(n);
            for j in 0..n {
                let pn = ps.column(j).amax();
                let an = if m > 0 { as_.column(j).amax() } else { 0.0 };
                dd[j] = 1.0 / clamp_norm(pn.max(an)).sqrt();
            }
            let mut de = DVector::zeros(m);
            for i in 0..m {
                de[i] = 1.0 / clamp_norm(as_.row(i).amax()).sqrt();
            }
            for j in 0..n {
                for i in 0..n {
                    ps[(i, j)] *= dd[i] * dd[j];
                }
                for i in 0..m {
                    as_[(i, j)] *= de[i] * dd[j];
                }
            }
            d.component_mul_assign(&dd);
            e.component_mul_assign(&de);
        }

        let mean_col = if n > 0 {
            (0..n).map(|j| ps.column(j).amax()).sum::<f64>() / n as f64
        } else {
            1.0
        };
        let cost = 1.0 / clamp_norm(mean_col);
        ps *= cost;

        Self {
            d_inv: d.map(|v| 1.0 / v),
            e_inv: e.map(|v| 1.0 / v),
            d,
            e,
            cost,
            p: ps,
            a: as_,
        }
    }
}
