use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::model::GridModel;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Bus admittance matrix of branches plus constant-impedance loads.
///
/// Loads become shunts `(P - jQ) * load_level / V_set^2`. The matrix with the
/// generator bus removed must be invertible.
pub fn build_ybus(model: &GridModel, load_level: f64) -> Result<CMatrix> {
    if !(load_level.is_finite() && load_level >= 0.0) {
        return Err(Error::Config(format!(
            "load level must be non-negative, got {load_level}"
        )));
    }
    let n = model.n_bus();
    let mut y = CMatrix::zeros(n, n);
    for br in &model.branches {
        let (a, b) = (model.idx(br.from), model.idx(br.to));
        let ys = Complex64::new(br.r, br.x).inv();
        y[(a, a)] += ys;
        y[(b, b)] += ys;
        y[(a, b)] -= ys;
        y[(b, a)] -= ys;
    }
    for load in &model.loads {
        let i = model.idx(load.bus);
        let v_set = model.buses[i].v_set;
        y[(i, i)] += Complex64::new(load.p, -load.q) * (load_level / (v_set * v_set));
    }

    let slack = model.generator_index();
    if n > 1 {
        let reduced = y.clone().remove_row(slack).remove_column(slack);
        if !reduced.lu().is_invertible() {
            return Err(Error::Singular(
                "admittance matrix with the generator bus removed".into(),
            ));
        }
    }
    Ok(y)
}

/// Invert a network matrix, mapping failure to a singular-network error.
pub(crate) fn invert(y: CMatrix, what: &str) -> Result<CMatrix> {
    let z = y
        .try_inverse()
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Singular(what.to_string()));
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(loads: serde_json::Value) -> GridModel {
        let v = serde_json::json!({
            "schema_version": 1,
            "name": "t",
            "buses": [{"id": 1}, {"id": 2}, {"id": 3}],
            "branches": [{"from": 1, "to": 2, "r": 0.02, "x": 0.04},
                         {"from": 2, "to": 3, "r": 0.01, "x": 0.03}],
            "loads": loads,
            "generator": {"bus": 1, "h": 1.1, "d": 0.8, "e": 1.0, "xd": 0.3, "ts": 2.0},
            "plants": [{"bus": 3, "s_n": 0.3, "r_f": 0.005, "x_f": 0.06, "l_f": 0.002,
                        "c_f": 0.02, "r_t": 0.005, "x_t": 0.06, "l_t": 0.002, "cost": 1.0}]
        });
        GridModel::from_json(&v.to_string()).unwrap()
    }

    #[test]
    fn single_branch_definition() {
        let m = grid(serde_json::json!([]));
        let y = build_ybus(&m, 1.0).unwrap();
        let y12 = Complex64::new(0.02, 0.04).inv();
        assert!((y[(0, 1)] + y12).norm() < 1e-12);
        assert!((y[(0, 0)] - y12).norm() < 1e-12);
        assert_eq!(y[(0, 2)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn zero_load_level_is_laplacian() {
        let m = grid(serde_json::json!([{"bus": 2, "p": 0.4, "q": 0.1}]));
        let y = build_ybus(&m, 0.0).unwrap();
        for i in 0..3 {
            let row: Complex64 = (0..3).map(|j| y[(i, j)]).sum();
            assert!(row.norm() < 1e-12);
        }
        let y1 = build_ybus(&m, 1.0).unwrap();
        assert!((y1[(1, 1)] - y[(1, 1)] - Complex64::new(0.4, -0.1)).norm() < 1e-12);
        assert!((&y1 - y1.transpose()).norm() < 1e-12);
    }

    #[test]
    fn negative_load_level_rejected() {
        let m = grid(serde_json::json!([]));
        assert!(build_ybus(&m, -1.0).is_err());
    }
}
