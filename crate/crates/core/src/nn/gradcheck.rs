use serde::{Deserialize, Serialize};

/// Coordinate where analytic and finite-difference derivatives disagree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub output: usize,
    pub input: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub tol: f64,
    pub offenders: Vec<Offender>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.offenders.is_empty()
    }
}

/// Compare a vector-Jacobian product against central differences.
///
/// `f` maps `x` to outputs; `vjp(x, ct)` returns `Jᵀct`. Every output is
/// probed with a unit cotangent. Errors are `|a − fd| / max(1, |a|, |fd|)`.
pub fn grad_check<F, B>(f: F, vjp: B, x: &[f64], h: f64, tol: f64) -> GradCheckReport
where
    F: Fn(&[f64]) -> Vec<f64>,
    B: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    let n_out = f(x).len();
    let mut jac = vec![vec![0.0; x.len()]; n_out];
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let up = f(&xp);
        xp[j] = x[j] - h;
        let dn = f(&xp);
        xp[j] = x[j];
        for o in 0..n_out {
            jac[o][j] = (up[o] - dn[o]) / (2.0 * h);
        }
    }
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        tol,
        offenders: Vec::new(),
    };
    let mut ct = vec![0.0; n_out];
    for o in 0..n_out {
        ct[o] = 1.0;
        let row = vjp(x, &ct);
        ct[o] = 0.0;
        for (j, (&a, &fd)) in row.iter().zip(&jac[o]).enumerate() {
            let err = (a - fd).abs() / 1f64.max(a.abs()).max(fd.abs());
            report.max_rel_err = report.max_rel_err.max(err);
            if !(err <= tol) {
                report.offenders.push(Offender {
                    output: o,
                    input: j,
                    analytic: a,
                    numeric: fd,
                    rel_err: err,
                });
            }
        }
    }
    report
}
