use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::lp::StandardLp;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
struct Column {
    name: String,
    lo: f64,
    hi: f64,
    cost: f64,
}

#[derive(Clone, Debug)]
struct Row {
    name: String,
    coefs: Vec<(usize, f64)>,
    sense: Sense,
    rhs: f64,
}

/// Row-wise LP assembly that lowers inequalities to bounded slacks.
///
/// Slack upper bounds are derived from the variable box, so the result is
/// always in the finite-bound standard form the simplex expects.
#[derive(Clone, Debug, Default)]
pub struct LpBuilder {
    cols: Vec<Column>,
    rows: Vec<Row>,
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lo: f64, hi: f64, cost: f64) -> usize {
        self.cols.push(Column {
            name: name.into(),
            lo,
            hi,
            cost,
        });
        self.cols.len() - 1
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coefs: Vec<(usize, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        self.rows.push(Row {
            name: name.into(),
            coefs,
            sense,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.cols.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Lower to `A y = b, l ≤ y ≤ u`. Structural columns keep their indices;
    /// slacks are appended after them.
    pub fn build(&self) -> Result<StandardLp<f64>> {
        let n0 = self.cols.len();
        let n_slack = self.rows.iter().filter(|r| r.sense != Sense::Eq).count();
        let (m, n) = (self.rows.len(), n0 + n_slack);
        let mut a = DenseMatrix::zeros(m, n);
        let mut b = Vec::with_capacity(m);
        let mut c: Vec<f64> = self.cols.iter().map(|col| col.cost).collect();
        let mut l: Vec<f64> = self.cols.iter().map(|col| col.lo).collect();
        let mut u: Vec<f64> = self.cols.iter().map(|col| col.hi).collect();
        let mut col_names: Vec<String> = self.cols.iter().map(|col| col.name.clone()).collect();
        let mut next = n0;
        for (i, row) in self.rows.iter().enumerate() {
            let (mut lo_act, mut hi_act) = (0.0, 0.0);
            for &(j, v) in &row.coefs {
                if j >= n0 {
                    return Err(Error::Config(format!("row {}: unknown column {j}", row.name)));
                }
                a[(i, j)] += v;
                let (x, y) = (v * self.cols[j].lo, v * self.cols[j].hi);
                lo_act += x.min(y);
                hi_act += x.max(y);
            }
            b.push(row.rhs);
            let slack_hi = match row.sense {
                Sense::Eq => continue,
                Sense::Le => {
                    a[(i, next)] = 1.0;
                    row.rhs - lo_act
                }
                Sense::Ge => {
                    a[(i, next)] = -1.0;
                    hi_act - row.rhs
                }
            };
            c.push(0.0);
            l.push(0.0);
            u.push(slack_hi.max(0.0));
            col_names.push(format!("slack[{}]", row.name));
            next += 1;
        }
        let mut lp = StandardLp::new(a, b, c, l, u)?;
        lp.row_names = self.rows.iter().map(|r| r.name.clone()).collect();
        lp.col_names = col_names;
        Ok(lp)
    }
}
