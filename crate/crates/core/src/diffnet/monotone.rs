//! Strictly increasing scalar head `g(t) = a·t + b·tanh(t)` with `a, b > 0`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{softplus, softplus_inv, Parameterised, Reparam, Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneHead {
    a_raw: Array2<f64>,
    b_raw: Array2<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    a: Var,
    b: Var,
}

impl MonotoneHead {
    /// Head with the given effective coefficients (both must be positive).
    pub fn new(a: f64, b: f64) -> Self {
        Self {
            a_raw: Array2::from_elem((1, 1), softplus_inv(a)),
            b_raw: Array2::from_elem((1, 1), softplus_inv(b)),
        }
    }

    pub fn from_raw(a_raw: f64, b_raw: f64) -> Self {
        Self {
            a_raw: Array2::from_elem((1, 1), a_raw),
            b_raw: Array2::from_elem((1, 1), b_raw),
        }
    }

    /// Effective `(a, b)`.
    pub fn coefficients(&self) -> (f64, f64) {
        (softplus(self.a_raw[[0, 0]]), softplus(self.b_raw[[0, 0]]))
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (a, b) = self.coefficients();
        a * t + b * t.tanh()
    }

    /// `g'(t) = a + b·(1 − tanh²t)`.
    pub fn derivative(&self, t: f64) -> f64 {
        let (a, b) = self.coefficients();
        let th = t.tanh();
        a + b * (1.0 - th * th)
    }

    pub fn vars(&self, leaves: &[Var]) -> HeadVars {
        assert_eq!(leaves.len(), 2, "head leaf count");
        HeadVars {
            a: leaves[0],
            b: leaves[1],
        }
    }

    pub fn forward(t: &mut Tape<'_>, v: HeadVars, x: Var) -> Var {
        let lin = t.mul(x, v.a);
        let th = t.tanh(x);
        let sat = t.mul(th, v.b);
        t.add(lin, sat)
    }
}

impl Parameterised for MonotoneHead {
    fn params(&self) -> Vec<&Array2<f64>> {
        vec![&self.a_raw, &self.b_raw]
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.a_raw, &mut self.b_raw]
    }

    fn reparams(&self) -> Vec<Reparam> {
        vec![Reparam::Softplus, Reparam::Softplus]
    }
}
