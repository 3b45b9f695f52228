//! Built-in SDE models and the expression-based custom drift.

use std::sync::Arc;

use meval::{Context, ContextProvider, Expr, FuncEvalError};
use sdefilter::{Drift, Error, Interval, Result, SdeModel};

pub const LORENZ63_TRUE_THETA: [f64; 3] = [10.0, 28.0, 8.0 / 3.0];
pub const LORENZ63_X0: [f64; 3] = [-6.0, -5.0, 24.5];

fn lorenz63_drift(i: usize, theta: f64, x: &[f64]) -> f64 {
    match i {
        0 => -theta * (x[0] - x[1]),
        1 => theta * x[0] - x[1] - x[0] * x[2],
        _ => x[0] * x[1] - theta * x[2],
    }
}

/// Stochastic Lorenz-63 with unit noise in every component and the prior box
/// `[5, 20] x [18, 50] x [1, 8]`.
pub fn lorenz63_model() -> SdeModel {
    SdeModel::new(lorenz63_drift, vec![1.0; 3], lorenz63_param_support()).expect("valid Lorenz-63 model")
}

pub fn lorenz63_param_support() -> Vec<Interval> {
    vec![Interval { lo: 5.0, hi: 20.0 }, Interval { lo: 18.0, hi: 50.0 }, Interval { lo: 1.0, hi: 8.0 }]
}

/// Initial-state prior box `[-9, -3] x [-9, -3] x [20, 28]`.
pub fn lorenz63_state_support() -> Vec<Interval> {
    vec![Interval { lo: -9.0, hi: -3.0 }, Interval { lo: -9.0, hi: -3.0 }, Interval { lo: 20.0, hi: 28.0 }]
}

/// Scalar Ornstein-Uhlenbeck drift `-theta x`.
pub fn ou_model(sigma: f64, support: Interval) -> Result<SdeModel> {
    SdeModel::new(|_: usize, theta: f64, x: &[f64]| -theta * x[0], vec![sigma], vec![support])
}

thread_local! {
    static BUILTINS: Context<'static> = meval::builtin();
}

struct Vars<'a> {
    theta: f64,
    x: &'a [f64],
}

impl ContextProvider for Vars<'_> {
    fn get_var(&self, name: &str) -> Option<f64> {
        if name == "theta" {
            return Some(self.theta);
        }
        let k: usize = name.strip_prefix('x')?.parse().ok()?;
        (1..=self.x.len()).contains(&k).then(|| self.x[k - 1])
    }

    fn eval_func(&self, name: &str, args: &[f64]) -> std::result::Result<f64, FuncEvalError> {
        BUILTINS.with(|b| b.eval_func(name, args))
    }
}

/// Drift given as one arithmetic expression per component, in the variables
/// `theta` (that component's parameter) and `x1, ..., xn`.
pub struct ExprDrift {
    exprs: Vec<Expr>,
}

impl ExprDrift {
    pub fn parse(sources: &[String]) -> Result<Self> {
        let n = sources.len();
        let exprs = sources
            .iter()
            .enumerate()
            .map(|(i, src)| {
                let expr: Expr =
                    src.parse().map_err(|e| Error::Config(format!("drift {}: cannot parse {src:?}: {e}", i + 1)))?;
                // surfaces unknown variables and functions now rather than mid-run
                let probe = vec![0.5; n];
                expr.eval_with_context(Vars { theta: 0.5, x: &probe })
                    .map_err(|e| Error::Config(format!("drift {}: {e}", i + 1)))?;
                Ok(expr)
            })
            .collect::<Result<_>>()?;
        Ok(Self { exprs })
    }
}

impl Drift for ExprDrift {
    fn eval(&self, i: usize, theta: f64, x: &[f64]) -> f64 {
        self.exprs[i].eval_with_context(Vars { theta, x }).unwrap_or(f64::NAN)
    }
}

pub fn custom_model(drift: &[String], sigma: Vec<f64>, support: Vec<Interval>) -> Result<SdeModel> {
    SdeModel::from_arc(Arc::new(ExprDrift::parse(drift)?), sigma, support)
}
