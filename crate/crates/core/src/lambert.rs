//! Real branches of the Lambert W function.
//!
//! `W0` maps `[-1/e, ∞)` onto `[-1, ∞)` and `W-1` maps `[-1/e, 0)` onto
//! `(-∞, -1]`. Both are computed from a branch-specific initial guess refined
//! by Halley iteration.

use serde::{Deserialize, Serialize};
use std::f64::consts::E;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    /// `W0`, the branch with `W ≥ -1`.
    Principal,
    /// `W-1`, the branch with `W ≤ -1`.
    Lower,
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum LambertError {
    #[error("{x} is outside the domain of the {branch:?} branch")]
    OutOfDomain { branch: Branch, x: f64 },
}

/// `1/e` split into a double and its rounding error.
const INV_E_HI: f64 = 0.367_879_441_171_442_33;
const INV_E_LO: f64 = -1.242_875_367_278_836_3e-17;

/// Inputs this far below `-1/e` are treated as the branch point.
const BRANCH_CLAMP: f64 = 1e-14;

pub fn lambert_w(branch: Branch, x: f64) -> Result<f64, LambertError> {
    let err = LambertError::OutOfDomain { branch, x };
    if x.is_nan() {
        return Err(err);
    }
    // Offset from the branch point, carried in extra precision.
    let mut offset = (x + INV_E_HI) + INV_E_LO;
    if offset < 0.0 {
        if offset < -BRANCH_CLAMP {
            return Err(err);
        }
        offset = 0.0;
    }
    match branch {
        Branch::Principal => Ok(w0(x, offset)),
        Branch::Lower if x >= 0.0 => Err(err),
        Branch::Lower => Ok(wm1(x, offset)),
    }
}

pub fn lambert_w0(x: f64) -> Result<f64, LambertError> {
    lambert_w(Branch::Principal, x)
}

pub fn lambert_wm1(x: f64) -> Result<f64, LambertError> {
    lambert_w(Branch::Lower, x)
}

/// Expansion of `W` about `-1/e` in `p = sqrt(2(e·x + 1))`; `sign` picks the branch.
fn branch_point_series(offset: f64, sign: f64) -> f64 {
    let p = sign * (2.0 * E * offset).sqrt();
    -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 + p * (-43.0 / 540.0))))
}

fn w0(x: f64, offset: f64) -> f64 {
    if offset == 0.0 {
        return -1.0;
    }
    if x == 0.0 {
        return 0.0;
    }
    if x == f64::INFINITY {
        return x;
    }
    if offset < 0.05 {
        return halley(x, branch_point_series(offset, 1.0));
    }
    if x.abs() < 0.1 {
        return halley(x, x * (1.0 + x * (-1.0 + x * (1.5 + x * (-8.0 / 3.0)))));
    }
    if x < 20.0 {
        let l = x.ln_1p();
        return halley(x, l * (1.0 - (1.0 + l).ln() / (2.0 + l)));
    }
    log_newton(x)
}

fn wm1(x: f64, offset: f64) -> f64 {
    if offset == 0.0 {
        return -1.0;
    }
    let guess = if offset < 0.1 {
        branch_point_series(offset, -1.0)
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    halley(x, guess)
}

fn halley(x: f64, mut w: f64) -> f64 {
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        if !step.is_finite() {
            break;
        }
        w -= step;
        if step.abs() <= 2.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    w
}

/// Newton on `w + ln w = ln x`, which stays finite where `w·e^w` overflows.
fn log_newton(x: f64) -> f64 {
    let lx = x.ln();
    let l2 = lx.ln();
    let mut w = lx - l2 + l2 / lx;
    for _ in 0..64 {
        let g = w + w.ln() - lx;
        let step = g / (1.0 + 1.0 / w);
        w -= step;
        if step.abs() <= 2.0 * f64::EPSILON * w {
            break;
        }
    }
    w
}
