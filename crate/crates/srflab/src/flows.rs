//! Factories for the reference flows the checkers are exercised on: static
//! spaces, the wandering Gaussian, homothetic metric scalings, and a
//! negative control whose effective curvature is strictly negative.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::space::{DynamicSpace, LocalLogDerivative, LogDerivative};

/// Flat static grid on `[-half_width, half_width]`, horizon `(0, 1)`.
pub fn static_flat_grid<T: Scalar>(half_width: T, n: usize) -> Result<DynamicSpace<T>> {
    DynamicSpace::grid(
        (-half_width, half_width),
        n,
        |_, _, _| T::zero(),
        true,
        LogDerivative::Zero,
        LocalLogDerivative::Zero,
        (T::zero(), T::one()),
        T::zero(),
    )
}

/// Static grid with a time-independent weight `f(position)`.
pub fn static_weighted_grid<T: Scalar>(
    half_width: T,
    n: usize,
    f: impl Fn(T) -> T + Send + Sync + 'static,
) -> Result<DynamicSpace<T>> {
    DynamicSpace::grid(
        (-half_width, half_width),
        n,
        move |_, _, p| f(p),
        true,
        LogDerivative::Zero,
        LocalLogDerivative::Zero,
        (T::zero(), T::one()),
        T::zero(),
    )
}

/// Freezes a space in time: `h ≡ 0`, `H ≡ 0` and the weight pinned at
/// `t_freeze`.
pub fn static_space<T: Scalar>(base: &DynamicSpace<T>, t_freeze: T) -> Result<DynamicSpace<T>> {
    base.check_time(t_freeze)?;
    let mut s = base.clone();
    s.freeze(t_freeze);
    Ok(s)
}

/// Wandering Gaussian on a truncated 1D grid: static metric and weight
/// `f_t(x) = (x α_t)² + x β_t + γ_t` with arbitrary coefficient paths.
pub fn wandering_gaussian<T: Scalar>(
    alpha: impl Fn(T) -> T + Send + Sync + 'static,
    beta: impl Fn(T) -> T + Send + Sync + 'static,
    gamma: impl Fn(T) -> T + Send + Sync + 'static,
    half_width: T,
    n: usize,
) -> Result<DynamicSpace<T>> {
    DynamicSpace::grid(
        (-half_width, half_width),
        n,
        move |t, _, x| {
            let a = x * alpha(t);
            a * a + x * beta(t) + gamma(t)
        },
        false,
        LogDerivative::Zero,
        LocalLogDerivative::Zero,
        (T::zero(), T::one()),
        T::zero(),
    )
}

/// Homothetic flow `d_t² = d²(1 - 2Kt)` over a weight-static base, i.e.
/// `h_r(x,y) = H_r(x) = -K / (1 - 2Kr)` with the measure unchanged.
///
/// For `K > 0` the horizon is trimmed to keep `1 - 2Kt ≥ ε`; the default
/// margin keeps a fifth of the collapse time in reserve.
pub fn homothetic<T: Scalar>(base: &DynamicSpace<T>, k: T) -> Result<DynamicSpace<T>> {
    homothetic_with_margin(base, k, T::c(0.2))
}

pub fn homothetic_with_margin<T: Scalar>(
    base: &DynamicSpace<T>,
    k: T,
    margin: T,
) -> Result<DynamicSpace<T>> {
    if !base.is_weight_static() {
        return Err(Error::InvalidInput(
            "homothetic flow needs a weight-static base".into(),
        ));
    }
    if k == T::zero() {
        return Ok(base.clone());
    }
    let mut s = base.clone();
    let (lo, hi) = base.horizon();
    let hi = if k > T::zero() {
        let collapse = T::one() / (T::c(2.0) * k);
        let trimmed = collapse * (T::one() - margin);
        if trimmed <= lo {
            return Err(Error::InvalidHorizon(format!(
                "horizon empty after homothetic trim at K = {}",
                k.to_f64_lossy()
            )));
        }
        hi.min(trimmed)
    } else {
        hi
    };
    let rate = move |r: T| -k / (T::one() - T::c(2.0) * k * r);
    let h_bound = rate(hi).abs().max(rate(lo).abs());
    s.set_metric_scaling(
        LogDerivative::Global(Arc::new(rate)),
        LocalLogDerivative::Global(Arc::new(rate)),
        h_bound,
    );
    s.with_horizon((lo, hi))
}

/// Global constant log-derivative `h ≡ c`: `d_t = d_{t0} e^{c(t - t0)}`.
pub fn constant_h_flow<T: Scalar>(base: &DynamicSpace<T>, c: T) -> Result<DynamicSpace<T>> {
    if !base.is_weight_static() {
        return Err(Error::InvalidInput("constant-h flow needs a weight-static base".into()));
    }
    let mut s = base.clone();
    s.set_metric_scaling(
        LogDerivative::Global(Arc::new(move |_| c)),
        LocalLogDerivative::Global(Arc::new(move |_| c)),
        c.abs(),
    );
    Ok(s)
}

/// Negative control: static metric with weight `f(x) = -c x²`, whose
/// effective curvature is `-2c < 0`. Every super-Ricci checker must find
/// violations on fine enough grids.
pub fn violating_flow<T: Scalar>(half_width: T, n: usize, c: T) -> Result<DynamicSpace<T>> {
    if !(c > T::zero()) {
        return Err(Error::InvalidParameter("violating flow needs c > 0".into()));
    }
    static_weighted_grid(half_width, n, move |x| -c * x * x)
}
