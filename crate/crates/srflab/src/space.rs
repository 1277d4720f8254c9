//! Discrete time-dependent metric measure spaces.
//!
//! A [`DynamicSpace`] is a finite connected weighted graph whose distance,
//! measure and conductances evolve in time:
//!
//! * vertex measure `m_t(x) = e^{-f(t,x)} m(x)`,
//! * pair distance `d_t(x,y) = d_{t0}(x,y) · exp(∫_{t0}^t h_r(x,y) dr)`,
//! * edge conductance `c_t(x,y) = a(x,y) e^{-(f(t,x)+f(t,y))/2} / d_t(x,y)^2`.
//!
//! On a uniform grid with spacing `Δx` the constructors choose `m(x) = Δx`
//! and `a(x,y) = Δx`, which makes the induced generator the second-order
//! finite-difference discretization of `u'' - f' u'` and keeps energies,
//! entropies and transport distances aligned with their continuum values.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Real-valued function on the vertex set.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    pub values: Vec<T>,
    /// Time at which the field is understood, if any.
    pub time_tag: Option<T>,
}

impl<T: Scalar> Field<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values, time_tag: None }
    }

    pub fn at_time(values: Vec<T>, t: T) -> Self {
        Self { values, time_tag: Some(t) }
    }

    pub fn constant(n: usize, v: T) -> Self {
        Self::new(vec![v; n])
    }

    pub fn from_fn(n: usize, f: impl Fn(usize) -> T) -> Self {
        Self::new((0..n).map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().map(|v| v.abs()).fold(T::zero(), T::max)
    }
}

/// Nonnegative mass vector; the discrete stand-in for a measure on `X`.
#[derive(Clone, Debug, PartialEq)]
pub struct Measure<T> {
    pub masses: Vec<T>,
    pub normalized: bool,
}

impl<T: Scalar> Measure<T> {
    pub fn new(masses: Vec<T>) -> Result<Self> {
        if masses.iter().any(|m| !m.is_finite() || *m < T::zero()) {
            return Err(Error::InvalidMeasure("masses must be finite and nonnegative".into()));
        }
        Ok(Self { masses, normalized: false })
    }

    /// Normalize to total mass one.
    pub fn probability(masses: Vec<T>) -> Result<Self> {
        let mut m = Self::new(masses)?;
        let tot = m.total();
        if tot <= T::zero() {
            return Err(Error::InvalidMeasure("total mass must be positive".into()));
        }
        for v in &mut m.masses {
            *v = *v / tot;
        }
        m.normalized = true;
        Ok(m)
    }

    pub fn dirac(n: usize, x: usize) -> Self {
        let mut masses = vec![T::zero(); n];
        masses[x] = T::one();
        Self { masses, normalized: true }
    }

    pub fn total(&self) -> T {
        self.masses.iter().copied().sum()
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Checks the normalization invariant (total mass 1 within 1e-12).
    pub fn check_normalized(&self) -> bool {
        !self.normalized || (self.total() - T::one()).abs() <= T::tol(1e-12)
    }
}

type WeightEval<T> = Arc<dyn Fn(T, usize) -> T + Send + Sync>;
type GlobalEval<T> = Arc<dyn Fn(T) -> T + Send + Sync>;
type PairEval<T> = Arc<dyn Fn(T, usize, usize) -> T + Send + Sync>;
type VertexEval<T> = Arc<dyn Fn(T, usize) -> T + Send + Sync>;

/// Logarithmic time-derivative `h_r(x,y)` of the distance.
///
/// The structure is declared, not detected: `Global` means the same `h_r`
/// for every pair, which keeps 1D grids line-shaped under the flow.
#[derive(Clone)]
pub enum LogDerivative<T> {
    Zero,
    Global(GlobalEval<T>),
    Pairwise(PairEval<T>),
}

impl<T: Scalar> LogDerivative<T> {
    pub fn eval(&self, r: T, x: usize, y: usize) -> T {
        match self {
            LogDerivative::Zero => T::zero(),
            LogDerivative::Global(f) => f(r),
            LogDerivative::Pairwise(f) => f(r, x, y),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, LogDerivative::Zero)
    }
}

/// Local limit `H_r(x)` of `h_r(x,y)` as `y → x`.
#[derive(Clone)]
pub enum LocalLogDerivative<T> {
    Zero,
    Global(GlobalEval<T>),
    PerVertex(VertexEval<T>),
}

impl<T: Scalar> LocalLogDerivative<T> {
    pub fn eval(&self, r: T, x: usize) -> T {
        match self {
            LocalLogDerivative::Zero => T::zero(),
            LocalLogDerivative::Global(f) => f(r),
            LocalLogDerivative::PerVertex(f) => f(r, x),
        }
    }
}

/// Outcome of sampling the standing assumptions on a space.
#[derive(Clone, Debug, serde::Serialize)]
pub struct AssumptionReport<T> {
    pub f_bound: T,
    pub f_lip_space: T,
    pub f_lip_time: T,
    pub d_log_lip: T,
    pub h_bound: T,
    pub pass_f_bound: bool,
    pub pass_f_lip_space: bool,
    pub pass_f_lip_time: bool,
    pub pass_d_log_lip: bool,
    pub pass_h_bound: bool,
    pub pass: bool,
}

/// Finite vertex set with time-dependent distance, weight and conductances.
///
/// Immutable after construction; all evaluators must be pure. Construction
/// validates symmetry, connectivity and evaluator finiteness.
#[derive(Clone)]
pub struct DynamicSpace<T> {
    n: usize,
    base_measure: Vec<T>,
    base_distance: Vec<T>,
    /// undirected edges (x < y) with base conductance coefficient a(x,y)
    edges: Vec<(usize, usize, T)>,
    weight: WeightEval<T>,
    weight_static: bool,
    log_derivative: LogDerivative<T>,
    local_log_derivative: LocalLogDerivative<T>,
    horizon: (T, T),
    anchor: T,
    /// declared bound C_h on |h|
    h_bound: T,
    /// 1D coordinates when the space is a grid
    positions: Option<Vec<T>>,
    /// Simpson subintervals per unit time for the h-integral
    quad_per_unit: usize,
    quad_min_subs: usize,
}

pub const DEFAULT_QUAD_PER_UNIT: usize = 8192;
pub const DEFAULT_QUAD_MIN_SUBS: usize = 1024;

impl<T: Scalar> DynamicSpace<T> {
    /// Uniform grid on `[lo, hi]` with `n` vertices, nearest-neighbor edges,
    /// base distance `|x - y|`, vertex measure `Δx` and edge coefficient `Δx`.
    pub fn grid(
        interval: (T, T),
        n: usize,
        weight: impl Fn(T, usize, T) -> T + Send + Sync + 'static,
        weight_static: bool,
        log_derivative: LogDerivative<T>,
        local_log_derivative: LocalLogDerivative<T>,
        horizon: (T, T),
        h_bound: T,
    ) -> Result<Self> {
        let (lo, hi) = interval;
        if n < 2 {
            return Err(Error::InvalidSize(format!("grid needs n >= 2, got {n}")));
        }
        if lo >= hi {
            return Err(Error::InvalidSize("grid interval must satisfy lo < hi".into()));
        }
        let dx = (hi - lo) / T::from_usize_lossy(n - 1);
        let positions: Vec<T> = (0..n).map(|i| lo + dx * T::from_usize_lossy(i)).collect();
        let mut base_distance = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                base_distance[i * n + j] = (positions[i] - positions[j]).abs();
            }
        }
        let edges: Vec<(usize, usize, T)> = (0..n - 1).map(|i| (i, i + 1, dx)).collect();
        let pos = positions.clone();
        let weight: WeightEval<T> = Arc::new(move |t, x| weight(t, x, pos[x]));
        let space = Self {
            n,
            base_measure: vec![dx; n],
            base_distance,
            edges,
            weight,
            weight_static,
            log_derivative,
            local_log_derivative,
            horizon,
            anchor: T::zero(),
            h_bound,
            positions: Some(positions),
            quad_per_unit: DEFAULT_QUAD_PER_UNIT,
            quad_min_subs: DEFAULT_QUAD_MIN_SUBS,
        };
        space.validate_evaluators()?;
        Ok(space)
    }

    /// General graph space. `edges` carry `(x, y, a, length)`; the base
    /// distance is the shortest-path metric induced by the edge lengths.
    pub fn graph(
        n: usize,
        edges: &[(usize, usize, T, T)],
        base_measure: Vec<T>,
        weight: impl Fn(T, usize) -> T + Send + Sync + 'static,
        weight_static: bool,
        log_derivative: LogDerivative<T>,
        local_log_derivative: LocalLogDerivative<T>,
        horizon: (T, T),
        h_bound: T,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSize(format!("graph needs n >= 2, got {n}")));
        }
        if base_measure.len() != n || base_measure.iter().any(|m| *m <= T::zero()) {
            return Err(Error::InvalidMeasure("base measure must be positive of length n".into()));
        }
        let mut es = Vec::with_capacity(edges.len());
        let mut lengths = vec![T::infinity(); n * n];
        for &(x, y, a, len) in edges {
            if x >= n || y >= n || x == y {
                return Err(Error::InvalidInput(format!("bad edge ({x},{y})")));
            }
            if a <= T::zero() || len <= T::zero() {
                return Err(Error::InvalidInput("edge coefficient and length must be positive".into()));
            }
            let (x, y) = if x < y { (x, y) } else { (y, x) };
            es.push((x, y, a));
            lengths[x * n + y] = len;
            lengths[y * n + x] = len;
        }
        let base_distance = shortest_paths(n, &lengths)?;
        let space = Self {
            n,
            base_measure,
            base_distance,
            edges: es,
            weight: Arc::new(weight),
            weight_static,
            log_derivative,
            local_log_derivative,
            horizon,
            anchor: T::zero(),
            h_bound,
            positions: None,
            quad_per_unit: DEFAULT_QUAD_PER_UNIT,
            quad_min_subs: DEFAULT_QUAD_MIN_SUBS,
        };
        space.validate_evaluators()?;
        Ok(space)
    }

    fn validate_evaluators(&self) -> Result<()> {
        let (lo, hi) = self.horizon;
        if !(lo < hi) {
            return Err(Error::InvalidHorizon(format!(
                "empty horizon ({}, {})",
                lo.to_f64_lossy(),
                hi.to_f64_lossy()
            )));
        }
        let probes = [
            lo + (hi - lo) * T::c(1e-3),
            (lo + hi) * T::c(0.5),
            hi - (hi - lo) * T::c(1e-3),
        ];
        for &t in &probes {
            for x in 0..self.n {
                let f = (self.weight)(t, x);
                if !f.is_finite() {
                    return Err(Error::InvalidEvaluator(format!(
                        "weight f({}, {x}) is not finite",
                        t.to_f64_lossy()
                    )));
                }
                let bh = self.local_log_derivative.eval(t, x);
                if !bh.is_finite() {
                    return Err(Error::InvalidEvaluator("local log-derivative not finite".into()));
                }
            }
            for &(x, y, _) in &self.edges {
                let h = self.log_derivative.eval(t, x, y);
                if !h.is_finite() {
                    return Err(Error::InvalidEvaluator("log-derivative not finite".into()));
                }
            }
        }
        // connectivity of the edge support
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(x, y, _) in &self.edges {
                let other = if x == v { Some(y) } else if y == v { Some(x) } else { None };
                if let Some(o) = other {
                    if !seen[o] {
                        seen[o] = true;
                        stack.push(o);
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidInput("edge support is not connected".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn horizon(&self) -> (T, T) {
        self.horizon
    }

    pub fn with_horizon(mut self, horizon: (T, T)) -> Result<Self> {
        if !(horizon.0 < horizon.1) {
            return Err(Error::InvalidHorizon("empty horizon".into()));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn edges(&self) -> &[(usize, usize, T)] {
        &self.edges
    }

    pub fn base_measure(&self) -> &[T] {
        &self.base_measure
    }

    pub fn positions(&self) -> Option<&[T]> {
        self.positions.as_deref()
    }

    pub fn grid_spacing(&self) -> Option<T> {
        self.positions.as_ref().map(|p| (p[1] - p[0]).abs())
    }

    pub fn h_bound(&self) -> T {
        self.h_bound
    }

    pub fn is_weight_static(&self) -> bool {
        self.weight_static
    }

    pub fn log_derivative(&self) -> &LogDerivative<T> {
        &self.log_derivative
    }

    pub fn weight_at(&self, t: T, x: usize) -> T {
        (self.weight)(t, x)
    }

    pub fn local_log_derivative_at(&self, r: T, x: usize) -> T {
        self.local_log_derivative.eval(r, x)
    }

    /// Pins the weight at `t_freeze` and removes all metric time dependence.
    pub(crate) fn freeze(&mut self, t_freeze: T) {
        let w = self.weight.clone();
        self.weight = Arc::new(move |_, x| w(t_freeze, x));
        self.weight_static = true;
        self.log_derivative = LogDerivative::Zero;
        self.local_log_derivative = LocalLogDerivative::Zero;
        self.h_bound = T::zero();
    }

    /// Installs a metric time dependence (used by the flow factories).
    pub(crate) fn set_metric_scaling(
        &mut self,
        h: LogDerivative<T>,
        big_h: LocalLogDerivative<T>,
        h_bound: T,
    ) {
        self.log_derivative = h;
        self.local_log_derivative = big_h;
        self.h_bound = h_bound;
    }

    pub fn check_time(&self, t: T) -> Result<()> {
        let (lo, hi) = self.horizon;
        if t <= lo || t >= hi {
            return Err(Error::OutOfHorizon {
                t: t.to_f64_lossy(),
                lo: lo.to_f64_lossy(),
                hi: hi.to_f64_lossy(),
            });
        }
        Ok(())
    }

    /// Composite-Simpson integral of a scalar function, with the declared
    /// fixed subinterval density (reported via [`Self::quadrature_rule`]).
    fn simpson(&self, from: T, to: T, f: impl Fn(T) -> T) -> T {
        if from == to {
            return T::zero();
        }
        let span = (to - from).abs().to_f64_lossy();
        let mut subs = (span * self.quad_per_unit as f64).ceil() as usize;
        subs = subs.max(self.quad_min_subs);
        if subs % 2 == 1 {
            subs += 1;
        }
        let h = (to - from) / T::from_usize_lossy(subs);
        let mut acc = f(from) + f(to);
        let two = T::c(2.0);
        let four = T::c(4.0);
        for k in 1..subs {
            let t = from + h * T::from_usize_lossy(k);
            acc = acc + if k % 2 == 1 { four * f(t) } else { two * f(t) };
        }
        acc * h / T::c(3.0)
    }

    /// `(per-unit density, minimum subintervals)` of the h-quadrature.
    pub fn quadrature_rule(&self) -> (usize, usize) {
        (self.quad_per_unit, self.quad_min_subs)
    }

    /// `∫_from^to h_r(x,y) dr`.
    pub fn integral_h(&self, from: T, to: T, x: usize, y: usize) -> T {
        match &self.log_derivative {
            LogDerivative::Zero => T::zero(),
            LogDerivative::Global(f) => self.simpson(from, to, |r| f(r)),
            LogDerivative::Pairwise(f) => self.simpson(from, to, |r| f(r, x, y)),
        }
    }

    /// `∫_from^to H_r(x) dr`.
    pub fn integral_local_h(&self, from: T, to: T, x: usize) -> T {
        match &self.local_log_derivative {
            LocalLogDerivative::Zero => T::zero(),
            LocalLogDerivative::Global(f) => self.simpson(from, to, |r| f(r)),
            LocalLogDerivative::PerVertex(f) => self.simpson(from, to, |r| f(r, x)),
        }
    }

    /// Full distance matrix at time `t`.
    ///
    /// Adjacent pairs follow `d_t = d_{t0} e^{∫ h}` exactly; distances between
    /// non-adjacent vertices are geodesic (shortest path over the edge set).
    /// With `Zero` or `Global` h this coincides with scaling the base matrix.
    pub fn distance_at(&self, t: T) -> Result<Vec<T>> {
        self.check_time(t)?;
        match &self.log_derivative {
            LogDerivative::Zero => Ok(self.base_distance.clone()),
            LogDerivative::Global(f) => {
                let s = self.simpson(self.anchor, t, |r| f(r)).exp();
                Ok(self.base_distance.iter().map(|&d| d * s).collect())
            }
            LogDerivative::Pairwise(_) => {
                let n = self.n;
                let mut lengths = vec![T::infinity(); n * n];
                for &(x, y, _) in &self.edges {
                    let d = self.edge_distance_at(t, x, y)?;
                    lengths[x * n + y] = d;
                    lengths[y * n + x] = d;
                }
                shortest_paths(n, &lengths)
            }
        }
    }

    /// Distance at time `t` restricted to one adjacent pair.
    pub fn edge_distance_at(&self, t: T, x: usize, y: usize) -> Result<T> {
        self.check_time(t)?;
        let base = self.base_distance[x * self.n + y];
        let d = base * self.integral_h(self.anchor, t, x, y).exp();
        if d <= T::zero() || !d.is_finite() {
            return Err(Error::DegenerateMetric(format!(
                "d_t({x},{y}) = {} at t = {}",
                d.to_f64_lossy(),
                t.to_f64_lossy()
            )));
        }
        Ok(d)
    }

    /// Vertex measure `m_t = e^{-f_t} m` (not normalized).
    pub fn measure_at(&self, t: T) -> Result<Measure<T>> {
        self.check_time(t)?;
        let masses = (0..self.n)
            .map(|x| (-(self.weight)(t, x)).exp() * self.base_measure[x])
            .collect();
        Measure::new(masses)
    }

    /// Edge conductances at time `t`, aligned with [`Self::edges`].
    pub fn conductance_at(&self, t: T) -> Result<Vec<T>> {
        self.check_time(t)?;
        let half = T::c(0.5);
        self.edges
            .iter()
            .map(|&(x, y, a)| {
                let d = self.edge_distance_at(t, x, y)?;
                let w = (-half * ((self.weight)(t, x) + (self.weight)(t, y))).exp();
                Ok(a * w / (d * d))
            })
            .collect()
    }

    /// Dense symmetric conductance matrix (zero off the edge support).
    pub fn conductance_matrix_at(&self, t: T) -> Result<Vec<T>> {
        let c = self.conductance_at(t)?;
        let mut m = vec![T::zero(); self.n * self.n];
        for (&(x, y, _), &cv) in self.edges.iter().zip(&c) {
            m[x * self.n + y] = cv;
            m[y * self.n + x] = cv;
        }
        Ok(m)
    }

    /// True when the edge set is the path `0-1-2-...-n-1`, so the heat
    /// stepper can use tridiagonal solves.
    pub fn is_path_graph(&self) -> bool {
        self.edges.len() == self.n - 1
            && self.edges.iter().all(|&(x, y, _)| y == x + 1)
    }

    /// Scaled 1D coordinates at time `t` when the space is a grid whose
    /// metric evolves by a global factor. Transport solvers use this to take
    /// the monotone-coupling fast path.
    pub fn line_coordinates_at(&self, t: T) -> Result<Option<Vec<T>>> {
        let Some(pos) = &self.positions else { return Ok(None) };
        let scale = match &self.log_derivative {
            LogDerivative::Zero => T::one(),
            LogDerivative::Global(f) => {
                self.check_time(t)?;
                self.simpson(self.anchor, t, |r| f(r)).exp()
            }
            LogDerivative::Pairwise(_) => return Ok(None),
        };
        Ok(Some(pos.iter().map(|&p| p * scale).collect()))
    }

    /// Vertices farther than `depth` hops from every degree-one vertex.
    pub fn interior_mask(&self, depth: usize) -> Vec<bool> {
        let mut deg = vec![0usize; self.n];
        for &(x, y, _) in &self.edges {
            deg[x] += 1;
            deg[y] += 1;
        }
        let mut dist = vec![usize::MAX; self.n];
        let mut queue: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
        for v in 0..self.n {
            if deg[v] <= 1 {
                dist[v] = 0;
                queue.push_back(v);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &(x, y, _) in &self.edges {
                for (a, b) in [(x, y), (y, x)] {
                    if a == v && dist[b] == usize::MAX {
                        dist[b] = dist[v] + 1;
                        queue.push_back(b);
                    }
                }
            }
        }
        dist.iter().map(|&d| d > depth).collect()
    }

    /// Samples the standing assumptions over `times × pairs` and compares
    /// against the declared constants `C` (weight bounds) and `L`
    /// (time Lipschitz / log-Lipschitz bounds).
    pub fn check_assumptions(
        &self,
        c_bound: T,
        l_bound: T,
        times: &[T],
        pairs: &[(usize, usize)],
    ) -> Result<AssumptionReport<T>> {
        if times.is_empty() {
            return Err(Error::InvalidInput("empty sample grid".into()));
        }
        for &t in times {
            self.check_time(t)?;
        }
        let pairs: Vec<(usize, usize)> = if pairs.is_empty() {
            self.edges.iter().map(|&(x, y, _)| (x, y)).collect()
        } else {
            pairs.to_vec()
        };

        let mut f_bound = T::zero();
        let mut f_lip_space = T::zero();
        let mut f_lip_time = T::zero();
        let mut d_log_lip = T::zero();
        let mut h_bound = T::zero();

        for &t in times {
            for x in 0..self.n {
                f_bound = f_bound.max((self.weight)(t, x).abs());
            }
            let d = self.distance_at(t)?;
            for &(x, y) in &pairs {
                let dxy = d[x * self.n + y];
                if dxy > T::zero() {
                    let df = ((self.weight)(t, x) - (self.weight)(t, y)).abs();
                    f_lip_space = f_lip_space.max(df / dxy);
                }
                h_bound = h_bound.max(self.log_derivative.eval(t, x, y).abs());
            }
        }
        for w in times.windows(2) {
            let (s, t) = (w[0], w[1]);
            let dt = (t - s).abs();
            if dt == T::zero() {
                continue;
            }
            for x in 0..self.n {
                let df = ((self.weight)(t, x) - (self.weight)(s, x)).abs();
                f_lip_time = f_lip_time.max(df / dt);
            }
            let ds = self.distance_at(s)?;
            let dtm = self.distance_at(t)?;
            for &(x, y) in &pairs {
                let (a, b) = (ds[x * self.n + y], dtm[x * self.n + y]);
                if a > T::zero() && b > T::zero() {
                    d_log_lip = d_log_lip.max((b / a).ln().abs() / dt);
                }
            }
        }

        let pass_f_bound = f_bound <= c_bound;
        let pass_f_lip_space = f_lip_space <= c_bound;
        let pass_f_lip_time = f_lip_time <= l_bound;
        let pass_d_log_lip = d_log_lip <= l_bound;
        let pass_h_bound = h_bound <= self.h_bound;
        Ok(AssumptionReport {
            f_bound,
            f_lip_space,
            f_lip_time,
            d_log_lip,
            h_bound,
            pass_f_bound,
            pass_f_lip_space,
            pass_f_lip_time,
            pass_d_log_lip,
            pass_h_bound,
            pass: pass_f_bound
                && pass_f_lip_space
                && pass_f_lip_time
                && pass_d_log_lip
                && pass_h_bound,
        })
    }
}

/// All-pairs shortest paths (Floyd-Warshall) over a dense length matrix with
/// `inf` marking absent edges.
fn shortest_paths<T: Scalar>(n: usize, lengths: &[T]) -> Result<Vec<T>> {
    let mut d = lengths.to_vec();
    for i in 0..n {
        d[i * n + i] = T::zero();
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            if !dik.is_finite() {
                continue;
            }
            for j in 0..n {
                let cand = dik + d[k * n + j];
                if cand < d[i * n + j] {
                    d[i * n + j] = cand;
                }
            }
        }
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("distance matrix not connected".into()));
    }
    Ok(d)
}

/// Convenience constructor used throughout: grid with explicit evaluators.
///
/// `weight(t, index, position)` is the weight `f`; `h` and `big_h` follow
/// the declared-structure enums. Horizon defaults to `(0, 1)`.
pub fn make_grid_space<T: Scalar>(
    interval: (T, T),
    n: usize,
    weight: impl Fn(T, usize, T) -> T + Send + Sync + 'static,
    weight_static: bool,
    h: LogDerivative<T>,
    big_h: LocalLogDerivative<T>,
    h_bound: T,
) -> Result<DynamicSpace<T>> {
    DynamicSpace::grid(
        interval,
        n,
        weight,
        weight_static,
        h,
        big_h,
        (T::zero(), T::one()),
        h_bound,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_grid(n: usize) -> DynamicSpace<f64> {
        make_grid_space::<f64>(
            (-1.0, 1.0),
            n,
            |_, _, _| 0.0,
            true,
            LogDerivative::Zero,
            LocalLogDerivative::Zero,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn grid_three_points() {
        let s = flat_grid(3);
        assert_eq!(s.len(), 3);
        let d = s.distance_at(0.5).unwrap();
        assert_eq!(d[2], 2.0);
        assert_eq!(d[1], 1.0);
        let pos = s.positions().unwrap();
        assert_eq!(pos, &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn two_point_space_has_unit_distance_and_conductance() {
        let s = make_grid_space::<f64>(
            (0.0, 1.0),
            2,
            |_, _, _| 0.0,
            true,
            LogDerivative::Zero,
            LocalLogDerivative::Zero,
            0.0,
        )
        .unwrap();
        let d = s.distance_at(0.5).unwrap();
        assert_eq!(d[1], 1.0);
        let c = s.conductance_at(0.5).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15);
        assert_eq!(s.base_measure(), &[1.0, 1.0]);
    }

    #[test]
    fn grid_spacing_arithmetic() {
        let s = make_grid_space::<f64>(
            (-4.0, 4.0),
            201,
            |_, _, _| 0.0,
            true,
            LogDerivative::Zero,
            LocalLogDerivative::Zero,
            0.0,
        )
        .unwrap();
        assert!((s.grid_spacing().unwrap() - 0.04).abs() < 1e-15);
    }

    #[test]
    fn rejects_tiny_grid() {
        let r = make_grid_space::<f64>(
            (0.0, 1.0),
            1,
            |_, _, _| 0.0,
            true,
            LogDerivative::<f64>::Zero,
            LocalLogDerivative::Zero,
            0.0,
        );
        assert!(matches!(r, Err(Error::InvalidSize(_))));
    }

    #[test]
    fn rejects_non_finite_weight() {
        let r = make_grid_space(
            (0.0, 1.0),
            4,
            |_, _, p: f64| 1.0 / (p - p),
            true,
            LogDerivative::Zero,
            LocalLogDerivative::Zero,
            0.0,
        );
        assert!(matches!(r, Err(Error::InvalidEvaluator(_))));
    }

    #[test]
    fn zero_log_derivative_keeps_distance() {
        let s = flat_grid(5);
        let d1 = s.distance_at(0.1).unwrap();
        let d2 = s.distance_at(0.9).unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn constant_h_gives_exponential_scaling() {
        let c = 0.3f64;
        let s = make_grid_space::<f64>(
            (-1.0, 1.0),
            5,
            |_, _, _| 0.0,
            true,
            LogDerivative::Global(Arc::new(move |_| c)),
            LocalLogDerivative::Global(Arc::new(move |_| c)),
            c,
        )
        .unwrap();
        let t = 0.7;
        let d = s.distance_at(t).unwrap();
        let expect = 2.0 * (c * t).exp();
        assert!((d[4] - expect).abs() < 1e-12, "{d:?}");
    }

    #[test]
    fn measure_with_constant_weight_halves() {
        let s = make_grid_space::<f64>(
            (0.0, 1.0),
            3,
            |_, _, _| (2.0f64).ln(),
            true,
            LogDerivative::Zero,
            LocalLogDerivative::Zero,
            0.0,
        )
        .unwrap();
        let m = s.measure_at(0.5).unwrap();
        for (&got, &base) in m.masses.iter().zip(s.base_measure()) {
            assert!((got - base / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_weight_scales_conductance() {
        let s = make_grid_space::<f64>(
            (0.0, 1.0),
            4,
            |_, _, _| (4.0f64).ln(),
            true,
            LogDerivative::Zero,
            LocalLogDerivative::Zero,
            0.0,
        )
        .unwrap();
        let flat = make_grid_space::<f64>(
            (0.0, 1.0),
            4,
            |_, _, _| 0.0,
            true,
            LogDerivative::Zero,
            LocalLogDerivative::Zero,
            0.0,
        )
        .unwrap();
        let c = s.conductance_at(0.5).unwrap();
        let c0 = flat.conductance_at(0.5).unwrap();
        for (a, b) in c.iter().zip(&c0) {
            assert!((a - b / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn out_of_horizon_rejected() {
        let s = flat_grid(3);
        assert!(s.distance_at(1.5).is_err());
        assert!(s.measure_at(0.0).is_err());
    }

    #[test]
    fn assumption_report_static_space_passes() {
        let s = flat_grid(9);
        let times = [0.2, 0.4, 0.6, 0.8];
        let rep = s.check_assumptions(1.0, 1.0, &times, &[]).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.f_lip_time, 0.0);
        assert_eq!(rep.d_log_lip, 0.0);
    }

    #[test]
    fn assumption_report_flags_fast_weight() {
        // f(t,x) = t^2 has time-Lipschitz constant 2T on (0,T); a declared L
        // below that must fail.
        let s = make_grid_space::<f64>(
            (0.0, 1.0),
            5,
            |t, _, _| t * t,
            false,
            LogDerivative::Zero,
            LocalLogDerivative::Zero,
            0.0,
        )
        .unwrap();
        let times: Vec<f64> = (1..=20).map(|k| k as f64 * 0.045).collect();
        let rep = s.check_assumptions(2.0, 0.5, &times, &[]).unwrap();
        assert!(!rep.pass_f_lip_time);
        assert!(!rep.pass);
        let rep2 = s.check_assumptions(2.0, 2.0, &times, &[]).unwrap();
        assert!(rep2.pass);
    }

    #[test]
    fn graph_space_distances_are_geodesic() {
        // triangle with a long edge: shortest path wins
        let edges = [
            (0usize, 1usize, 1.0, 1.0),
            (1, 2, 1.0, 1.0),
            (0, 2, 1.0, 5.0),
        ];
        let s = DynamicSpace::<f64>::graph(
            3,
            &edges,
            vec![1.0, 1.0, 1.0],
            |_, _| 0.0,
            true,
            LogDerivative::Zero,
            LocalLogDerivative::Zero,
            (0.0, 1.0),
            0.0,
        )
        .unwrap();
        let d = s.distance_at(0.5).unwrap();
        assert_eq!(d[2], 2.0);
    }

    #[test]
    fn interior_mask_trims_grid_ends() {
        let s = flat_grid(7);
        let mask = s.interior_mask(2);
        assert_eq!(mask, vec![false, false, false, true, false, false, false]);
        let mask1 = s.interior_mask(1);
        assert_eq!(mask1, vec![false, false, true, true, true, false, false]);
    }
}
