use crate::{Error, Result};

/// Tolerance on `|JS_before - JS_after|` for permutations of a finite support.
pub const DISCRETE_INVARIANCE_TOL: f64 = 1e-12;
/// Tolerance on `|JS_before - JS_after|` for gridded densities.
pub const GRIDDED_INVARIANCE_TOL: f64 = 1e-6;

/// Probabilities on `{0, .., n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub const SUM_TOL: f64 = 1e-12;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Distribution("empty support".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Distribution("probabilities must be finite and >= 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::Distribution(format!("probabilities sum to {total}")));
        }
        Ok(DiscreteDistribution { probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Distribution(format!("weights sum to {total}")));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Piecewise-constant density on cells `[edges[i], edges[i+1])`.
///
/// Cells need not be uniform; pushforwards through piecewise-linear maps
/// produce non-uniform cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedDensity {
    edges: Vec<f64>,
    density: Vec<f64>,
}

impl GriddedDensity {
    pub const MASS_TOL: f64 = 1e-9;

    pub fn new(edges: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if density.is_empty() || edges.len() != density.len() + 1 {
            return Err(Error::Distribution(format!(
                "{} edges for {} cells",
                edges.len(),
                density.len()
            )));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Distribution("edges must be finite and strictly increasing".into()));
        }
        if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Distribution("densities must be finite and >= 0".into()));
        }
        let g = GriddedDensity { edges, density };
        let mass = g.mass();
        if (mass - 1.0).abs() > Self::MASS_TOL {
            return Err(Error::Distribution(format!("density integrates to {mass}")));
        }
        Ok(g)
    }

    /// `n` equal cells on `[lo, hi]`.
    pub fn uniform_grid(lo: f64, hi: f64, density: Vec<f64>) -> Result<Self> {
        let n = density.len();
        if n == 0 || !(hi > lo) {
            return Err(Error::Distribution(format!("bad grid [{lo}, {hi}] with {n} cells")));
        }
        let edges = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        Self::new(edges, density)
    }

    /// Samples `f` at cell midpoints and normalizes by the midpoint rule.
    pub fn from_fn(lo: f64, hi: f64, cells: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let width = (hi - lo) / cells as f64;
        let raw: Vec<f64> = (0..cells).map(|i| f(lo + (i as f64 + 0.5) * width)).collect();
        let mass: f64 = raw.iter().sum::<f64>() * width;
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::Distribution(format!("unnormalizable density (mass {mass})")));
        }
        Self::uniform_grid(lo, hi, raw.iter().map(|v| v / mass).collect())
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| w[1] - w[0])
    }

    /// Midpoint-rule integral of the density.
    pub fn mass(&self) -> f64 {
        self.widths().zip(&self.density).map(|(w, d)| w * d).sum()
    }

    fn same_grid(&self, other: &GriddedDensity) -> bool {
        self.edges.len() == other.edges.len()
            && self
                .edges
                .iter()
                .zip(&other.edges)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())))
    }

    /// Splits cells at the given interior points; the density is unchanged.
    fn refined(&self, cuts: &[f64]) -> GriddedDensity {
        let mut edges = Vec::with_capacity(self.edges.len() + cuts.len());
        let mut density = Vec::with_capacity(self.density.len() + cuts.len());
        for (i, d) in self.density.iter().enumerate() {
            let (a, b) = (self.edges[i], self.edges[i + 1]);
            edges.push(a);
            density.push(*d);
            for &x in cuts.iter().filter(|&&x| x > a && x < b) {
                edges.push(x);
                density.push(*d);
            }
        }
        edges.push(self.hi());
        GriddedDensity { edges, density }
    }
}

/// Strictly increasing continuous piecewise-linear map through `knots`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearMap {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinearMap {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::Distribution("need at least two matching knots".into()));
        }
        let increasing = |v: &[f64]| v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&xs) || !increasing(&ys) {
            return Err(Error::Distribution("knots must be strictly increasing (all slopes > 0)".into()));
        }
        Ok(PiecewiseLinearMap { xs, ys })
    }

    /// Starts at `(x0, y0)` and follows `slopes` over consecutive breakpoints.
    pub fn from_slopes(breakpoints: Vec<f64>, y0: f64, slopes: &[f64]) -> Result<Self> {
        if breakpoints.len() != slopes.len() + 1 {
            return Err(Error::Distribution("one slope per segment".into()));
        }
        let mut ys = vec![y0];
        for (w, s) in breakpoints.windows(2).zip(slopes) {
            ys.push(ys[ys.len() - 1] + s * (w[1] - w[0]));
        }
        Self::new(breakpoints, ys)
    }

    /// `x -> scale * x + offset` on `[lo, hi]`.
    pub fn affine(lo: f64, hi: f64, scale: f64, offset: f64) -> Result<Self> {
        Self::new(vec![lo, hi], vec![scale * lo + offset, scale * hi + offset])
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
            .collect()
    }

    fn segment(&self, x: f64) -> usize {
        let k = self.xs.partition_point(|&b| b <= x);
        k.clamp(1, self.xs.len() - 1) - 1
    }

    pub fn apply(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let t = (x - self.xs[k]) / (self.xs[k + 1] - self.xs[k]);
        self.ys[k] + t * (self.ys[k + 1] - self.ys[k])
    }

    pub fn slope_at(&self, x: f64) -> f64 {
        let k = self.segment(x);
        (self.ys[k + 1] - self.ys[k]) / (self.xs[k + 1] - self.xs[k])
    }
}

/// An invertible transformation of a support.
#[derive(Debug, Clone, PartialEq)]
pub enum InvertibleMap {
    /// `i -> perm[i]`, a bijection of `{0, .., n-1}`.
    Permutation(Vec<usize>),
    PiecewiseLinear(PiecewiseLinearMap),
}

impl InvertibleMap {
    pub fn permutation(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Distribution("not a bijection".into()));
            }
        }
        Ok(InvertibleMap::Permutation(perm))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    Discrete(DiscreteDistribution),
    Gridded(GriddedDensity),
}

impl From<DiscreteDistribution> for Density {
    fn from(d: DiscreteDistribution) -> Self {
        Density::Discrete(d)
    }
}

impl From<GriddedDensity> for Density {
    fn from(g: GriddedDensity) -> Self {
        Density::Gridded(g)
    }
}

fn kl_half_terms(p: f64, q: f64) -> f64 {
    let m = 0.5 * (p + q);
    let term = |x: f64| if x > 0.0 { x * (x / m).ln() } else { 0.0 };
    0.5 * (term(p) + term(q))
}

/// `JS(p, q) = KL(p || m) / 2 + KL(q || m) / 2` with `m = (p + q) / 2`, in
/// nats. Gridded densities are integrated cell by cell and must share a grid.
pub fn js_divergence(p: &Density, q: &Density) -> Result<f64> {
    let js = match (p, q) {
        (Density::Discrete(p), Density::Discrete(q)) => {
            if p.len() != q.len() {
                return Err(Error::Distribution(format!(
                    "supports differ ({} vs {})",
                    p.len(),
                    q.len()
                )));
            }
            p.probs.iter().zip(&q.probs).map(|(&a, &b)| kl_half_terms(a, b)).sum::<f64>()
        }
        (Density::Gridded(p), Density::Gridded(q)) => {
            if !p.same_grid(q) {
                return Err(Error::Distribution("grids differ".into()));
            }
            p.widths()
                .zip(p.density.iter().zip(&q.density))
                .map(|(w, (&a, &b))| w * kl_half_terms(a, b))
                .sum::<f64>()
        }
        _ => return Err(Error::Distribution("cannot compare discrete and gridded densities".into())),
    };
    Ok(js.clamp(0.0, std::f64::consts::LN_2))
}

/// Distribution of `T(x)` for `x ~ p`.
///
/// Discrete: probabilities move with the permutation. Gridded: cells are split
/// at the map's breakpoints, mapped exactly, and the density divided by the
/// local slope, so `p_T(t) = p(T^-1 t) / T'(T^-1 t)`.
pub fn pushforward(p: &Density, map: &InvertibleMap) -> Result<Density> {
    match (p, map) {
        (Density::Discrete(d), InvertibleMap::Permutation(perm)) => {
            if perm.len() != d.len() {
                return Err(Error::Distribution("permutation size does not match support".into()));
            }
            let mut out = vec![0.0; d.len()];
            for (i, &target) in perm.iter().enumerate() {
                out[target] = d.probs[i];
            }
            Ok(Density::Discrete(DiscreteDistribution { probs: out }))
        }
        (Density::Gridded(g), InvertibleMap::PiecewiseLinear(t)) => {
            let (a, b) = t.domain();
            if a > g.lo() || b < g.hi() {
                return Err(Error::Distribution(format!(
                    "map domain [{a}, {b}] does not cover [{}, {}]",
                    g.lo(),
                    g.hi()
                )));
            }
            let fine = g.refined(&t.xs[1..t.xs.len() - 1]);
            let edges: Vec<f64> = fine.edges.iter().map(|&x| t.apply(x)).collect();
            let density = fine
                .edges
                .windows(2)
                .zip(&fine.density)
                .map(|(w, d)| d / t.slope_at(0.5 * (w[0] + w[1])))
                .collect();
            Ok(Density::Gridded(GriddedDensity::new(edges, density)?))
        }
        _ => Err(Error::Distribution("map is not compatible with this density".into())),
    }
}

/// Pushforward through an arbitrary function of a finite support; masses that
/// land on the same target add up.
pub fn pushforward_many_to_one(p: &DiscreteDistribution, targets: &[usize], out_len: usize) -> Result<DiscreteDistribution> {
    if targets.len() != p.len() || targets.iter().any(|&t| t >= out_len) {
        return Err(Error::Distribution("map does not fit the support".into()));
    }
    let mut out = vec![0.0; out_len];
    for (&t, &pi) in targets.iter().zip(&p.probs) {
        out[t] += pi;
    }
    Ok(DiscreteDistribution { probs: out })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct InvarianceReport {
    pub js_before: f64,
    pub js_after: f64,
    pub abs_diff: f64,
    pub tolerance: f64,
    /// `abs_diff <= tolerance`.
    pub pass: bool,
}

impl InvarianceReport {
    fn new(js_before: f64, js_after: f64, tolerance: f64) -> Self {
        let abs_diff = (js_before - js_after).abs();
        InvarianceReport {
            js_before,
            js_after,
            abs_diff,
            tolerance,
            pass: abs_diff <= tolerance,
        }
    }
}

/// Compares `JS(p, q)` with `JS(T p, T q)`.
pub fn verify_js_invariance(p: &Density, q: &Density, map: &InvertibleMap) -> Result<InvarianceReport> {
    let before = js_divergence(p, q)?;
    let after = js_divergence(&pushforward(p, map)?, &pushforward(q, map)?)?;
    let tol = match p {
        Density::Discrete(_) => DISCRETE_INVARIANCE_TOL,
        Density::Gridded(_) => GRIDDED_INVARIANCE_TOL,
    };
    Ok(InvarianceReport::new(before, after, tol))
}

/// Same comparison for a map that may merge support points. A failing report
/// is the expected outcome for a genuinely many-to-one map.
pub fn verify_js_invariance_many_to_one(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    targets: &[usize],
    out_len: usize,
) -> Result<InvarianceReport> {
    let before = js_divergence(&p.clone().into(), &q.clone().into())?;
    let tp = pushforward_many_to_one(p, targets, out_len)?;
    let tq = pushforward_many_to_one(q, targets, out_len)?;
    let after = js_divergence(&tp.into(), &tq.into())?;
    Ok(InvarianceReport::new(before, after, DISCRETE_INVARIANCE_TOL))
}
