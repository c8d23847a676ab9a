//! Constitutive stress laws `S(D) = 2U'(|D|²)D`, boundary friction laws
//! `s(u) = α g(|u|²) u`, and randomized/scan checkers for their hypotheses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Mat2 = [[f64; 2]; 2];

#[inline]
pub fn ddot(a: &Mat2, b: &Mat2) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

#[inline]
pub fn fro(a: &Mat2) -> f64 {
    ddot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StressModel {
    /// `U' = ν/2`, so `S = νD`.
    #[default]
    Linear,
    /// `U'(σ) = ν(1 + e^{-σ})/2`: shear thinning towards `νD/2`.
    ExpThinning,
    /// `U'(σ) = νσ`: cubic stress, violates linear growth.
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstitutiveLaw {
    pub model: StressModel,
    pub nu: f64,
    pub c1: f64,
    pub c2: f64,
    /// Bound on `|∂²U| + |∂³U|`.
    pub c_deriv: f64,
}

impl ConstitutiveLaw {
    /// Law with the constants this library declares for the model.
    pub fn new(model: StressModel, nu: f64) -> Self {
        let (c1, c2, c_deriv) = match model {
            StressModel::Linear => (nu, nu, nu),
            StressModel::ExpThinning => (0.55 * nu, 2.0 * nu, 6.0 * nu),
            StressModel::Quadratic => (nu, nu, nu),
        };
        Self { model, nu, c1, c2, c_deriv }
    }

    pub fn linear(nu: f64) -> Self {
        Self::new(StressModel::Linear, nu)
    }

    pub fn with_constants(mut self, c1: f64, c2: f64, c_deriv: f64) -> Self {
        self.c1 = c1;
        self.c2 = c2;
        self.c_deriv = c_deriv;
        self
    }

    pub fn is_linear(&self) -> bool {
        self.model == StressModel::Linear
    }

    /// `(U', U'', U''')` at `σ = |D|²`.
    pub fn potential_derivatives(&self, sigma: f64) -> (f64, f64, f64) {
        let nu = self.nu;
        match self.model {
            StressModel::Linear => (0.5 * nu, 0.0, 0.0),
            StressModel::ExpThinning => {
                let e = (-sigma).exp();
                (0.5 * nu * (1.0 + e), -0.5 * nu * e, 0.5 * nu * e)
            }
            StressModel::Quadratic => (nu * sigma, nu, 0.0),
        }
    }

    pub fn stress(&self, d: &Mat2) -> Mat2 {
        let (u1, _, _) = self.potential_derivatives(ddot(d, d));
        let k = 2.0 * u1;
        [[k * d[0][0], k * d[0][1]], [k * d[1][0], k * d[1][1]]]
    }

    /// `∂S(D)E = 2U'E + 4U''(D:E)D`
    pub fn stress_derivative(&self, d: &Mat2, e: &Mat2) -> Mat2 {
        let (u1, u2, _) = self.potential_derivatives(ddot(d, d));
        let de = ddot(d, e);
        let mut r = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                r[i][j] = 2.0 * u1 * e[i][j] + 4.0 * u2 * de * d[i][j];
            }
        }
        r
    }

    /// Operator norms of `∂²_D U` and `∂³_D U` at `D`.
    pub fn derivative_norms(&self, d: &Mat2) -> (f64, f64) {
        let s = ddot(d, d);
        let (u1, u2, u3) = self.potential_derivatives(s);
        // eigenvalues of 2U'I + 4U'' D⊗D are 2U' and 2U' + 4U''σ
        let second = (2.0 * u1).abs().max((2.0 * u1 + 4.0 * u2 * s).abs());
        let r = s.sqrt();
        // along the unit direction of D the third derivative is 12U''|D| + 8U'''|D|³;
        // transverse contractions are bounded by 4|U''||D|
        let third = (12.0 * u2 * r + 8.0 * u3 * r * s).abs().max(4.0 * u2.abs() * r);
        (second, third)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryModel {
    /// `s(u) = αu`
    #[default]
    Linear,
    /// `s(u) = αu(1 + tanh|u|²)`
    Tanh,
    /// `s(u) = αu|u|`
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryLaw {
    pub model: BoundaryModel,
    pub alpha: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub s_exp: f64,
}

impl BoundaryLaw {
    pub fn new(model: BoundaryModel, alpha: f64) -> Self {
        let (c3, c4, c5, s_exp) = match model {
            BoundaryModel::Linear => (1.0, alpha, 0.99, 2.0),
            BoundaryModel::Tanh => (1.0, 3.0 * alpha, 0.99, 2.0),
            BoundaryModel::Power => (0.5, 2.0 * alpha, 0.5, 3.0),
        };
        Self { model, alpha, c3, c4, c5, s_exp }
    }

    pub fn linear(alpha: f64) -> Self {
        Self::new(BoundaryModel::Linear, alpha)
    }

    pub fn is_linear(&self) -> bool {
        self.model == BoundaryModel::Linear
    }

    /// `(g, g', g'')` at `σ = |u|²`.
    fn profile(&self, sigma: f64) -> (f64, f64, f64) {
        match self.model {
            BoundaryModel::Linear => (1.0, 0.0, 0.0),
            BoundaryModel::Tanh => {
                let t = sigma.tanh();
                let sech2 = 1.0 - t * t;
                (1.0 + t, sech2, -2.0 * sech2 * t)
            }
            BoundaryModel::Power => {
                if sigma == 0.0 {
                    (0.0, 0.0, 0.0)
                } else {
                    let r = sigma.sqrt();
                    (r, 0.5 / r, -0.25 / (r * sigma))
                }
            }
        }
    }

    pub fn eval(&self, u: [f64; 2]) -> [f64; 2] {
        let (g, _, _) = self.profile(u[0] * u[0] + u[1] * u[1]);
        [self.alpha * g * u[0], self.alpha * g * u[1]]
    }

    /// `s'(u) = α[g I + 2g' u⊗u]`
    pub fn derivative(&self, u: [f64; 2]) -> Mat2 {
        let (g, g1, _) = self.profile(u[0] * u[0] + u[1] * u[1]);
        let a = self.alpha;
        [
            [a * (g + 2.0 * g1 * u[0] * u[0]), a * 2.0 * g1 * u[0] * u[1]],
            [a * 2.0 * g1 * u[1] * u[0], a * (g + 2.0 * g1 * u[1] * u[1])],
        ]
    }

    /// Frobenius norm of `s''(u)`.
    pub fn second_derivative_norm(&self, u: [f64; 2]) -> f64 {
        let (_, g1, g2) = self.profile(u[0] * u[0] + u[1] * u[1]);
        let mut acc = 0.0;
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let t = 2.0 * g1 * (d(i, j) * u[k] + d(i, k) * u[j] + d(j, k) * u[i])
                        + 4.0 * g2 * u[i] * u[j] * u[k];
                    acc += t * t;
                }
            }
        }
        self.alpha * acc.sqrt()
    }

    /// Weight `1 + |u|^{s-2} + |v|^{s-2}` for super-quadratic laws, 1 for `s = 2`.
    pub fn weight(&self, u: [f64; 2], v: [f64; 2]) -> f64 {
        if self.s_exp == 2.0 {
            1.0
        } else {
            let e = self.s_exp - 2.0;
            1.0 + u[0].hypot(u[1]).powf(e) + v[0].hypot(v[1]).powf(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstitutiveReport {
    /// min of `(S(D) − S(E)):(D − E) / |D − E|²`
    pub min_monotonicity: f64,
    /// min of `∂S(D)E:E / |E|²`
    pub min_tangent: f64,
    /// max of `|S(D)| / |D|`
    pub max_growth: f64,
    /// max of `|∂²U| + |∂³U|`
    pub max_derivative: f64,
    pub coercivity_margin: f64,
    pub growth_margin: f64,
    pub derivative_margin: f64,
    pub pass: bool,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryReport {
    /// min of `(s(u) − s(v))·(u − v) / (α w |u − v|²)`
    pub min_coercivity: f64,
    /// max of `|s(u) − s(v)| / (w |u − v|)`
    pub max_growth: f64,
    /// min of `s'(u)v·v / (α|v|²)`
    pub min_derivative: f64,
    pub max_first_derivative: f64,
    pub max_second_derivative: f64,
    pub c5_in_range: bool,
    pub pass: bool,
    pub violations: Vec<String>,
}

pub const SAMPLE_RADIUS: f64 = 1e3;

/// Relative slack absorbing rounding in the measured ratios.
const REL_TOL: f64 = 1e-10;

fn random_sym(rng: &mut ChaCha8Rng) -> Mat2 {
    let a: f64 = rng.random_range(-1.0..1.0);
    let b: f64 = rng.random_range(-1.0..1.0);
    let c: f64 = rng.random_range(-1.0..1.0);
    let m = [[a, b], [b, c]];
    let n = fro(&m).max(1e-300);
    // log-uniform magnitude in [1e-3, 1e3]
    let mag = 10f64.powf(rng.random_range(-3.0..=3.0));
    [[a / n * mag, b / n * mag], [b / n * mag, c / n * mag]]
}

fn scale(m: &Mat2, t: f64) -> Mat2 {
    [[m[0][0] * t, m[0][1] * t], [m[1][0] * t, m[1][1] * t]]
}

fn sub(a: &Mat2, b: &Mat2) -> Mat2 {
    [[a[0][0] - b[0][0], a[0][1] - b[0][1]], [a[1][0] - b[1][0], a[1][1] - b[1][1]]]
}

/// Radii used by the deterministic scans: a fine linear grid near the origin
/// and a geometric grid up to the sampling radius.
fn scan_radii() -> Vec<f64> {
    let mut r: Vec<f64> = (0..=4000).map(|i| (i as f64 * 1e-3).sqrt()).collect();
    r.extend((0..=600).map(|i| 10f64.powf(-3.0 + i as f64 * 0.01)));
    r
}

pub fn check_constitutive(law: &ConstitutiveLaw, trials: usize, seed: u64) -> ConstitutiveReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_mono = f64::INFINITY;
    let mut min_tan = f64::INFINITY;
    let mut max_growth: f64 = 0.0;
    let mut max_der: f64 = 0.0;
    let mut worst_mono = None;
    let mut worst_growth = None;

    let mut visit_point = |d: &Mat2, e: &Mat2, min_tan: &mut f64, max_growth: &mut f64, max_der: &mut f64| {
        let ne = fro(e);
        if ne > 0.0 {
            let t = ddot(&law.stress_derivative(d, e), e) / (ne * ne);
            *min_tan = min_tan.min(t);
        }
        let nd = fro(d);
        if nd > 0.0 {
            let g = fro(&law.stress(d)) / nd;
            if g > *max_growth {
                *max_growth = g;
                worst_growth = Some(*d);
            }
        }
        let (a, b) = law.derivative_norms(d);
        *max_der = max_der.max(a + b);
    };

    for _ in 0..trials.max(1) {
        let d = random_sym(&mut rng);
        let e = random_sym(&mut rng);
        let diff = sub(&d, &e);
        let nd = fro(&diff);
        if nd > 0.0 {
            let m = ddot(&sub(&law.stress(&d), &law.stress(&e)), &diff) / (nd * nd);
            if m < min_mono {
                min_mono = m;
                worst_mono = Some((d, e));
            }
        }
        visit_point(&d, &e, &mut min_tan, &mut max_growth, &mut max_der);
    }

    // radial scans along a traceless and an off-diagonal direction, with E ∥ D
    // and E ⟂ D
    let dirs: [Mat2; 2] = [
        [[std::f64::consts::FRAC_1_SQRT_2, 0.0], [0.0, -std::f64::consts::FRAC_1_SQRT_2]],
        [[0.0, 0.5], [0.5, 0.0]],
    ];
    let radii = scan_radii();
    for (k, dir) in dirs.iter().enumerate() {
        let other = &dirs[1 - k];
        for w in radii.windows(2) {
            let d = scale(dir, w[1]);
            visit_point(&d, dir, &mut min_tan, &mut max_growth, &mut max_der);
            visit_point(&d, other, &mut min_tan, &mut max_growth, &mut max_der);
            let e = scale(dir, w[0]);
            let diff = sub(&d, &e);
            let nd = fro(&diff);
            if nd > 0.0 {
                let m = ddot(&sub(&law.stress(&d), &law.stress(&e)), &diff) / (nd * nd);
                if m < min_mono {
                    min_mono = m;
                    worst_mono = Some((d, e));
                }
            }
        }
    }

    let coercivity = min_mono.min(min_tan);
    let coercivity_margin = coercivity - law.c1;
    let growth_margin = law.c2 - max_growth;
    let derivative_margin = law.c_deriv - max_der;
    let slack = |c: f64| REL_TOL * c.abs().max(f64::MIN_POSITIVE);
    let mut violations = Vec::new();
    if coercivity_margin < -slack(law.c1) {
        violations.push(format!(
            "coercivity: measured {coercivity:.6e} < declared c1 = {:.6e} (sample {:?})",
            law.c1, worst_mono
        ));
    }
    if growth_margin < -slack(law.c2) {
        violations.push(format!(
            "growth: measured {max_growth:.6e} > declared c2 = {:.6e} (sample {:?})",
            law.c2, worst_growth
        ));
    }
    if derivative_margin < -slack(law.c_deriv) {
        violations.push(format!("derivative bound: measured {max_der:.6e} > declared C = {:.6e}", law.c_deriv));
    }
    ConstitutiveReport {
        min_monotonicity: min_mono,
        min_tangent: min_tan,
        max_growth,
        max_derivative: max_der,
        coercivity_margin,
        growth_margin,
        derivative_margin,
        pass: violations.is_empty(),
        violations,
    }
}

fn random_vec(rng: &mut ChaCha8Rng) -> [f64; 2] {
    let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mag = 10f64.powf(rng.random_range(-3.0..=3.0));
    [mag * t.cos(), mag * t.sin()]
}

pub fn check_boundary_law(law: &BoundaryLaw, trials: usize, seed: u64) -> BoundaryReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_coer = f64::INFINITY;
    let mut max_growth: f64 = 0.0;
    let mut min_der = f64::INFINITY;
    let mut max_s1: f64 = 0.0;
    let mut max_s2: f64 = 0.0;
    let a = law.alpha;

    let mut pair = |u: [f64; 2], v: [f64; 2]| {
        let d = [u[0] - v[0], u[1] - v[1]];
        let nd2 = d[0] * d[0] + d[1] * d[1];
        if nd2 == 0.0 {
            return;
        }
        let (su, sv) = (law.eval(u), law.eval(v));
        let ds = [su[0] - sv[0], su[1] - sv[1]];
        let w = law.weight(u, v);
        min_coer = min_coer.min((ds[0] * d[0] + ds[1] * d[1]) / (a * w * nd2));
        max_growth = max_growth.max(ds[0].hypot(ds[1]) / (w * nd2.sqrt()));
    };
    let mut point = |u: [f64; 2], v: [f64; 2]| {
        let j = law.derivative(u);
        let nv2 = v[0] * v[0] + v[1] * v[1];
        if nv2 > 0.0 {
            let q = v[0] * (j[0][0] * v[0] + j[0][1] * v[1]) + v[1] * (j[1][0] * v[0] + j[1][1] * v[1]);
            min_der = min_der.min(q / (a * nv2));
        }
        max_s1 = max_s1.max(fro(&j));
        max_s2 = max_s2.max(law.second_derivative_norm(u));
    };

    for _ in 0..trials.max(1) {
        let u = random_vec(&mut rng);
        let v = random_vec(&mut rng);
        pair(u, v);
        point(u, v);
    }
    let radii = scan_radii();
    for w in radii.windows(2) {
        let e = [1.0, 0.0];
        let u = [w[1] * e[0], w[1] * e[1]];
        pair(u, [w[0], 0.0]);
        pair(u, [0.0, 0.0]);
        pair(u, [-w[1], 0.0]);
        point(u, e);
        point(u, [0.0, 1.0]);
    }

    let c5_in_range = law.c5 > 0.0 && law.c5 < 1.0;
    let mut violations = Vec::new();
    if min_coer < law.c3 * (1.0 - REL_TOL) {
        violations.push(format!("coercivity: measured {min_coer:.6e} < declared c3 = {:.6e}", law.c3));
    }
    if max_growth > law.c4 * (1.0 + REL_TOL) {
        violations.push(format!("growth: measured {max_growth:.6e} > declared c4 = {:.6e}", law.c4));
    }
    if min_der < law.c5 * (1.0 - REL_TOL) {
        violations.push(format!("derivative: measured {min_der:.6e} < declared c5 = {:.6e}", law.c5));
    }
    if !c5_in_range {
        violations.push(format!("declared c5 = {} outside (0, 1)", law.c5));
    }
    BoundaryReport {
        min_coercivity: min_coer,
        max_growth,
        min_derivative: min_der,
        max_first_derivative: max_s1,
        max_second_derivative: max_s2,
        c5_in_range,
        pass: violations.is_empty(),
        violations,
    }
}
