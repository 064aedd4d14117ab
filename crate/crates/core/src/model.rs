//! SDE problems `dx = μ(t, x) dt + ρ(t, x) dw` and the built-in test cases.
//!
//! Coefficients are evaluated into caller-provided buffers so the integrators
//! can run allocation-free. Layouts are row-major:
//! diffusion `ρ[i][k]` lives at `i * m + k`, the Milstein tensor
//! `Λ[i][k][l] = Σ_r ∂_{x_r} ρ^{ik} ρ^{rl}` at `(i * m + k) * m + l`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdeError};

/// Declared structure of the diffusion matrix. Decides which iterated
/// integrals the Milstein correction may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseStructure {
    Scalar,
    Diagonal,
    Commutative,
    General,
}

impl NoiseStructure {
    pub fn name(self) -> &'static str {
        match self {
            NoiseStructure::Scalar => "scalar",
            NoiseStructure::Diagonal => "diagonal",
            NoiseStructure::Commutative => "commutative",
            NoiseStructure::General => "general",
        }
    }
}

/// Coefficient functions of an SDE.
///
/// The drift is delivered as two summands whose sum is `μ`. Tamed schemes
/// divide only the first one by the taming denominator; the second is
/// applied as is. The generic convention is to put the whole drift in the
/// tamed summand.
pub trait Coefficients: Send + Sync + fmt::Debug {
    fn drift_parts(&self, t: f64, x: &[f64], tamed: &mut [f64], untamed: &mut [f64]);

    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]);

    fn milstein_tensor(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// Norm entering the taming denominator `1 + |x|^{2ξ} / n`, returned squared.
    fn taming_norm_sq(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    /// Closed-form `x_T` as a function of the terminal Brownian value.
    fn exact_terminal(&self, _x0: &[f64], _horizon: f64, _w_terminal: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Clone)]
pub struct SdeProblem {
    name: String,
    dim: usize,
    noise_dim: usize,
    horizon: f64,
    initial_state: Vec<f64>,
    noise_structure: NoiseStructure,
    xi: f64,
    beta: f64,
    coefficients: Arc<dyn Coefficients>,
}

impl fmt::Debug for SdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("horizon", &self.horizon)
            .field("initial_state", &self.initial_state)
            .field("noise_structure", &self.noise_structure)
            .field("xi", &self.xi)
            .field("beta", &self.beta)
            .finish()
    }
}

impl SdeProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        noise_dim: usize,
        horizon: f64,
        initial_state: Vec<f64>,
        noise_structure: NoiseStructure,
        xi: f64,
        beta: f64,
        coefficients: Arc<dyn Coefficients>,
    ) -> Result<Self> {
        let dim = initial_state.len();
        if dim == 0 || noise_dim == 0 {
            return Err(SdeError::InvalidParameter("state and noise dimensions must be positive".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SdeError::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        if initial_state.iter().any(|v| !v.is_finite()) {
            return Err(SdeError::InvalidParameter("initial state must be finite".into()));
        }
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(SdeError::InvalidParameter(format!("xi must be nonnegative, got {xi}")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(SdeError::InvalidParameter(format!("beta must lie in (0, 1], got {beta}")));
        }
        if noise_structure == NoiseStructure::Scalar && noise_dim != 1 {
            return Err(SdeError::InvalidParameter("scalar noise requires m = 1".into()));
        }
        Ok(Self {
            name: name.into(),
            dim,
            noise_dim,
            horizon,
            initial_state,
            noise_structure,
            xi,
            beta,
            coefficients,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }
    pub fn noise_structure(&self) -> NoiseStructure {
        self.noise_structure
    }
    pub fn xi(&self) -> f64 {
        self.xi
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn coefficients(&self) -> &dyn Coefficients {
        self.coefficients.as_ref()
    }

    /// Strong rate predicted for the randomized-tamed Milstein scheme.
    pub fn predicted_rate(&self) -> f64 {
        (self.beta + 0.5).min(1.0)
    }

    fn check_args(&self, t: f64, x: &[f64]) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(SdeError::TimeOutOfDomain { t, horizon: self.horizon });
        }
        if x.len() != self.dim {
            return Err(SdeError::DimensionMismatch(format!("state has length {}, expected {}", x.len(), self.dim)));
        }
        Ok(())
    }

    pub fn eval_drift(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_args(t, x)?;
        let mut tamed = vec![0.0; self.dim];
        let mut untamed = vec![0.0; self.dim];
        self.coefficients.drift_parts(t, x, &mut tamed, &mut untamed);
        let out: Vec<f64> = tamed.iter().zip(&untamed).map(|(a, b)| a + b).collect();
        finite(out, "drift", t)
    }

    /// Row-major `d × m` matrix.
    pub fn eval_diffusion(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_args(t, x)?;
        let mut out = vec![0.0; self.dim * self.noise_dim];
        self.coefficients.diffusion(t, x, &mut out);
        finite(out, "diffusion", t)
    }

    /// Flat `d × m × m` tensor, see the module docs for the layout.
    pub fn eval_milstein_tensor(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_args(t, x)?;
        let mut out = vec![0.0; self.dim * self.noise_dim * self.noise_dim];
        self.coefficients.milstein_tensor(t, x, &mut out);
        finite(out, "milstein tensor", t)
    }

    pub fn tensor_index(&self, i: usize, k: usize, l: usize) -> usize {
        (i * self.noise_dim + k) * self.noise_dim + l
    }

    pub fn exact_terminal(&self, w_terminal: &[f64]) -> Option<Vec<f64>> {
        self.coefficients.exact_terminal(&self.initial_state, self.horizon, w_terminal)
    }

    pub fn has_exact_solution(&self) -> bool {
        self.exact_terminal(&vec![0.0; self.noise_dim]).is_some()
    }
}

fn finite(v: Vec<f64>, what: &'static str, t: f64) -> Result<Vec<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(SdeError::NonFinite { what, t })
    }
}

// ---------------------------------------------------------------------------
// Built-in problems

/// Time profile of the external current `I_ext(t) = amplitude · (1 − h(t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingShape {
    /// `h(t) = t^β`; Hölder-β only at `t = 0`.
    Power,
    /// `h(t) = ½ Σ_{k<K} 2^{−kβ} (1 − cos(2^k π t))`, a dyadic Weierstrass
    /// sum that is Hölder-β at every point. `h(0) = 0`, `h(1) = 1`.
    Weierstrass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forcing {
    pub amplitude: f64,
    pub beta: f64,
    pub shape: ForcingShape,
    pub terms: u32,
}

impl Forcing {
    pub fn eval(&self, t: f64) -> f64 {
        let h = match self.shape {
            ForcingShape::Power => {
                if self.beta == 0.5 {
                    t.sqrt()
                } else if self.beta == 1.0 {
                    t
                } else {
                    t.powf(self.beta)
                }
            }
            ForcingShape::Weierstrass => {
                let decay = 2f64.powf(-self.beta);
                let mut weight = 1.0;
                let mut scaled = t;
                let mut acc = 0.0;
                for _ in 0..self.terms {
                    // scaled = 2^k t exactly; reduce mod 2 before multiplying by π
                    let phase = scaled.rem_euclid(2.0);
                    acc += weight * (1.0 - (PI * phase).cos());
                    weight *= decay;
                    scaled *= 2.0;
                }
                0.5 * acc
            }
        };
        self.amplitude * (1.0 - h)
    }
}

/// FitzHugh–Nagumo with multiplicative noise on the membrane potential:
///
/// ```text
/// dV = (V − V³/3 − R + I_ext(t)) dt + σ V dw
/// dR = α (V + γ − λ R) dt
/// ```
///
/// Only `V − V³/3` is tamed, and the taming norm is `|V|`.
#[derive(Debug, Clone)]
struct FitzHughNagumo {
    sigma: f64,
    alpha: f64,
    gamma: f64,
    lambda: f64,
    forcing: Forcing,
}

impl Coefficients for FitzHughNagumo {
    fn drift_parts(&self, t: f64, x: &[f64], tamed: &mut [f64], untamed: &mut [f64]) {
        let (v, r) = (x[0], x[1]);
        tamed[0] = v - v * v * v / 3.0;
        tamed[1] = 0.0;
        untamed[0] = -r + self.forcing.eval(t);
        untamed[1] = self.alpha * (v + self.gamma - self.lambda * r);
    }

    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * x[0];
        out[1] = 0.0;
    }

    fn milstein_tensor(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * self.sigma * x[0];
        out[1] = 0.0;
    }

    fn taming_norm_sq(&self, x: &[f64]) -> f64 {
        x[0] * x[0]
    }
}

/// `dx = a x dt + σ x dw`.
#[derive(Debug, Clone)]
struct GeometricBrownian {
    a: f64,
    sigma: f64,
}

impl Coefficients for GeometricBrownian {
    fn drift_parts(&self, _t: f64, x: &[f64], tamed: &mut [f64], untamed: &mut [f64]) {
        tamed[0] = self.a * x[0];
        untamed[0] = 0.0;
    }

    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * x[0];
    }

    fn milstein_tensor(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * self.sigma * x[0];
    }

    fn exact_terminal(&self, x0: &[f64], horizon: f64, w_terminal: &[f64]) -> Option<Vec<f64>> {
        let s = self.sigma;
        Some(vec![x0[0] * ((self.a - 0.5 * s * s) * horizon + s * w_terminal[0]).exp()])
    }
}

/// `dx = (x − x³) dt + s dw`, the untamed-Euler blow-up example.
#[derive(Debug, Clone)]
struct Cubic {
    noise: f64,
}

impl Coefficients for Cubic {
    fn drift_parts(&self, _t: f64, x: &[f64], tamed: &mut [f64], untamed: &mut [f64]) {
        tamed[0] = x[0] - x[0] * x[0] * x[0];
        untamed[0] = 0.0;
    }

    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = self.noise;
    }

    fn milstein_tensor(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
}

#[derive(Debug, Clone)]
struct Zero;

impl Coefficients for Zero {
    fn drift_parts(&self, _t: f64, _x: &[f64], tamed: &mut [f64], untamed: &mut [f64]) {
        tamed.fill(0.0);
        untamed.fill(0.0);
    }

    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn milstein_tensor(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FhnParams {
    pub horizon: f64,
    pub v0: f64,
    pub r0: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// Peak of the external current.
    pub amplitude: f64,
}

impl Default for FhnParams {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            v0: 2.0,
            r0: -1.0,
            sigma: 0.001,
            alpha: 0.8,
            gamma: 0.7,
            lambda: 0.8,
            amplitude: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoughParams {
    pub horizon: f64,
    pub v0: f64,
    pub r0: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub amplitude: f64,
    pub beta: f64,
    pub shape: ForcingShape,
    /// Number of Weierstrass terms; ignored for the power shape.
    pub terms: u32,
}

impl Default for RoughParams {
    fn default() -> Self {
        let f = FhnParams::default();
        Self {
            horizon: f.horizon,
            v0: f.v0,
            r0: f.r0,
            sigma: f.sigma,
            alpha: f.alpha,
            gamma: f.gamma,
            lambda: f.lambda,
            amplitude: 1.0,
            beta: 0.25,
            shape: ForcingShape::Weierstrass,
            terms: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbmParams {
    pub a: f64,
    pub sigma: f64,
    pub x0: f64,
    pub horizon: f64,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self { a: 0.5, sigma: 0.5, x0: 1.0, horizon: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CubicParams {
    pub x0: f64,
    pub noise: f64,
    pub horizon: f64,
}

impl Default for CubicParams {
    fn default() -> Self {
        Self { x0: 2.0, noise: 1.0, horizon: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZeroParams {
    pub initial_state: Vec<f64>,
    pub noise_dim: usize,
    pub horizon: f64,
    /// Declared noise structure; defaults to scalar for `m = 1`, diagonal otherwise.
    pub structure: Option<NoiseStructure>,
}

impl Default for ZeroParams {
    fn default() -> Self {
        Self { initial_state: vec![1.0], noise_dim: 1, horizon: 1.0, structure: None }
    }
}

/// Built-in problem id together with its parameter record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", content = "params", rename_all = "snake_case")]
pub enum Builtin {
    FitzHughNagumo(FhnParams),
    GeometricBrownian(GbmParams),
    RoughDrift(RoughParams),
    Cubic(CubicParams),
    Zero(ZeroParams),
}

impl Builtin {
    pub fn id(&self) -> &'static str {
        match self {
            Builtin::FitzHughNagumo(_) => "fitz_hugh_nagumo",
            Builtin::GeometricBrownian(_) => "geometric_brownian",
            Builtin::RoughDrift(_) => "rough_drift",
            Builtin::Cubic(_) => "cubic",
            Builtin::Zero(_) => "zero",
        }
    }

    /// Default parameters for an id as accepted on the command line.
    pub fn from_id(id: &str) -> Option<Self> {
        Some(match id {
            "fitz_hugh_nagumo" | "fhn" => Builtin::FitzHughNagumo(FhnParams::default()),
            "geometric_brownian" | "gbm" => Builtin::GeometricBrownian(GbmParams::default()),
            "rough_drift" | "rough" => Builtin::RoughDrift(RoughParams::default()),
            "cubic" => Builtin::Cubic(CubicParams::default()),
            "zero" => Builtin::Zero(ZeroParams::default()),
            _ => return None,
        })
    }
}

fn check_fhn_like(horizon: f64, sigma: f64, rest: &[(&str, f64)]) -> Result<()> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(SdeError::InvalidParameter(format!("sigma must be nonnegative, got {sigma}")));
    }
    if horizon.is_nan() || horizon <= 0.0 {
        return Err(SdeError::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    for (name, v) in rest {
        if !v.is_finite() {
            return Err(SdeError::InvalidParameter(format!("{name} must be finite")));
        }
    }
    Ok(())
}

pub fn make_builtin(builtin: &Builtin) -> Result<SdeProblem> {
    match builtin {
        Builtin::FitzHughNagumo(p) => {
            check_fhn_like(
                p.horizon,
                p.sigma,
                &[("v0", p.v0), ("r0", p.r0), ("alpha", p.alpha), ("gamma", p.gamma), ("lambda", p.lambda), ("amplitude", p.amplitude)],
            )?;
            let coeffs = FitzHughNagumo {
                sigma: p.sigma,
                alpha: p.alpha,
                gamma: p.gamma,
                lambda: p.lambda,
                forcing: Forcing { amplitude: p.amplitude, beta: 0.5, shape: ForcingShape::Power, terms: 0 },
            };
            SdeProblem::new(
                "fitz_hugh_nagumo",
                1,
                p.horizon,
                vec![p.v0, p.r0],
                NoiseStructure::Scalar,
                2.0,
                0.5,
                Arc::new(coeffs),
            )
        }
        Builtin::RoughDrift(p) => {
            check_fhn_like(
                p.horizon,
                p.sigma,
                &[("v0", p.v0), ("r0", p.r0), ("alpha", p.alpha), ("gamma", p.gamma), ("lambda", p.lambda), ("amplitude", p.amplitude)],
            )?;
            if !(p.beta > 0.0 && p.beta <= 1.0) {
                return Err(SdeError::InvalidParameter(format!("beta must lie in (0, 1], got {}", p.beta)));
            }
            if p.shape == ForcingShape::Weierstrass && p.terms == 0 {
                return Err(SdeError::InvalidParameter("weierstrass forcing needs at least one term".into()));
            }
            let coeffs = FitzHughNagumo {
                sigma: p.sigma,
                alpha: p.alpha,
                gamma: p.gamma,
                lambda: p.lambda,
                forcing: Forcing { amplitude: p.amplitude, beta: p.beta, shape: p.shape, terms: p.terms },
            };
            SdeProblem::new(
                "rough_drift",
                1,
                p.horizon,
                vec![p.v0, p.r0],
                NoiseStructure::Scalar,
                2.0,
                p.beta,
                Arc::new(coeffs),
            )
        }
        Builtin::GeometricBrownian(p) => {
            check_fhn_like(p.horizon, p.sigma, &[("a", p.a), ("x0", p.x0)])?;
            SdeProblem::new(
                "geometric_brownian",
                1,
                p.horizon,
                vec![p.x0],
                NoiseStructure::Scalar,
                0.0,
                1.0,
                Arc::new(GeometricBrownian { a: p.a, sigma: p.sigma }),
            )
        }
        Builtin::Cubic(p) => {
            check_fhn_like(p.horizon, p.noise, &[("x0", p.x0)])?;
            SdeProblem::new(
                "cubic",
                1,
                p.horizon,
                vec![p.x0],
                NoiseStructure::Scalar,
                2.0,
                1.0,
                Arc::new(Cubic { noise: p.noise }),
            )
        }
        Builtin::Zero(p) => {
            let structure = p.structure.unwrap_or(if p.noise_dim == 1 {
                NoiseStructure::Scalar
            } else {
                NoiseStructure::Diagonal
            });
            SdeProblem::new("zero", p.noise_dim, p.horizon, p.initial_state.clone(), structure, 0.0, 1.0, Arc::new(Zero))
        }
    }
}
