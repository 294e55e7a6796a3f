//! L∞-bounded perturbations of a sample's exogenous wind input.
//!
//! Four attacks share one budget model: a repeated Gaussian noise baseline
//! and three projected-gradient (PGD) variants. PGD starts at the clean input
//! (no random start) and takes `steps` sign-of-gradient steps of size
//! `alpha`, projecting back into the ε-ball around the clean input after
//! each step:
//!
//! * untargeted: ascend `MSE(f(x), y)`
//! * targeted: descend `MSE(f(x), y_adv)`
//! * semi-targeted: ascend `MSE(f(x), y) - λ · penalty_[a,b](f(x))`

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, Tensor, Var};
use crate::models::{ForecastSample, Model, ModelError};

/// Penalty weight of the semi-targeted loss.
pub const DEFAULT_LAMBDA: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack spec: {0}")]
    Spec(String),
    #[error("epsilon must be non-negative, got {0}")]
    Epsilon(f64),
    #[error("clip: shapes {0:?} and {1:?} differ")]
    Shape(Vec<usize>, Vec<usize>),
    #[error("noise draw is identically zero and cannot be rescaled")]
    DegenerateNoise,
    #[error("no gradient reached the exogenous input")]
    NoGradient,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum AttackKind {
    Noise,
    PgdUntargeted,
    PgdTargeted { target: Vec<f64> },
    PgdSemiTargeted { lower: Vec<f64>, upper: Vec<f64> },
}

impl AttackKind {
    pub fn tag(&self) -> &'static str {
        match self {
            AttackKind::Noise => "noise",
            AttackKind::PgdUntargeted => "pgd-untargeted",
            AttackKind::PgdTargeted { .. } => "pgd-targeted",
            AttackKind::PgdSemiTargeted { .. } => "pgd-semi-targeted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// L∞ budget in standardized input units.
    pub epsilon: f64,
    pub alpha: f64,
    pub steps: usize,
    /// Noise draws; the most damaging one is kept.
    pub repetitions: usize,
    pub lambda: f64,
    /// Valid input range. Always applied by the noise attack; applied by PGD
    /// only when set. Clean values outside the range are never pushed further
    /// out, and never pulled in beyond the budget.
    pub input_bounds: Option<(f64, f64)>,
}

impl AttackSpec {
    fn pgd(kind: AttackKind, epsilon: f64, steps: usize) -> Self {
        Self {
            kind,
            epsilon,
            alpha: 2.0 * epsilon / steps.max(1) as f64,
            steps,
            repetitions: 1,
            lambda: DEFAULT_LAMBDA,
            input_bounds: None,
        }
    }

    pub fn noise(epsilon: f64, repetitions: usize) -> Self {
        Self {
            kind: AttackKind::Noise,
            epsilon,
            alpha: 0.0,
            steps: 1,
            repetitions,
            lambda: DEFAULT_LAMBDA,
            input_bounds: None,
        }
    }

    /// Step size defaults to `2 * epsilon / steps`.
    pub fn pgd_untargeted(epsilon: f64, steps: usize) -> Self {
        Self::pgd(AttackKind::PgdUntargeted, epsilon, steps)
    }

    pub fn pgd_targeted(epsilon: f64, steps: usize, target: Vec<f64>) -> Self {
        Self::pgd(AttackKind::PgdTargeted { target }, epsilon, steps)
    }

    pub fn pgd_semi_targeted(epsilon: f64, steps: usize, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self::pgd(AttackKind::PgdSemiTargeted { lower, upper }, epsilon, steps)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_bounds(mut self, bounds: Option<(f64, f64)>) -> Self {
        self.input_bounds = bounds;
        self
    }

    /// Checks the spec against itself and a forecast horizon.
    pub fn validate(&self, horizon: usize) -> Result<(), AttackError> {
        let bad = |m: String| Err(AttackError::Spec(m));
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(AttackError::Epsilon(self.epsilon));
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if self.epsilon > 0.0 && self.alpha == 0.0 && self.kind != AttackKind::Noise {
            return bad("alpha must be positive when epsilon is".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if let Some((lo, hi)) = self.input_bounds {
            if !(lo <= hi) {
                return bad(format!("input bounds ({lo}, {hi}) are inverted"));
            }
        }
        match &self.kind {
            AttackKind::PgdTargeted { target } if target.len() != horizon => bad(format!(
                "target has length {}, expected horizon {horizon}",
                target.len()
            )),
            AttackKind::PgdSemiTargeted { lower, upper } => {
                if lower.len() != horizon || upper.len() != horizon {
                    return bad(format!(
                        "band has lengths {}/{}, expected horizon {horizon}",
                        lower.len(),
                        upper.len()
                    ));
                }
                match lower.iter().zip(upper).position(|(a, b)| a > b) {
                    Some(i) => bad(format!("band lower bound exceeds upper bound at step {i}")),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub x_adv: Tensor,
    /// `x_adv - x`.
    pub delta: Tensor,
    /// Noise: loss of every candidate. PGD: loss at each iterate, starting
    /// with the clean input and ending with the returned one.
    pub loss_trace: Vec<f64>,
}

impl AttackResult {
    fn new(clean: &Tensor, x_adv: Tensor, loss_trace: Vec<f64>) -> Result<Self, AttackError> {
        let delta = x_adv.sub(clean)?;
        Ok(Self {
            x_adv,
            delta,
            loss_trace,
        })
    }
}

/// Elementwise clamp of `proposal` into `[origin - ε, origin + ε]`.
pub fn clip_linf(proposal: &Tensor, origin: &Tensor, epsilon: f64) -> Result<Tensor, AttackError> {
    if !(epsilon >= 0.0) {
        return Err(AttackError::Epsilon(epsilon));
    }
    if proposal.shape() != origin.shape() {
        return Err(AttackError::Shape(
            proposal.shape().to_vec(),
            origin.shape().to_vec(),
        ));
    }
    let data = proposal
        .data()
        .iter()
        .zip(origin.data())
        .map(|(&p, &o)| p.clamp(o - epsilon, o + epsilon))
        .collect();
    Ok(Tensor::new(proposal.shape().to_vec(), data)?)
}

/// Clamps `x` into the input bounds, widened per element to contain the
/// clean value so the result never leaves the ε-ball.
fn clip_bounds(
    x: Tensor,
    clean: &Tensor,
    bounds: Option<(f64, f64)>,
) -> Result<Tensor, AttackError> {
    let Some((lo, hi)) = bounds else {
        return Ok(x);
    };
    let data = x
        .data()
        .iter()
        .zip(clean.data())
        .map(|(&v, &c)| v.clamp(lo.min(c), hi.max(c)))
        .collect();
    Ok(Tensor::new(x.shape().to_vec(), data)?)
}

/// Sign with `sign(0) = 0`.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Squared-hinge distance of `pred` from the band, averaged over steps;
/// zero exactly when every step is inside `[lower, upper]`.
pub fn band_penalty_loss<'g>(
    pred: Var<'g>,
    lower: &[f64],
    upper: &[f64],
) -> Result<Var<'g>, AutodiffError> {
    let g = pred.graph();
    let lo = g.constant(Tensor::vector(lower.to_vec())?);
    let hi = g.constant(Tensor::vector(upper.to_vec())?);
    let below = lo.sub(pred)?;
    let above = pred.sub(hi)?;
    let below_mask = below.value().data().iter().map(|&v| v > 0.0).collect();
    let above_mask = above.value().data().iter().map(|&v| v > 0.0).collect();
    let below = below.mask(below_mask)?.square()?;
    let above = above.mask(above_mask)?.square()?;
    below.add(above)?.mean()
}

/// A differentiable forecaster as seen by an attacker: only the exogenous
/// input is a variable.
pub trait AttackSurface: Sync {
    fn horizon(&self) -> usize;
    fn exo_shape(&self) -> Vec<usize>;
    /// Forecast with weights held constant in `exo`'s graph.
    fn forecast<'g>(&self, history: &[f64], exo: Var<'g>) -> Result<Var<'g>, ModelError>;
}

impl AttackSurface for Model {
    fn horizon(&self) -> usize {
        Model::horizon(self)
    }

    fn exo_shape(&self) -> Vec<usize> {
        Model::exo_shape(self)
    }

    fn forecast<'g>(&self, history: &[f64], exo: Var<'g>) -> Result<Var<'g>, ModelError> {
        let params = self.params().bind(exo.graph(), false);
        self.forward(&params, history, exo)
    }
}

/// What an attack differentiates.
#[derive(Debug, Clone, Copy)]
enum Objective<'a> {
    Mse(&'a [f64]),
    Penalized {
        truth: &'a [f64],
        lower: &'a [f64],
        upper: &'a [f64],
        lambda: f64,
    },
}

impl Objective<'_> {
    fn loss<'g>(&self, pred: Var<'g>) -> Result<Var<'g>, AutodiffError> {
        let g = pred.graph();
        match *self {
            Objective::Mse(target) => pred.mse(g.constant(Tensor::vector(target.to_vec())?)),
            Objective::Penalized {
                truth,
                lower,
                upper,
                lambda,
            } => {
                let fit = pred.mse(g.constant(Tensor::vector(truth.to_vec())?))?;
                let penalty = band_penalty_loss(pred, lower, upper)?;
                fit.sub(penalty.scale(lambda)?)
            }
        }
    }
}

fn objective_value<M: AttackSurface + ?Sized>(
    model: &M,
    history: &[f64],
    exo: &Tensor,
    objective: Objective<'_>,
) -> Result<f64, AttackError> {
    let g = Graph::new();
    let pred = model.forecast(history, g.constant(exo.clone()))?;
    Ok(objective.loss(pred)?.value().data()[0])
}

fn objective_gradient<M: AttackSurface + ?Sized>(
    model: &M,
    history: &[f64],
    exo: &Tensor,
    objective: Objective<'_>,
) -> Result<(f64, Tensor), AttackError> {
    let g = Graph::new();
    let x = g.leaf(exo.clone());
    let pred = model.forecast(history, x)?;
    let loss = objective.loss(pred)?;
    let value = loss.value().data()[0];
    let grads = g.backward(loss)?;
    let grad = grads.get(x).cloned().ok_or(AttackError::NoGradient)?;
    Ok((value, grad))
}

/// Gradient of the attack objective of `spec` with respect to `exo`.
pub fn input_gradient<M: AttackSurface + ?Sized>(
    model: &M,
    sample: &ForecastSample,
    exo: &Tensor,
    spec: &AttackSpec,
) -> Result<(f64, Tensor), AttackError> {
    let (objective, _) = objective_for(sample, spec)?;
    objective_gradient(model, &sample.history, exo, objective)
}

/// Objective and step direction (+1 ascent, -1 descent).
fn objective_for<'a>(
    sample: &'a ForecastSample,
    spec: &'a AttackSpec,
) -> Result<(Objective<'a>, f64), AttackError> {
    Ok(match &spec.kind {
        AttackKind::Noise | AttackKind::PgdUntargeted => (Objective::Mse(&sample.truth), 1.0),
        AttackKind::PgdTargeted { target } => (Objective::Mse(target), -1.0),
        AttackKind::PgdSemiTargeted { lower, upper } => (
            Objective::Penalized {
                truth: &sample.truth,
                lower,
                upper,
                lambda: spec.lambda,
            },
            1.0,
        ),
    })
}

fn check_sample<M: AttackSurface + ?Sized>(
    model: &M,
    sample: &ForecastSample,
    spec: &AttackSpec,
) -> Result<(), AttackError> {
    spec.validate(model.horizon())?;
    let expected = model.exo_shape();
    if sample.exo.shape() != expected.as_slice() {
        return Err(AttackError::Model(ModelError::ExoShape {
            expected,
            got: sample.exo.shape().to_vec(),
        }));
    }
    Ok(())
}

fn projected_gradient<M: AttackSurface + ?Sized>(
    model: &M,
    sample: &ForecastSample,
    spec: &AttackSpec,
) -> Result<AttackResult, AttackError> {
    check_sample(model, sample, spec)?;
    let (objective, direction) = objective_for(sample, spec)?;
    let clean = &sample.exo;
    let mut x = clean.clone();
    let mut trace = Vec::with_capacity(spec.steps + 1);
    for _ in 0..spec.steps {
        let (loss, grad) = objective_gradient(model, &sample.history, &x, objective)?;
        trace.push(loss);
        let step = direction * spec.alpha;
        let proposal = Tensor::new(
            x.shape().to_vec(),
            x.data()
                .iter()
                .zip(grad.data())
                .map(|(&v, &g)| v + step * sign(g))
                .collect(),
        )?;
        x = clip_bounds(
            clip_linf(&proposal, clean, spec.epsilon)?,
            clean,
            spec.input_bounds,
        )?;
    }
    trace.push(objective_value(model, &sample.history, &x, objective)?);
    AttackResult::new(clean, x, trace)
}

fn expect_kind(spec: &AttackSpec, tag: &'static str) -> Result<(), AttackError> {
    if spec.kind.tag() != tag {
        return Err(AttackError::Spec(format!(
            "expected a {tag} spec, got {}",
            spec.kind.tag()
        )));
    }
    Ok(())
}

pub fn pgd_untargeted<M: AttackSurface + ?Sized>(
    model: &M,
    sample: &ForecastSample,
    spec: &AttackSpec,
) -> Result<AttackResult, AttackError> {
    expect_kind(spec, "pgd-untargeted")?;
    projected_gradient(model, sample, spec)
}

pub fn pgd_targeted<M: AttackSurface + ?Sized>(
    model: &M,
    sample: &ForecastSample,
    spec: &AttackSpec,
) -> Result<AttackResult, AttackError> {
    expect_kind(spec, "pgd-targeted")?;
    projected_gradient(model, sample, spec)
}

pub fn pgd_semi_targeted<M: AttackSurface + ?Sized>(
    model: &M,
    sample: &ForecastSample,
    spec: &AttackSpec,
) -> Result<AttackResult, AttackError> {
    expect_kind(spec, "pgd-semi-targeted")?;
    projected_gradient(model, sample, spec)
}

/// Repeated Gaussian noise rescaled to `‖δ‖∞ = ε`, clipped to the input
/// bounds; returns the candidate with the largest MSE against the truth.
pub fn noise_attack<M: AttackSurface + ?Sized>(
    model: &M,
    sample: &ForecastSample,
    spec: &AttackSpec,
    rng: &mut impl Rng,
) -> Result<AttackResult, AttackError> {
    expect_kind(spec, "noise")?;
    check_sample(model, sample, spec)?;
    let clean = &sample.exo;
    let objective = Objective::Mse(&sample.truth);
    let mut best: Option<(f64, Tensor)> = None;
    let mut trace = Vec::with_capacity(spec.repetitions);
    for _ in 0..spec.repetitions {
        let draw: Vec<f64> = (0..clean.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let candidate = perturb_with_noise(clean, &draw, spec)?;
        let loss = objective_value(model, &sample.history, &candidate, objective)?;
        trace.push(loss);
        if best.as_ref().is_none_or(|(b, _)| loss > *b) {
            best = Some((loss, candidate));
        }
    }
    let (_, x_adv) = best.expect("at least one repetition");
    AttackResult::new(clean, x_adv, trace)
}

/// `clean + ε · draw / max|draw|`, clipped to the spec's input bounds.
pub fn perturb_with_noise(
    clean: &Tensor,
    draw: &[f64],
    spec: &AttackSpec,
) -> Result<Tensor, AttackError> {
    let peak = draw.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(AttackError::DegenerateNoise);
    }
    let scale = spec.epsilon / peak;
    let data = clean
        .data()
        .iter()
        .zip(draw)
        .map(|(&x, &d)| x + scale * d)
        .collect();
    let noisy = Tensor::new(clean.shape().to_vec(), data)?;
    clip_bounds(noisy, clean, spec.input_bounds)
}

/// Dispatches on the spec's kind; `rng` is only consumed by the noise attack.
pub fn run_attack<M: AttackSurface + ?Sized>(
    model: &M,
    sample: &ForecastSample,
    spec: &AttackSpec,
    rng: &mut impl Rng,
) -> Result<AttackResult, AttackError> {
    match spec.kind {
        AttackKind::Noise => noise_attack(model, sample, spec, rng),
        _ => projected_gradient(model, sample, spec),
    }
}
