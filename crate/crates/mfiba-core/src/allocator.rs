//! Importance-weighted bit allocation across pyramid scales.
//!
//! The objective is separable:
//! J(R) = sum_i w_i * alpha * R_i^-beta + lambda' * sum_i R_i / k^i,
//! with R_i in bits per element and 1/k^i the relative element count of
//! scale i. Setting each partial derivative to zero gives the closed-form
//! optimum R_i = (w_i alpha beta k^i / lambda')^(1/(beta+1)), floored at a
//! small positive rate so every scale stays decodable.
//!
//! `brute_force_budget` minimizes the same objective per scale by scanning
//! an explicit rate grid — no calculus — and exists as the oracle the
//! closed form is tested against. `solve_for_target` wraps the closed form
//! in a log-domain bisection over lambda' to hit a total-bit budget, and
//! `budget_to_phi` inverts the per-scale rate models to turn an allocation
//! into encoder settings.

use crate::codec::{CodecConfig, PhiVector};
use crate::error::{Error, Result};
use crate::mfip::ImportanceWeights;
use crate::rdmodel::{CalibratedModels, RatePhiModel};

/// Relative total-bits tolerance for the lambda' bisection.
const BISECT_TOL: f64 = 1e-4;
const BISECT_MAX_ITERS: usize = 100;
/// Widest lambda' bracket the bisection will explore.
const LAMBDA_LO: f64 = 1e-12;
const LAMBDA_HI: f64 = 1e15;
/// Cap on brute-force grid indices (~10^8 grid points at step 1e-3).
const GRID_CAP: u64 = 1 << 27;

/// What the allocation should hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateTarget {
    /// Use this multiplier directly.
    LambdaPrime(f64),
    /// Find the multiplier whose model total lands at or under this.
    TotalBits(f64),
    /// Same, expressed in bits per scale-0 element.
    Bpp(f64),
}

/// A self-contained allocation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    /// Per-scale importance, nonnegative, summing to one.
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    /// Element-count ratio between neighboring scales.
    pub k: f64,
    /// Scale-0 element count.
    pub s0: u64,
    /// Minimum bits per element any scale may receive.
    pub rate_floor: f64,
}

impl AllocationProblem {
    /// Instance from calibrated models and the weights predicted for one
    /// input.
    pub fn from_models(models: &CalibratedModels, weights: &ImportanceWeights) -> Result<Self> {
        models.validate()?;
        weights.validate()?;
        if weights.len() != models.rate_phi.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} calibrated scales",
                weights.len(),
                models.rate_phi.len()
            )));
        }
        Ok(AllocationProblem {
            weights: weights.values.clone(),
            alpha: models.loss_rate.alpha,
            beta: models.loss_rate.beta,
            k: models.k,
            s0: models.s0,
            rate_floor: models.rate_floor,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::InvalidParameter("no scales".into()));
        }
        for (i, &w) in self.weights.iter().enumerate() {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidParameter(format!("weight[{i}] = {w}")));
            }
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!("weights sum to {sum}")));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta {}", self.beta)));
        }
        if !(self.k > 1.0 && self.k.is_finite()) {
            return Err(Error::InvalidParameter(format!("size ratio {}", self.k)));
        }
        if self.s0 == 0 {
            return Err(Error::InvalidParameter("zero scale-0 size".into()));
        }
        if !(self.rate_floor > 0.0 && self.rate_floor.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rate floor {}",
                self.rate_floor
            )));
        }
        Ok(())
    }

    fn check_lambda(lambda_prime: f64) -> Result<()> {
        if !(lambda_prime > 0.0 && lambda_prime.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda' {lambda_prime}")));
        }
        Ok(())
    }
}

/// Per-scale rates chosen for one input, plus the multiplier behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct RateBudget {
    /// Bits per element per scale.
    pub rates: Vec<f64>,
    pub lambda_prime: f64,
    pub k: f64,
    pub s0: u64,
}

impl RateBudget {
    /// Model total bits: scale i holds s0 / k^i elements.
    pub fn total_bits(&self) -> f64 {
        self.s0 as f64
            * self
                .rates
                .iter()
                .enumerate()
                .map(|(i, &r)| r / self.k.powi(i as i32))
                .sum::<f64>()
    }

    pub fn bpp(&self) -> f64 {
        self.total_bits() / self.s0 as f64
    }
}

/// The allocation objective; both solvers are scored through this one
/// function so their results are comparable to machine precision.
pub fn j_value(p: &AllocationProblem, rates: &[f64], lambda_prime: f64) -> f64 {
    rates
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            p.weights[i] * p.alpha * r.powf(-p.beta) + lambda_prime * r / p.k.powi(i as i32)
        })
        .sum()
}

/// Stationary-point allocation, floored per scale.
pub fn closed_form_budget(p: &AllocationProblem, lambda_prime: f64) -> Result<RateBudget> {
    p.validate()?;
    AllocationProblem::check_lambda(lambda_prime)?;
    let exponent = 1.0 / (p.beta + 1.0);
    let rates = p
        .weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let unconstrained =
                (w * p.alpha * p.beta * p.k.powi(i as i32) / lambda_prime).powf(exponent);
            unconstrained.max(p.rate_floor)
        })
        .collect();
    Ok(RateBudget {
        rates,
        lambda_prime,
        k: p.k,
        s0: p.s0,
    })
}

/// Grid minimizer of the same objective. Each scale's term is strictly
/// convex in its own rate, so its values along the grid are unimodal: an
/// exponential march brackets the dip, a coarse scan narrows it, and a fine
/// scan pins the exact grid argmin.
pub fn brute_force_budget(
    p: &AllocationProblem,
    lambda_prime: f64,
    grid_step: f64,
) -> Result<RateBudget> {
    p.validate()?;
    AllocationProblem::check_lambda(lambda_prime)?;
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(Error::InvalidParameter(format!("grid step {grid_step}")));
    }
    let mut rates = Vec::with_capacity(p.weights.len());
    for (i, &w) in p.weights.iter().enumerate() {
        let price = lambda_prime / p.k.powi(i as i32);
        let term = |j: u64| -> f64 {
            let r = p.rate_floor + j as f64 * grid_step;
            w * p.alpha * r.powf(-p.beta) + price * r
        };

        // March 0, 1, 2, 4, ... until the value stops falling.
        let mut before_prev = 0u64;
        let mut prev = 0u64;
        let mut cur = 1u64;
        loop {
            if term(cur) >= term(prev) {
                break;
            }
            if cur >= GRID_CAP {
                return Err(Error::InvalidParameter(format!(
                    "scale {i}: grid minimum beyond {GRID_CAP} steps"
                )));
            }
            before_prev = prev;
            prev = cur;
            cur *= 2;
        }
        let (lo, hi) = (before_prev, cur);

        let coarse_stride = ((hi - lo) / 200).max(1);
        let coarse = scan_min(&term, lo, hi, coarse_stride);
        let fine_lo = coarse.saturating_sub(2 * coarse_stride).max(lo);
        let fine_hi = (coarse + 2 * coarse_stride).min(hi);
        let best = scan_min(&term, fine_lo, fine_hi, 1);
        rates.push(p.rate_floor + best as f64 * grid_step);
    }
    Ok(RateBudget {
        rates,
        lambda_prime,
        k: p.k,
        s0: p.s0,
    })
}

/// Grid argmin of `f` over `{lo, lo+stride, ...} ∪ {hi}`.
fn scan_min(f: &dyn Fn(u64) -> f64, lo: u64, hi: u64, stride: u64) -> u64 {
    let mut best = lo;
    let mut best_val = f(lo);
    let mut j = lo;
    loop {
        j = if j >= hi { break } else { (j + stride).min(hi) };
        let v = f(j);
        if v < best_val {
            best = j;
            best_val = v;
        }
    }
    best
}

/// Finds the budget for a rate target. Total model bits fall monotonically
/// as lambda' rises, so a bit target becomes a log-domain bisection that
/// keeps the under-budget side when it stops.
pub fn solve_for_target(p: &AllocationProblem, target: &RateTarget) -> Result<RateBudget> {
    p.validate()?;
    let target_bits = match *target {
        RateTarget::LambdaPrime(lambda) => return closed_form_budget(p, lambda),
        RateTarget::TotalBits(bits) => bits,
        RateTarget::Bpp(bpp) => bpp * p.s0 as f64,
    };
    if !(target_bits > 0.0 && target_bits.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target bits {target_bits}"
        )));
    }
    let floor_total = p.s0 as f64
        * (0..p.weights.len())
            .map(|i| p.rate_floor / p.k.powi(i as i32))
            .sum::<f64>();
    if target_bits < floor_total * (1.0 - 1e-9) {
        return Err(Error::InfeasibleTarget(format!(
            "{target_bits} bits requested but the per-scale floor already costs {floor_total}"
        )));
    }

    let total_at = |lambda: f64| -> Result<f64> { Ok(closed_form_budget(p, lambda)?.total_bits()) };
    let mut lo = LAMBDA_LO; // cheap side: total(lo) >= target
    let mut hi = LAMBDA_HI; // expensive side: total(hi) <= target
    if total_at(lo)? < target_bits {
        // Even a near-free multiplier stays under target: cheapest wins.
        return closed_form_budget(p, lo);
    }
    if total_at(hi)? > target_bits {
        // Floors dominate; feasibility above guarantees we are within tol.
        return closed_form_budget(p, hi);
    }
    let mut best_hi = hi;
    for _ in 0..BISECT_MAX_ITERS {
        let mid = (lo.ln() + hi.ln()).mul_add(0.5, 0.0).exp();
        let total = total_at(mid)?;
        if total > target_bits {
            lo = mid;
        } else {
            hi = mid;
            best_hi = mid;
            if (target_bits - total) / target_bits < BISECT_TOL {
                break;
            }
        }
    }
    closed_form_budget(p, best_hi)
}

/// Encoder settings for a budget, with per-scale clamp flags for rates the
/// linear models cannot reach inside the phi bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiAssignment {
    pub phis: Vec<f64>,
    pub clamped: Vec<bool>,
}

impl PhiAssignment {
    pub fn to_phi_vector(&self, config: &CodecConfig) -> Result<PhiVector> {
        PhiVector::new(self.phis.clone(), config)
    }
}

/// Inverts each scale's rate model at its allocated rate.
pub fn budget_to_phi(
    budget: &RateBudget,
    rate_phi: &[RatePhiModel],
    bounds: (f64, f64),
) -> Result<PhiAssignment> {
    if rate_phi.len() != budget.rates.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rate models for {} allocated scales",
            rate_phi.len(),
            budget.rates.len()
        )));
    }
    if bounds.0 >= bounds.1 {
        return Err(Error::InvalidParameter(format!(
            "phi bounds [{}, {}]",
            bounds.0, bounds.1
        )));
    }
    let mut phis = Vec::with_capacity(budget.rates.len());
    let mut clamped = Vec::with_capacity(budget.rates.len());
    for (model, &rate) in rate_phi.iter().zip(&budget.rates) {
        let raw = model.phi_for_rate(rate);
        if !raw.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "rate {rate} maps to phi {raw}"
            )));
        }
        let pinned = raw.clamp(bounds.0, bounds.1);
        clamped.push(pinned != raw);
        phis.push(pinned);
    }
    Ok(PhiAssignment { phis, clamped })
}
