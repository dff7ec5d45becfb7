//! Dirichlet-process state for the alternative mixture components, one
//! instance per (study, side).
//!
//! Observations are unit-variance Gaussian around a component mean drawn
//! from the base measure: N(0, sigma0^2) truncated to (0, inf) on the
//! positive side, to (-inf, 0) on the negative side. Conjugacy makes
//! (count, sum) sufficient per component. With the untruncated posterior
//! parameters
//!
//! ```text
//! m = s * sigma0^2 / (n * sigma0^2 + 1),   v = sigma0^2 / (n * sigma0^2 + 1),
//! ```
//!
//! the posterior predictive density of a new point z at an occupied
//! component is
//!
//! ```text
//! h_k(z) = N(z; m, 1 + v) * Phi(a') / Phi(a),
//! a  = +- s     * sigma0 / sqrt( n    * sigma0^2 + 1),
//! a' = +- (s+z) * sigma0 / sqrt((n+1) * sigma0^2 + 1),
//! ```
//!
//! with the plus sign on the positive side. The prior predictive for a
//! fresh component is
//!
//! ```text
//! h_new(z) = N(z; 0, 1 + sigma0^2) * Phi(+- z * sigma0 / sqrt(1 + sigma0^2)) / (1/2).
//! ```
//!
//! These closed forms are validated against a quadrature oracle in the
//! test suite; the sampler consumes them only in log space.

use crate::stats::{ln_norm_cdf, LN_2PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Positive,
    Negative,
}

impl Side {
    #[inline]
    fn sign(self) -> f64 {
        match self {
            Side::Positive => 1.0,
            Side::Negative => -1.0,
        }
    }
}

/// CRP table: member count, running sum of member Z-values, and the cached
/// log normalizer ln Phi(a) of the truncated posterior.
#[derive(Debug, Clone)]
pub struct Component {
    count: u32,
    sum_z: f64,
    ln_tail: f64,
}

impl Component {
    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn sum_z(&self) -> f64 {
        self.sum_z
    }
}

/// Assignment target for [`DpSide::assign`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Existing(usize),
    New,
}

/// Outcome of [`DpSide::remove`]: whether the component was deleted (and
/// all higher component indices shifted down by one).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Removal {
    Kept,
    Deleted,
}

#[derive(Debug, Clone)]
pub struct DpSide {
    side: Side,
    alpha: f64,
    sigma0_sq: f64,
    sigma0: f64,
    total: usize,
    components: Vec<Component>,
}

impl DpSide {
    pub fn new(side: Side, alpha: f64, sigma0_sq: f64) -> Self {
        assert!(alpha > 0.0, "concentration must be positive");
        assert!(sigma0_sq > 0.0, "base variance must be positive");
        DpSide {
            side,
            alpha,
            sigma0_sq,
            sigma0: sigma0_sq.sqrt(),
            total: 0,
            components: Vec::new(),
        }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma0_sq(&self) -> f64 {
        self.sigma0_sq
    }

    /// Number of observations currently assigned to this side.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, k: usize) -> &Component {
        &self.components[k]
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// ln Phi of the side-adjusted truncation argument for a component
    /// with `n` members summing to `s`.
    #[inline]
    fn ln_tail(&self, n: f64, s: f64) -> f64 {
        ln_norm_cdf(self.side.sign() * s * self.sigma0 / (n * self.sigma0_sq + 1.0).sqrt())
    }

    /// Log posterior-predictive density of `z` at component `k`.
    pub fn ln_predictive_existing(&self, k: usize, z: f64) -> f64 {
        let c = &self.components[k];
        let n = c.count as f64;
        let denom = n * self.sigma0_sq + 1.0;
        let m = c.sum_z * self.sigma0_sq / denom;
        let var = 1.0 + self.sigma0_sq / denom;
        let d = z - m;
        let ln_gauss = -0.5 * (LN_2PI + var.ln()) - d * d / (2.0 * var);
        ln_gauss + self.ln_tail(n + 1.0, c.sum_z + z) - c.ln_tail
    }

    /// Posterior-predictive density of `z` at component `k`.
    pub fn predictive_existing(&self, k: usize, z: f64) -> f64 {
        self.ln_predictive_existing(k, z).exp()
    }

    /// Log prior-predictive density of `z` under the truncated base.
    pub fn ln_predictive_new(&self, z: f64) -> f64 {
        let var = 1.0 + self.sigma0_sq;
        let ln_gauss = -0.5 * (LN_2PI + var.ln()) - z * z / (2.0 * var);
        let arg = self.side.sign() * z * self.sigma0 / var.sqrt();
        ln_gauss + ln_norm_cdf(arg) + std::f64::consts::LN_2
    }

    pub fn predictive_new(&self, z: f64) -> f64 {
        self.ln_predictive_new(z).exp()
    }

    /// Seats `z` at an existing component or opens a fresh one; returns
    /// the component index.
    pub fn assign(&mut self, target: Target, z: f64) -> usize {
        self.total += 1;
        match target {
            Target::New => {
                let ln_tail = self.ln_tail(1.0, z);
                self.components.push(Component {
                    count: 1,
                    sum_z: z,
                    ln_tail,
                });
                self.components.len() - 1
            }
            Target::Existing(k) => {
                let (count, sum) = {
                    let c = &self.components[k];
                    (c.count + 1, c.sum_z + z)
                };
                let ln_tail = self.ln_tail(count as f64, sum);
                self.components[k] = Component { count, sum_z: sum, ln_tail };
                k
            }
        }
    }

    /// Removes one occurrence of `z` from component `k`. When the last
    /// member leaves, the component is deleted and every component index
    /// above `k` shifts down by one; the caller owns the label remap.
    pub fn remove(&mut self, k: usize, z: f64) -> Removal {
        assert!(
            k < self.components.len(),
            "remove from missing component {k}"
        );
        self.total -= 1;
        if self.components[k].count == 1 {
            self.components.remove(k);
            Removal::Deleted
        } else {
            let (count, sum) = {
                let c = &self.components[k];
                (c.count - 1, c.sum_z - z)
            };
            let ln_tail = self.ln_tail(count as f64, sum);
            self.components[k] = Component { count, sum_z: sum, ln_tail };
            Removal::Kept
        }
    }

    /// Checks table bookkeeping against externally tracked per-component
    /// counts and sums.
    pub fn audit(&self, expected: &[(u32, f64)]) -> Result<(), String> {
        if expected.len() != self.components.len() {
            return Err(format!(
                "{} components, expected {}",
                self.components.len(),
                expected.len()
            ));
        }
        let mut total = 0usize;
        for (k, (cnt, sum)) in expected.iter().enumerate() {
            let c = &self.components[k];
            if c.count != *cnt {
                return Err(format!("component {k}: count {} != {cnt}", c.count));
            }
            let tol = 1e-6 * (1.0 + sum.abs());
            if (c.sum_z - sum).abs() > tol {
                return Err(format!("component {k}: sum {} != {sum}", c.sum_z));
            }
            total += c.count as usize;
        }
        if total != self.total {
            return Err(format!("total {} != sum of counts {total}", self.total));
        }
        Ok(())
    }
}
