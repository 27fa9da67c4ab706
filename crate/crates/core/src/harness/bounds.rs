//! Worst-case error guarantees of the four protocols, evaluated with
//! natural logarithms and capped at the trivial bound.

use serde::Serialize;

use super::config::{ExperimentConfig, ProtocolKind};
use crate::error::{Error, Result};
use crate::numeric::rr_bias_constant;

/// A guarantee in two forms. For offline protocols `stated` bounds the
/// error against the empirical answers `A·p̂(D)` and `with_sampling` adds the
/// `r/√n` sampling term to bound the error against `A·p`. For the other
/// protocols the two coincide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoreticalBound {
    pub stated: f64,
    pub with_sampling: f64,
    /// The trivial bound both values are capped at.
    pub cap: f64,
}

/// Evaluates the guarantee matching `config.protocol`.
pub fn theoretical_bound(config: &ExperimentConfig) -> Result<TheoreticalBound> {
    let n = config.n as f64;
    let r = config.r;
    let j = config.domain_size as f64;
    let eps = || {
        config
            .epsilon
            .filter(|e| e.is_finite() && *e > 0.0)
            .ok_or_else(|| Error::domain("bound needs a positive epsilon"))
    };
    let d = || {
        config
            .d
            .filter(|&d| d >= 1)
            .map(|d| d as f64)
            .ok_or_else(|| Error::domain("bound needs d >= 1"))
    };
    if config.n == 0 {
        return Err(Error::domain("bound needs n >= 1"));
    }

    let offline = |stated: f64| TheoreticalBound {
        stated: stated.min(r),
        with_sampling: (stated + r / n.sqrt()).min(r),
        cap: r,
    };
    match config.protocol {
        ProtocolKind::Gauss => {
            let (eps, d) = (eps()?, d()?);
            let log_term = (2.0 / config.delta.unwrap_or(0.0)).ln();
            if !(log_term.is_finite() && log_term > 0.0) {
                return Err(Error::domain("gauss bound needs delta in (0, 1)"));
            }
            let low_d = (32.0 * j.ln() * log_term / (n * eps * eps)).powf(0.25);
            let high_d = (2.0 * d * log_term / (n * eps * eps)).sqrt();
            Ok(offline(r * low_d.min(high_d)))
        }
        ProtocolKind::Rejsamp => {
            let (eps, d) = (eps()?, d()?);
            let low_d = (280.0 * j.ln() * n.ln() / (n * eps * eps)).powf(0.25);
            let high_d = (10.0 * d * n.ln() / (n * eps * eps)).sqrt();
            Ok(offline(r * low_d.min(high_d)))
        }
        ProtocolKind::Phr => {
            let c = rr_bias_constant(eps()?);
            let low_n = (256.0 * c * c * j.ln() / n).powf(0.25);
            let high_n = (4.0 * c * c * j / n).sqrt();
            let stated = low_n.min(high_n).min(1.0);
            Ok(TheoreticalBound {
                stated,
                with_sampling: stated,
                cap: 1.0,
            })
        }
        ProtocolKind::Adsamp => {
            let (c, d) = (rr_bias_constant(eps()?), d()?);
            // ln(2d) rather than ln(d) keeps the bound positive at d = 1.
            let stated = (4.0 * r * (c * c * d * (2.0 * d).ln() / n).sqrt()).min(r);
            Ok(TheoreticalBound {
                stated,
                with_sampling: stated,
                cap: r,
            })
        }
        ProtocolKind::Baseline => Err(Error::domain(
            "the non-private baseline has no privacy theorem bound",
        )),
    }
}

/// `r/√n`: expected L2 error of the empirical answers against the truth.
pub fn baseline_bound(r: f64, n: usize) -> f64 {
    r / (n as f64).sqrt()
}
