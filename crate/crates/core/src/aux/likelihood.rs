use super::config::AuxConfig;
use super::run::{AuxRun, SegmentKind};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::exitstats::exact::exact_front_exit;
use serde::{Deserialize, Serialize};

/// Longest path accepted by the exact audit.
pub const MAX_AUDIT_STEPS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodReport {
    /// Q(v) = L^{2 chi} (iota + 2 + sum Q_k).
    pub q: f64,
    pub exponent: f64,
    pub ln_floor: f64,
    pub floor: f64,
    /// Lower bound on ln P(X = v) - ln P(Y = v) from the audit.
    pub ln_ratio: Option<f64>,
    pub holds: Option<bool>,
}

/// (Q, ln of 1/2 eta^{Q (L^{4 psi} + 2)}).
pub fn floor_terms(l: f64, psi: f64, chi: f64, iota: usize, q_sum: u64, eta: f64) -> (f64, f64) {
    let q = l.powf(2.0 * chi) * (iota as f64 + 2.0 + q_sum as f64);
    let exponent = q * (l.powf(4.0 * psi) + 2.0);
    (q, 0.5f64.ln() + exponent * eta.ln())
}

/// The floor on the X-to-Y path probability ratio for this run.
pub fn likelihood_floor(run: &AuxRun, eta: f64, cfg: &AuxConfig) -> LikelihoodReport {
    let l = &cfg.ladder;
    let (q, ln_floor) = floor_terms(l.l, l.psi, l.chi, l.iota, run.q_k.iter().sum(), eta);
    LikelihoodReport { q, exponent: q * (l.l.powf(4.0 * l.psi) + 2.0), ln_floor, floor: ln_floor.exp(), ln_ratio: None, holds: None }
}

/// Exact audit of the ratio. A conditioned segment from x has Y-probability
/// equal to its X-probability divided by the front-exit probability of its
/// block from x, and forced or correction steps have Y-probability at most
/// one, so ln P(X = v) - ln P(Y = v) is at least the sum of the log
/// front-exit probabilities and the log kernel weights of the forced steps.
pub fn likelihood_audit(env: &Environment, run: &AuxRun, cfg: &AuxConfig) -> Result<LikelihoodReport> {
    let steps = run.path.len().saturating_sub(1);
    if steps > MAX_AUDIT_STEPS {
        return Err(Error::AuditTooLong(steps));
    }
    let mut report = likelihood_floor(run, env.law().eta(), cfg);
    let mut ln_ratio = 0.0;
    for s in &run.segments {
        match s.kind {
            SegmentKind::Conditioned => {
                let block = s.block.as_ref().expect("conditioned segment has a block");
                let front: f64 = exact_front_exit::<f64, _>(env, block, &run.path[s.start])?.total();
                ln_ratio += front.ln();
            }
            SegmentKind::Forced | SegmentKind::Correction => {
                for t in s.start..s.end {
                    let x = run.path[t];
                    let dir = x.dir_to(&run.path[t + 1]).ok_or_else(|| Error::InvariantViolated("non-neighbour step".into()))?;
                    ln_ratio += env.kernel_at(&x).prob(dir).ln();
                }
            }
        }
    }
    report.ln_ratio = Some(ln_ratio);
    report.holds = Some(ln_ratio >= report.ln_floor);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_formula() {
        // L^{2 chi} = 4, L^{4 psi} = 2, iota = 2, no bad blocks
        let (q, lf) = floor_terms(16.0, 1.0 / 16.0, 0.25, 2, 0, 0.05);
        assert!((q - 16.0).abs() < 1e-12);
        assert!((lf - (0.5f64.ln() + 64.0 * 0.05f64.ln())).abs() < 1e-9);
    }
}
