//! Analytic-versus-numeric gradient comparison.

use super::params::Params;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so entries whose true gradient is
/// essentially zero are judged on absolute error.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub non_finite: bool,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        !self.non_finite && self.max_rel_error < self.tolerance
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of `loss` around `x`.
pub fn grad_check(
    x: &[f64],
    analytic: &[f64],
    mut loss: impl FnMut(&[f64]) -> f64,
    tolerance: f64,
) -> GradCheckReport {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut report = GradCheckReport {
        checked: x.len(),
        max_rel_error: 0.0,
        worst_index: 0,
        non_finite: analytic.iter().any(|g| !g.is_finite()),
        tolerance,
    };
    for i in 0..x.len() {
        probe[i] = x[i] + FD_STEP;
        let up = loss(&probe);
        probe[i] = x[i] - FD_STEP;
        let down = loss(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * FD_STEP);
        if !numeric.is_finite() {
            report.non_finite = true;
            continue;
        }
        let e = rel_error(analytic[i], numeric);
        if e > report.max_rel_error {
            report.max_rel_error = e;
            report.worst_index = i;
        }
    }
    report
}

/// [`grad_check`] over every parameter of `params`.
pub fn grad_check_params<P: Params + Clone>(
    params: &P,
    analytic: &P,
    mut loss: impl FnMut(&P) -> f64,
    tolerance: f64,
) -> GradCheckReport {
    let x = params.flatten();
    let mut scratch = params.clone();
    grad_check(
        &x,
        &analytic.flatten(),
        |flat| {
            scratch.assign_flat(flat);
            loss(&scratch)
        },
        tolerance,
    )
}
