/// Why a break-even count cannot be computed.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RoiError {
    #[error("automation never breaks even: {manual} h manual per pipeline vs {automated} h automated per use")]
    NeverBreaksEven { manual: f64, automated: f64 },
    #[error("invalid effort value {0} (expected a finite, non-negative number)")]
    InvalidInput(f64),
}

/// Smallest `n ≥ 0` with `n · manual ≥ setup + n · automated`.
///
/// Whole-hour inputs are solved with integer ceiling division, so there is
/// no floating-point rounding on the common path.
pub fn breakeven_uses(
    manual_hours_per_pipeline: f64,
    automation_setup_hours: f64,
    automated_hours_per_use: f64,
) -> Result<u64, RoiError> {
    let (manual, setup, automated) = (
        manual_hours_per_pipeline,
        automation_setup_hours,
        automated_hours_per_use,
    );
    for v in [manual, setup, automated] {
        if !v.is_finite() || v < 0.0 {
            return Err(RoiError::InvalidInput(v));
        }
    }
    if manual <= automated {
        return Err(RoiError::NeverBreaksEven { manual, automated });
    }

    let whole = |v: f64| v.fract() == 0.0 && v < 2f64.powi(53);
    if whole(manual) && whole(setup) && whole(automated) {
        let saved = manual as u128 - automated as u128;
        let n = (setup as u128).div_ceil(saved);
        return Ok(n as u64);
    }

    let holds = |n: f64| n * manual >= setup + n * automated;
    let mut n = (setup / (manual - automated)).ceil().max(0.0);
    while n > 0.0 && holds(n - 1.0) {
        n -= 1.0;
    }
    while !holds(n) {
        n += 1.0;
    }
    Ok(n as u64)
}
