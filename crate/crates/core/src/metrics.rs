//! Per-step and per-window records produced by the engines.

/// Column order of the per-step CSV.
pub const STEP_HEADER: &str = "t,residual,loss,correct_rate,max_surplus_norm,mass,bits_cumulative";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub residual: f64,
    /// `f(zbar) - f*`; NaN when no objective is attached.
    pub loss: f64,
    /// NaN unless the objective is a classifier.
    pub correct_rate: f64,
    pub max_surplus_norm: f64,
    pub mass: f64,
    pub bits_cumulative: u64,
}

impl StepRecord {
    /// Bitwise comparison that treats equal NaN payloads as equal.
    pub fn same_bits(&self, other: &Self) -> bool {
        self.t == other.t
            && self.bits_cumulative == other.bits_cumulative
            && [self.residual, self.loss, self.correct_rate, self.max_surplus_norm, self.mass]
                .iter()
                .zip([other.residual, other.loss, other.correct_rate, other.max_surplus_norm, other.mass])
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Spectral summary of one window: worst case over coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowRecord {
    pub k: usize,
    pub sigma: f64,
    pub eigmult: usize,
    /// Admissible perturbation from the unperturbed product of this window.
    pub epsilon_bound: f64,
}

/// Node-resolved quantities needed by the bound checkers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisagreementRecord {
    pub t: usize,
    /// `max_{i <= n} ||x_i - zbar||`.
    pub max_state_gap: f64,
    /// `sum_{i <= n} ||x_i - zbar||`.
    pub sum_state_gap: f64,
    /// `max_i ||y_i||`.
    pub max_surplus: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub steps: Vec<StepRecord>,
    pub windows: Vec<WindowRecord>,
    pub disagreement: Vec<DisagreementRecord>,
}

impl RunMetrics {
    pub fn last(&self) -> Option<&StepRecord> {
        self.steps.last()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.residual).collect()
    }

    /// First step whose residual is at or below `threshold`.
    pub fn steps_to(&self, threshold: f64) -> Option<usize> {
        self.steps.iter().find(|s| s.residual <= threshold).map(|s| s.t)
    }

    /// First step whose loss is at or below `threshold`.
    pub fn steps_to_loss(&self, threshold: f64) -> Option<usize> {
        self.steps.iter().find(|s| s.loss <= threshold).map(|s| s.t)
    }

    /// Largest per-window sigma seen, if spectra were tracked.
    pub fn sigma_hat(&self) -> Option<f64> {
        self.windows.iter().map(|w| w.sigma).reduce(f64::max)
    }
}
