use serde::Serialize;

/// One failed check, tagged with where it happened (vertex, edge, element index).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub location: String,
    pub message: String,
}

/// Outcome of a validation pass. Validation never errors; failures are collected here.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    /// Largest absolute deviation seen across all numeric checks.
    pub max_deviation: f64,
    pub failures: Vec<Failure>,
}

impl ValidationReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn fail(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.failures.push(Failure {
            location: location.into(),
            message: message.into(),
        });
    }

    pub fn record_deviation(&mut self, deviation: f64) {
        if deviation > self.max_deviation || deviation.is_nan() {
            self.max_deviation = deviation;
        }
    }

    /// Folds another report in, prefixing its locations.
    pub fn absorb(&mut self, prefix: &str, other: ValidationReport) {
        self.record_deviation(other.max_deviation);
        for f in other.failures {
            let location = if f.location.is_empty() {
                prefix.to_string()
            } else {
                format!("{prefix}: {}", f.location)
            };
            self.failures.push(Failure {
                location,
                message: f.message,
            });
        }
    }
}
