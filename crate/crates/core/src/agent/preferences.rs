use std::collections::BTreeMap;

use crate::services::Slo;

/// Log-preferences over the values of SLO indicator variables.
///
/// Index 0 of an indicator means fulfilled and gets `+strength * weight`;
/// index 1 gets the negation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Preferences {
    entries: BTreeMap<String, Vec<f64>>,
}

impl Preferences {
    /// `indicators` pairs each variable name with its SLO.
    pub fn from_slos<'a>(
        indicators: impl IntoIterator<Item = (String, &'a Slo)>,
        strength: f64,
    ) -> Self {
        let mut p = Self::default();
        for (var, slo) in indicators {
            p.set(var, strength * slo.weight);
        }
        p
    }

    pub fn set(&mut self, var: impl Into<String>, magnitude: f64) {
        self.entries.insert(var.into(), vec![magnitude, -magnitude]);
    }

    pub fn log_preference(&self, var: &str, value: usize) -> f64 {
        self.entries
            .get(var)
            .and_then(|v| v.get(value))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn contains(&self, var: &str) -> bool {
        self.entries.contains_key(var)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::services::{Comparator, Metric};

    #[test]
    fn weights_scale_preferences() {
        let slo = Slo {
            id: "lat".into(),
            service: "s".into(),
            metric: Metric::LatencyMs,
            comparator: Comparator::AtMost,
            threshold: 10.0,
            unit: None,
            weight: 2.0,
        };
        let p = Preferences::from_slos([("slo_lat".to_string(), &slo)], 1.5);
        assert_eq!(p.log_preference("slo_lat", 0), 3.0);
        assert_eq!(p.log_preference("slo_lat", 1), -3.0);
        assert_eq!(p.log_preference("other", 0), 0.0);
    }
}
