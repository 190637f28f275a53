//! The four-term synthesis objective and its weighted sum.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mechanism::{track_closure, ClosureTrace, MechanismDims, TaskSpec};
use crate::motion::{harmonic_spectrum, HarmonicSpectrum};

/// Harmonics penalised when no count is configured.
pub const DEFAULT_HARMONICS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveWeights {
    pub w_error: f64,
    pub w_mob: f64,
    pub w_swept: f64,
    pub w_harm: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            w_error: 1.0,
            w_mob: 1.0,
            w_swept: 0.75,
            w_harm: 0.5,
        }
    }
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_error, self.w_mob, self.w_swept, self.w_harm];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(crate::error::invalid(format!(
                "weights must be non-negative: {all:?}"
            )));
        }
        Ok(())
    }

    /// Parses `error,mobility,swept,harmonic`.
    pub fn parse_list(text: &str) -> Result<Self> {
        let values: Vec<f64> = text
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| crate::error::invalid(format!("bad weight list `{text}`: {e}")))?;
        let [w_error, w_mob, w_swept, w_harm] = values[..] else {
            return Err(crate::error::invalid(format!(
                "weight list needs 4 values (e,m,s,h), got {}",
                values.len()
            )));
        };
        let weights = Self {
            w_error,
            w_mob,
            w_swept,
            w_harm,
        };
        weights.validate()?;
        Ok(weights)
    }
}

/// Component values and their weighted total.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub error: f64,
    pub harmonic: f64,
    pub swept: f64,
    pub mobility: f64,
    pub total: f64,
}

impl ObjectiveBreakdown {
    pub fn combine(
        error: f64,
        harmonic: f64,
        swept: f64,
        mobility: f64,
        w: &ObjectiveWeights,
    ) -> Self {
        let total =
            w.w_error * error + w.w_mob * mobility + w.w_swept * swept + w.w_harm * harmonic;
        Self {
            error,
            harmonic,
            swept,
            mobility,
            total,
        }
    }

    /// Total without the mobility term.
    pub fn smooth_total(&self, w: &ObjectiveWeights) -> f64 {
        w.w_error * self.error + w.w_swept * self.swept + w.w_harm * self.harmonic
    }
}

/// Reference for servo displacement in the swept-area term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweptBaseline {
    /// Displacement about the cycle mean of theta5.
    #[default]
    Centered,
    /// Raw theta5 angles as they come out of the tracker.
    Raw,
}

/// Evaluation options beyond the weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveOptions {
    pub n_harmonics: usize,
    pub swept_baseline: SweptBaseline,
}

impl Default for ObjectiveOptions {
    fn default() -> Self {
        Self {
            n_harmonics: DEFAULT_HARMONICS,
            swept_baseline: SweptBaseline::Centered,
        }
    }
}

/// `(sum of structural errors)^2`.
pub fn obj_error(trace: &ClosureTrace) -> f64 {
    let sum: f64 = trace.poses.iter().map(|p| p.structural_error).sum();
    sum * sum
}

pub fn obj_harm(spectrum: &HarmonicSpectrum) -> f64 {
    harmonic_content(spectrum)
}

/// `sum_i |c_i|^(i+1)` over harmonics `i = 1..=n`: higher harmonics are
/// punished harder.
pub fn harmonic_content(spectrum: &HarmonicSpectrum) -> f64 {
    spectrum
        .magnitudes()
        .iter()
        .enumerate()
        .map(|(i, m)| m.powi(i as i32 + 2))
        .sum()
}

pub fn obj_swept(trace: &ClosureTrace, s: f64, baseline: SweptBaseline) -> f64 {
    swept_area(&trace.theta5(), s, baseline)
}

/// `s * sqrt(sum d_i^2)` with `d_i` the servo displacement.
pub fn swept_area(theta5: &[f64], s: f64, baseline: SweptBaseline) -> f64 {
    if theta5.is_empty() {
        return 0.0;
    }
    let reference = match baseline {
        SweptBaseline::Centered => {
            // Mean taken relative to the first sample: exact for constant profiles.
            let first = theta5[0];
            first + theta5.iter().map(|t| t - first).sum::<f64>() / theta5.len() as f64
        }
        SweptBaseline::Raw => 0.0,
    };
    s * theta5
        .iter()
        .map(|t| (t - reference).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn obj_mob(m: usize) -> f64 {
    (m as f64).powi(3)
}

/// Combines all four terms for an already tracked trace.
pub fn evaluate_trace(
    trace: &ClosureTrace,
    s: f64,
    weights: &ObjectiveWeights,
    options: &ObjectiveOptions,
) -> Result<ObjectiveBreakdown> {
    let theta5 = trace.theta5();
    let spectrum = harmonic_spectrum(&theta5, options.n_harmonics)?;
    Ok(ObjectiveBreakdown::combine(
        obj_error(trace),
        obj_harm(&spectrum),
        swept_area(&theta5, s, options.swept_baseline),
        obj_mob(trace.m),
        weights,
    ))
}

/// Tracks the closure of `dims` around `task` and scores it.
pub fn evaluate(
    dims: &MechanismDims,
    task: &TaskSpec,
    weights: &ObjectiveWeights,
    options: &ObjectiveOptions,
) -> Result<ObjectiveBreakdown> {
    let trace = track_closure(dims, task)?;
    evaluate_trace(&trace, dims.s, weights, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::mechanism::PoseSample;
    use proptest::prelude::*;

    fn trace_with(errors: &[f64], theta5: &[f64], m: usize) -> ClosureTrace {
        let poses = errors
            .iter()
            .zip(theta5)
            .map(|(&e, &t)| PoseSample {
                theta2: 0.0,
                theta3: 0.0,
                theta4: 0.0,
                theta5: t,
                actual: Point::ORIGIN,
                structural_error: e,
                mobile: true,
            })
            .collect();
        ClosureTrace {
            poses,
            m,
            branch_id: 0,
        }
    }

    fn spectrum(magnitudes: &[f64]) -> HarmonicSpectrum {
        HarmonicSpectrum {
            coefficients: magnitudes.iter().map(|&m| (0.0, m)).collect(),
        }
    }

    #[test]
    fn error_goldens() {
        assert_eq!(obj_error(&trace_with(&[0.0, 0.0], &[0.0, 0.0], 0)), 0.0);
        assert_eq!(obj_error(&trace_with(&[2.0], &[0.0], 0)), 4.0);
        assert_eq!(obj_error(&trace_with(&[3.0, 4.0], &[0.0, 0.0], 0)), 49.0);
    }

    #[test]
    fn harmonic_goldens() {
        assert_eq!(obj_harm(&spectrum(&[0.0, 0.0, 0.0])), 0.0);
        assert_eq!(obj_harm(&spectrum(&[2.0])), 4.0);
        assert_eq!(obj_harm(&spectrum(&[1.0, 2.0])), 9.0);
        // a and b both count
        let s = HarmonicSpectrum {
            coefficients: vec![(3.0, 4.0)],
        };
        assert_eq!(obj_harm(&s), 25.0);
    }

    #[test]
    fn swept_goldens() {
        let t = trace_with(&[0.0; 3], &[0.4; 3], 0);
        assert_eq!(obj_swept(&t, 150.0, SweptBaseline::Centered), 0.0);
        let t = trace_with(&[0.0; 2], &[1.0, -1.0], 0);
        let v = obj_swept(&t, 150.0, SweptBaseline::Centered);
        assert!((v - 150.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((v - 212.13).abs() < 0.005);
        let t = trace_with(&[0.0; 2], &[2.0, 0.0], 0);
        assert_eq!(obj_swept(&t, 10.0, SweptBaseline::Raw), 20.0);
    }

    #[test]
    fn mobility_goldens() {
        assert_eq!(obj_mob(0), 0.0);
        assert_eq!(obj_mob(1), 1.0);
        assert_eq!(obj_mob(2), 8.0);
    }

    #[test]
    fn default_weighted_sum() {
        let b = ObjectiveBreakdown::combine(1.0, 1.0, 1.0, 1.0, &ObjectiveWeights::default());
        assert_eq!(b.total, 3.25);
    }

    #[test]
    fn weight_list_parsing() {
        let w = ObjectiveWeights::parse_list("1, 1,0.75,0.5").unwrap();
        assert_eq!(w, ObjectiveWeights::default());
        assert!(ObjectiveWeights::parse_list("1,2,3").is_err());
        assert!(ObjectiveWeights::parse_list("1,2,3,-1").is_err());
        assert!(ObjectiveWeights::parse_list("1,x,3,1").is_err());
    }

    proptest! {
        #[test]
        fn error_is_strictly_monotone(
            errors in prop::collection::vec(0.0f64..100.0, 1..20),
            idx in any::<prop::sample::Index>(),
            bump in 1e-3f64..10.0,
        ) {
            let i = idx.index(errors.len());
            let mut bigger = errors.clone();
            bigger[i] += bump;
            let zeros = vec![0.0; errors.len()];
            prop_assert!(obj_error(&trace_with(&bigger, &zeros, 0)) > obj_error(&trace_with(&errors, &zeros, 0)));
        }

        #[test]
        fn centered_terms_ignore_constant_offsets(
            theta5 in prop::collection::vec(-3.0f64..3.0, 8..40),
            shift in -6.0f64..6.0,
        ) {
            let moved: Vec<f64> = theta5.iter().map(|t| t + shift).collect();
            let a = swept_area(&theta5, 120.0, SweptBaseline::Centered);
            let b = swept_area(&moved, 120.0, SweptBaseline::Centered);
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
            let n = crate::motion::max_harmonics(theta5.len()).min(DEFAULT_HARMONICS);
            let ha = harmonic_content(&harmonic_spectrum(&theta5, n).unwrap());
            let hb = harmonic_content(&harmonic_spectrum(&moved, n).unwrap());
            prop_assert!((ha - hb).abs() <= 1e-9 * (1.0 + ha));
        }

        #[test]
        fn mobility_strictly_increasing(a in 0usize..1000, b in 0usize..1000) {
            prop_assume!(a < b);
            prop_assert!(obj_mob(a) < obj_mob(b));
        }

        #[test]
        fn total_is_linear_in_each_component(
            base in prop::array::uniform4(0.0f64..100.0),
            delta in 0.0f64..50.0,
            which in 0usize..4,
        ) {
            let w = ObjectiveWeights::default();
            let weight = [w.w_error, w.w_harm, w.w_swept, w.w_mob][which];
            let mut bumped = base;
            bumped[which] += delta;
            let t0 = ObjectiveBreakdown::combine(base[0], base[1], base[2], base[3], &w).total;
            let t1 = ObjectiveBreakdown::combine(bumped[0], bumped[1], bumped[2], bumped[3], &w).total;
            prop_assert!((t1 - t0 - weight * delta).abs() <= 1e-9 * (1.0 + t1.abs()));
        }
    }
}
