//! Two-stage dimensional synthesis: a genetic algorithm locates the region
//! of a good mechanism, steepest descent polishes it.

mod descent;
mod ga;

pub use descent::{central_gradient, steepest_descent, DescentConfig, DescentOutcome};
pub use ga::{
    decode, gray_to_integer, integer_to_gray, linear_scale, roulette_select, run_ga, GAConfig,
    GaOutcome,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Point;
use crate::mechanism::{MechanismDims, TaskSpec};
use crate::objective::{evaluate, ObjectiveBreakdown, ObjectiveOptions, ObjectiveWeights};
use crate::table;

pub const HISTORY_CSV_HEADER: [&str; 2] = ["generation", "total"];

/// Closed interval searched for one gene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneRange {
    pub lower: f64,
    pub upper: f64,
}

impl GeneRange {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn span(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lower..=self.upper).contains(&x)
    }
}

/// A gene that is either searched or pinned. In JSON a bare number pins the
/// gene, an object `{lower, upper}` frees it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeneBound {
    Fixed(f64),
    Free(GeneRange),
}

/// Search box for the eight design variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignBounds {
    pub p: GeneRange,
    pub q: GeneRange,
    pub r: GeneRange,
    pub s: GeneRange,
    pub servo_x: GeneRange,
    pub servo_y: GeneRange,
    pub cv_x: GeneBound,
    pub cv_y: GeneBound,
}

impl Default for DesignBounds {
    fn default() -> Self {
        let length = GeneRange::new(10.0, 500.0);
        let plane = GeneRange::new(-500.0, 500.0);
        Self {
            p: length,
            q: length,
            r: length,
            s: length,
            servo_x: plane,
            servo_y: plane,
            cv_x: GeneBound::Fixed(0.0),
            cv_y: GeneBound::Fixed(0.0),
        }
    }
}

impl DesignBounds {
    /// Box of half-width `fraction * |value|` (at least `min_half_width`)
    /// around every coordinate of `dims`, with the CV pivot pinned.
    pub fn around(dims: &MechanismDims, fraction: f64, min_half_width: f64) -> Self {
        let around = |v: f64| {
            let half = (fraction * v.abs()).max(min_half_width);
            GeneRange::new(v - half, v + half)
        };
        Self {
            p: around(dims.p),
            q: around(dims.q),
            r: around(dims.r),
            s: around(dims.s),
            servo_x: around(dims.servo_ground.x),
            servo_y: around(dims.servo_ground.y),
            cv_x: GeneBound::Fixed(dims.cv_ground.x),
            cv_y: GeneBound::Fixed(dims.cv_ground.y),
        }
    }

    fn genes(&self) -> [GeneBound; 8] {
        use GeneBound::Free;
        [
            Free(self.p),
            Free(self.q),
            Free(self.r),
            Free(self.s),
            Free(self.servo_x),
            Free(self.servo_y),
            self.cv_x,
            self.cv_y,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        const NAMES: [&str; 8] = ["p", "q", "r", "s", "servo_x", "servo_y", "cv_x", "cv_y"];
        for (name, gene) in NAMES.iter().zip(self.genes()) {
            // Written negated so NaN bounds fail too.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            match gene {
                GeneBound::Free(range) if !(range.lower < range.upper) => {
                    return Err(invalid(format!(
                        "bounds for {name}: lower {} must be below upper {}",
                        range.lower, range.upper
                    )));
                }
                GeneBound::Fixed(v) if !v.is_finite() => {
                    return Err(invalid(format!("fixed value for {name} is not finite")));
                }
                _ => {}
            }
        }
        for (name, range) in [("p", self.p), ("q", self.q), ("r", self.r), ("s", self.s)] {
            if range.lower <= 0.0 {
                return Err(invalid(format!(
                    "link {name} bounds must be strictly positive"
                )));
            }
        }
        Ok(())
    }

    /// Ranges of the searched genes, in gene order.
    pub fn free_ranges(&self) -> Vec<GeneRange> {
        self.genes()
            .into_iter()
            .filter_map(|g| match g {
                GeneBound::Free(range) => Some(range),
                GeneBound::Fixed(_) => None,
            })
            .collect()
    }

    /// Builds a mechanism from the searched genes.
    pub fn to_dims(&self, free: &[f64]) -> MechanismDims {
        let mut free = free.iter().copied();
        let mut next = |gene: GeneBound| match gene {
            GeneBound::Fixed(v) => v,
            GeneBound::Free(_) => free.next().expect("one value per free gene"),
        };
        let [p, q, r, s, sx, sy, cx, cy] = self.genes().map(&mut next);
        MechanismDims {
            p,
            q,
            r,
            s,
            servo_ground: Point::new(sx, sy),
            cv_ground: Point::new(cx, cy),
        }
    }

    /// Searched genes of `dims`, in gene order.
    pub fn from_dims(&self, dims: &MechanismDims) -> Vec<f64> {
        let all = [
            dims.p,
            dims.q,
            dims.r,
            dims.s,
            dims.servo_ground.x,
            dims.servo_ground.y,
            dims.cv_ground.x,
            dims.cv_ground.y,
        ];
        self.genes()
            .iter()
            .zip(all)
            .filter_map(|(g, v)| matches!(g, GeneBound::Free(_)).then_some(v))
            .collect()
    }

    pub fn contains(&self, dims: &MechanismDims) -> bool {
        let values = self.from_dims(dims);
        self.free_ranges()
            .iter()
            .zip(values)
            .all(|(r, v)| r.contains(v))
            && [(self.cv_x, dims.cv_ground.x), (self.cv_y, dims.cv_ground.y)]
                .iter()
                .all(|(g, v)| !matches!(g, GeneBound::Fixed(f) if f != v))
    }
}

/// Everything a synthesis run needs besides the task.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub ga: GAConfig,
    pub bounds: DesignBounds,
    pub weights: ObjectiveWeights,
    pub objective: ObjectiveOptions,
    pub descent: DescentConfig,
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        self.ga.validate()?;
        self.bounds.validate()?;
        self.weights.validate()
    }
}

/// Best mechanism of the GA stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaRun {
    pub best_dims: MechanismDims,
    pub best: ObjectiveBreakdown,
    /// Best-so-far total per generation.
    pub history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub best_dims: MechanismDims,
    pub best: ObjectiveBreakdown,
    pub history: Vec<f64>,
    pub refined_dims: MechanismDims,
    pub refined: ObjectiveBreakdown,
}

impl SynthesisResult {
    pub fn history_csv(&self) -> String {
        history_csv(&self.history)
    }
}

pub fn history_csv(history: &[f64]) -> String {
    let generations: Vec<f64> = (0..history.len()).map(|g| g as f64).collect();
    table::write_table(&HISTORY_CSV_HEADER, &[&generations, history])
}

fn total_of(
    dims: &MechanismDims,
    task: &TaskSpec,
    weights: &ObjectiveWeights,
    options: &ObjectiveOptions,
) -> Option<ObjectiveBreakdown> {
    evaluate(dims, task, weights, options)
        .ok()
        .filter(|b| b.total.is_finite())
}

/// Genetic-algorithm stage over the free genes of `bounds`.
pub fn ga_run(
    task: &TaskSpec,
    bounds: &DesignBounds,
    config: &GAConfig,
    weights: &ObjectiveWeights,
    options: &ObjectiveOptions,
) -> Result<GaRun> {
    task.validate()?;
    bounds.validate()?;
    weights.validate()?;
    let ranges = bounds.free_ranges();
    let outcome = run_ga(&ranges, config, |genes| {
        total_of(&bounds.to_dims(genes), task, weights, options).map(|b| b.total)
    })?;
    let best_dims = bounds.to_dims(&outcome.best_genes);
    let best = total_of(&best_dims, task, weights, options).ok_or(Error::InfeasiblePopulation)?;
    Ok(GaRun {
        best_dims,
        best,
        history: outcome.history,
    })
}

/// Steepest-descent polish of `start` inside `bounds`. Returns `start`
/// unchanged when no descent direction helps.
pub fn refine(
    start: &MechanismDims,
    task: &TaskSpec,
    bounds: &DesignBounds,
    weights: &ObjectiveWeights,
    options: &ObjectiveOptions,
    config: &DescentConfig,
) -> Result<(MechanismDims, ObjectiveBreakdown)> {
    let start_score = evaluate(start, task, weights, options)?;
    let ranges = bounds.free_ranges();
    let outcome = steepest_descent(
        |genes| total_of(&bounds.to_dims(genes), task, weights, options).map(|b| b.total),
        |genes| {
            total_of(&bounds.to_dims(genes), task, weights, options)
                .map(|b| b.smooth_total(weights))
        },
        &bounds.from_dims(start),
        &ranges,
        config,
    );
    let refined = bounds.to_dims(&outcome.point);
    match total_of(&refined, task, weights, options) {
        Some(score) if score.total <= start_score.total => Ok((refined, score)),
        _ => Ok((*start, start_score)),
    }
}

/// GA followed by steepest descent.
pub fn synthesize(task: &TaskSpec, config: &SynthesisConfig) -> Result<SynthesisResult> {
    config.validate()?;
    let run = ga_run(
        task,
        &config.bounds,
        &config.ga,
        &config.weights,
        &config.objective,
    )?;
    let (refined_dims, refined) = refine(
        &run.best_dims,
        task,
        &config.bounds,
        &config.weights,
        &config.objective,
        &config.descent,
    )?;
    Ok(SynthesisResult {
        best_dims: run.best_dims,
        best: run.best,
        history: run.history,
        refined_dims,
        refined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bounds_contain_reference_mechanism() {
        let bounds = DesignBounds::default();
        assert!(bounds.validate().is_ok());
        assert!(bounds.contains(&MechanismDims::REFERENCE));
        assert_eq!(bounds.free_ranges().len(), 6);
    }

    #[test]
    fn genes_round_trip_through_dims() {
        let bounds = DesignBounds {
            cv_x: GeneBound::Free(GeneRange::new(-10.0, 10.0)),
            ..DesignBounds::default()
        };
        let dims = MechanismDims {
            cv_ground: Point::new(3.0, 0.0),
            ..MechanismDims::REFERENCE
        };
        let genes = bounds.from_dims(&dims);
        assert_eq!(genes.len(), 7);
        assert_eq!(bounds.to_dims(&genes), dims);
    }

    #[test]
    fn bounds_json_fixed_or_free() {
        let json = r#"{
            "p": {"lower": 10, "upper": 500}, "q": {"lower": 10, "upper": 500},
            "r": {"lower": 10, "upper": 500}, "s": {"lower": 10, "upper": 500},
            "servo_x": {"lower": -500, "upper": 500}, "servo_y": {"lower": -500, "upper": 500},
            "cv_x": 0.0, "cv_y": {"lower": -5, "upper": 5}
        }"#;
        let bounds: DesignBounds = serde_json::from_str(json).unwrap();
        assert_eq!(bounds.cv_x, GeneBound::Fixed(0.0));
        assert_eq!(bounds.cv_y, GeneBound::Free(GeneRange::new(-5.0, 5.0)));
    }

    #[test]
    fn inverted_or_nonpositive_bounds_rejected() {
        let bounds = DesignBounds {
            q: GeneRange::new(5.0, 4.0),
            ..Default::default()
        };
        assert!(bounds.validate().is_err());
        let bounds = DesignBounds {
            s: GeneRange::new(0.0, 4.0),
            ..Default::default()
        };
        assert!(bounds.validate().is_err());
    }

    #[test]
    fn history_csv_layout() {
        assert_eq!(history_csv(&[3.5, 2.0]), "generation,total\n0,3.5\n1,2\n");
    }
}
