//! Generational binary genetic algorithm: Gray-coded genes, linear fitness
//! scaling, roulette-wheel selection, one-point crossover, bitwise mutation
//! and a single elite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GeneRange;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GAConfig {
    pub population_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub generations: usize,
    pub rng_seed: u64,
    pub bits_per_gene: u32,
    pub scaling_multiple: f64,
}

impl Default for GAConfig {
    fn default() -> Self {
        Self {
            population_size: 40,
            crossover_rate: 0.85,
            mutation_rate: 0.03,
            generations: 200,
            rng_seed: 0,
            bits_per_gene: 16,
            scaling_multiple: 2.0,
        }
    }
}

impl GAConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 || !self.population_size.is_multiple_of(2) {
            return Err(invalid(format!(
                "population_size must be even and at least 4, got {}",
                self.population_size
            )));
        }
        for (name, rate) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(invalid(format!("{name} must lie in [0, 1], got {rate}")));
            }
        }
        if self.generations == 0 {
            return Err(invalid("generations must be at least 1"));
        }
        if !(1..=52).contains(&self.bits_per_gene) {
            return Err(invalid(format!(
                "bits_per_gene must be 1..=52, got {}",
                self.bits_per_gene
            )));
        }
        if !(self.scaling_multiple >= 1.0 && self.scaling_multiple.is_finite()) {
            return Err(invalid(format!(
                "scaling_multiple must be >= 1, got {}",
                self.scaling_multiple
            )));
        }
        Ok(())
    }
}

/// Outcome of a GA run over real-valued genes.
#[derive(Clone, Debug, PartialEq)]
pub struct GaOutcome {
    pub best_genes: Vec<f64>,
    pub best_value: f64,
    /// Best objective seen up to and including each generation.
    pub history: Vec<f64>,
}

/// Decodes a Gray-coded bit string (most significant bit first).
pub fn gray_to_integer(bits: &[bool]) -> u64 {
    let mut value = 0u64;
    let mut binary = false;
    for &g in bits {
        binary ^= g;
        value = (value << 1) | binary as u64;
    }
    value
}

/// Gray encoding of `value` in `width` bits, most significant first.
pub fn integer_to_gray(value: u64, width: u32) -> Vec<bool> {
    let gray = value ^ (value >> 1);
    (0..width).rev().map(|i| (gray >> i) & 1 == 1).collect()
}

/// Maps each gene's bit slice to a value on its fixed-point grid.
pub fn decode(chromosome: &[bool], ranges: &[GeneRange], bits_per_gene: u32) -> Vec<f64> {
    let width = bits_per_gene as usize;
    let levels = ((1u64 << bits_per_gene) - 1) as f64;
    ranges
        .iter()
        .zip(chromosome.chunks(width))
        .map(|(range, bits)| {
            let fraction = gray_to_integer(bits) as f64 / levels;
            range.lower + (range.upper - range.lower) * fraction
        })
        .collect()
}

/// Affine map `f' = a f + b` keeping the mean and stretching the best to
/// `multiple` times the mean. When that would push the worst below zero the
/// map instead pins the worst at zero, still keeping the mean.
pub fn linear_scale(raw: &[f64], multiple: f64) -> Vec<f64> {
    assert!(!raw.is_empty(), "linear scaling needs at least one fitness");
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);

    let (a, b) = if min * (multiple - 1.0) > multiple * mean - max {
        let spread = max - mean;
        if spread <= 0.0 {
            (1.0, 0.0)
        } else {
            (
                (multiple - 1.0) * mean / spread,
                mean * (max - multiple * mean) / spread,
            )
        }
    } else {
        let spread = mean - min;
        if spread <= 0.0 {
            (1.0, 0.0)
        } else {
            (mean / spread, -min * mean / spread)
        }
    };
    raw.iter().map(|f| (a * f + b).max(0.0)).collect()
}

/// Index drawn with probability proportional to its fitness; uniform when
/// every fitness is zero.
pub fn roulette_select<R: Rng + ?Sized>(fitness: &[f64], rng: &mut R) -> usize {
    assert!(
        !fitness.is_empty(),
        "roulette needs at least one individual"
    );
    let total: f64 = fitness.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return rng.gen_range(0..fitness.len());
    }
    let target = rng.gen::<f64>() * total;
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &f) in fitness.iter().enumerate() {
        if f <= 0.0 {
            continue;
        }
        cumulative += f;
        last_positive = i;
        if cumulative > target {
            return i;
        }
    }
    last_positive
}

fn fitness_of(value: Option<f64>) -> f64 {
    match value {
        Some(v) => 1.0 / (1.0 + v.max(0.0)),
        None => 0.0,
    }
}

/// Minimises `objective` over `ranges`. `None` (or a non-finite value)
/// marks a degenerate individual.
pub fn run_ga<F>(ranges: &[GeneRange], config: &GAConfig, objective: F) -> Result<GaOutcome>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    config.validate()?;
    if ranges.is_empty() {
        return Err(invalid("nothing to optimise: no free genes"));
    }
    let bits = config.bits_per_gene as usize;
    let length = bits * ranges.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let mut population: Vec<Vec<bool>> = (0..config.population_size)
        .map(|_| (0..length).map(|_| rng.gen::<bool>()).collect())
        .collect();

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut history = Vec::with_capacity(config.generations);

    for generation in 0..config.generations {
        let genes: Vec<Vec<f64>> = population
            .iter()
            .map(|c| decode(c, ranges, config.bits_per_gene))
            .collect();
        let values: Vec<Option<f64>> = genes
            .par_iter()
            .map(|g| objective(g).filter(|v| v.is_finite()))
            .collect();

        let generation_best = values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, v)) = generation_best {
            if best.as_ref().is_none_or(|(_, b)| v < *b) {
                best = Some((genes[i].clone(), v));
            }
        }
        history.push(best.as_ref().map_or(f64::INFINITY, |(_, v)| *v));

        if generation + 1 == config.generations {
            break;
        }

        let raw: Vec<f64> = values.iter().map(|v| fitness_of(*v)).collect();
        let scaled = linear_scale(&raw, config.scaling_multiple);

        let elite = generation_best.map_or(0, |(i, _)| i);
        let mut next = Vec::with_capacity(config.population_size);
        next.push(population[elite].clone());
        while next.len() < config.population_size {
            let mut a = population[roulette_select(&scaled, &mut rng)].clone();
            let mut b = population[roulette_select(&scaled, &mut rng)].clone();
            if rng.gen::<f64>() < config.crossover_rate {
                let cut = rng.gen_range(1..length.max(2));
                for i in cut..length {
                    std::mem::swap(&mut a[i], &mut b[i]);
                }
            }
            for child in [&mut a, &mut b] {
                for bit in child.iter_mut() {
                    if rng.gen::<f64>() < config.mutation_rate {
                        *bit = !*bit;
                    }
                }
            }
            next.push(a);
            if next.len() < config.population_size {
                next.push(b);
            }
        }
        population = next;
    }

    let (best_genes, best_value) = best.ok_or(Error::InfeasiblePopulation)?;
    Ok(GaOutcome {
        best_genes,
        best_value,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gray_round_trip_and_adjacency() {
        for v in 0..256u64 {
            assert_eq!(gray_to_integer(&integer_to_gray(v, 8)), v);
        }
        for v in 0..255u64 {
            let a = integer_to_gray(v, 8);
            let b = integer_to_gray(v + 1, 8);
            assert_eq!(a.iter().zip(&b).filter(|(x, y)| x != y).count(), 1);
        }
    }

    #[test]
    fn decode_hits_both_bounds() {
        let ranges = [GeneRange::new(-2.0, 6.0), GeneRange::new(10.0, 500.0)];
        let mut chromosome = integer_to_gray(0, 16);
        chromosome.extend(integer_to_gray(u16::MAX as u64, 16));
        assert_eq!(decode(&chromosome, &ranges, 16), vec![-2.0, 500.0]);
    }

    #[test]
    fn scaling_goldens() {
        assert_eq!(linear_scale(&[0.7; 5], 2.0), vec![0.7; 5]);
        let s = linear_scale(&[1.0, 3.0], 2.0);
        assert!(
            (s[0] - 0.0).abs() < 1e-12 && (s[1] - 4.0).abs() < 1e-12,
            "{s:?}"
        );
        // Regular branch: max becomes twice the mean.
        let s = linear_scale(&[2.0, 2.5, 3.0, 2.5], 2.0);
        assert!((s.iter().sum::<f64>() / 4.0 - 2.5).abs() < 1e-12);
        assert!((s[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn roulette_zero_weights_never_chosen() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(roulette_select(&[0.0, 0.0, 5.0], &mut rng), 2);
        }
        let picks: Vec<usize> = (0..200)
            .map(|_| roulette_select(&[0.0, 0.0], &mut rng))
            .collect();
        assert!(picks.contains(&0) && picks.contains(&1));
    }

    #[test]
    fn config_validation() {
        assert!(GAConfig::default().validate().is_ok());
        assert!(GAConfig {
            population_size: 41,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(GAConfig {
            population_size: 2,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(GAConfig {
            mutation_rate: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(GAConfig {
            generations: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn all_degenerate_is_infeasible() {
        let ranges = [GeneRange::new(0.0, 1.0)];
        let config = GAConfig {
            generations: 3,
            population_size: 4,
            ..Default::default()
        };
        assert_eq!(
            run_ga(&ranges, &config, |_| None),
            Err(Error::InfeasiblePopulation)
        );
    }

    proptest! {
        #[test]
        fn scaling_preserves_mean_without_negatives(
            raw in prop::collection::vec(0.0f64..10.0, 1..60),
            multiple in 1.0f64..4.0,
        ) {
            let scaled = linear_scale(&raw, multiple);
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            let scaled_mean = scaled.iter().sum::<f64>() / raw.len() as f64;
            prop_assert!((mean - scaled_mean).abs() <= 1e-9 * (1.0 + mean));
            prop_assert!(scaled.iter().all(|&f| f >= 0.0));
            let max = scaled.iter().copied().fold(0.0, f64::max);
            prop_assert!(max <= multiple * mean * (1.0 + 1e-9) + 1e-12);
        }
    }
}
