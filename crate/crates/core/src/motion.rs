//! One-cycle motion profiles: periodic differentiation, harmonic content,
//! and resolver-count unit conversions.

use std::f64::consts::TAU;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::table;

/// Resolver resolution of both axes, counts per revolution.
pub const COUNTS_PER_REV: f64 = 4096.0;

/// Smallest profile [`differentiate`] accepts.
pub const MIN_PROFILE_LEN: usize = 4;

pub const PROFILE_CSV_HEADER: [&str; 2] = ["theta2_deg", "value"];

/// Angles sampled at uniform CV-input spacing over one cycle.
///
/// Sample `i` sits at `theta2 = 2 pi i / k`, and the last sample is adjacent
/// to the first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    pub values: Vec<f64>,
    /// CV input speed, rad/s.
    pub cv_speed: f64,
}

impl MotionProfile {
    pub fn new(values: Vec<f64>, cv_speed: f64) -> Self {
        Self { values, cv_speed }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time between adjacent samples.
    pub fn time_step(&self) -> f64 {
        TAU / (self.cv_speed * self.values.len() as f64)
    }

    /// Whole turns gained over one cycle (nonzero for a fully rotating axis).
    ///
    /// The sample following the last one is `values[0] + cycle_offset()`.
    pub fn cycle_offset(&self) -> f64 {
        match (self.values.first(), self.values.last()) {
            (Some(first), Some(last)) if self.values.len() > 1 => {
                TAU * ((last - first) / TAU).round()
            }
            _ => 0.0,
        }
    }

    /// Value at periodic index `i` (any integer), unrolled across cycles.
    pub fn at(&self, i: isize) -> f64 {
        let k = self.values.len() as isize;
        let cycle = i.div_euclid(k);
        self.values[i.rem_euclid(k) as usize] + cycle as f64 * self.cycle_offset()
    }

    /// CV input angle of every sample, degrees.
    pub fn theta2_degrees(&self) -> Vec<f64> {
        let k = self.values.len() as f64;
        (0..self.values.len())
            .map(|i| 360.0 * i as f64 / k)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        table::write_table(&PROFILE_CSV_HEADER, &[&self.theta2_degrees(), &self.values])
    }

    /// Loads a `theta2_deg,value` CSV. Rows must sit on the uniform grid.
    pub fn from_csv(text: &str, cv_speed: f64) -> Result<Self> {
        let columns = table::read_table(text, &PROFILE_CSV_HEADER)?;
        let (theta2, values) = (&columns[0], &columns[1]);
        let k = values.len();
        if k == 0 {
            return Err(invalid("profile CSV has no rows"));
        }
        for (i, t) in theta2.iter().enumerate() {
            let expected = 360.0 * i as f64 / k as f64;
            if (t - expected).abs() > 1e-6 {
                return Err(invalid(format!(
                    "profile row {} at {t} deg is off the uniform grid ({expected} deg)",
                    i + 1
                )));
            }
        }
        Ok(Self::new(values.clone(), cv_speed))
    }
}

/// Fourier coefficients `(a_j, b_j)` for harmonics `j = 1..=n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSpectrum {
    pub coefficients: Vec<(f64, f64)>,
}

impl HarmonicSpectrum {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.coefficients.iter().map(|&(a, b)| a.hypot(b)).collect()
    }
}

/// Velocity (rad/s) and acceleration (rad/s^2) by periodic second-order
/// central differences.
pub fn differentiate(profile: &MotionProfile) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = profile.len();
    if k < MIN_PROFILE_LEN {
        return Err(Error::ProfileTooShort {
            len: k,
            min: MIN_PROFILE_LEN,
        });
    }
    if !(profile.cv_speed > 0.0 && profile.cv_speed.is_finite()) {
        return Err(invalid(format!(
            "cv_speed must be positive, got {}",
            profile.cv_speed
        )));
    }
    let dt = profile.time_step();
    let mut velocity = Vec::with_capacity(k);
    let mut acceleration = Vec::with_capacity(k);
    for i in 0..k as isize {
        let (prev, here, next) = (profile.at(i - 1), profile.at(i), profile.at(i + 1));
        velocity.push((next - prev) / (2.0 * dt));
        acceleration.push((next - 2.0 * here + prev) / (dt * dt));
    }
    Ok((velocity, acceleration))
}

/// Largest harmonic count [`fourier`] accepts for `k` samples.
pub fn max_harmonics(k: usize) -> usize {
    // n < k/2
    k.saturating_sub(1) / 2
}

pub fn fourier(profile: &MotionProfile, n: usize) -> Result<HarmonicSpectrum> {
    harmonic_spectrum(&profile.values, n)
}

/// `a_j = 2/k sum x_i cos(2 pi j i / k)`, `b_j = 2/k sum x_i sin(2 pi j i / k)`,
/// `j = 1..=n`. The mean is not part of the spectrum.
pub fn harmonic_spectrum(values: &[f64], n: usize) -> Result<HarmonicSpectrum> {
    let k = values.len();
    if n == 0 {
        return Err(invalid("at least one harmonic is required"));
    }
    if n > max_harmonics(k) {
        return Err(Error::HarmonicOverflow {
            requested: n,
            max: max_harmonics(k),
            samples: k,
        });
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(k);
    let mut buffer: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buffer);

    // X_j = sum x_i (cos - i sin)
    let scale = 2.0 / k as f64;
    let coefficients = buffer[1..=n]
        .iter()
        .map(|c| (scale * c.re, -scale * c.im))
        .collect();
    Ok(HarmonicSpectrum { coefficients })
}

pub fn counts_to_degrees(counts: f64) -> f64 {
    counts * 360.0 / COUNTS_PER_REV
}

pub fn counts_per_sec_to_rad_per_sec(cps: f64) -> f64 {
    cps * TAU / COUNTS_PER_REV
}

pub fn counts_per_sec_to_rpm(cps: f64) -> f64 {
    cps * 60.0 / COUNTS_PER_REV
}
