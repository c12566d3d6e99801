//! The synthetic temporal spike-classification task.
//!
//! Each class owns a contiguous group of input neurons and a time window.
//! Inside both, a neuron fires with the peak rate; elsewhere with the base
//! rate. Independent background noise is then OR-ed in, so the firing
//! probability is 1 − (1 − envelope)(1 − noise). Labels cycle through the
//! classes so every class is equally represented.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

use super::Dataset;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTaskSpec {
    pub classes: usize,
    pub neurons: usize,
    pub time_steps: usize,
    /// Length of each class's elevated-rate window, in steps.
    pub window: usize,
    pub base_rate: f64,
    pub peak_rate: f64,
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            neurons: 100,
            time_steps: 10,
            window: 4,
            base_rate: 0.1,
            peak_rate: 0.5,
            noise_rate: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.time_steps == 0 {
            return Err(Error::Invalid("classes and time steps must be positive".into()));
        }
        if self.neurons < self.classes {
            return Err(Error::Invalid(format!(
                "{} neurons cannot hold a group for each of {} classes",
                self.neurons, self.classes
            )));
        }
        if self.window == 0 || self.window > self.time_steps {
            return Err(Error::Invalid(format!(
                "window {} outside 1..={}",
                self.window, self.time_steps
            )));
        }
        for (name, r) in [
            ("base", self.base_rate),
            ("peak", self.peak_rate),
            ("noise", self.noise_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Invalid(format!("{name} rate {r} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Input neurons `[start, end)` carrying class `c`.
    pub fn group(&self, c: usize) -> (usize, usize) {
        let g = self.neurons / self.classes;
        (c * g, (c + 1) * g)
    }

    /// Steps `[start, end)`, 0-based, of class `c`'s window. Window starts
    /// are spread evenly from the first to the last admissible step.
    pub fn window_of(&self, c: usize) -> (usize, usize) {
        let slack = self.time_steps - self.window;
        let start = if self.classes > 1 {
            c * slack / (self.classes - 1)
        } else {
            0
        };
        (start, start + self.window)
    }

    /// Firing probability of neuron `i` at step `t` (0-based) for class `c`.
    pub fn rate(&self, c: usize, t: usize, i: usize) -> f64 {
        let (g0, g1) = self.group(c);
        let (w0, w1) = self.window_of(c);
        let env = if (g0..g1).contains(&i) && (w0..w1).contains(&t) {
            self.peak_rate
        } else {
            self.base_rate
        };
        1.0 - (1.0 - env) * (1.0 - self.noise_rate)
    }
}

pub fn synth_generate<S: Scalar>(spec: &SyntheticTaskSpec, count: usize) -> Result<Dataset<S>> {
    spec.validate()?;
    let mut rng = Rng::with_stream(spec.seed, 3);
    let (t_steps, n) = (spec.time_steps, spec.neurons);
    let mut inputs = Vec::with_capacity(count * t_steps * n);
    let mut labels = Vec::with_capacity(count);
    for k in 0..count {
        let c = k % spec.classes;
        for t in 0..t_steps {
            for i in 0..n {
                let fire = rng.bernoulli(spec.rate(c, t, i));
                inputs.push(if fire { S::one() } else { S::zero() });
            }
        }
        labels.push(c);
    }
    Dataset::new(t_steps, vec![n], spec.classes, inputs, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticTaskSpec {
        SyntheticTaskSpec {
            classes: 4,
            neurons: 8,
            time_steps: 6,
            window: 2,
            base_rate: 0.0,
            peak_rate: 0.0,
            noise_rate: 0.0,
            seed: 5,
        }
    }

    #[test]
    fn silent_task_is_all_zero() {
        let d: Dataset<f64> = synth_generate(&spec(), 20).unwrap();
        assert!(d.all().unwrap().0.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_window_is_all_ones() {
        let s = SyntheticTaskSpec {
            peak_rate: 1.0,
            ..spec()
        };
        let d: Dataset<f64> = synth_generate(&s, 8).unwrap();
        for k in 0..d.len() {
            let c = d.labels()[k];
            let x = d.sample(k);
            for t in 0..6 {
                for i in 0..8 {
                    let inside = i / 2 == c && {
                        let (w0, w1) = s.window_of(c);
                        (w0..w1).contains(&t)
                    };
                    assert_eq!(x[t * 8 + i], if inside { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn windows_cover_the_span() {
        let s = spec();
        assert_eq!(s.window_of(0), (0, 2));
        assert_eq!(s.window_of(3), (4, 6));
        assert_eq!(s.group(3), (6, 8));
    }

    #[test]
    fn frequencies_follow_the_envelope() {
        // Independent oracle: rate = 1 − (1 − env)(1 − noise) with env the
        // peak inside (group, window) and the base elsewhere.
        let s = SyntheticTaskSpec {
            classes: 2,
            neurons: 4,
            time_steps: 4,
            window: 2,
            base_rate: 0.1,
            peak_rate: 0.7,
            noise_rate: 0.2,
            seed: 17,
        };
        let count = 2000;
        let d: Dataset<f64> = synth_generate(&s, count).unwrap();
        let per_class = (count / 2) as f64;
        for c in 0..2 {
            for t in 0..4 {
                for i in 0..4 {
                    let in_group = i / 2 == c;
                    let in_window = if c == 0 { t < 2 } else { t >= 2 };
                    let env = if in_group && in_window { 0.7 } else { 0.1 };
                    let p = 1.0 - (1.0 - env) * 0.8;
                    let hits: f64 = (0..count)
                        .filter(|&k| d.labels()[k] == c)
                        .map(|k| d.sample(k)[t * 4 + i])
                        .sum();
                    let sigma = (p * (1.0 - p) / per_class).sqrt();
                    assert!((hits / per_class - p).abs() <= 3.0 * sigma, "c{c} t{t} i{i}");
                }
            }
        }
    }

    #[test]
    fn generation_is_seeded() {
        let s = SyntheticTaskSpec::default();
        let a: Dataset<f64> = synth_generate(&s, 30).unwrap();
        assert_eq!(a, synth_generate(&s, 30).unwrap());
        assert_ne!(a, synth_generate(&SyntheticTaskSpec { seed: 1, ..s }, 30).unwrap());
    }

    #[test]
    fn invalid_specs() {
        assert!(SyntheticTaskSpec {
            base_rate: 1.5,
            ..spec()
        }
        .validate()
        .is_err());
        assert!(SyntheticTaskSpec { window: 7, ..spec() }.validate().is_err());
        assert!(SyntheticTaskSpec { neurons: 3, ..spec() }.validate().is_err());
    }
}
