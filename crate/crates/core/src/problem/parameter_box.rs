use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ParameterVector;
use crate::error::{Error, Result};

/// The uncertainty box `Θ = Π [θ̄ₖ − εₖ, θ̄ₖ + εₖ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    nominal: ParameterVector,
    half_widths: Vec<f64>,
}

impl ParameterBox {
    pub fn new(nominal: ParameterVector, half_widths: Vec<f64>) -> Result<Self> {
        if half_widths.len() != nominal.len() {
            return Err(Error::DimensionMismatch {
                what: "half widths",
                expected: nominal.len(),
                actual: half_widths.len(),
            });
        }
        if half_widths.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("half widths"));
        }
        if let Some(k) = half_widths.iter().position(|&e| e < 0.0) {
            return Err(Error::InvalidInput(format!(
                "half width {} is negative ({})",
                k + 1,
                half_widths[k]
            )));
        }
        Ok(Self { nominal, half_widths })
    }

    /// Builds `εₖ = rₖ·|θ̄ₖ|`. A single fraction applies to every coordinate.
    pub fn from_relative(nominal: ParameterVector, fractions: &[f64]) -> Result<Self> {
        let p = nominal.len();
        let fractions: Vec<f64> = match fractions.len() {
            1 => vec![fractions[0]; p],
            n if n == p => fractions.to_vec(),
            n => {
                return Err(Error::DimensionMismatch {
                    what: "relative fractions",
                    expected: p,
                    actual: n,
                })
            }
        };
        let half_widths = nominal.iter().zip(&fractions).map(|(t, r)| r * t.abs()).collect();
        Self::new(nominal, half_widths)
    }

    pub fn nominal(&self) -> &ParameterVector {
        &self.nominal
    }

    pub fn half_widths(&self) -> &[f64] {
        &self.half_widths
    }

    pub fn dim(&self) -> usize {
        self.nominal.len()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.nominal.iter().zip(&self.half_widths).map(|(t, e)| t - e).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.nominal.iter().zip(&self.half_widths).map(|(t, e)| t + e).collect()
    }

    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        self.check_membership(theta).is_ok()
    }

    /// Like [`contains`](Self::contains) but names the first offending
    /// coordinate (1-based).
    pub fn check_membership(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.dim(),
                actual: theta.len(),
            });
        }
        for (k, ((t, c), e)) in theta.iter().zip(self.nominal.iter()).zip(&self.half_widths).enumerate() {
            if !((t - c).abs() <= *e) {
                return Err(Error::InvalidInput(format!(
                    "theta_{} = {} lies outside [{}, {}]",
                    k + 1,
                    t,
                    c - e,
                    c + e
                )));
            }
        }
        Ok(())
    }

    /// Draws the `index`-th sample of the study seeded with `seed`. Each index
    /// has its own random stream, so a sample does not depend on how many
    /// others are drawn or in which order.
    pub fn sample_at(&self, seed: u64, index: u64) -> ParameterVector {
        let mut rng = sample_stream(seed, index);
        let values: Vec<f64> = self
            .nominal
            .iter()
            .zip(&self.half_widths)
            .map(|(&c, &e)| {
                let u: f64 = rng.random();
                (c - e + 2.0 * e * u).clamp(c - e, c + e)
            })
            .collect();
        ParameterVector::new(values).expect("box samples are finite")
    }

    /// `count` i.i.d. uniform samples from the box.
    pub fn sample(&self, seed: u64, count: usize) -> Result<Vec<ParameterVector>> {
        if count == 0 {
            return Err(Error::InvalidInput("sample count must be positive".into()));
        }
        Ok((0..count as u64).map(|i| self.sample_at(seed, i)).collect())
    }
}

/// The random stream for sample `index` under the top-level `seed`.
pub fn sample_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::from_slice(v).unwrap()
    }

    #[test]
    fn degenerate_box_returns_nominal() {
        let b = ParameterBox::new(pv(&[1.0, 3.0, 0.1]), vec![0.0; 3]).unwrap();
        for seed in [0, 7, 12345] {
            let s = b.sample(seed, 3).unwrap();
            assert_eq!(s.len(), 3);
            assert!(s.iter().all(|t| t == b.nominal()));
        }
    }

    #[test]
    fn logistic_box_at_forty_percent() {
        let b = ParameterBox::from_relative(pv(&[1.0, 3.0, 0.1]), &[0.4]).unwrap();
        let s = b.sample(7, 5000).unwrap();
        assert_eq!(s.len(), 5000);
        let nominal = [1.0, 3.0, 0.1];
        for k in 0..3 {
            let lo = s.iter().map(|t| t[k]).fold(f64::INFINITY, f64::min);
            let hi = s.iter().map(|t| t[k]).fold(f64::NEG_INFINITY, f64::max);
            assert!(lo >= nominal[k] * 0.6 - 1e-15 && hi <= nominal[k] * 1.4 + 1e-15);
            // 5000 uniform draws cover nearly the whole interval
            assert!(lo < nominal[k] * 0.61 && hi > nominal[k] * 1.39);
        }
    }

    #[test]
    fn advdiff_box_at_twenty_percent() {
        let b = ParameterBox::from_relative(pv(&[10.0, 0.05, 1.0]), &[0.2]).unwrap();
        let s = b.sample(11, 5000).unwrap();
        let bounds = [(8.0, 12.0), (0.04, 0.06), (0.8, 1.2)];
        for t in &s {
            for (k, (lo, hi)) in bounds.iter().enumerate() {
                assert!(t[k] >= lo - 1e-15 && t[k] <= hi + 1e-15);
            }
        }
    }

    #[test]
    fn rejects_bad_requests() {
        let b = ParameterBox::from_relative(pv(&[1.0]), &[0.1]).unwrap();
        assert!(b.sample(0, 0).is_err());
        assert!(ParameterBox::new(pv(&[1.0]), vec![-0.1]).is_err());
        assert!(ParameterBox::new(pv(&[1.0]), vec![f64::NAN]).is_err());
        assert!(ParameterBox::new(pv(&[1.0, 2.0]), vec![0.1]).is_err());
        assert!(ParameterBox::from_relative(pv(&[1.0, 2.0]), &[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn membership_names_the_coordinate() {
        let b = ParameterBox::from_relative(pv(&[10.0, 0.05, 1.0]), &[0.2]).unwrap();
        let err = b
            .check_membership(&DVector::from_vec(vec![10.0, 0.07, 1.0]))
            .unwrap_err();
        assert!(err.to_string().contains("theta_2"), "{err}");
    }

    #[test]
    fn streams_are_independent_of_count() {
        let b = ParameterBox::from_relative(pv(&[1.0, 3.0, 0.1]), &[0.4]).unwrap();
        let short = b.sample(3, 10).unwrap();
        let long = b.sample(3, 100).unwrap();
        assert_eq!(&long[..10], &short[..]);
        assert_eq!(b.sample_at(3, 57), long[57]);
    }

    proptest! {
        #[test]
        fn samples_stay_in_box_and_reproduce(
            seed in any::<u64>(),
            nominal in proptest::collection::vec(-100.0f64..100.0, 1..5),
            r in 0.0f64..2.0,
        ) {
            let b = ParameterBox::from_relative(pv(&nominal), &[r]).unwrap();
            let a = b.sample(seed, 20).unwrap();
            prop_assert!(a.iter().all(|t| b.contains(t)));
            prop_assert_eq!(a, b.sample(seed, 20).unwrap());
        }
    }
}
