use crate::dynamics::Levels;
use crate::error::{Error, Result};

/// Averaged normalized fit in percent: for every channel
/// `100 (1 − ‖y − ỹ‖₂ / ‖y − mean(y)‖₂)` over time, then the mean over the
/// four channels.
pub fn goodness_of_fit(measured: &[Levels], simulated: &[Levels]) -> Result<f64> {
    if measured.len() != simulated.len() || measured.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "measured ({}) and simulated ({}) lengths differ or are empty",
            measured.len(),
            simulated.len()
        )));
    }
    let n = measured.len() as f64;
    let mut total = 0.0;
    for ch in 0..4 {
        let mean = measured.iter().map(|y| y[ch]).sum::<f64>() / n;
        let spread = measured
            .iter()
            .map(|y| (y[ch] - mean).powi(2))
            .sum::<f64>()
            .sqrt();
        if !(spread > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "channel y{} is constant; fit is undefined",
                ch + 1
            )));
        }
        let miss = measured
            .iter()
            .zip(simulated)
            .map(|(y, s)| (y[ch] - s[ch]).powi(2))
            .sum::<f64>()
            .sqrt();
        total += 1.0 - miss / spread;
    }
    Ok(100.0 * total / 4.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize) -> Vec<Levels> {
        (0..n)
            .map(|k| Levels::new(k as f64, (k * k) as f64, (k as f64).sin(), 3.0 - k as f64))
            .collect()
    }

    #[test]
    fn perfect_fit_is_100() {
        let y = ramp(20);
        assert!((goodness_of_fit(&y, &y).unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn mean_predictor_is_0() {
        let y = ramp(20);
        let n = y.len() as f64;
        let mean = y.iter().fold(Levels::zeros(), |a, b| a + b) / n;
        let sim = vec![mean; y.len()];
        assert!(goodness_of_fit(&y, &sim).unwrap().abs() < 1e-12);
    }

    #[test]
    fn constant_channel_is_rejected() {
        let y = vec![Levels::new(1.0, 2.0, 3.0, 4.0); 5];
        assert!(goodness_of_fit(&y, &y).is_err());
        assert!(goodness_of_fit(&ramp(3), &ramp(4)).is_err());
    }

    proptest! {
        #[test]
        fn invariant_to_common_offset(c in -50.0f64..50.0, scale in 0.5f64..2.0) {
            let y = ramp(30);
            let sim: Vec<Levels> = y.iter().enumerate().map(|(k, v)| v * scale + Levels::repeat(0.1 * k as f64)).collect();
            let base = goodness_of_fit(&y, &sim).unwrap();
            let shift = Levels::repeat(c);
            let ys: Vec<Levels> = y.iter().map(|v| v + shift).collect();
            let ss: Vec<Levels> = sim.iter().map(|v| v + shift).collect();
            prop_assert!((goodness_of_fit(&ys, &ss).unwrap() - base).abs() < 1e-8);
        }
    }
}
