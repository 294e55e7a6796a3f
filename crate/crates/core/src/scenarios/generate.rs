use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ScenarioConfig, ScenarioError};

/// Normalized turbine output as a function of hub-height wind speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub cut_in: f64,
    pub rated: f64,
    pub cut_out: f64,
}

impl Default for PowerCurve {
    fn default() -> Self {
        Self {
            cut_in: 3.0,
            rated: 12.0,
            cut_out: 25.0,
        }
    }
}

impl PowerCurve {
    pub fn new(cut_in: f64, rated: f64, cut_out: f64) -> Result<Self, ScenarioError> {
        if !(0.0 < cut_in && cut_in < rated && rated < cut_out) {
            return Err(ScenarioError::Config(format!(
                "power curve requires 0 < cut_in < rated < cut_out, got {cut_in}, {rated}, {cut_out}"
            )));
        }
        Ok(Self {
            cut_in,
            rated,
            cut_out,
        })
    }

    /// Output in `[0, 1]`: zero outside `[cut_in, cut_out)`, a cubic ramp up
    /// to rated speed, then flat at 1.
    pub fn power(&self, speed: f64) -> f64 {
        if speed < self.cut_in || speed >= self.cut_out {
            0.0
        } else if speed >= self.rated {
            1.0
        } else {
            ((speed - self.cut_in) / (self.rated - self.cut_in)).powi(3)
        }
    }

    pub fn apply(&self, speeds: &[f64]) -> Vec<f64> {
        speeds.iter().map(|&v| self.power(v)).collect()
    }
}

/// Mean-reverting (Ornstein-Uhlenbeck, unit time step) wind speed series,
/// clamped at zero and started at the mean.
pub fn gen_speed_series(
    config: &ScenarioConfig,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, ScenarioError> {
    if config.volatility.is_nan() || config.volatility < 0.0 {
        return Err(ScenarioError::Config(format!(
            "volatility must be non-negative, got {}",
            config.volatility
        )));
    }
    if !(config.reversion > 0.0 && config.reversion <= 1.0) {
        return Err(ScenarioError::Config(format!(
            "reversion rate must be in (0, 1], got {}",
            config.reversion
        )));
    }
    let mut v = config.mean_speed;
    let mut out = Vec::with_capacity(config.length);
    for _ in 0..config.length {
        out.push(v);
        let shock: f64 = rng.sample(StandardNormal);
        v = (v + config.reversion * (config.mean_speed - v) + config.volatility * shock).max(0.0);
    }
    Ok(out)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Separable Gaussian blur with edge-clamped indexing.
fn blur(field: &[f64], height: usize, width: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut rows = vec![0.0; field.len()];
    for y in 0..height {
        for x in 0..width {
            rows[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * field[y * width + clamp(x as isize + k as isize - radius, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; field.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * rows[clamp(y as isize + k as isize - radius, height) * width + x])
                .sum();
        }
    }
    out
}

/// Sequence of `height x width` wind speed fields (row-major).
///
/// Each field is a regional OU speed plus a spatially smoothed anomaly that
/// evolves as an AR(1) process with coefficient `map_persistence`.
pub fn gen_speed_maps(
    config: &ScenarioConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>, ScenarioError> {
    if config.smoothing.is_nan() || config.smoothing < 1.0 {
        return Err(ScenarioError::Config(format!(
            "smoothing length must be at least 1, got {}",
            config.smoothing
        )));
    }
    if !(0.0..1.0).contains(&config.map_persistence) {
        return Err(ScenarioError::Config(format!(
            "map persistence must be in [0, 1), got {}",
            config.map_persistence
        )));
    }
    let base = gen_speed_series(config, rng)?;
    let (h, w) = (config.map_height, config.map_width);
    let kernel = gaussian_kernel(config.smoothing);
    // Blurred white noise has interior std (sum k^2); this restores unit std.
    let gain = 1.0 / kernel.iter().map(|k| k * k).sum::<f64>();
    let rho = config.map_persistence;
    let innovation = (1.0 - rho * rho).sqrt();

    let mut anomaly = vec![0.0; h * w];
    let mut maps = Vec::with_capacity(config.length);
    for (t, &regional) in base.iter().enumerate() {
        let noise: Vec<f64> = (0..h * w).map(|_| rng.sample(StandardNormal)).collect();
        let smooth = blur(&noise, h, w, &kernel);
        for (a, s) in anomaly.iter_mut().zip(smooth) {
            let fresh = config.spatial_std * gain * s;
            *a = if t == 0 {
                fresh
            } else {
                rho * *a + innovation * fresh
            };
        }
        maps.push(anomaly.iter().map(|a| (regional + a).max(0.0)).collect());
    }
    Ok(maps)
}

/// Regional power: the power curve applied per cell, then spatially averaged.
pub fn regional_power(maps: &[Vec<f64>], curve: &PowerCurve) -> Vec<f64> {
    maps.iter()
        .map(|field| field.iter().map(|&v| curve.power(v)).sum::<f64>() / field.len() as f64)
        .collect()
}

/// Additive forecast error applied to the wind input the models see.
pub fn forecast_errors(length: usize, std: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..length)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn std_dev(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn power_curve_regimes() {
        let curve = PowerCurve::new(3.0, 12.0, 25.0).unwrap();
        assert_eq!(curve.power(0.0), 0.0);
        assert_eq!(curve.power(12.0), 1.0);
        assert_eq!(curve.power(20.0), 1.0);
        assert_eq!(curve.power(25.0), 0.0);
        assert!((curve.power(7.5) - 0.125).abs() < 1e-15);
        assert!(PowerCurve::new(5.0, 4.0, 25.0).is_err());
    }

    #[test]
    fn zero_volatility_is_constant() {
        let config = ScenarioConfig {
            volatility: 0.0,
            length: 50,
            ..ScenarioConfig::default()
        };
        let s = gen_speed_series(&config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(s.iter().all(|&v| v == config.mean_speed));
    }

    #[test]
    fn negative_volatility_rejected() {
        let config = ScenarioConfig {
            volatility: -0.1,
            ..ScenarioConfig::default()
        };
        assert!(gen_speed_series(&config, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn long_run_mean_close_to_configured() {
        let config = ScenarioConfig {
            length: 20_000,
            ..ScenarioConfig::default()
        };
        let s = gen_speed_series(&config, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!(
            (mean - config.mean_speed).abs() < 0.05 * config.mean_speed,
            "{mean}"
        );
    }

    #[test]
    fn heavy_smoothing_gives_near_uniform_fields() {
        let config = ScenarioConfig {
            length: 200,
            map_height: 8,
            map_width: 7,
            smoothing: 200.0,
            ..ScenarioConfig::default()
        };
        let maps = gen_speed_maps(&config, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let spatial = maps.iter().map(|f| std_dev(f)).sum::<f64>() / maps.len() as f64;
        let temporal: Vec<f64> = maps.iter().map(|f| f[0]).collect();
        assert!(
            spatial < 0.1 * std_dev(&temporal),
            "{spatial} vs {}",
            std_dev(&temporal)
        );
    }

    #[test]
    fn regional_power_in_unit_interval() {
        let config = ScenarioConfig {
            length: 100,
            ..ScenarioConfig::default()
        };
        let maps = gen_speed_maps(&config, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let p = regional_power(&maps, &PowerCurve::default());
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
