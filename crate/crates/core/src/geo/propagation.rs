//! Class-based large-scale attenuation, spatially correlated shadowing and
//! Rayleigh (exponential power) small-scale fading.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::classify::LinkClass;
use super::scene::Point;
use super::GeoError;

pub const SPEED_OF_LIGHT_MPS: f64 = 299_792_458.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassParams {
    pub exponent: f64,
    pub extra_loss_db: f64,
    pub shadowing_sigma_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub los: ClassParams,
    pub nlos_v: ClassParams,
    pub nlos_b: ClassParams,
    pub decorrelation_m: f64,
    pub min_distance_m: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            los: ClassParams {
                exponent: 2.0,
                extra_loss_db: 0.0,
                shadowing_sigma_db: 3.3,
            },
            nlos_v: ClassParams {
                exponent: 2.55,
                extra_loss_db: 6.0,
                shadowing_sigma_db: 3.8,
            },
            nlos_b: ClassParams {
                exponent: 2.9,
                extra_loss_db: 15.0,
                shadowing_sigma_db: 4.1,
            },
            decorrelation_m: 25.0,
            min_distance_m: 1.0,
        }
    }
}

impl PropagationConfig {
    pub fn params(&self, class: LinkClass) -> &ClassParams {
        match class {
            LinkClass::Los => &self.los,
            LinkClass::NlosV => &self.nlos_v,
            LinkClass::NlosB => &self.nlos_b,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [("los", &self.los), ("nlos_v", &self.nlos_v), ("nlos_b", &self.nlos_b)] {
            if !(p.exponent > 0.0 && p.exponent.is_finite()) {
                return Err(format!("{name}.exponent must be positive"));
            }
            if !(p.extra_loss_db >= 0.0 && p.extra_loss_db.is_finite()) {
                return Err(format!("{name}.extra_loss_db must be non-negative"));
            }
            if !(p.shadowing_sigma_db >= 0.0 && p.shadowing_sigma_db.is_finite()) {
                return Err(format!("{name}.shadowing_sigma_db must be non-negative"));
            }
        }
        if !(self.decorrelation_m > 0.0) {
            return Err("decorrelation_m must be positive".into());
        }
        if !(self.min_distance_m > 0.0) {
            return Err("min_distance_m must be positive".into());
        }
        Ok(())
    }
}

/// Free-space loss at the 1 m reference distance, in dB.
pub fn free_space_loss_1m_db(carrier_hz: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * carrier_hz / SPEED_OF_LIGHT_MPS).log10()
}

/// Large-scale gain in dB (negative for attenuation) including shadowing.
pub fn large_scale_gain_db(
    tx: Point,
    rx: Point,
    class: LinkClass,
    shadowing_db: f64,
    carrier_hz: f64,
    cfg: &PropagationConfig,
) -> Result<f64, GeoError> {
    if !tx.is_finite() || !rx.is_finite() {
        return Err(GeoError::NonFinite("link endpoint".into()));
    }
    let p = cfg.params(class);
    let d = tx.distance(rx).max(cfg.min_distance_m);
    let loss = free_space_loss_1m_db(carrier_hz) + 10.0 * p.exponent * d.log10() + p.extra_loss_db;
    Ok(-loss + shadowing_db)
}

/// Correlated shadowing process of one directed link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkShadowing {
    pub value_db: f64,
    pub last_tx: Point,
    pub last_rx: Point,
}

impl LinkShadowing {
    pub fn fresh<R: Rng + ?Sized>(tx: Point, rx: Point, sigma_db: f64, rng: &mut R) -> Self {
        let z: f64 = rng.sample(StandardNormal);
        Self {
            value_db: sigma_db * z,
            last_tx: tx,
            last_rx: rx,
        }
    }

    /// First-order autoregressive step driven by the mean endpoint displacement.
    pub fn update<R: Rng + ?Sized>(&mut self, tx: Point, rx: Point, sigma_db: f64, decorrelation_m: f64, rng: &mut R) {
        let moved = 0.5 * (tx.distance(self.last_tx) + rx.distance(self.last_rx));
        let rho = (-moved / decorrelation_m).exp();
        if rho < 1.0 {
            let z: f64 = rng.sample(StandardNormal);
            self.value_db = rho * self.value_db + (1.0 - rho * rho).sqrt() * sigma_db * z;
        }
        self.last_tx = tx;
        self.last_rx = rx;
    }
}

/// Terminal of a directed link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkEnd {
    Vehicle(u32),
    BaseStation,
}

/// Shadowing of every directed link seen so far.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShadowingState {
    links: BTreeMap<(LinkEnd, LinkEnd), LinkShadowing>,
}

impl ShadowingState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn get(&self, from: LinkEnd, to: LinkEnd) -> Option<&LinkShadowing> {
        self.links.get(&(from, to))
    }

    /// Advances (or starts) the process for `from→to` and returns its value.
    #[allow(clippy::too_many_arguments)]
    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        from: LinkEnd,
        to: LinkEnd,
        tx: Point,
        rx: Point,
        sigma_db: f64,
        decorrelation_m: f64,
        rng: &mut R,
    ) -> f64 {
        let entry = self
            .links
            .entry((from, to))
            .and_modify(|s| s.update(tx, rx, sigma_db, decorrelation_m, rng));
        entry.or_insert_with(|| LinkShadowing::fresh(tx, rx, sigma_db, rng)).value_db
    }
}

/// Small-scale power gain, exponential with unit mean.
pub fn sample_small_scale<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let h: f64 = rng.sample(Exp1);
    h.max(f64::MIN_POSITIVE)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const FC: f64 = 2e9;

    fn gain(d: f64, class: LinkClass) -> f64 {
        large_scale_gain_db(Point::new(0.0, 0.0), Point::new(d, 0.0), class, 0.0, FC, &PropagationConfig::default()).unwrap()
    }

    #[test]
    fn reference_distance_is_free_space() {
        assert!((gain(1.0, LinkClass::Los) - -38.46).abs() < 0.01);
        // clamped below 1 m
        assert_eq!(gain(0.0, LinkClass::Los), gain(1.0, LinkClass::Los));
    }

    #[test]
    fn hundred_metres() {
        let pl0 = free_space_loss_1m_db(FC);
        assert!((gain(100.0, LinkClass::Los) - -78.46).abs() < 0.01);
        assert!((gain(100.0, LinkClass::Los) - -(pl0 + 40.0)).abs() < 1e-12);
        assert!((gain(100.0, LinkClass::NlosB) - -111.46).abs() < 0.01);
        assert!((gain(100.0, LinkClass::NlosB) - -(pl0 + 58.0 + 15.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let r = large_scale_gain_db(Point::new(f64::NAN, 0.0), Point::new(1.0, 0.0), LinkClass::Los, 0.0, FC, &PropagationConfig::default());
        assert!(r.is_err());
    }

    #[test]
    fn shadowing_zero_displacement_keeps_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = LinkShadowing::fresh(Point::new(0.0, 0.0), Point::new(10.0, 0.0), 4.0, &mut rng);
        let before = s.value_db;
        s.update(Point::new(0.0, 0.0), Point::new(10.0, 0.0), 4.0, 25.0, &mut rng);
        assert_eq!(s.value_db, before);
    }

    #[test]
    fn shadowing_infinite_displacement_is_fresh_draw() {
        let mut a = ChaCha8Rng::seed_from_u64(2);
        let mut s = LinkShadowing {
            value_db: 7.0,
            last_tx: Point::new(0.0, 0.0),
            last_rx: Point::new(0.0, 0.0),
        };
        s.update(Point::new(1e300, 0.0), Point::new(1e300, 0.0), 3.0, 25.0, &mut a);
        let mut b = ChaCha8Rng::seed_from_u64(2);
        let z: f64 = b.sample(StandardNormal);
        assert_eq!(s.value_db, 3.0 * z);
    }

    #[test]
    fn shadowing_zero_sigma_stays_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state = ShadowingState::new();
        for step in 0..20 {
            let p = Point::new(step as f64 * 10.0, 0.0);
            let v = state.advance(LinkEnd::Vehicle(0), LinkEnd::BaseStation, p, Point::new(0.0, 0.0), 0.0, 25.0, &mut rng);
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn shadowing_correlation_follows_exponential() {
        // empirical lag correlation at displacement d_c should be e^-1
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 50_000;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for _ in 0..n {
            let mut s = LinkShadowing::fresh(Point::new(0.0, 0.0), Point::new(0.0, 0.0), 1.0, &mut rng);
            let x = s.value_db;
            s.update(Point::new(25.0, 0.0), Point::new(25.0, 0.0), 1.0, 25.0, &mut rng);
            sxy += x * s.value_db;
            sxx += x * x;
        }
        let rho = sxy / sxx;
        assert!((rho - (-1f64).exp()).abs() < 0.02, "rho = {rho}");
    }

    #[test]
    fn small_scale_is_deterministic_and_positive() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let h = sample_small_scale(&mut a);
            assert!(h > 0.0);
            assert_eq!(h, sample_small_scale(&mut b));
        }
    }

    #[test]
    fn small_scale_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 1_000_000;
        let (mut sum, mut above) = (0.0, 0usize);
        for _ in 0..n {
            let h = sample_small_scale(&mut rng);
            sum += h;
            above += usize::from(h > 1.0);
        }
        assert!((sum / n as f64 - 1.0).abs() < 0.01);
        assert!((above as f64 / n as f64 - (-1f64).exp()).abs() < 0.01);
    }

    #[test]
    fn db_round_trip() {
        assert!((db_to_linear(-60.0) / 1e-6 - 1.0).abs() < 1e-15);
        assert!((linear_to_db(db_to_linear(-37.3)) - -37.3).abs() < 1e-12);
    }
}
