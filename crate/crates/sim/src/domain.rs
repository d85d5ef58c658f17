//! Per-episode randomization of physics, system and appearance parameters.

use std::fmt;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;
use crate::physics::PhysicsParams;
use crate::render::Appearance;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    /// `nominal * (1 - frac) ..= nominal * (1 + frac)`.
    pub fn around(nominal: f64, frac: f64) -> Self {
        Interval::new(nominal * (1.0 - frac), nominal * (1.0 + frac))
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Fresh draw at every reset.
    PerEpisode,
    /// One draw per agent, kept for its whole lifetime.
    FixedPerAgent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRange {
    pub mu_static: Interval,
    pub mu_dynamic: Interval,
    pub damping: Interval,
    pub marble_mass: Interval,
    pub restitution: Interval,
    /// Camera delay in frames, inclusive bounds.
    pub delay_min: u32,
    pub delay_max: u32,
    pub noise_sigma: Interval,
    pub background: Interval,
    pub marble_intensity: Interval,
    pub gravity: f64,
    pub scheme: Scheme,
}

impl DomainRange {
    /// Training ranges: +-50% around nominal physics, delay 0..=2 frames,
    /// noise sigma up to 0.05.
    pub fn randomized() -> Self {
        let p = PhysicsParams::nominal();
        let a = Appearance::default();
        DomainRange {
            mu_static: Interval::around(p.mu_static, 0.5),
            mu_dynamic: Interval::around(p.mu_dynamic, 0.5),
            damping: Interval::around(p.damping, 0.5),
            marble_mass: Interval::around(p.marble_mass, 0.5),
            restitution: Interval::around(p.restitution, 0.5),
            delay_min: 0,
            delay_max: 2,
            noise_sigma: Interval::new(0.0, 0.05),
            background: Interval::point(a.background),
            marble_intensity: Interval::point(a.marble),
            gravity: p.gravity,
            scheme: Scheme::PerEpisode,
        }
    }

    /// Every interval collapsed onto the given sample.
    pub fn fixed(sample: &DomainSample) -> Self {
        let p = &sample.physics;
        DomainRange {
            mu_static: Interval::point(p.mu_static),
            mu_dynamic: Interval::point(p.mu_dynamic),
            damping: Interval::point(p.damping),
            marble_mass: Interval::point(p.marble_mass),
            restitution: Interval::point(p.restitution),
            delay_min: sample.delay_k,
            delay_max: sample.delay_k,
            noise_sigma: Interval::point(sample.noise_sigma),
            background: Interval::point(sample.appearance.background),
            marble_intensity: Interval::point(sample.appearance.marble),
            gravity: p.gravity,
            scheme: Scheme::FixedPerAgent,
        }
    }

    /// The non-randomized training domain.
    pub fn nominal() -> Self {
        Self::fixed(&DomainSample::nominal())
    }

    /// Held-out target standing in for the physical setup: friction and
    /// damping at 110% of the training maxima, two frames of camera delay,
    /// noise sigma 0.03.
    pub fn real_proxy() -> Self {
        let r = Self::randomized();
        let p = PhysicsParams {
            mu_static: 1.1 * r.mu_static.hi,
            mu_dynamic: 1.1 * r.mu_dynamic.hi,
            damping: 1.1 * r.damping.hi,
            marble_mass: r.marble_mass.hi,
            restitution: r.restitution.lo,
            gravity: r.gravity,
        };
        Self::fixed(&DomainSample {
            physics: p,
            delay_k: 2,
            noise_sigma: 0.03,
            appearance: Appearance::default(),
            sample_seed: 0,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let named = [
            ("mu_static", self.mu_static),
            ("mu_dynamic", self.mu_dynamic),
            ("damping", self.damping),
            ("marble_mass", self.marble_mass),
            ("restitution", self.restitution),
            ("noise_sigma", self.noise_sigma),
            ("background", self.background),
            ("marble_intensity", self.marble_intensity),
        ];
        for (name, iv) in named {
            if !(iv.lo <= iv.hi) || !iv.lo.is_finite() || !iv.hi.is_finite() {
                return Err(ConfigError::InvalidDomain(format!("{name}: lower bound above upper")));
            }
        }
        if self.delay_min > self.delay_max {
            return Err(ConfigError::InvalidDomain("delay_min above delay_max".into()));
        }
        if self.noise_sigma.lo < 0.0 {
            return Err(ConfigError::InvalidDomain("noise sigma must be non-negative".into()));
        }
        if self.mu_dynamic.lo < 0.0 || self.mu_static.hi < self.mu_dynamic.lo {
            return Err(ConfigError::InvalidDomain("friction ranges admit no valid sample".into()));
        }
        if self.marble_mass.lo <= 0.0 || self.damping.lo < 0.0 {
            return Err(ConfigError::InvalidDomain("mass/damping out of range".into()));
        }
        if self.restitution.lo < 0.0 || self.restitution.hi > 1.0 {
            return Err(ConfigError::InvalidDomain("restitution outside [0,1]".into()));
        }
        Ok(())
    }

    pub fn contains(&self, s: &DomainSample) -> bool {
        let p = &s.physics;
        self.mu_static.contains(p.mu_static)
            && self.mu_dynamic.contains(p.mu_dynamic)
            && self.damping.contains(p.damping)
            && self.marble_mass.contains(p.marble_mass)
            && self.restitution.contains(p.restitution)
            && (self.delay_min..=self.delay_max).contains(&s.delay_k)
            && self.noise_sigma.contains(s.noise_sigma)
    }
}

impl Default for DomainRange {
    fn default() -> Self {
        Self::randomized()
    }
}

/// One concrete draw, constant for the whole episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSample {
    pub physics: PhysicsParams,
    pub delay_k: u32,
    pub noise_sigma: f64,
    pub appearance: Appearance,
    /// Seeds the observation-noise stream of the episode.
    pub sample_seed: u64,
}

impl DomainSample {
    pub fn nominal() -> Self {
        DomainSample {
            physics: PhysicsParams::nominal(),
            delay_k: 0,
            noise_sigma: 0.0,
            appearance: Appearance::default(),
            sample_seed: 0,
        }
    }

    /// Hash of the parameter values (not the seed); equal domains hash equal.
    pub fn hash(&self) -> DomainHash {
        let p = &self.physics;
        let mut h = Sha256::new();
        for v in [
            p.mu_static,
            p.mu_dynamic,
            p.damping,
            p.marble_mass,
            p.restitution,
            p.gravity,
            self.noise_sigma,
            self.appearance.background,
            self.appearance.marble,
            self.appearance.wall,
        ] {
            h.update(v.to_le_bytes());
        }
        h.update(self.delay_k.to_le_bytes());
        let d = h.finalize();
        let mut b = [0u8; 8];
        b.copy_from_slice(&d[..8]);
        DomainHash(u64::from_be_bytes(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DomainHash(pub u64);

impl fmt::Display for DomainHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Independent uniform draw per parameter.
///
/// Dynamic friction is capped at the drawn static friction so every sample
/// is physically valid even when the two intervals overlap.
pub fn sample_domain<R: RngCore + ?Sized>(ranges: &DomainRange, rng: &mut R) -> DomainSample {
    let sample_seed = rng.next_u64();
    let mu_static = ranges.mu_static.sample(rng);
    let mu_dynamic = ranges.mu_dynamic.sample(rng).min(mu_static);
    let physics = PhysicsParams {
        mu_static,
        mu_dynamic,
        damping: ranges.damping.sample(rng),
        marble_mass: ranges.marble_mass.sample(rng),
        restitution: ranges.restitution.sample(rng),
        gravity: ranges.gravity,
    };
    let delay_k = if ranges.delay_min == ranges.delay_max {
        ranges.delay_min
    } else {
        rng.random_range(ranges.delay_min..=ranges.delay_max)
    };
    let noise_sigma = ranges.noise_sigma.sample(rng);
    let appearance = Appearance {
        background: ranges.background.sample(rng),
        marble: ranges.marble_intensity.sample(rng),
        ..Appearance::default()
    };
    DomainSample {
        physics,
        delay_k,
        noise_sigma,
        appearance,
        sample_seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_interval_returns_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_domain(&DomainRange::nominal(), &mut rng);
        assert_eq!(s.physics, PhysicsParams::nominal());
        assert_eq!(s.delay_k, 0);
        assert_eq!(s.noise_sigma, 0.0);
    }

    #[test]
    fn same_seed_same_sample() {
        let r = DomainRange::randomized();
        let a = sample_domain(&r, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_domain(&r, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn uniform_mean() {
        let mut r = DomainRange::randomized();
        r.mu_static = Interval::new(0.04, 0.12);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| sample_domain(&r, &mut rng).physics.mu_static).sum::<f64>() / n as f64;
        // uniform on [0.04, 0.12]: mean 0.08, sd of mean 0.023/100
        assert!((mean - 0.08).abs() < 0.002, "mean {mean}");
    }

    #[test]
    fn samples_stay_in_range_and_valid() {
        let r = DomainRange::randomized();
        r.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let s = sample_domain(&r, &mut rng);
            assert!(r.contains(&s));
            s.physics.validate().unwrap();
        }
    }

    #[test]
    fn nominal_inside_training_range() {
        assert!(DomainRange::randomized().contains(&DomainSample::nominal()));
    }

    #[test]
    fn real_proxy_outside_training_range() {
        let proxy = sample_domain(&DomainRange::real_proxy(), &mut ChaCha8Rng::seed_from_u64(0));
        let train = DomainRange::randomized();
        assert!(!train.contains(&proxy));
        assert_eq!(proxy.delay_k, 2);
        assert!((proxy.noise_sigma - 0.03).abs() < 1e-15);
    }

    #[test]
    fn inverted_interval_rejected() {
        let mut r = DomainRange::randomized();
        r.damping = Interval::new(1.0, 0.5);
        assert!(r.validate().is_err());
    }
}
