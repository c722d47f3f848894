//! Fast chaotic interval maps and their orbits.
//!
//! Three maps are supported: the Pomeau-Manneville intermittent map on
//! `[0, 1]`, its odd extension to `[-1, 1]` (whose invariant measure is
//! symmetric, so odd observables are automatically centred), and the
//! doubling map `2y mod 1`.
//!
//! Floating-point doubling discards one mantissa bit per step and collapses
//! to `0` within about 53 iterates. Doubling orbits are therefore generated
//! on a 64-bit fixed-point expansion whose lowest bit is refilled from a
//! counter-based supply keyed by `eta`. The result is the exact orbit of a
//! point that agrees with `eta` to 64 binary places.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::BitSupply;

/// Maximum rounding excursion outside the attractor that is silently clamped.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

pub const DEFAULT_BURN_IN: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    PomeauManneville,
    ModifiedPomeauManneville,
    Doubling,
}

/// Serializable description of a fast map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FastMapSpec {
    pub kind: MapKind,
    #[serde(default)]
    pub gamma: f64,
}

/// Validated fast map `g: Lambda -> Lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FastMapSpec", into = "FastMapSpec")]
pub struct FastMap {
    kind: MapKind,
    gamma: f64,
    two_pow_gamma: f64,
}

impl TryFrom<FastMapSpec> for FastMap {
    type Error = Error;

    fn try_from(spec: FastMapSpec) -> Result<Self> {
        FastMap::new(spec.kind, spec.gamma)
    }
}

impl From<FastMap> for FastMapSpec {
    fn from(map: FastMap) -> Self {
        FastMapSpec {
            kind: map.kind,
            gamma: map.gamma,
        }
    }
}

impl FastMap {
    pub fn new(kind: MapKind, gamma: f64) -> Result<Self> {
        let gamma = match kind {
            MapKind::Doubling => 0.0,
            _ => {
                if !(gamma.is_finite() && (0.0..1.0).contains(&gamma)) {
                    return Err(Error::InvalidParameter(format!(
                        "intermittency exponent gamma = {gamma} must lie in [0, 1)"
                    )));
                }
                gamma
            }
        };
        Ok(Self {
            kind,
            gamma,
            two_pow_gamma: 2f64.powf(gamma),
        })
    }

    pub fn pomeau_manneville(gamma: f64) -> Result<Self> {
        Self::new(MapKind::PomeauManneville, gamma)
    }

    pub fn modified_pomeau_manneville(gamma: f64) -> Result<Self> {
        Self::new(MapKind::ModifiedPomeauManneville, gamma)
    }

    pub fn doubling() -> Self {
        Self::new(MapKind::Doubling, 0.0).expect("doubling map has no parameters")
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Attractor `Lambda` as a closed interval.
    pub fn attractor(&self) -> (f64, f64) {
        match self.kind {
            MapKind::ModifiedPomeauManneville => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        let (lo, hi) = self.attractor();
        y >= lo && y <= hi
    }

    fn check(&self, y: f64) -> Result<()> {
        if self.contains(y) {
            Ok(())
        } else {
            let (lo, hi) = self.attractor();
            Err(Error::Domain { value: y, lo, hi })
        }
    }

    /// Intermittent branch `y (1 + 2^gamma y^gamma)` on `[0, 1/2)`.
    #[inline]
    fn laminar(&self, y: f64) -> f64 {
        y * (1.0 + self.two_pow_gamma * y.powf(self.gamma))
    }

    #[inline]
    fn raw_step(&self, y: f64) -> f64 {
        match self.kind {
            MapKind::PomeauManneville | MapKind::Doubling => {
                if y < 0.5 {
                    if self.kind == MapKind::Doubling {
                        2.0 * y
                    } else {
                        self.laminar(y)
                    }
                } else {
                    2.0 * y - 1.0
                }
            }
            MapKind::ModifiedPomeauManneville => {
                if y < 0.0 {
                    -self.raw_step(-y)
                } else if y < 0.5 {
                    self.laminar(y)
                } else {
                    1.0 - 2.0 * y
                }
            }
        }
    }

    #[inline]
    fn clamp(&self, z: f64) -> Result<f64> {
        let (lo, hi) = self.attractor();
        if z >= lo && z <= hi {
            Ok(z)
        } else if z < lo && lo - z <= CLAMP_TOLERANCE {
            Ok(lo)
        } else if z > hi && z - hi <= CLAMP_TOLERANCE {
            Ok(hi)
        } else {
            Err(Error::Domain { value: z, lo, hi })
        }
    }

    /// One application of `g`. The branch point `y = 1/2` belongs to the right branch.
    pub fn step(&self, y: f64) -> Result<f64> {
        self.check(y)?;
        self.clamp(self.raw_step(y))
    }

    /// Lazily iterates `g` from `eta`, yielding `eta` first.
    pub fn trajectory(&self, eta: f64) -> Result<Trajectory> {
        self.check(eta)?;
        let state = match self.kind {
            MapKind::Doubling => {
                let bits = (eta * 2f64.powi(64)) as u64;
                State::Binary {
                    bits,
                    supply: BitSupply::new(crate::rng::hash128(eta.to_bits(), 0x00D0_0B1E).0),
                    saturated: eta >= 1.0,
                }
            }
            _ => State::Real(eta),
        };
        Ok(Trajectory { map: *self, state })
    }

    /// Iterates from `eta`, drops `burn_in` values and returns the next `length`.
    pub fn orbit(&self, eta: f64, length: usize, burn_in: usize) -> Result<Orbit> {
        let mut traj = self.trajectory(eta)?;
        traj.skip_points(burn_in)?;
        let mut points = Vec::with_capacity(length);
        for _ in 0..length {
            points.push(traj.next_point()?);
        }
        Ok(Orbit { points, burn_in })
    }

    /// Uniform draw on `Lambda`; combine with burn-in to approximate `mu`.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = self.attractor();
        lo + (hi - lo) * rng.random::<f64>()
    }

    /// Uniform initial point pushed through `burn_in` iterates.
    pub fn sample_invariant<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        burn_in: usize,
    ) -> Result<Trajectory> {
        let mut traj = self.trajectory(self.sample_initial(rng))?;
        traj.skip_points(burn_in)?;
        Ok(traj)
    }
}

#[derive(Debug, Clone)]
enum State {
    Real(f64),
    Binary {
        bits: u64,
        supply: BitSupply,
        saturated: bool,
    },
}

/// Stateful orbit generator.
#[derive(Debug, Clone)]
pub struct Trajectory {
    map: FastMap,
    state: State,
}

impl Trajectory {
    /// Current point.
    #[inline]
    pub fn current(&self) -> f64 {
        match &self.state {
            State::Real(y) => *y,
            State::Binary {
                bits, saturated, ..
            } => {
                if *saturated {
                    1.0
                } else {
                    *bits as f64 * 2f64.powi(-64)
                }
            }
        }
    }

    #[inline]
    pub fn advance(&mut self) -> Result<()> {
        match &mut self.state {
            State::Real(y) => {
                *y = self.map.clamp(self.map.raw_step(*y))?;
            }
            State::Binary {
                bits,
                supply,
                saturated,
            } => {
                *saturated = false;
                *bits = (*bits << 1) | supply.next_bit();
            }
        }
        Ok(())
    }

    /// Returns the current point and advances.
    #[inline]
    pub fn next_point(&mut self) -> Result<f64> {
        let y = self.current();
        self.advance()?;
        Ok(y)
    }

    pub fn skip_points(&mut self, n: usize) -> Result<()> {
        for _ in 0..n {
            self.advance()?;
        }
        Ok(())
    }
}

/// Finite stretch of an orbit after burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub points: Vec<f64>,
    pub burn_in: usize,
}

impl Orbit {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().map(|&y| f(y)).sum::<f64>() / self.points.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn origin_is_fixed() {
        let pm = FastMap::pomeau_manneville(0.1).unwrap();
        assert_eq!(pm.step(0.0).unwrap(), 0.0);
        let o = FastMap::pomeau_manneville(0.7)
            .unwrap()
            .orbit(0.0, 5, 0)
            .unwrap();
        assert_eq!(o.points, vec![0.0; 5]);
    }

    #[test]
    fn modified_right_branch() {
        let m = FastMap::modified_pomeau_manneville(0.1).unwrap();
        assert_eq!(m.step(0.75).unwrap(), -0.5);
        assert_eq!(m.step(0.5).unwrap(), 0.0);
        assert_eq!(m.step(1.0).unwrap(), -1.0);
        assert_eq!(m.step(-1.0).unwrap(), 1.0);
    }

    #[test]
    fn laminar_branch_closed_form() {
        let pm = FastMap::pomeau_manneville(0.5).unwrap();
        let expected = 0.25 * (1.0 + 2f64.sqrt() * 0.5);
        assert!((pm.step(0.25).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.426_777).abs() < 1e-6);
    }

    #[test]
    fn doubling_orbit() {
        let o = FastMap::doubling().orbit(0.3, 3, 0).unwrap();
        let want = [0.3, 0.6, 0.2];
        for (a, b) in o.points.iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn doubling_orbit_does_not_collapse() {
        let o = FastMap::doubling().orbit(0.3, 10_000, 0).unwrap();
        let tail = &o.points[1000..];
        let upper = tail.iter().filter(|&&y| y >= 0.5).count();
        assert!(tail.iter().all(|&y| y > 0.0 && y < 1.0));
        assert!((upper as f64 / tail.len() as f64 - 0.5).abs() < 0.03);
    }

    #[test]
    fn out_of_range_inputs_are_domain_errors() {
        let pm = FastMap::pomeau_manneville(0.1).unwrap();
        assert_eq!(
            pm.step(-0.1),
            Err(Error::Domain {
                value: -0.1,
                lo: 0.0,
                hi: 1.0
            })
        );
        assert!(pm.orbit(1.5, 3, 0).is_err());
        assert!(FastMap::modified_pomeau_manneville(0.1)
            .unwrap()
            .step(-1.0001)
            .is_err());
    }

    #[test]
    fn gamma_validation() {
        assert!(FastMap::pomeau_manneville(1.0).is_err());
        assert!(FastMap::pomeau_manneville(-0.1).is_err());
        assert!(FastMap::pomeau_manneville(f64::NAN).is_err());
        assert_eq!(FastMap::new(MapKind::Doubling, 7.0).unwrap().gamma(), 0.0);
    }

    #[test]
    fn gamma_zero_matches_doubling_on_left_half() {
        let pm = FastMap::pomeau_manneville(0.0).unwrap();
        let d = FastMap::doubling();
        for i in 0..5000 {
            let y = i as f64 / 10_000.0;
            assert_eq!(pm.step(y).unwrap(), d.step(y).unwrap());
        }
    }

    #[test]
    fn sample_initial_range_and_determinism() {
        for map in [
            FastMap::doubling(),
            FastMap::modified_pomeau_manneville(0.1).unwrap(),
        ] {
            let (lo, hi) = map.attractor();
            let mut r = stream(11, 0);
            for _ in 0..1000 {
                let y = map.sample_initial(&mut r);
                assert!(y >= lo && y <= hi);
            }
            let a = map.sample_initial(&mut stream(5, 5));
            let b = map.sample_initial(&mut stream(5, 5));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn range_preservation_on_million_inputs() {
        use rand::Rng;
        let mut r = stream(1, 1);
        for map in [
            FastMap::doubling(),
            FastMap::pomeau_manneville(0.1).unwrap(),
            FastMap::pomeau_manneville(0.75).unwrap(),
            FastMap::modified_pomeau_manneville(0.1).unwrap(),
        ] {
            let (lo, hi) = map.attractor();
            for _ in 0..1_000_000 {
                let y = lo + (hi - lo) * r.random::<f64>();
                let z = map.step(y).unwrap();
                assert!(z >= lo && z <= hi);
            }
        }
    }

    #[test]
    fn histogram_is_invariant_under_one_step() {
        let map = FastMap::modified_pomeau_manneville(0.1).unwrap();
        let orbit = map.orbit(0.123, 2_000_000, DEFAULT_BURN_IN).unwrap();
        let pts: Vec<f64> = orbit.points.iter().step_by(20).copied().collect();
        let bins = 20;
        let hist = |v: &mut dyn Iterator<Item = f64>| {
            let mut c = vec![0f64; bins];
            let mut n = 0.0;
            for y in v {
                let k = (((y + 1.0) / 2.0) * bins as f64)
                    .floor()
                    .min(bins as f64 - 1.0) as usize;
                c[k] += 1.0;
                n += 1.0;
            }
            c.iter().map(|x| x / n).collect::<Vec<_>>()
        };
        let before = hist(&mut pts.iter().copied());
        let after = hist(&mut pts.iter().map(|&y| map.step(y).unwrap()));
        let n = pts.len() as f64;
        for (p, q) in before.iter().zip(&after) {
            let se = (2.0 * p * (1.0 - p) / n).sqrt();
            assert!((p - q).abs() < 3.0 * se, "{p} vs {q}");
        }
    }

    #[test]
    fn y_squared_moment_of_modified_map() {
        let map = FastMap::modified_pomeau_manneville(0.1).unwrap();
        let orbit = map.orbit(0.2718, 2_000_000, DEFAULT_BURN_IN).unwrap();
        let m2 = orbit.mean_of(|y| y * y);
        assert!((m2 - 0.319).abs() < 0.01, "{m2}");
    }

    #[test]
    fn serde_validates() {
        let m: FastMap =
            serde_json::from_str(r#"{"kind":"pomeau-manneville","gamma":0.75}"#).unwrap();
        assert_eq!(m.gamma(), 0.75);
        assert!(
            serde_json::from_str::<FastMap>(r#"{"kind":"pomeau-manneville","gamma":1.5}"#).is_err()
        );
    }

    proptest! {
        #[test]
        fn modified_map_is_odd(y in 1e-300f64..=1.0, gamma in 0.0f64..0.99) {
            let m = FastMap::modified_pomeau_manneville(gamma).unwrap();
            prop_assert_eq!(m.step(-y).unwrap(), -m.step(y).unwrap());
        }

        #[test]
        fn orbit_is_deterministic(eta in 0.0f64..1.0, gamma in 0.0f64..0.99) {
            let m = FastMap::pomeau_manneville(gamma).unwrap();
            prop_assert_eq!(m.orbit(eta, 50, 10).unwrap(), m.orbit(eta, 50, 10).unwrap());
        }
    }
}
