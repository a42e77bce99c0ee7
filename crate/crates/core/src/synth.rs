//! Envelope-domain range-profile synthesis.
//!
//! Each range bin is drawn from a target or a background amplitude law
//! depending on whether a target echo falls into it. Static clutter is a
//! fixed per-sensor vector added at every scan, so the MTI stage has
//! something to cancel; non-static clutter is a Poisson number of short
//! high-amplitude bursts per scan.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Position;
use crate::scenario::{NetworkMode, ScenarioSpec, SensorLayout};
use crate::SPEED_OF_LIGHT;

/// One sensor's sampled envelope for one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeProfile {
    pub samples: Vec<f64>,
    pub scan: i64,
    pub sensor: usize,
}

impl RangeProfile {
    pub fn new(samples: Vec<f64>, scan: i64, sensor: usize) -> Self {
        Self { samples, scan, sensor }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Amplitude distribution of a single range bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum AmplitudeLaw {
    /// `|nu + sigma * (n1 + i n2)|` with standard normal `n1`, `n2`.
    Rician {
        nu: f64,
        sigma: f64,
    },
    Rayleigh {
        sigma: f64,
    },
    Constant {
        value: f64,
    },
}

impl AmplitudeLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            AmplitudeLaw::Rician { nu, sigma } => {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                (nu + sigma * re).hypot(sigma * im)
            }
            AmplitudeLaw::Rayleigh { sigma } => {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                sigma * re.hypot(im)
            }
            AmplitudeLaw::Constant { value } => value,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            AmplitudeLaw::Rician { nu, sigma } => {
                if sigma == 0.0 {
                    nu
                } else if nu > 20.0 * sigma {
                    // large-K limit, avoids overflow in the Bessel terms
                    nu + sigma * sigma / (2.0 * nu)
                } else {
                    // sigma * sqrt(pi/2) * L_{1/2}(-nu^2 / 2 sigma^2)
                    let x = -nu * nu / (2.0 * sigma * sigma);
                    sigma * (std::f64::consts::PI / 2.0).sqrt() * laguerre_half(x)
                }
            }
            AmplitudeLaw::Rayleigh { sigma } => sigma * (std::f64::consts::PI / 2.0).sqrt(),
            AmplitudeLaw::Constant { value } => value,
        }
    }

    pub fn median(&self) -> f64 {
        match *self {
            AmplitudeLaw::Rayleigh { sigma } => sigma * (2.0 * std::f64::consts::LN_2).sqrt(),
            AmplitudeLaw::Constant { value } => value,
            // no closed form; the mean is a close upper proxy for nu >> sigma
            AmplitudeLaw::Rician { .. } => self.mean(),
        }
    }

    fn is_valid(&self) -> bool {
        match *self {
            AmplitudeLaw::Rician { nu, sigma } => nu >= 0.0 && sigma >= 0.0,
            AmplitudeLaw::Rayleigh { sigma } => sigma >= 0.0,
            AmplitudeLaw::Constant { value } => value >= 0.0,
        }
    }
}

/// `L_{1/2}(x)` for `x <= 0`, via modified Bessel functions.
fn laguerre_half(x: f64) -> f64 {
    let h = -x / 2.0;
    (-h).exp() * ((1.0 - x) * bessel_i0(h) - x * bessel_i1(h))
}

fn bessel_i0(x: f64) -> f64 {
    bessel_series(x, 0)
}

fn bessel_i1(x: f64) -> f64 {
    bessel_series(x, 1)
}

fn bessel_series(x: f64, order: u32) -> f64 {
    if x > 30.0 {
        // asymptotic expansion, scaled back
        let mu = 4.0 * (order * order) as f64;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..8 {
            let kf = k as f64;
            term *= -(mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * x);
            sum += term;
        }
        return x.exp() / (2.0 * std::f64::consts::PI * x).sqrt() * sum;
    }
    let half = x / 2.0;
    let mut term = half.powi(order as i32) / (1..=order).map(f64::from).product::<f64>();
    let mut sum = term;
    for k in 1..200 {
        term *= half * half / (k as f64 * (k + order) as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Static environment echoes, identical at every scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StaticClutter {
    None,
    /// `reflectors` point reflectors per sensor at uniformly drawn bins with
    /// amplitudes uniform in `[0, amplitude]`, drawn from `seed`.
    Random {
        reflectors: usize,
        amplitude: f64,
        seed: u64,
    },
    /// Explicit per-sensor vectors of length `N_c`.
    Profiles(Vec<Vec<f64>>),
}

/// Configurable stand-in for the per-bin amplitude statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EchoModel {
    /// Per-pulse target-bin law; scaled by `snr_scale * sqrt(N_s)`.
    pub target_law: AmplitudeLaw,
    pub background_law: AmplitudeLaw,
    pub static_clutter: StaticClutter,
    pub target_extent_bins: usize,
    /// Probability that a target echoes at all on a given sensor and scan.
    pub target_presence: f64,
    /// Expected spurious bursts per sensor per scan.
    pub nonstatic_clutter_rate: f64,
    pub nonstatic_law: AmplitudeLaw,
    pub nonstatic_extent_bins: usize,
    pub snr_scale: f64,
}

impl Default for EchoModel {
    fn default() -> Self {
        Self {
            target_law: AmplitudeLaw::Rician { nu: 0.08, sigma: 0.02 },
            background_law: AmplitudeLaw::Rayleigh { sigma: 1.0 },
            static_clutter: StaticClutter::Random {
                reflectors: 20,
                amplitude: 20.0,
                seed: 1,
            },
            target_extent_bins: 40,
            target_presence: 1.0,
            nonstatic_clutter_rate: 1.0,
            nonstatic_law: AmplitudeLaw::Rician { nu: 8.0, sigma: 1.0 },
            nonstatic_extent_bins: 20,
            snr_scale: 1.0,
        }
    }
}

impl EchoModel {
    /// Scene with nothing but the targets, amplitude `value` per echo bin.
    pub fn noiseless(value: f64, extent: usize) -> Self {
        Self {
            target_law: AmplitudeLaw::Constant { value },
            background_law: AmplitudeLaw::Constant { value: 0.0 },
            static_clutter: StaticClutter::None,
            target_extent_bins: extent,
            target_presence: 1.0,
            nonstatic_clutter_rate: 0.0,
            nonstatic_law: AmplitudeLaw::Constant { value: 0.0 },
            nonstatic_extent_bins: 1,
            snr_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("echo model: {m}")));
        if self.target_extent_bins < 1 || self.nonstatic_extent_bins < 1 {
            return bad("extents must be at least 1 bin");
        }
        if !(self.nonstatic_clutter_rate >= 0.0) || !(self.snr_scale >= 0.0) {
            return bad("rates and scales must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.target_presence) {
            return bad("target_presence must lie in [0, 1]");
        }
        if !(self.target_law.is_valid() && self.background_law.is_valid() && self.nonstatic_law.is_valid()) {
            return bad("amplitude law parameters must be non-negative");
        }
        if let StaticClutter::Random { amplitude, .. } = self.static_clutter {
            if !(amplitude >= 0.0) {
                return bad("static clutter amplitude must be non-negative");
            }
        }
        if let StaticClutter::Profiles(p) = &self.static_clutter {
            if p.iter().flatten().any(|v| !(*v >= 0.0)) {
                return bad("static clutter profiles must be non-negative");
            }
        }
        Ok(())
    }

    /// Overall multiplier on target-bin draws for pulse integration `n_s`.
    pub fn target_gain(&self, n_s: usize) -> f64 {
        self.snr_scale * (n_s as f64).sqrt()
    }

    /// Static clutter vector of every sensor.
    pub fn static_profiles(&self, sensors: usize, n_c: usize) -> Result<Vec<Vec<f64>>> {
        match &self.static_clutter {
            StaticClutter::None => Ok(vec![vec![0.0; n_c]; sensors]),
            StaticClutter::Random {
                reflectors,
                amplitude,
                seed,
            } => Ok((0..sensors)
                .map(|n| {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix(*seed, n as u64 + 1));
                    let mut v = vec![0.0; n_c];
                    for _ in 0..*reflectors {
                        let j = rng.random_range(0..n_c);
                        v[j] += rng.random::<f64>() * amplitude;
                    }
                    v
                })
                .collect()),
            StaticClutter::Profiles(p) => {
                if p.len() != sensors {
                    return Err(Error::LengthMismatch {
                        expected: sensors,
                        actual: p.len(),
                    });
                }
                if let Some(bad) = p.iter().find(|v| v.len() != n_c) {
                    return Err(Error::LengthMismatch {
                        expected: n_c,
                        actual: bad.len(),
                    });
                }
                Ok(p.clone())
            }
        }
    }
}

/// Propagation delay of the echo from `target_pos` at `sensor`, seconds.
///
/// Monostatic: round-trip delay. Multistatic: excess delay over the direct
/// transmitter-to-sensor path.
pub fn expected_delay(layout: &SensorLayout, sensor: usize, target_pos: &Position) -> f64 {
    let rx = &layout.sensors[sensor];
    match layout.mode {
        NetworkMode::Monostatic => 2.0 * rx.distance(target_pos) / SPEED_OF_LIGHT,
        NetworkMode::Multistatic => {
            let tx = layout
                .transmitter
                .expect("multistatic layout validated to carry a transmitter");
            (tx.distance(target_pos) + target_pos.distance(rx) - tx.distance(rx)) / SPEED_OF_LIGHT
        }
    }
}

/// SplitMix64 finaliser over a pair of words.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(b)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one scan of one run.
pub fn scan_rng(run_seed: u64, scan: i64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(run_seed, scan as u64))
}

/// Reusable synthesiser with the static clutter precomputed.
#[derive(Debug, Clone)]
pub struct Synthesizer<'a> {
    spec: &'a ScenarioSpec,
    model: &'a EchoModel,
    static_profiles: Vec<Vec<f64>>,
}

impl<'a> Synthesizer<'a> {
    pub fn new(spec: &'a ScenarioSpec, model: &'a EchoModel) -> Result<Self> {
        model.validate()?;
        let static_profiles = model.static_profiles(spec.layout.len(), spec.params.n_c)?;
        Ok(Self {
            spec,
            model,
            static_profiles,
        })
    }

    /// Profiles for ground-truth scan `scan` (1-based).
    pub fn scan<R: Rng + ?Sized>(&self, scan: usize, rng: &mut R) -> Result<Vec<RangeProfile>> {
        let targets: Vec<Position> = self.spec.truth.at(scan)?.into_iter().map(|(_, p)| p).collect();
        Ok(self.profiles(scan as i64, &targets, rng))
    }

    /// Target-free profiles, used for MTI pre-roll before scan 1.
    pub fn empty_scan<R: Rng + ?Sized>(&self, scan: i64, rng: &mut R) -> Vec<RangeProfile> {
        self.profiles(scan, &[], rng)
    }

    fn profiles<R: Rng + ?Sized>(&self, scan: i64, targets: &[Position], rng: &mut R) -> Vec<RangeProfile> {
        let params = &self.spec.params;
        let n_c = params.n_c;
        let model = self.model;
        let gain = model.target_gain(params.n_s);
        let poisson = (model.nonstatic_clutter_rate > 0.0)
            .then(|| Poisson::new(model.nonstatic_clutter_rate).expect("positive rate"));

        (0..self.spec.layout.len())
            .map(|n| {
                let mut v = self.static_profiles[n].clone();
                for s in v.iter_mut() {
                    *s += model.background_law.sample(rng);
                }
                for target in targets {
                    let delay = expected_delay(&self.spec.layout, n, target);
                    let center = (delay / params.sample_period).round() as i64;
                    if center >= n_c as i64 {
                        log::debug!(
                            "scan {scan}: target at ({:.2}, {:.2}) beyond sensor {} range",
                            target.x,
                            target.y,
                            n + 1
                        );
                        continue;
                    }
                    if model.target_presence < 1.0 && rng.random::<f64>() >= model.target_presence {
                        continue;
                    }
                    add_burst(
                        &mut v,
                        center,
                        model.target_extent_bins,
                        |r| gain * model.target_law.sample(r),
                        rng,
                    );
                }
                if let Some(p) = &poisson {
                    let bursts: f64 = p.sample(rng);
                    for _ in 0..bursts as usize {
                        let center = rng.random_range(0..n_c) as i64;
                        add_burst(
                            &mut v,
                            center,
                            model.nonstatic_extent_bins,
                            |r| model.nonstatic_law.sample(r),
                            rng,
                        );
                    }
                }
                RangeProfile::new(v, scan, n)
            })
            .collect()
    }
}

/// Adds `extent` contiguous draws centred on bin `center`, clipped to the
/// profile.
fn add_burst<R, F>(v: &mut [f64], center: i64, extent: usize, mut draw: F, rng: &mut R)
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> f64,
{
    let start = center - (extent as i64 - 1) / 2;
    for j in start..start + extent as i64 {
        let a = draw(rng);
        if (0..v.len() as i64).contains(&j) {
            v[j as usize] += a;
        }
    }
}

/// One profile per sensor for ground-truth scan `scan`.
pub fn synth_scan<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    model: &EchoModel,
    scan: usize,
    rng: &mut R,
) -> Result<Vec<RangeProfile>> {
    Synthesizer::new(spec, model)?.scan(scan, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;

    fn spec_with(targets: &str) -> ScenarioSpec {
        let doc = format!(
            r#"
            scan_count = 10
            scan_period = 0.45
            [grid]
            n_x = 150
            n_y = 150
            delta_x = 0.1
            delta_y = 0.1
            [sensors]
            mode = "monostatic"
            positions = [[7.5, 0.0], [15.0, 7.5], [7.5, 15.0], [0.0, 7.5]]
            {targets}
            "#
        );
        load_scenario(&doc).unwrap()
    }

    #[test]
    fn delay_examples() {
        let mono = SensorLayout::monostatic(vec![
            Position::new(0.0, 0.0),
            Position::new(1.0, 0.0),
            Position::new(0.0, 1.0),
        ]);
        let d = expected_delay(&mono, 0, &Position::new(3.0, 4.0));
        assert!((d - 10.0 / SPEED_OF_LIGHT).abs() < 1e-24);
        assert_eq!(expected_delay(&mono, 1, &Position::new(1.0, 0.0)), 0.0);

        let multi = SensorLayout::multistatic(
            Position::new(0.0, 0.0),
            vec![
                Position::new(6.0, 0.0),
                Position::new(0.0, 6.0),
                Position::new(6.0, 6.0),
            ],
        );
        let d = expected_delay(&multi, 0, &Position::new(3.0, 4.0));
        assert!((d - 4.0 / SPEED_OF_LIGHT).abs() < 1e-24);
    }

    #[test]
    fn empty_scene_is_all_zero() {
        let spec = spec_with("");
        let model = EchoModel::noiseless(1.0, 5);
        let mut rng = scan_rng(3, 1);
        let profiles = synth_scan(&spec, &model, 1, &mut rng).unwrap();
        assert_eq!(profiles.len(), 4);
        assert!(profiles
            .iter()
            .all(|p| p.len() == 1500 && p.samples.iter().all(|&s| s == 0.0)));
    }

    #[test]
    fn static_scene_repeats_exactly() {
        let spec = spec_with("");
        let model = EchoModel {
            static_clutter: StaticClutter::Random {
                reflectors: 30,
                amplitude: 5.0,
                seed: 9,
            },
            ..EchoModel::noiseless(0.0, 1)
        };
        let a = synth_scan(&spec, &model, 1, &mut scan_rng(1, 1)).unwrap();
        let b = synth_scan(&spec, &model, 7, &mut scan_rng(1, 7)).unwrap();
        assert!(a.iter().any(|p| p.samples.iter().any(|&s| s > 0.0)));
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(pa.samples, pb.samples);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec =
            spec_with("[[targets]]\nwaypoints = [{ scan = 1, x = 4.0, y = 4.0 }, { scan = 10, x = 8.0, y = 5.0 }]");
        let model = EchoModel::default();
        let a = synth_scan(&spec, &model, 5, &mut scan_rng(11, 5)).unwrap();
        let b = synth_scan(&spec, &model, 5, &mut scan_rng(11, 5)).unwrap();
        assert_eq!(a, b);
        let c = synth_scan(&spec, &model, 5, &mut scan_rng(12, 5)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn target_peak_sits_at_its_delay_bin() {
        let spec =
            spec_with("[[targets]]\nwaypoints = [{ scan = 1, x = 4.3, y = 6.1 }, { scan = 10, x = 9.0, y = 8.0 }]");
        let model = EchoModel {
            target_law: AmplitudeLaw::Rician { nu: 1.0, sigma: 0.3 },
            ..EchoModel::noiseless(0.0, 7)
        };
        for scan in 1..=10 {
            let profiles = synth_scan(&spec, &model, scan, &mut scan_rng(2, scan as i64)).unwrap();
            let truth = spec.truth.at(scan).unwrap()[0].1;
            for p in &profiles {
                let expect = (expected_delay(&spec.layout, p.sensor, &truth) / 61e-12).round() as i64;
                let argmax = p
                    .samples
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0 as i64;
                assert!((argmax - expect).abs() <= 7, "{argmax} vs {expect}");
            }
        }
    }

    #[test]
    fn out_of_range_target_contributes_nothing() {
        let mut spec =
            spec_with("[[targets]]\nwaypoints = [{ scan = 1, x = 14.9, y = 14.9 }, { scan = 10, x = 14.9, y = 14.8 }]");
        spec.params.n_c = 100;
        let model = EchoModel::noiseless(1.0, 3);
        let profiles = synth_scan(&spec, &model, 1, &mut scan_rng(0, 1)).unwrap();
        assert!(profiles.iter().all(|p| p.samples.iter().all(|&s| s == 0.0)));
    }

    #[test]
    fn larger_snr_scale_raises_target_bins() {
        let spec =
            spec_with("[[targets]]\nwaypoints = [{ scan = 1, x = 5.0, y = 5.0 }, { scan = 10, x = 5.0, y = 6.0 }]");
        let base = EchoModel {
            static_clutter: StaticClutter::None,
            nonstatic_clutter_rate: 0.0,
            target_extent_bins: 1,
            ..EchoModel::default()
        };
        let truth = spec.truth.at(1).unwrap()[0].1;
        let bin = (expected_delay(&spec.layout, 0, &truth) / 61e-12).round() as usize;
        let mean_at = |scale: f64| {
            let model = EchoModel {
                snr_scale: scale,
                ..base.clone()
            };
            let synth = Synthesizer::new(&spec, &model).unwrap();
            (0..1000)
                .map(|i| synth.scan(1, &mut scan_rng(i, 1)).unwrap()[0].samples[bin])
                .sum::<f64>()
                / 1000.0
        };
        let (lo, mid, hi) = (mean_at(0.5), mean_at(1.0), mean_at(2.0));
        assert!(lo < mid && mid < hi, "{lo} {mid} {hi}");
    }

    #[test]
    fn rician_mean_matches_sampling() {
        let law = AmplitudeLaw::Rician { nu: 2.0, sigma: 1.0 };
        let mut rng = scan_rng(5, 5);
        let n = 200_000;
        let m = (0..n).map(|_| law.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((m - law.mean()).abs() < 0.01, "{m} vs {}", law.mean());
        let ray = AmplitudeLaw::Rayleigh { sigma: 1.0 };
        assert!((ray.mean() - 1.2533141373155).abs() < 1e-12);
    }
}
