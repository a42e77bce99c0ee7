//! Per-sensor MTI clutter removal.
//!
//! The reference for scan `t` averages the `2κ` profiles received at scans
//! `t-κ-1` down to `t-3κ`; the output is the element-wise absolute
//! difference between the current profile and that reference.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::synth::RangeProfile;

/// Last `3κ` profiles of one sensor, newest at the back.
#[derive(Debug, Clone)]
pub struct ProfileHistory {
    kappa: usize,
    buf: VecDeque<RangeProfile>,
}

impl ProfileHistory {
    pub fn new(kappa: usize) -> Self {
        Self {
            kappa,
            buf: VecDeque::with_capacity(3 * kappa),
        }
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        3 * self.kappa
    }

    /// Appends the profile of the newest scan, dropping the oldest beyond `3κ`.
    pub fn push(&mut self, profile: RangeProfile) {
        if self.buf.len() == self.capacity() {
            self.buf.pop_front();
        }
        self.buf.push_back(profile);
    }

    fn lagged(&self, t: i64, lags: std::ops::RangeInclusive<i64>) -> Vec<&RangeProfile> {
        self.buf.iter().filter(|p| lags.contains(&(t - p.scan))).collect()
    }

    /// Lenient reference used during warm-up: the lagged window if any of it
    /// exists, else the most recent `2κ` profiles before `t`.
    pub fn warm_reference(&self, t: i64) -> Result<RangeProfile> {
        let k = self.kappa as i64;
        let mut set = self.lagged(t, (k + 1)..=(3 * k));
        if set.is_empty() {
            set = self.lagged(t, 1..=(2 * k));
        }
        if set.is_empty() {
            return Err(Error::WarmUp(format!("no profile before scan {t}")));
        }
        mean_profile(&set, t)
    }
}

fn mean_profile(set: &[&RangeProfile], t: i64) -> Result<RangeProfile> {
    // accumulate offsets from the first profile so a constant sequence
    // averages back to itself bit-exactly
    let base = &set[0].samples;
    let mut acc = vec![0.0; base.len()];
    for p in &set[1..] {
        if p.len() != base.len() {
            return Err(Error::LengthMismatch {
                expected: base.len(),
                actual: p.len(),
            });
        }
        for ((a, s), b) in acc.iter_mut().zip(&p.samples).zip(base) {
            *a += s - b;
        }
    }
    let n = set.len() as f64;
    let samples = base.iter().zip(acc).map(|(b, a)| b + a / n).collect();
    Ok(RangeProfile::new(samples, t, set[0].sensor))
}

/// Mean of the `2κ` profiles at scans `t-κ-1 ..= t-3κ`.
pub fn mti_reference(history: &ProfileHistory, t: i64) -> Result<RangeProfile> {
    let k = history.kappa as i64;
    let set = history.lagged(t, (k + 1)..=(3 * k));
    if set.len() < 2 * history.kappa {
        return Err(Error::WarmUp(format!(
            "scan {t} needs {} lagged profiles, have {}",
            2 * history.kappa,
            set.len()
        )));
    }
    mean_profile(&set, t)
}

/// `|current - reference|` element-wise.
pub fn mti_subtract(current: &RangeProfile, reference: &RangeProfile) -> Result<RangeProfile> {
    if current.len() != reference.len() {
        return Err(Error::LengthMismatch {
            expected: current.len(),
            actual: reference.len(),
        });
    }
    let samples = current
        .samples
        .iter()
        .zip(&reference.samples)
        .map(|(c, r)| (c - r).abs())
        .collect();
    Ok(RangeProfile::new(samples, current.scan, current.sensor))
}

/// MTI stage for all sensors of a network.
#[derive(Debug, Clone)]
pub struct Frontend {
    histories: Vec<ProfileHistory>,
}

impl Frontend {
    pub fn new(sensors: usize, kappa: usize) -> Self {
        Self {
            histories: (0..sensors).map(|_| ProfileHistory::new(kappa)).collect(),
        }
    }

    /// Only records the profiles (MTI pre-roll).
    pub fn prime(&mut self, profiles: Vec<RangeProfile>) {
        for p in profiles {
            self.histories[p.sensor].push(p);
        }
    }

    /// Clutter-suppressed profiles for the scan the inputs belong to. With no
    /// earlier profile at all the output is all zero.
    pub fn process(&mut self, profiles: Vec<RangeProfile>) -> Result<Vec<RangeProfile>> {
        let mut out = Vec::with_capacity(profiles.len());
        for eps in profiles {
            let hist = self.histories.get_mut(eps.sensor).ok_or(Error::LengthMismatch {
                expected: eps.sensor + 1,
                actual: 0,
            })?;
            let m = match hist.warm_reference(eps.scan) {
                Ok(reference) => mti_subtract(&eps, &reference)?,
                Err(Error::WarmUp(_)) => RangeProfile::new(vec![0.0; eps.len()], eps.scan, eps.sensor),
                Err(e) => return Err(e),
            };
            hist.push(eps);
            out.push(m);
        }
        Ok(out)
    }

    pub fn histories(&self) -> &[ProfileHistory] {
        &self.histories
    }
}
