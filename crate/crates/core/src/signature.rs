//! Readout sessions, signature sets, golden enrollment and bias elimination.

use rayon::prelude::*;

use crate::bits::{BitVector, PositionMask};
use crate::entropy::{resolve_power_up, EnvironmentCondition, NoiseCalibration};
use crate::error::{invalid, Error, Result};
use crate::population::DevicePopulation;
use crate::rng::{normal_at, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutSession {
    pub env: EnvironmentCondition,
    pub trials: usize,
    pub session_seed: u64,
    pub calibration: NoiseCalibration,
}

impl ReadoutSession {
    pub fn new(env: EnvironmentCondition, trials: usize, session_seed: u64, calibration: NoiseCalibration) -> Result<Self> {
        if trials == 0 {
            return Err(invalid("a readout session needs at least one trial"));
        }
        Ok(Self {
            env,
            trials,
            session_seed,
            calibration,
        })
    }
}

/// Bits indexed `(device, trial, position)`, with an optional keep-mask over
/// positions. Masking never touches the stored bits.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureSet {
    devices: usize,
    trials: usize,
    n: usize,
    rows: Vec<BitVector>,
    mask: Option<PositionMask>,
}

impl SignatureSet {
    /// `rows` is device-major: `rows[device * trials + trial]`.
    pub fn new(devices: usize, trials: usize, n: usize, rows: Vec<BitVector>) -> Result<Self> {
        if devices == 0 || trials == 0 || n == 0 {
            return Err(invalid("signature set dimensions must be positive"));
        }
        if rows.len() != devices * trials {
            return Err(invalid(format!(
                "expected {} rows for {devices} devices x {trials} trials, got {}",
                devices * trials,
                rows.len()
            )));
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid(format!("every row must hold {n} bits")));
        }
        Ok(Self {
            devices,
            trials,
            n,
            rows,
            mask: None,
        })
    }

    /// One signature per device, a single trial.
    pub fn from_signatures(rows: Vec<BitVector>) -> Result<Self> {
        let n = rows.first().map(BitVector::len).unwrap_or(0);
        Self::new(rows.len(), 1, n, rows)
    }

    pub fn devices(&self) -> usize {
        self.devices
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    /// Full signature length, ignoring the mask.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn effective_len(&self) -> usize {
        self.mask.as_ref().map_or(self.n, PositionMask::kept_count)
    }

    pub fn mask(&self) -> Option<&PositionMask> {
        self.mask.as_ref()
    }

    pub fn rows(&self) -> &[BitVector] {
        &self.rows
    }

    pub fn row(&self, device: usize, trial: usize) -> &BitVector {
        assert!(trial < self.trials);
        &self.rows[device * self.trials + trial]
    }

    pub fn device_rows(&self, device: usize) -> &[BitVector] {
        &self.rows[device * self.trials..(device + 1) * self.trials]
    }

    /// Rows of one trial, one per device.
    pub fn trial_rows(&self, trial: usize) -> Result<Vec<BitVector>> {
        if trial >= self.trials {
            return Err(invalid(format!("trial {trial} out of range ({} trials)", self.trials)));
        }
        Ok((0..self.devices).map(|d| self.row(d, trial).clone()).collect())
    }

    pub fn bit(&self, device: usize, trial: usize, position: usize) -> bool {
        self.row(device, trial).get(position)
    }

    pub fn keeps(&self, position: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m.keeps(position))
    }

    /// Restrict to the positions kept by `mask` (intersected with any mask
    /// already present). A mask keeping everything leaves the set unchanged.
    pub fn apply_mask(&self, mask: &PositionMask) -> Result<Self> {
        if mask.len() != self.n {
            return Err(invalid(format!("mask covers {} positions, signatures have {}", mask.len(), self.n)));
        }
        let combined = match &self.mask {
            Some(existing) => existing.intersect(mask)?,
            None => mask.clone(),
        };
        let kept = combined.kept_count();
        if kept == 0 {
            return Err(Error::EmptySignature);
        }
        Ok(Self {
            mask: (kept < self.n).then_some(combined),
            ..self.clone()
        })
    }

    pub fn unmasked(&self) -> Self {
        Self {
            mask: None,
            ..self.clone()
        }
    }
}

/// Read every device `session.trials` times. Noise for `(device, trial,
/// position)` comes from its own derived stream, so the result does not
/// depend on scheduling.
pub fn read_signatures(population: &DevicePopulation, session: &ReadoutSession) -> Result<SignatureSet> {
    if session.trials == 0 {
        return Err(invalid("a readout session needs at least one trial"));
    }
    let sigma_n = session.calibration.noise_sigma_at(&session.env)?;
    let n = population.cells_per_device();
    let offsets = population.offsets();
    let seed = session.session_seed;

    let per_device: Vec<Vec<BitVector>> = (0..population.num_devices())
        .into_par_iter()
        .map(|d| {
            (0..session.trials)
                .map(|t| {
                    let mut row = BitVector::zeros(n);
                    for (p, &offset) in offsets.iter().enumerate() {
                        let noise = if sigma_n > 0.0 {
                            sigma_n * normal_at(seed, &[tag::NOISE, d as u64, t as u64, p as u64])
                        } else {
                            0.0
                        };
                        let out = resolve_power_up(population.mismatch(d, p), offset, noise)?;
                        if out.bit {
                            row.set(p, true);
                        }
                    }
                    Ok(row)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    SignatureSet::new(
        population.num_devices(),
        session.trials,
        n,
        per_device.into_iter().flatten().collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenSignature {
    n: usize,
    trials: usize,
    bits: Vec<BitVector>,
    /// Trials agreeing with the golden bit, `agree[device * n + position]`.
    agree: Vec<u32>,
    mask: Option<PositionMask>,
}

impl GoldenSignature {
    pub fn devices(&self) -> usize {
        self.bits.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn signatures(&self) -> &[BitVector] {
        &self.bits
    }

    pub fn signature(&self, device: usize) -> &BitVector {
        &self.bits[device]
    }

    pub fn mask(&self) -> Option<&PositionMask> {
        self.mask.as_ref()
    }

    /// Fraction of trials agreeing with the golden bit, in `[0.5, 1]`.
    pub fn stability(&self, device: usize, position: usize) -> f64 {
        self.agree[device * self.n + position] as f64 / self.trials as f64
    }

    /// The golden bits as a one-trial signature set (mask preserved).
    pub fn as_signature_set(&self) -> SignatureSet {
        let set = SignatureSet::new(self.devices(), 1, self.n, self.bits.clone()).expect("golden dimensions are valid");
        match &self.mask {
            Some(m) => set.apply_mask(m).expect("golden mask is non-empty"),
            None => set,
        }
    }
}

/// Majority vote over trials; an exact tie takes the trial-0 bit.
pub fn enroll_golden(sigs: &SignatureSet) -> GoldenSignature {
    let n = sigs.n();
    let trials = sigs.trials();
    let mut bits = Vec::with_capacity(sigs.devices());
    let mut agree = Vec::with_capacity(sigs.devices() * n);
    for d in 0..sigs.devices() {
        let rows = sigs.device_rows(d);
        let mut golden = BitVector::zeros(n);
        for p in 0..n {
            let ones = rows.iter().filter(|r| r.get(p)).count();
            let bit = match (2 * ones).cmp(&trials) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => rows[0].get(p),
            };
            golden.set(p, bit);
            agree.push(if bit { ones } else { trials - ones } as u32);
        }
        bits.push(golden);
    }
    GoldenSignature {
        n,
        trials,
        bits,
        agree,
        mask: sigs.mask().cloned(),
    }
}

/// Keep-mask dropping positions whose across-device golden ones-fraction is
/// further than `bias_threshold` from 0.5, or whose across-device mean
/// stability is below `stability_threshold`. Positions already masked out in
/// `sigs` stay out.
pub fn eliminate_biased_positions(sigs: &SignatureSet, bias_threshold: f64, stability_threshold: f64) -> Result<PositionMask> {
    if !(bias_threshold > 0.0 && bias_threshold <= 0.5) {
        return Err(invalid(format!("bias threshold {bias_threshold} outside (0, 0.5]")));
    }
    if !(stability_threshold > 0.5 && stability_threshold <= 1.0) {
        return Err(invalid(format!("stability threshold {stability_threshold} outside (0.5, 1]")));
    }
    if sigs.devices() < 2 {
        return Err(invalid("bias elimination needs at least two devices"));
    }
    let golden = enroll_golden(sigs);
    let devices = sigs.devices() as f64;
    let kept = (0..sigs.n()).filter(|&p| {
        if !sigs.keeps(p) {
            return false;
        }
        let ones = (0..sigs.devices()).filter(|&d| golden.signature(d).get(p)).count() as f64;
        let agree: u64 = (0..sigs.devices()).map(|d| golden.agree[d * golden.n + p] as u64).sum();
        let mean_stability = agree as f64 / (devices * golden.trials as f64);
        (ones / devices - 0.5).abs() <= bias_threshold && mean_stability >= stability_threshold
    });
    PositionMask::from_kept(sigs.n(), kept)?.require_non_empty()
}
