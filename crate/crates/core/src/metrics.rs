//! Hamming-distance metrics, HD histograms, bias colormaps and environment
//! robustness sweeps.
//!
//! Distances are accumulated as integer counts over packed words and divided
//! once at the end, so results do not depend on how pairs are partitioned.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{BitVector, PositionMask};
use crate::entropy::{EnvironmentCondition, NoiseCalibration};
use crate::error::{invalid, Error, Result};
use crate::population::{DevicePopulation, PlacementConfig, RegionId};
use crate::rng::{derive_key, tag};
use crate::signature::{enroll_golden, read_signatures, GoldenSignature, ReadoutSession, SignatureSet};

/// Default histogram bucket width, in percent.
pub const DEFAULT_BUCKET_WIDTH_PERCENT: f64 = 1.0;

fn effective_len(n: usize, mask: Option<&PositionMask>) -> Result<usize> {
    match mask {
        Some(m) if m.len() != n => Err(invalid(format!("mask covers {} positions, signatures have {n}", m.len()))),
        Some(m) if m.kept_count() == 0 => Err(Error::EmptySignature),
        Some(m) => Ok(m.kept_count()),
        None if n == 0 => Err(Error::EmptySignature),
        None => Ok(n),
    }
}

fn check_lengths(signatures: &[BitVector], n: usize) -> Result<()> {
    match signatures.iter().position(|s| s.len() != n) {
        Some(i) => Err(invalid(format!("signature {i} has {} bits, expected {n}", signatures[i].len()))),
        None => Ok(()),
    }
}

fn distance(a: &BitVector, b: &BitVector, mask: Option<&PositionMask>) -> usize {
    match mask {
        Some(m) => a.hamming_masked(b, m),
        None => a.hamming(b),
    }
}

/// Raw Hamming distance counts for every unordered pair `u < v`, visited in
/// lexicographic order, together with the effective signature length.
pub fn pairwise_distances(signatures: &[BitVector], mask: Option<&PositionMask>) -> Result<(Vec<u32>, usize)> {
    if signatures.len() < 2 {
        return Err(invalid("inter-HD needs at least two signatures"));
    }
    let n = signatures[0].len();
    check_lengths(signatures, n)?;
    let len = effective_len(n, mask)?;
    let rows: Vec<Vec<u32>> = (0..signatures.len() - 1)
        .into_par_iter()
        .map(|u| {
            signatures[u + 1..]
                .iter()
                .map(|v| distance(&signatures[u], v, mask) as u32)
                .collect()
        })
        .collect();
    Ok((rows.concat(), len))
}

/// Histogram of pairwise distances indexed by raw distance `0..=len`, built
/// without materializing the pair list.
pub fn pairwise_distance_counts(signatures: &[BitVector], mask: Option<&PositionMask>) -> Result<(Vec<u64>, usize)> {
    if signatures.len() < 2 {
        return Err(invalid("inter-HD needs at least two signatures"));
    }
    let n = signatures[0].len();
    check_lengths(signatures, n)?;
    let len = effective_len(n, mask)?;
    let counts = (0..signatures.len() - 1)
        .into_par_iter()
        .fold(
            || vec![0u64; len + 1],
            |mut acc, u| {
                for v in &signatures[u + 1..] {
                    acc[distance(&signatures[u], v, mask)] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; len + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok((counts, len))
}

/// Average pairwise distance over all `R(R-1)/2` pairs, in percent of the
/// (effective) signature length.
pub fn inter_hd(signatures: &[BitVector], mask: Option<&PositionMask>) -> Result<f64> {
    let (counts, len) = pairwise_distance_counts(signatures, mask)?;
    let total: u128 = counts.iter().enumerate().map(|(d, &c)| d as u128 * c as u128).sum();
    let r = signatures.len() as u128;
    Ok((200 * total) as f64 / (r * (r - 1) * len as u128) as f64)
}

/// Mean distance of `rereads` from `reference`, in percent.
pub fn intra_hd(reference: &BitVector, rereads: &[BitVector], mask: Option<&PositionMask>) -> Result<f64> {
    if rereads.is_empty() {
        return Err(invalid("intra-HD needs at least one re-read"));
    }
    let n = reference.len();
    check_lengths(rereads, n)?;
    let len = effective_len(n, mask)?;
    let total: u64 = rereads.iter().map(|s| distance(reference, s, mask) as u64).sum();
    Ok((100 * total as u128) as f64 / (rereads.len() as u128 * len as u128) as f64)
}

/// Inter-HD of golden signatures, honoring the golden mask.
pub fn inter_hd_golden(golden: &GoldenSignature) -> Result<f64> {
    inter_hd(golden.signatures(), golden.mask())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraSummary {
    /// Mean over devices (every device has the same trial count and length).
    pub pooled_percent: f64,
    pub per_device_percent: Vec<f64>,
}

/// Intra-HD of every device's trials against `golden`, using the mask of
/// `sigs`.
pub fn intra_hd_against(sigs: &SignatureSet, golden: &GoldenSignature) -> Result<IntraSummary> {
    if golden.devices() != sigs.devices() || golden.n() != sigs.n() {
        return Err(invalid("golden signatures do not match the signature set"));
    }
    let mask = sigs.mask();
    let per_device = (0..sigs.devices())
        .into_par_iter()
        .map(|d| intra_hd(golden.signature(d), sigs.device_rows(d), mask))
        .collect::<Result<Vec<_>>>()?;
    let len = effective_len(sigs.n(), mask)?;
    let total: u64 = (0..sigs.devices())
        .map(|d| {
            sigs.device_rows(d)
                .iter()
                .map(|r| distance(golden.signature(d), r, mask) as u64)
                .sum::<u64>()
        })
        .sum();
    let pooled = (100 * total as u128) as f64 / (sigs.devices() as u128 * sigs.trials() as u128 * len as u128) as f64;
    Ok(IntraSummary {
        pooled_percent: pooled,
        per_device_percent: per_device,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionIntra {
    pub region: RegionId,
    pub positions: usize,
    pub intra_hd_percent: f64,
}

/// Intra-HD restricted to the positions of each placement region, pooled
/// over devices and trials. Regions left empty by the mask are omitted.
pub fn intra_hd_by_region(sigs: &SignatureSet, golden: &GoldenSignature, placement: &PlacementConfig) -> Result<Vec<RegionIntra>> {
    if placement.cell_count() != sigs.n() {
        return Err(invalid(format!(
            "placement has {} cells, signatures have {}",
            placement.cell_count(),
            sigs.n()
        )));
    }
    let mut positions: BTreeMap<RegionId, Vec<usize>> = BTreeMap::new();
    for p in (0..sigs.n()).filter(|&p| sigs.keeps(p)) {
        positions.entry(placement.region_of(p)).or_default().push(p);
    }
    let mut out = Vec::with_capacity(positions.len());
    for (region, cells) in positions {
        let mut errors = 0u64;
        for d in 0..sigs.devices() {
            let g = golden.signature(d);
            for r in sigs.device_rows(d) {
                errors += cells.iter().filter(|&&p| g.get(p) != r.get(p)).count() as u64;
            }
        }
        let bits = (sigs.devices() * sigs.trials() * cells.len()) as u128;
        out.push(RegionIntra {
            region,
            positions: cells.len(),
            intra_hd_percent: (100 * errors as u128) as f64 / bits as f64,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bucket_width_percent: f64,
    /// Bucket index `k` covers `[k * width, (k + 1) * width)` percent.
    pub counts: BTreeMap<u32, u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn bucket_lower_percent(&self, bucket: u32) -> f64 {
        bucket as f64 * self.bucket_width_percent
    }

    /// Lower bound of the most populated bucket (lowest on ties).
    pub fn mode_percent(&self) -> Option<f64> {
        let max = *self.counts.values().max()?;
        let bucket = self.counts.iter().find(|(_, &c)| c == max).map(|(&b, _)| b)?;
        Some(self.bucket_lower_percent(bucket))
    }
}

fn bucket_of(percent: f64, width: f64) -> u32 {
    (percent / width + 1e-9).floor().max(0.0) as u32
}

fn check_width(width: f64) -> Result<()> {
    if width.is_finite() && width > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("bucket width {width} must be positive")))
    }
}

/// Bucket a list of HD percentages.
pub fn hd_histogram(hd_percents: &[f64], bucket_width_percent: f64) -> Result<Histogram> {
    check_width(bucket_width_percent)?;
    let mut counts = BTreeMap::new();
    for &p in hd_percents {
        *counts.entry(bucket_of(p, bucket_width_percent)).or_insert(0) += 1;
    }
    Ok(Histogram {
        bucket_width_percent,
        counts,
    })
}

/// Histogram of all pairwise inter-HD values of `signatures`.
pub fn inter_hd_histogram(signatures: &[BitVector], mask: Option<&PositionMask>, bucket_width_percent: f64) -> Result<Histogram> {
    check_width(bucket_width_percent)?;
    let (by_distance, len) = pairwise_distance_counts(signatures, mask)?;
    let mut counts = BTreeMap::new();
    for (d, c) in by_distance.into_iter().enumerate().filter(|&(_, c)| c > 0) {
        let percent = 100.0 * d as f64 / len as f64;
        *counts.entry(bucket_of(percent, bucket_width_percent)).or_insert(0) += c;
    }
    Ok(Histogram {
        bucket_width_percent,
        counts,
    })
}

/// Device x position grid of power-up values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Colormap {
    rows: Vec<BitVector>,
}

impl Colormap {
    pub fn devices(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, BitVector::len)
    }

    pub fn get(&self, device: usize, position: usize) -> bool {
        self.rows[device].get(position)
    }

    pub fn rows(&self) -> &[BitVector] {
        &self.rows
    }
}

/// Fraction of ones over all devices and kept positions of one trial, plus
/// the full grid of that trial.
pub fn ones_fraction_and_colormap(sigs: &SignatureSet, trial: usize) -> Result<(f64, Colormap)> {
    let rows = sigs.trial_rows(trial)?;
    let ones: u64 = match sigs.mask() {
        Some(m) => rows
            .iter()
            .map(|r| {
                r.words()
                    .iter()
                    .zip(m.bits().words())
                    .map(|(a, b)| (a & b).count_ones() as u64)
                    .sum::<u64>()
            })
            .sum(),
        None => rows.iter().map(|r| r.count_ones() as u64).sum(),
    };
    let bits = (sigs.devices() * sigs.effective_len()) as f64;
    Ok((ones as f64 / bits, Colormap { rows }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub env: EnvironmentCondition,
    pub intra_hd_percent: f64,
}

/// Enroll golden signatures at `nominal`, then read `trials` trials at every
/// env and report the mean intra-HD against that golden. Session seeds are
/// derived from `seed`: index 0 for enrollment, `i + 1` for `envs[i]`.
pub fn robustness_sweep(
    population: &DevicePopulation,
    calibration: &NoiseCalibration,
    nominal: EnvironmentCondition,
    envs: &[EnvironmentCondition],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    robustness_sweep_masked(population, calibration, nominal, envs, trials, seed, None)
}

/// As [`robustness_sweep`], restricted to the positions kept by `mask`.
pub fn robustness_sweep_masked(
    population: &DevicePopulation,
    calibration: &NoiseCalibration,
    nominal: EnvironmentCondition,
    envs: &[EnvironmentCondition],
    trials: usize,
    seed: u64,
    mask: Option<&PositionMask>,
) -> Result<Vec<SweepPoint>> {
    let session = |index: u64, env: EnvironmentCondition| {
        ReadoutSession::new(env, trials, derive_key(seed, &[tag::SESSION, index]), calibration.clone())
    };
    for env in envs.iter().chain([&nominal]) {
        calibration.target_ber_at(env)?;
    }
    let masked = |s: SignatureSet| match mask {
        Some(m) => s.apply_mask(m),
        None => Ok(s),
    };
    let enrollment = masked(read_signatures(population, &session(0, nominal)?)?)?;
    let golden = enroll_golden(&enrollment);
    envs.iter()
        .enumerate()
        .map(|(i, &env)| {
            let reads = masked(read_signatures(population, &session(i as u64 + 1, env)?)?)?;
            Ok(SweepPoint {
                env,
                intra_hd_percent: intra_hd_against(&reads, &golden)?.pooled_percent,
            })
        })
        .collect()
}

/// Summary of one signature set: inter-HD and histogram over golden
/// signatures, intra-HD of the trials against the golden, ones fraction and
/// colormap of one trial, plus any robustness sweep results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub devices: usize,
    pub trials: usize,
    pub signature_bits: usize,
    pub effective_bits: usize,
    pub inter_hd_percent: f64,
    pub intra_hd_percent: f64,
    pub intra_hd_by_region: Vec<RegionIntra>,
    pub hd_histogram: Histogram,
    pub ones_fraction: f64,
    #[serde(skip)]
    pub colormap: Colormap,
    pub per_env_ber: Vec<SweepPoint>,
}

impl MetricReport {
    pub fn compute(sigs: &SignatureSet, placement: Option<&PlacementConfig>, bucket_width_percent: f64) -> Result<Self> {
        let golden = enroll_golden(sigs);
        let intra = intra_hd_against(sigs, &golden)?;
        let by_region = match placement {
            Some(p) => intra_hd_by_region(sigs, &golden, p)?,
            None => Vec::new(),
        };
        let (ones_fraction, colormap) = ones_fraction_and_colormap(sigs, 0)?;
        Ok(Self {
            devices: sigs.devices(),
            trials: sigs.trials(),
            signature_bits: sigs.n(),
            effective_bits: sigs.effective_len(),
            inter_hd_percent: inter_hd_golden(&golden)?,
            intra_hd_percent: intra.pooled_percent,
            intra_hd_by_region: by_region,
            hd_histogram: inter_hd_histogram(golden.signatures(), golden.mask(), bucket_width_percent)?,
            ones_fraction,
            colormap,
            per_env_ber: Vec::new(),
        })
    }

    pub fn with_sweep(mut self, sweep: Vec<SweepPoint>) -> Self {
        self.per_env_ber = sweep;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{generate_population, PopulationSpec};
    use proptest::prelude::*;

    fn bv(s: &str) -> BitVector {
        BitVector::from_ascii(s).unwrap()
    }

    fn brute_inter(sigs: &[Vec<bool>]) -> (u128, u128) {
        let r = sigs.len() as u128;
        let n = sigs[0].len() as u128;
        let mut total = 0u128;
        for u in 0..sigs.len() {
            for v in u + 1..sigs.len() {
                total += sigs[u].iter().zip(&sigs[v]).filter(|(a, b)| a != b).count() as u128;
            }
        }
        (200 * total, r * (r - 1) * n)
    }

    #[test]
    fn inter_hd_examples() {
        assert_eq!(inter_hd(&[bv("0101"), bv("0101")], None).unwrap(), 0.0);
        let v = inter_hd(&[bv("0000"), bv("1111"), bv("0011")], None).unwrap();
        assert!((v - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(inter_hd(&[bv("0110"), bv("1001")], None).unwrap(), 100.0);
        assert!(inter_hd(&[bv("01")], None).is_err());
        assert!(inter_hd(&[bv("01"), bv("011")], None).is_err());
    }

    #[test]
    fn intra_hd_examples() {
        assert_eq!(intra_hd(&bv("0101"), &[bv("0101"), bv("0101")], None).unwrap(), 0.0);
        let v = intra_hd(&bv("0000"), &[bv("0001"), bv("0011")], None).unwrap();
        assert_eq!(v, 37.5);
        assert!(intra_hd(&bv("0000"), &[], None).is_err());
    }

    #[test]
    fn masked_distances_use_reduced_length() {
        let mask = PositionMask::from_kept(4, [0, 1]).unwrap();
        assert_eq!(inter_hd(&[bv("0000"), bv("1011")], Some(&mask)).unwrap(), 50.0);
        assert_eq!(intra_hd(&bv("0000"), &[bv("0111")], Some(&mask)).unwrap(), 50.0);
        let empty = PositionMask::from_kept(4, []).unwrap();
        assert!(matches!(
            inter_hd(&[bv("0000"), bv("1011")], Some(&empty)),
            Err(Error::EmptySignature)
        ));
    }

    #[test]
    fn unbiased_population_inter_hd_near_half() {
        let pop = generate_population(&PopulationSpec::unbiased(1000, 64, 0.25, 31).unwrap()).unwrap();
        let env = EnvironmentCondition::simulation_nominal();
        let cal = NoiseCalibration::single_point(0.25, env, 0.0).unwrap();
        let sigs = read_signatures(&pop, &ReadoutSession::new(env, 1, 0, cal).unwrap()).unwrap();
        let golden = enroll_golden(&sigs);
        let v = inter_hd_golden(&golden).unwrap();
        assert!((v - 50.0).abs() < 1.0, "{v}");
        let hist = inter_hd_histogram(golden.signatures(), None, 1.0).unwrap();
        assert_eq!(hist.total(), 1000 * 999 / 2);
        let mode = hist.mode_percent().unwrap();
        assert!((45.0..=55.0).contains(&mode), "{mode}");
    }

    #[test]
    fn histogram_examples() {
        let h = hd_histogram(&[50.0], 1.0).unwrap();
        assert_eq!(h.counts, BTreeMap::from([(50, 1)]));
        let h = hd_histogram(&[0.0, 100.0], 1.0).unwrap();
        assert_eq!(h.counts, BTreeMap::from([(0, 1), (100, 1)]));
        assert!(hd_histogram(&[1.0], 0.0).is_err());
        let h = inter_hd_histogram(&[bv("000"), bv("001"), bv("011")], None, 10.0).unwrap();
        // 33.3, 66.7, 33.3
        assert_eq!(h.counts, BTreeMap::from([(3, 2), (6, 1)]));
    }

    #[test]
    fn ones_fraction_examples() {
        let zeros = SignatureSet::from_signatures(vec![bv("0000"), bv("0000")]).unwrap();
        let (f, map) = ones_fraction_and_colormap(&zeros, 0).unwrap();
        assert_eq!(f, 0.0);
        assert!((0..2).all(|d| (0..4).all(|p| !map.get(d, p))));
        let alt = SignatureSet::from_signatures(vec![bv("0101"), bv("1010")]).unwrap();
        assert_eq!(ones_fraction_and_colormap(&alt, 0).unwrap().0, 0.5);
        assert!(ones_fraction_and_colormap(&alt, 1).is_err());
        let masked = alt.apply_mask(&PositionMask::from_kept(4, [1, 3]).unwrap()).unwrap();
        assert_eq!(ones_fraction_and_colormap(&masked, 0).unwrap().0, 0.5);
    }

    #[test]
    fn expected_inter_hd_for_biased_bits() {
        use rand::{Rng, SeedableRng};
        for (i, p) in [0.5, 0.6, 0.75].into_iter().enumerate() {
            let mut rng = rand::rngs::StdRng::seed_from_u64(i as u64);
            let sigs: Vec<BitVector> = (0..400)
                .map(|_| BitVector::from_bools((0..256).map(|_| rng.random_bool(p))))
                .collect();
            let v = inter_hd(&sigs, None).unwrap() / 100.0;
            let expected = 2.0 * p * (1.0 - p);
            // pairs share devices; the standard error of the mean over
            // positions is bounded by treating the 256 columns as independent
            // U-statistics with 400 devices each.
            let se = (expected * (1.0 - expected) / 256.0 / 200.0).sqrt();
            assert!((v - expected).abs() < 3.0 * se, "p={p}: {v} vs {expected}");
        }
    }

    #[test]
    fn robustness_sweep_zero_noise_nominal() {
        let pop = generate_population(&PopulationSpec::unbiased(50, 64, 0.25, 2).unwrap()).unwrap();
        let cal = NoiseCalibration::temperature_study(0.25);
        let nominal = EnvironmentCondition::simulation_nominal();
        let out = robustness_sweep(&pop, &cal, nominal, &[nominal], 2, 9).unwrap();
        assert_eq!(out[0].intra_hd_percent, 0.0);
        let far = EnvironmentCondition::new(100.0, 1.0).unwrap();
        assert!(matches!(
            robustness_sweep(&pop, &cal, nominal, &[far], 1, 9),
            Err(Error::ExtrapolationRefused { .. })
        ));
    }

    #[test]
    fn region_intra_partitions_pooled_value() {
        let spec = PopulationSpec {
            placement: PlacementConfig::d3(),
            ..PopulationSpec::unbiased(20, 1024, 0.25, 3).unwrap()
        };
        let pop = generate_population(&spec).unwrap();
        let env = EnvironmentCondition::simulation_nominal();
        let cal = NoiseCalibration::single_point(0.25, env, 0.1).unwrap();
        let sigs = read_signatures(&pop, &ReadoutSession::new(env, 3, 4, cal).unwrap()).unwrap();
        let report = MetricReport::compute(&sigs, Some(&spec.placement), 1.0).unwrap();
        assert_eq!(report.intra_hd_by_region.len(), 64);
        let weighted: f64 = report
            .intra_hd_by_region
            .iter()
            .map(|r| r.intra_hd_percent * r.positions as f64)
            .sum::<f64>()
            / 1024.0;
        assert!((weighted - report.intra_hd_percent).abs() < 1e-9);
        assert_eq!(report.hd_histogram.total(), 190);
    }

    fn arb_set() -> impl Strategy<Value = Vec<Vec<bool>>> {
        (2usize..=5, 1usize..=8).prop_flat_map(|(r, n)| prop::collection::vec(prop::collection::vec(any::<bool>(), n), r))
    }

    proptest! {
        #[test]
        fn inter_hd_matches_brute_force(set in arb_set()) {
            let packed: Vec<BitVector> = set.iter().map(|s| BitVector::from_bools(s.iter().copied())).collect();
            let (num, den) = brute_inter(&set);
            prop_assert_eq!(inter_hd(&packed, None).unwrap(), num as f64 / den as f64);
        }

        #[test]
        fn inter_hd_symmetric_and_complement_invariant(set in arb_set(), rot in 0usize..5) {
            let packed: Vec<BitVector> = set.iter().map(|s| BitVector::from_bools(s.iter().copied())).collect();
            let base = inter_hd(&packed, None).unwrap();
            let mut perm = packed.clone();
            let k = rot % perm.len();
            perm.rotate_left(k);
            perm.reverse();
            prop_assert_eq!(inter_hd(&perm, None).unwrap(), base);
            let flipped: Vec<BitVector> = packed.iter().map(BitVector::not).collect();
            prop_assert_eq!(inter_hd(&flipped, None).unwrap(), base);
            prop_assert!((0.0..=100.0).contains(&base));
            let intra = intra_hd(&packed[0], &packed[1..], None).unwrap();
            prop_assert_eq!(intra_hd(&packed[0].not(), &flipped[1..], None).unwrap(), intra);
            prop_assert!((0.0..=100.0).contains(&intra));
        }
    }
}
