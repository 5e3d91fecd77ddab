//! Frequency-band classification and sliding-window feature construction.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::dataset::CapacitySeries;
use crate::vmd::ImfSet;

/// Default ZCR threshold separating low- from high-frequency modes.
pub const DEFAULT_ZCR_THRESHOLD: f64 = 0.01;

/// Default sliding-window length in cycles.
pub const DEFAULT_WINDOW_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("sequence too short: {0} samples (need at least 2)")]
    SequenceTooShort(usize),
    #[error("window length {window_len} must be shorter than the series ({len} cycles)")]
    WindowTooLong { window_len: usize, len: usize },
    #[error("mode length {modes} does not match series length {series}")]
    LengthMismatch { modes: usize, series: usize },
    #[error("channel is constant; its scaler is not invertible")]
    ConstantChannel,
    #[error("scaler set has {low} low / {high} high channels, data has {data_low}/{data_high}")]
    ScalerMismatch { low: usize, high: usize, data_low: usize, data_high: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad tensor file: {0}")]
    BadTensorFile(String),
}

/// Fraction of strict sign changes between consecutive samples.
///
/// Zero samples inherit the previous sample's sign, so touching zero is never
/// counted twice; leading zeros carry no sign.
pub fn zero_crossing_rate(mode: &[f64]) -> Result<f64, FeatureError> {
    let n = mode.len();
    if n < 2 {
        return Err(FeatureError::SequenceTooShort(n));
    }
    let mut changes = 0usize;
    let mut prev_sign = 0i8;
    for &v in mode {
        let sign = if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            prev_sign
        };
        if prev_sign != 0 && sign != 0 && sign != prev_sign {
            changes += 1;
        }
        prev_sign = sign;
    }
    Ok(changes as f64 / n as f64)
}

/// Low/high-frequency grouping of mode indices.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPartition {
    /// Indices of modes with ZCR <= threshold.
    pub low: Vec<usize>,
    /// Indices of modes with ZCR > threshold.
    pub high: Vec<usize>,
    pub zcr_values: Vec<f64>,
    pub threshold: f64,
    /// Set when every mode landed on one side.
    pub one_sided: bool,
}

/// Classify modes by the strict `zcr > threshold` rule.
pub fn partition_bands(imfs: &ImfSet, threshold: f64) -> BandPartition {
    assert!(imfs.num_modes() >= 1, "need at least one mode");
    let zcr_values: Vec<f64> = imfs
        .modes()
        .iter()
        .map(|m| zero_crossing_rate(m).expect("modes have series length >= 8"))
        .collect();
    let mut low = Vec::new();
    let mut high = Vec::new();
    for (i, &z) in zcr_values.iter().enumerate() {
        if z > threshold {
            high.push(i);
        } else {
            low.push(i);
        }
    }
    let one_sided = low.is_empty() || high.is_empty();
    BandPartition { low, high, zcr_values, threshold, one_sided }
}

/// Partition with a fixed low-group size: the `low_count` modes with the
/// smallest ZCR (ties broken by index) form the low group. Used during
/// forecasting to keep the channel structure fixed at its training-time
/// cardinality.
pub fn partition_with_counts(imfs: &ImfSet, low_count: usize) -> BandPartition {
    assert!(low_count <= imfs.num_modes(), "low_count exceeds mode count");
    let zcr_values: Vec<f64> = imfs
        .modes()
        .iter()
        .map(|m| zero_crossing_rate(m).expect("modes have series length >= 8"))
        .collect();
    let mut order: Vec<usize> = (0..zcr_values.len()).collect();
    order.sort_by(|&a, &b| zcr_values[a].total_cmp(&zcr_values[b]).then(a.cmp(&b)));
    let mut low: Vec<usize> = order[..low_count].to_vec();
    let mut high: Vec<usize> = order[low_count..].to_vec();
    low.sort_unstable();
    high.sort_unstable();
    let one_sided = low.is_empty() || high.is_empty();
    BandPartition { low, high, zcr_values, threshold: f64::NAN, one_sided }
}

/// Min-max statistics for one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelScaler {
    pub min: f64,
    pub max: f64,
    /// `max <= min`: the channel was constant over the training region.
    pub constant: bool,
}

impl ChannelScaler {
    pub fn fit(values: impl Iterator<Item = f64>) -> ChannelScaler {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            min = min.min(v);
            max = max.max(v);
        }
        ChannelScaler { min, max, constant: !(max > min) }
    }

    /// Map into [0, 1] on the training range; constant channels map to 0.
    pub fn normalize(&self, value: f64) -> f64 {
        if self.constant {
            0.0
        } else {
            (value - self.min) / (self.max - self.min)
        }
    }
}

/// Exact inverse of min-max scaling on a non-constant channel.
pub fn denormalize(value: f64, scaler: &ChannelScaler) -> Result<f64, FeatureError> {
    if scaler.constant {
        return Err(FeatureError::ConstantChannel);
    }
    Ok(scaler.min + value * (scaler.max - scaler.min))
}

/// Per-channel scalers for both groups plus the capacity target.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerSet {
    pub low: Vec<ChannelScaler>,
    pub high: Vec<ChannelScaler>,
    pub target: ChannelScaler,
}

/// Dense row-major `[n, t, c]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    data: Vec<f64>,
    dims: [usize; 3],
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Tensor3 { data: vec![0.0; dims[0] * dims[1] * dims[2]], dims }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn get(&self, i: usize, t: usize, c: usize) -> f64 {
        self.data[(i * self.dims[1] + t) * self.dims[2] + c]
    }

    pub fn set(&mut self, i: usize, t: usize, c: usize, v: f64) {
        self.data[(i * self.dims[1] + t) * self.dims[2] + c] = v;
    }

    /// Sample `i` as a `[t][c]` matrix.
    pub fn sample(&self, i: usize) -> Vec<Vec<f64>> {
        (0..self.dims[1])
            .map(|t| (0..self.dims[2]).map(|c| self.get(i, t, c)).collect())
            .collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Flat binary layout: magic, three u64 dims, then row-major f64 LE.
    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<(), FeatureError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(b"TNSR3\0\0\0")?;
        for d in self.dims {
            f.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &self.data {
            f.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        let mut f = std::fs::File::open(path)?;
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != b"TNSR3\0\0\0" {
            return Err(FeatureError::BadTensorFile("bad magic".into()));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            let mut buf = [0u8; 8];
            f.read_exact(&mut buf)?;
            *d = u64::from_le_bytes(buf) as usize;
        }
        let count = dims[0] * dims[1] * dims[2];
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let mut buf = [0u8; 8];
            f.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        Ok(Tensor3 { data, dims })
    }
}

/// Normalized sliding-window tensors split into frequency groups, with the
/// next-cycle capacity as the target.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    /// `[num_samples, window_len, |low|]`, min-max normalized.
    pub low_windows: Tensor3,
    /// `[num_samples, window_len, |high|]`, min-max normalized.
    pub high_windows: Tensor3,
    /// Raw ampere-hour capacities one cycle after each window.
    pub targets_ah: Vec<f64>,
    /// Cycle index of each target.
    pub target_cycles: Vec<u32>,
    pub scalers: ScalerSet,
    pub window_len: usize,
}

impl WindowedDataset {
    pub fn num_samples(&self) -> usize {
        self.targets_ah.len()
    }
}

/// Fit per-channel scalers from mode data and the capacity target.
pub fn compute_scalers(
    imfs: &ImfSet,
    partition: &BandPartition,
    capacities: &[f64],
) -> ScalerSet {
    let fit_group = |idx: &[usize]| -> Vec<ChannelScaler> {
        idx.iter().map(|&i| ChannelScaler::fit(imfs.modes()[i].iter().copied())).collect()
    };
    ScalerSet {
        low: fit_group(&partition.low),
        high: fit_group(&partition.high),
        target: ChannelScaler::fit(capacities.iter().copied()),
    }
}

/// Build stride-1 sliding windows with next-cycle targets, fitting scalers
/// from the given data (the training region).
pub fn make_windows(
    imfs: &ImfSet,
    partition: &BandPartition,
    series: &CapacitySeries,
    window_len: usize,
) -> Result<WindowedDataset, FeatureError> {
    let scalers = compute_scalers(imfs, partition, &series.capacities());
    make_windows_scaled(imfs, partition, series, window_len, &scalers)
}

/// Build windows normalized with pre-fitted scalers (the fleet-training and
/// inference path; statistics never come from the forecast region).
pub fn make_windows_scaled(
    imfs: &ImfSet,
    partition: &BandPartition,
    series: &CapacitySeries,
    window_len: usize,
    scalers: &ScalerSet,
) -> Result<WindowedDataset, FeatureError> {
    let len = series.len();
    if imfs.len() != len {
        return Err(FeatureError::LengthMismatch { modes: imfs.len(), series: len });
    }
    if window_len == 0 || window_len >= len {
        return Err(FeatureError::WindowTooLong { window_len, len });
    }
    if scalers.low.len() != partition.low.len() || scalers.high.len() != partition.high.len() {
        return Err(FeatureError::ScalerMismatch {
            low: scalers.low.len(),
            high: scalers.high.len(),
            data_low: partition.low.len(),
            data_high: partition.high.len(),
        });
    }

    let num = len - window_len;
    let mut low_windows = Tensor3::zeros([num, window_len, partition.low.len()]);
    let mut high_windows = Tensor3::zeros([num, window_len, partition.high.len()]);
    let mut targets_ah = Vec::with_capacity(num);
    let mut target_cycles = Vec::with_capacity(num);
    let caps = series.capacities();

    for s in 0..num {
        for t in 0..window_len {
            for (c, &mode_idx) in partition.low.iter().enumerate() {
                let v = imfs.modes()[mode_idx][s + t];
                low_windows.set(s, t, c, scalers.low[c].normalize(v));
            }
            for (c, &mode_idx) in partition.high.iter().enumerate() {
                let v = imfs.modes()[mode_idx][s + t];
                high_windows.set(s, t, c, scalers.high[c].normalize(v));
            }
        }
        targets_ah.push(caps[s + window_len]);
        target_cycles.push((s + window_len + 1) as u32);
    }

    Ok(WindowedDataset {
        low_windows,
        high_windows,
        targets_ah,
        target_cycles,
        scalers: scalers.clone(),
        window_len,
    })
}

/// Extract the most recent `window_len` cycles of each group as normalized
/// `[t][c]` matrices, for single-step inference.
pub fn latest_window(
    imfs: &ImfSet,
    partition: &BandPartition,
    window_len: usize,
    scalers: &ScalerSet,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), FeatureError> {
    let len = imfs.len();
    if window_len > len {
        return Err(FeatureError::WindowTooLong { window_len, len });
    }
    if scalers.low.len() != partition.low.len() || scalers.high.len() != partition.high.len() {
        return Err(FeatureError::ScalerMismatch {
            low: scalers.low.len(),
            high: scalers.high.len(),
            data_low: partition.low.len(),
            data_high: partition.high.len(),
        });
    }
    let start = len - window_len;
    let build = |idx: &[usize], sc: &[ChannelScaler]| -> Vec<Vec<f64>> {
        (0..window_len)
            .map(|t| {
                idx.iter()
                    .zip(sc)
                    .map(|(&mode_idx, scaler)| scaler.normalize(imfs.modes()[mode_idx][start + t]))
                    .collect()
            })
            .collect()
    };
    Ok((build(&partition.low, &scalers.low), build(&partition.high, &scalers.high)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vmd::ImfSet;
    use proptest::prelude::*;

    fn series_of(caps: &[f64]) -> CapacitySeries {
        CapacitySeries::new(
            "T",
            caps.iter().enumerate().map(|(i, c)| (i as u32 + 1, *c)).collect(),
            2.0,
            0.7,
        )
        .unwrap()
    }

    #[test]
    fn zcr_fixtures() {
        assert_eq!(zero_crossing_rate(&[1.0, -1.0, 1.0, -1.0]).unwrap(), 0.75);
        assert_eq!(zero_crossing_rate(&[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            zero_crossing_rate(&[1.0]),
            Err(FeatureError::SequenceTooShort(1))
        ));
    }

    #[test]
    fn zcr_zero_inherits_previous_sign() {
        // +, 0(+), -: one change, not two
        assert_eq!(zero_crossing_rate(&[1.0, 0.0, -1.0]).unwrap(), 1.0 / 3.0);
        // leading zeros carry no sign
        assert_eq!(zero_crossing_rate(&[0.0, 0.0, 1.0, -1.0]).unwrap(), 0.25);
    }

    #[test]
    fn zcr_sampled_sine_matches_brute_force() {
        let x: Vec<f64> = (0..100)
            .map(|i| (2.0 * std::f64::consts::PI * 5.0 * (i as f64 / 100.0)).sin())
            .collect();
        // independent brute-force counter with the same inherit rule
        let mut count = 0usize;
        let mut prev = 0i8;
        for &v in &x {
            let s = if v > 0.0 { 1 } else if v < 0.0 { -1 } else { prev };
            if prev != 0 && s != 0 && s != prev {
                count += 1;
            }
            prev = s;
        }
        let expected = count as f64 / 100.0;
        assert_eq!(zero_crossing_rate(&x).unwrap(), expected);
        // 9 strict sign changes: the 10 continuous-time zero touches include
        // t=0, which has no preceding sign to flip
        assert_eq!(count, 9);
    }

    fn imfs_from(modes: Vec<Vec<f64>>) -> ImfSet {
        let n = modes[0].len();
        let omegas = (0..modes.len()).map(|i| i as f64 * 0.1).collect();
        ImfSet::from_parts(modes, omegas, vec![0.0; n])
    }

    #[test]
    fn partition_by_threshold() {
        // mode 0: slow (zcr 0.005 => 1 change over 200), mode 1: fast
        let mut slow = vec![1.0; 200];
        slow[100..].iter_mut().for_each(|v| *v = -1.0);
        let fast: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let imfs = imfs_from(vec![slow, fast]);
        let p = partition_bands(&imfs, 0.01);
        assert_eq!(p.low, vec![0]);
        assert_eq!(p.high, vec![1]);
        assert!(!p.one_sided);
    }

    #[test]
    fn partition_single_constant_mode() {
        let imfs = imfs_from(vec![vec![2.0; 50]]);
        let p = partition_bands(&imfs, 0.01);
        assert_eq!(p.low, vec![0]);
        assert!(p.high.is_empty());
        assert!(p.one_sided);
    }

    #[test]
    fn partition_boundary_is_low() {
        // exactly one change over 100 samples: zcr = 0.01, NOT exceeding
        let mut m = vec![1.0; 100];
        m[50..].iter_mut().for_each(|v| *v = -1.0);
        let imfs = imfs_from(vec![m]);
        let p = partition_bands(&imfs, 0.01);
        assert_eq!(p.zcr_values[0], 0.01);
        assert_eq!(p.low, vec![0]);
    }

    #[test]
    fn partition_with_counts_orders_by_zcr() {
        let fast: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let slow = vec![1.0; 100];
        let medium: Vec<f64> = (0..100).map(|i| if (i / 10) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let imfs = imfs_from(vec![fast.clone(), slow, medium]);
        let p = partition_with_counts(&imfs, 2);
        assert_eq!(p.low, vec![1, 2]);
        assert_eq!(p.high, vec![0]);
    }

    #[test]
    fn window_shapes_and_targets() {
        let caps: Vec<f64> = (0..10).map(|i| 2.0 - 0.01 * i as f64).collect();
        let series = series_of(&caps);
        let modes = vec![caps.clone()];
        let imfs = imfs_from(modes);
        let p = partition_bands(&imfs, 0.01);
        let ds = make_windows(&imfs, &p, &series, 8).unwrap();
        assert_eq!(ds.num_samples(), 2);
        assert_eq!(ds.target_cycles, vec![9, 10]);
        assert_eq!(ds.targets_ah[0], caps[8]);
        assert_eq!(ds.targets_ah[1], caps[9]);
        assert_eq!(ds.low_windows.dims(), [2, 8, 1]);
        assert_eq!(ds.high_windows.dims(), [2, 8, 0]);
    }

    #[test]
    fn minmax_scaling_definition() {
        let s = ChannelScaler::fit([2.0, 4.0, 6.0].into_iter());
        assert_eq!(s.normalize(2.0), 0.0);
        assert_eq!(s.normalize(4.0), 0.5);
        assert_eq!(s.normalize(6.0), 1.0);
        assert!(!s.constant);
    }

    #[test]
    fn constant_channel_flagged_and_zeroed() {
        let s = ChannelScaler::fit([3.0, 3.0, 3.0].into_iter());
        assert!(s.constant);
        assert_eq!(s.normalize(3.0), 0.0);
        assert!(matches!(denormalize(0.5, &s), Err(FeatureError::ConstantChannel)));
    }

    #[test]
    fn denormalize_fixtures() {
        let s = ChannelScaler { min: 2.0, max: 6.0, constant: false };
        assert_eq!(denormalize(0.5, &s).unwrap(), 4.0);
        assert_eq!(denormalize(0.0, &s).unwrap(), 2.0);
    }

    #[test]
    fn window_too_long_rejected() {
        let caps: Vec<f64> = (0..10).map(|i| 2.0 - 0.01 * i as f64).collect();
        let series = series_of(&caps);
        let imfs = imfs_from(vec![caps.clone()]);
        let p = partition_bands(&imfs, 0.01);
        assert!(matches!(
            make_windows(&imfs, &p, &series, 10),
            Err(FeatureError::WindowTooLong { .. })
        ));
    }

    #[test]
    fn tensor_cache_roundtrip() {
        let mut t = Tensor3::zeros([2, 3, 2]);
        for i in 0..2 {
            for s in 0..3 {
                for c in 0..2 {
                    t.set(i, s, c, (i * 100 + s * 10 + c) as f64 * 0.5);
                }
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        t.write_to(&path).unwrap();
        let back = Tensor3::read_from(&path).unwrap();
        assert_eq!(t, back);
    }

    proptest! {
        #[test]
        fn window_count_law(len in 9usize..120, window_len in 1usize..8) {
            let caps: Vec<f64> = (0..len).map(|i| 2.0 - 0.005 * i as f64).collect();
            let series = series_of(&caps);
            let imfs = imfs_from(vec![caps.clone()]);
            let p = partition_bands(&imfs, 0.01);
            let ds = make_windows(&imfs, &p, &series, window_len).unwrap();
            prop_assert_eq!(ds.num_samples(), len - window_len);
        }

        #[test]
        fn normalized_entries_in_unit_interval(
            raw in proptest::collection::vec(-5.0f64..5.0, 20..60),
            window_len in 2usize..8
        ) {
            let caps: Vec<f64> = (0..raw.len()).map(|i| 2.0 - 0.005 * i as f64).collect();
            let series = series_of(&caps);
            let imfs = imfs_from(vec![raw.clone()]);
            let p = partition_bands(&imfs, 0.01);
            let ds = make_windows(&imfs, &p, &series, window_len).unwrap();
            for v in ds.low_windows.data().iter().chain(ds.high_windows.data()) {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(v));
            }
        }

        #[test]
        fn partition_disjoint_exhaustive(
            zcrs in proptest::collection::vec(0.0f64..0.5, 1..12),
            threshold in 0.0f64..0.5
        ) {
            // synthesize modes whose ZCR ordering mirrors the drawn values:
            // partition logic only consumes zcr_values, so exercise the rule
            // directly through classify-by-threshold semantics.
            let mut low = Vec::new();
            let mut high = Vec::new();
            for (i, &z) in zcrs.iter().enumerate() {
                if z > threshold { high.push(i) } else { low.push(i) }
            }
            let mut all: Vec<usize> = low.iter().chain(high.iter()).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..zcrs.len()).collect::<Vec<_>>());
        }

        #[test]
        fn normalize_denormalize_roundtrip(
            min in -10.0f64..10.0,
            span in 0.01f64..20.0,
            v in 0.0f64..1.0
        ) {
            let s = ChannelScaler { min, max: min + span, constant: false };
            let raw = denormalize(v, &s).unwrap();
            let back = s.normalize(raw);
            prop_assert!((back - v).abs() < 1e-12);
        }

        #[test]
        fn normalization_idempotent_on_unit_scaler(v in 0.0f64..1.0) {
            let unit = ChannelScaler { min: 0.0, max: 1.0, constant: false };
            prop_assert_eq!(unit.normalize(v), v);
        }
    }
}
