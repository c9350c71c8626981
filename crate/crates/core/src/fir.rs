//! Window-method FIR band-pass design and response analysis.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::dsp::{self, hamming, to_db, Waveform};
use crate::{Error, Result};

/// Band edges of the fixed four-band front-end, in Hz.
pub const DEFAULT_BANDS: [(f64, f64); 4] = [(25.0, 45.0), (45.0, 80.0), (80.0, 200.0), (200.0, 500.0)];

/// Default filter order; gives 61-tap kernels.
pub const DEFAULT_ORDER: usize = 60;

/// FIR filter `b_0..b_N` plus the parameters it was designed with.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    coeffs: Vec<f64>,
    band_lo_hz: f64,
    band_hi_hz: f64,
    design_rate_hz: f64,
}

impl FirFilter {
    /// Wraps raw coefficients. The length must be odd so the filter has an
    /// integer centre tap.
    pub fn from_coeffs(coeffs: Vec<f64>, band_lo_hz: f64, band_hi_hz: f64, design_rate_hz: f64) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() % 2 == 0 {
            return Err(Error::arg("coeffs", format!("length must be odd, got {}", coeffs.len())));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::arg("coeffs", "non-finite coefficient"));
        }
        if !(design_rate_hz > 0.0) {
            return Err(Error::arg("design_rate_hz", "must be positive"));
        }
        Ok(Self {
            coeffs,
            band_lo_hz,
            band_hi_hz,
            design_rate_hz,
        })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn band_lo_hz(&self) -> f64 {
        self.band_lo_hz
    }

    pub fn band_hi_hz(&self) -> f64 {
        self.band_hi_hz
    }

    pub fn design_rate_hz(&self) -> f64 {
        self.design_rate_hz
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.coeffs.len();
        (0..n / 2).all(|i| self.coeffs[i] == self.coeffs[n - 1 - i])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&FilterJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<FilterJsonIn>(text)?.try_into()
    }
}

/// Hamming-windowed sinc band-pass of even `order`, normalised to unit gain at
/// the band centre. Band edges are the −6 dB points of the prototype.
pub fn design_bandpass(lo_hz: f64, hi_hz: f64, order: usize, rate_hz: f64) -> Result<FirFilter> {
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(Error::arg("rate_hz", format!("must be positive, got {rate_hz}")));
    }
    if !(lo_hz > 0.0) {
        return Err(Error::arg("lo_hz", format!("must be positive, got {lo_hz}")));
    }
    if !(lo_hz < hi_hz) {
        return Err(Error::arg("hi_hz", format!("empty band [{lo_hz}, {hi_hz}]")));
    }
    if hi_hz > rate_hz / 2.0 {
        return Err(Error::arg("hi_hz", format!("{hi_hz} Hz exceeds Nyquist ({} Hz)", rate_hz / 2.0)));
    }
    if order < 2 || order % 2 != 0 {
        return Err(Error::arg("order", format!("must be even and at least 2, got {order}")));
    }

    let half = order / 2;
    let fl = lo_hz / rate_hz;
    let fh = hi_hz / rate_hz;
    let window = hamming(order + 1);
    let mut coeffs = vec![0.0; order + 1];
    for i in 0..=half {
        let m = i as f64 - half as f64;
        let ideal = 2.0 * fh * sinc(2.0 * fh * m) - 2.0 * fl * sinc(2.0 * fl * m);
        coeffs[i] = window[i] * ideal;
    }
    for i in 0..half {
        coeffs[order - i] = coeffs[i];
    }

    let centre = 2.0 * PI * (lo_hz + hi_hz) / 2.0 / rate_hz;
    let gain = dtft_at(&coeffs, centre).norm();
    for c in &mut coeffs {
        *c /= gain;
    }
    FirFilter::from_coeffs(coeffs, lo_hz, hi_hz, rate_hz)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn dtft_at(h: &[f64], omega: f64) -> Complex64 {
    h.iter()
        .enumerate()
        .map(|(i, &b)| Complex64::from_polar(b, -omega * i as f64))
        .sum()
}

/// Causal direct-form filtering, `y[n] = Σ b_i·x[n−i]`, with zero initial
/// conditions. Output length equals input length.
pub fn apply_fir(filter: &FirFilter, x: &Waveform) -> Result<Waveform> {
    check_rate(filter, x)?;
    Waveform::new(fir_causal(filter.coeffs(), x.samples()), x.sample_rate_hz())
}

/// Filtering advanced by the `N/2` group delay: `y[n] = Σ b_i·x[n + N/2 − i]`
/// with zeros outside the signal. This is the alignment a same-padded
/// cross-correlation layer produces.
pub fn apply_fir_aligned(filter: &FirFilter, x: &Waveform) -> Result<Waveform> {
    check_rate(filter, x)?;
    Waveform::new(fir_aligned(filter.coeffs(), x.samples()), x.sample_rate_hz())
}

fn check_rate(filter: &FirFilter, x: &Waveform) -> Result<()> {
    if x.is_empty() {
        return Err(Error::arg("x", "empty waveform"));
    }
    if filter.design_rate_hz() != x.sample_rate_hz() {
        return Err(Error::arg(
            "x",
            format!(
                "sample rate {} Hz does not match filter design rate {} Hz",
                x.sample_rate_hz(),
                filter.design_rate_hz()
            ),
        ));
    }
    Ok(())
}

pub(crate) fn fir_causal(b: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            b.iter()
                .enumerate()
                .take(n + 1)
                .map(|(i, &bi)| bi * x[n - i])
                .sum()
        })
        .collect()
}

pub(crate) fn fir_aligned(b: &[f64], x: &[f64]) -> Vec<f64> {
    let half = (b.len() - 1) / 2;
    let len = x.len() as isize;
    (0..x.len())
        .map(|n| {
            let mut acc = 0.0;
            for (i, &bi) in b.iter().enumerate() {
                let j = n as isize + half as isize - i as isize;
                if (0..len).contains(&j) {
                    acc += bi * x[j as usize];
                }
            }
            acc
        })
        .collect()
}

/// Magnitude and unwrapped phase on an evenly spaced grid over `[0, Nyquist]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub freq_hz: Vec<f64>,
    pub magnitude_db: Vec<f64>,
    pub phase_rad: Vec<f64>,
    /// Bins whose phase was carried over from a neighbour (|H| ≈ 0).
    pub carried: Vec<bool>,
}

impl FrequencyResponse {
    pub fn peak_db(&self) -> f64 {
        self.magnitude_db.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_hz,magnitude_db,phase_rad\n");
        for ((f, m), p) in self.freq_hz.iter().zip(&self.magnitude_db).zip(&self.phase_rad) {
            out.push_str(&format!("{f:.17e},{m:.17e},{p:.17e}\n"));
        }
        out
    }
}

pub fn frequency_response(filter: &FirFilter, n_points: usize) -> Result<FrequencyResponse> {
    response_of(filter.coeffs(), filter.design_rate_hz(), n_points)
}

/// Response of a raw coefficient vector sampled at `rate_hz`.
pub fn response_of(coeffs: &[f64], rate_hz: f64, n_points: usize) -> Result<FrequencyResponse> {
    if n_points < 2 {
        return Err(Error::arg("n_points", format!("need at least 2, got {n_points}")));
    }
    let step = PI / (n_points - 1) as f64;
    let bins: Vec<Complex64> = (0..n_points).map(|k| dtft_at(coeffs, step * k as f64)).collect();
    let phase = dsp::unwrap_bins(&bins)?;
    Ok(FrequencyResponse {
        freq_hz: (0..n_points)
            .map(|k| k as f64 * rate_hz / 2.0 / (n_points - 1) as f64)
            .collect(),
        magnitude_db: bins.iter().map(|c| to_db(c.norm())).collect(),
        phase_rad: phase.radians,
        carried: phase.carried,
    })
}

/// Group delay in samples, `Re(Σ n·h[n]·e^{−jωn} / Σ h[n]·e^{−jωn})`.
pub fn group_delay(coeffs: &[f64], omega: f64) -> f64 {
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = Complex64::new(0.0, 0.0);
    for (n, &h) in coeffs.iter().enumerate() {
        let e = Complex64::from_polar(1.0, -omega * n as f64);
        num += e * (n as f64 * h);
        den += e * h;
    }
    (num / den).re
}

/// Worst deviation of the unwrapped phase from `−delay·ω` over bins within
/// `floor_db` of the response peak, ignoring the π steps a real amplitude
/// sign change introduces. Returns `None` when no bin qualifies.
pub fn phase_linearity_residual(resp: &FrequencyResponse, delay_samples: f64, floor_db: f64) -> Option<f64> {
    let n = resp.freq_hz.len();
    let threshold = resp.peak_db() - floor_db;
    let step = PI / (n - 1) as f64;
    (0..n)
        .filter(|&k| resp.magnitude_db[k] > threshold && !resp.carried[k])
        .map(|k| {
            let d = resp.phase_rad[k] + delay_samples * step * k as f64;
            (d - PI * (d / PI).round()).abs()
        })
        .reduce(f64::max)
}

/// The four fixed band-pass filters, lowest band first.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    filters: Vec<FirFilter>,
}

impl FilterBank {
    pub fn new(filters: Vec<FirFilter>) -> Result<Self> {
        if filters.len() != 4 {
            return Err(Error::arg("filters", format!("a bank has 4 filters, got {}", filters.len())));
        }
        for w in filters.windows(2) {
            if w[0].band_hi_hz() != w[1].band_lo_hz() {
                return Err(Error::arg("filters", "bands must be contiguous and ascending"));
            }
        }
        Ok(Self { filters })
    }

    pub fn filters(&self) -> &[FirFilter] {
        &self.filters
    }

    pub fn kernel_len(&self) -> usize {
        self.filters[0].coeffs().len()
    }

    /// Splits `x` into the four bands, each advanced by the filter delay.
    pub fn decompose_aligned(&self, x: &[f64]) -> [Vec<f64>; 4] {
        std::array::from_fn(|b| fir_aligned(self.filters[b].coeffs(), x))
    }

    pub fn to_json(&self) -> Result<String> {
        let filters: Vec<FilterJson> = self.filters.iter().map(FilterJson::from).collect();
        Ok(serde_json::to_string_pretty(&serde_json::json!({ "filters": filters }))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct BankJson {
            filters: Vec<FilterJsonIn>,
        }
        let bank: BankJson = serde_json::from_str(text)?;
        let filters = bank.filters.into_iter().map(FirFilter::try_from).collect::<Result<_>>()?;
        Self::new(filters)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Four-band bank at the fixed band edges.
pub fn default_bank(rate_hz: f64, order: usize) -> Result<FilterBank> {
    if !(rate_hz >= 1000.0) {
        return Err(Error::arg("rate_hz", format!("must be at least 1000 Hz, got {rate_hz}")));
    }
    let filters = DEFAULT_BANDS
        .iter()
        .map(|&(lo, hi)| design_bandpass(lo, hi, order, rate_hz))
        .collect::<Result<_>>()?;
    FilterBank::new(filters)
}

#[derive(Serialize)]
struct FilterJson {
    order: usize,
    band_lo_hz: f64,
    band_hi_hz: f64,
    design_rate_hz: f64,
    coeffs: Vec<Box<RawValue>>,
}

impl From<&FirFilter> for FilterJson {
    fn from(f: &FirFilter) -> Self {
        let coeffs = f
            .coeffs
            .iter()
            .map(|c| RawValue::from_string(format!("{c:.16e}")).expect("formatted float is valid JSON"))
            .collect();
        Self {
            order: f.order(),
            band_lo_hz: f.band_lo_hz,
            band_hi_hz: f.band_hi_hz,
            design_rate_hz: f.design_rate_hz,
            coeffs,
        }
    }
}

#[derive(Deserialize)]
struct FilterJsonIn {
    order: usize,
    band_lo_hz: f64,
    band_hi_hz: f64,
    design_rate_hz: f64,
    coeffs: Vec<f64>,
}

impl TryFrom<FilterJsonIn> for FirFilter {
    type Error = Error;

    fn try_from(j: FilterJsonIn) -> Result<Self> {
        if j.coeffs.len() != j.order + 1 {
            return Err(Error::Format {
                what: "filter json",
                reason: format!("order {} but {} coefficients", j.order, j.coeffs.len()),
            });
        }
        FirFilter::from_coeffs(j.coeffs, j.band_lo_hz, j.band_hi_hz, j.design_rate_hz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn db_at(f: &FirFilter, hz: f64) -> f64 {
        to_db(dtft_at(f.coeffs(), 2.0 * PI * hz / f.design_rate_hz()).norm())
    }

    #[test]
    fn low_band_passes_centre_and_rejects_200hz() {
        let f = design_bandpass(25.0, 45.0, 60, 1000.0).unwrap();
        assert_eq!(f.coeffs().len(), 61);
        assert!(f.is_symmetric());
        let resp = frequency_response(&f, 2001).unwrap();
        assert!(db_at(&f, 35.0) >= resp.peak_db() - 3.0);
        assert!(db_at(&f, 200.0) < -20.0);
    }

    #[test]
    fn top_band_is_bit_symmetric() {
        let f = design_bandpass(200.0, 500.0, 60, 1000.0).unwrap();
        for i in 0..=60 {
            assert_eq!(f.coeffs()[i].to_bits(), f.coeffs()[60 - i].to_bits());
        }
    }

    #[test]
    fn design_rejects_bad_parameters() {
        assert!(design_bandpass(45.0, 45.0, 60, 1000.0).is_err());
        assert!(design_bandpass(45.0, 600.0, 60, 1000.0).is_err());
        assert!(design_bandpass(25.0, 45.0, 61, 1000.0).is_err());
        assert!(design_bandpass(25.0, 45.0, 0, 1000.0).is_err());
        assert!(design_bandpass(0.0, 45.0, 60, 1000.0).is_err());
    }

    #[test]
    fn identity_and_delay_filters() {
        let x = Waveform::new(vec![5.0, 6.0, 7.0], 1000.0).unwrap();
        let id = FirFilter::from_coeffs(vec![1.0], 0.0, 500.0, 1000.0).unwrap();
        assert_eq!(apply_fir(&id, &x).unwrap(), x);
        // An even-length kernel is not a valid FirFilter; exercise the raw path.
        assert_eq!(fir_causal(&[0.0, 1.0], x.samples()), vec![0.0, 5.0, 6.0]);
        let delay = FirFilter::from_coeffs(vec![0.0, 1.0, 0.0], 0.0, 500.0, 1000.0).unwrap();
        assert_eq!(apply_fir(&delay, &x).unwrap().samples(), &[0.0, 5.0, 6.0]);
    }

    #[test]
    fn apply_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b: Vec<f64> = (0..61).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = FirFilter::from_coeffs(b.clone(), 0.0, 1.0, 1000.0).unwrap();
        let y = apply_fir(&f, &Waveform::new(x.clone(), 1000.0).unwrap()).unwrap();
        for n in 0..300 {
            let mut acc = 0.0;
            for i in 0..61 {
                if n >= i {
                    acc += b[i] * x[n - i];
                }
            }
            assert!((y.samples()[n] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = design_bandpass(80.0, 200.0, 60, 1000.0).unwrap();
        let x: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (0.7, -1.3);
        let mix: Vec<f64> = x.iter().zip(&z).map(|(u, v)| a * u + b * v).collect();
        let w = |s: Vec<f64>| Waveform::new(s, 1000.0).unwrap();
        let yx = apply_fir(&f, &w(x)).unwrap();
        let yz = apply_fir(&f, &w(z)).unwrap();
        let ym = apply_fir(&f, &w(mix)).unwrap();
        for n in 0..500 {
            let expect = a * yx.samples()[n] + b * yz.samples()[n];
            assert!((ym.samples()[n] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn apply_rejects_rate_mismatch() {
        let f = design_bandpass(25.0, 45.0, 60, 1000.0).unwrap();
        let x = Waveform::new(vec![1.0; 10], 2000.0).unwrap();
        assert!(apply_fir(&f, &x).is_err());
    }

    #[test]
    fn aligned_output_is_causal_output_advanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut padded = x.clone();
        padded.extend([0.0; 3]);
        let causal = fir_causal(&b, &padded);
        let aligned = fir_aligned(&b, &x);
        for n in 0..40 {
            assert!((aligned[n] - causal[n + 3]).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_response_is_flat() {
        let f = FirFilter::from_coeffs(vec![1.0], 0.0, 500.0, 1000.0).unwrap();
        let r = frequency_response(&f, 64).unwrap();
        assert!(r.magnitude_db.iter().all(|&m| m.abs() < 1e-12));
        assert!(r.phase_rad.iter().all(|&p| p == 0.0));
        assert!(frequency_response(&f, 1).is_err());
    }

    #[test]
    fn symmetric_filter_has_linear_phase() {
        let f = design_bandpass(45.0, 80.0, 60, 1000.0).unwrap();
        let r = frequency_response(&f, 1024).unwrap();
        let residual = phase_linearity_residual(&r, 30.0, 60.0).unwrap();
        assert!(residual < 1e-6, "residual {residual}");
        for hz in [50.0, 60.0, 70.0] {
            let gd = group_delay(f.coeffs(), 2.0 * PI * hz / 1000.0);
            assert!((gd - 30.0).abs() < 1e-6);
        }
    }

    #[test]
    fn delta_position_sets_phase_slope() {
        let mut first = vec![0.0; 61];
        first[0] = 1.0;
        let mut last = vec![0.0; 61];
        last[60] = 1.0;
        let a = response_of(&first, 1000.0, 512).unwrap();
        let b = response_of(&last, 1000.0, 512).unwrap();
        for (u, v) in a.magnitude_db.iter().zip(&b.magnitude_db) {
            assert!((u - v).abs() < 1e-12);
        }
        let step = PI / 511.0;
        for k in 0..512 {
            assert!(a.phase_rad[k].abs() < 1e-12);
            assert!((b.phase_rad[k] + 60.0 * step * k as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn default_bank_edges_and_symmetry() {
        let bank = default_bank(1000.0, 60).unwrap();
        let edges: Vec<(f64, f64)> = bank.filters().iter().map(|f| (f.band_lo_hz(), f.band_hi_hz())).collect();
        assert_eq!(edges, DEFAULT_BANDS.to_vec());
        assert!(bank.filters().iter().all(FirFilter::is_symmetric));
        assert!(default_bank(800.0, 60).is_err());
    }

    #[test]
    fn bank_energy_follows_bandwidth() {
        use rand_distr::{Distribution, StandardNormal};
        let bank = default_bank(1000.0, 60).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x = Waveform::new(x, 1000.0).unwrap();
        let rms: Vec<f64> = bank
            .filters()
            .iter()
            .map(|f| {
                let y = apply_fir(f, &x).unwrap();
                (y.samples().iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt()
            })
            .collect();
        assert!(rms.windows(2).all(|w| w[0] < w[1]), "{rms:?}");
    }

    #[test]
    fn json_roundtrip_is_bit_exact() {
        let bank = default_bank(1000.0, 60).unwrap();
        let text = bank.to_json().unwrap();
        assert_eq!(FilterBank::from_json(&text).unwrap(), bank);
        let f = &bank.filters()[2];
        let text = f.to_json().unwrap();
        let back = FirFilter::from_json(&text).unwrap();
        for (a, b) in back.coeffs().iter().zip(f.coeffs()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // 17 significant digits per coefficient.
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["order"], 60);
        assert!(text.contains(&format!("{:.16e}", f.coeffs()[0])));
    }

    #[test]
    fn json_rejects_inconsistent_order() {
        let text = r#"{"order": 4, "band_lo_hz": 1, "band_hi_hz": 2, "design_rate_hz": 1000, "coeffs": [1, 2, 3]}"#;
        assert!(FirFilter::from_json(text).is_err());
    }
}
