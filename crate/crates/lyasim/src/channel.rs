//! Uplink channel model: distance-based mean gain, Rayleigh block fading,
//! and the Shannon rate of each device's OFDMA subchannel.
//!
//! Mean gain follows a free-space-style power law,
//!
//! ```text
//! h_bar_m = (A_d * c / (4 pi f_c d_m))^d_e
//! ```
//!
//! with antenna gain A_d, carrier f_c, device distance d_m and path-loss
//! exponent d_e. Per slot the instantaneous gain is h = beta * h_bar with
//! beta ~ Exp(1), drawn independently per device per slot (block fading).
//! A device transmitting at power p on bandwidth b_w sees
//!
//! ```text
//! R = b_w * log2(1 + p * h / (b_w * N0))
//! ```
//!
//! where N0 is the noise power spectral density in W/Hz.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

/// Propagation constant used by the mean-gain power law (m/s).
pub const LIGHT_SPEED: f64 = 3.0e8;

/// Static uplink parameters shared by all slots of an experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Antenna gain A_d (dimensionless).
    pub antenna_gain: f64,
    /// Carrier frequency f_c in Hz.
    pub carrier_hz: f64,
    /// Path-loss exponent d_e.
    pub path_loss_exp: f64,
    /// Device distances to the server in meters.
    pub distances_m: Vec<f64>,
    /// Total uplink bandwidth B_w in Hz, split evenly across devices.
    pub total_bandwidth_hz: f64,
    /// Noise power spectral density N0 in W/Hz.
    pub noise_psd: f64,
}

impl ChannelParams {
    #[must_use]
    pub fn num_devices(&self) -> usize {
        self.distances_m.len()
    }

    /// Bandwidth of each device's subchannel, b_w = B_w / M.
    #[must_use]
    pub fn subchannel_hz(&self) -> f64 {
        self.total_bandwidth_hz / self.num_devices() as f64
    }

    /// Distance-determined mean gain of device `m`.
    #[must_use]
    pub fn mean_gain(&self, m: usize) -> f64 {
        let base = self.antenna_gain * LIGHT_SPEED
            / (4.0 * std::f64::consts::PI * self.carrier_hz * self.distances_m[m]);
        base.powf(self.path_loss_exp)
    }

    /// One block-fading draw for device `m`: beta * h_bar, beta ~ Exp(1).
    pub fn sample_gain(&self, m: usize, rng: &mut impl Rng) -> f64 {
        let beta: f64 = Exp1.sample(rng);
        beta * self.mean_gain(m)
    }
}

/// Shannon rate in bit/s of one subchannel.
#[must_use]
pub fn rate(power_w: f64, gain: f64, bandwidth_hz: f64, noise_psd: f64) -> f64 {
    if power_w <= 0.0 || bandwidth_hz <= 0.0 {
        return 0.0;
    }
    let snr = power_w * gain / (bandwidth_hz * noise_psd);
    bandwidth_hz * (1.0 + snr).log2()
}

/// Exact power needed to sustain `rate_bps` on one subchannel; inverse of
/// [`rate`] in its first argument. Returns 0 for a zero rate.
#[must_use]
pub fn power_for_rate(rate_bps: f64, gain: f64, bandwidth_hz: f64, noise_psd: f64) -> f64 {
    if rate_bps <= 0.0 {
        return 0.0;
    }
    let snr = (rate_bps / bandwidth_hz).exp2() - 1.0;
    snr * bandwidth_hz * noise_psd / gain
}

/// Converts a spectral density quoted in dBm/Hz (e.g. -174) to W/Hz.
#[must_use]
pub fn noise_psd_from_dbm_per_hz(dbm_per_hz: f64) -> f64 {
    10f64.powf((dbm_per_hz - 30.0) / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(path_loss_exp: f64) -> ChannelParams {
        ChannelParams {
            antenna_gain: 3.0,
            carrier_hz: 915.0e6,
            path_loss_exp,
            distances_m: vec![200.0],
            total_bandwidth_hz: 1.0e6,
            noise_psd: noise_psd_from_dbm_per_hz(-174.0),
        }
    }

    #[test]
    fn mean_gain_matches_hand_computed_values() {
        // A_d = 3, f_c = 915 MHz, d = 200 m: the base ratio is about
        // 3.914e-4, and cubing it gives about 5.997e-11.
        let p1 = params(1.0);
        let g1 = p1.mean_gain(0);
        assert!((g1 - 3.914e-4).abs() < 1e-6, "g1 = {g1:e}");

        let p3 = params(3.0);
        let g3 = p3.mean_gain(0);
        assert!((g3 / 5.997e-11 - 1.0).abs() < 1e-3, "g3 = {g3:e}");
    }

    #[test]
    fn doubling_distance_divides_cubed_gain_by_eight() {
        let mut p = params(3.0);
        let near = p.mean_gain(0);
        p.distances_m[0] *= 2.0;
        let far = p.mean_gain(0);
        assert!((near / far - 8.0).abs() < 1e-9);
    }

    #[test]
    fn noise_conversion_matches_minus_174_dbm() {
        let n0 = noise_psd_from_dbm_per_hz(-174.0);
        assert!((n0 / 3.981e-21 - 1.0).abs() < 1e-3, "n0 = {n0:e}");
    }

    #[test]
    fn fading_is_positive_and_averages_to_mean_gain() {
        let p = params(3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let h = p.sample_gain(0, &mut rng);
            assert!(h > 0.0);
            sum += h;
        }
        let empirical = sum / n as f64;
        let hbar = p.mean_gain(0);
        // Exp(1) has unit variance, so the sample-mean standard error of
        // h/h_bar is 1/sqrt(n).
        let three_se = 3.0 / (n as f64).sqrt();
        assert!(
            (empirical / hbar - 1.0).abs() < three_se,
            "mean ratio {} outside 3 SE",
            empirical / hbar
        );
    }

    #[test]
    fn fading_is_deterministic_per_seed() {
        let p = params(3.0);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10).map(|_| p.sample_gain(0, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    #[test]
    fn zero_power_means_zero_rate() {
        let n0 = noise_psd_from_dbm_per_hz(-174.0);
        assert_eq!(rate(0.0, 1e-12, 2.5e5, n0), 0.0);
    }

    #[test]
    fn rate_matches_hand_computed_value() {
        // p = 0.3 W, h = 1e-12, b_w = 2.5e5 Hz, N0 = 3.98e-21 W/Hz:
        // SNR ~ 301.5, R ~ 2.06e6 bit/s.
        let n0 = noise_psd_from_dbm_per_hz(-174.0);
        let r = rate(0.3, 1e-12, 2.5e5, n0);
        assert!((r / 2.06e6 - 1.0).abs() < 5e-3, "r = {r:e}");
    }

    #[test]
    fn rate_is_concave_in_power() {
        let n0 = noise_psd_from_dbm_per_hz(-174.0);
        let h = 6.0e-11;
        let bw = 2.5e5;
        for &p in &[0.01, 0.05, 0.1, 0.2] {
            assert!(rate(2.0 * p, h, bw, n0) < 2.0 * rate(p, h, bw, n0));
        }
        // Second differences on a uniform grid stay nonpositive.
        let dp = 0.003;
        for i in 1..90 {
            let p = i as f64 * dp;
            let second =
                rate(p + dp, h, bw, n0) - 2.0 * rate(p, h, bw, n0) + rate(p - dp, h, bw, n0);
            assert!(second <= 1e-6, "second difference {second} at p = {p}");
        }
    }

    #[test]
    fn power_for_rate_inverts_rate() {
        let n0 = noise_psd_from_dbm_per_hz(-174.0);
        let h = 6.0e-11;
        let bw = 2.5e5;
        for &p in &[1e-4, 1e-2, 0.1, 0.3] {
            let r = rate(p, h, bw, n0);
            let back = power_for_rate(r, h, bw, n0);
            assert!((back / p - 1.0).abs() < 1e-9, "p = {p}, back = {back}");
        }
        assert_eq!(power_for_rate(0.0, h, bw, n0), 0.0);
    }
}
