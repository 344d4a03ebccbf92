//! Block-fading downlink channels with imperfect CSI at the transmitter.
//!
//! Every receiver sees `h ~ CN(0, s2)` per slot, where the variance `s2` is set
//! from the receiver's mean SNR at the average power (`SNR = E|h|^2 P_av`).
//! The transmitter's report is `hhat = sqrt(rho) h + sqrt(1 - rho) n` with
//! `n ~ CN(0, s2)` independent, so `h | hhat ~ CN(sqrt(rho) hhat, (1 - rho) s2)`.
//! Multicast members never report; file-repair receivers do.

mod posterior;
mod table;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use posterior::{bessel_i0e, RicianPosterior, EXPECTATION_NODES};
pub use table::{ExpectationTable, GoodputTable, RateChoice, RATE_GRID_POINTS};

/// Time evolution of the true channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// Independent Rayleigh draws every slot.
    #[default]
    IidRayleigh,
    /// `h[t+1] = sqrt(a) h[t] + sqrt(1 - a) w[t]`, with `a = ar_coeff`.
    Ar1Rayleigh,
}

/// How per-symbol mutual information is computed from `|h|^2 P`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MiModel {
    /// `min(log2(1 + |h|^2 P), i_max)`.
    #[default]
    Continuous,
    /// The continuous value floored to a multiple of `step`. Keeps per-slot
    /// MI on a finite lattice so code lengths have exact absorbing-chain oracles.
    Lattice { step: f64 },
}

impl MiModel {
    /// Bits per symbol for power gain `gain = |h|^2` at transmit power `p`.
    pub fn evaluate(&self, gain: f64, p: f64, i_max: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        let capped = (1.0 + gain * p).log2().min(i_max);
        match *self {
            MiModel::Continuous => capped,
            MiModel::Lattice { step } => (capped / step).floor() * step,
        }
    }

    /// Largest value the model can produce.
    pub fn max_value(&self, i_max: f64) -> f64 {
        match *self {
            MiModel::Continuous => i_max,
            MiModel::Lattice { step } => (i_max / step + 1e-9).floor() * step,
        }
    }

    /// Smallest `|h|` whose MI at power `p` reaches `y` bits/symbol
    /// (infinite when unreachable).
    pub fn radius_for(&self, y: f64, p: f64, i_max: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if p <= 0.0 {
            return f64::INFINITY;
        }
        let target = match *self {
            MiModel::Continuous => y,
            MiModel::Lattice { step } => (y / step - 1e-9).ceil() * step,
        };
        if target > self.max_value(i_max) + 1e-12 {
            return f64::INFINITY;
        }
        ((target.exp2() - 1.0) / p).sqrt()
    }

    /// Magnitudes where the MI curve at power `p` is not smooth.
    pub fn breakpoints(&self, p: f64, i_max: f64) -> Vec<f64> {
        if p <= 0.0 {
            return Vec::new();
        }
        match *self {
            MiModel::Continuous => vec![((i_max.exp2() - 1.0) / p).sqrt()],
            MiModel::Lattice { step } => {
                let levels = (i_max / step + 1e-9).floor() as usize;
                (1..=levels)
                    .map(|k| (((k as f64 * step).exp2() - 1.0) / p).sqrt())
                    .collect()
            }
        }
    }
}

/// Per-symbol mutual information `min(log2(1 + |h|^2 P), i_max)`.
pub fn mutual_information(h: Complex64, p: f64, i_max: f64) -> f64 {
    MiModel::Continuous.evaluate(h.norm_sqr(), p, i_max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// Mean SNR (dB) of each unicast user; its length is `U`.
    pub unicast_snr_db: Vec<f64>,
    /// Mean SNR (dB) of each member of each multicast group; `J(g)` is the
    /// inner length.
    pub group_snr_db: Vec<Vec<f64>>,
    /// CSI accuracy in `[0, 1]`.
    pub rho: f64,
    /// Bits/symbol cap from the receiver's dynamic range.
    pub i_max: f64,
    /// Channel symbols per slot (`K`).
    pub symbols_per_slot: u32,
    #[serde(default)]
    pub mode: ChannelMode,
    #[serde(default)]
    pub ar_coeff: f64,
    /// Equiprobable magnitude bins per reporting receiver.
    pub quant_bins: usize,
    #[serde(default)]
    pub mi_model: MiModel,
}

impl ChannelConfig {
    /// Homogeneous users at a single SNR.
    pub fn uniform(num_unicast: usize, group_sizes: &[usize], snr_db: f64, rho: f64) -> Self {
        ChannelConfig {
            unicast_snr_db: vec![snr_db; num_unicast],
            group_snr_db: group_sizes.iter().map(|&j| vec![snr_db; j]).collect(),
            rho,
            i_max: 5.0,
            symbols_per_slot: 1,
            mode: ChannelMode::IidRayleigh,
            ar_coeff: 0.0,
            quant_bins: 4,
            mi_model: MiModel::Continuous,
        }
    }

    pub fn num_unicast(&self) -> usize {
        self.unicast_snr_db.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.group_snr_db.iter().map(Vec::len).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::config(format!("rho = {} outside [0, 1]", self.rho)));
        }
        if !(self.i_max > 0.0 && self.i_max.is_finite()) {
            return Err(Error::config("i_max must be positive and finite"));
        }
        if self.symbols_per_slot == 0 {
            return Err(Error::config("symbols_per_slot must be at least 1"));
        }
        if self.quant_bins == 0 {
            return Err(Error::config("quant_bins must be at least 1"));
        }
        if self.mode == ChannelMode::Ar1Rayleigh && !(0.0..1.0).contains(&self.ar_coeff) {
            return Err(Error::config("ar_coeff must lie in [0, 1)"));
        }
        if let MiModel::Lattice { step } = self.mi_model {
            if !(step > 0.0 && step <= self.i_max) {
                return Err(Error::config("lattice step must lie in (0, i_max]"));
            }
        }
        let all = self.unicast_snr_db.iter().chain(self.group_snr_db.iter().flatten());
        for snr in all {
            if !snr.is_finite() {
                return Err(Error::config("mean SNR must be finite"));
            }
        }
        if self.group_snr_db.iter().any(Vec::is_empty) {
            return Err(Error::config("multicast groups need at least one member"));
        }
        Ok(())
    }
}

/// A physical receiver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Receiver {
    Unicast(usize),
    Member { group: usize, member: usize },
}

/// True and reported gain of one receiver in one slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gains {
    pub h: Complex64,
    pub hhat: Complex64,
}

/// Channel realisation for one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelDraw {
    pub unicast: Vec<Gains>,
    pub members: Vec<Vec<Gains>>,
}

impl ChannelDraw {
    pub fn gains(&self, rx: Receiver) -> Gains {
        match rx {
            Receiver::Unicast(u) => self.unicast[u],
            Receiver::Member { group, member } => self.members[group][member],
        }
    }
}

/// A validated channel model with derived per-receiver variances.
#[derive(Clone, Debug)]
pub struct Channel {
    config: ChannelConfig,
    unicast_var: Vec<f64>,
    member_var: Vec<Vec<f64>>,
}

impl Channel {
    /// Builds the channel; variances follow `SNR = E|h|^2 P_av`.
    ///
    /// With `p_av == 0` the SNR is referenced to unit power instead.
    pub fn new(config: ChannelConfig, p_av: f64) -> Result<Self> {
        config.validate()?;
        if !(p_av >= 0.0 && p_av.is_finite()) {
            return Err(Error::config("P_av must be finite and nonnegative"));
        }
        let reference = if p_av > 0.0 { p_av } else { 1.0 };
        let var = |db: &f64| 10f64.powf(db / 10.0) / reference;
        let unicast_var = config.unicast_snr_db.iter().map(var).collect();
        let member_var = config
            .group_snr_db
            .iter()
            .map(|g| g.iter().map(var).collect())
            .collect();
        Ok(Channel {
            config,
            unicast_var,
            member_var,
        })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn rho(&self) -> f64 {
        self.config.rho
    }

    pub fn i_max(&self) -> f64 {
        self.config.i_max
    }

    pub fn symbols(&self) -> f64 {
        self.config.symbols_per_slot as f64
    }

    pub fn bins(&self) -> usize {
        self.config.quant_bins
    }

    pub fn mi_model(&self) -> MiModel {
        self.config.mi_model
    }

    /// `E|h|^2` of a receiver.
    pub fn variance(&self, rx: Receiver) -> f64 {
        match rx {
            Receiver::Unicast(u) => self.unicast_var[u],
            Receiver::Member { group, member } => self.member_var[group][member],
        }
    }

    pub fn unicast_receivers(&self) -> impl Iterator<Item = Receiver> {
        (0..self.unicast_var.len()).map(Receiver::Unicast)
    }

    pub fn group_members(&self, group: usize) -> impl Iterator<Item = Receiver> {
        (0..self.member_var[group].len()).map(move |member| Receiver::Member { group, member })
    }

    /// Draws the channels of every receiver for one slot.
    ///
    /// `prev` must be the previous slot's draw in AR(1) mode and is ignored
    /// otherwise.
    pub fn sample_slot<R: Rng + ?Sized>(&self, rng: &mut R, prev: Option<&ChannelDraw>) -> ChannelDraw {
        let ar = match self.config.mode {
            ChannelMode::IidRayleigh => None,
            ChannelMode::Ar1Rayleigh => prev.map(|_| self.config.ar_coeff),
        };
        let unicast = self
            .unicast_var
            .iter()
            .enumerate()
            .map(|(u, &var)| {
                let last = ar.and(prev).map(|p| p.unicast[u].h);
                self.draw_one(rng, var, last, ar)
            })
            .collect();
        let members = self
            .member_var
            .iter()
            .enumerate()
            .map(|(g, vars)| {
                vars.iter()
                    .enumerate()
                    .map(|(j, &var)| {
                        let last = ar.and(prev).map(|p| p.members[g][j].h);
                        self.draw_one(rng, var, last, ar)
                    })
                    .collect()
            })
            .collect();
        ChannelDraw { unicast, members }
    }

    fn draw_one<R: Rng + ?Sized>(&self, rng: &mut R, var: f64, last: Option<Complex64>, ar: Option<f64>) -> Gains {
        let fresh = complex_gaussian(rng, var);
        let h = match (last, ar) {
            (Some(h0), Some(a)) => h0 * a.sqrt() + fresh * (1.0 - a).sqrt(),
            _ => fresh,
        };
        let noise = complex_gaussian(rng, var);
        let rho = self.config.rho;
        let hhat = if rho == 1.0 {
            h
        } else {
            h * rho.sqrt() + noise * (1.0 - rho).sqrt()
        };
        Gains { h, hhat }
    }

    /// Per-symbol MI of gain `h` at power `p` under the configured model.
    pub fn mi(&self, h: Complex64, p: f64) -> f64 {
        self.config.mi_model.evaluate(h.norm_sqr(), p, self.config.i_max)
    }

    /// Posterior of `|h|` given the report `hhat`.
    pub fn posterior(&self, rx: Receiver, hhat: Complex64) -> RicianPosterior {
        let rho = self.config.rho;
        RicianPosterior::new(rho.sqrt() * hhat.norm(), (1.0 - rho) * self.variance(rx))
    }

    /// `E{I(h, P) | hhat}` in bits/symbol (callers multiply by `K`).
    pub fn conditional_expected_mi(&self, rx: Receiver, hhat: Complex64, p: f64) -> f64 {
        self.expected_mi_under(self.posterior(rx, hhat), p)
    }

    /// Unconditional `E{I(h, P)}` (ergodic MI, no CSI).
    pub fn ergodic_mi(&self, rx: Receiver, p: f64) -> f64 {
        self.expected_mi_under(RicianPosterior::new(0.0, self.variance(rx)), p)
    }

    pub(crate) fn expected_mi_under(&self, post: RicianPosterior, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        let model = self.config.mi_model;
        let i_max = self.config.i_max;
        let breaks = model.breakpoints(p, i_max);
        post.expect(|r| model.evaluate(r * r, p, i_max), &breaks, EXPECTATION_NODES)
    }

    /// Lower edges of the equiprobable Rayleigh magnitude bins of `rx`,
    /// followed by `+inf`.
    pub fn bin_edges(&self, rx: Receiver) -> Vec<f64> {
        let b = self.config.quant_bins;
        let s = self.variance(rx).sqrt();
        (0..=b)
            .map(|k| {
                if k == b {
                    f64::INFINITY
                } else {
                    s * (-(1.0 - k as f64 / b as f64).ln()).sqrt()
                }
            })
            .collect()
    }

    /// Magnitude bin of a report.
    pub fn bin_of(&self, rx: Receiver, hhat: Complex64) -> usize {
        let b = self.config.quant_bins;
        let u = -(-hhat.norm_sqr() / self.variance(rx)).exp_m1();
        ((u * b as f64) as usize).min(b - 1)
    }

    /// Joint CSI state index over the reporting receivers; the first
    /// receiver is the least significant digit.
    pub fn quantize_csi(&self, draw: &ChannelDraw, reporters: &[Receiver]) -> usize {
        let b = self.config.quant_bins;
        reporters
            .iter()
            .rev()
            .fold(0usize, |acc, &rx| acc.wrapping_mul(b) + self.bin_of(rx, draw.gains(rx).hhat))
    }

    /// `E = B^n`, or `None` if it overflows.
    pub fn alphabet_size(&self, reporters: usize) -> Option<usize> {
        self.config.quant_bins.checked_pow(reporters as u32)
    }
}

/// Circularly symmetric complex Gaussian with `E|x|^2 = var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_channel(rho: f64, bins: usize) -> Channel {
        // 0 dB at P_av = 1 gives unit variance.
        let mut cfg = ChannelConfig::uniform(1, &[], 0.0, rho);
        cfg.quant_bins = bins;
        Channel::new(cfg, 1.0).unwrap()
    }

    #[test]
    fn mi_examples() {
        assert_eq!(mutual_information(Complex64::new(1.0, 0.0), 1.0, 5.0), 1.0);
        assert_eq!(MiModel::Continuous.evaluate(31.0, 1.0, 5.0), 5.0);
        assert_eq!(MiModel::Continuous.evaluate(63.0, 1.0, 5.0), 5.0);
        assert_eq!(MiModel::Continuous.evaluate(3.0, 0.0, 5.0), 0.0);
        assert_eq!(MiModel::Lattice { step: 1.0 }.evaluate(6.0, 1.0, 5.0), 2.0);
    }

    #[test]
    fn lattice_radius_round_trip() {
        let m = MiModel::Lattice { step: 1.0 };
        let r = m.radius_for(2.5, 2.0, 5.0);
        assert!((r * r - 3.5).abs() < 1e-12); // needs 3 bits: (8-1)/2
        assert!(m.radius_for(5.5, 1.0, 5.0).is_infinite());
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = ChannelConfig::uniform(1, &[2], 10.0, 1.5);
        assert!(cfg.validate().is_err());
        cfg.rho = 0.5;
        cfg.quant_bins = 0;
        assert!(cfg.validate().is_err());
        cfg.quant_bins = 2;
        cfg.mode = ChannelMode::Ar1Rayleigh;
        cfg.ar_coeff = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn perfect_csi_is_exact() {
        let ch = unit_channel(1.0, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let d = ch.sample_slot(&mut rng, None);
            assert_eq!(d.unicast[0].h, d.unicast[0].hhat);
        }
        let hhat = Complex64::new(0.7, -0.4);
        assert_eq!(
            ch.conditional_expected_mi(Receiver::Unicast(0), hhat, 3.0),
            mutual_information(hhat, 3.0, 5.0)
        );
    }

    #[test]
    fn single_bin_is_state_zero() {
        let ch = unit_channel(0.5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let d = ch.sample_slot(&mut rng, None);
            assert_eq!(ch.quantize_csi(&d, &[Receiver::Unicast(0)]), 0);
        }
    }

    #[test]
    fn two_bins_split_at_rayleigh_median() {
        let ch = unit_channel(0.5, 2);
        let median = (2f64.ln()).sqrt();
        let rx = Receiver::Unicast(0);
        assert_eq!(ch.bin_of(rx, Complex64::new(median * 0.99, 0.0)), 0);
        assert_eq!(ch.bin_of(rx, Complex64::new(0.0, median * 1.01)), 1);
        assert!((ch.bin_edges(rx)[1] - median).abs() < 1e-12);
    }

    #[test]
    fn determinism() {
        let mut cfg = ChannelConfig::uniform(2, &[3], 10.0, 0.8);
        cfg.mode = ChannelMode::Ar1Rayleigh;
        cfg.ar_coeff = 0.1;
        let ch = Channel::new(cfg, 1.0).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let mut prev: Option<ChannelDraw> = None;
            let mut out = Vec::new();
            for _ in 0..50 {
                let d = ch.sample_slot(&mut rng, prev.as_ref());
                out.push(d.clone());
                prev = Some(d);
            }
            out
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn snr_sets_variance() {
        let cfg = ChannelConfig::uniform(1, &[1], 10.0, 0.0);
        let ch = Channel::new(cfg, 2.0).unwrap();
        assert!((ch.variance(Receiver::Unicast(0)) * 2.0 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn expected_mi_monotone_in_power() {
        let ch = unit_channel(0.8, 4);
        let hhat = Complex64::new(0.6, 0.2);
        let mut last = 0.0;
        for k in 0..40 {
            let v = ch.conditional_expected_mi(Receiver::Unicast(0), hhat, k as f64 * 0.5);
            assert!(v >= last - 1e-12);
            assert!((0.0..=5.0).contains(&v));
            last = v;
        }
    }
}
