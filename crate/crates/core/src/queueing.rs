//! Data queues, the virtual power queue and arrival processes.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// A bit queue with cumulative arrival and departure counters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DataQueue {
    pub backlog: f64,
    pub initial: f64,
    pub arrived: f64,
    pub departed: f64,
}

impl DataQueue {
    pub fn new(initial: f64) -> Self {
        DataQueue {
            backlog: initial,
            initial,
            arrived: 0.0,
            departed: 0.0,
        }
    }

    /// `Q' = (Q - service)^+ + arrivals`; returns the bits that departed.
    pub fn step(&mut self, service_bits: f64, arrivals: f64) -> f64 {
        let out = service_bits.min(self.backlog);
        self.backlog = (self.backlog - service_bits).max(0.0) + arrivals;
        self.departed += out;
        self.arrived += arrivals;
        out
    }

    /// Removes up to `bits` without arrivals; returns what was removed.
    pub fn serve(&mut self, bits: f64) -> f64 {
        self.step(bits, 0.0)
    }

    pub fn add(&mut self, bits: f64) {
        self.step(0.0, bits);
    }

    /// `|Q - (Q(0) + A - D)|`, zero up to rounding.
    pub fn identity_error(&self) -> f64 {
        (self.backlog - (self.initial + self.arrived - self.departed)).abs()
    }

    pub fn identity_holds(&self) -> bool {
        self.identity_error() <= 1e-9 * (1.0 + self.initial + self.arrived)
    }
}

/// Virtual queue enforcing the time-average power budget.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerQueue {
    pub z: f64,
    pub p_av: f64,
    /// Cumulative transmit energy (watt-slots).
    pub spent: f64,
    pub slots: u64,
}

impl PowerQueue {
    pub fn new(p_av: f64) -> Self {
        PowerQueue {
            z: 0.0,
            p_av,
            spent: 0.0,
            slots: 0,
        }
    }

    /// `Z' = (Z - P_av)^+ + P`.
    pub fn step(&mut self, p: f64) {
        self.z = (self.z - self.p_av).max(0.0) + p;
        self.spent += p;
        self.slots += 1;
    }

    /// `(1/T) sum P <= P_av + Z(T)/T`, which follows from the recursion.
    pub fn rate_bound_holds(&self) -> bool {
        if self.slots == 0 {
            return true;
        }
        let t = self.slots as f64;
        self.spent / t <= self.p_av + self.z / t + 1e-9 * (1.0 + self.p_av)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalMode {
    #[default]
    Poisson,
    /// Whole bits every slot with a fractional carry, so the long-run mean is
    /// exactly `lambda`.
    Deterministic,
}

/// An i.i.d. integer-bit arrival stream.
#[derive(Clone, Debug)]
pub struct ArrivalProcess {
    lambda: f64,
    mode: ArrivalMode,
    carry: f64,
    poisson: Option<Poisson<f64>>,
}

impl ArrivalProcess {
    pub fn new(lambda: f64, mode: ArrivalMode) -> Self {
        let poisson = if mode == ArrivalMode::Poisson && lambda > 0.0 {
            Poisson::new(lambda).ok()
        } else {
            None
        };
        ArrivalProcess {
            lambda,
            mode,
            carry: 0.0,
            poisson,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Bits arriving this slot.
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        if self.lambda <= 0.0 {
            return 0.0;
        }
        match self.mode {
            ArrivalMode::Poisson => self.poisson.as_ref().map_or(0.0, |d| d.sample(rng)),
            ArrivalMode::Deterministic => {
                self.carry += self.lambda;
                let whole = (self.carry + 1e-9).floor();
                self.carry -= whole;
                whole
            }
        }
    }
}

/// One-shot draw; deterministic mode rounds `lambda`.
pub fn draw_arrivals<R: Rng + ?Sized>(rng: &mut R, lambda: f64, mode: ArrivalMode) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    match mode {
        ArrivalMode::Poisson => Poisson::new(lambda).map_or(0.0, |d| d.sample(rng)),
        ArrivalMode::Deterministic => lambda.round(),
    }
}
