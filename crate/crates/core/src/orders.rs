//! Stochastic daily order arrivals.
//!
//! The mean number of arrivals per decision epoch follows a Beta(α, β) density
//! over the day, scaled so the expected daily volume matches a target. Each
//! epoch the realised count is a rounded normal draw around that mean, and
//! pick-up locations are drawn from freshly resampled Poisson(1) weights.

use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OrderId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub id: OrderId,
    /// Pick-up location index in `0..map.pickup_count()`.
    pub pickup: u32,
    pub human_only: bool,
    pub arrival_epoch: u32,
    /// Latest allowed drop-off, in seconds since the start of the day.
    pub deadline: u64,
}

#[derive(Debug, Error)]
pub enum OrderError {
    #[error("invalid arrival model: {0}")]
    InvalidModel(String),
    #[error("trace I/O: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace row {row}: {reason}")]
    BadTrace { row: usize, reason: String },
}

/// Parameters of the arrival process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrivalConfig {
    pub daily_volume: f64,
    pub beta_alpha: f64,
    pub beta_beta: f64,
    pub human_only_prob: f64,
    pub delay_minutes: f64,
}

impl Default for ArrivalConfig {
    fn default() -> Self {
        Self { daily_volume: 2618.88, beta_alpha: 5.0, beta_beta: 2.0, human_only_prob: 0.0, delay_minutes: 15.0 }
    }
}

#[derive(Debug, Clone)]
pub struct ArrivalModel {
    config: ArrivalConfig,
    epochs: u32,
    epoch_seconds: u64,
    pickups: usize,
    density: Beta,
    scale: f64,
    delay_seconds: u64,
}

impl ArrivalModel {
    pub fn new(config: &ArrivalConfig, epochs: u32, epoch_seconds: u64, pickups: usize) -> Result<Self, OrderError> {
        let bad = |m: &str| Err(OrderError::InvalidModel(m.to_string()));
        if !(config.daily_volume >= 0.0 && config.daily_volume.is_finite()) {
            return bad("daily_volume must be finite and nonnegative");
        }
        if !(0.0..=1.0).contains(&config.human_only_prob) {
            return bad("human_only_prob must lie in [0, 1]");
        }
        if config.delay_minutes.is_nan() || config.delay_minutes <= 0.0 {
            return bad("delay_minutes must be positive");
        }
        if epochs == 0 || epoch_seconds == 0 || pickups == 0 {
            return bad("epochs, epoch length and pick-up count must be positive");
        }
        let density =
            Beta::new(config.beta_alpha, config.beta_beta).map_err(|e| OrderError::InvalidModel(e.to_string()))?;
        let raw: f64 = (0..epochs).map(|t| density.pdf(t as f64 / epochs as f64)).sum();
        let scale = if raw > 0.0 { config.daily_volume / raw } else { 0.0 };
        Ok(Self {
            config: config.clone(),
            epochs,
            epoch_seconds,
            pickups,
            density,
            scale,
            delay_seconds: (config.delay_minutes * 60.0).round() as u64,
        })
    }

    pub fn config(&self) -> &ArrivalConfig {
        &self.config
    }

    pub fn epochs(&self) -> u32 {
        self.epochs
    }

    pub fn delay_seconds(&self) -> u64 {
        self.delay_seconds
    }

    /// Expected number of arrivals at epoch `t`.
    pub fn epoch_mean(&self, t: u32) -> f64 {
        let x = t as f64 / self.epochs as f64;
        let f = self.density.pdf(x);
        if f.is_finite() {
            self.scale * f
        } else {
            0.0
        }
    }

    /// Largest per-epoch mean over the day.
    pub fn peak_mean(&self) -> f64 {
        (0..self.epochs).map(|t| self.epoch_mean(t)).fold(0.0, f64::max)
    }

    /// Draws the orders arriving at epoch `t`, numbering them from `next_id`.
    pub fn sample_epoch_orders<R: Rng + ?Sized>(&self, t: u32, next_id: &mut u32, rng: &mut R) -> Vec<Order> {
        let mean = self.epoch_mean(t);
        let draw = Normal::new(mean, 1.0).expect("unit sd").sample(rng);
        let count = draw.round().max(0.0) as usize;

        let poisson = Poisson::new(1.0).expect("positive mean");
        let weights: Vec<f64> = (0..self.pickups).map(|_| poisson.sample(rng)).collect();
        let locations = WeightedIndex::new(&weights).ok();
        let human_only = Bernoulli::new(self.config.human_only_prob).expect("probability checked");

        let deadline = t as u64 * self.epoch_seconds + self.delay_seconds;
        (0..count)
            .map(|_| {
                let pickup = match &locations {
                    Some(dist) => dist.sample(rng),
                    // every weight zero: fall back to uniform
                    None => rng.random_range(0..self.pickups),
                };
                let id = OrderId(*next_id);
                *next_id += 1;
                Order { id, pickup: pickup as u32, human_only: human_only.sample(rng), arrival_epoch: t, deadline }
            })
            .collect()
    }

    /// All orders of one day, grouped by arrival epoch.
    pub fn generate_day(&self, seed: u64) -> DayOrders {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut next_id = 0;
        DayOrders { epochs: (0..self.epochs).map(|t| self.sample_epoch_orders(t, &mut next_id, &mut rng)).collect() }
    }
}

/// Order stream of one simulated day.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DayOrders {
    pub epochs: Vec<Vec<Order>>,
}

impl DayOrders {
    pub fn total(&self) -> usize {
        self.epochs.iter().map(Vec::len).sum()
    }

    pub fn at(&self, t: u32) -> &[Order] {
        self.epochs.get(t as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    /// FNV-1a over (id, epoch, pickup, flag, deadline); identifies a trace.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::default();
        for o in self.epochs.iter().flatten() {
            h.eat(o.id.0 as u64);
            h.eat(o.arrival_epoch as u64);
            h.eat(o.pickup as u64);
            h.eat(o.human_only as u64);
            h.eat(o.deadline);
        }
        h.finish()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), OrderError> {
        let mut w = csv::Writer::from_writer(writer);
        for o in self.epochs.iter().flatten() {
            w.serialize(TraceRow::from(o))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a trace; orders are bucketed by their epoch column.
    pub fn read_csv<R: Read>(reader: R, epochs: u32) -> Result<Self, OrderError> {
        let mut out = DayOrders { epochs: vec![Vec::new(); epochs as usize] };
        for (row, rec) in csv::Reader::from_reader(reader).deserialize::<TraceRow>().enumerate() {
            let rec = rec?;
            if rec.epoch >= epochs {
                return Err(OrderError::BadTrace { row, reason: format!("epoch {} outside horizon", rec.epoch) });
            }
            out.epochs[rec.epoch as usize].push(Order {
                id: OrderId(rec.id),
                pickup: rec.pickup,
                human_only: rec.human_only,
                arrival_epoch: rec.epoch,
                deadline: rec.deadline,
            });
        }
        Ok(out)
    }
}

/// 64-bit FNV-1a over little-endian words.
#[derive(Debug, Clone, Copy)]
pub struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    pub fn eat(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    id: u32,
    epoch: u32,
    pickup: u32,
    human_only: bool,
    deadline: u64,
}

impl From<&Order> for TraceRow {
    fn from(o: &Order) -> Self {
        Self { id: o.id.0, epoch: o.arrival_epoch, pickup: o.pickup, human_only: o.human_only, deadline: o.deadline }
    }
}
