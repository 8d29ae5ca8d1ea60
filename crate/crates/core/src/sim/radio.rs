use rand::Rng;
use thiserror::Error;

use crate::node::Position;

/// Log-distance channel with a capture threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioModel {
    /// Loss at the 1 m reference distance, dB.
    pub path_loss_ref_db: f64,
    pub path_loss_exp: f64,
    pub sensitivity_dbm: f64,
    /// Advantage over the strongest overlapping signal needed to survive.
    pub capture_margin_db: f64,
    /// Probability a scanner picks up a given channel transmission.
    pub scan_duty: f64,
    /// On-air time of one advertising PDU on one channel.
    pub airtime_us: u64,
    /// Upper bound of the random delay added to every advertising event.
    pub tx_jitter_max_ms: u32,
}

impl Default for RadioModel {
    fn default() -> Self {
        RadioModel {
            path_loss_ref_db: 40.0,
            path_loss_exp: 3.0,
            sensitivity_dbm: -90.0,
            capture_margin_db: 10.0,
            scan_duty: 1.0,
            airtime_us: 376,
            tx_jitter_max_ms: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RadioError {
    #[error("coincident positions ({x}, {y}): distance is zero")]
    CoincidentPositions { x: f64, y: f64 },
}

impl RadioModel {
    pub fn jitter_max_us(&self) -> u64 {
        u64::from(self.tx_jitter_max_ms) * 1000
    }

    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if !(self.path_loss_exp > 0.0 && self.path_loss_exp.is_finite()) {
            out.push((
                "path_loss_exp",
                format!("{} must be > 0", self.path_loss_exp),
            ));
        }
        if !(0.0..=1.0).contains(&self.scan_duty) {
            out.push(("scan_duty", format!("{} outside [0, 1]", self.scan_duty)));
        }
        if self.airtime_us == 0 {
            out.push(("airtime_us", "must be > 0".to_string()));
        }
        for (name, v) in [
            ("path_loss_ref_db", self.path_loss_ref_db),
            ("sensitivity_dbm", self.sensitivity_dbm),
            ("capture_margin_db", self.capture_margin_db),
        ] {
            if !v.is_finite() {
                out.push((name, format!("{v} is not finite")));
            }
        }
        out
    }
}

/// Received power at `b` of a transmission from `a`.
pub fn link_rssi(
    model: &RadioModel,
    a: &Position,
    b: &Position,
    tx_power_dbm: f64,
) -> Result<f64, RadioError> {
    let d = a.distance(b);
    if d == 0.0 {
        return Err(RadioError::CoincidentPositions { x: a.x, y: a.y });
    }
    Ok(tx_power_dbm - model.path_loss_ref_db - 10.0 * model.path_loss_exp * d.log10())
}

/// Whether a signal of `rssi` survives sensitivity, overlapping signals and
/// the scanner's duty cycle.
pub fn reception_outcome<R: Rng + ?Sized>(
    model: &RadioModel,
    rssi: f64,
    overlapping: &[f64],
    rng: &mut R,
) -> bool {
    if rssi < model.sensitivity_dbm {
        return false;
    }
    let strongest = overlapping
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if rssi < strongest + model.capture_margin_db {
        return false;
    }
    model.scan_duty >= 1.0 || rng.gen::<f64>() < model.scan_duty
}
