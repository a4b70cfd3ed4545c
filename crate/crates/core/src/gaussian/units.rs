use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A variance expressed in decibels relative to shot noise.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Decibel(pub f64);

impl Decibel {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn to_snu(self) -> f64 {
        db_to_snu(self)
    }
}

impl fmt::Display for Decibel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} dB", self.0)
    }
}

pub fn db_to_snu(d: Decibel) -> f64 {
    10f64.powf(d.0 / 10.0)
}

pub fn snu_to_db(v: f64) -> Result<Decibel> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(format!("variance must be positive to express in dB, got {v}")));
    }
    Ok(Decibel(10.0 * v.log10()))
}
