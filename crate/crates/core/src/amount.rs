//! Coin amounts in base units of 2^-48 coin.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

pub const UNITS_PER_COIN: u128 = 1 << 48;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Amount(pub u128);

impl Amount {
    pub const ZERO: Amount = Amount(0);

    pub fn from_units(units: u128) -> Self {
        Amount(units)
    }

    pub fn units(self) -> u128 {
        self.0
    }

    pub fn from_coins(coins: f64) -> Self {
        assert!(coins.is_finite() && coins >= 0.0);
        Amount((coins * UNITS_PER_COIN as f64).round() as u128)
    }

    pub fn to_coins(self) -> f64 {
        self.0 as f64 / UNITS_PER_COIN as f64
    }

    pub fn checked_add(self, o: Amount) -> Option<Amount> {
        self.0.checked_add(o.0).map(Amount)
    }
}

impl Add for Amount {
    type Output = Amount;
    fn add(self, o: Amount) -> Amount {
        Amount(self.0.checked_add(o.0).expect("amount overflow"))
    }
}

impl AddAssign for Amount {
    fn add_assign(&mut self, o: Amount) {
        *self = *self + o;
    }
}

impl Sum for Amount {
    fn sum<I: Iterator<Item = Amount>>(iter: I) -> Amount {
        iter.fold(Amount::ZERO, |a, b| a + b)
    }
}

impl fmt::Debug for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Amount({} coin)", self.to_coins())
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_coins())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_coin() {
        assert_eq!(Amount::from_coins(1.0).units(), 1 << 48);
        assert_eq!(Amount::from_units(1 << 47).to_coins(), 0.5);
        assert_eq!(Amount::from_coins(0.0001).units(), 28147497671);
    }
}
