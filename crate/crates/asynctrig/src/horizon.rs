//! Sampling horizons: finite action sequences over `{0, 1..m}` where `0`
//! is an idle period and `i ≥ 1` refreshes sensor block `i`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default bound on the number of enumerated horizons.
pub const DEFAULT_CAP: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Horizon(Vec<u8>);

impl Horizon {
    pub fn new(actions: Vec<u8>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::Domain("horizon must contain at least one action".into()));
        }
        Ok(Self(actions))
    }

    /// The one-step idle horizon `(0)`.
    pub fn idle() -> Self {
        Self(vec![0])
    }

    pub fn actions(&self) -> &[u8] {
        &self.0
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Number of idle actions.
    pub fn zeros(&self) -> usize {
        self.0.iter().filter(|&&a| a == 0).count()
    }

    /// Number of sensor readings.
    pub fn readings(&self) -> usize {
        self.len() - self.zeros()
    }

    pub fn max_action(&self) -> u8 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// Concatenation `self ++ other`.
    pub fn concat(&self, other: &Horizon) -> Horizon {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Horizon(v)
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &a in &self.0 {
            let c = char::from_digit(u32::from(a), 36).unwrap_or('?');
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Horizon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let actions = s
            .chars()
            .map(|c| {
                c.to_digit(36)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::Config(format!("invalid horizon character {c:?} in {s:?}")))
            })
            .collect::<Result<Vec<u8>>>()?;
        Horizon::new(actions).map_err(|_| Error::Config("empty horizon string".into()))
    }
}

impl Serialize for Horizon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Number of horizons with lengths in `[l_min, l_max]` over `m + 1` symbols,
/// or `None` on overflow.
pub fn horizon_count(m: usize, l_min: usize, l_max: usize) -> Option<usize> {
    let base = m.checked_add(1)?;
    let mut total = 0usize;
    let mut pow = base.checked_pow(u32::try_from(l_min).ok()?)?;
    for l in l_min..=l_max {
        total = total.checked_add(pow)?;
        if l < l_max {
            pow = pow.checked_mul(base)?;
        }
    }
    Some(total)
}

/// All horizons with length in `[l_min, l_max]`, shorter first and
/// lexicographic within each length.
pub fn enumerate_horizons(m: usize, l_min: usize, l_max: usize, cap: usize) -> Result<Vec<Horizon>> {
    if m == 0 || m > 35 {
        return Err(Error::Domain(format!("sensor count {m} outside 1..=35")));
    }
    if l_min == 0 || l_min > l_max {
        return Err(Error::Domain(format!("invalid length bounds [{l_min}, {l_max}]")));
    }
    let count = horizon_count(m, l_min, l_max)
        .ok_or_else(|| Error::Resource("horizon count overflows".into()))?;
    if count > cap {
        return Err(Error::Resource(format!(
            "{count} horizons requested, cap is {cap}"
        )));
    }
    let mut out = Vec::with_capacity(count);
    for l in l_min..=l_max {
        let mut digits = vec![0u8; l];
        'odometer: loop {
            out.push(Horizon(digits.clone()));
            for i in (0..l).rev() {
                if usize::from(digits[i]) < m {
                    digits[i] += 1;
                    continue 'odometer;
                }
                digits[i] = 0;
            }
            break;
        }
    }
    Ok(out)
}

/// Average-idle objective `(z + l) / (m l)` with `z` idle actions.
pub fn avg_idle_metric(sigma: &Horizon, m: usize) -> f64 {
    let l = sigma.len() as f64;
    (sigma.zeros() as f64 + l) / (m as f64 * l)
}
