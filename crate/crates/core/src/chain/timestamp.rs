use super::params::DifficultyParams;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TimestampError {
    #[error("timestamp {timestamp} not above median past time {median}")]
    NotAfterMedian { timestamp: u64, median: u64 },
    #[error("timestamp {timestamp} too far ahead of network time {network_time}")]
    TooFarAhead { timestamp: u64, network_time: u64 },
}

/// Median of the last `window` timestamps (fewer when the chain is short).
pub fn median_past_time(previous: &[u64], window: usize) -> Option<u64> {
    if previous.is_empty() {
        return None;
    }
    let mut w = previous[previous.len().saturating_sub(window)..].to_vec();
    w.sort_unstable();
    Some(w[w.len() / 2])
}

/// Rejects `timestamp ≤ MPT` and `timestamp ≥ network_time + future window`.
pub fn validate_timestamp(
    timestamp: u64,
    previous: &[u64],
    network_time: u64,
    params: &DifficultyParams,
) -> Result<(), TimestampError> {
    if let Some(median) = median_past_time(previous, params.median_window) {
        if timestamp <= median {
            return Err(TimestampError::NotAfterMedian { timestamp, median });
        }
    }
    if timestamp >= network_time.saturating_add(params.future_window) {
        return Err(TimestampError::TooFarAhead { timestamp, network_time });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries() {
        let bc = DifficultyParams::beacon();
        let prev: Vec<u64> = (1..=11).map(|i| i * 100).collect();
        assert_eq!(median_past_time(&prev, 11), Some(600));
        assert!(validate_timestamp(600, &prev, 1000, &bc).is_err());
        assert!(validate_timestamp(601, &prev, 1000, &bc).is_ok());
        assert!(validate_timestamp(1000 + 7199, &prev, 1000, &bc).is_ok());
        assert!(validate_timestamp(1000 + 7200, &prev, 1000, &bc).is_err());
        let sc = DifficultyParams::shard();
        assert!(validate_timestamp(1000 + 361, &prev, 1000, &sc).is_err());
        assert!(validate_timestamp(1000 + 359, &prev, 1000, &sc).is_ok());
        assert!(validate_timestamp(5, &[], 1000, &sc).is_ok());
    }
}
