//! Normalised mean prediction error of a simulated against a measured
//! multi-channel series: the mean over channels of
//! `RMS(sim - ref) / std(ref)`, with the population standard deviation.
//! The normalisation is an interpretation; the metric is scale-free per
//! channel.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NmpeError {
    #[error("no channels")]
    Empty,
    #[error("{simulated} simulated channels against {reference} reference channels")]
    ChannelCount { simulated: usize, reference: usize },
    #[error(
        "channel {channel}: {simulated} simulated samples against {reference} reference samples"
    )]
    LengthMismatch {
        channel: usize,
        simulated: usize,
        reference: usize,
    },
    #[error("channel {channel}: reference has zero variance")]
    ZeroVariance { channel: usize },
}

/// Channels are time-aligned sample vectors of equal length.
pub fn compute_nmpe(simulated: &[&[f64]], reference: &[&[f64]]) -> Result<f64, NmpeError> {
    if reference.is_empty() {
        return Err(NmpeError::Empty);
    }
    if simulated.len() != reference.len() {
        return Err(NmpeError::ChannelCount {
            simulated: simulated.len(),
            reference: reference.len(),
        });
    }
    let mut total = 0.0;
    for (channel, (sim, rf)) in simulated.iter().zip(reference).enumerate() {
        if sim.len() != rf.len() || rf.is_empty() {
            return Err(NmpeError::LengthMismatch {
                channel,
                simulated: sim.len(),
                reference: rf.len(),
            });
        }
        let n = rf.len() as f64;
        let mean = rf.iter().sum::<f64>() / n;
        let std = (rf.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(std > 0.0) {
            return Err(NmpeError::ZeroVariance { channel });
        }
        let rms = (sim
            .iter()
            .zip(*rf)
            .map(|(s, r)| (s - r).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        total += rms / std;
    }
    Ok(total / reference.len() as f64)
}
