//! Fixed-rate camera frames and their grouping into scheduling rounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::local::{ImageJob, MachineId, WorkloadInstance};
use crate::scalar::{max_of, min_of, Scalar};

/// Times are in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec<S> {
    pub rate_hz: S,
    pub duration_ms: S,
    pub analysis_ms: S,
    /// Upper end of a uniform analysis-time range; `None` for fixed times.
    pub analysis_max_ms: Option<S>,
    pub latency_ms: S,
    /// Frames `k` with `k % interval == 0` are high priority; 0 disables.
    pub priority_interval: u64,
    pub size: S,
    pub ram: S,
    pub origin: MachineId,
    pub rng_seed: u64,
}

impl<S: Scalar> StreamSpec<S> {
    pub fn new(rate_hz: S, duration_ms: S, analysis_ms: S, latency_ms: S) -> Self {
        StreamSpec {
            rate_hz,
            duration_ms,
            analysis_ms,
            analysis_max_ms: None,
            latency_ms,
            priority_interval: 10,
            size: S::one(),
            ram: S::zero(),
            origin: 1,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rate_hz.is_positive() {
            return Err(Error::Argument("frame rate must be > 0".into()));
        }
        if self.duration_ms.is_negative() || self.latency_ms.is_negative() {
            return Err(Error::Argument("duration and latency must be >= 0".into()));
        }
        if !self.analysis_ms.is_positive() {
            return Err(Error::Argument("analysis time must be > 0".into()));
        }
        if let Some(hi) = &self.analysis_max_ms {
            if *hi < self.analysis_ms {
                return Err(Error::Argument("analysis_max_ms must be >= analysis_ms".into()));
            }
        }
        if self.size.is_negative() || self.ram.is_negative() {
            return Err(Error::Argument("size and ram must be >= 0".into()));
        }
        Ok(())
    }
}

/// A frame with its absolute arrival and deadline.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<S> {
    pub index: u64,
    pub arrival: S,
    pub deadline: S,
    pub job: ImageJob<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameStream<S> {
    pub frames: Vec<Frame<S>>,
}

/// Frames offered together at the start of a round, with deadlines made
/// relative to that start.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundBatch<S> {
    pub round: usize,
    pub start: S,
    pub workload: WorkloadInstance<S>,
}

/// Frame `k` arrives at `k / rate` and is due `latency` later. Image ids
/// are `k + 1`.
pub fn generate_frame_stream<S: Scalar>(spec: &StreamSpec<S>) -> Result<FrameStream<S>> {
    spec.validate()?;
    let period = S::from_int(1000) / spec.rate_hz.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut frames = Vec::new();
    let mut k: u64 = 0;
    loop {
        let arrival = period.clone() * S::from_int(k as i64);
        if arrival >= spec.duration_ms {
            break;
        }
        let t = match &spec.analysis_max_ms {
            Some(hi) if *hi > spec.analysis_ms => {
                let u = S::from_ratio(rng.gen_range(0..=1000), 1000);
                spec.analysis_ms.clone() + (hi.clone() - spec.analysis_ms.clone()) * u
            }
            _ => spec.analysis_ms.clone(),
        };
        let id = u32::try_from(k + 1).map_err(|_| Error::Argument("too many frames".into()))?;
        let high = spec.priority_interval > 0 && k.is_multiple_of(spec.priority_interval);
        let job = ImageJob::new(id, t, spec.latency_ms.clone())
            .with_priority(high)
            .with_size(spec.size.clone())
            .with_ram(spec.ram.clone())
            .with_origin(spec.origin);
        frames.push(Frame {
            index: k,
            deadline: arrival.clone() + spec.latency_ms.clone(),
            arrival,
            job,
        });
        k += 1;
    }
    Ok(FrameStream { frames })
}

impl<S: Scalar> FrameStream<S> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frames arriving in `[(r-1)L, rL)` are offered at the start of round
    /// `r`, with relative deadline `min(deadline - rL, L)` floored at zero,
    /// so no work is promised past the end of its round. Round 0 is empty.
    pub fn rounds(&self, round_ms: &S) -> Result<Vec<RoundBatch<S>>> {
        if !round_ms.is_positive() {
            return Err(Error::Argument("round length must be > 0".into()));
        }
        let mut out = vec![RoundBatch {
            round: 0,
            start: S::zero(),
            workload: WorkloadInstance::new(Vec::new()),
        }];
        for f in &self.frames {
            // smallest r with arrival < r * L
            let mut r = out.len() - 1;
            while f.arrival >= round_ms.clone() * S::from_int(r as i64) {
                r += 1;
                if r >= out.len() {
                    out.push(RoundBatch {
                        round: r,
                        start: round_ms.clone() * S::from_int(r as i64),
                        workload: WorkloadInstance::new(Vec::new()),
                    });
                }
            }
            let batch = &mut out[r];
            let rel = min_of(f.deadline.clone() - batch.start.clone(), round_ms.clone());
            let mut job = f.job.clone();
            job.deadline = max_of(rel, S::zero());
            batch.workload.images.push(job);
        }
        Ok(out)
    }
}
