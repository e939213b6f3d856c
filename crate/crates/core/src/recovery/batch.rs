use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::{Event, Micros, PeriodClock};

/// Events with `t` in `[start, end)`; `offset` is the index of the first
/// event in the stream the batch was cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventBatch<'a> {
    pub index: u64,
    pub start: Micros,
    pub end: Micros,
    pub offset: usize,
    pub events: &'a [Event],
}

impl EventBatch<'_> {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Cuts a sorted stream into contiguous, non-overlapping batches of length
/// `t_batch_s`. Empty batches are kept so indices track wall time. The
/// stream is covered up to `span_end` if given, otherwise up to the last event.
pub fn batch_stream(events: &[Event], t_batch_s: f64, span_end: Option<Micros>) -> Result<Vec<EventBatch<'_>>> {
    let clock = PeriodClock::from_seconds(t_batch_s)?;
    if let Some(i) = events.windows(2).position(|w| w[1].t < w[0].t) {
        return Err(Error::Contract(format!("events not sorted by t at index {}", i + 1)));
    }
    let end = span_end.unwrap_or(0).max(events.last().map_or(0, |e| e.t + 1));
    let n = clock.count_for_span(end);
    let mut out = Vec::with_capacity(n as usize);
    let mut lo = 0usize;
    for q in 0..n {
        let (start, stop) = (clock.tick(q), clock.tick(q + 1));
        let hi = lo + events[lo..].partition_point(|e| e.t < stop);
        out.push(EventBatch { index: q, start, end: stop, offset: lo, events: &events[lo..hi] });
        lo = hi;
    }
    Ok(out)
}

/// The current batch plus up to `n_c` batches of history.
#[derive(Debug, Clone)]
pub struct BatchWindow<'a> {
    n_c: usize,
    batches: VecDeque<EventBatch<'a>>,
}

impl<'a> BatchWindow<'a> {
    pub fn new(n_c: usize) -> Result<Self> {
        if n_c == 0 {
            return Err(Error::Contract("window needs at least one batch of history".into()));
        }
        Ok(Self { n_c, batches: VecDeque::with_capacity(n_c + 1) })
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    /// Makes `batch` current, retiring the oldest history entry if full.
    pub fn push(&mut self, batch: EventBatch<'a>) {
        if self.batches.len() == self.n_c + 1 {
            self.batches.pop_front();
        }
        self.batches.push_back(batch);
    }

    pub fn current(&self) -> Option<&EventBatch<'a>> {
        self.batches.back()
    }

    pub fn previous(&self) -> Option<&EventBatch<'a>> {
        self.batches.len().checked_sub(2).and_then(|i| self.batches.get(i))
    }

    pub fn history_len(&self) -> usize {
        self.batches.len().saturating_sub(1)
    }

    /// Multiset union of the batches in the window, oldest first.
    pub fn union(&self) -> Vec<Event> {
        self.batches.iter().flat_map(|b| b.events.iter().copied()).collect()
    }
}
