use serde::{Deserialize, Serialize};

use crate::scalar::{third_power, Real};

/// First times `T_n = inf{t : e(t) < 3^{-n}}`, `n = 1..=max_level`.
#[derive(Debug, Clone)]
pub struct CrossingTracker<T> {
    times: Vec<Option<T>>,
    next: u32,
}

impl<T: Real> CrossingTracker<T> {
    pub fn new(max_level: u32) -> Self {
        Self {
            times: vec![None; max_level as usize],
            next: 1,
        }
    }

    pub fn observe(&mut self, time: T, distance: T) {
        while (self.next as usize) <= self.times.len() && distance < third_power::<T>(self.next) {
            self.times[self.next as usize - 1] = Some(time);
            self.next += 1;
        }
    }

    /// `times()[n - 1]` is `T_n`, or `None` if level `n` was never crossed.
    pub fn times(&self) -> &[Option<T>] {
        &self.times
    }

    pub fn into_times(self) -> Vec<Option<T>> {
        self.times
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LadderDirection {
    Down,
    Up,
}

/// Arrival at nominal level `3^{-level}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderEvent<T> {
    pub time: T,
    pub level: u32,
    pub distance: T,
    pub direction: LadderDirection,
}

/// Stopping times `τ_0 < τ_1 < ...` on the triadic ladder below `3^{-N}`.
///
/// `τ_0` is the first time `e ≤ 3^{-N}`. From level `L` the next event is the
/// first time `e` reaches `3^{-(L+1)}` or, when `L > N`, climbs back to
/// `3^{-(L-1)}`. Several rungs passed within one step are reported as
/// separate events sharing the step's time.
#[derive(Debug, Clone)]
pub struct LadderTracker<T> {
    base: u32,
    max_level: u32,
    current: Option<u32>,
    events: Vec<LadderEvent<T>>,
}

impl<T: Real> LadderTracker<T> {
    pub fn new(base: u32, max_level: u32) -> Self {
        Self {
            base,
            max_level: max_level.max(base),
            current: None,
            events: Vec::new(),
        }
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn current_level(&self) -> Option<u32> {
        self.current
    }

    pub fn observe(&mut self, time: T, distance: T) {
        let level = match self.current {
            Some(l) => l,
            None => {
                if distance > third_power::<T>(self.base) {
                    return;
                }
                self.push(time, self.base, distance, LadderDirection::Down);
                self.base
            }
        };
        let mut level = level;
        loop {
            if level < self.max_level && distance <= third_power::<T>(level + 1) {
                level += 1;
                self.push(time, level, distance, LadderDirection::Down);
            } else if level > self.base && distance >= third_power::<T>(level - 1) {
                level -= 1;
                self.push(time, level, distance, LadderDirection::Up);
            } else {
                break;
            }
        }
        self.current = Some(level);
    }

    fn push(&mut self, time: T, level: u32, distance: T, direction: LadderDirection) {
        self.events.push(LadderEvent {
            time,
            level,
            distance,
            direction,
        });
    }

    pub fn events(&self) -> &[LadderEvent<T>] {
        &self.events
    }

    pub fn into_events(self) -> Vec<LadderEvent<T>> {
        self.events
    }
}
