/// Linear interpolation from `start` to `end` over `decay_steps`, then held at `end`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl Schedule {
    pub fn new(start: f64, end: f64, decay_steps: u64) -> Self {
        Schedule {
            start,
            end,
            decay_steps,
        }
    }

    pub fn value(&self, step: u64) -> f64 {
        linear_schedule(step, self.start, self.end, self.decay_steps)
    }
}

pub fn linear_schedule(step: u64, start: f64, end: f64, decay_steps: u64) -> f64 {
    if decay_steps == 0 || step >= decay_steps {
        return end;
    }
    start + (end - start) * (step as f64 / decay_steps as f64)
}
