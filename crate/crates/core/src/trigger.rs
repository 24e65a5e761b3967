//! Rebalancing triggers: fixed every-k-steps and the adaptive controller.
//!
//! The adaptive controller watches step times. Right after each rebalance it
//! runs an *evaluation phase* of `eval_interval` steps to measure the
//! post-balance baseline `t1` (and the phase's middle step `c1`); no trigger
//! can fire inside a phase. Afterwards it compares `t2`, the median of the
//! last three step times, against that baseline:
//!
//! * before the first adaptive rebalance it fires on relative slowdown,
//!   `(t2 - t1)/t1 > threshold`;
//! * after that it predicts the break-even interval
//!   `rebal = sqrt(2 * reinit_itv * lb_time / (t2 - t1))` one step after each
//!   rebalance, and fires when the elapsed interval reaches `rebal` or when
//!   the accumulated excess time (`degradation`) outgrows the cost of a
//!   rebalance itself.
//!
//! All inputs are simulated-cost step times, so every decision here is
//! deterministic and replayable.

use crate::error::{Error, Result};

/// Fire every `k` steps, skipping step 0 (the compulsory initial balance is
/// issued separately).
pub fn fixed_trigger(step: u64, k: u64) -> Result<bool> {
    if k < 1 {
        return Err(Error::invalid(format!(
            "fixed trigger interval must be >= 1, got {k}"
        )));
    }
    Ok(step > 0 && step % k == 0)
}

/// The one unconditional balance before step 1, once particles are placed.
pub fn compulsory_initial_balance() -> bool {
    true
}

/// Predicted steps until rebalancing pays for itself again. `+inf` when
/// `t2 <= t1` (performance did not degrade, so never rebalance on this
/// criterion alone).
pub fn rebal_estimate(reinit_itv: u64, lb_time: f64, t2: f64, t1: f64) -> f64 {
    if t2 <= t1 {
        f64::INFINITY
    } else {
        (2.0 * reinit_itv as f64 * lb_time / (t2 - t1)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    /// Relative slowdown that arms the first rebalance.
    pub threshold: f64,
    /// Length of the post-rebalance evaluation phase, in steps.
    pub eval_interval: u64,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            threshold: 0.05,
            eval_interval: 100,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!(
                "adaptive threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.eval_interval < 3 {
            return Err(Error::invalid(format!(
                "adaptive eval_interval must be >= 3, got {}",
                self.eval_interval
            )));
        }
        Ok(())
    }
}

/// State machine for the adaptive trigger. Call [`observe`](Self::observe)
/// once per completed step; when it returns true, rebalance and report the
/// cost back through [`record_rebalance`](Self::record_rebalance).
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveController {
    pub cfg: AdaptiveConfig,
    /// Mean step time over the current/most recent evaluation phase.
    pub t1: f64,
    /// Middle step index of that phase.
    pub c1: u64,
    /// Median of the last three step times.
    pub t2: f64,
    /// Cost of the most recent balancing step.
    pub lb_time: f64,
    /// Step of the most recent rebalance (0 = the compulsory initial one).
    pub r_step: u64,
    /// Steps spanned by the previous rebalance interval.
    pub reinit_itv: u64,
    /// Predicted steps between rebalances; +inf until computed.
    pub rebal: f64,
    /// Accumulated excess step time since the last rebalance.
    pub degradation: f64,
    /// Whether an adaptive (non-compulsory) rebalance has happened yet.
    pub lb_once: bool,
    window: [f64; 3],
    window_seen: u64,
    phase_sum: f64,
    phase_count: u64,
}

impl AdaptiveController {
    pub fn new(cfg: AdaptiveConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(AdaptiveController {
            cfg,
            t1: 0.0,
            c1: 0,
            t2: 0.0,
            lb_time: 0.0,
            r_step: 0,
            reinit_itv: 0,
            rebal: f64::INFINITY,
            degradation: 0.0,
            lb_once: false,
            window: [0.0; 3],
            window_seen: 0,
            phase_sum: 0.0,
            phase_count: 0,
        })
    }

    /// Feed the completed step's time; true means "rebalance now".
    pub fn observe(&mut self, step: u64, step_time: f64) -> bool {
        // Median window, padded with the first observation until full.
        if self.window_seen == 0 {
            self.window = [step_time; 3];
        } else {
            self.window.rotate_left(1);
            self.window[2] = step_time;
        }
        self.window_seen += 1;
        self.t2 = median3(self.window);

        let in_phase = step > self.r_step && step <= self.r_step + self.cfg.eval_interval;
        if in_phase {
            // The break-even estimate uses the *previous* phase's baseline,
            // so compute it before this phase's first sample lands in t1.
            if step == self.r_step + 1 && self.lb_once {
                self.rebal = rebal_estimate(self.reinit_itv, self.lb_time, self.t2, self.t1);
            }
            self.phase_sum += step_time;
            self.phase_count += 1;
            self.t1 = self.phase_sum / self.phase_count as f64;
            self.c1 = (self.r_step + 1 + step) / 2;
            return false;
        }

        if !self.lb_once {
            (self.t2 - self.t1) / self.t1 > self.cfg.threshold
        } else {
            self.degradation = (self.degradation + (self.t2 - self.t1)).max(0.0);
            (step - self.r_step) as f64 >= self.rebal || self.degradation > self.lb_time
        }
    }

    /// Report a performed rebalance and its cost; starts a new evaluation
    /// phase at `step + 1`.
    pub fn record_rebalance(&mut self, step: u64, lb_cost: f64) {
        // The first adaptive interval is measured from the phase midpoint,
        // where degradation plausibly began; later ones from rebalance to
        // rebalance.
        self.reinit_itv = if self.lb_once {
            step - self.r_step
        } else {
            step - self.c1
        };
        self.r_step = step;
        self.lb_time = lb_cost;
        self.degradation = 0.0;
        self.lb_once = true;
        self.phase_sum = 0.0;
        self.phase_count = 0;
    }

    /// Report the compulsory balance performed before step 1.
    pub fn record_initial_balance(&mut self, lb_cost: f64) {
        self.r_step = 0;
        self.lb_time = lb_cost;
    }
}

fn median3(mut w: [f64; 3]) -> f64 {
    w.sort_by(|a, b| a.partial_cmp(b).expect("step times are ordered"));
    w[1]
}

/// When to rebalance, as configured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TriggerPolicy {
    Fixed { k: u64 },
    Adaptive(AdaptiveConfig),
    Never,
}

/// Runtime trigger driver: one enum so the simulation loop stays policy-blind.
#[derive(Debug, Clone)]
pub enum TriggerController {
    Fixed { k: u64 },
    Adaptive(AdaptiveController),
    Never,
}

impl TriggerController {
    pub fn new(policy: TriggerPolicy) -> Result<Self> {
        Ok(match policy {
            TriggerPolicy::Fixed { k } => {
                fixed_trigger(1, k)?; // validates k
                TriggerController::Fixed { k }
            }
            TriggerPolicy::Adaptive(cfg) => {
                TriggerController::Adaptive(AdaptiveController::new(cfg)?)
            }
            TriggerPolicy::Never => TriggerController::Never,
        })
    }

    /// Whether this policy performs the compulsory initial balance at all.
    /// `Never` means what it says: the run stays on its initial uniform map.
    pub fn balances_at_start(&self) -> bool {
        !matches!(self, TriggerController::Never)
    }

    pub fn observe(&mut self, step: u64, step_time: f64) -> bool {
        match self {
            TriggerController::Fixed { k } => {
                fixed_trigger(step, *k).expect("interval validated at construction")
            }
            TriggerController::Adaptive(c) => c.observe(step, step_time),
            TriggerController::Never => false,
        }
    }

    pub fn record_rebalance(&mut self, step: u64, lb_cost: f64) {
        if let TriggerController::Adaptive(c) = self {
            c.record_rebalance(step, lb_cost);
        }
    }

    pub fn record_initial_balance(&mut self, lb_cost: f64) {
        if let TriggerController::Adaptive(c) = self {
            c.record_initial_balance(lb_cost);
        }
    }
}
