//! Run configuration: defaults, flat-file parsing, and validation.
//!
//! Config files are flat `key = value` text with `#` comments. Every key has
//! a default tuned to the canonical 12-element strip scenario, so an empty
//! file (or none at all) is a valid run. CLI flags are merged on top of the
//! file by building a second, sparse [`RunConfigBuilder`] and letting it win.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::comm::ExecMode;
use crate::error::{Error, Result};
use crate::mesh::{build_mesh, order_elements, Mesh};
use crate::partition::PartitionConfig;
use crate::trigger::{AdaptiveConfig, TriggerPolicy};

/// Which partitioner cuts the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Centralized,
    Distributed,
    Hybrid,
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centralized" => Ok(Algorithm::Centralized),
            "distributed" => Ok(Algorithm::Distributed),
            "hybrid" => Ok(Algorithm::Hybrid),
            other => Err(Error::invalid(format!(
                "unknown algorithm `{other}` (expected centralized, distributed, or hybrid)"
            ))),
        }
    }
}

/// Where step times come from: the deterministic cost model, or measured
/// wall clock (for overhead-scaling experiments; not reproducible).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimingMode {
    Model,
    Wall,
}

impl FromStr for TimingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(TimingMode::Model),
            "wall" => Ok(TimingMode::Wall),
            other => Err(Error::invalid(format!(
                "unknown timing mode `{other}` (expected model or wall)"
            ))),
        }
    }
}

/// Trigger selection before the adaptive knobs are folded in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TriggerKind {
    Fixed(u64),
    Adaptive,
    Never,
}

fn parse_trigger(s: &str) -> Result<TriggerKind> {
    if s == "adaptive" {
        return Ok(TriggerKind::Adaptive);
    }
    if s == "never" {
        return Ok(TriggerKind::Never);
    }
    if let Some(k) = s.strip_prefix("fixed:") {
        let k: u64 = k
            .parse()
            .map_err(|_| Error::invalid(format!("bad fixed trigger interval `{k}`")))?;
        if k < 1 {
            return Err(Error::invalid("fixed trigger interval must be >= 1"));
        }
        return Ok(TriggerKind::Fixed(k));
    }
    Err(Error::invalid(format!(
        "unknown trigger `{s}` (expected fixed:<k>, adaptive, or never)"
    )))
}

/// Fully resolved, validated run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain_lo: [f64; 3],
    pub domain_hi: [f64; 3],
    pub elements: [usize; 3],
    pub points_per_axis: usize,
    pub particles: usize,
    pub slab_lo: [f64; 3],
    pub slab_hi: [f64; 3],
    pub seed: u64,
    pub steps: u64,
    pub dt: f64,
    /// Expansion rate of the surrogate flow (1/time). Resolved: if the config
    /// leaves it unset, a rate is derived so the slab's right edge covers 90%
    /// of the domain by the final step.
    pub rate: f64,
    /// Steps at the start of the run during which the flow is frozen.
    pub rate_onset: u64,
    pub fluid_load: f64,
    pub c_elem: f64,
    pub c_part: f64,
    pub np: usize,
    pub lelt: usize,
    pub algorithm: Algorithm,
    pub trigger: TriggerPolicy,
    /// Simulated cost charged per balancing event under `TimingMode::Model`.
    pub lb_overhead: f64,
    pub timing: TimingMode,
    pub exec_mode: ExecMode,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn nelgt(&self) -> usize {
        self.elements[0] * self.elements[1] * self.elements[2]
    }

    pub fn partition_config(&self) -> PartitionConfig {
        PartitionConfig::new(self.np, self.lelt)
    }

    /// Build and order the configured mesh.
    pub fn mesh(&self) -> Result<Mesh> {
        Ok(order_elements(&build_mesh(
            self.domain_lo,
            self.domain_hi,
            self.elements,
            self.points_per_axis,
        )?))
    }

    /// Flow rate in effect at `step` (1-based).
    pub fn rate_at(&self, step: u64) -> f64 {
        if step > self.rate_onset {
            self.rate
        } else {
            0.0
        }
    }
}

/// Sparse, mergeable view of a config: every field optional.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfigBuilder {
    pub domain_lo: Option<[f64; 3]>,
    pub domain_hi: Option<[f64; 3]>,
    pub elements: Option<[usize; 3]>,
    pub points_per_axis: Option<usize>,
    pub particles: Option<usize>,
    pub slab_lo: Option<[f64; 3]>,
    pub slab_hi: Option<[f64; 3]>,
    pub seed: Option<u64>,
    pub steps: Option<u64>,
    pub dt: Option<f64>,
    pub rate: Option<f64>,
    pub rate_onset: Option<u64>,
    pub fluid_load: Option<f64>,
    pub c_elem: Option<f64>,
    pub c_part: Option<f64>,
    pub np: Option<usize>,
    pub lelt: Option<usize>,
    pub algorithm: Option<Algorithm>,
    trigger: Option<TriggerKind>,
    pub adaptive_threshold: Option<f64>,
    pub adaptive_eval_interval: Option<u64>,
    pub lb_overhead: Option<f64>,
    pub timing: Option<TimingMode>,
    pub exec_mode: Option<ExecMode>,
    pub out: Option<PathBuf>,
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value `{value}` for key `{key}`")))
}

fn parse_f64_triple(key: &str, value: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::invalid(format!(
            "key `{key}` wants three comma-separated values, got `{value}`"
        )));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_num(key, p)?;
    }
    Ok(out)
}

fn parse_usize_triple(key: &str, value: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::invalid(format!(
            "key `{key}` wants three comma-separated values, got `{value}`"
        )));
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_num(key, p)?;
    }
    Ok(out)
}

impl RunConfigBuilder {
    /// Parse flat `key = value` text. `#` starts a comment; blank lines are
    /// skipped; unknown keys are rejected (they are always typos).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut b = RunConfigBuilder::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            b.set(key, value)
                .map_err(|e| Error::invalid(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(b)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("reading {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Apply one `key = value` pair; the CLI reuses this so flag parsing and
    /// file parsing agree on formats and error messages.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "domain_lo" => self.domain_lo = Some(parse_f64_triple(key, value)?),
            "domain_hi" => self.domain_hi = Some(parse_f64_triple(key, value)?),
            "elements" => self.elements = Some(parse_usize_triple(key, value)?),
            "points_per_axis" => self.points_per_axis = Some(parse_num(key, value)?),
            "particles" => self.particles = Some(parse_num(key, value)?),
            "slab_lo" => self.slab_lo = Some(parse_f64_triple(key, value)?),
            "slab_hi" => self.slab_hi = Some(parse_f64_triple(key, value)?),
            "seed" => self.seed = Some(parse_num(key, value)?),
            "steps" => self.steps = Some(parse_num(key, value)?),
            "dt" => self.dt = Some(parse_num(key, value)?),
            "rate" => self.rate = Some(parse_num(key, value)?),
            "rate_onset" => self.rate_onset = Some(parse_num(key, value)?),
            "fluid_load" => self.fluid_load = Some(parse_num(key, value)?),
            "c_elem" => self.c_elem = Some(parse_num(key, value)?),
            "c_part" => self.c_part = Some(parse_num(key, value)?),
            "np" => self.np = Some(parse_num(key, value)?),
            "lelt" => self.lelt = Some(parse_num(key, value)?),
            "algorithm" => self.algorithm = Some(value.parse()?),
            "trigger" => self.trigger = Some(parse_trigger(value)?),
            "adaptive.threshold" => self.adaptive_threshold = Some(parse_num(key, value)?),
            "adaptive.eval_interval" => self.adaptive_eval_interval = Some(parse_num(key, value)?),
            "lb_overhead" => self.lb_overhead = Some(parse_num(key, value)?),
            "timing" => self.timing = Some(value.parse()?),
            "exec_mode" => self.exec_mode = Some(value.parse().map_err(Error::InvalidConfig)?),
            "out" => self.out = Some(PathBuf::from(value)),
            other => {
                return Err(Error::invalid(format!("unknown key `{other}`")));
            }
        }
        Ok(())
    }

    pub fn set_trigger_spec(&mut self, spec: &str) -> Result<()> {
        self.trigger = Some(parse_trigger(spec)?);
        Ok(())
    }

    /// Overlay `other` on `self`; `other`'s set fields win.
    pub fn merge(mut self, other: RunConfigBuilder) -> RunConfigBuilder {
        macro_rules! take {
            ($($f:ident),*) => {
                $(if other.$f.is_some() { self.$f = other.$f; })*
            };
        }
        take!(
            domain_lo,
            domain_hi,
            elements,
            points_per_axis,
            particles,
            slab_lo,
            slab_hi,
            seed,
            steps,
            dt,
            rate,
            rate_onset,
            fluid_load,
            c_elem,
            c_part,
            np,
            lelt,
            algorithm,
            trigger,
            adaptive_threshold,
            adaptive_eval_interval,
            lb_overhead,
            timing,
            exec_mode,
            out
        );
        self
    }

    /// Resolve defaults and validate the result.
    pub fn build(self) -> Result<RunConfig> {
        let domain_lo = self.domain_lo.unwrap_or([-2.208, 0.0, 0.0]);
        let domain_hi = self.domain_hi.unwrap_or([6.0, 0.0802, 0.0802]);
        let elements = self.elements.unwrap_or([12, 1, 1]);
        let points_per_axis = self.points_per_axis.unwrap_or(5);
        let particles = self.particles.unwrap_or(1000);
        let slab_lo = self.slab_lo.unwrap_or([-1.0, domain_lo[1], domain_lo[2]]);
        let slab_hi = self.slab_hi.unwrap_or([-0.5, domain_hi[1], domain_hi[2]]);
        let seed = self.seed.unwrap_or(7);
        let steps = self.steps.unwrap_or(100);
        let dt = self.dt.unwrap_or(1.0);
        let rate_onset = self.rate_onset.unwrap_or(0);
        let fluid_load = self.fluid_load.unwrap_or(3.0);
        let c_part = self.c_part.unwrap_or(1.0);
        let c_elem = self.c_elem.unwrap_or(fluid_load * c_part);
        let np = self.np.unwrap_or(3);
        let nelgt = elements[0] * elements[1] * elements[2];
        let lelt = self.lelt.unwrap_or(nelgt);
        let algorithm = self.algorithm.unwrap_or(Algorithm::Hybrid);
        let adaptive = AdaptiveConfig {
            threshold: self.adaptive_threshold.unwrap_or(0.05),
            eval_interval: self.adaptive_eval_interval.unwrap_or(100),
        };
        let trigger = match self.trigger.unwrap_or(TriggerKind::Adaptive) {
            TriggerKind::Fixed(k) => TriggerPolicy::Fixed { k },
            TriggerKind::Adaptive => TriggerPolicy::Adaptive(adaptive),
            TriggerKind::Never => TriggerPolicy::Never,
        };
        let lb_overhead = self.lb_overhead.unwrap_or(2.0);
        let timing = self.timing.unwrap_or(TimingMode::Model);
        let exec_mode = self.exec_mode.unwrap_or(ExecMode::Sequential);

        for a in 0..3 {
            if elements[a] < 1 {
                return Err(Error::invalid("element counts must be >= 1"));
            }
            if !(domain_hi[a] > domain_lo[a]) {
                return Err(Error::invalid("domain extents are inverted or empty"));
            }
        }
        if points_per_axis < 2 {
            return Err(Error::invalid("points_per_axis must be >= 2"));
        }
        if steps < 1 {
            return Err(Error::invalid("steps must be >= 1"));
        }
        if np < 1 {
            return Err(Error::invalid("np must be >= 1"));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid("dt must be positive and finite"));
        }
        if !(fluid_load > 0.0) || !fluid_load.is_finite() {
            return Err(Error::invalid("fluid_load must be positive and finite"));
        }
        if !(c_part > 0.0) || !(c_elem > 0.0) {
            return Err(Error::invalid("cost coefficients must be positive"));
        }
        if c_elem / c_part != fluid_load {
            return Err(Error::invalid(format!(
                "cost model inconsistent: c_elem/c_part = {} but fluid_load = {} \
                 (the per-element cost is defined as fluid_load per-particle costs)",
                c_elem / c_part,
                fluid_load
            )));
        }
        if let Some(r) = self.rate {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::invalid("rate must be finite and >= 0"));
            }
        }
        // Capacity check up front so a doomed run fails before any stepping,
        // with the same error the partitioners would raise.
        PartitionConfig::new(np, lelt).check_feasible(nelgt)?;
        if let TriggerPolicy::Adaptive(a) = trigger {
            a.validate()?;
        }
        if !(lb_overhead >= 0.0) || !lb_overhead.is_finite() {
            return Err(Error::invalid("lb_overhead must be finite and >= 0"));
        }

        let rate = match self.rate {
            Some(r) => r,
            None => auto_rate(
                domain_lo, domain_hi, slab_lo, slab_hi, steps, rate_onset, dt,
            ),
        };

        Ok(RunConfig {
            domain_lo,
            domain_hi,
            elements,
            points_per_axis,
            particles,
            slab_lo,
            slab_hi,
            seed,
            steps,
            dt,
            rate,
            rate_onset,
            fluid_load,
            c_elem,
            c_part,
            np,
            lelt,
            algorithm,
            trigger,
            lb_overhead,
            timing,
            exec_mode,
            out: self.out,
        })
    }
}

/// Pick an expansion rate so the slab's right edge lands at 90% of the domain
/// on the last moving step. The surrogate flow grows distance-from-slab-left
/// geometrically: after n steps the edge offset is multiplied by
/// `(1 + rate*dt)^n`.
fn auto_rate(
    domain_lo: [f64; 3],
    domain_hi: [f64; 3],
    slab_lo: [f64; 3],
    slab_hi: [f64; 3],
    steps: u64,
    rate_onset: u64,
    dt: f64,
) -> f64 {
    let left = slab_lo[0];
    let edge = slab_hi[0].min(domain_hi[0]);
    let target = domain_lo[0] + 0.9 * (domain_hi[0] - domain_lo[0]);
    let moving_steps = steps.saturating_sub(rate_onset);
    if moving_steps == 0 || edge <= left || target <= edge {
        return 0.0;
    }
    let growth = (target - left) / (edge - left);
    (growth.powf(1.0 / moving_steps as f64) - 1.0) / dt
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_builds_the_canonical_strip() {
        let cfg = RunConfigBuilder::from_text("").unwrap().build().unwrap();
        assert_eq!(cfg.elements, [12, 1, 1]);
        assert_eq!(cfg.nelgt(), 12);
        assert_eq!(cfg.np, 3);
        assert_eq!(cfg.lelt, 12);
        assert_eq!(cfg.fluid_load, 3.0);
        assert_eq!(cfg.c_elem, 3.0);
        assert_eq!(cfg.c_part, 1.0);
        assert_eq!(cfg.algorithm, Algorithm::Hybrid);
        assert_eq!(
            cfg.trigger,
            TriggerPolicy::Adaptive(AdaptiveConfig::default())
        );
        assert!(cfg.rate > 0.0, "auto rate must engage for the default slab");
        assert!(cfg.mesh().is_ok());
    }

    #[test]
    fn auto_rate_reaches_ninety_percent_of_the_domain() {
        let cfg = RunConfigBuilder::from_text("steps = 80")
            .unwrap()
            .build()
            .unwrap();
        let left = cfg.slab_lo[0];
        let mut edge = cfg.slab_hi[0];
        for _ in 0..cfg.steps {
            edge += cfg.rate * (edge - left) * cfg.dt;
        }
        let target = cfg.domain_lo[0] + 0.9 * (cfg.domain_hi[0] - cfg.domain_lo[0]);
        assert!(
            (edge - target).abs() < 1e-6,
            "edge ended at {edge}, wanted {target}"
        );
    }

    #[test]
    fn comments_and_spacing_are_tolerated() {
        let text = "
            # scenario knobs
            np = 4          # four ranks
            elements= 8, 2 ,1
            trigger =fixed:25
            out = runs/trace.csv
        ";
        let cfg = RunConfigBuilder::from_text(text).unwrap().build().unwrap();
        assert_eq!(cfg.np, 4);
        assert_eq!(cfg.elements, [8, 2, 1]);
        assert_eq!(cfg.trigger, TriggerPolicy::Fixed { k: 25 });
        assert_eq!(cfg.out.as_deref(), Some(Path::new("runs/trace.csv")));
    }

    #[test]
    fn unknown_keys_and_malformed_lines_are_rejected() {
        assert!(RunConfigBuilder::from_text("granularity = 9").is_err());
        assert!(RunConfigBuilder::from_text("just some words").is_err());
        assert!(RunConfigBuilder::from_text("np = three").is_err());
        assert!(RunConfigBuilder::from_text("elements = 2,2").is_err());
        assert!(RunConfigBuilder::from_text("trigger = sometimes").is_err());
        assert!(RunConfigBuilder::from_text("trigger = fixed:0").is_err());
        assert!(RunConfigBuilder::from_text("algorithm = magic").is_err());
    }

    #[test]
    fn inconsistent_cost_model_is_rejected() {
        let r = RunConfigBuilder::from_text("c_elem = 5\nc_part = 1\nfluid_load = 3")
            .unwrap()
            .build();
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
        // Scaling both coefficients together keeps the ratio and passes.
        let cfg = RunConfigBuilder::from_text("c_elem = 6\nc_part = 2\nfluid_load = 3")
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(cfg.c_elem, 6.0);
    }

    #[test]
    fn capacity_shortfall_is_infeasible_not_invalid() {
        let r = RunConfigBuilder::from_text("np = 2\nlelt = 5")
            .unwrap()
            .build();
        assert!(matches!(r, Err(Error::Infeasible { .. })), "2*5 < 12");
    }

    #[test]
    fn overrides_win_field_by_field() {
        let file = RunConfigBuilder::from_text("np = 4\nsteps = 50\nseed = 1").unwrap();
        let mut cli = RunConfigBuilder::default();
        cli.np = Some(6);
        cli.set_trigger_spec("never").unwrap();
        let cfg = file.merge(cli).build().unwrap();
        assert_eq!(cfg.np, 6);
        assert_eq!(cfg.steps, 50, "untouched file keys survive");
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.trigger, TriggerPolicy::Never);
    }

    #[test]
    fn adaptive_knobs_flow_into_the_policy() {
        let cfg = RunConfigBuilder::from_text(
            "trigger = adaptive\nadaptive.threshold = 0.1\nadaptive.eval_interval = 25",
        )
        .unwrap()
        .build()
        .unwrap();
        assert_eq!(
            cfg.trigger,
            TriggerPolicy::Adaptive(AdaptiveConfig {
                threshold: 0.1,
                eval_interval: 25
            })
        );
        assert!(RunConfigBuilder::from_text("adaptive.threshold = 1.5")
            .unwrap()
            .build()
            .is_err());
    }

    #[test]
    fn explicit_rate_disables_the_auto_rule() {
        let cfg = RunConfigBuilder::from_text("rate = 0")
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(cfg.rate, 0.0);
        assert_eq!(cfg.rate_at(1), 0.0);
        let cfg = RunConfigBuilder::from_text("rate = 0.25\nrate_onset = 10")
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(cfg.rate_at(10), 0.0, "frozen through the onset step");
        assert_eq!(cfg.rate_at(11), 0.25);
    }
}
