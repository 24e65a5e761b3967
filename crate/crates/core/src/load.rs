//! Per-element computational load.
//!
//! An element costs its particle count plus a constant fluid share; the
//! constant is the measured ratio of element-kernel to particle-kernel time,
//! so loads are in "particle units" throughout.

use crate::error::{Error, Result};
use crate::mesh::GlobalElementIndex;
use crate::migration::RankState;

/// Ratio of per-element fluid work to per-particle work. Always positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidLoadConstant(f64);

impl FluidLoadConstant {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(FluidLoadConstant(value))
        } else {
            Err(Error::invalid(format!(
                "fluid load must be a positive finite ratio, got {value}"
            )))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Fluid-to-particle cost ratio from two kernel timings.
pub fn calibrate_fluid_load(
    element_kernel_time: f64,
    particle_kernel_time: f64,
) -> Result<FluidLoadConstant> {
    if !(element_kernel_time > 0.0) || !(particle_kernel_time > 0.0) {
        return Err(Error::invalid(format!(
            "kernel times must be positive, got {element_kernel_time} and {particle_kernel_time}"
        )));
    }
    FluidLoadConstant::new(element_kernel_time / particle_kernel_time)
}

/// Loads for a set of elements, parallel to their global indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementLoadArray {
    pub global_ids: Vec<GlobalElementIndex>,
    pub loads: Vec<f64>,
}

impl ElementLoadArray {
    pub fn new(global_ids: Vec<GlobalElementIndex>, loads: Vec<f64>) -> Result<Self> {
        if global_ids.len() != loads.len() {
            return Err(Error::contract(
                "load array ids and values must have equal length".to_string(),
            ));
        }
        if let Some(l) = loads.iter().find(|l| !(**l >= 0.0)) {
            return Err(Error::contract(format!("negative or NaN load {l}")));
        }
        Ok(ElementLoadArray { global_ids, loads })
    }

    /// A full-mesh array: element i carries `loads[i - 1]`.
    pub fn global(loads: Vec<f64>) -> Self {
        let global_ids = (1..=loads.len() as u32).map(GlobalElementIndex).collect();
        ElementLoadArray { global_ids, loads }
    }

    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.loads.iter().sum()
    }
}

/// Loads of a rank's owned elements in ascending global order:
/// bound-particle count plus the fluid constant, each.
pub fn compute_element_load(state: &RankState, fluid: FluidLoadConstant) -> ElementLoadArray {
    let mut counts: std::collections::BTreeMap<GlobalElementIndex, usize> =
        state.owned_ids().map(|gid| (gid, 0)).collect();
    for binding in &state.particles.bindings {
        if let Some(c) = counts.get_mut(binding) {
            *c += 1;
        } else {
            debug_assert!(false, "particle bound to an element this rank does not own");
        }
    }
    let (global_ids, loads): (Vec<_>, Vec<_>) = counts
        .into_iter()
        .map(|(gid, c)| (gid, c as f64 + fluid.value()))
        .unzip();
    ElementLoadArray { global_ids, loads }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, order_elements};
    use crate::migration::RankState;
    use crate::particles::init_particles;
    use crate::partition::ElementProcessorMap;

    #[test]
    fn calibration_is_a_plain_ratio() {
        let f = calibrate_fluid_load(3.6, 1.2).unwrap();
        assert!((f.value() - 3.0).abs() < 1e-12);
        assert!(calibrate_fluid_load(0.0, 1.0).is_err());
        assert!(calibrate_fluid_load(1.0, -2.0).is_err());
        assert!(FluidLoadConstant::new(0.0).is_err());
    }

    #[test]
    fn single_element_load_is_count_plus_constant() {
        let mesh = order_elements(&build_mesh([0.0; 3], [1.0, 0.1, 0.1], [1, 1, 1], 3).unwrap());
        let map = ElementProcessorMap::uniform(1, 1);
        let particles = init_particles(&mesh, [0.0, 0.0, 0.0], [1.0, 0.1, 0.1], 7, 1).unwrap();
        let state = RankState::initialize(0, &map, &mesh, particles);
        let loads = compute_element_load(&state, FluidLoadConstant::new(3.0).unwrap());
        assert_eq!(loads.loads, vec![10.0]);
    }

    #[test]
    fn loads_are_ordered_by_global_index_and_sum_correctly() {
        let mesh = order_elements(
            &build_mesh([-2.208, 0.0, 0.0], [6.0, 0.0802, 0.0802], [12, 1, 1], 5).unwrap(),
        );
        let map = ElementProcessorMap::uniform(3, 12);
        let particles =
            init_particles(&mesh, [-1.0, 0.0, 0.0], [-0.5, 0.0802, 0.0802], 36, 7).unwrap();
        let fluid = FluidLoadConstant::new(3.0).unwrap();
        let mut total_particles = 0.0;
        for rank in 0..3 {
            let state = RankState::initialize(rank, &map, &mesh, particles.clone());
            let loads = compute_element_load(&state, fluid);
            assert_eq!(loads.len(), 4);
            let ids: Vec<u32> = loads.global_ids.iter().map(|g| g.get()).collect();
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            assert_eq!(ids, sorted);
            for l in &loads.loads {
                assert!(*l >= 3.0);
            }
            total_particles += loads.total() - 4.0 * 3.0;
        }
        assert_eq!(total_particles, 36.0);
    }

    #[test]
    fn load_array_constructor_rejects_bad_values() {
        assert!(ElementLoadArray::new(vec![GlobalElementIndex(1)], vec![]).is_err());
        assert!(ElementLoadArray::new(vec![GlobalElementIndex(1)], vec![-1.0]).is_err());
        assert!(ElementLoadArray::new(vec![GlobalElementIndex(1)], vec![f64::NAN]).is_err());
    }
}
