//! Ensembles simulated in parallel over paths. Path `i` draws from the stream
//! `(seed, i)`, so the result is identical to a serial run.

use neqdiff_core::sde::{ControlField, InitialLaw, PathSimulator, SdeSystem, SimulationConfig, TrajectoryEnsemble};
use neqdiff_core::Result;
use rayon::prelude::*;

pub fn simulate(
    system: &dyn SdeSystem,
    control: Option<&dyn ControlField>,
    init: &dyn InitialLaw,
    config: &SimulationConfig,
) -> Result<TrajectoryEnsemble> {
    let sim = PathSimulator::new(system, control, init, config)?;
    let records = (0..sim.paths()).into_par_iter().map(|i| sim.run_path(i)).collect::<Result<Vec<_>>>()?;
    sim.assemble(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use neqdiff_core::model::{DiffusionSpec, QuadraticPotential, Schedule};
    use neqdiff_core::sde::{BrownianSystem, Record};
    use std::sync::Arc;

    #[test]
    fn parallel_matches_serial_bit_for_bit() {
        let pot = Arc::new(QuadraticPotential::new(1, Schedule::ramp(1.0, 2.0, 1.0)));
        let spec = DiffusionSpec::new(1, pot, 1.0, 1.0).unwrap();
        let sys = BrownianSystem::forward(&spec);
        let init = spec.gibbs_gaussian(0.0).unwrap();
        let cfg = SimulationConfig::new(500, 1e-2, 9).with_record(Record::Every(10));
        let serial = neqdiff_core::sde::simulate(&sys, None, &init, &cfg).unwrap();
        assert_eq!(simulate(&sys, None, &init, &cfg).unwrap(), serial);
    }
}
