//! The monitored network: topology, sensors and the AC measurement function.

mod case;
mod measurement;

pub use case::{Branch, Bus, BusSlots, BusType, Generator, NetworkCase};
pub use measurement::{
    bus_injections, eval_h, eval_jacobian, neighborhood_sets, AcModel, MeasurementPlan, Neighborhood, Sensor,
    SensorKind, SensorLocation, StateVector,
};
