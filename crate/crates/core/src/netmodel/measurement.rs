use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::case::NetworkCase;
use crate::estimator::MeasurementModel;
use crate::{linalg, Error, Result};

/// Per-bus voltage magnitudes (pu) and angles (rad), in case bus order.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
}

impl StateVector {
    /// All magnitudes 1, all angles 0.
    pub fn flat(case: &NetworkCase) -> Self {
        let n = case.bus_count();
        Self {
            vm: vec![1.0; n],
            va: vec![0.0; n],
        }
    }

    /// Flat angles with generator buses at their voltage setpoints.
    pub fn setpoints(case: &NetworkCase) -> Self {
        let mut s = Self::flat(case);
        for g in case.generators() {
            let k = case.index_of(g.bus).expect("validated generator bus");
            s.vm[k] = g.v_set;
        }
        s
    }

    pub fn to_flat(&self, case: &NetworkCase) -> DVector<f64> {
        let mut out = DVector::zeros(case.state_dim());
        for k in 0..case.bus_count() {
            let slots = case.slots(k);
            out[slots.vm] = self.vm[k];
            if let Some(a) = slots.va {
                out[a] = self.va[k];
            }
        }
        out
    }

    pub fn from_flat(case: &NetworkCase, x: &DVector<f64>) -> Result<Self> {
        if x.len() != case.state_dim() {
            return Err(Error::dim("state vector", case.state_dim(), x.len()));
        }
        let n = case.bus_count();
        let mut s = Self {
            vm: vec![0.0; n],
            va: vec![0.0; n],
        };
        for k in 0..n {
            let slots = case.slots(k);
            s.vm[k] = x[slots.vm];
            s.va[k] = slots.va.map_or(0.0, |a| x[a]);
        }
        Ok(s)
    }

    pub fn check(&self, case: &NetworkCase) -> Result<()> {
        let n = case.bus_count();
        if self.vm.len() != n || self.va.len() != n {
            return Err(Error::dim("state vector buses", n, self.vm.len().min(self.va.len())));
        }
        if self.vm.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Validation("voltage magnitudes must be positive".into()));
        }
        if self.va[case.reference()] != 0.0 {
            return Err(Error::Validation("reference angle must be exactly 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SensorKind {
    /// Active power flow at the measured end of a branch.
    PFlow,
    /// Reactive power flow at the measured end of a branch.
    QFlow,
    VMag,
    PInj,
    QInj,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SensorLocation {
    /// Bus position in case order.
    Bus(usize),
    /// Branch index, measured at the `from` end when `at_from` is set.
    Branch { index: usize, at_from: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub kind: SensorKind,
    pub location: SensorLocation,
    pub sigma: f64,
}

/// How far from a generator bus the attacker's masked sensor set reaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighborhood {
    /// Sensors at the bus and flows on its incident branches.
    Incident,
    /// `Incident` plus injection sensors at adjacent buses. This is exactly the
    /// set of sensors whose reading depends on the bus state.
    #[default]
    OneHop,
}

/// Ordered sensor list with noise levels, validated against a case.
#[derive(Debug, Clone)]
pub struct MeasurementPlan {
    sensors: Vec<Sensor>,
    sigma: DVector<f64>,
}

impl MeasurementPlan {
    pub fn new(case: &NetworkCase, sensors: Vec<Sensor>) -> Result<Self> {
        for s in &sensors {
            if !(s.sigma > 0.0) {
                return Err(Error::Validation("sensor noise levels must be positive".into()));
            }
            let ok = match (s.kind, s.location) {
                (SensorKind::VMag | SensorKind::PInj | SensorKind::QInj, SensorLocation::Bus(b)) => {
                    b < case.bus_count()
                }
                (SensorKind::PFlow | SensorKind::QFlow, SensorLocation::Branch { index, .. }) => {
                    index < case.branches().len()
                }
                _ => false,
            };
            if !ok {
                return Err(Error::Validation(format!("sensor {s:?} does not fit the case")));
            }
        }
        let n = case.state_dim();
        if sensors.len() <= n {
            return Err(Error::Validation(format!(
                "{} sensors cannot overdetermine {} states",
                sensors.len(),
                n
            )));
        }
        let sigma = DVector::from_iterator(sensors.len(), sensors.iter().map(|s| s.sigma));
        let plan = Self { sensors, sigma };
        let flat = StateVector::flat(case);
        let j = eval_jacobian(case, &plan, &flat)?;
        let rank = linalg::rank(&j);
        if rank < n {
            return Err(Error::Validation(format!(
                "plan is unobservable at flat start: Jacobian rank {rank} < {n}"
            )));
        }
        Ok(plan)
    }

    /// Voltage magnitude at every bus, P and Q injection at every bus, and P
    /// and Q flow at the from-end of every branch.
    pub fn full(case: &NetworkCase, sigma_voltage: f64, sigma_power: f64) -> Result<Self> {
        let nb = case.bus_count();
        let nl = case.branches().len();
        let mut sensors = Vec::with_capacity(3 * nb + 2 * nl);
        let bus = |kind, b, sigma| Sensor {
            kind,
            location: SensorLocation::Bus(b),
            sigma,
        };
        sensors.extend((0..nb).map(|b| bus(SensorKind::VMag, b, sigma_voltage)));
        sensors.extend((0..nb).map(|b| bus(SensorKind::PInj, b, sigma_power)));
        sensors.extend((0..nb).map(|b| bus(SensorKind::QInj, b, sigma_power)));
        for kind in [SensorKind::PFlow, SensorKind::QFlow] {
            sensors.extend((0..nl).map(|index| Sensor {
                kind,
                location: SensorLocation::Branch {
                    index,
                    at_from: true,
                },
                sigma: sigma_power,
            }));
        }
        Self::new(case, sensors)
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    /// Noise standard deviations in sensor order.
    pub fn sigma(&self) -> &DVector<f64> {
        &self.sigma
    }

    /// Diagonal of the precision matrix.
    pub fn precision(&self) -> DVector<f64> {
        self.sigma.map(|s| 1.0 / (s * s))
    }
}

/// Flow leaving bus `near` on branch `k`, with gradients with respect to
/// `[|V_near|, |V_far|, theta_near, theta_far]`.
fn branch_flow(case: &NetworkCase, k: usize, at_from: bool, vm: &[f64], va: &[f64]) -> Flow {
    let br = &case.branches()[k];
    let (f, t) = case.branch_ends(k);
    let (i, j) = if at_from { (f, t) } else { (t, f) };
    let z2 = br.r * br.r + br.x * br.x;
    let g = br.r / z2;
    let b = -br.x / z2;
    let bc = 0.5 * br.b;
    let (vi, vj) = (vm[i], vm[j]);
    let th = va[i] - va[j];
    let (s, c) = th.sin_cos();
    let gc_bs = g * c + b * s;
    let gs_bc = g * s - b * c;
    Flow {
        near: i,
        far: j,
        p: vi * vi * g - vi * vj * gc_bs,
        q: -vi * vi * (b + bc) - vi * vj * gs_bc,
        dp: [2.0 * vi * g - vj * gc_bs, -vi * gc_bs, vi * vj * gs_bc, -vi * vj * gs_bc],
        dq: [
            -2.0 * vi * (b + bc) - vj * gs_bc,
            -vi * gs_bc,
            -vi * vj * gc_bs,
            vi * vj * gc_bs,
        ],
    }
}

struct Flow {
    near: usize,
    far: usize,
    p: f64,
    q: f64,
    dp: [f64; 4],
    dq: [f64; 4],
}

fn check_dims(case: &NetworkCase, x: &StateVector) -> Result<()> {
    let n = case.bus_count();
    if x.vm.len() != n {
        return Err(Error::dim("voltage magnitudes", n, x.vm.len()));
    }
    if x.va.len() != n {
        return Err(Error::dim("voltage angles", n, x.va.len()));
    }
    Ok(())
}

fn sensor_value(case: &NetworkCase, sensor: &Sensor, x: &StateVector) -> f64 {
    match (sensor.kind, sensor.location) {
        (SensorKind::VMag, SensorLocation::Bus(b)) => x.vm[b],
        (SensorKind::PInj | SensorKind::QInj, SensorLocation::Bus(b)) => {
            let active = sensor.kind == SensorKind::PInj;
            case.incident_branches(b)
                .into_iter()
                .map(|k| {
                    let at_from = case.branch_ends(k).0 == b;
                    let fl = branch_flow(case, k, at_from, &x.vm, &x.va);
                    if active {
                        fl.p
                    } else {
                        fl.q
                    }
                })
                .sum()
        }
        (SensorKind::PFlow, SensorLocation::Branch { index, at_from }) => {
            branch_flow(case, index, at_from, &x.vm, &x.va).p
        }
        (SensorKind::QFlow, SensorLocation::Branch { index, at_from }) => {
            branch_flow(case, index, at_from, &x.vm, &x.va).q
        }
        _ => unreachable!("plan validated sensor locations"),
    }
}

/// Noiseless sensor readings `h(x)` in plan order.
pub fn eval_h(case: &NetworkCase, plan: &MeasurementPlan, x: &StateVector) -> Result<DVector<f64>> {
    check_dims(case, x)?;
    Ok(DVector::from_iterator(
        plan.len(),
        plan.sensors().iter().map(|s| sensor_value(case, s, x)),
    ))
}

fn add_flow_row(case: &NetworkCase, row: &mut [f64], fl: &Flow, grad: &[f64; 4]) {
    let sn = case.slots(fl.near);
    let sf = case.slots(fl.far);
    row[sn.vm] += grad[0];
    row[sf.vm] += grad[1];
    if let Some(a) = sn.va {
        row[a] += grad[2];
    }
    if let Some(a) = sf.va {
        row[a] += grad[3];
    }
}

/// Analytic Jacobian of [`eval_h`] with respect to the flattened state.
pub fn eval_jacobian(
    case: &NetworkCase,
    plan: &MeasurementPlan,
    x: &StateVector,
) -> Result<DMatrix<f64>> {
    check_dims(case, x)?;
    let n = case.state_dim();
    let mut jac = DMatrix::zeros(plan.len(), n);
    let mut row = vec![0.0; n];
    for (r, sensor) in plan.sensors().iter().enumerate() {
        row.iter_mut().for_each(|v| *v = 0.0);
        match (sensor.kind, sensor.location) {
            (SensorKind::VMag, SensorLocation::Bus(b)) => row[case.slots(b).vm] = 1.0,
            (SensorKind::PInj | SensorKind::QInj, SensorLocation::Bus(b)) => {
                for k in case.incident_branches(b) {
                    let at_from = case.branch_ends(k).0 == b;
                    let fl = branch_flow(case, k, at_from, &x.vm, &x.va);
                    let grad = if sensor.kind == SensorKind::PInj { fl.dp } else { fl.dq };
                    add_flow_row(case, &mut row, &fl, &grad);
                }
            }
            (SensorKind::PFlow | SensorKind::QFlow, SensorLocation::Branch { index, at_from }) => {
                let fl = branch_flow(case, index, at_from, &x.vm, &x.va);
                let grad = if sensor.kind == SensorKind::PFlow { fl.dp } else { fl.dq };
                add_flow_row(case, &mut row, &fl, &grad);
            }
            _ => unreachable!("plan validated sensor locations"),
        }
        for (c, v) in row.iter().enumerate() {
            jac[(r, c)] = *v;
        }
    }
    Ok(jac)
}

/// Net injections `P_k`, `Q_k` at every bus and their Jacobians (bus rows,
/// flattened-state columns).
pub fn bus_injections(
    case: &NetworkCase,
    x: &StateVector,
) -> (DVector<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let nb = case.bus_count();
    let n = case.state_dim();
    let mut p = DVector::zeros(nb);
    let mut q = DVector::zeros(nb);
    let mut jp = DMatrix::zeros(nb, n);
    let mut jq = DMatrix::zeros(nb, n);
    let mut row = vec![0.0; n];
    for k in 0..case.branches().len() {
        for at_from in [true, false] {
            let fl = branch_flow(case, k, at_from, &x.vm, &x.va);
            p[fl.near] += fl.p;
            q[fl.near] += fl.q;
            for (jac, grad) in [(&mut jp, &fl.dp), (&mut jq, &fl.dq)] {
                row.iter_mut().for_each(|v| *v = 0.0);
                add_flow_row(case, &mut row, &fl, grad);
                for (c, v) in row.iter().enumerate() {
                    jac[(fl.near, c)] += *v;
                }
            }
        }
    }
    (p, q, jp, jq)
}

/// Sensor sets `M_i` for every generator bus, keyed by bus id. Sensor indices
/// are ascending positions in the plan.
pub fn neighborhood_sets(
    case: &NetworkCase,
    plan: &MeasurementPlan,
    radius: Neighborhood,
) -> BTreeMap<usize, Vec<usize>> {
    let mut out = BTreeMap::new();
    for g in case.generators() {
        let bus = case.index_of(g.bus).expect("validated generator bus");
        let incident = case.incident_branches(bus);
        let adjacent = case.neighbors(bus);
        let members: Vec<usize> = plan
            .sensors()
            .iter()
            .enumerate()
            .filter(|(_, s)| match s.location {
                SensorLocation::Bus(b) => {
                    b == bus
                        || (radius == Neighborhood::OneHop
                            && s.kind != SensorKind::VMag
                            && adjacent.contains(&b))
                }
                SensorLocation::Branch { index, .. } => incident.contains(&index),
            })
            .map(|(j, _)| j)
            .collect();
        out.insert(g.bus, members);
    }
    out
}

/// The AC measurement function of a case and plan as a [`MeasurementModel`]
/// over flattened states.
#[derive(Debug, Clone, Copy)]
pub struct AcModel<'a> {
    pub case: &'a NetworkCase,
    pub plan: &'a MeasurementPlan,
}

impl<'a> AcModel<'a> {
    pub fn new(case: &'a NetworkCase, plan: &'a MeasurementPlan) -> Self {
        Self { case, plan }
    }
}

impl MeasurementModel for AcModel<'_> {
    fn state_dim(&self) -> usize {
        self.case.state_dim()
    }

    fn meas_dim(&self) -> usize {
        self.plan.len()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        eval_h(self.case, self.plan, &StateVector::from_flat(self.case, x)?)
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        eval_jacobian(self.case, self.plan, &StateVector::from_flat(self.case, x)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_seeded;
    use rand::Rng;

    fn two_bus() -> NetworkCase {
        NetworkCase::parse(
            r#"{"base_mva": 100,
                "buses": [{"id": 1, "type": "reference", "region": 1},
                          {"id": 2, "type": "load", "region": 1}],
                "branches": [{"from": 1, "to": 2, "r": 0.0, "x": 0.1, "b": 0.0}],
                "generators": [{"bus": 1, "p_max": 1.0}]}"#,
        )
        .unwrap()
    }

    fn two_bus_plan(case: &NetworkCase) -> MeasurementPlan {
        MeasurementPlan::full(case, 0.01, 0.02).unwrap()
    }

    #[test]
    fn flat_state_has_no_flow() {
        let case = two_bus();
        let plan = two_bus_plan(&case);
        let z = eval_h(&case, &plan, &StateVector::flat(&case)).unwrap();
        for (s, v) in plan.sensors().iter().zip(z.iter()) {
            let expected = if s.kind == SensorKind::VMag { 1.0 } else { 0.0 };
            assert_eq!(*v, expected, "{s:?}");
        }
    }

    #[test]
    fn lossless_flow_matches_sine_law() {
        let case = two_bus();
        let plan = two_bus_plan(&case);
        let mut x = StateVector::flat(&case);
        x.va[1] = -0.01;
        let z = eval_h(&case, &plan, &x).unwrap();
        let pflow = plan
            .sensors()
            .iter()
            .position(|s| s.kind == SensorKind::PFlow)
            .unwrap();
        // independent evaluation: P = V1 V2 sin(theta12) / x
        let expected = 0.01f64.sin() / 0.1;
        assert!((z[pflow] - expected).abs() < 1e-15);
        assert!((z[pflow] - 0.099998).abs() < 1e-6);
    }

    #[test]
    fn ieee14_flat_start() {
        let case = NetworkCase::ieee14();
        let plan = MeasurementPlan::full(&case, 0.01, 0.02).unwrap();
        assert_eq!(plan.len(), 82);
        let flat = StateVector::flat(&case);
        let z = eval_h(&case, &plan, &flat).unwrap();
        for (s, v) in plan.sensors().iter().zip(z.iter()) {
            if s.kind == SensorKind::VMag {
                assert_eq!(*v, 1.0);
            }
        }
        let j = eval_jacobian(&case, &plan, &flat).unwrap();
        assert_eq!(j.shape(), (82, 27));
        // independent rank oracle: eigenvalues of J^T J
        let gram = j.transpose() * &j;
        let eig = gram.symmetric_eigenvalues();
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > 1e-8, "smallest Gram eigenvalue {min}");
        assert_eq!(linalg::rank(&j), 27);
    }

    fn random_state(case: &NetworkCase, rng: &mut impl Rng) -> StateVector {
        let mut x = StateVector::flat(case);
        for k in 0..case.bus_count() {
            x.vm[k] = rng.random_range(0.9..1.1);
            if k != case.reference() {
                x.va[k] = rng.random_range(-0.3..0.3);
            }
        }
        x
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let case = NetworkCase::ieee14();
        let plan = MeasurementPlan::full(&case, 0.01, 0.02).unwrap();
        let model = AcModel::new(&case, &plan);
        let mut rng = rng_seeded(11);
        let step = 1e-5;
        for _ in 0..10 {
            let x = random_state(&case, &mut rng).to_flat(&case);
            let jac = model.jacobian(&x).unwrap();
            for c in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += step;
                xm[c] -= step;
                let fd = (model.eval(&xp).unwrap() - model.eval(&xm).unwrap()) / (2.0 * step);
                for r in 0..plan.len() {
                    let err = (jac[(r, c)] - fd[r]).abs();
                    assert!(
                        err <= 1e-6 * jac[(r, c)].abs().max(1.0),
                        "entry ({r},{c}): analytic {} vs fd {}",
                        jac[(r, c)],
                        fd[r]
                    );
                }
            }
        }
    }

    #[test]
    fn voltage_rows_are_unit_selectors() {
        let case = NetworkCase::ieee14();
        let plan = MeasurementPlan::full(&case, 0.01, 0.02).unwrap();
        let mut rng = rng_seeded(3);
        let x = random_state(&case, &mut rng);
        let jac = eval_jacobian(&case, &plan, &x).unwrap();
        for (r, s) in plan.sensors().iter().enumerate() {
            if let (SensorKind::VMag, SensorLocation::Bus(b)) = (s.kind, s.location) {
                for c in 0..case.state_dim() {
                    let expected = if c == case.slots(b).vm { 1.0 } else { 0.0 };
                    assert_eq!(jac[(r, c)], expected);
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let case = NetworkCase::ieee14();
        let plan = MeasurementPlan::full(&case, 0.01, 0.02).unwrap();
        let bad = StateVector {
            vm: vec![1.0; 3],
            va: vec![0.0; 3],
        };
        assert!(matches!(eval_h(&case, &plan, &bad), Err(Error::Dimension { .. })));
        assert!(matches!(eval_jacobian(&case, &plan, &bad), Err(Error::Dimension { .. })));
    }

    #[test]
    fn star_neighborhood() {
        // generator bus 2 in the middle of 1 - 2 - 3
        let case = NetworkCase::parse(
            r#"{"base_mva": 100,
                "buses": [{"id": 1, "type": "reference", "region": 1},
                          {"id": 2, "type": "generator", "region": 1},
                          {"id": 3, "type": "load", "region": 1},
                          {"id": 4, "type": "load", "region": 1}],
                "branches": [{"from": 1, "to": 2, "r": 0.01, "x": 0.1},
                             {"from": 2, "to": 3, "r": 0.01, "x": 0.1},
                             {"from": 3, "to": 4, "r": 0.01, "x": 0.1}],
                "generators": [{"bus": 1, "p_max": 1.0}, {"bus": 2, "p_max": 1.0}]}"#,
        )
        .unwrap();
        let plan = MeasurementPlan::full(&case, 0.01, 0.02).unwrap();
        let sets = neighborhood_sets(&case, &plan, Neighborhood::OneHop);
        let got: Vec<(SensorKind, SensorLocation)> = sets[&2]
            .iter()
            .map(|&j| (plan.sensors()[j].kind, plan.sensors()[j].location))
            .collect();
        use SensorKind::*;
        use SensorLocation::*;
        let expected = vec![
            (VMag, Bus(1)),
            (PInj, Bus(0)),
            (PInj, Bus(1)),
            (PInj, Bus(2)),
            (QInj, Bus(0)),
            (QInj, Bus(1)),
            (QInj, Bus(2)),
            (PFlow, Branch { index: 0, at_from: true }),
            (PFlow, Branch { index: 1, at_from: true }),
            (QFlow, Branch { index: 0, at_from: true }),
            (QFlow, Branch { index: 1, at_from: true }),
        ];
        assert_eq!(got, expected);
        let incident = neighborhood_sets(&case, &plan, Neighborhood::Incident);
        assert_eq!(incident[&2].len(), expected.len() - 4);
    }

    #[test]
    fn case14_neighborhood_sizes() {
        let case = NetworkCase::ieee14();
        let plan = MeasurementPlan::full(&case, 0.01, 0.02).unwrap();
        for radius in [Neighborhood::Incident, Neighborhood::OneHop] {
            let sets = neighborhood_sets(&case, &plan, radius);
            assert!(sets[&8].len() < sets[&2].len(), "{radius:?}");
        }
    }

    #[test]
    fn one_hop_is_exactly_the_structural_dependence_set() {
        // Jacobian oracle: a sensor depends on x_i iff some random state gives a
        // nonzero derivative with respect to S_i.
        let case = NetworkCase::ieee14();
        let plan = MeasurementPlan::full(&case, 0.01, 0.02).unwrap();
        let sets = neighborhood_sets(&case, &plan, Neighborhood::OneHop);
        let mut rng = rng_seeded(5);
        let jacs: Vec<DMatrix<f64>> = (0..5)
            .map(|_| eval_jacobian(&case, &plan, &random_state(&case, &mut rng)).unwrap())
            .collect();
        for (bus_id, members) in &sets {
            let cols = case.state_indices(case.index_of(*bus_id).unwrap());
            for j in 0..plan.len() {
                let depends = jacs
                    .iter()
                    .any(|jac| cols.iter().any(|&c| jac[(j, c)] != 0.0));
                assert_eq!(depends, members.contains(&j), "bus {bus_id}, sensor {j}");
            }
        }
    }
}
