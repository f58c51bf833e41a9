//! Network topology and the JSON grid-case document.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusType {
    Reference,
    Generator,
    Load,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    #[serde(rename = "type")]
    pub kind: BusType,
    pub region: usize,
    /// Nominal active demand, per-unit.
    #[serde(default)]
    pub pd: f64,
    /// Nominal reactive demand, per-unit.
    #[serde(default)]
    pub qd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance; half sits at each end.
    #[serde(default)]
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub p_max: f64,
    /// Voltage-magnitude setpoint of the generator bus.
    #[serde(default = "unit_voltage")]
    pub v_set: f64,
}

fn unit_voltage() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CaseDocument {
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
}

/// Where each bus's voltage magnitude and angle live in the flattened state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusSlots {
    pub vm: usize,
    /// `None` for the reference bus, whose angle is the datum.
    pub va: Option<usize>,
}

/// A validated bus/branch/generator network.
///
/// Buses keep their file order; `index_of` maps an external bus id to that
/// position. The flattened state interleaves `[|V_k|, theta_k]` bus by bus and
/// omits the reference angle, so `n = 2N - 1`.
#[derive(Debug, Clone)]
pub struct NetworkCase {
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
    index: HashMap<usize, usize>,
    // branch endpoints as bus positions
    ends: Vec<(usize, usize)>,
    reference: usize,
    slots: Vec<BusSlots>,
    regions: usize,
}

impl NetworkCase {
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self> {
        if !(base_mva > 0.0) {
            return Err(Error::Validation("base_mva must be positive".into()));
        }
        if buses.is_empty() {
            return Err(Error::Validation("case has no buses".into()));
        }
        let mut index = HashMap::with_capacity(buses.len());
        for (k, bus) in buses.iter().enumerate() {
            if index.insert(bus.id, k).is_some() {
                return Err(Error::Validation(format!("duplicate bus id {}", bus.id)));
            }
            if bus.pd < 0.0 {
                return Err(Error::Validation(format!("bus {} has negative demand", bus.id)));
            }
        }
        let refs: Vec<usize> = buses
            .iter()
            .filter(|b| b.kind == BusType::Reference)
            .map(|b| b.id)
            .collect();
        let reference = match refs.as_slice() {
            [id] => index[id],
            [] => return Err(Error::Validation("no reference bus".into())),
            many => {
                return Err(Error::Validation(format!(
                    "exactly one reference bus required, found {many:?}"
                )))
            }
        };

        let mut ends = Vec::with_capacity(branches.len());
        for br in &branches {
            let f = *index.get(&br.from).ok_or_else(|| {
                Error::Validation(format!("branch endpoint {} does not exist", br.from))
            })?;
            let t = *index.get(&br.to).ok_or_else(|| {
                Error::Validation(format!("branch endpoint {} does not exist", br.to))
            })?;
            if f == t {
                return Err(Error::Validation(format!("branch {}-{} is a self loop", br.from, br.to)));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(Error::Validation(format!(
                    "branch {}-{} has zero impedance",
                    br.from, br.to
                )));
            }
            ends.push((f, t));
        }

        for g in &generators {
            let k = *index.get(&g.bus).ok_or_else(|| {
                Error::Validation(format!("generator on missing bus {}", g.bus))
            })?;
            if buses[k].kind == BusType::Load {
                return Err(Error::Validation(format!(
                    "generator sits on load bus {}",
                    g.bus
                )));
            }
            if !(g.p_max >= 0.0) || !(g.v_set > 0.0) {
                return Err(Error::Validation(format!(
                    "generator at bus {} has invalid limits",
                    g.bus
                )));
            }
        }

        let regions = buses.iter().map(|b| b.region).max().unwrap_or(0);
        if buses.iter().any(|b| b.region == 0) {
            return Err(Error::Validation("region ids start at 1".into()));
        }
        for k in 1..=regions {
            if !buses.iter().any(|b| b.region == k) {
                return Err(Error::Validation(format!("region {k} is empty")));
            }
        }

        // connectivity
        let n = buses.len();
        let mut adj = vec![Vec::new(); n];
        for &(f, t) in &ends {
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([reference]);
        seen[reference] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!(
                "network is disconnected: bus {} unreachable from the reference",
                buses[k].id
            )));
        }

        let mut slots = Vec::with_capacity(n);
        let mut next = 0;
        for k in 0..n {
            let vm = next;
            next += 1;
            let va = if k == reference {
                None
            } else {
                next += 1;
                Some(next - 1)
            };
            slots.push(BusSlots { vm, va });
        }

        Ok(Self {
            base_mva,
            buses,
            branches,
            generators,
            index,
            ends,
            reference,
            slots,
            regions,
        })
    }

    /// Parses and validates a grid-case JSON document.
    pub fn parse(text: &str) -> Result<Self> {
        let doc: CaseDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::new(doc.base_mva, doc.buses, doc.branches, doc.generators)
    }

    pub fn to_json(&self) -> String {
        let doc = CaseDocument {
            base_mva: self.base_mva,
            buses: self.buses.clone(),
            branches: self.branches.clone(),
            generators: self.generators.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("case serialization is infallible")
    }

    /// The bundled IEEE 14-bus case.
    pub fn ieee14() -> Self {
        Self::parse(include_str!("../../data/case14.json")).expect("bundled case14 is valid")
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn state_dim(&self) -> usize {
        2 * self.buses.len() - 1
    }

    pub fn region_count(&self) -> usize {
        self.regions
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn index_of(&self, bus_id: usize) -> Option<usize> {
        self.index.get(&bus_id).copied()
    }

    pub fn bus_id(&self, position: usize) -> usize {
        self.buses[position].id
    }

    /// Branch endpoints as bus positions.
    pub fn branch_ends(&self, branch: usize) -> (usize, usize) {
        self.ends[branch]
    }

    pub fn slots(&self, position: usize) -> BusSlots {
        self.slots[position]
    }

    /// State indices `S_i` of the bus at `position`.
    pub fn state_indices(&self, position: usize) -> Vec<usize> {
        let s = self.slots[position];
        std::iter::once(s.vm).chain(s.va).collect()
    }

    /// Bus positions adjacent to `position`.
    pub fn neighbors(&self, position: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .ends
            .iter()
            .filter_map(|&(f, t)| match (f == position, t == position) {
                (true, _) => Some(t),
                (_, true) => Some(f),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Branch indices incident to `position`.
    pub fn incident_branches(&self, position: usize) -> Vec<usize> {
        self.ends
            .iter()
            .enumerate()
            .filter(|(_, &(f, t))| f == position || t == position)
            .map(|(k, _)| k)
            .collect()
    }

    /// Generator bus ids other than the reference bus, ascending.
    pub fn candidate_buses(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .generators
            .iter()
            .map(|g| g.bus)
            .filter(|&id| self.index[&id] != self.reference)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn generator_at(&self, bus_id: usize) -> Option<&Generator> {
        self.generators.iter().find(|g| g.bus == bus_id)
    }
}
