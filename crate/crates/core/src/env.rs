//! Hourly district simulator with controllable cooling and DHW storage.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{storage_capacity, Dataset, StorageKind};

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("episode finished: step {t} is past the horizon {horizon}")]
    EpisodeFinished { t: usize, horizon: usize },
    #[error("action vector has {found} entries, district layout needs {expected}")]
    ActionLength { found: usize, expected: usize },
    #[error("action value {0} is outside [-1, 1] or not finite")]
    ActionRange(f64),
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EnvError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CopParams {
    pub target_t: f64,
    pub eta: f64,
    pub cop_min: f64,
    pub cop_max: f64,
}

impl Default for CopParams {
    fn default() -> Self {
        Self {
            target_t: 8.0,
            eta: 0.22,
            cop_min: 1.0,
            cop_max: 6.0,
        }
    }
}

/// Plant parameters. Every field is overridable from the run config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Fraction of stored energy lost per hour.
    pub storage_loss_per_step: f64,
    /// Maximum charge or discharge per hour, as a fraction of capacity.
    pub max_charge_rate: f64,
    pub cooling_cop_params: CopParams,
    pub dhw_efficiency: f64,
    /// Clip negative district consumption (PV export) to zero.
    pub clip_net_at_zero: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            storage_loss_per_step: 0.008,
            max_charge_rate: 0.5,
            cooling_cop_params: CopParams::default(),
            dhw_efficiency: 0.9,
            clip_net_at_zero: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let cop = &self.cooling_cop_params;
        let problem = if !(0.0..1.0).contains(&self.storage_loss_per_step) {
            Some("storage_loss_per_step must be in [0, 1)")
        } else if !(self.max_charge_rate > 0.0 && self.max_charge_rate <= 1.0) {
            Some("max_charge_rate must be in (0, 1]")
        } else if !(cop.cop_min >= 1.0 && cop.cop_max >= cop.cop_min) {
            Some("cop bounds must satisfy 1 <= cop_min <= cop_max")
        } else if !(cop.eta > 0.0 && cop.target_t.is_finite()) {
            Some("cop eta must be positive and target_t finite")
        } else if !(self.dhw_efficiency > 0.0 && self.dhw_efficiency <= 1.0) {
            Some("dhw_efficiency must be in (0, 1]")
        } else {
            None
        };
        match problem {
            Some(msg) => Err(EnvError::Config(msg.into())),
            None => Ok(()),
        }
    }
}

/// Carnot-style chiller efficiency clamped to `[cop_min, cop_max]`.
pub fn cop(t_out: f64, params: &CopParams) -> f64 {
    let lift = (t_out - params.target_t).max(0.1);
    (params.eta * (params.target_t + 273.15) / lift).clamp(params.cop_min, params.cop_max)
}

/// One controllable storage slot in the flat action vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSlot {
    pub building: usize,
    pub kind: StorageKind,
}

/// Action layout: each building's cooling slot, followed by its DHW slot when
/// it owns DHW storage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionLayout {
    slots: Vec<ActionSlot>,
}

impl ActionLayout {
    pub fn for_dataset(dataset: &Dataset) -> Self {
        let mut slots = Vec::new();
        for (building, spec) in dataset.buildings.iter().enumerate() {
            slots.push(ActionSlot {
                building,
                kind: StorageKind::Cooling,
            });
            if spec.has_dhw_storage() {
                slots.push(ActionSlot {
                    building,
                    kind: StorageKind::Dhw,
                });
            }
        }
        Self { slots }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[ActionSlot] {
        &self.slots
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionVector(Vec<f64>);

impl ActionVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            0.0
        } else {
            self.0.iter().sum::<f64>() / self.0.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Length of the observation vector for a district.
pub fn observation_len(dataset: &Dataset) -> usize {
    5 + dataset
        .buildings
        .iter()
        .map(|b| 2 + usize::from(b.has_pv()) + usize::from(b.has_dhw_storage()))
        .sum::<usize>()
}

/// Human-readable names of each observation entry, in layout order.
pub fn observation_names(dataset: &Dataset) -> Vec<String> {
    let mut names: Vec<String> = ["month", "day", "hour", "t_out", "direct_solar_rad"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for b in &dataset.buildings {
        names.push(format!("non_shiftable_load_{}", b.id));
        if b.has_pv() {
            names.push(format!("solar_gen_{}", b.id));
        }
        names.push(format!("cooling_storage_soc_{}", b.id));
        if b.has_dhw_storage() {
            names.push(format!("dhw_storage_soc_{}", b.id));
        }
    }
    names
}

/// Dynamic simulator state.
#[derive(Debug, Clone, PartialEq)]
pub struct DistrictState {
    pub t: usize,
    pub soc_cooling: Vec<f64>,
    pub soc_dhw: Vec<f64>,
    pub net_consumption_trace: Vec<f64>,
}

/// Observation vector for step `t` (wraps past the horizon).
pub fn build_observation(state: &DistrictState, dataset: &Dataset, t: usize) -> Observation {
    let t = t % dataset.horizon();
    let mut values = Vec::with_capacity(observation_len(dataset));
    values.extend([
        f64::from(dataset.month_at(t)),
        f64::from(dataset.weekday_at(t)),
        (t % 24 + 1) as f64,
        dataset.weather.t_out[t],
        dataset.weather.direct_solar_rad[t],
    ]);
    for (i, b) in dataset.buildings.iter().enumerate() {
        values.push(b.non_shiftable_load[t]);
        if b.has_pv() {
            values.push(b.solar_generation(t));
        }
        values.push(state.soc_cooling[i]);
        if b.has_dhw_storage() {
            values.push(state.soc_dhw[i]);
        }
    }
    Observation(values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Net electricity of each building (negative when PV exceeds its load).
    pub e_i: Vec<f64>,
    pub e_total: f64,
    pub observation: Observation,
    pub done: bool,
}

/// Storage capacities resolved once per dataset; 0 means no storage.
#[derive(Debug, Clone, PartialEq)]
struct Capacities {
    cooling: Vec<f64>,
    dhw: Vec<f64>,
}

impl Capacities {
    fn of(dataset: &Dataset) -> Self {
        let cap = |kind| {
            dataset
                .buildings
                .iter()
                .map(|b| storage_capacity(b, kind).unwrap_or(0.0))
                .collect()
        };
        Self {
            cooling: cap(StorageKind::Cooling),
            dhw: cap(StorageKind::Dhw),
        }
    }
}

/// Applies one storage action and returns `(flow_kwh, new_soc)`.
fn apply_storage(action: f64, soc: f64, capacity: f64, demand: f64, config: &EnvConfig) -> (f64, f64) {
    if capacity <= 0.0 {
        return (0.0, soc);
    }
    let retained = soc * (1.0 - config.storage_loss_per_step);
    let limit = config.max_charge_rate * capacity;
    let mut flow = (action * capacity).clamp(-limit, limit);
    if flow > 0.0 {
        flow = flow.min((1.0 - retained) * capacity);
    } else {
        flow = flow.max(-demand).max(-retained * capacity);
    }
    let new_soc = (retained + flow / capacity).clamp(0.0, 1.0);
    (flow, new_soc)
}

/// A simulator instance bound to one dataset and config.
#[derive(Debug, Clone)]
pub struct DistrictEnv<'a> {
    dataset: &'a Dataset,
    config: EnvConfig,
    layout: ActionLayout,
    capacities: Capacities,
    state: DistrictState,
}

impl<'a> DistrictEnv<'a> {
    pub fn new(dataset: &'a Dataset, config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let mut env = Self {
            dataset,
            config,
            layout: ActionLayout::for_dataset(dataset),
            capacities: Capacities::of(dataset),
            state: DistrictState {
                t: 0,
                soc_cooling: Vec::new(),
                soc_dhw: Vec::new(),
                net_consumption_trace: Vec::new(),
            },
        };
        env.reset();
        Ok(env)
    }

    /// Returns to step 0 with every existing store half full.
    pub fn reset(&mut self) -> Observation {
        let half_if = |caps: &[f64]| caps.iter().map(|&c| if c > 0.0 { 0.5 } else { 0.0 }).collect();
        self.state = DistrictState {
            t: 0,
            soc_cooling: half_if(&self.capacities.cooling),
            soc_dhw: half_if(&self.capacities.dhw),
            net_consumption_trace: Vec::with_capacity(self.dataset.horizon()),
        };
        self.observation()
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn layout(&self) -> &ActionLayout {
        &self.layout
    }

    pub fn state(&self) -> &DistrictState {
        &self.state
    }

    /// Hour of day (1-24) of the next step to be simulated.
    pub fn hour(&self) -> u8 {
        (self.state.t % 24 + 1) as u8
    }

    pub fn observation(&self) -> Observation {
        build_observation(&self.state, self.dataset, self.state.t)
    }

    pub fn cooling_capacity(&self, building: usize) -> f64 {
        self.capacities.cooling[building]
    }

    pub fn dhw_capacity(&self, building: usize) -> f64 {
        self.capacities.dhw[building]
    }

    pub fn step(&mut self, actions: &ActionVector) -> Result<StepOutcome> {
        let horizon = self.dataset.horizon();
        let t = self.state.t;
        if t >= horizon {
            return Err(EnvError::EpisodeFinished { t, horizon });
        }
        if actions.values().len() != self.layout.len() {
            return Err(EnvError::ActionLength {
                found: actions.values().len(),
                expected: self.layout.len(),
            });
        }
        if let Some(&bad) = actions.values().iter().find(|a| !(a.is_finite() && a.abs() <= 1.0)) {
            return Err(EnvError::ActionRange(bad));
        }

        let n = self.dataset.n_buildings();
        let mut cooling_action = vec![0.0; n];
        let mut dhw_action = vec![0.0; n];
        for (slot, &a) in self.layout.slots.iter().zip(actions.values()) {
            match slot.kind {
                StorageKind::Cooling => cooling_action[slot.building] = a,
                StorageKind::Dhw => dhw_action[slot.building] = a,
            }
        }

        let cop_now = cop(self.dataset.weather.t_out[t], &self.config.cooling_cop_params);
        let mut e_i = Vec::with_capacity(n);
        for (i, b) in self.dataset.buildings.iter().enumerate() {
            let cooling_demand = b.cooling_demand[t];
            let (cooling_flow, soc_c) = apply_storage(
                cooling_action[i],
                self.state.soc_cooling[i],
                self.capacities.cooling[i],
                cooling_demand,
                &self.config,
            );
            let dhw_demand = b.demand(StorageKind::Dhw, t);
            let (dhw_flow, soc_d) = apply_storage(
                dhw_action[i],
                self.state.soc_dhw[i],
                self.capacities.dhw[i],
                dhw_demand,
                &self.config,
            );
            self.state.soc_cooling[i] = soc_c;
            self.state.soc_dhw[i] = soc_d;
            let cooling_elec = (cooling_demand + cooling_flow) / cop_now;
            let dhw_elec = (dhw_demand + dhw_flow) / self.config.dhw_efficiency;
            e_i.push(cooling_elec + dhw_elec + b.non_shiftable_load[t] - b.solar_generation(t));
        }
        let mut e_total: f64 = e_i.iter().sum();
        if self.config.clip_net_at_zero {
            e_total = e_total.max(0.0);
        }
        self.state.net_consumption_trace.push(e_total);
        self.state.t += 1;
        Ok(StepOutcome {
            e_i,
            e_total,
            observation: self.observation(),
            done: self.state.t == horizon,
        })
    }
}

/// Everything recorded about one simulated episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeTrace {
    pub e_total: Vec<f64>,
    pub e_i: Vec<Vec<f64>>,
    pub soc_cooling: Vec<Vec<f64>>,
    pub soc_dhw: Vec<Vec<f64>>,
}

impl EpisodeTrace {
    pub fn record(&mut self, outcome: &StepOutcome, state: &DistrictState) {
        self.e_total.push(outcome.e_total);
        self.e_i.push(outcome.e_i.clone());
        self.soc_cooling.push(state.soc_cooling.clone());
        self.soc_dhw.push(state.soc_dhw.clone());
    }

    pub fn len(&self) -> usize {
        self.e_total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e_total.is_empty()
    }

    /// Writes `t,e_total,e_<id>..,soc_cooling_<id>..,soc_dhw_<id>..` with one
    /// DHW column per building that owns DHW storage.
    pub fn write_csv(&self, dataset: &Dataset, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let dhw_buildings: Vec<usize> = dataset
            .buildings
            .iter()
            .enumerate()
            .filter(|(_, b)| b.has_dhw_storage())
            .map(|(i, _)| i)
            .collect();
        let mut header = vec!["t".to_string(), "e_total".to_string()];
        header.extend(dataset.buildings.iter().map(|b| format!("e_{}", b.id)));
        header.extend(dataset.buildings.iter().map(|b| format!("soc_cooling_{}", b.id)));
        header.extend(dhw_buildings.iter().map(|&i| format!("soc_dhw_{}", dataset.buildings[i].id)));
        writeln!(out, "{}", header.join(","))?;
        for t in 0..self.len() {
            let mut row = vec![t.to_string(), format!("{:.6}", self.e_total[t])];
            row.extend(self.e_i[t].iter().map(|v| format!("{v:.6}")));
            row.extend(self.soc_cooling[t].iter().map(|v| format!("{v:.6}")));
            row.extend(dhw_buildings.iter().map(|&i| format!("{:.6}", self.soc_dhw[t][i])));
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs a full episode with `policy(t, hour, observation)` choosing each action.
pub fn simulate<F>(dataset: &Dataset, config: EnvConfig, mut policy: F) -> Result<EpisodeTrace>
where
    F: FnMut(usize, u8, &Observation, &ActionLayout) -> ActionVector,
{
    let mut env = DistrictEnv::new(dataset, config)?;
    let mut obs = env.reset();
    let mut trace = EpisodeTrace::default();
    loop {
        let t = env.state().t;
        let action = policy(t, env.hour(), &obs, env.layout());
        let outcome = env.step(&action)?;
        trace.record(&outcome, env.state());
        obs = outcome.observation;
        if outcome.done {
            return Ok(trace);
        }
    }
}
