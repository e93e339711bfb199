//! Regional network model: regions, inter-region lines, main-grid ties and
//! islanding.
//!
//! The network is a transport/capacity model. Lines carry scalar kW limits and
//! the main grid is a single reserved node that can supply any amount through
//! its tie lines.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionId(pub u32);

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type RegionSet = BTreeSet<RegionId>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: RegionId,
    pub name: String,
    /// Nominal demand in kW.
    pub base_demand: f64,
    /// Allocation weight, used to break ties when supply is scarce.
    pub priority: f64,
    /// Dispatchable generation inside the region (kW), available when islanded.
    #[serde(default)]
    pub local_generation: f64,
}

impl Region {
    pub fn new(id: u32, name: impl Into<String>, base_demand: f64) -> Self {
        Self {
            id: RegionId(id),
            name: name.into(),
            base_demand,
            priority: 1.0,
            local_generation: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: RegionId,
    pub to: RegionId,
    /// kW
    pub capacity: f64,
    pub is_main_tie: bool,
}

impl Line {
    pub fn new(from: u32, to: u32, capacity: f64) -> Self {
        Self {
            from: RegionId(from),
            to: RegionId(to),
            capacity,
            is_main_tie: false,
        }
    }

    pub fn main_tie(main_grid: u32, region: u32, capacity: f64) -> Self {
        Self {
            from: RegionId(main_grid),
            to: RegionId(region),
            capacity,
            is_main_tie: true,
        }
    }

    /// The region end of a main tie.
    pub fn tied_region(&self, main_grid: RegionId) -> Option<RegionId> {
        if !self.is_main_tie {
            None
        } else if self.from == main_grid {
            Some(self.to)
        } else {
            Some(self.from)
        }
    }

    fn key(&self) -> (RegionId, RegionId) {
        if self.from <= self.to {
            (self.from, self.to)
        } else {
            (self.to, self.from)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("duplicate region id {0}")]
    DuplicateRegion(RegionId),
    #[error("line {from}-{to} references a region that does not exist")]
    DanglingLine { from: RegionId, to: RegionId },
    #[error("line {from}-{to} has non-positive capacity")]
    NonPositiveCapacity { from: RegionId, to: RegionId },
    #[error("line {from}-{to} is duplicated")]
    DuplicateLine { from: RegionId, to: RegionId },
    #[error("line {0}-{0} connects a region to itself")]
    SelfLoop(RegionId),
    #[error("line {from}-{to}: main-tie flag disagrees with endpoints (main grid is {main})")]
    TieMismatch {
        from: RegionId,
        to: RegionId,
        main: RegionId,
    },
    #[error("region id {0} is reserved for the main grid")]
    ReservedId(RegionId),
    #[error("region {0} has negative base demand")]
    NegativeDemand(RegionId),
    #[error("unknown region {0}")]
    UnknownRegion(RegionId),
}

/// Validated network. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridTopology {
    regions: BTreeMap<RegionId, Region>,
    lines: Vec<Line>,
    main_grid_id: RegionId,
    #[serde(skip)]
    adjacency: BTreeMap<RegionId, Vec<(RegionId, usize)>>,
}

/// Result of islanding: which regions still hang off the main grid and which
/// operate on their own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IslandPartition {
    /// Connected components with no path to the main grid, ordered by smallest id.
    pub islands: Vec<RegionSet>,
    pub grid_connected: RegionSet,
    /// `grid_connected` split into its connected components.
    pub grid_components: Vec<RegionSet>,
}

impl IslandPartition {
    /// Every component, grid-connected first.
    pub fn components(&self) -> impl Iterator<Item = (&RegionSet, bool)> {
        self.grid_components
            .iter()
            .map(|c| (c, true))
            .chain(self.islands.iter().map(|c| (c, false)))
    }

    pub fn all_regions(&self) -> RegionSet {
        self.islands
            .iter()
            .flatten()
            .chain(self.grid_connected.iter())
            .copied()
            .collect()
    }
}

/// Default reserved id for the main-grid node.
pub const MAIN_GRID: RegionId = RegionId(0);

pub fn build_topology(regions: Vec<Region>, lines: Vec<Line>) -> Result<GridTopology, TopologyError> {
    GridTopology::new(regions, lines, MAIN_GRID)
}

impl GridTopology {
    pub fn new(regions: Vec<Region>, lines: Vec<Line>, main_grid_id: RegionId) -> Result<Self, TopologyError> {
        let mut by_id = BTreeMap::new();
        for region in regions {
            if region.id == main_grid_id {
                return Err(TopologyError::ReservedId(region.id));
            }
            if !(region.base_demand >= 0.0) {
                return Err(TopologyError::NegativeDemand(region.id));
            }
            let id = region.id;
            if by_id.insert(id, region).is_some() {
                return Err(TopologyError::DuplicateRegion(id));
            }
        }

        let mut seen = BTreeSet::new();
        for line in &lines {
            let (from, to) = (line.from, line.to);
            if from == to {
                return Err(TopologyError::SelfLoop(from));
            }
            let touches_main = from == main_grid_id || to == main_grid_id;
            if touches_main != line.is_main_tie {
                return Err(TopologyError::TieMismatch { from, to, main: main_grid_id });
            }
            let known = |id: RegionId| id == main_grid_id || by_id.contains_key(&id);
            if !known(from) || !known(to) {
                return Err(TopologyError::DanglingLine { from, to });
            }
            if !(line.capacity > 0.0) {
                return Err(TopologyError::NonPositiveCapacity { from, to });
            }
            if !seen.insert(line.key()) {
                return Err(TopologyError::DuplicateLine { from, to });
            }
        }

        let mut adjacency: BTreeMap<RegionId, Vec<(RegionId, usize)>> =
            by_id.keys().map(|&id| (id, Vec::new())).collect();
        for (idx, line) in lines.iter().enumerate().filter(|(_, l)| !l.is_main_tie) {
            adjacency.entry(line.from).or_default().push((line.to, idx));
            adjacency.entry(line.to).or_default().push((line.from, idx));
        }

        Ok(Self {
            regions: by_id,
            lines,
            main_grid_id,
            adjacency,
        })
    }

    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.regions.values()
    }

    pub fn region(&self, id: RegionId) -> Option<&Region> {
        self.regions.get(&id)
    }

    pub fn region_ids(&self) -> RegionSet {
        self.regions.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn main_grid_id(&self) -> RegionId {
        self.main_grid_id
    }

    /// Region-to-region neighbours (main ties excluded), with the index of
    /// the connecting line.
    pub fn neighbors(&self, id: RegionId) -> &[(RegionId, usize)] {
        self.adjacency.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Total main-tie capacity attached to a region.
    pub fn tie_capacity(&self, id: RegionId) -> f64 {
        self.lines
            .iter()
            .filter(|l| l.tied_region(self.main_grid_id) == Some(id))
            .map(|l| l.capacity)
            .sum()
    }

    pub fn connected_components(&self) -> Vec<RegionSet> {
        self.components_where(&RegionSet::new(), &RegionSet::new())
    }

    pub fn isolate(&self, cut_set: &RegionSet) -> Result<IslandPartition, TopologyError> {
        self.isolate_with_outages(cut_set, &RegionSet::new())
    }

    /// Like [`isolate`](Self::isolate), but regions in `outaged` additionally
    /// lose every line and end up as singleton islands.
    pub fn isolate_with_outages(
        &self,
        cut_set: &RegionSet,
        outaged: &RegionSet,
    ) -> Result<IslandPartition, TopologyError> {
        if let Some(&bad) = cut_set.iter().chain(outaged).find(|id| !self.regions.contains_key(id)) {
            return Err(TopologyError::UnknownRegion(bad));
        }
        let mut cut = cut_set.clone();
        cut.extend(outaged.iter().copied());

        let mut islands = Vec::new();
        let mut grid_components = Vec::new();
        for component in self.components_where(&cut, outaged) {
            let tied = component
                .iter()
                .any(|id| !cut.contains(id) && self.tie_capacity(*id) > 0.0);
            if tied {
                grid_components.push(component);
            } else {
                islands.push(component);
            }
        }
        let grid_connected = grid_components.iter().flatten().copied().collect();
        Ok(IslandPartition {
            islands,
            grid_connected,
            grid_components,
        })
    }

    /// BFS components over region lines that do not cross the `cut` boundary
    /// and do not touch an `outaged` region.
    fn components_where(&self, cut: &RegionSet, outaged: &RegionSet) -> Vec<RegionSet> {
        let mut visited = RegionSet::new();
        let mut out = Vec::new();
        for &start in self.regions.keys() {
            if !visited.insert(start) {
                continue;
            }
            let mut component = RegionSet::from([start]);
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                if outaged.contains(&u) {
                    continue;
                }
                for &(v, _) in self.neighbors(u) {
                    if outaged.contains(&v) || cut.contains(&u) != cut.contains(&v) {
                        continue;
                    }
                    if visited.insert(v) {
                        component.insert(v);
                        queue.push_back(v);
                    }
                }
            }
            out.push(component);
        }
        out
    }
}
