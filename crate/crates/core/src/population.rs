//! Seeded device populations with decomposed static mismatch.
//!
//! Each cell's mismatch is `w_g * global + w_r * regional + w_l * local`,
//! every component being `N(0, sigma^2)` and `w_g^2 + w_r^2 + w_l^2 = 1`, so
//! the total variance is `sigma^2` whatever the split. The global draw is
//! shared by a whole device, the regional draw by the cells of one placement
//! region. A region with adjacent regions builds its regional draw as
//! `sqrt(0.5) * own + sqrt(0.5) * sum(edge) / sqrt(degree)`, with one shared
//! draw per adjacency edge, so two adjacent regions correlate and two
//! non-adjacent regions do not.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_1_SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{normal_at, tag};

pub type RegionId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementKind {
    /// One clustered block, a single region.
    #[serde(rename = "d1_clustered")]
    D1Clustered,
    /// 32x32 block split into row-pair regions, consecutive pairs adjacent.
    #[serde(rename = "d2_32x32")]
    D2Blocks32x32,
    /// 64 LAB columns of 16 cells, neighbouring columns adjacent.
    #[serde(rename = "d3_64x16_adjacent")]
    D3Adjacent64x16,
    /// 64 LAB columns of 16 cells, no adjacency.
    #[serde(rename = "d4_64x16_nonadjacent")]
    D4Isolated64x16,
    Custom,
}

impl PlacementKind {
    pub const BUILT_IN: [PlacementKind; 4] = [
        PlacementKind::D1Clustered,
        PlacementKind::D2Blocks32x32,
        PlacementKind::D3Adjacent64x16,
        PlacementKind::D4Isolated64x16,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPlacement", into = "RawPlacement")]
pub struct PlacementConfig {
    kind: PlacementKind,
    grid_width: usize,
    grid_height: usize,
    region_of: Vec<RegionId>,
    /// Unordered pairs stored as `(low, high)`, sorted, unique.
    adjacency: Vec<(RegionId, RegionId)>,
}

#[derive(Serialize, Deserialize)]
struct RawPlacement {
    kind: PlacementKind,
    grid_width: usize,
    grid_height: usize,
    region_of: Vec<RegionId>,
    adjacency: Vec<(RegionId, RegionId)>,
}

impl TryFrom<RawPlacement> for PlacementConfig {
    type Error = Error;
    fn try_from(raw: RawPlacement) -> Result<Self> {
        Self::with_kind(raw.kind, raw.grid_width, raw.grid_height, raw.region_of, raw.adjacency)
    }
}

impl From<PlacementConfig> for RawPlacement {
    fn from(p: PlacementConfig) -> Self {
        Self {
            kind: p.kind,
            grid_width: p.grid_width,
            grid_height: p.grid_height,
            region_of: p.region_of,
            adjacency: p.adjacency,
        }
    }
}

impl PlacementConfig {
    /// Explicit region table; `region_of[row * grid_width + col]`.
    pub fn custom(
        grid_width: usize,
        grid_height: usize,
        region_of: Vec<RegionId>,
        adjacency: impl IntoIterator<Item = (RegionId, RegionId)>,
    ) -> Result<Self> {
        Self::with_kind(PlacementKind::Custom, grid_width, grid_height, region_of, adjacency)
    }

    fn with_kind(
        kind: PlacementKind,
        grid_width: usize,
        grid_height: usize,
        region_of: Vec<RegionId>,
        adjacency: impl IntoIterator<Item = (RegionId, RegionId)>,
    ) -> Result<Self> {
        let cells = grid_width
            .checked_mul(grid_height)
            .filter(|&c| c > 0)
            .ok_or_else(|| Error::InvalidSpec(format!("grid {grid_width}x{grid_height} is empty or too large")))?;
        if region_of.len() != cells {
            return Err(Error::InvalidSpec(format!(
                "region table has {} entries for {cells} cells",
                region_of.len()
            )));
        }
        if let Some(&r) = region_of.iter().find(|&&r| r as usize >= cells) {
            return Err(Error::InvalidSpec(format!("region id {r} exceeds the cell count {cells}")));
        }
        let used: BTreeSet<RegionId> = region_of.iter().copied().collect();
        let mut pairs = BTreeSet::new();
        for (a, b) in adjacency {
            if a == b {
                return Err(Error::InvalidSpec(format!("region {a} cannot be adjacent to itself")));
            }
            for r in [a, b] {
                if !used.contains(&r) {
                    return Err(Error::InvalidSpec(format!("adjacency names unknown region {r}")));
                }
            }
            pairs.insert((a.min(b), a.max(b)));
        }
        Ok(Self {
            kind,
            grid_width,
            grid_height,
            region_of,
            adjacency: pairs.into_iter().collect(),
        })
    }

    pub fn built_in(kind: PlacementKind) -> Result<Self> {
        match kind {
            PlacementKind::D1Clustered => Ok(Self::d1()),
            PlacementKind::D2Blocks32x32 => Ok(Self::d2()),
            PlacementKind::D3Adjacent64x16 => Ok(Self::d3()),
            PlacementKind::D4Isolated64x16 => Ok(Self::d4()),
            PlacementKind::Custom => Err(invalid("custom placement has no built-in table")),
        }
    }

    pub fn d1() -> Self {
        Self::with_kind(PlacementKind::D1Clustered, 32, 32, vec![0; 1024], []).unwrap()
    }

    pub fn d2() -> Self {
        let regions = (0..1024u32).map(|i| (i / 32) / 2).collect();
        Self::with_kind(PlacementKind::D2Blocks32x32, 32, 32, regions, (0..15).map(|r| (r, r + 1))).unwrap()
    }

    pub fn d3() -> Self {
        Self::with_kind(PlacementKind::D3Adjacent64x16, 64, 16, lab_columns(), (0..63).map(|r| (r, r + 1))).unwrap()
    }

    pub fn d4() -> Self {
        Self::with_kind(PlacementKind::D4Isolated64x16, 64, 16, lab_columns(), []).unwrap()
    }

    /// Every cell its own region, no adjacency.
    pub fn independent(grid_width: usize, grid_height: usize) -> Result<Self> {
        let cells = grid_width * grid_height;
        Self::custom(grid_width, grid_height, (0..cells as RegionId).collect(), [])
    }

    pub fn single_region(grid_width: usize, grid_height: usize) -> Result<Self> {
        Self::custom(grid_width, grid_height, vec![0; grid_width * grid_height], [])
    }

    pub fn kind(&self) -> PlacementKind {
        self.kind
    }

    pub fn grid_width(&self) -> usize {
        self.grid_width
    }

    pub fn grid_height(&self) -> usize {
        self.grid_height
    }

    pub fn cell_count(&self) -> usize {
        self.region_of.len()
    }

    pub fn region_of(&self, cell: usize) -> RegionId {
        self.region_of[cell]
    }

    pub fn regions(&self) -> &[RegionId] {
        &self.region_of
    }

    pub fn adjacency(&self) -> &[(RegionId, RegionId)] {
        &self.adjacency
    }

    pub fn are_adjacent(&self, a: RegionId, b: RegionId) -> bool {
        self.adjacency.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    /// `(row, col)` of a cell index.
    pub fn position_of(&self, cell: usize) -> (u32, u32) {
        ((cell / self.grid_width) as u32, (cell % self.grid_width) as u32)
    }

    pub fn cell_at(&self, row: u32, col: u32) -> Option<usize> {
        let (row, col) = (row as usize, col as usize);
        (row < self.grid_height && col < self.grid_width).then(|| row * self.grid_width + col)
    }

    fn region_table_len(&self) -> usize {
        self.region_of.iter().map(|&r| r as usize + 1).max().unwrap_or(0)
    }

    /// Region sizes indexed by region id.
    pub fn region_sizes(&self) -> Vec<u64> {
        let mut sizes = vec![0u64; self.region_table_len()];
        for &r in &self.region_of {
            sizes[r as usize] += 1;
        }
        sizes
    }
}

fn lab_columns() -> Vec<RegionId> {
    (0..1024u32).map(|i| i % 64).collect()
}

/// Fraction of within-device cell pairs that share a region or sit in
/// adjacent regions.
pub fn regional_overlap_score(placement: &PlacementConfig) -> f64 {
    let n = placement.cell_count() as u64;
    let pairs = n * n.saturating_sub(1) / 2;
    if pairs == 0 {
        return 0.0;
    }
    let sizes = placement.region_sizes();
    let same: u64 = sizes.iter().map(|&s| s * s.saturating_sub(1) / 2).sum();
    let adjacent: u64 = placement
        .adjacency()
        .iter()
        .map(|&(a, b)| sizes[a as usize] * sizes[b as usize])
        .sum();
    (same + adjacent) as f64 / pairs as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MismatchWeights {
    pub global: f64,
    pub regional: f64,
    pub local: f64,
}

impl MismatchWeights {
    pub fn local_only() -> Self {
        Self {
            global: 0.0,
            regional: 0.0,
            local: 1.0,
        }
    }

    /// Regional share `w_r`, remainder local, no global component.
    pub fn with_regional(regional: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&regional) {
            return Err(Error::InvalidSpec(format!("regional weight {regional} outside [0, 1]")));
        }
        Ok(Self {
            global: 0.0,
            regional,
            local: (1.0 - regional * regional).sqrt(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ws = [self.global, self.regional, self.local];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidSpec(format!("weights must be non-negative, got {ws:?}")));
        }
        let norm: f64 = ws.iter().map(|w| w * w).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "squared weights must sum to 1 (got {norm}) so total variance stays sigma^2"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionBias {
    pub row: u32,
    pub col: u32,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub num_devices: usize,
    pub cells_per_device: usize,
    pub sigma_mismatch: f64,
    pub weights: MismatchWeights,
    pub placement: PlacementConfig,
    #[serde(default)]
    pub bias_map: Vec<PositionBias>,
    pub master_seed: u64,
}

impl PopulationSpec {
    /// Pure-local population on a placement with one region per cell.
    pub fn unbiased(num_devices: usize, cells_per_device: usize, sigma_mismatch: f64, master_seed: u64) -> Result<Self> {
        let placement = PlacementConfig::independent(cells_per_device, 1)?;
        Ok(Self {
            num_devices,
            cells_per_device,
            sigma_mismatch,
            weights: MismatchWeights::local_only(),
            placement,
            bias_map: Vec::new(),
            master_seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_devices == 0 || self.cells_per_device == 0 {
            return Err(Error::InvalidSpec("population needs at least one device and one cell".into()));
        }
        if !self.sigma_mismatch.is_finite() || self.sigma_mismatch <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "sigma_mismatch must be positive, got {}",
                self.sigma_mismatch
            )));
        }
        self.weights.validate()?;
        if self.placement.cell_count() != self.cells_per_device {
            return Err(Error::InvalidSpec(format!(
                "placement holds {} cells but cells_per_device is {}",
                self.placement.cell_count(),
                self.cells_per_device
            )));
        }
        for b in &self.bias_map {
            if self.placement.cell_at(b.row, b.col).is_none() || !b.offset.is_finite() {
                return Err(Error::InvalidSpec(format!("invalid bias entry {b:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub global_component: f64,
    pub regional_component: f64,
    pub local_component: f64,
    pub position: (u32, u32),
    pub region: RegionId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DevicePopulation {
    spec: PopulationSpec,
    cells: Vec<CellParams>,
    offsets: Vec<f64>,
}

impl DevicePopulation {
    /// Reassemble a population from stored parts (snapshot loading).
    pub fn from_parts(spec: PopulationSpec, cells: Vec<CellParams>, offsets: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if cells.len() != spec.num_devices * spec.cells_per_device || offsets.len() != spec.cells_per_device {
            return Err(Error::InvalidSpec("cell or offset table does not match the spec".into()));
        }
        Ok(Self { spec, cells, offsets })
    }

    pub fn spec(&self) -> &PopulationSpec {
        &self.spec
    }

    pub fn num_devices(&self) -> usize {
        self.spec.num_devices
    }

    pub fn cells_per_device(&self) -> usize {
        self.spec.cells_per_device
    }

    pub fn cells(&self) -> &[CellParams] {
        &self.cells
    }

    pub fn device(&self, device: usize) -> &[CellParams] {
        let n = self.spec.cells_per_device;
        &self.cells[device * n..(device + 1) * n]
    }

    /// Systematic offset per position, applied at readout.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn mismatch(&self, device: usize, position: usize) -> f64 {
        let c = &self.cells[device * self.spec.cells_per_device + position];
        let w = &self.spec.weights;
        w.global * c.global_component + w.regional * c.regional_component + w.local * c.local_component
    }
}

pub fn generate_population(spec: &PopulationSpec) -> Result<DevicePopulation> {
    spec.validate()?;
    let placement = &spec.placement;
    let region_count = placement.region_table_len();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); region_count];
    for (e, &(a, b)) in placement.adjacency().iter().enumerate() {
        incident[a as usize].push(e);
        incident[b as usize].push(e);
    }
    let used: Vec<bool> = placement.region_sizes().iter().map(|&s| s > 0).collect();
    let seed = spec.master_seed;
    let sigma = spec.sigma_mismatch;
    let n = spec.cells_per_device;

    let per_device: Vec<Vec<CellParams>> = (0..spec.num_devices)
        .into_par_iter()
        .map(|d| {
            let d64 = d as u64;
            let global = sigma * normal_at(seed, &[tag::GLOBAL, d64]);
            let edges: Vec<f64> = (0..placement.adjacency().len())
                .map(|e| normal_at(seed, &[tag::ADJACENCY, d64, e as u64]))
                .collect();
            let regional: Vec<f64> = (0..region_count)
                .map(|r| {
                    if !used[r] {
                        return 0.0;
                    }
                    let own = normal_at(seed, &[tag::REGION, d64, r as u64]);
                    let inc = &incident[r];
                    let z = if inc.is_empty() {
                        own
                    } else {
                        let shared: f64 = inc.iter().map(|&e| edges[e]).sum::<f64>() / (inc.len() as f64).sqrt();
                        FRAC_1_SQRT_2 * own + FRAC_1_SQRT_2 * shared
                    };
                    sigma * z
                })
                .collect();
            (0..n)
                .map(|c| {
                    let region = placement.region_of(c);
                    CellParams {
                        global_component: global,
                        regional_component: regional[region as usize],
                        local_component: sigma * normal_at(seed, &[tag::LOCAL, d64, c as u64]),
                        position: placement.position_of(c),
                        region,
                    }
                })
                .collect()
        })
        .collect();

    let population = DevicePopulation {
        spec: PopulationSpec {
            bias_map: Vec::new(),
            ..spec.clone()
        },
        cells: per_device.into_iter().flatten().collect(),
        offsets: vec![0.0; n],
    };
    inject_position_bias(&population, &spec.bias_map)
}

/// Set the systematic offset of each listed position; later entries for the
/// same position win.
pub fn inject_position_bias(population: &DevicePopulation, bias_map: &[PositionBias]) -> Result<DevicePopulation> {
    let placement = &population.spec.placement;
    let mut out = population.clone();
    for b in bias_map {
        let cell = placement
            .cell_at(b.row, b.col)
            .ok_or_else(|| invalid(format!("bias position ({}, {}) is outside the grid", b.row, b.col)))?;
        if !b.offset.is_finite() {
            return Err(invalid(format!("bias offset at ({}, {}) is not finite", b.row, b.col)));
        }
        out.offsets[cell] = b.offset;
        out.spec.bias_map.retain(|e| (e.row, e.col) != (b.row, b.col));
        out.spec.bias_map.push(*b);
    }
    Ok(out)
}
