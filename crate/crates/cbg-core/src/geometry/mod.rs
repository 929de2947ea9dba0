//! Parametric labyrinth-CBG structure: ring layout, layer stack, validation,
//! and rasterization onto a Yee-compatible permittivity grid.
//!
//! All lengths are nanometers, all angles radians.

mod mask;
mod raster;

pub use mask::{etched_plane_mask, is_electrically_connected, write_pgm, Mask};
pub use raster::{rasterize, DrudeMedium, GridSpec, PermittivityGrid};

/// Yee sample offset (in cell units) of E component `c`.
pub fn raster_offsets(c: usize) -> [f64; 3] {
    raster::E_OFFSETS[c]
}

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Minimum manufacturable etch width (nm); trenches narrower than this
/// cannot be etched through the membrane reliably.
pub const MIN_ETCH_WIDTH_NM: f64 = 65.0;

/// Default bridge width (nm), chosen for reliable electrical connection.
pub const DEFAULT_BRIDGE_WIDTH_NM: f64 = 125.0;

/// Refractive-index threshold above which a top layer counts as part of
/// the patterned semiconductor membrane.
const MEMBRANE_MIN_INDEX: f64 = 2.5;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid design: {0:?}")]
    InvalidDesign(Vec<String>),
    #[error("bridge unresolvable: resolution {resolution_nm} nm exceeds half the bridge width ({bridge_width_nm} nm)")]
    BridgeUnresolvable {
        resolution_nm: f64,
        bridge_width_nm: f64,
    },
    #[error("grid of {required_bytes} bytes exceeds the configured cap of {cap_bytes} bytes ({dims:?} cells)")]
    GridTooLarge {
        required_bytes: u64,
        cap_bytes: u64,
        dims: [usize; 3],
    },
    #[error("design file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("design parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Dispersion treatment of a metallic layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetalModel {
    /// Short-circuit boundary; the default for tests and acceptance runs.
    PerfectConductor,
    /// Single-pole Drude model eps(w) = eps_inf - wp^2 / (w^2 + i w gamma),
    /// with eps_inf taken from the material's refractive index squared.
    Drude {
        plasma_frequency_rad_s: f64,
        collision_rate_rad_s: f64,
    },
}

/// Optical material description at the design wavelength (cryogenic values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    #[serde(rename = "material")]
    pub name: String,
    /// For metals this is sqrt(eps_inf) of the Drude background.
    #[serde(rename = "n")]
    pub refractive_index: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metal: Option<MetalModel>,
}

impl MaterialSpec {
    pub fn dielectric(name: &str, refractive_index: f64) -> Self {
        Self {
            name: name.to_string(),
            refractive_index,
            metal: None,
        }
    }

    /// Gold back mirror as a perfect electric conductor.
    pub fn gold_pec() -> Self {
        Self {
            name: "gold".to_string(),
            refractive_index: 1.0,
            metal: Some(MetalModel::PerfectConductor),
        }
    }

    /// Gold back mirror as a single-pole Drude metal. Parameters are the
    /// widely used near-infrared fit (plasma frequency 1.37e16 rad/s,
    /// collision rate 1.05e14 rad/s, eps_inf ~ 9.5).
    pub fn gold_drude() -> Self {
        Self {
            name: "gold".to_string(),
            refractive_index: 9.5f64.sqrt(),
            metal: Some(MetalModel::Drude {
                plasma_frequency_rad_s: 1.37e16,
                collision_rate_rad_s: 1.05e14,
            }),
        }
    }

    pub fn is_metal(&self) -> bool {
        self.metal.is_some()
    }

    pub fn permittivity(&self) -> f64 {
        self.refractive_index * self.refractive_index
    }
}

/// One layer of the vertical stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    #[serde(flatten)]
    pub material: MaterialSpec,
    pub thickness_nm: f64,
}

/// Vertical layer stack, ordered bottom-to-top, plus the dipole placement.
///
/// The patterned membrane is the contiguous run of topmost non-metal layers
/// with index >= 2.5 (semiconductors), unless `membrane_layers` overrides
/// the count. A barrier variant is simply a three-layer membrane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    pub layers: Vec<Layer>,
    /// Number of topmost layers forming the etched membrane; inferred from
    /// refractive indices when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub membrane_layers: Option<usize>,
    /// Dipole height above the membrane bottom; membrane center when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dipole_offset_nm: Option<f64>,
}

impl LayerStack {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self {
            layers,
            membrane_layers: None,
            dipole_offset_nm: None,
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Number of topmost layers forming the membrane.
    pub fn membrane_layer_count(&self) -> usize {
        if let Some(n) = self.membrane_layers {
            return n.min(self.layers.len());
        }
        self.layers
            .iter()
            .rev()
            .take_while(|l| !l.material.is_metal() && l.material.refractive_index >= MEMBRANE_MIN_INDEX)
            .count()
    }

    /// Index of the first membrane layer in `layers`.
    pub fn membrane_start(&self) -> usize {
        self.layers.len() - self.membrane_layer_count()
    }

    pub fn membrane_thickness_nm(&self) -> f64 {
        self.layers[self.membrane_start()..]
            .iter()
            .map(|l| l.thickness_nm)
            .sum()
    }

    /// Height of the membrane bottom above the stack bottom.
    pub fn membrane_bottom_nm(&self) -> f64 {
        self.layers[..self.membrane_start()]
            .iter()
            .map(|l| l.thickness_nm)
            .sum()
    }

    pub fn total_thickness_nm(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness_nm).sum()
    }

    /// Dipole height above the stack bottom.
    pub fn dipole_z_nm(&self) -> f64 {
        let offset = self
            .dipole_offset_nm
            .unwrap_or_else(|| self.membrane_thickness_nm() / 2.0);
        self.membrane_bottom_nm() + offset
    }

    /// Bare membrane floating in air: strips everything below the membrane.
    /// This is the simplified model used by the first optimization stage.
    pub fn suspended(&self) -> LayerStack {
        LayerStack {
            layers: self.layers[self.membrane_start()..].to_vec(),
            membrane_layers: self.membrane_layers.map(|n| n.min(self.membrane_layer_count())),
            dipole_offset_nm: self.dipole_offset_nm,
        }
    }
}

/// Full parametric description of one labyrinth-CBG device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbgDesign {
    pub inner_radius_nm: f64,
    pub grating_period_nm: f64,
    pub etch_width_nm: f64,
    pub num_rings: u32,
    #[serde(default = "default_bridge_width")]
    pub bridge_width_nm: f64,
    #[serde(default = "default_bridge_count")]
    pub bridge_count: u32,
    /// Bridge spoke directions; evenly spaced starting at 0 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bridge_angles_rad: Option<Vec<f64>>,
    #[serde(flatten)]
    pub stack: LayerStack,
    pub target_wavelength_nm: f64,
}

fn default_bridge_width() -> f64 {
    DEFAULT_BRIDGE_WIDTH_NM
}

fn default_bridge_count() -> u32 {
    4
}

impl CbgDesign {
    /// Bridge angles, explicit or evenly distributed.
    pub fn bridge_angles(&self) -> Vec<f64> {
        match &self.bridge_angles_rad {
            Some(a) => a.clone(),
            None => (0..self.bridge_count)
                .map(|i| i as f64 * 2.0 * std::f64::consts::PI / self.bridge_count.max(1) as f64)
                .collect(),
        }
    }

    /// Outer radius of the outermost ring, or the inner radius if unpatterned.
    pub fn outer_radius_nm(&self) -> f64 {
        if self.num_rings == 0 {
            self.inner_radius_nm
        } else {
            self.inner_radius_nm
                + (self.num_rings - 1) as f64 * self.grating_period_nm
                + self.etch_width_nm / 2.0
        }
    }

    /// Copy of the design with the stack reduced to the suspended membrane.
    pub fn suspended(&self) -> CbgDesign {
        CbgDesign {
            stack: self.stack.suspended(),
            ..self.clone()
        }
    }

    pub fn validated(self) -> Result<CbgDesign, GeometryError> {
        let violations = validate(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(GeometryError::InvalidDesign(violations))
        }
    }
}

/// Inner/outer radii of the n-th ring (1-based): R + (n-1)P -+ W/2.
pub fn ring_annuli(design: &CbgDesign) -> Vec<(f64, f64)> {
    (1..=design.num_rings)
        .map(|n| {
            let center = design.inner_radius_nm + (n - 1) as f64 * design.grating_period_nm;
            (
                center - design.etch_width_nm / 2.0,
                center + design.etch_width_nm / 2.0,
            )
        })
        .collect()
}

/// Checks every design invariant; empty result means the design is valid.
pub fn validate(design: &CbgDesign) -> Vec<String> {
    let mut violations = Vec::new();
    let d = design;
    for (name, v) in [
        ("inner radius", d.inner_radius_nm),
        ("grating period", d.grating_period_nm),
        ("etch width", d.etch_width_nm),
        ("bridge width", d.bridge_width_nm),
        ("target wavelength", d.target_wavelength_nm),
    ] {
        if !v.is_finite() || v <= 0.0 {
            violations.push(format!("{name} must be positive and finite (got {v})"));
        }
    }
    if d.etch_width_nm < MIN_ETCH_WIDTH_NM {
        violations.push(format!(
            "etch width below {MIN_ETCH_WIDTH_NM} nm minimum (got {} nm)",
            d.etch_width_nm
        ));
    }
    if d.etch_width_nm >= d.grating_period_nm {
        violations.push(format!(
            "etch width >= period ({} >= {}): annuli would overlap",
            d.etch_width_nm, d.grating_period_nm
        ));
    }
    if d.inner_radius_nm <= d.etch_width_nm / 2.0 {
        violations.push(format!(
            "inner radius {} nm must exceed half the etch width {} nm",
            d.inner_radius_nm,
            d.etch_width_nm / 2.0
        ));
    }
    if let Some(angles) = &d.bridge_angles_rad {
        if angles.len() != d.bridge_count as usize {
            violations.push(format!(
                "bridge angle list has {} entries for bridge count {}",
                angles.len(),
                d.bridge_count
            ));
        }
    }
    if d.stack.layers.is_empty() {
        violations.push("layer stack is empty".to_string());
    }
    for (i, layer) in d.stack.layers.iter().enumerate() {
        if !(layer.thickness_nm.is_finite() && layer.thickness_nm > 0.0) {
            violations.push(format!(
                "layer {i} ({}) thickness must be positive (got {} nm)",
                layer.material.name, layer.thickness_nm
            ));
        }
        if !(layer.material.refractive_index.is_finite() && layer.material.refractive_index > 0.0) {
            violations.push(format!(
                "layer {i} ({}) refractive index must be positive",
                layer.material.name
            ));
        }
    }
    if !d.stack.layers.is_empty() {
        if d.stack.membrane_layer_count() == 0 {
            violations.push("no semiconductor membrane layer found".to_string());
        } else {
            let t_m = d.stack.membrane_thickness_nm();
            if let Some(offset) = d.stack.dipole_offset_nm {
                if !(offset > 0.0 && offset < t_m) {
                    violations.push(format!(
                        "dipole offset {offset} nm must lie strictly inside the {t_m} nm membrane"
                    ));
                }
            }
            for layer in &d.stack.layers[d.stack.membrane_start()..] {
                if layer.material.is_metal() {
                    violations.push("membrane contains a metal layer".to_string());
                }
            }
        }
    }
    violations
}

/// Loads a design from a JSON file.
pub fn load_design(path: &Path) -> Result<CbgDesign, GeometryError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Saves a design as pretty-printed JSON.
pub fn save_design(design: &CbgDesign, path: &Path) -> Result<(), GeometryError> {
    std::fs::write(path, serde_json::to_string_pretty(design)?)?;
    Ok(())
}

/// Built-in design presets seeded from the three optimized parameter sets
/// plus the tunnel-barrier variant.
pub mod presets {
    use super::*;

    const GOLD_THICKNESS_NM: f64 = 100.0;
    pub const DEFAULT_NUM_RINGS: u32 = 6;

    fn three_layer(
        n_sc: f64,
        sc_name: &str,
        t_sc: f64,
        n_spacer: f64,
        t_s: f64,
    ) -> LayerStack {
        LayerStack::new(vec![
            Layer {
                material: MaterialSpec::gold_pec(),
                thickness_nm: GOLD_THICKNESS_NM,
            },
            Layer {
                material: MaterialSpec::dielectric("Al2O3", n_spacer),
                thickness_nm: t_s,
            },
            Layer {
                material: MaterialSpec::dielectric(sc_name, n_sc),
                thickness_nm: t_sc,
            },
        ])
    }

    /// 780 nm device: Al(0.33)GaAs membrane on Al2O3 spacer over gold.
    pub fn cbg780() -> CbgDesign {
        CbgDesign {
            inner_radius_nm: 362.0,
            grating_period_nm: 313.0,
            etch_width_nm: 68.0,
            num_rings: DEFAULT_NUM_RINGS,
            bridge_width_nm: DEFAULT_BRIDGE_WIDTH_NM,
            bridge_count: 4,
            bridge_angles_rad: None,
            stack: three_layer(3.35, "AlGaAs33", 124.0, 1.627, 172.0),
            target_wavelength_nm: 780.0,
        }
    }

    /// 930 nm device: GaAs membrane on Al2O3 spacer over gold.
    pub fn cbg930() -> CbgDesign {
        CbgDesign {
            inner_radius_nm: 405.0,
            grating_period_nm: 357.0,
            etch_width_nm: 80.0,
            num_rings: DEFAULT_NUM_RINGS,
            bridge_width_nm: DEFAULT_BRIDGE_WIDTH_NM,
            bridge_count: 4,
            bridge_angles_rad: None,
            stack: three_layer(3.52, "GaAs", 153.0, 1.62, 200.0),
            target_wavelength_nm: 930.0,
        }
    }

    /// 1550 nm device: In(0.53)Al(0.23)GaAs membrane on Al2O3 spacer over gold.
    pub fn cbg1550() -> CbgDesign {
        CbgDesign {
            inner_radius_nm: 725.0,
            grating_period_nm: 649.0,
            etch_width_nm: 146.0,
            num_rings: DEFAULT_NUM_RINGS,
            bridge_width_nm: DEFAULT_BRIDGE_WIDTH_NM,
            bridge_count: 4,
            bridge_angles_rad: None,
            stack: three_layer(3.3, "InAlGaAs", 258.0, 1.617, 328.0),
            target_wavelength_nm: 1550.0,
        }
    }

    /// 930 nm device with an 18 nm Al(0.8)GaAs tunnel barrier splitting the
    /// membrane (50 nm below / 83 nm above); dipole 9 nm above the barrier.
    pub fn cbg930_barrier() -> CbgDesign {
        let stack = LayerStack {
            layers: vec![
                Layer {
                    material: MaterialSpec::gold_pec(),
                    thickness_nm: GOLD_THICKNESS_NM,
                },
                Layer {
                    material: MaterialSpec::dielectric("Al2O3", 1.62),
                    thickness_nm: 200.0,
                },
                Layer {
                    material: MaterialSpec::dielectric("GaAs", 3.52),
                    thickness_nm: 50.0,
                },
                Layer {
                    material: MaterialSpec::dielectric("AlGaAs80", 3.01),
                    thickness_nm: 18.0,
                },
                Layer {
                    material: MaterialSpec::dielectric("GaAs", 3.52),
                    thickness_nm: 83.0,
                },
            ],
            membrane_layers: None,
            dipole_offset_nm: Some(50.0 + 18.0 + 9.0),
        };
        CbgDesign {
            inner_radius_nm: 750.0,
            grating_period_nm: 370.0,
            etch_width_nm: 75.0,
            num_rings: DEFAULT_NUM_RINGS,
            bridge_width_nm: DEFAULT_BRIDGE_WIDTH_NM,
            bridge_count: 4,
            bridge_angles_rad: None,
            stack,
            target_wavelength_nm: 930.0,
        }
    }

    /// Looks a preset up by CLI name.
    pub fn by_name(name: &str) -> Option<CbgDesign> {
        match name {
            "cbg780" => Some(cbg780()),
            "cbg930" => Some(cbg930()),
            "cbg1550" => Some(cbg1550()),
            "cbg930-barrier" => Some(cbg930_barrier()),
            _ => None,
        }
    }

    pub const NAMES: [&str; 4] = ["cbg780", "cbg930", "cbg1550", "cbg930-barrier"];
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ring_annuli_930_first_ring() {
        let d = presets::cbg930();
        let rings = ring_annuli(&d);
        assert_eq!(rings.len(), d.num_rings as usize);
        assert_eq!(rings[0], (365.0, 445.0));
    }

    #[test]
    fn ring_annuli_1550_second_ring() {
        let d = presets::cbg1550();
        let rings = ring_annuli(&d);
        assert_eq!(rings[1], (1301.0, 1447.0));
    }

    #[test]
    fn ring_annuli_zero_width_limit() {
        let mut d = presets::cbg930();
        d.etch_width_nm = 0.0;
        let rings = ring_annuli(&d);
        for (n, (lo, hi)) in rings.iter().enumerate() {
            let center = d.inner_radius_nm + n as f64 * d.grating_period_nm;
            assert_relative_eq!(*lo, center);
            assert_relative_eq!(*hi, center);
        }
    }

    #[test]
    fn ring_annuli_matches_formula_exhaustively() {
        for d in [presets::cbg780(), presets::cbg930(), presets::cbg1550()] {
            let rings = ring_annuli(&d);
            for n in 1..=d.num_rings {
                let (lo, hi) = rings[(n - 1) as usize];
                let center = d.inner_radius_nm + (n - 1) as f64 * d.grating_period_nm;
                assert_eq!(lo, center - d.etch_width_nm / 2.0);
                assert_eq!(hi, center + d.etch_width_nm / 2.0);
            }
            // Pairwise disjoint and sorted.
            for w in rings.windows(2) {
                assert!(w[0].1 < w[1].0);
            }
        }
    }

    #[test]
    fn table_presets_validate_clean() {
        for name in presets::NAMES {
            let d = presets::by_name(name).unwrap();
            assert!(validate(&d).is_empty(), "{name}: {:?}", validate(&d));
        }
    }

    #[test]
    fn narrow_etch_is_flagged() {
        let mut d = presets::cbg780();
        d.etch_width_nm = 64.0;
        let v = validate(&d);
        assert!(v.iter().any(|m| m.contains("below 65 nm")), "{v:?}");
    }

    #[test]
    fn overlapping_annuli_are_flagged() {
        let mut d = presets::cbg930();
        d.etch_width_nm = 400.0;
        let v = validate(&d);
        assert!(v.iter().any(|m| m.contains("etch width >= period")), "{v:?}");
    }

    #[test]
    fn dipole_outside_membrane_is_flagged() {
        let mut d = presets::cbg930();
        d.stack.dipole_offset_nm = Some(153.0);
        assert!(!validate(&d).is_empty());
        d.stack.dipole_offset_nm = Some(76.0);
        assert!(validate(&d).is_empty());
    }

    #[test]
    fn membrane_inference_handles_barrier_stack() {
        let d = presets::cbg930_barrier();
        assert_eq!(d.stack.membrane_layer_count(), 3);
        assert_relative_eq!(d.stack.membrane_thickness_nm(), 151.0);
        assert_relative_eq!(d.stack.membrane_bottom_nm(), 300.0);
        assert_relative_eq!(d.stack.dipole_z_nm(), 377.0);
    }

    #[test]
    fn suspended_stack_drops_everything_below_membrane() {
        let d = presets::cbg930().suspended();
        assert_eq!(d.stack.layers.len(), 1);
        assert_eq!(d.stack.layers[0].material.name, "GaAs");
        assert!(validate(&d).is_empty());
    }

    #[test]
    fn design_json_round_trip() {
        let d = presets::cbg930_barrier();
        let json = serde_json::to_string_pretty(&d).unwrap();
        // JSON uses the documented key names.
        for key in [
            "inner_radius_nm",
            "grating_period_nm",
            "etch_width_nm",
            "num_rings",
            "bridge_width_nm",
            "bridge_count",
            "layers",
            "dipole_offset_nm",
            "target_wavelength_nm",
            "\"material\"",
            "\"n\"",
        ] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
        let back: CbgDesign = serde_json::from_str(&json).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn design_json_defaults_apply() {
        let json = r#"{
            "inner_radius_nm": 405, "grating_period_nm": 357, "etch_width_nm": 80,
            "num_rings": 4, "target_wavelength_nm": 930,
            "layers": [{"material": "GaAs", "n": 3.52, "thickness_nm": 153}]
        }"#;
        let d: CbgDesign = serde_json::from_str(json).unwrap();
        assert_eq!(d.bridge_width_nm, 125.0);
        assert_eq!(d.bridge_count, 4);
        let angles = d.bridge_angles();
        assert_eq!(angles.len(), 4);
        assert_relative_eq!(angles[1], std::f64::consts::FRAC_PI_2);
    }
}
