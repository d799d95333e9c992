use serde::{Deserialize, Serialize};

use super::Mesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityKind {
    Node,
    Cell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Domain {
    Time,
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ValueKind {
    Real,
    Complex,
}

impl Domain {
    /// Time data is real, frequency data is complex.
    pub fn value_kind(self) -> ValueKind {
        match self {
            Domain::Time => ValueKind::Real,
            Domain::Frequency => ValueKind::Complex,
        }
    }
}

/// Descriptor of a field: where it lives and what shape its values have.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldQuantity {
    pub name: String,
    pub defined_on: EntityKind,
    pub components: usize,
    pub domain: Domain,
    pub regions: Vec<String>,
}

impl FieldQuantity {
    pub fn new(
        name: impl Into<String>,
        defined_on: EntityKind,
        components: usize,
        domain: Domain,
        regions: Vec<String>,
    ) -> Result<Self> {
        let name = name.into();
        if components != 1 && components != 3 {
            return Err(Error::validation(format!(
                "quantity '{name}': components must be 1 or 3, got {components}"
            )));
        }
        Ok(FieldQuantity {
            name,
            defined_on,
            components,
            domain,
            regions,
        })
    }

    pub fn value_kind(&self) -> ValueKind {
        self.domain.value_kind()
    }

    pub fn is_complex(&self) -> bool {
        self.value_kind() == ValueKind::Complex
    }

    /// Number of f64 values stored per entity.
    pub fn width(&self) -> usize {
        self.components * if self.is_complex() { 2 } else { 1 }
    }

    pub fn with_name(&self, name: &str) -> Self {
        FieldQuantity {
            name: name.to_string(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionValues {
    pub region: String,
    /// Entity-major, components contiguous (re, im interleaved for complex data).
    pub data: Vec<f64>,
}

/// One time or frequency step of a quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldStep {
    pub quantity: FieldQuantity,
    pub step_index: usize,
    pub step_value: f64,
    pub values: Vec<RegionValues>,
}

impl FieldStep {
    pub fn region(&self, name: &str) -> Option<&[f64]> {
        self.values
            .iter()
            .find(|v| v.region == name)
            .map(|v| v.data.as_slice())
    }

    /// Checks the array sizes against the mesh and the quantity's region list.
    pub fn check_against(&self, mesh: &Mesh) -> Result<()> {
        let q = &self.quantity;
        if self.values.len() != q.regions.len() {
            return Err(Error::validation(format!(
                "quantity '{}': {} region arrays for {} regions",
                q.name,
                self.values.len(),
                q.regions.len()
            )));
        }
        for (rv, name) in self.values.iter().zip(&q.regions) {
            if &rv.region != name {
                return Err(Error::validation(format!(
                    "quantity '{}': region array '{}' where '{}' was expected",
                    q.name, rv.region, name
                )));
            }
            let expect = mesh.region(name)?.num_entities(q.defined_on) * q.width();
            if rv.data.len() != expect {
                return Err(Error::validation(format!(
                    "quantity '{}' region '{}': {} values, expected {}",
                    q.name,
                    name,
                    rv.data.len(),
                    expect
                )));
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.data.iter().all(|x| x.is_finite()))
    }
}
