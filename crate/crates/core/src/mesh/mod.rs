//! Immutable unstructured mesh with named regions.
//!
//! Node indices are 0-based. Each region owns a list of element blocks; an
//! element is addressed by `(region, elem)` where `elem` runs over the blocks
//! of the region in order.

pub mod element;
pub mod field;
pub mod locate;

use std::collections::HashSet;

pub use element::{shape_values, ElementType};
pub use field::{Domain, EntityKind, FieldQuantity, FieldStep, RegionValues, ValueKind};
pub use locate::{Location, Locator};

use crate::error::{Error, Result};
use crate::geom::{self, Aabb, Point3};

#[derive(Debug, Clone, PartialEq)]
pub struct ElementBlock {
    pub etype: ElementType,
    /// Element-major node indices, `etype.num_nodes()` per element.
    pub connectivity: Vec<u32>,
}

impl ElementBlock {
    pub fn new(etype: ElementType, connectivity: Vec<u32>) -> Self {
        ElementBlock {
            etype,
            connectivity,
        }
    }

    pub fn num_elements(&self) -> usize {
        self.connectivity.len() / self.etype.num_nodes()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    name: String,
    blocks: Vec<ElementBlock>,
    /// Prefix sums of block element counts; `offsets[b]` is the first element of block b.
    offsets: Vec<usize>,
    /// Sorted, de-duplicated nodes referenced by the region's elements.
    nodes: Vec<u32>,
}

impl Region {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn blocks(&self) -> &[ElementBlock] {
        &self.blocks
    }

    pub fn num_elements(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Nodes of the region in ascending order; the entity order of nodal data.
    pub fn nodes(&self) -> &[u32] {
        &self.nodes
    }

    pub fn num_entities(&self, kind: EntityKind) -> usize {
        match kind {
            EntityKind::Node => self.nodes.len(),
            EntityKind::Cell => self.num_elements(),
        }
    }

    /// Highest element dimension in the region.
    pub fn dimension(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.etype.dimension())
            .max()
            .unwrap_or(0)
    }

    pub fn element(&self, elem: usize) -> Option<(ElementType, &[u32])> {
        if elem >= self.num_elements() {
            return None;
        }
        let b = self.offsets.partition_point(|&o| o <= elem) - 1;
        let block = &self.blocks[b];
        let n = block.etype.num_nodes();
        let local = elem - self.offsets[b];
        Some((block.etype, &block.connectivity[local * n..(local + 1) * n]))
    }

    pub fn elements(&self) -> impl Iterator<Item = (ElementType, &[u32])> + '_ {
        self.blocks.iter().flat_map(|b| {
            let n = b.etype.num_nodes();
            b.connectivity.chunks_exact(n).map(move |c| (b.etype, c))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point3>,
    regions: Vec<Region>,
}

impl Mesh {
    pub fn new(nodes: Vec<Point3>, regions: Vec<(String, Vec<ElementBlock>)>) -> Result<Mesh> {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(regions.len());
        for (name, blocks) in regions {
            if name.is_empty() {
                return Err(Error::Mesh("empty region name".into()));
            }
            if !seen.insert(name.clone()) {
                return Err(Error::Mesh(format!("duplicate region name '{name}'")));
            }
            let mut offsets = vec![0];
            let mut used = Vec::new();
            for (bi, b) in blocks.iter().enumerate() {
                let n = b.etype.num_nodes();
                if b.connectivity.len() % n != 0 {
                    return Err(Error::Mesh(format!(
                        "region '{name}' block {bi}: connectivity length {} is not a multiple of {n} ({})",
                        b.connectivity.len(),
                        b.etype
                    )));
                }
                if let Some(&bad) = b.connectivity.iter().find(|&&i| i as usize >= nodes.len()) {
                    return Err(Error::Mesh(format!(
                        "region '{name}' block {bi}: node index {bad} out of range (mesh has {} nodes)",
                        nodes.len()
                    )));
                }
                used.extend_from_slice(&b.connectivity);
                offsets.push(offsets.last().unwrap() + b.num_elements());
            }
            used.sort_unstable();
            used.dedup();
            out.push(Region {
                name,
                blocks,
                offsets,
                nodes: used,
            });
        }
        Ok(Mesh {
            nodes,
            regions: out,
        })
    }

    pub fn nodes(&self) -> &[Point3] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn num_elements(&self) -> usize {
        self.regions.iter().map(Region::num_elements).sum()
    }

    /// Highest element dimension over all regions (2 or 3 for non-empty meshes).
    pub fn dimension(&self) -> usize {
        self.regions.iter().map(Region::dimension).max().unwrap_or(0)
    }

    pub fn region_index(&self, name: &str) -> Result<usize> {
        self.regions
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| {
                Error::Mesh(format!(
                    "unknown region '{name}' (available: {})",
                    self.region_names().join(", ")
                ))
            })
    }

    pub fn region(&self, name: &str) -> Result<&Region> {
        Ok(&self.regions[self.region_index(name)?])
    }

    pub fn region_names(&self) -> Vec<String> {
        self.regions.iter().map(|r| r.name.clone()).collect()
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(&self.nodes)
    }

    fn element_of(&self, region: &str, elem: usize) -> Result<(ElementType, &[u32])> {
        let r = self.region(region)?;
        r.element(elem).ok_or_else(|| {
            Error::Mesh(format!(
                "element {elem} out of range in region '{region}' ({} elements)",
                r.num_elements()
            ))
        })
    }

    pub fn element_coords(&self, conn: &[u32]) -> Vec<Point3> {
        conn.iter().map(|&i| self.nodes[i as usize]).collect()
    }

    /// Arithmetic mean of the element's node coordinates.
    pub fn element_centroid(&self, region: &str, elem: usize) -> Result<Point3> {
        let (_, conn) = self.element_of(region, elem)?;
        Ok(self.centroid_of(conn))
    }

    pub(crate) fn centroid_of(&self, conn: &[u32]) -> Point3 {
        let mut c = [0.0; 3];
        for &i in conn {
            c = geom::add(&c, &self.nodes[i as usize]);
        }
        geom::scale(&c, 1.0 / conn.len() as f64)
    }

    /// Volume (solids) or area (surface elements); inverted elements are an error.
    pub fn element_measure(&self, region: &str, elem: usize) -> Result<f64> {
        let (etype, conn) = self.element_of(region, elem)?;
        let m = element::signed_measure(etype, &self.element_coords(conn));
        if m < 0.0 {
            return Err(Error::Mesh(format!(
                "inverted element {elem} ({etype}) in region '{region}': measure {m:e}"
            )));
        }
        Ok(m)
    }

    /// Centroids of all elements of a region, in element order.
    pub fn region_centroids(&self, region: &Region) -> Vec<Point3> {
        region.elements().map(|(_, c)| self.centroid_of(c)).collect()
    }

    /// Measures of all elements of a region, in element order.
    pub fn region_measures(&self, region: &Region) -> Result<Vec<f64>> {
        (0..region.num_elements())
            .map(|e| self.element_measure(&region.name, e))
            .collect()
    }

    /// Coordinates of the entities carrying data of the given kind.
    pub fn entity_points(&self, region: &Region, kind: EntityKind) -> Vec<Point3> {
        match kind {
            EntityKind::Node => region.nodes.iter().map(|&i| self.nodes[i as usize]).collect(),
            EntityKind::Cell => self.region_centroids(region),
        }
    }

    /// True when both meshes have the same node count, element count and node
    /// coordinates within `tol`.
    pub fn same_geometry(&self, other: &Mesh, tol: f64) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.num_elements() == other.num_elements()
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|(a, b)| (0..3).all(|k| (a[k] - b[k]).abs() <= tol))
    }
}
