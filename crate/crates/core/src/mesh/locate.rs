use super::element;
use super::Mesh;
use crate::error::Result;
use crate::geom::{Aabb, Point3};
use crate::spatial::BoxIndex;

/// Reference-space containment tolerance.
pub const LOCATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    /// Position of the region in the locator's region list.
    pub region: usize,
    pub elem: usize,
    pub local: Point3,
}

/// Containing-element search over a subset of a mesh's regions.
///
/// Ties (points on shared faces) go to the lowest `(region order, element index)`.
#[derive(Debug, Clone)]
pub struct Locator<'m> {
    mesh: &'m Mesh,
    regions: Vec<usize>,
    /// Box id -> (position in `regions`, element).
    owners: Vec<(usize, usize)>,
    sizes: Vec<f64>,
    index: BoxIndex,
}

impl<'m> Locator<'m> {
    pub fn new(mesh: &'m Mesh, regions: &[String]) -> Result<Self> {
        let regions: Vec<usize> = regions
            .iter()
            .map(|r| mesh.region_index(r))
            .collect::<Result<_>>()?;
        let mut boxes = Vec::new();
        let mut owners = Vec::new();
        let mut sizes = Vec::new();
        for (pos, &ri) in regions.iter().enumerate() {
            for (e, (_, conn)) in mesh.regions()[ri].elements().enumerate() {
                let b = Aabb::from_points(conn.iter().map(|&i| &mesh.nodes()[i as usize]));
                sizes.push(b.diagonal());
                boxes.push(b);
                owners.push((pos, e));
            }
        }
        Ok(Locator {
            mesh,
            regions,
            owners,
            sizes,
            index: BoxIndex::new(boxes),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    /// Mesh region index for a location's region position.
    pub fn region_index(&self, pos: usize) -> usize {
        self.regions[pos]
    }

    pub fn box_index(&self) -> &BoxIndex {
        &self.index
    }

    /// Box id -> (region position, element).
    pub fn owner(&self, id: usize) -> (usize, usize) {
        self.owners[id]
    }

    pub fn locate(&self, p: &Point3) -> Option<Location> {
        // box ids follow (region order, element index), so the first hit wins ties
        for id in self.index.candidates(p) {
            let (pos, elem) = self.owners[id];
            let region = &self.mesh.regions()[self.regions[pos]];
            let (etype, conn) = region.element(elem).expect("element in range");
            let coords = self.mesh.element_coords(conn);
            if let Some(local) =
                element::locate_in_element(etype, &coords, p, LOCATE_TOL, self.sizes[id])
            {
                return Some(Location {
                    region: pos,
                    elem,
                    local,
                });
            }
        }
        None
    }
}

/// One-shot convenience over [`Locator`].
pub fn locate_point(mesh: &Mesh, regions: &[String], p: &Point3) -> Result<Option<Location>> {
    Ok(Locator::new(mesh, regions)?.locate(p))
}
