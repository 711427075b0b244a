use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::project_point;
use crate::spline::Spline;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Curve,
    Surface,
}

/// One spline entity of a CAD model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: usize,
    pub kind: EntityKind,
    pub spline: Spline,
    /// Surfaces this curve bounds, in the order the topology lists them.
    #[serde(default)]
    pub owner_ids: Vec<usize>,
    /// Curve living in the parameter space of a surface (not in model space); such curves are
    /// carried through untouched by both pipelines.
    #[serde(default)]
    pub parametric_space: bool,
}

impl Entity {
    pub fn new(id: usize, spline: Spline) -> Result<Self> {
        let kind = match spline.param_dim() {
            1 => EntityKind::Curve,
            2 => EntityKind::Surface,
            n => {
                return Err(Error::Model(format!(
                    "entity {id}: {n} parametric directions (curves and surfaces only)"
                )))
            }
        };
        Ok(Entity {
            id,
            kind,
            spline,
            owner_ids: Vec::new(),
            parametric_space: false,
        })
    }

    pub fn with_owners(mut self, owners: Vec<usize>) -> Self {
        self.owner_ids = owners;
        self
    }

    /// Whether the pipelines deform this entity.
    pub fn is_geometric(&self) -> bool {
        !self.parametric_space
    }
}

/// A non-geometric CAD record (topology, attributes, ...), kept verbatim.
///
/// `directory` holds the two 72-column directory lines and `parameters` the 64-column data
/// fields of the parameter lines, exactly as read.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyRecord {
    pub id: usize,
    pub entity_type: u32,
    pub directory: [String; 2],
    pub parameters: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeometryModel {
    pub entities: Vec<Entity>,
    #[serde(default)]
    pub topology: Vec<TopologyRecord>,
}

impl GeometryModel {
    pub fn new(entities: Vec<Entity>, topology: Vec<TopologyRecord>) -> Result<Self> {
        let m = GeometryModel { entities, topology };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for id in self
            .entities
            .iter()
            .map(|e| e.id)
            .chain(self.topology.iter().map(|t| t.id))
        {
            if !ids.insert(id) {
                return Err(Error::Model(format!("duplicate id {id}")));
            }
        }
        let surfaces: HashSet<usize> = self
            .entities
            .iter()
            .filter(|e| e.kind == EntityKind::Surface)
            .map(|e| e.id)
            .collect();
        for e in &self.entities {
            let expected = match e.kind {
                EntityKind::Curve => 1,
                EntityKind::Surface => 2,
            };
            if e.spline.param_dim() != expected {
                return Err(Error::Model(format!(
                    "entity {}: kind {:?} but {} parametric directions",
                    e.id,
                    e.kind,
                    e.spline.param_dim()
                )));
            }
            if let Some(o) = e.owner_ids.iter().find(|o| !surfaces.contains(o)) {
                return Err(Error::Model(format!(
                    "entity {}: owner {o} is not a surface of the model",
                    e.id
                )));
            }
        }
        Ok(())
    }

    pub fn entity(&self, id: usize) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn index_of(&self) -> HashMap<usize, usize> {
        self.entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id, i))
            .collect()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &Entity> {
        self.entities
            .iter()
            .filter(|e| e.kind == EntityKind::Surface)
    }

    pub fn curves(&self) -> impl Iterator<Item = &Entity> {
        self.entities.iter().filter(|e| e.kind == EntityKind::Curve)
    }

    /// Copy with every entity spline replaced by `f(entity)`; ids, order and topology kept.
    pub fn map_splines(&self, mut f: impl FnMut(&Entity) -> Spline) -> Result<Self> {
        let entities = self
            .entities
            .iter()
            .map(|e| Entity {
                spline: f(e),
                ..e.clone()
            })
            .collect();
        GeometryModel::new(entities, self.topology.clone())
    }

    /// For model-space curves without owners, adopt every surface that the curve lies on
    /// (nine samples within `tol`). Returns the ids of curves that gained owners.
    pub fn infer_owners(&mut self, tol: f64) -> Vec<usize> {
        let surfaces: Vec<(usize, Spline)> =
            self.surfaces().map(|s| (s.id, s.spline.clone())).collect();
        let mut changed = Vec::new();
        for e in self.entities.iter_mut() {
            if e.kind != EntityKind::Curve || e.parametric_space || !e.owner_ids.is_empty() {
                continue;
            }
            let samples: Vec<_> = e
                .spline
                .sample_grid(9)
                .iter()
                .map(|u| e.spline.eval_clamped(u))
                .collect();
            for (sid, s) in &surfaces {
                let on = samples.iter().all(|x| {
                    let r = match project_point(s, x, None) {
                        Ok(r) => r,
                        Err(Error::ProjectionNotConverged { best, .. }) => *best,
                        Err(_) => return false,
                    };
                    r.distance <= tol
                });
                if on {
                    e.owner_ids.push(*sid);
                }
            }
            if !e.owner_ids.is_empty() {
                log::info!(
                    "curve {}: owners {:?} inferred geometrically",
                    e.id,
                    e.owner_ids
                );
                changed.push(e.id);
            }
        }
        changed
    }
}
