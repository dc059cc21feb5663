//! Object models with their stable resting orientations.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;
use std::sync::Arc;

use instyle_core::{CoreError, MeshModel};
use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::PairgenError;

#[derive(Clone, Debug)]
pub struct ModelEntry {
    pub mesh: Arc<MeshModel>,
    /// Object-to-world rotations under which the model rests stably on a
    /// horizontal plane (before yaw).
    pub uprights: Vec<UnitQuaternion<f64>>,
}

#[derive(Serialize, Deserialize)]
struct EntryRepr {
    mesh: MeshModel,
    uprights: Vec<[f64; 4]>,
}

#[derive(Clone, Debug, Default)]
pub struct ModelLibrary {
    entries: BTreeMap<String, ModelEntry>,
}

fn quat([w, x, y, z]: [f64; 4]) -> UnitQuaternion<f64> {
    UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(w, x, y, z))
}

impl ModelLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a model. An empty upright list means "as modeled".
    pub fn insert(&mut self, mesh: MeshModel, mut uprights: Vec<UnitQuaternion<f64>>) -> Result<(), PairgenError> {
        mesh.validate()?;
        if uprights.is_empty() {
            uprights.push(UnitQuaternion::identity());
        }
        self.entries.insert(
            mesh.class_name.clone(),
            ModelEntry {
                mesh: Arc::new(mesh),
                uprights,
            },
        );
        Ok(())
    }

    pub fn get(&self, class_name: &str) -> Result<&ModelEntry, PairgenError> {
        self.entries
            .get(class_name)
            .ok_or_else(|| PairgenError::MissingModel(class_name.into()))
    }

    pub fn mesh(&self, class_name: &str) -> Result<Arc<MeshModel>, PairgenError> {
        Ok(self.get(class_name)?.mesh.clone())
    }

    pub fn classes(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Small built-in catalogue of primitive stand-ins for tabletop objects.
    pub fn builtin() -> Self {
        let on_side = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), FRAC_PI_2);
        let on_end = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), FRAC_PI_2);
        let flipped = quat([0.0, 1.0, 0.0, 0.0]);
        let id = UnitQuaternion::identity();
        let mut lib = Self::new();
        let items = [
            (MeshModel::cylinder("puck", 0.03, 0.015, 32, [0.85, 0.25, 0.2]), vec![id, flipped]),
            (MeshModel::cylinder("soup_can", 0.033, 0.10, 24, [0.8, 0.3, 0.25]), vec![id, on_side]),
            (MeshModel::cylinder("mug", 0.04, 0.09, 24, [0.9, 0.9, 0.85]), vec![id]),
            (
                MeshModel::cuboid("cracker_box", [0.16, 0.06, 0.21], [0.9, 0.7, 0.2]),
                vec![id, on_side, on_end],
            ),
            (
                MeshModel::cuboid("sugar_box", [0.09, 0.04, 0.17], [0.95, 0.9, 0.6]),
                vec![id, on_side, on_end],
            ),
        ];
        for (mesh, uprights) in items {
            lib.insert(mesh, uprights).expect("built-in models are valid");
        }
        lib
    }

    pub fn subset(&self, classes: &[String]) -> Result<Self, PairgenError> {
        let mut out = Self::new();
        for c in classes {
            out.entries.insert(c.clone(), self.get(c)?.clone());
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), PairgenError> {
        let repr: BTreeMap<&str, EntryRepr> = self
            .entries
            .iter()
            .map(|(k, e)| {
                (
                    k.as_str(),
                    EntryRepr {
                        mesh: (*e.mesh).clone(),
                        uprights: e.uprights.iter().map(|q| [q.w, q.i, q.j, q.k]).collect(),
                    },
                )
            })
            .collect();
        let text = serde_json::to_string_pretty(&repr).expect("library serializes") + "\n";
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CoreError::io(parent, e))?;
        }
        std::fs::write(path, text).map_err(|e| CoreError::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PairgenError> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let repr: BTreeMap<String, EntryRepr> = instyle_core::manifest::parse_json(&text, path)?;
        let mut lib = Self::new();
        for (name, entry) in repr {
            if entry.mesh.class_name != name {
                return Err(PairgenError::InvalidConfig(format!(
                    "library key `{name}` holds a `{}` mesh",
                    entry.mesh.class_name
                )));
            }
            let uprights = entry
                .uprights
                .into_iter()
                .map(|q| {
                    let n = (q.iter().map(|v| v * v).sum::<f64>()).sqrt();
                    if (n - 1.0).abs() > 1e-9 {
                        Err(PairgenError::InvalidConfig(format!("upright of `{name}` is not a unit quaternion")))
                    } else {
                        Ok(quat(q))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            lib.insert(entry.mesh, uprights)?;
        }
        Ok(lib)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let lib = ModelLibrary::builtin();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("models.json");
        lib.save(&path).unwrap();
        let back = ModelLibrary::load(&path).unwrap();
        assert_eq!(back.classes(), lib.classes());
        for c in lib.classes() {
            assert_eq!(*back.mesh(&c).unwrap(), *lib.mesh(&c).unwrap());
            assert_eq!(back.get(&c).unwrap().uprights, lib.get(&c).unwrap().uprights);
        }
    }

    #[test]
    fn missing_class_is_an_error() {
        assert!(matches!(
            ModelLibrary::builtin().get("banana"),
            Err(PairgenError::MissingModel(_))
        ));
    }
}
