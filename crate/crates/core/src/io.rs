//! JSON documents for region inventories and layouts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::model::{Canvas, CityLayout, LandUseType, ModelError, Region, RegionId, ScaleConfig};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DocError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON document: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `{ "scale": {...}, "canvas": {...}, "regions": [...] }`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct InventoryDoc<T> {
    pub scale: ScaleConfig<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canvas: Option<Canvas>,
    pub regions: Vec<Region<T>>,
}

impl<T: Scalar> InventoryDoc<T> {
    pub fn into_layout(self) -> Result<CityLayout<T>, ModelError> {
        let layout = CityLayout::new(self.regions, self.scale)?;
        match self.canvas {
            Some(c) => layout.with_canvas(c),
            None => Ok(layout),
        }
    }

    pub fn from_layout(layout: &CityLayout<T>) -> Self {
        InventoryDoc {
            scale: *layout.scale(),
            canvas: layout.canvas(),
            regions: layout.regions().to_vec(),
        }
    }
}

/// Inventory plus the assignment overlay.
#[derive(Debug, Clone, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct LayoutDoc<T> {
    #[serde(flatten)]
    pub inventory: InventoryDoc<T>,
    pub assignment: BTreeMap<RegionId, LandUseType>,
}

impl<T: Scalar> LayoutDoc<T> {
    pub fn into_layout(self) -> Result<CityLayout<T>, ModelError> {
        let layout = CityLayout::with_assignment(self.inventory.regions, &self.assignment, self.inventory.scale)?;
        match self.inventory.canvas {
            Some(c) => layout.with_canvas(c),
            None => Ok(layout),
        }
    }
}

struct OrderedAssignment<'a, T>(&'a CityLayout<T>);

impl<T: Scalar> Serialize for OrderedAssignment<'_, T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (r, t) in self.0.regions().iter().zip(self.0.assignment()) {
            map.serialize_entry(&r.id, t)?;
        }
        map.end()
    }
}

#[derive(Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
struct LayoutDocRef<'a, T> {
    scale: &'a ScaleConfig<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    canvas: Option<Canvas>,
    regions: &'a [Region<T>],
    assignment: OrderedAssignment<'a, T>,
}

pub fn inventory_to_json<T: Scalar>(layout: &CityLayout<T>) -> String {
    serde_json::to_string_pretty(&InventoryDoc::from_layout(layout)).expect("inventory serializes")
}

/// Layout JSON with the assignment emitted in ascending id order.
pub fn layout_to_json<T: Scalar>(layout: &CityLayout<T>) -> String {
    let doc = LayoutDocRef {
        scale: layout.scale(),
        canvas: layout.canvas(),
        regions: layout.regions(),
        assignment: OrderedAssignment(layout),
    };
    serde_json::to_string_pretty(&doc).expect("layout serializes")
}

pub fn inventory_from_json<T: Scalar>(text: &str) -> Result<CityLayout<T>, DocError> {
    let doc: InventoryDoc<T> = serde_json::from_str(text)?;
    Ok(doc.into_layout()?)
}

/// Parses either a layout document or a bare inventory (roles taken from the regions).
pub fn layout_from_json<T: Scalar>(text: &str) -> Result<CityLayout<T>, DocError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if value.get("assignment").is_some() {
        let doc: LayoutDoc<T> = serde_json::from_value(value)?;
        Ok(doc.into_layout()?)
    } else {
        let doc: InventoryDoc<T> = serde_json::from_value(value)?;
        Ok(doc.into_layout()?)
    }
}

pub fn read_layout<T: Scalar>(path: &Path) -> Result<CityLayout<T>, DocError> {
    let text = std::fs::read_to_string(path).map_err(|source| DocError::Io {
        path: path.display().to_string(),
        source,
    })?;
    layout_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Point;

    fn sample() -> CityLayout<f64> {
        let regions = vec![
            Region::new("r10", LandUseType::Hospital, 25, Point::new(3.5, 4.0)),
            Region::new("r2", LandUseType::Residential, 40, Point::new(1.0, 2.25)),
        ];
        CityLayout::new(regions, ScaleConfig::with_meters_per_pixel(12.5))
            .unwrap()
            .with_canvas(Canvas::new(8, 8))
            .unwrap()
    }

    #[test]
    fn inventory_schema() {
        let json = inventory_to_json(&sample());
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let r0 = &v["regions"][0];
        assert_eq!(r0["id"], "r2");
        assert_eq!(r0["type"], "Residential");
        assert_eq!(r0["area_px"], 40);
        assert_eq!(r0["centroid"], serde_json::json!([1.0, 2.25]));
        assert_eq!(v["scale"]["meters_per_pixel"], 12.5);
        assert_eq!(v["scale"]["service_radius_m"], 500.0);
    }

    #[test]
    fn layout_round_trip_keeps_overlay() {
        let mut l = sample();
        l.set_role(1, LandUseType::Unassigned);
        let json = layout_to_json(&l);
        assert!(json.find("\"r2\": \"Residential\"").unwrap() < json.find("\"r10\": \"Unassigned\"").unwrap());
        let back: CityLayout<f64> = layout_from_json(&json).unwrap();
        assert_eq!(back, l);
    }

    #[test]
    fn missing_assignment_entry_is_an_error() {
        let text = r#"{"scale":{},"regions":[{"id":"a","type":"Hospital","area_px":3,"centroid":[0,0]}],"assignment":{}}"#;
        assert!(matches!(
            layout_from_json::<f64>(text),
            Err(DocError::Model(ModelError::MissingAssignment(_)))
        ));
    }
}
