//! Planar domain handling: a small GeoJSON subset, even-odd rasterization to
//! a square-cell mask, a Neumann five-point Laplacian, and plain PGM export.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::error::{EpiError, Result};
use crate::linalg::CsrMatrix;

/// One closed ring of planar coordinates (first point repeated at the end).
pub type Ring = Vec<[f64; 2]>;

/// Polygonal domain plus named overlay regions.
#[derive(Debug, Clone)]
pub struct PolygonSet {
    /// Rings forming the domain under the even-odd rule (holes included).
    pub rings: Vec<Ring>,
    /// Domain bounding box as `[xmin, ymin, xmax, ymax]`.
    pub bbox: [f64; 4],
    /// Named overlay regions, each its own even-odd ring set.
    pub regions: BTreeMap<String, Vec<Ring>>,
}

fn parse_ring(value: &Value, source: &str) -> Result<Ring> {
    let positions = value
        .as_array()
        .ok_or_else(|| EpiError::parse(source, "ring is not an array"))?;
    if positions.len() < 4 {
        return Err(EpiError::parse(
            source,
            format!("ring has {} positions, need at least 4", positions.len()),
        ));
    }
    let mut ring = Vec::with_capacity(positions.len());
    for pos in positions {
        let coords = pos
            .as_array()
            .ok_or_else(|| EpiError::parse(source, "position is not an array"))?;
        if coords.len() < 2 {
            return Err(EpiError::parse(source, "position has fewer than 2 coordinates"));
        }
        let x = coords[0]
            .as_f64()
            .ok_or_else(|| EpiError::parse(source, "non-numeric coordinate"))?;
        let y = coords[1]
            .as_f64()
            .ok_or_else(|| EpiError::parse(source, "non-numeric coordinate"))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(EpiError::parse(source, "non-finite coordinate"));
        }
        ring.push([x, y]);
    }
    if ring.first() != ring.last() {
        return Err(EpiError::parse(source, "ring is not closed"));
    }
    Ok(ring)
}

fn parse_geometry(value: &Value, source: &str) -> Result<Vec<Ring>> {
    let kind = value
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| EpiError::parse(source, "geometry without a type"))?;
    let coords = value
        .get("coordinates")
        .ok_or_else(|| EpiError::parse(source, "geometry without coordinates"))?;
    let mut rings = Vec::new();
    match kind {
        "Polygon" => {
            let arr = coords
                .as_array()
                .ok_or_else(|| EpiError::parse(source, "Polygon coordinates are not an array"))?;
            for ring in arr {
                rings.push(parse_ring(ring, source)?);
            }
        }
        "MultiPolygon" => {
            let arr = coords.as_array().ok_or_else(|| {
                EpiError::parse(source, "MultiPolygon coordinates are not an array")
            })?;
            for polygon in arr {
                let poly = polygon.as_array().ok_or_else(|| {
                    EpiError::parse(source, "MultiPolygon member is not an array")
                })?;
                for ring in poly {
                    rings.push(parse_ring(ring, source)?);
                }
            }
        }
        other => {
            return Err(EpiError::parse(
                source,
                format!("unsupported geometry type {other:?}"),
            ));
        }
    }
    if rings.is_empty() {
        return Err(EpiError::parse(source, "geometry has no rings"));
    }
    Ok(rings)
}

/// Loads a GeoJSON subset: FeatureCollection, Feature, Polygon, MultiPolygon.
///
/// Features with `properties.role == "region"` become named overlay regions
/// (requiring `properties.name`); everything else forms the domain.
pub fn load_polygons(text: &str, source: &str) -> Result<PolygonSet> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| EpiError::parse(source, format!("invalid JSON: {e}")))?;
    let kind = root
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| EpiError::parse(source, "document without a type"))?;

    let mut domain: Vec<Ring> = Vec::new();
    let mut regions: BTreeMap<String, Vec<Ring>> = BTreeMap::new();

    let mut handle_feature = |feature: &Value| -> Result<()> {
        let geometry = feature
            .get("geometry")
            .ok_or_else(|| EpiError::parse(source, "feature without geometry"))?;
        let rings = parse_geometry(geometry, source)?;
        let props = feature.get("properties");
        let role = props
            .and_then(|p| p.get("role"))
            .and_then(Value::as_str)
            .unwrap_or("domain");
        match role {
            "domain" => domain.extend(rings),
            "region" => {
                let name = props
                    .and_then(|p| p.get("name"))
                    .and_then(Value::as_str)
                    .ok_or_else(|| {
                        EpiError::parse(source, "region feature without a name property")
                    })?;
                regions.entry(name.to_string()).or_default().extend(rings);
            }
            other => {
                return Err(EpiError::parse(
                    source,
                    format!("unsupported feature role {other:?}"),
                ));
            }
        }
        Ok(())
    };

    match kind {
        "FeatureCollection" => {
            let features = root
                .get("features")
                .and_then(Value::as_array)
                .ok_or_else(|| EpiError::parse(source, "FeatureCollection without features"))?;
            for feature in features {
                handle_feature(feature)?;
            }
        }
        "Feature" => handle_feature(&root)?,
        "Polygon" | "MultiPolygon" => domain.extend(parse_geometry(&root, source)?),
        other => {
            return Err(EpiError::parse(
                source,
                format!("unsupported document type {other:?}"),
            ));
        }
    }

    if domain.is_empty() {
        return Err(EpiError::EmptyMask);
    }
    let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for ring in &domain {
        for [x, y] in ring {
            bbox[0] = bbox[0].min(*x);
            bbox[1] = bbox[1].min(*y);
            bbox[2] = bbox[2].max(*x);
            bbox[3] = bbox[3].max(*y);
        }
    }
    if !(bbox[2] > bbox[0]) || !(bbox[3] > bbox[1]) {
        return Err(EpiError::parse(source, "degenerate domain bounding box"));
    }
    Ok(PolygonSet {
        rings: domain,
        bbox,
        regions,
    })
}

/// Even-odd point-in-rings test (ray cast along +x).
pub fn point_in_rings(point: [f64; 2], rings: &[Ring]) -> bool {
    let [px, py] = point;
    let mut inside = false;
    for ring in rings {
        for pair in ring.windows(2) {
            let [x1, y1] = pair[0];
            let [x2, y2] = pair[1];
            if (y1 > py) != (y2 > py) {
                let x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1);
                if px < x_cross {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

/// Square-cell raster mask over a polygon's bounding box.
#[derive(Debug, Clone)]
pub struct RasterMask {
    /// Grid width in cells.
    pub nx: usize,
    /// Grid height in cells.
    pub ny: usize,
    /// Cell side length in coordinate units.
    pub h: f64,
    /// Lower-left corner of the grid.
    pub origin: [f64; 2],
    /// Row-major activity flags, length `nx * ny`.
    pub active: Vec<bool>,
    /// Grid cell to compact index, length `nx * ny`.
    pub index_map: Vec<Option<usize>>,
    /// Compact index to grid coordinates `(ix, iy)`.
    pub cells: Vec<(usize, usize)>,
}

impl RasterMask {
    /// Number of active cells.
    pub fn n_active(&self) -> usize {
        self.cells.len()
    }

    /// Center coordinates of an active cell by compact index.
    pub fn center(&self, cell: usize) -> [f64; 2] {
        let (ix, iy) = self.cells[cell];
        [
            self.origin[0] + (ix as f64 + 0.5) * self.h,
            self.origin[1] + (iy as f64 + 0.5) * self.h,
        ]
    }

    /// Compact index of the active cell containing a point, if any.
    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        let fx = (x - self.origin[0]) / self.h;
        let fy = (y - self.origin[1]) / self.h;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        if ix >= self.nx || iy >= self.ny {
            return None;
        }
        self.index_map[iy * self.nx + ix]
    }
}

/// Fraction of the largest connected component below which components drop.
pub const PRUNE_FRACTION: f64 = 0.01;

/// Rasterizes the domain at cell centers on an `nx`-wide square-cell grid.
///
/// Connected components smaller than one percent of the largest are removed
/// so the diffusion stencil acts on a meaningful domain.
pub fn rasterize(poly: &PolygonSet, nx: usize) -> Result<RasterMask> {
    if nx < 8 {
        return Err(EpiError::InvalidParameter(format!(
            "grid width {nx} is below the minimum of 8"
        )));
    }
    let [xmin, ymin, xmax, ymax] = poly.bbox;
    let h = (xmax - xmin) / nx as f64;
    let ny = (((ymax - ymin) / h).ceil() as usize).max(1);
    let mut active = vec![false; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let cx = xmin + (ix as f64 + 0.5) * h;
            let cy = ymin + (iy as f64 + 0.5) * h;
            active[iy * nx + ix] = point_in_rings([cx, cy], &poly.rings);
        }
    }
    prune_small_components(&mut active, nx, ny);

    let mut index_map = vec![None; nx * ny];
    let mut cells = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            if active[iy * nx + ix] {
                index_map[iy * nx + ix] = Some(cells.len());
                cells.push((ix, iy));
            }
        }
    }
    if cells.is_empty() {
        return Err(EpiError::EmptyMask);
    }
    Ok(RasterMask {
        nx,
        ny,
        h,
        origin: [xmin, ymin],
        active,
        index_map,
        cells,
    })
}

fn prune_small_components(active: &mut [bool], nx: usize, ny: usize) {
    let mut component = vec![usize::MAX; nx * ny];
    let mut sizes: Vec<usize> = Vec::new();
    for start in 0..active.len() {
        if !active[start] || component[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut stack = vec![start];
        component[start] = id;
        let mut size = 0usize;
        while let Some(idx) = stack.pop() {
            size += 1;
            let (ix, iy) = (idx % nx, idx / nx);
            let mut push = |jx: usize, jy: usize| {
                let j = jy * nx + jx;
                if active[j] && component[j] == usize::MAX {
                    component[j] = id;
                    stack.push(j);
                }
            };
            if ix > 0 {
                push(ix - 1, iy);
            }
            if ix + 1 < nx {
                push(ix + 1, iy);
            }
            if iy > 0 {
                push(ix, iy - 1);
            }
            if iy + 1 < ny {
                push(ix, iy + 1);
            }
        }
        sizes.push(size);
    }
    let Some(&largest) = sizes.iter().max() else {
        return;
    };
    let threshold = (PRUNE_FRACTION * largest as f64).ceil() as usize;
    for idx in 0..active.len() {
        if active[idx] && sizes[component[idx]] < threshold {
            active[idx] = false;
        }
    }
}

/// Flags the mask cells whose centers fall inside a named overlay region.
pub fn region_cells(poly: &PolygonSet, mask: &RasterMask, name: &str) -> Result<Vec<bool>> {
    let rings = poly
        .regions
        .get(name)
        .ok_or_else(|| EpiError::UnknownRegion(name.to_string()))?;
    let flags: Vec<bool> = (0..mask.n_active())
        .map(|cell| point_in_rings(mask.center(cell), rings))
        .collect();
    if !flags.iter().any(|f| *f) {
        return Err(EpiError::EmptyMask);
    }
    Ok(flags)
}

/// Builds the dimensionless five-point Neumann graph Laplacian over active
/// cells: the diagonal counts active neighbors, each neighbor is `-1`.
///
/// All entries are small integers, so every row sums to zero exactly in
/// floating point. Multiply by `1/h^2` where the operator is applied to
/// recover the continuum scaling.
pub fn build_laplacian(mask: &RasterMask) -> CsrMatrix {
    let rows: Vec<Vec<(usize, f64)>> = (0..mask.n_active())
        .map(|cell| {
            let (ix, iy) = mask.cells[cell];
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(5);
            let mut degree = 0usize;
            let mut visit = |jx: i64, jy: i64| {
                if jx < 0 || jy < 0 || jx as usize >= mask.nx || jy as usize >= mask.ny {
                    return;
                }
                if let Some(j) = mask.index_map[jy as usize * mask.nx + jx as usize] {
                    entries.push((j, -1.0));
                    degree += 1;
                }
            };
            visit(ix as i64 - 1, iy as i64);
            visit(ix as i64 + 1, iy as i64);
            visit(ix as i64, iy as i64 - 1);
            visit(ix as i64, iy as i64 + 1);
            entries.push((cell, degree as f64));
            entries
        })
        .collect();
    CsrMatrix::from_rows(rows)
}

/// Renders per-cell values as a plain-text PGM image (inactive cells black).
pub fn field_to_pgm(mask: &RasterMask, values: &[f64]) -> String {
    assert_eq!(values.len(), mask.n_active(), "field length mismatch");
    let max = values.iter().fold(0.0_f64, |m, v| m.max(*v));
    let mut out = String::new();
    out.push_str("P2\n");
    out.push_str(&format!("{} {}\n255\n", mask.nx, mask.ny));
    for iy in (0..mask.ny).rev() {
        let mut row = Vec::with_capacity(mask.nx);
        for ix in 0..mask.nx {
            let gray = match mask.index_map[iy * mask.nx + ix] {
                Some(cell) if max > 0.0 => {
                    (1.0 + 254.0 * (values[cell] / max).clamp(0.0, 1.0)).round() as u32
                }
                Some(_) => 1,
                None => 0,
            };
            row.push(gray.to_string());
        }
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Renders the activity mask itself as a plain-text PGM image.
pub fn mask_to_pgm(mask: &RasterMask) -> String {
    let values = vec![1.0; mask.n_active()];
    field_to_pgm(mask, &values)
}
