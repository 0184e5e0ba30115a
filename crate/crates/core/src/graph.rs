//! Region adjacency graphs over superpixel meshes and quadtree pooling.
//!
//! Nodes sit at cell centroids (in content coordinates: the crop origin is
//! `(0, 0)`), carry the cell's pixel area and per-channel mean intensity.
//! Two cells are adjacent when their clipped rectangles share a boundary
//! segment of positive length. Each adjacency yields two directed edges with
//! pseudo-coordinates `(dx / 2N + 1/2, dy / 2N + 1/2)`, `N` the mesh side.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::Image;
use crate::mesh::{Cell, SuperpixelMesh};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub cx: f64,
    pub cy: f64,
    pub area: usize,
    pub feat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub pseudo: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Max,
    Mean,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            other => Err(Error::invalid(format!(
                "unknown aggregation `{other}` (expected max or mean)"
            ))),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Max => "max",
            Aggregation::Mean => "mean",
        })
    }
}

/// Fine-to-coarse node map produced by one pooling step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolAssignment {
    pub mapping: Vec<usize>,
    pub aggregation: Aggregation,
}

impl PoolAssignment {
    pub fn coarse_len(&self) -> usize {
        self.mapping.iter().max().map_or(0, |m| m + 1)
    }
}

impl RagGraph {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_nodes_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let channels = self.nodes.first().map_or(0, |n| n.feat.len());
        write!(w, "id,cx,cy,area")?;
        for c in 0..channels {
            write!(w, ",feat{c}")?;
        }
        writeln!(w)?;
        for n in &self.nodes {
            write!(w, "{},{},{},{}", n.id, n.cx, n.cy, n.area)?;
            for v in &n.feat {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn write_edges_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "src,dst,u,v")?;
        for e in &self.edges {
            writeln!(w, "{},{},{},{}", e.src, e.dst, e.pseudo[0], e.pseudo[1])?;
        }
        Ok(())
    }
}

/// One node per cell with mean intensities, edges between 4-adjacent cells.
pub fn build_rag(mesh: &SuperpixelMesh, image: &Image) -> Result<RagGraph> {
    if image.width() != mesh.side() || image.height() != mesh.side() {
        return Err(Error::invalid(format!(
            "image is {}x{}, mesh side is {}",
            image.width(),
            image.height(),
            mesh.side()
        )));
    }
    let features = (0..mesh.len())
        .map(|i| {
            let r = mesh.cell_rect(i);
            let area = r.area() as f64;
            (0..image.channels())
                .map(|c| {
                    let mut sum = 0.0;
                    for y in r.y0..r.y1 {
                        for x in r.x0..r.x1 {
                            sum += image.get(c, x, y);
                        }
                    }
                    sum / area
                })
                .collect()
        })
        .collect();
    Ok(rag_with_features(mesh, features))
}

/// Graph geometry of `mesh` with the given per-node features.
pub fn rag_with_features(mesh: &SuperpixelMesh, features: Vec<Vec<f64>>) -> RagGraph {
    let dom = mesh.domain();
    let nodes: Vec<Node> = features
        .into_iter()
        .enumerate()
        .map(|(id, feat)| {
            let r = mesh.cell_rect(id);
            let (cx, cy) = r.center();
            Node {
                id,
                cx: cx - dom.x as f64,
                cy: cy - dom.y as f64,
                area: r.area(),
                feat,
            }
        })
        .collect();

    let labels = mesh.label_map();
    let (w, h) = (dom.width, dom.height);
    let mut pairs = BTreeSet::new();
    for y in 0..h {
        for x in 0..w {
            let a = labels[y * w + x];
            if x + 1 < w {
                let b = labels[y * w + x + 1];
                if a != b {
                    pairs.insert((a as usize, b as usize));
                    pairs.insert((b as usize, a as usize));
                }
            }
            if y + 1 < h {
                let b = labels[(y + 1) * w + x];
                if a != b {
                    pairs.insert((a as usize, b as usize));
                    pairs.insert((b as usize, a as usize));
                }
            }
        }
    }
    let norm = 2.0 * mesh.side() as f64;
    let edges = pairs
        .into_iter()
        .map(|(src, dst)| {
            let (s, d) = (&nodes[src], &nodes[dst]);
            Edge {
                src,
                dst,
                pseudo: [(d.cx - s.cx) / norm + 0.5, (d.cy - s.cy) / norm + 0.5],
            }
        })
        .collect();
    RagGraph { nodes, edges }
}

/// One pooling step: every complete quad of sibling leaves of equal size is
/// merged into its parent cell; everything else passes through. Features are
/// aggregated from the fine nodes (area-weighted for `Mean`) and the coarse
/// graph geometry is rebuilt from the coarse mesh.
///
/// A quad counts as complete when every sibling that intersects the mesh
/// domain is a leaf of the same size; siblings lying wholly outside a crop
/// are ignored.
pub fn wavepool(
    mesh: &SuperpixelMesh,
    graph: &RagGraph,
    agg: Aggregation,
) -> Result<(SuperpixelMesh, RagGraph, PoolAssignment)> {
    if graph.nodes.len() != mesh.len() {
        return Err(Error::invalid(format!(
            "graph has {} nodes but mesh has {} cells",
            graph.nodes.len(),
            mesh.len()
        )));
    }
    let channels = graph.nodes.first().map_or(0, |n| n.feat.len());
    if graph.nodes.iter().any(|n| n.feat.len() != channels) {
        return Err(Error::invalid("graph nodes have differing feature lengths"));
    }

    let dom = mesh.domain();
    let intersects_domain =
        |c: &Cell| c.x < dom.x + dom.width && c.x + c.size > dom.x && c.y < dom.y + dom.height && c.y + c.size > dom.y;
    let index: std::collections::HashMap<Cell, usize> = mesh.cells().iter().enumerate().map(|(i, c)| (*c, i)).collect();

    // parent cell -> member fine ids, for complete quads
    let mut groups: std::collections::BTreeMap<Cell, Vec<usize>> = Default::default();
    for c in mesh.cells() {
        let ps = c.size * 2;
        if ps > mesh.side() {
            continue;
        }
        let parent = Cell {
            x: c.x / ps * ps,
            y: c.y / ps * ps,
            size: ps,
        };
        if groups.contains_key(&parent) {
            continue;
        }
        let mut members = Vec::with_capacity(4);
        let mut complete = true;
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let sib = Cell {
                x: parent.x + dx * c.size,
                y: parent.y + dy * c.size,
                size: c.size,
            };
            match index.get(&sib) {
                Some(&i) => members.push(i),
                None if !intersects_domain(&sib) => {}
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if complete {
            groups.insert(parent, members);
        }
    }

    let mut coarse: Vec<(Cell, Vec<usize>)> = groups.into_iter().collect();
    let merged: std::collections::HashSet<usize> = coarse.iter().flat_map(|(_, m)| m.iter().copied()).collect();
    coarse.extend(
        mesh.cells()
            .iter()
            .enumerate()
            .filter(|(i, _)| !merged.contains(i))
            .map(|(i, c)| (*c, vec![i])),
    );
    coarse.sort_unstable_by_key(|(c, _)| (c.y, c.x));

    let mut mapping = vec![usize::MAX; mesh.len()];
    let mut features = Vec::with_capacity(coarse.len());
    for (k, (_, members)) in coarse.iter().enumerate() {
        for &i in members {
            mapping[i] = k;
        }
        features.push(aggregate(graph, members, channels, agg));
    }
    let cells = coarse.into_iter().map(|(c, _)| c).collect();
    let coarse_mesh = SuperpixelMesh::new(mesh.side(), mesh.crop(), cells)?;
    let coarse_graph = rag_with_features(&coarse_mesh, features);
    Ok((
        coarse_mesh,
        coarse_graph,
        PoolAssignment {
            mapping,
            aggregation: agg,
        },
    ))
}

fn aggregate(graph: &RagGraph, members: &[usize], channels: usize, agg: Aggregation) -> Vec<f64> {
    if members.len() == 1 {
        return graph.nodes[members[0]].feat.clone();
    }
    (0..channels)
        .map(|c| match agg {
            Aggregation::Max => members
                .iter()
                .map(|&i| graph.nodes[i].feat[c])
                .fold(f64::NEG_INFINITY, f64::max),
            Aggregation::Mean => {
                let (mut num, mut den) = (0.0, 0.0);
                for &i in members {
                    let n = &graph.nodes[i];
                    num += n.area as f64 * n.feat[c];
                    den += n.area as f64;
                }
                num / den
            }
        })
        .collect()
}
