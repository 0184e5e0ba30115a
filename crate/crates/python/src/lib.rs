//! Python bindings for `wavemesh`.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use wavemesh::filter::{self, Threshold};
use wavemesh::graph::{self, Aggregation, RagGraph};
use wavemesh::imageio::{self, Image, PadMode};
use wavemesh::mesh::{self, SuperpixelMesh};
use wavemesh::metrics::{self, GroundTruthSegmentation};
use wavemesh::wavelet::{self, Direction, ImageChannel, WaveletPyramid};
use wavemesh::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::InvalidInput(_) | Error::Format { .. } | Error::Json(_) => PyValueError::new_err(e.to_string()),
        Error::NoConvergence { .. } | Error::UnreachableTarget { .. } => PyRuntimeError::new_err(e.to_string()),
    }
}

fn direction(d: &str) -> PyResult<Direction> {
    match d {
        "h" | "horizontal" => Ok(Direction::Horizontal),
        "v" | "vertical" => Ok(Direction::Vertical),
        "d" | "diagonal" => Ok(Direction::Diagonal),
        other => Err(PyValueError::new_err(format!("unknown direction `{other}`"))),
    }
}

/// Channel-planar float image, optionally padded to a square with a crop.
#[pyclass(name = "Image", module = "wavemesh", frozen)]
struct PyImage(Image);

#[pymethods]
impl PyImage {
    /// `data` is channel-planar: all of channel 0 row-major, then channel 1, ...
    #[new]
    #[pyo3(signature = (width, height, data, channels = 1))]
    fn new(width: usize, height: usize, data: Vec<f64>, channels: usize) -> PyResult<Self> {
        Image::new(width, height, channels, data).map(Self).map_err(to_py)
    }

    /// Load a PNG or PGM file, scaled to [0, 1].
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        imageio::load_png_or_pgm(path).map(Self).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.0.channels()
    }

    /// `(x, y, width, height)` of the original pixels, or None.
    #[getter]
    fn crop(&self) -> Option<(usize, usize, usize, usize)> {
        self.0.crop().map(|c| (c.x, c.y, c.width, c.height))
    }

    fn data(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn get(&self, c: usize, x: usize, y: usize) -> PyResult<f64> {
        if c >= self.0.channels() || x >= self.0.width() || y >= self.0.height() {
            return Err(PyValueError::new_err("pixel index out of range"));
        }
        Ok(self.0.get(c, x, y))
    }

    /// Pad to a power-of-two square. `mode` is "edge" or "zero"; with
    /// `keep_crop=False` the padding counts as content.
    #[pyo3(signature = (mode = "edge", keep_crop = true))]
    fn pad(&self, mode: &str, keep_crop: bool) -> PyResult<Self> {
        let mode: PadMode = mode.parse().map_err(to_py)?;
        let padded = imageio::pad_image(&self.0, mode);
        Ok(Self(if keep_crop { padded } else { padded.uncropped() }))
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{}x{})", self.0.width(), self.0.height(), self.0.channels())
    }
}

/// Haar coefficient pyramid of one square channel.
#[pyclass(name = "Pyramid", module = "wavemesh", frozen)]
struct PyPyramid(WaveletPyramid);

#[pymethods]
impl PyPyramid {
    #[getter]
    fn side(&self) -> usize {
        self.0.side()
    }

    #[getter]
    fn levels(&self) -> usize {
        self.0.levels()
    }

    #[getter]
    fn approx(&self) -> f64 {
        self.0.approx()
    }

    /// Row-major detail grid at `scale` (1 = finest) and direction "h", "v" or "d".
    fn detail(&self, scale: usize, direction_name: &str) -> PyResult<Vec<f64>> {
        if scale == 0 || scale > self.0.levels() {
            return Err(PyValueError::new_err(format!(
                "scale must be in 1..={}",
                self.0.levels()
            )));
        }
        Ok(self.0.detail(scale, direction(direction_name)?).to_vec())
    }

    fn energy(&self) -> f64 {
        self.0.energy()
    }

    fn inverse(&self) -> PyResult<Vec<f64>> {
        wavelet::inverse_haar(&self.0)
            .map(ImageChannel::into_values)
            .map_err(to_py)
    }
}

#[pyclass(name = "Threshold", module = "wavemesh", frozen, get_all)]
struct PyThreshold {
    value: f64,
    variance: f64,
    iterations: usize,
    multiplier: f64,
}

impl From<Threshold> for PyThreshold {
    fn from(t: Threshold) -> Self {
        Self {
            value: t.value,
            variance: t.variance,
            iterations: t.iterations,
            multiplier: t.multiplier,
        }
    }
}

#[pymethods]
impl PyThreshold {
    fn __repr__(&self) -> String {
        format!(
            "Threshold(value={}, variance={}, iterations={}, multiplier={})",
            self.value, self.variance, self.iterations, self.multiplier
        )
    }
}

/// Quadtree superpixel mesh.
#[pyclass(name = "Mesh", module = "wavemesh", frozen)]
struct PyMesh(SuperpixelMesh);

#[pymethods]
impl PyMesh {
    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        SuperpixelMesh::from_json(s).map(Self).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }

    #[getter]
    fn side(&self) -> usize {
        self.0.side()
    }

    /// `(x, y, size)` per cell, row-major by top-left corner.
    #[getter]
    fn cells(&self) -> Vec<(usize, usize, usize)> {
        self.0.cells().iter().map(|c| (c.x, c.y, c.size)).collect()
    }

    /// Cell index per domain pixel, row-major.
    fn label_map(&self) -> Vec<u32> {
        self.0.label_map()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(side={}, cells={})", self.0.side(), self.0.len())
    }
}

/// Region adjacency graph: one node per cell, directed edges both ways.
#[pyclass(name = "Graph", module = "wavemesh", frozen)]
struct PyGraph(RagGraph);

#[pymethods]
impl PyGraph {
    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        RagGraph::from_json(s).map(Self).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }

    /// `(cx, cy)` per node.
    fn centroids(&self) -> Vec<(f64, f64)> {
        self.0.nodes.iter().map(|n| (n.cx, n.cy)).collect()
    }

    fn areas(&self) -> Vec<usize> {
        self.0.nodes.iter().map(|n| n.area).collect()
    }

    fn features(&self) -> Vec<Vec<f64>> {
        self.0.nodes.iter().map(|n| n.feat.clone()).collect()
    }

    /// `(src, dst)` pairs.
    fn edge_index(&self) -> Vec<(usize, usize)> {
        self.0.edges.iter().map(|e| (e.src, e.dst)).collect()
    }

    /// `(u, v)` pseudo-coordinates per edge, each in [0, 1].
    fn edge_attr(&self) -> Vec<(f64, f64)> {
        self.0.edges.iter().map(|e| (e.pseudo[0], e.pseudo[1])).collect()
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.0.nodes.len()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.0.edges.len()
    }

    fn __repr__(&self) -> String {
        format!("Graph(nodes={}, edges={})", self.0.nodes.len(), self.0.edges.len())
    }
}

fn channel(values: Vec<f64>) -> PyResult<ImageChannel> {
    let side = (values.len() as f64).sqrt().round() as usize;
    if side * side != values.len() {
        return Err(PyValueError::new_err(format!(
            "{} values do not form a square",
            values.len()
        )));
    }
    ImageChannel::new(side, values).map_err(to_py)
}

/// Orthonormal Haar transform of a square channel given row-major.
#[pyfunction]
fn forward_haar(values: Vec<f64>) -> PyResult<PyPyramid> {
    wavelet::forward_haar(&channel(values)?).map(PyPyramid).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (pyramid, rel_tol = filter::DEFAULT_REL_TOL, max_iter = filter::DEFAULT_MAX_ITER))]
fn estimate_threshold(pyramid: &PyPyramid, rel_tol: f64, max_iter: usize) -> PyResult<PyThreshold> {
    filter::estimate_threshold(&pyramid.0, rel_tol, max_iter)
        .map(Into::into)
        .map_err(to_py)
}

#[pyfunction]
fn universal_threshold(variance: f64, side: usize) -> PyResult<f64> {
    filter::universal_threshold(variance, side).map_err(to_py)
}

/// Superpixel mesh of a padded image.
#[pyfunction]
#[pyo3(signature = (image, lam = 1.0))]
fn superpixels(py: Python<'_>, image: &PyImage, lam: f64) -> PyResult<PyMesh> {
    py.detach(|| mesh::superpixel_image(&image.0, lam))
        .map(PyMesh)
        .map_err(to_py)
}

/// Per-channel converged thresholds, scaled by `lam`.
#[pyfunction]
#[pyo3(signature = (image, lam = 1.0))]
fn thresholds(py: Python<'_>, image: &PyImage, lam: f64) -> PyResult<Vec<PyThreshold>> {
    let sp = py
        .detach(|| mesh::superpixel_image_detailed(&image.0, lam))
        .map_err(to_py)?;
    Ok(sp.thresholds.into_iter().map(Into::into).collect())
}

#[pyfunction]
fn build_rag(mesh: &PyMesh, image: &PyImage) -> PyResult<PyGraph> {
    graph::build_rag(&mesh.0, &image.0).map(PyGraph).map_err(to_py)
}

/// One pooling step; returns the coarse mesh, coarse graph and fine-to-coarse map.
#[pyfunction]
#[pyo3(signature = (mesh, graph, agg = "max"))]
fn wavepool(mesh: &PyMesh, graph: &PyGraph, agg: &str) -> PyResult<(PyMesh, PyGraph, Vec<usize>)> {
    let agg: Aggregation = agg.parse().map_err(to_py)?;
    let (m, g, a) = graph::wavepool(&mesh.0, &graph.0, agg).map_err(to_py)?;
    Ok((PyMesh(m), PyGraph(g), a.mapping))
}

/// Achievable segmentation accuracy against a row-major label array over the mesh domain.
#[pyfunction]
fn asa(mesh: &PyMesh, labels: Vec<u32>) -> PyResult<f64> {
    let dom = mesh.0.domain();
    let gt = GroundTruthSegmentation::new(dom.width, dom.height, labels).map_err(to_py)?;
    metrics::asa(&mesh.0, &gt).map_err(to_py)
}

#[pyfunction]
fn explained_variation(mesh: &PyMesh, image: &PyImage) -> PyResult<f64> {
    metrics::explained_variation(&mesh.0, &image.0).map_err(to_py)
}

/// Multiplier whose mean cell count over `images` is close to `target`.
#[pyfunction]
#[pyo3(signature = (images, target, iters = 20))]
fn calibrate(py: Python<'_>, images: Vec<PyRef<'_, PyImage>>, target: f64, iters: usize) -> PyResult<f64> {
    let owned: Vec<Image> = images.iter().map(|i| i.0.clone()).collect();
    py.detach(|| mesh::calibrate_multiplier(&owned, target, iters))
        .map_err(to_py)
}

/// Read an IDX image/label pair; images come back zero-padded to a square
/// with the padding counted as content.
#[pyfunction]
#[pyo3(signature = (images, labels, limit = None))]
fn load_idx(
    images: std::path::PathBuf,
    labels: std::path::PathBuf,
    limit: Option<usize>,
) -> PyResult<Vec<(PyImage, u8)>> {
    let items = imageio::load_idx(images, labels, limit).map_err(to_py)?;
    Ok(items
        .into_iter()
        .map(|(img, l)| (PyImage(imageio::pad_image(&img, PadMode::Zero).uncropped()), l))
        .collect())
}

/// Read a CIFAR-10 binary batch.
#[pyfunction]
#[pyo3(signature = (path, limit = None))]
fn load_cifar(path: std::path::PathBuf, limit: Option<usize>) -> PyResult<Vec<(PyImage, u8)>> {
    let items = imageio::load_cifar_batch(path, limit).map_err(to_py)?;
    Ok(items.into_iter().map(|(img, l)| (PyImage(img), l)).collect())
}

#[pymodule]
#[pyo3(name = "wavemesh")]
fn wavemesh_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyPyramid>()?;
    m.add_class::<PyThreshold>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(forward_haar, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(universal_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(superpixels, m)?)?;
    m.add_function(wrap_pyfunction!(thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(build_rag, m)?)?;
    m.add_function(wrap_pyfunction!(wavepool, m)?)?;
    m.add_function(wrap_pyfunction!(asa, m)?)?;
    m.add_function(wrap_pyfunction!(explained_variation, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(load_idx, m)?)?;
    m.add_function(wrap_pyfunction!(load_cifar, m)?)?;
    Ok(())
}
