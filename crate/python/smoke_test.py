"""Smoke test for the wavemesh Python bindings.

Build and install first:  pip install -e crates/python --no-build-isolation
Then run:                 python python/smoke_test.py
"""

import json
import math
import pathlib

import wavemesh

DATA = pathlib.Path(__file__).resolve().parent.parent / "crates" / "core" / "tests" / "data"


def check_transform():
    vals = [float((i * 7) % 5) for i in range(16)]
    pyr = wavemesh.forward_haar(vals)
    assert pyr.side == 4 and pyr.levels == 2
    mean_sq = sum(v * v for v in vals) / len(vals)
    assert abs(pyr.energy() - mean_sq) < 1e-12
    assert max(abs(a - b) for a, b in zip(pyr.inverse(), vals)) < 1e-12
    assert abs(wavemesh.universal_threshold(1.0, 16) - math.sqrt(2 * math.log(256))) < 1e-12
    t = wavemesh.estimate_threshold(pyr)
    assert t.iterations >= 1 and t.value >= 0


def check_pipeline():
    data = [0.0] * (40 * 24)
    for y in range(5, 15):
        for x in range(8, 30):
            data[y * 40 + x] = 1.0
    img = wavemesh.Image(40, 24, data).pad("edge")
    assert (img.width, img.crop) == (64, (12, 20, 40, 24))
    mesh = wavemesh.superpixels(img)
    assert len(mesh) > 1
    assert sum(1 for _ in mesh.label_map()) == 40 * 24
    assert wavemesh.Mesh.from_json(mesh.to_json()).cells == mesh.cells

    graph = wavemesh.build_rag(mesh, img)
    assert graph.num_nodes == len(mesh)
    pairs = dict(zip(graph.edge_index(), graph.edge_attr()))
    for (s, d), (u, v) in pairs.items():
        ru, rv = pairs[(d, s)]
        assert u + ru == 1.0 and v + rv == 1.0

    coarse, pooled, mapping = wavemesh.wavepool(mesh, graph, "max")
    assert len(mapping) == len(mesh) and pooled.num_nodes == len(coarse) <= len(mesh)
    assert sum(pooled.areas()) == sum(graph.areas())

    gt = [1 if 8 <= i % 40 < 30 and 5 <= i // 40 < 15 else 0 for i in range(40 * 24)]
    assert wavemesh.asa(mesh, gt) == 1.0
    assert 0.99 <= wavemesh.explained_variation(mesh, img) <= 1.0 + 1e-9
    json.loads(graph.to_json())


def check_mnist():
    items = wavemesh.load_idx(DATA / "mnist-1k-images.idx", DATA / "mnist-1k-labels.idx", limit=50)
    assert len(items) == 50 and items[0][1] == 5
    counts = [len(wavemesh.superpixels(img)) for img, _ in items]
    mean = sum(counts) / len(counts)
    assert 150 < mean < 350, mean


def check_errors():
    for bad in (lambda: wavemesh.Image(2, 2, [0.0]), lambda: wavemesh.forward_haar([0.0] * 3)):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")
    try:
        wavemesh.Image.load("/nonexistent/image.png")
    except OSError:
        pass
    else:
        raise AssertionError("expected OSError")


if __name__ == "__main__":
    check_transform()
    check_pipeline()
    check_mnist()
    check_errors()
    print("wavemesh python smoke test: ok")
