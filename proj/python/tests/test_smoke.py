import json
import math
import os
import pathlib

import numpy as np
import pytest

import _morphprint as mp

ASSETS = pathlib.Path(os.environ.get("MORPHPRINT_ASSETS", pathlib.Path(__file__).parents[2] / "assets"))


def test_cube_metrology():
    m = mp.box([0, 0, 0], [1, 1, 1]).measure()
    assert m["surface_area"] == pytest.approx(6.0, abs=1e-12)
    assert m["volume"] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(m["centroid"], [0.5, 0.5, 0.5], atol=1e-12)


def test_mesh_from_arrays():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    f = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]], dtype=np.uint32)
    mesh = mp.Mesh(v, f)
    assert mesh.vertex_count == 4
    assert mesh.measure()["volume"] == pytest.approx(1.0 / 6.0)


def test_mvee_cube_circumsphere():
    pts = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float)
    e = mp.mvee(pts, eps=1e-9)
    np.testing.assert_allclose(e.semi_axes, [math.sqrt(3)] * 3, atol=1e-4)
    assert all(e.contains(p, 1e-9) for p in pts)


def test_slice_and_energy():
    layers = mp.slice_sections(mp.box([0, 0, 0], [1, 1, 1]), 0.25)
    assert len(layers) == 4
    assert all(abs(s - 1.0) < 1e-12 for _, _, s in layers)
    assert mp.integrate_power([0, 60], [100, 100]) == pytest.approx(6.0, abs=1e-12)
    assert mp.melting_energy(1e4, 1200, 2, 473.15, 273.15, 100) == pytest.approx(6.0, abs=1e-12)


def test_kinematics_and_optimizer():
    t = mp.forward_kinematics([(0.3, 0, 2, 0), (0.4, 0, 1, 0)])
    assert t[0, 3] == pytest.approx(2 * math.cos(0.3) + math.cos(0.7), abs=1e-12)
    front = mp.nsga2(lambda x: [x[0] ** 2, (x[0] - 2) ** 2], [-5.0], [5.0], 20, 20, 1)
    assert front and all(-0.1 <= x[0] <= 2.1 for x, _ in front)


def test_errors_are_raised():
    with pytest.raises(mp.Error):
        mp.load_mesh("/nonexistent/mesh.stl")


def test_measure_stage(tmp_path):
    manifest = json.loads(
        mp.run("measure", "", json.dumps({"mesh": str(ASSETS / "hand" / "hand.obj"), "output": str(tmp_path)}))
    )
    assert manifest["status"] == "ok"
    assert (tmp_path / "measure.json").exists()
    assert mp.sha256_hex("abc").startswith("ba7816bf")
