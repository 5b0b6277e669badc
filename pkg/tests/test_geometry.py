import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ihsynth.geometry import (
    DegenerateGeometryError, axis_angle, check_watertight, exp_so3, hop_distances, icosphere, invert_rigid,
    log_so3, orthonormalize, read_obj, rigid, vertex_adjacency, write_obj,
)

vec3 = arrays(np.float64, 3, elements=st.floats(-3.0, 3.0))


@given(vec3)
def test_exp_is_rotation(w):
    r = exp_so3(w)
    assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)


@given(vec3)
def test_log_inverts_exp(w):
    if np.linalg.norm(w) > np.pi - 1e-3:
        w = w / np.linalg.norm(w) * (np.pi - 1e-3)
    assert np.allclose(log_so3(exp_so3(w)), w, atol=1e-8)


def test_axis_angle_quarter_turn():
    r = axis_angle(np.array([0.0, 0.0, 1.0]), np.pi / 2)
    assert np.allclose(r @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-15)


@settings(max_examples=30)
@given(vec3, arrays(np.float64, (3, 3), elements=st.floats(-1e-3, 1e-3)))
def test_orthonormalize_projects_nearby_matrix(w, noise):
    r = exp_so3(w)
    q = orthonormalize(r + noise)
    assert np.allclose(q @ q.T, np.eye(3), atol=1e-12)
    assert np.abs(q - r).max() < 5e-3


def test_rigid_inverse():
    t = rigid(exp_so3([0.1, -0.4, 0.3]), [1.0, 2.0, 3.0])
    assert np.allclose(invert_rigid(t) @ t, np.eye(4), atol=1e-14)


def test_icosphere_is_closed():
    v, f = icosphere(0.5, 2)
    check_watertight(f)
    assert np.allclose(np.linalg.norm(v, axis=1), 0.5)


def test_open_mesh_is_rejected():
    v, f = icosphere(1.0, 1)
    with pytest.raises(DegenerateGeometryError):
        check_watertight(f[1:])
    with pytest.raises(DegenerateGeometryError):
        check_watertight(np.vstack([f, f[:1]]))


def test_hop_distances_on_a_strip():
    faces = np.array([[0, 1, 2], [1, 3, 2], [2, 3, 4], [3, 5, 4]])
    d = hop_distances(vertex_adjacency(6, faces), 0)
    assert list(d) == [0, 1, 1, 2, 2, 3]


def test_obj_round_trip(tmp_path):
    v, f = icosphere(1.0, 1)
    write_obj(tmp_path / "s.obj", v, f)
    v2, f2 = read_obj(tmp_path / "s.obj")
    assert np.array_equal(f, f2)
    assert np.allclose(v, v2, atol=1e-12)
