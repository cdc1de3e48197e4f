import itertools
import math
import warnings

import numpy as np
import pytest

from lieflow.datasets import (
    MULTI_POINTS,
    Dataset,
    DatasetSpec,
    ObjectKind,
    PointCloud,
    Target,
    canonical_object,
    export_csv,
    generate_dataset,
    load_dataset,
    make_rng,
    multi_objects,
    save_dataset,
    split_indices,
    target_table,
)
from lieflow.errors import FormatError
from lieflow.liegroup import SO3, GroupElement, discrete_group, rotation2


def _stabilizes(M, pts, tol=1e-6):
    moved = pts @ M.T
    d = np.linalg.norm(moved[:, None] - pts[None], axis=-1)
    return d.min(axis=1).max() < tol


def _o2_candidates():
    # C8 rotations and their reflections
    rots = rotation2(np.arange(8) * math.pi / 4)
    return list(rots) + [r @ np.diag([1.0, -1.0]) for r in rots]


def test_arrow_has_seven_centred_vertices():
    arrow = canonical_object(ObjectKind.Arrow2D)
    assert arrow.points.shape == (7, 2)
    np.testing.assert_allclose(arrow.points.mean(0), 0.0, atol=1e-15)
    assert arrow.points[np.argmax(arrow.points[:, 0])][0] > 0  # tip on +x


def test_tetrahedron_edges_distinct():
    tet = canonical_object(ObjectKind.IrregularTetrahedron3D).points
    edges = sorted(np.linalg.norm(a - b) for a, b in itertools.combinations(tet, 2))
    assert len(edges) == 6
    assert min(np.diff(edges)) > 0.05


def test_half_arrow_has_trivial_stabilizer_in_o2():
    pts = canonical_object(ObjectKind.HalfArrow2D).points
    hits = [M for M in _o2_candidates() if _stabilizes(M, pts)]
    assert len(hits) == 1 and np.allclose(hits[0], np.eye(2))


@pytest.mark.parametrize("kind", [ObjectKind.Arrow2D])
def test_arrow_has_trivial_stabilizer_in_c4(kind):
    pts = canonical_object(kind).points
    hits = [e for e in discrete_group("C4").elements if _stabilizes(e.mat, pts)]
    assert len(hits) == 1


def test_3d_objects_have_trivial_stabilizer_in_oct():
    objs = [canonical_object(ObjectKind.IrregularTetrahedron3D).points] + [o.points for o in multi_objects()]
    for pts in objs:
        hits = [e for e in discrete_group("Oct").elements if _stabilizes(e.mat, pts)]
        assert len(hits) == 1
        hits = [e for e in discrete_group("Ico").elements if _stabilizes(e.mat, pts)]
        assert len(hits) == 1


def test_multi_objects_are_four_padded_clouds():
    objs = multi_objects()
    assert len(objs) == 4
    assert all(o.points.shape == (MULTI_POINTS, 3) for o in objs)


def test_point_cloud_validation():
    with pytest.raises(ValueError):
        PointCloud(2, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        PointCloud(2, [[0.0, np.nan]])
    pc = canonical_object(ObjectKind.IrregularTetrahedron3D)
    g = GroupElement(SO3, discrete_group("Oct").elements[5].mat)
    out = pc.transformed(g)
    np.testing.assert_allclose(out.points, (g.mat @ pc.points.T).T)
    assert len(out) == len(pc)


def test_dataset_spec_validation():
    with pytest.raises(ValueError):
        DatasetSpec(ObjectKind.Arrow2D, Target.GaussianSO2, 10, 0)
    with pytest.raises(ValueError):
        DatasetSpec(ObjectKind.IrregularTetrahedron3D, Target.GaussianSO2, 10, 0, angle_sigma=0.0)
    with pytest.raises(ValueError):
        DatasetSpec(ObjectKind.IrregularTetrahedron3D, Target.C4, 10, 0)
    with pytest.raises(ValueError):
        DatasetSpec(ObjectKind.Arrow2D, Target.Oct, 10, 0)


def test_c4_dataset_mode_counts():
    ds = generate_dataset(DatasetSpec(ObjectKind.Arrow2D, Target.C4, 1000, 7))
    assert len(ds) == 1000
    tab = discrete_group("C4").work_stack()
    idx = np.argmin(np.linalg.norm(ds.transforms[:, None] - tab[None], axis=(-2, -1)), axis=1)
    counts = np.bincount(idx, minlength=4)
    sd = math.sqrt(1000 * 0.25 * 0.75)
    assert np.all(np.abs(counts - 250) < 3 * sd)
    base = canonical_object(ObjectKind.Arrow2D).points
    configs = base[None] @ np.swapaxes(tab, -1, -2)
    d = np.linalg.norm(ds.points[:, None] - configs[None], axis=(-2, -1)).min(1)
    assert d.max() < 1e-10


@pytest.mark.parametrize("target", [Target.Tet, Target.Oct, Target.Ico])
def test_orbit_consistency(target):
    ds = generate_dataset(DatasetSpec(ObjectKind.IrregularTetrahedron3D, target, 200, 1))
    base = canonical_object(ObjectKind.IrregularTetrahedron3D).points
    tab = target_table(target).work_stack()
    configs = base[None] @ np.swapaxes(tab, -1, -2)
    d = np.linalg.norm(ds.points[:, None] - configs[None], axis=(-2, -1)).min(1)
    assert d.max() < 1e-10


def test_samples_match_ground_truth():
    ds = generate_dataset(DatasetSpec(ObjectKind.MultiObject3D, Target.Tet, 100, 2))
    canon = ds.canonical_points()
    for x, g, c in zip(ds.samples, ds.ground_truth, canon):
        np.testing.assert_allclose(x.points, c @ g.mat.T, atol=1e-10)
    assert set(np.unique(ds.object_index)) <= {0, 1, 2, 3}


def test_gaussian_so2_angle_spread():
    ds = generate_dataset(DatasetSpec(ObjectKind.IrregularTetrahedron3D, Target.GaussianSO2, 5000, 3))
    ang = np.arctan2(ds.transforms[:, 1, 0], ds.transforms[:, 0, 0])
    assert abs(ang.std() - math.pi / 4) < 0.03
    np.testing.assert_allclose(ds.transforms[:, 2, 2], 1.0)


def test_so2_around_z_is_uniform_about_z():
    ds = generate_dataset(DatasetSpec(ObjectKind.IrregularTetrahedron3D, Target.SO2aroundZ, 2000, 4))
    ang = np.arctan2(ds.transforms[:, 1, 0], ds.transforms[:, 0, 0])
    assert abs(ang.mean()) < 0.15 and abs(ang.std() - math.pi / math.sqrt(3)) < 0.1


def test_empty_dataset():
    ds = generate_dataset(DatasetSpec(ObjectKind.Arrow2D, Target.C4, 0, 0))
    assert len(ds) == 0 and ds.samples == []
    assert canonical_object(ds.spec.object).points.shape == (7, 2)


def test_generation_is_deterministic():
    spec = DatasetSpec(ObjectKind.IrregularTetrahedron3D, Target.Oct, 50, 9)
    a, b = generate_dataset(spec), generate_dataset(spec)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.transforms, b.transforms)
    c = generate_dataset(DatasetSpec(ObjectKind.IrregularTetrahedron3D, Target.Oct, 50, 10))
    assert not np.array_equal(a.points, c.points)


def test_rng_streams_are_reproducible_and_distinct():
    assert make_rng(1, 2).random() == make_rng(1, 2).random()
    assert make_rng(1, 2).random() != make_rng(1, 3).random()


def test_split_is_deterministic():
    tr, te = split_indices(1000, 5)
    tr2, te2 = split_indices(1000, 5)
    assert np.array_equal(te, te2)
    assert len(tr) + len(te) == 1000 and not set(tr) & set(te)
    assert 60 < len(te) < 140


def test_save_load_round_trip(tmp_path):
    ds = generate_dataset(DatasetSpec(ObjectKind.MultiObject3D, Target.Tet, 100, 11))
    p = tmp_path / "d.lfds"
    save_dataset(ds, p)
    back = load_dataset(p)
    assert back.spec == ds.spec
    assert np.array_equal(back.points, ds.points)
    assert np.array_equal(back.transforms, ds.transforms)
    assert np.array_equal(back.object_index, ds.object_index)


def test_truncated_file_names_record(tmp_path):
    ds = generate_dataset(DatasetSpec(ObjectKind.Arrow2D, Target.C4, 10, 0))
    p = tmp_path / "d.lfds"
    save_dataset(ds, p)
    data = p.read_bytes()
    p.write_bytes(data[:-20])
    with pytest.raises(FormatError, match="record 9"):
        load_dataset(p)


def test_unknown_header_fields_warn(tmp_path):
    import struct

    from lieflow.datasets import MAGIC

    ds = generate_dataset(DatasetSpec(ObjectKind.Arrow2D, Target.C4, 3, 0))
    p = tmp_path / "d.lfds"
    save_dataset(ds, p)
    data = p.read_bytes()
    _, hlen = struct.unpack_from("<II", data, len(MAGIC))
    off = len(MAGIC) + 8
    header = data[off : off + hlen] + b"future_field=1\n"
    patched = data[:off - 4] + struct.pack("<I", len(header)) + header + data[off + hlen :]
    p.write_bytes(patched)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        back = load_dataset(p)
    assert any("future_field" in str(x.message) for x in w)
    assert np.array_equal(back.points, ds.points)


def test_bad_magic(tmp_path):
    p = tmp_path / "x.lfds"
    p.write_bytes(b"nonsense")
    with pytest.raises(FormatError):
        load_dataset(p)


def test_export_csv(tmp_path):
    ds = generate_dataset(DatasetSpec(ObjectKind.Arrow2D, Target.C4, 2, 0))
    p = tmp_path / "d.csv"
    export_csv(ds, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "sample,object,point,x,y" and len(lines) == 1 + 2 * 7
