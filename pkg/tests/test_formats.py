import numpy as np
import pytest

from occspot.cloud import BoxLabel, PointCloud
from occspot.formats import (FormatError, frame_bytes, read_boxes,
                             read_checkpoint, read_frame, read_grid,
                             read_labels, write_boxes, write_checkpoint,
                             write_frame, write_grid, write_labels)
from occspot.occupancy import GridSpec, OccupancyGrid


@pytest.fixture
def cloud():
    rng = np.random.default_rng(0)
    # float32-representable payload so the f32 wire format is lossless here
    xyz = rng.normal(0, 20, (257, 3)).astype(np.float32).astype(np.float64)
    feat = rng.random((257, 2)).astype(np.float32).astype(np.float64)
    return PointCloud(xyz, feat)


def test_frame_round_trip_bytes(tmp_path, cloud):
    path = tmp_path / "a.sptc"
    write_frame(path, cloud)
    first = path.read_bytes()
    again = read_frame(path)
    write_frame(path, again)
    assert path.read_bytes() == first
    np.testing.assert_array_equal(again.xyz, cloud.xyz)
    np.testing.assert_array_equal(again.feat, cloud.feat)


def test_frame_header_layout(cloud):
    blob = frame_bytes(cloud)
    assert blob[:4] == b"SPTC"
    assert int.from_bytes(blob[4:8], "little") == 1
    assert int.from_bytes(blob[8:12], "little") == len(cloud)
    assert int.from_bytes(blob[12:16], "little") == cloud.d
    assert len(blob) == 16 + len(cloud) * (3 + cloud.d) * 4


def test_frame_bad_magic(tmp_path):
    path = tmp_path / "bad.sptc"
    path.write_bytes(b"NOPE" + b"\x00" * 12)
    with pytest.raises(FormatError, match="magic"):
        read_frame(path)


def test_frame_truncated(tmp_path, cloud):
    path = tmp_path / "t.sptc"
    write_frame(path, cloud)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(FormatError, match="truncated"):
        read_frame(path)


def test_labels_round_trip(tmp_path):
    labels = np.random.default_rng(1).integers(0, 16, 999)
    path = tmp_path / "a.sptl"
    write_labels(path, labels)
    first = path.read_bytes()
    again = read_labels(path)
    write_labels(path, again)
    assert path.read_bytes() == first
    np.testing.assert_array_equal(again, labels)


def test_labels_reject_wide_values(tmp_path):
    with pytest.raises(ValueError):
        write_labels(tmp_path / "x.sptl", np.array([300]))


def test_boxes_round_trip(tmp_path):
    boxes = [
        BoxLabel(1.5, -2.25, 0.5, 4.0, 2.0, 1.5, 0.25, 1.0, -0.5, 3, True),
        BoxLabel(0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, class_id=15),
    ]
    path = tmp_path / "b.jsonl"
    write_boxes(path, boxes)
    first = path.read_text()
    again = read_boxes(path)
    write_boxes(path, again)
    assert path.read_text() == first
    assert again == boxes


def test_boxes_bad_record(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"cx": 1.0}\n')
    with pytest.raises(FormatError, match="bad box record"):
        read_boxes(path)


def test_grid_round_trip(tmp_path):
    spec = GridSpec(-2.0, -3.0, 0.25, 12, 10, -1.0, 2.0, n_cls=15)
    labels = np.random.default_rng(2).integers(0, 16, (12, 10))
    grid = OccupancyGrid(spec, labels)
    path = tmp_path / "g.spog"
    write_grid(path, grid)
    first = path.read_bytes()
    again = read_grid(path)
    write_grid(path, again)
    assert path.read_bytes() == first
    np.testing.assert_array_equal(again.labels, labels)
    assert again.spec.h == 12 and again.spec.w == 10
    assert again.spec.cell_size == pytest.approx(0.25)


def test_grid_row_major_layout(tmp_path):
    spec = GridSpec(0.0, 0.0, 1.0, 2, 3, -1.0, 1.0, n_cls=5)
    grid = OccupancyGrid(spec, [[1, 2, 3], [4, 5, 0]])
    path = tmp_path / "g.spog"
    write_grid(path, grid)
    body = path.read_bytes()[-6:]
    assert list(body) == [1, 2, 3, 4, 5, 0]


def test_checkpoint_round_trip(tmp_path):
    header = {"model": {"n_cls": 15}, "seed": 3}
    blob = np.random.default_rng(3).normal(size=128).astype(np.float32)
    path = tmp_path / "c.spck"
    write_checkpoint(path, header, blob)
    first = path.read_bytes()
    h2, b2 = read_checkpoint(path)
    write_checkpoint(path, h2, b2)
    assert path.read_bytes() == first
    assert h2 == header
    np.testing.assert_array_equal(b2.astype(np.float32), blob)


def test_atomic_write_leaves_no_partials(tmp_path):
    # a failed write must not leave temp files or clobber the target
    target = tmp_path / "out.bin"
    target.write_bytes(b"original")

    class Boom(Exception):
        pass

    import occspot.formats as fmts
    try:
        fd_holder = {}
        real_fdopen = fmts.os.fdopen

        def exploding_fdopen(fd, mode):
            f = real_fdopen(fd, mode)

            class W:
                def __enter__(self):
                    return self

                def __exit__(self, *a):
                    f.close()
                    return False

                def write(self, data):
                    raise Boom()

            return W()

        fmts.os.fdopen = exploding_fdopen
        with pytest.raises(Boom):
            fmts.atomic_write_bytes(target, b"new")
    finally:
        fmts.os.fdopen = real_fdopen
    assert target.read_bytes() == b"original"
    assert list(tmp_path.glob("*.tmp")) == []
