import numpy as np
import pytest

from arcs.model import SystemState
from arcs.snapshots import SnapshotWriter, read_manifest, read_snapshot, write_snapshot


@pytest.mark.parametrize("shape", [(8,), (4, 6)])
def test_round_trip(tmp_path, shape):
    arr = np.random.default_rng(0).normal(size=shape)
    path = tmp_path / "f.bin"
    write_snapshot(path, arr)
    assert np.array_equal(read_snapshot(path), arr)
    assert path.stat().st_size == 16 + 8 * arr.size


def test_header_layout(tmp_path):
    path = tmp_path / "f.bin"
    write_snapshot(path, np.zeros((3, 5)))
    head = path.read_bytes()[:16]
    assert head[:4] == b"ARCS"
    assert int.from_bytes(head[4:6], "little") == 1
    assert int.from_bytes(head[6:8], "little") == 2
    assert int.from_bytes(head[8:12], "little") == 3
    assert int.from_bytes(head[12:16], "little") == 5


def test_rejects_corrupt_files(tmp_path):
    path = tmp_path / "f.bin"
    write_snapshot(path, np.ones(8))
    data = path.read_bytes()
    path.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(ValueError):
        read_snapshot(path)
    path.write_bytes(data[:-8])
    with pytest.raises(ValueError):
        read_snapshot(path)


def test_writer_and_manifest(tmp_path):
    writer = SnapshotWriter(tmp_path)
    for t in (0.0, 0.5):
        writer(SystemState(t, np.full(4, t), np.ones(4), np.zeros(4)))
    writer.write_manifest()
    rows = read_manifest(tmp_path / "manifest.csv")
    assert len(rows) == 6
    t, field, rel = rows[3]
    assert (t, field) == (0.5, "u")
    assert np.array_equal(read_snapshot(tmp_path / rel), np.full(4, 0.5))


def test_disabled_writer_still_writes_manifest(tmp_path):
    writer = SnapshotWriter(tmp_path, enabled=False)
    writer(SystemState(0.0, np.ones(4), np.ones(4), np.ones(4)))
    writer.write_manifest()
    assert read_manifest(tmp_path / "manifest.csv") == []
    assert not (tmp_path / "snapshots").exists()
