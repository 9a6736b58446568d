import numpy as np
import pytest

from models.radar import RadarParams
from utils.datacube import RadarCube
from utils.errors import DataError
from utils.records import CUBE_HEADER, iter_cubes, read_jsonl, write_cubes, write_jsonl


def _cube(k, rng, params=RadarParams()):
    shape = (params.samples_per_chirp, params.chirps_per_frame, params.n_virtual_channels)
    data = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)).astype(np.complex64)
    return RadarCube(data=data.astype(complex), frame_index=k, params=params)


def test_header_is_64_bytes():
    assert CUBE_HEADER.size == 64


def test_cube_file_holds_consecutive_frames(tmp_path, rng):
    cubes = [_cube(k, rng) for k in range(3)]
    path = tmp_path / "cubes.bin"
    assert write_cubes(path, cubes) == 3
    back = list(iter_cubes(path))
    assert [c.frame_index for c in back] == [0, 1, 2]
    for a, b in zip(cubes, back):
        assert np.array_equal(a.data, b.data)
        assert b.params == a.params


def test_reduced_channel_header_is_honoured(tmp_path, rng):
    params = RadarParams(n_virtual_channels=8)
    path = tmp_path / "cubes.bin"
    write_cubes(path, [_cube(0, rng, params)])
    (cube,) = iter_cubes(path)
    assert cube.data.shape == (56, 90, 8)


def test_truncated_payload_is_a_data_error(tmp_path, rng):
    path = tmp_path / "cubes.bin"
    write_cubes(path, [_cube(0, rng)])
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(DataError, match="truncated"):
        list(iter_cubes(path))


def test_bad_magic_is_a_data_error(tmp_path, rng):
    path = tmp_path / "cubes.bin"
    write_cubes(path, [_cube(0, rng)])
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(DataError, match="magic"):
        list(iter_cubes(path))


def test_jsonl_reports_the_bad_line(tmp_path):
    path = tmp_path / "log.jsonl"
    write_jsonl(path, [{"frame": 0}, {"frame": 1}])
    with open(path, "a") as fh:
        fh.write("{not json}\n")
    with pytest.raises(DataError, match=":3:"):
        list(read_jsonl(path))
