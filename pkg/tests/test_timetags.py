import numpy as np
import pytest

from zpl_lab.detection import Detector, DetectorRecords, detect
from zpl_lab.errors import TimeTagFormatError
from zpl_lab.timetags import HEADER, MAGIC, RECORD_DTYPE, read_timetags, write_timetags


def sample_records(n=1_000_000, seed=0):
    rng = np.random.default_rng(seed)
    channel = rng.integers(0, 2, n).astype(np.uint8)
    ticks = np.cumsum(rng.integers(0, 50_000, n)).astype(np.uint64)
    return DetectorRecords(channel, ticks, 4e-12)


def test_round_trip(tmp_path):
    rec = sample_records()
    path = tmp_path / "a.ztt"
    write_timetags(rec, path)
    assert path.stat().st_size == HEADER.size + len(rec) * RECORD_DTYPE.itemsize
    back = read_timetags(path)
    assert back.tick == rec.tick
    assert np.array_equal(back.channel, rec.channel) and np.array_equal(back.ticks, rec.ticks)


def test_header_layout(tmp_path):
    path = tmp_path / "a.ztt"
    write_timetags(DetectorRecords([0, 1], [5, 7], 4e-12), path)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    assert int.from_bytes(raw[4:6], "little") == 1
    assert np.frombuffer(raw[6:14], "<f8")[0] == 4e-12
    assert int.from_bytes(raw[14:16], "little") == 2
    assert raw[16:26] == bytes([0, 0]) + (5).to_bytes(8, "little")


def test_empty_file_round_trip(tmp_path):
    path = tmp_path / "a.ztt"
    write_timetags(DetectorRecords([], [], 4e-12), path)
    assert len(read_timetags(path)) == 0


def test_quantisation_error_below_one_tick(tmp_path):
    rng = np.random.default_rng(1)
    times = np.sort(rng.random(100_000) * 1e-3)
    det = Detector(quantum_efficiency=1.0, jitter_sigma=0.0, dead_time=0.0, dark_rate=0.0)
    rec = detect(times, det, 0, 3)
    path = tmp_path / "a.ztt"
    write_timetags(rec, path)
    err = times - read_timetags(path).times
    assert np.all((err >= 0) & (err < 4e-12 * (1 + 1e-9)))


@pytest.fixture
def good_file(tmp_path):
    path = tmp_path / "good.ztt"
    write_timetags(sample_records(100), path)
    return path


def corrupt(path, offset, data):
    raw = bytearray(path.read_bytes())
    raw[offset:offset + len(data)] = data
    path.write_bytes(bytes(raw))


def test_truncated_record(good_file):
    raw = good_file.read_bytes()
    good_file.write_bytes(raw[:-3])
    with pytest.raises(TimeTagFormatError) as exc:
        read_timetags(good_file)
    assert exc.value.offset == HEADER.size + 99 * RECORD_DTYPE.itemsize


def test_truncated_header(good_file):
    good_file.write_bytes(good_file.read_bytes()[:9])
    with pytest.raises(TimeTagFormatError) as exc:
        read_timetags(good_file)
    assert exc.value.offset == 9


def test_bad_magic(good_file):
    corrupt(good_file, 0, b"NOPE")
    with pytest.raises(TimeTagFormatError, match="magic") as exc:
        read_timetags(good_file)
    assert exc.value.offset == 0


def test_bad_version(good_file):
    corrupt(good_file, 4, (2).to_bytes(2, "little"))
    with pytest.raises(TimeTagFormatError, match="version") as exc:
        read_timetags(good_file)
    assert exc.value.offset == 4


def test_channel_out_of_range(good_file):
    corrupt(good_file, HEADER.size + 10 * RECORD_DTYPE.itemsize, bytes([7]))
    with pytest.raises(TimeTagFormatError, match="channel") as exc:
        read_timetags(good_file)
    assert exc.value.offset == HEADER.size + 10 * RECORD_DTYPE.itemsize


def test_decreasing_ticks(tmp_path):
    rec = DetectorRecords([0, 1, 0, 0], [10, 3, 12, 11], 4e-12)
    with pytest.raises(ValueError):
        write_timetags(rec, tmp_path / "x.ztt")
    ok = DetectorRecords([0, 1, 0, 0], [10, 3, 12, 13], 4e-12)
    path = tmp_path / "y.ztt"
    write_timetags(ok, path)
    corrupt(path, HEADER.size + 3 * RECORD_DTYPE.itemsize + 2, (11).to_bytes(8, "little"))
    with pytest.raises(TimeTagFormatError, match="decrease") as exc:
        read_timetags(path)
    assert exc.value.offset == HEADER.size + 3 * RECORD_DTYPE.itemsize


def test_interleaved_channels_need_not_be_globally_ordered(tmp_path):
    rec = DetectorRecords([0, 1, 0], [10, 3, 12], 4e-12)
    path = tmp_path / "z.ztt"
    write_timetags(rec, path)
    assert read_timetags(path).ticks.tolist() == [10, 3, 12]
