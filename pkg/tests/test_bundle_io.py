import struct
import zlib

import numpy as np
import pytest

from rebirthlab import bundle_io
from rebirthlab import path_engine as pe
from rebirthlab.errors import BundleFormatError
from rebirthlab.rebirth_kernels import Measure, RebirthSpec


@pytest.fixture
def bundle(case1):
    return pe.simulate_rebirth(case1, RebirthSpec.full(Measure.dirac(0.0)), 0.2,
                               pe.SimConfig(dt=1e-3, t_max=3.0, seed=4), stream=("io",))


def test_roundtrip_is_bit_exact(bundle, tmp_path):
    path = tmp_path / "b.rblb"
    bundle_io.save_bundle(bundle, path)
    back = bundle_io.load_bundle(path)
    assert len(back.cycles) == len(bundle.cycles)
    for a, b in zip(bundle.cycles, back.cycles):
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.states, b.states)
        assert (a.start, a.t0, a.lifetime, a.death_cause) == (b.start, b.t0, b.lifetime,
                                                                b.death_cause)
    np.testing.assert_array_equal(back.zeta, bundle.zeta)
    assert back.model == bundle.model and back.stream == bundle.stream
    y = np.linspace(-0.4, 0.4, 5)
    for method, eps in (("occupation", 0.05), ("bridge", None)):
        e1 = pe.estimate_local_time(bundle, y, epsilon=eps, method=method)
        e2 = pe.estimate_local_time(back, y, epsilon=eps, method=method)
        np.testing.assert_array_equal(e1.values, e2.values)


def test_shifted_bundle_keeps_origin(bundle):
    s = float(bundle.cycles[0].times[10])
    sb = pe.shift_bundle(bundle, s)
    back = bundle_io.loads_bundle(bundle_io.dumps_bundle(sb))
    assert back.origin == sb.origin
    y = [0.0, 0.1]
    np.testing.assert_array_equal(pe.estimate_local_time(sb, y, method="bridge").values,
                                  pe.estimate_local_time(back, y, method="bridge").values)


def _resign(payload: bytes) -> bytes:
    return payload + struct.pack("<I", zlib.crc32(payload))


def test_corruption_detected(bundle):
    data = bytearray(bundle_io.dumps_bundle(bundle))
    data[len(data) // 2] ^= 0x01
    with pytest.raises(BundleFormatError, match="checksum"):
        bundle_io.loads_bundle(bytes(data))


def test_truncation_detected(bundle):
    data = bundle_io.dumps_bundle(bundle)
    with pytest.raises(BundleFormatError):
        bundle_io.loads_bundle(data[:-100])
    # a consistently re-signed but short body is still caught
    with pytest.raises(BundleFormatError, match="shorter"):
        bundle_io.loads_bundle(_resign(data[:-4][:-16]))
    with pytest.raises(BundleFormatError, match="trailing"):
        bundle_io.loads_bundle(_resign(data[:-4] + b"\0" * 8))


def test_bad_magic_and_version(bundle):
    data = bundle_io.dumps_bundle(bundle)
    with pytest.raises(BundleFormatError, match="magic"):
        bundle_io.loads_bundle(b"XXXX" + data[4:])
    payload = bytearray(data[:-4])
    payload[4:6] = struct.pack("<H", bundle_io.FORMAT_VERSION + 1)
    with pytest.raises(BundleFormatError, match="version"):
        bundle_io.loads_bundle(_resign(bytes(payload)))


def test_csv_export(bundle, tmp_path):
    path = tmp_path / "b.csv"
    bundle_io.export_csv(bundle, path)
    rows = path.read_text().splitlines()
    assert rows[0] == "cycle,time,state"
    assert len(rows) - 1 == sum(c.times.size for c in bundle.cycles)
