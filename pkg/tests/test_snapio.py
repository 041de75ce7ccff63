import struct

import numpy as np
import pytest

from podhta.errors import HTFormatError
from podhta.fullmodel import LatticeConfig
from podhta.snapio import decode_database, decode_run, encode_database, encode_run


def test_run_round_trip(nominal_run, lattice):
    data = encode_run(nominal_run, lattice)
    assert data[:4] == b"SNAP"
    res, cfg = decode_run(data)
    assert cfg == lattice
    assert res.params == nominal_run.params
    assert res.qoi == nominal_run.qoi
    assert res.converged and res.newton_iterations_total == nominal_run.newton_iterations_total
    assert len(res.snapshots) == len(nominal_run.snapshots) == lattice.steps
    for a, b in zip(res.snapshots, nominal_run.snapshots):
        assert a.step_index == b.step_index
        assert a.displacement.tobytes() == b.displacement.tobytes()
        assert a.max_disp == b.max_disp


def test_run_payload_is_little_endian_record_major(nominal_run, lattice):
    data = encode_run(nominal_run, lattice)
    (length,) = struct.unpack("<I", data[8:12])
    body = np.frombuffer(data[12 + length:], dtype="<f8")
    n_dof = nominal_run.snapshots[0].displacement.size
    np.testing.assert_array_equal(body[n_dof:2 * n_dof], nominal_run.snapshots[1].displacement)


def test_database_round_trip(nominal_run, lattice):
    other = LatticeConfig(steps=lattice.steps)
    data = encode_database([(nominal_run, lattice), (nominal_run, other)])
    db, configs = decode_database(data)
    assert db.s == 2 and len(db) == 2 * len(nominal_run.snapshots)
    assert configs == [lattice, other]
    assert db.snapshots[0].displacement.tobytes() == nominal_run.snapshots[0].displacement.tobytes()


def test_database_errors(nominal_run, lattice):
    data = encode_database([(nominal_run, lattice)])
    with pytest.raises(HTFormatError, match="magic"):
        decode_database(b"SNAP" + data[4:])
    with pytest.raises(HTFormatError):
        decode_database(data[:-8])
    with pytest.raises(HTFormatError, match="trailing"):
        decode_database(data + b"\0")
    with pytest.raises(HTFormatError, match="no runs"):
        decode_database(encode_database([]))


def test_run_truncated(nominal_run, lattice):
    data = encode_run(nominal_run, lattice)
    for cut in (2, 10, 40, len(data) - 1):
        with pytest.raises(HTFormatError):
            decode_run(data[:cut])
