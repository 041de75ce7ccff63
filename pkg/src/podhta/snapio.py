"""Snapshot run files and snapshot database files.

Run file::

    b"SNAP", u32 version (1), u32 header length H, H bytes of UTF-8 JSON,
    then one block of n_dof little-endian f64 per snapshot (record-major)

The JSON header holds ``params``, ``config``, ``n_dof``, ``steps`` (list of
step indices), ``qoi``, ``converged`` and ``newton_iterations_total``.

Database file::

    b"SNDB", u32 version (1), u32 manifest length M, M bytes of UTF-8 JSON,
    then the run files back to back

The manifest is ``{"s": runs, "runs": [{"offset": o, "length": n, "params": [...]}]}``
with offsets counted from the first byte after the manifest.
"""

from __future__ import annotations

import dataclasses
import json
import struct

import numpy as np

from podhta.errors import HTFormatError
from podhta.fullmodel import LatticeConfig, ParameterPoint, SimulationResult, Snapshot
from podhta.rom import SnapshotDatabase

RUN_MAGIC = b"SNAP"
DB_MAGIC = b"SNDB"
VERSION = 1


def _header(data, magic, offset=0):
    if data[offset:offset + 4] != magic:
        raise HTFormatError(f"bad magic, expected {magic!r}", offset)
    if len(data) < offset + 12:
        raise HTFormatError("truncated header", offset)
    version, length = struct.unpack("<II", data[offset + 4:offset + 12])
    if version != VERSION:
        raise HTFormatError(f"unsupported version {version}", offset + 4)
    start = offset + 12
    if len(data) < start + length:
        raise HTFormatError("truncated JSON header", start)
    try:
        meta = json.loads(data[start:start + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HTFormatError(f"malformed JSON header: {exc}", start) from exc
    return meta, start + length


def encode_run(result: SimulationResult, config: LatticeConfig) -> bytes:
    snaps = result.snapshots
    n_dof = snaps[0].displacement.size if snaps else 0
    meta = {
        "params": list(result.params.as_tuple()),
        "config": dataclasses.asdict(config),
        "n_dof": n_dof,
        "steps": [s.step_index for s in snaps],
        "qoi": None if not np.isfinite(result.qoi) else result.qoi,
        "converged": bool(result.converged),
        "newton_iterations_total": int(result.newton_iterations_total),
    }
    head = json.dumps(meta, sort_keys=True).encode("utf-8")
    body = b"".join(np.asarray(s.displacement, dtype="<f8").tobytes() for s in snaps)
    return RUN_MAGIC + struct.pack("<II", VERSION, len(head)) + head + body


def decode_run(data: bytes):
    """Return ``(SimulationResult, LatticeConfig)``."""
    meta, pos = _header(data, RUN_MAGIC)
    params = ParameterPoint(*meta["params"])
    config = LatticeConfig(**meta["config"])
    n_dof, steps = int(meta["n_dof"]), meta["steps"]
    need = 8 * n_dof * len(steps)
    if len(data) - pos != need:
        raise HTFormatError(f"payload has {len(data) - pos} bytes, expected {need}", pos)
    block = np.frombuffer(data[pos:], dtype="<f8").reshape(len(steps), n_dof).astype(float)
    snaps = [Snapshot.from_displacement(block[k], step, params) for k, step in enumerate(steps)]
    qoi = float("nan") if meta["qoi"] is None else float(meta["qoi"])
    result = SimulationResult(snaps, qoi, bool(meta["converged"]), int(meta["newton_iterations_total"]), params)
    return result, config


def encode_database(runs) -> bytes:
    """``runs`` is a list of ``(SimulationResult, LatticeConfig)``."""
    blobs = [encode_run(res, cfg) for res, cfg in runs]
    entries, offset = [], 0
    for (res, _cfg), blob in zip(runs, blobs):
        entries.append({"offset": offset, "length": len(blob), "params": list(res.params.as_tuple())})
        offset += len(blob)
    manifest = json.dumps({"s": len(runs), "runs": entries}, sort_keys=True).encode("utf-8")
    return DB_MAGIC + struct.pack("<II", VERSION, len(manifest)) + manifest + b"".join(blobs)


def decode_database(data: bytes):
    """Return ``(SnapshotDatabase, [LatticeConfig per run])``."""
    manifest, pos = _header(data, DB_MAGIC)
    results, configs = [], []
    end = pos
    for entry in manifest["runs"]:
        start = pos + int(entry["offset"])
        end = start + int(entry["length"])
        if end > len(data):
            raise HTFormatError("truncated run blob", start)
        res, cfg = decode_run(data[start:end])
        results.append(res)
        configs.append(cfg)
    if len(results) != manifest["s"]:
        raise HTFormatError("manifest run count mismatch", 4)
    if end != len(data):
        raise HTFormatError(f"{len(data) - end} trailing bytes", end)
    if not results:
        raise HTFormatError("database holds no runs", pos)
    return SnapshotDatabase.from_results(results), configs


def write_bytes(path, data):
    with open(path, "wb") as fh:
        fh.write(data)


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()
