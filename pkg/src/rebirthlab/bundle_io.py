"""Binary persistence of path bundles for replay.

Layout::

    magic  b"RBLB"
    u16    format version
    u32    header length, then a UTF-8 JSON header
    body   per cycle: float64 times, float64 states (little endian)
    u32    crc32 of everything before it

The header carries the model, seed, stream and per-cycle metadata.
"""
from __future__ import annotations

import csv
import json
import os
import struct
import zlib

import numpy as np

from .errors import BundleFormatError
from .path_engine import Cycle, PathBundle

MAGIC = b"RBLB"
FORMAT_VERSION = 1

__all__ = ["save_bundle", "load_bundle", "dumps_bundle", "loads_bundle", "export_csv",
           "FORMAT_VERSION"]


def dumps_bundle(bundle: PathBundle) -> bytes:
    header = {
        "model": bundle.model,
        "seed": bundle.seed,
        "stream": list(bundle.stream),
        "truncated": bundle.truncated,
        "exiled_at_cycle": bundle.exiled_at_cycle,
        "t_max": bundle.t_max,
        "dt": bundle.dt,
        "origin": list(bundle.origin),
        "zeta": [float(z).hex() for z in bundle.zeta],
        "cycles": [{"start": float(c.start).hex(), "t0": float(c.t0).hex(),
                    "lifetime": float(c.lifetime).hex(), "cause": c.death_cause,
                    "n": int(c.times.size)} for c in bundle.cycles],
    }
    hb = json.dumps(header, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(hb)), hb]
    for c in bundle.cycles:
        parts.append(np.ascontiguousarray(c.times, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(c.states, dtype="<f8").tobytes())
    payload = b"".join(parts)
    return payload + struct.pack("<I", zlib.crc32(payload))


def loads_bundle(data: bytes) -> PathBundle:
    if len(data) < 14 or data[:4] != MAGIC:
        raise BundleFormatError("not a bundle file (bad magic)")
    payload, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) != crc:
        raise BundleFormatError("checksum mismatch: file is corrupted or truncated")
    version, hlen = struct.unpack("<HI", payload[4:10])
    if version != FORMAT_VERSION:
        raise BundleFormatError(f"bundle format version {version}, expected {FORMAT_VERSION}")
    try:
        header = json.loads(payload[10:10 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleFormatError(f"unreadable header: {exc}") from exc
    pos = 10 + hlen
    cycles = []
    for meta in header["cycles"]:
        n = meta["n"]
        size = 8 * n
        if pos + 2 * size > len(payload):
            raise BundleFormatError("body shorter than the header declares")
        times = np.frombuffer(payload, "<f8", n, pos).astype(float)
        states = np.frombuffer(payload, "<f8", n, pos + size).astype(float)
        pos += 2 * size
        cycles.append(Cycle(float.fromhex(meta["start"]), float.fromhex(meta["t0"]), times, states,
                            float.fromhex(meta["lifetime"]), meta["cause"]))
    if pos != len(payload):
        raise BundleFormatError("trailing bytes after the declared body")
    zeta = np.array([float.fromhex(z) for z in header["zeta"]], dtype=float)
    return PathBundle(cycles, zeta, header["exiled_at_cycle"], header["seed"],
                      tuple(header["stream"]), header["truncated"], header["model"],
                      header["t_max"], header["dt"], tuple(header["origin"]))


def save_bundle(bundle: PathBundle, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(dumps_bundle(bundle))
    os.replace(tmp, path)


def load_bundle(path) -> PathBundle:
    with open(path, "rb") as fh:
        return loads_bundle(fh.read())


def export_csv(bundle: PathBundle, path) -> None:
    """Flat ``cycle,time,state`` table for plotting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "time", "state"])
        for i, c in enumerate(bundle.cycles, start=1):
            for t, x in zip(c.times, c.states):
                w.writerow([i, repr(float(t)), repr(float(x))])
