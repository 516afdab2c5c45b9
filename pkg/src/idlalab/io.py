"""Snapshot, CSV, and manifest persistence for grown clusters.

Binary snapshots hold (d, N, seed) and the delta-encoded site list in
settle order; identical clusters serialize to identical bytes no
matter which schedule produced them, so snapshot hashes compare runs.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time

import numpy as np

from . import growth

MAGIC = b"IDLS"
_HEADER = struct.Struct("<4sBBBBQq")  # magic, ver, d, wide, pad, N, seed


def encode_snapshot(cluster: growth.ClusterState) -> bytes:
    sites = np.asarray(cluster.sites, dtype=np.int64)
    deltas = np.diff(sites, axis=0, prepend=np.zeros((1, sites.shape[1]),
                                                     dtype=np.int64))
    wide = bool(np.abs(deltas).max(initial=0) > 32767)
    body = deltas.astype(np.int32 if wide else np.int16)
    head = _HEADER.pack(MAGIC, 1, cluster.d, int(wide), 0,
                        len(sites), cluster.seed)
    return head + body.tobytes()


def save_snapshot(path: str, cluster: growth.ClusterState) -> str:
    blob = encode_snapshot(cluster)
    with open(path, "wb") as fh:
        fh.write(blob)
    return hashlib.sha256(blob).hexdigest()


def snapshot_hash(cluster: growth.ClusterState) -> str:
    return hashlib.sha256(encode_snapshot(cluster)).hexdigest()


def load_snapshot(path: str, process: str = "snapshot") -> growth.ClusterState:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, ver, d, wide, _, n, seed = _HEADER.unpack(head)
        if magic != MAGIC or ver != 1:
            raise ValueError(f"{path} is not a cluster snapshot")
        body = fh.read()
    deltas = np.frombuffer(body, dtype=np.int32 if wide else np.int16)
    sites = deltas.reshape(n, d).astype(np.int64).cumsum(axis=0)
    return growth.ClusterState(d=d, seed=seed, process=process, sites=sites,
                               meta={"path": path})


def save_sites_csv(path: str, cluster: growth.ClusterState) -> None:
    cols = ["x", "y", "z", "w"][:cluster.d]
    with open(path, "w") as fh:
        fh.write(",".join(cols + ["settle_order"]) + "\n")
        for i, row in enumerate(cluster.sites.tolist()):
            fh.write(",".join(str(c) for c in row) + f",{i}\n")


def write_manifest(path: str, config: dict, wall_time_s: float,
                   extra: dict | None = None) -> None:
    from . import __version__, kernels
    doc = {"config": config, "version": __version__,
           "kernel_impl": kernels.IMPL, "numpy": np.__version__,
           "wall_time_s": wall_time_s, "created_unix": int(time.time())}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, default=str)


def read_manifest(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)
