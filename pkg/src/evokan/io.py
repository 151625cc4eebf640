"""Binary network/snapshot files and CSV helpers.

EVKN (network + parameters), little-endian::

    b"EVKN" | u32 version | u8 backend | u8 embedding | u8 edge_scales
    | f64 half_period | u32 n_widths | u32 * n_widths
    | u32 order | u32 grid | f64 lo | f64 hi | u8 has_hidden | f64 hidden_lo | f64 hidden_hi
    | u64 n_params | f64 * n_params

EVKS (field snapshot)::

    b"EVKS" | u32 version | u32 nx | u32 ny | u32 components | f64 t | f64 * (components * nx * ny)

1D snapshots store ``ny = 1``.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .network import IDENTITY, KAN, MLP, PERIODIC, Network
from .problems import FieldSnapshot

NETWORK_MAGIC = b"EVKN"
SNAPSHOT_MAGIC = b"EVKS"
FORMAT_VERSION = 1

_BACKENDS = {KAN: 0, MLP: 1}
_EMBEDDINGS = {IDENTITY: 0, PERIODIC: 1}


class FormatError(ValueError):
    pass


def network_to_bytes(net: Network, params: np.ndarray) -> bytes:
    params = np.asarray(params, dtype="<f8")
    if params.shape != (net.n_params,):
        raise FormatError(f"parameter vector has {params.size} entries, network needs {net.n_params}")
    hidden = net.hidden_domain
    parts = [
        NETWORK_MAGIC,
        struct.pack("<IBBBd", FORMAT_VERSION, _BACKENDS[net.backend], _EMBEDDINGS[net.embedding],
                    int(net.edge_scales), net.half_period),
        struct.pack(f"<I{len(net.widths)}I", len(net.widths), *net.widths),
        struct.pack("<IIddBdd", net.order, net.grid, net.domain[0], net.domain[1], hidden is not None,
                    *(hidden or (0.0, 0.0))),
        struct.pack("<Q", net.n_params),
        params.tobytes(),
    ]
    return b"".join(parts)


def network_from_bytes(data: bytes) -> tuple[Network, np.ndarray]:
    if data[:4] != NETWORK_MAGIC:
        raise FormatError("not an EVKN file")
    try:
        return _network_from_bytes(data)
    except (struct.error, ValueError) as err:
        if isinstance(err, FormatError):
            raise
        raise FormatError(f"corrupt EVKN file: {err}") from err


def _network_from_bytes(data: bytes) -> tuple[Network, np.ndarray]:
    pos = 4
    version, backend, emb, scales, half = struct.unpack_from("<IBBBd", data, pos)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported EVKN version {version}")
    pos += struct.calcsize("<IBBBd")
    (nw,) = struct.unpack_from("<I", data, pos)
    pos += 4
    widths = struct.unpack_from(f"<{nw}I", data, pos)
    pos += 4 * nw
    order, grid, lo, hi, has_hidden, hlo, hhi = struct.unpack_from("<IIddBdd", data, pos)
    pos += struct.calcsize("<IIddBdd")
    (n,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if len(data) - pos != 8 * n:
        raise FormatError("EVKN payload length does not match header")
    params = np.frombuffer(data, dtype="<f8", count=n, offset=pos).astype(float)
    inv_b = {v: k for k, v in _BACKENDS.items()}
    inv_e = {v: k for k, v in _EMBEDDINGS.items()}
    net = Network(widths, backend=inv_b[backend], embedding=inv_e[emb], half_period=half, order=order,
                  grid=grid, domain=(lo, hi), hidden_domain=(hlo, hhi) if has_hidden else None,
                  edge_scales=bool(scales))
    if net.n_params != n:
        raise FormatError(f"EVKN layout mismatch: header says {n} parameters, structure has {net.n_params}")
    return net, params


def save_network(path, net: Network, params) -> None:
    Path(path).write_bytes(network_to_bytes(net, params))


def load_network(path) -> tuple[Network, np.ndarray]:
    return network_from_bytes(Path(path).read_bytes())


def snapshot_to_bytes(snap: FieldSnapshot) -> bytes:
    nx = snap.shape[0]
    ny = snap.shape[1] if snap.dim == 2 else 1
    head = SNAPSHOT_MAGIC + struct.pack("<IIIId", FORMAT_VERSION, nx, ny, snap.components, snap.t)
    return head + np.ascontiguousarray(snap.values, dtype="<f8").tobytes()


def snapshot_from_bytes(data: bytes) -> FieldSnapshot:
    if data[:4] != SNAPSHOT_MAGIC:
        raise FormatError("not an EVKS file")
    try:
        version, nx, ny, comps, t = struct.unpack_from("<IIIId", data, 4)
    except struct.error as err:
        raise FormatError(f"truncated EVKS header: {err}") from err
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported EVKS version {version}")
    offset = 4 + struct.calcsize("<IIIId")
    shape = (nx,) if ny == 1 else (nx, ny)
    count = comps * nx * ny
    if len(data) - offset != 8 * count:
        raise FormatError("EVKS payload length does not match header")
    vals = np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(float)
    return FieldSnapshot(shape, vals.reshape((comps,) + shape), t)


def save_snapshot(path, snap: FieldSnapshot) -> None:
    Path(path).write_bytes(snapshot_to_bytes(snap))


def load_snapshot(path) -> FieldSnapshot:
    return snapshot_from_bytes(Path(path).read_bytes())


def fmt(x) -> str:
    """Round-trippable, platform-independent number formatting."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (int, float, np.floating, np.integer)) else v for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
