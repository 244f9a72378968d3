"""Versioned model checkpoint container.

Byte layout (little-endian throughout, no external schema):

    offset  size  content
    0       5     magic b"ICART"
    5       1     format version (currently 1)
    6       2     reserved, zero
    8       8     uint64 header length H
    16      H     UTF-8 JSON header
    16+H    ...   raw array payloads, concatenated in header order

The JSON header holds the model configuration, the species table, and an
``arrays`` list of {name, shape, dtype ("<f8"/"<f4"), offset, nbytes}
records; offsets are relative to the start of the payload region.  Arrays
are row-major.
"""

from __future__ import annotations

import json

import numpy as np

from .model import ModelConfig

__all__ = ["save_checkpoint", "load_checkpoint", "CheckpointError"]

MAGIC = b"ICART"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: dict, config: ModelConfig, extra: dict | None = None):
    names = sorted(params.keys())
    arrays = []
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(params[name])
        if arr.dtype == np.float64:
            dtype = "<f8"
        elif arr.dtype == np.float32:
            dtype = "<f4"
        else:
            arr = arr.astype(np.float64)
            dtype = "<f8"
        blob = arr.astype(dtype).tobytes()
        arrays.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": dtype,
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    header = {
        "config": {
            "species": list(config.species),
            "r_cut": config.r_cut,
            "l_max": config.l_max,
            "L_max": config.L_max,
            "correlation": config.correlation,
            "n_layers": config.n_layers,
            "channels": config.channels,
            "latent_channels": config.latent_channels,
            "variant": config.variant,
            "n_bessel": config.n_bessel,
            "envelope_p": config.envelope_p,
            "radial_widths": list(config.radial_widths),
            "readout_hidden": config.readout_hidden,
            "intermediate_cap": config.intermediate_cap,
            "dtype": config.dtype,
        },
        "arrays": arrays,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION, 0, 0]))
        fh.write(np.uint64(len(header_bytes)).tobytes())
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:5] != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    version = raw[5]
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header_len = int(np.frombuffer(raw[8:16], dtype=np.uint64)[0])
    header = json.loads(raw[16:16 + header_len].decode("utf-8"))
    payload = raw[16 + header_len:]
    params = {}
    for rec in header["arrays"]:
        blob = payload[rec["offset"]:rec["offset"] + rec["nbytes"]]
        arr = np.frombuffer(blob, dtype=rec["dtype"]).reshape(rec["shape"]).copy()
        params[rec["name"]] = arr
    c = header["config"]
    config = ModelConfig(
        species=tuple(c["species"]),
        r_cut=c["r_cut"],
        l_max=c["l_max"],
        L_max=c["L_max"],
        correlation=c["correlation"],
        n_layers=c["n_layers"],
        channels=c["channels"],
        latent_channels=c["latent_channels"],
        variant=c["variant"],
        n_bessel=c["n_bessel"],
        envelope_p=c["envelope_p"],
        radial_widths=tuple(c["radial_widths"]),
        readout_hidden=c["readout_hidden"],
        intermediate_cap=c["intermediate_cap"],
        dtype=c["dtype"],
    )
    return params, config, header.get("extra", {})
