"""Checkpoint container: magic bytes, JSON header, raw float32 payload, CRC32.

Layout: ``BWMA`` | version byte | u32-LE header length | UTF-8 JSON header |
tensor payloads (little-endian float32, header order) | u32-LE CRC32 over the
payload bytes.  The header lists layer tensors with shapes plus the quantizer
state of every layer, so a load reproduces the model bitwise.
"""

from __future__ import annotations

import json
import struct
import zlib
from typing import Optional

import numpy as np

from .errors import DataFormatError
from .models import build_model
from .nn import ActQuant, Model, SteSchedule
from .quant import ActQuantState, SteParams, binarize_levels

MAGIC = b"BWMA"
FORMAT_VERSION = 1


def _quant_entries(model: Model, ste: SteSchedule) -> dict:
    """Per-MVM-layer quantizer record: binary levels + the feeding activation site."""
    entries = {}
    last_site: Optional[ActQuant] = None
    for stage in model._walk():
        if isinstance(stage, ActQuant):
            last_site = stage
            continue
        if not hasattr(stage, "effective_weight"):
            continue
        entry = {
            "binarized": stage.quantize,
            "c": None,
            "r": None,
            "threshold": None,
            "t": ste.params.t,
            "alpha": ste.params.alpha,
            "a_min": None,
            "a_max": None,
            "b": None,
            "ema_momentum": None,
        }
        if stage.quantize:
            levels = binarize_levels(stage.weight.data)
            entry.update(c=levels.c, r=levels.r, threshold=levels.threshold)
        if last_site is not None and last_site.enabled:
            s = last_site.state
            entry.update(a_min=s.a_min, a_max=s.a_max, b=s.bits, ema_momentum=s.ema_momentum)
        entries[stage.name] = entry
    return entries


def save_checkpoint(model: Model, path: str, config: Optional[dict] = None,
                    ste: Optional[SteSchedule] = None) -> None:
    ste = ste or SteSchedule()
    tensors = model.parameters()
    header = {
        "arch": model.arch,
        "act_bits": model.act_bits,
        "quantize_first_last": any(
            s.quantize for s in model.mvm_stages() if s.name in ("conv1", "fc", "fc2")
        ),
        "config": config,
        "ste": {"t": ste.params.t, "alpha": ste.params.alpha},
        "tensors": [{"name": name, "shape": list(t.shape)} for name, t in tensors],
        "quant_sites": {
            site.name: {
                "a_min": site.state.a_min,
                "a_max": site.state.a_max,
                "b": site.state.bits,
                "ema_momentum": site.state.ema_momentum,
            }
            for site in model.quant_sites()
        },
        "layers": _quant_entries(model, ste),
    }
    header_bytes = json.dumps(header).encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(t.data, dtype="<f4").tobytes() for _, t in tensors
    )
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("B", FORMAT_VERSION))
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def load_checkpoint(path: str) -> tuple[Model, SteSchedule, dict]:
    """Rebuild the model described by a checkpoint; bitwise round trip of save."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise DataFormatError(f"bad checkpoint magic {raw[:4]!r} at offset 0 (expected {MAGIC!r})")
    version = raw[4]
    if version != FORMAT_VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version} at offset 4")
    (header_len,) = struct.unpack_from("<I", raw, 5)
    header_end = 9 + header_len
    if header_end > len(raw) - 4:
        raise DataFormatError(f"header length {header_len} at offset 5 overruns the file")
    try:
        header = json.loads(raw[9:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataFormatError(f"corrupt JSON header at offset 9: {e}") from e
    payload = raw[header_end:-4]
    (crc_stored,) = struct.unpack_from("<I", raw, len(raw) - 4)
    crc_actual = zlib.crc32(payload) & 0xFFFFFFFF
    if crc_stored != crc_actual:
        raise DataFormatError(
            f"payload checksum mismatch at offset {len(raw) - 4}:"
            f" stored 0x{crc_stored:08x}, computed 0x{crc_actual:08x}"
        )

    ste = SteSchedule(alpha=header["ste"]["alpha"])
    ste.params = SteParams(t=header["ste"]["t"], alpha=header["ste"]["alpha"])
    model = build_model(
        header["arch"],
        act_bits=header["act_bits"],
        rng=np.random.default_rng(0),
        quantize_first_last=header.get("quantize_first_last", False),
        ste=ste,
    )
    params = dict(model.parameters())
    offset = 0
    for spec in header["tensors"]:
        name, shape = spec["name"], tuple(spec["shape"])
        if name not in params:
            raise DataFormatError(f"checkpoint tensor {name!r} not present in {header['arch']}")
        count = int(np.prod(shape))
        nbytes = count * 4
        if offset + nbytes > len(payload):
            raise DataFormatError(
                f"payload truncated: tensor {name!r} needs {nbytes} bytes at payload offset {offset}"
            )
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset).reshape(shape)
        if params[name].data.shape != arr.shape:
            raise DataFormatError(f"tensor {name!r} shape {arr.shape} != model {params[name].data.shape}")
        params[name].data = arr.copy()
        offset += nbytes
    sites = {s.name: s for s in model.quant_sites()}
    for name, st in header["quant_sites"].items():
        if name not in sites:
            raise DataFormatError(f"checkpoint quant site {name!r} not present in model")
        if sites[name].enabled:
            sites[name].state = ActQuantState(
                a_min=st["a_min"], a_max=st["a_max"], bits=st["b"], ema_momentum=st["ema_momentum"]
            )
    return model, ste, header
