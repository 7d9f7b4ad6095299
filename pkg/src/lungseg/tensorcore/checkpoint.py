"""Binary model checkpoints.

Layout (all integers little-endian):

    magic   8 bytes  b"LUNGSEG1"
    header  5 x uint32: depth, base_channels, in_channels, out_channels,
                        input_size
    then per parameter, in declaration order:
        uint32 ndim, uint32 x ndim dims, float32 x prod(dims) data
"""

import struct

import numpy as np

from ..errors import DecodeError

MAGIC = b"LUNGSEG1"


def save_model(model, path):
    """Write a UNet's configuration and parameters to ``path``."""
    cfg = model.config
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<5I", cfg.depth, cfg.base_channels,
                             cfg.in_channels, cfg.out_channels, cfg.input_size))
        for param in model.parameters():
            arr = np.ascontiguousarray(param.value.data, dtype="<f4")
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_model(path):
    """Rebuild a UNet from a checkpoint; raises DecodeError on malformed data."""
    from ..unet import UNet, UNetConfig

    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise DecodeError(f"{path}: bad checkpoint magic {blob[:8]!r}")
    off = 8
    if len(blob) < off + 20:
        raise DecodeError(f"{path}: truncated checkpoint header")
    depth, base, in_ch, out_ch, size = struct.unpack_from("<5I", blob, off)
    off += 20
    try:
        cfg = UNetConfig(depth=depth, base_channels=base, in_channels=in_ch,
                         out_channels=out_ch, input_size=size)
    except ValueError as exc:
        raise DecodeError(f"{path}: invalid configuration in header: {exc}") from exc
    model = UNet(cfg, seed=0)
    for param in model.parameters():
        if len(blob) < off + 4:
            raise DecodeError(f"{path}: truncated before parameter {param.name!r}")
        (ndim,) = struct.unpack_from("<I", blob, off)
        off += 4
        if len(blob) < off + 4 * ndim:
            raise DecodeError(f"{path}: truncated shape for {param.name!r}")
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        if shape != param.value.data.shape:
            raise DecodeError(f"{path}: parameter {param.name!r} has shape "
                              f"{shape}, expected {param.value.data.shape}")
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        nbytes = 4 * count
        if len(blob) < off + nbytes:
            raise DecodeError(f"{path}: truncated data for {param.name!r}")
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        off += nbytes
        param.assign(data.reshape(shape).astype(np.float32))
    if off != len(blob):
        raise DecodeError(f"{path}: {len(blob) - off} trailing bytes")
    return model
