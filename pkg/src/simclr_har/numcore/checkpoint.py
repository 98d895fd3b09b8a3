"""Manifest + raw blob container for named float32 tensors.

``<stem>.manifest`` is UTF-8 text, one ``key=value`` record per line.
Header records come first; each tensor is a single line of tab-separated
fields::

    format=simclr-har-tensors
    version=1
    blob=model.bin
    meta.seed=7
    tensor	name=encoder.conv1.weight	shape=24,3,32	offset=0	nbytes=9216

``<stem>.bin`` holds the little-endian float32 data of every tensor,
concatenated in manifest order.
"""

from pathlib import Path

import numpy as np

FORMAT = "simclr-har-tensors"
VERSION = "1"
_DTYPE = np.dtype("<f4")


class CheckpointError(ValueError):
    """Raised on malformed or inconsistent manifest/blob pairs."""


def _paths(stem):
    stem = str(stem)
    return Path(stem + ".manifest"), Path(stem + ".bin")


def save_tensors(stem, tensors, meta=None):
    """Write ``tensors`` (name -> array) to ``<stem>.manifest`` + ``<stem>.bin``."""
    manifest_path, blob_path = _paths(stem)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"format={FORMAT}", f"version={VERSION}", f"blob={blob_path.name}"]
    for key, value in (meta or {}).items():
        text = str(value)
        if "\n" in text or "\t" in text:
            raise CheckpointError(f"metadata value for {key!r} contains a tab or newline")
        lines.append(f"meta.{key}={text}")
    offset = 0
    chunks = []
    for name, arr in tensors.items():
        if any(ch in name for ch in "\t\n="):
            raise CheckpointError(f"illegal tensor name {name!r}")
        data = np.asarray(arr, dtype=_DTYPE)
        raw = data.tobytes(order="C")
        shape = ",".join(str(d) for d in data.shape)
        lines.append(f"tensor\tname={name}\tshape={shape}\toffset={offset}\tnbytes={len(raw)}")
        chunks.append(raw)
        offset += len(raw)
    with open(blob_path, "wb") as fh:
        for raw in chunks:
            fh.write(raw)
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest_path, blob_path


def load_tensors(stem):
    """Inverse of :func:`save_tensors`. Returns ``(tensors, meta)``."""
    manifest_path, _ = _paths(stem)
    if not manifest_path.exists():
        raise CheckpointError(f"manifest not found: {manifest_path}")
    header = {}
    meta = {}
    records = []
    for lineno, line in enumerate(manifest_path.read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        if line.startswith("tensor\t"):
            fields = dict(f.split("=", 1) for f in line.split("\t")[1:])
            try:
                shape = tuple(int(d) for d in fields["shape"].split(",") if d != "")
                records.append((fields["name"], shape, int(fields["offset"]), int(fields["nbytes"])))
            except (KeyError, ValueError) as exc:
                raise CheckpointError(f"{manifest_path}:{lineno}: bad tensor record") from exc
            continue
        if "=" not in line:
            raise CheckpointError(f"{manifest_path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        if key.startswith("meta."):
            meta[key[5:]] = value
        else:
            header[key] = value
    if header.get("format") != FORMAT:
        raise CheckpointError(f"unknown container format {header.get('format')!r}")
    if header.get("version") != VERSION:
        raise CheckpointError(f"unsupported version {header.get('version')!r}")
    blob_path = manifest_path.parent / header.get("blob", "")
    if not blob_path.is_file():
        raise CheckpointError(f"blob not found: {blob_path}")
    blob = blob_path.read_bytes()
    tensors = {}
    for name, shape, offset, nbytes in records:
        expected = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
        if nbytes != expected or offset + nbytes > len(blob):
            raise CheckpointError(f"tensor {name!r}: size mismatch with blob")
        arr = np.frombuffer(blob, dtype=_DTYPE, count=nbytes // _DTYPE.itemsize, offset=offset)
        tensors[name] = arr.reshape(shape).astype(np.float32)
    return tensors, meta
