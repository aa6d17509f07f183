"""Image I/O: 8-bit PNG for previews, 32-bit PFM for lossless pipelines."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError


def read_image(path: str | Path) -> np.ndarray:
    """Load an image as (H, W, 3) float32 in [0, 1]."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing image file {path}", field="image")
    if path.suffix.lower() == ".pfm":
        return read_pfm(path)
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def write_image(path: str | Path, image: np.ndarray) -> None:
    """Write float [0, 1] image; format picked from the suffix (.png or .pfm)."""
    path = Path(path)
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    if path.suffix.lower() == ".pfm":
        write_pfm(path, img)
        return
    quant = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(quant, mode="RGB").save(path)


def read_pfm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] not in (b"PF", b"Pf"):
        raise DataError(f"not a PFM file: {path}", field="image")
    channels = 3 if parts[0] == b"PF" else 1
    w, h = (int(x) for x in parts[1].split())
    scale = float(parts[2])
    dtype = "<f4" if scale < 0 else ">f4"
    pixels = np.frombuffer(parts[3], dtype=dtype, count=w * h * channels)
    img = pixels.reshape(h, w, channels)[::-1].astype(np.float32)  # rows bottom-up
    if channels == 1:
        img = np.repeat(img, 3, axis=2)
    return np.ascontiguousarray(img)


def write_pfm(path: str | Path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype="<f4")
    h, w = img.shape[:2]
    header = f"PF\n{w} {h}\n-1.0\n".encode()
    Path(path).write_bytes(header + img[::-1].tobytes())
