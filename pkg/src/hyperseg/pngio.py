"""PNG image handling.

Images travel through the pipeline as (3, w, h) float64 arrays in [0, 1] and
binary masks as (w, h) bool arrays, so PNG rows/columns are transposed into
the (depth, x, y) layout on load and back on save. Encoding is deterministic:
identical pixels produce identical bytes.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image


def _to_pil_rgb(img: np.ndarray) -> Image.Image:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError("expected a (3, w, h) image array")
    arr = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    return Image.fromarray(arr.transpose(2, 1, 0), mode="RGB")


def _from_pil_rgb(im: Image.Image) -> np.ndarray:
    arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 1, 0))


def load_image_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return _from_pil_rgb(im)


def save_image_png(path, img: np.ndarray) -> None:
    _to_pil_rgb(img).save(path, format="PNG")


def decode_image_png(raw: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(raw)) as im:
        return _from_pil_rgb(im)


def encode_image_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    _to_pil_rgb(img).save(buf, format="PNG")
    return buf.getvalue()


def load_mask_png(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return np.ascontiguousarray(arr.T >= 128)


def save_mask_png(path, mask: np.ndarray) -> None:
    arr = (np.asarray(mask, dtype=bool).T.astype(np.uint8)) * 255
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def encode_mask_png(mask: np.ndarray) -> bytes:
    buf = io.BytesIO()
    arr = (np.asarray(mask, dtype=bool).T.astype(np.uint8)) * 255
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def decode_mask_png(raw: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(raw)) as im:
        arr = np.asarray(im.convert("L"))
    return np.ascontiguousarray(arr.T >= 128)
