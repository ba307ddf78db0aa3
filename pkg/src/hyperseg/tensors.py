"""Dense tensor substrate: mode unfolding, truncated SVD, spatial resizing, binary IO.

Arrays are numpy float64 throughout, row-major. Image-like tensors use the
axis layout (depth, x, y): axis 1 indexes width/x and axis 2 height/y, so a
click at pixel (x, y) addresses ``t[:, x, y]`` directly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"HSEG"
CONTAINER_VERSION = 1

_ORTHO_TOL = 1e-9


class NumericError(RuntimeError):
    """Raised when a numeric routine produces or detects non-finite results."""


def as_tensor(data, dtype=np.float64) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if not np.all(np.isfinite(arr)):
        raise NumericError("tensor contains NaN or Inf entries")
    return arr


@dataclass(frozen=True)
class SvdResult:
    """Top-k singular triplets of a matrix.

    ``left_vectors`` is m-by-k, ``right_vectors`` n-by-k; both have orthonormal
    columns. ``singular_values`` is nonincreasing and nonnegative.
    """

    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-`mode` unfolding: extent(mode) rows, one column per remaining index.

    Columns cycle the remaining axes in increasing axis order with the
    highest-numbered axis varying fastest (row-major order of the remaining
    index tuple). ``fold`` inverts this exactly.
    """
    t = np.asarray(t)
    if not 0 <= mode < t.ndim:
        raise ValueError(f"mode {mode} out of range for rank-{t.ndim} tensor")
    return np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1)


def fold(m: np.ndarray, mode: int, shape) -> np.ndarray:
    """Inverse of :func:`unfold` for the given original shape."""
    shape = tuple(int(s) for s in shape)
    if not 0 <= mode < len(shape):
        raise ValueError(f"mode {mode} out of range for shape {shape}")
    m = np.asarray(m)
    lead = (shape[mode],) + shape[:mode] + shape[mode + 1:]
    if m.shape != (shape[mode], int(np.prod(lead[1:], dtype=np.int64))):
        raise ValueError(f"matrix shape {m.shape} inconsistent with {shape} at mode {mode}")
    return np.moveaxis(m.reshape(lead), 0, mode)


def truncated_svd(m: np.ndarray, k: int) -> SvdResult:
    """Top-k singular triplets of ``m``; U diag(S) V^T is the best rank-k
    Frobenius approximation."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("truncated_svd expects a matrix")
    if not 1 <= k <= min(m.shape):
        raise ValueError(f"k={k} must lie in [1, min{m.shape}]")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericError(f"SVD did not converge on shape {m.shape}: {exc}") from exc
    if not np.all(np.isfinite(s)):
        raise NumericError("SVD produced non-finite singular values")
    return SvdResult(
        left_vectors=np.ascontiguousarray(u[:, :k]),
        singular_values=np.ascontiguousarray(s[:k]),
        right_vectors=np.ascontiguousarray(vt[:k].T),
    )


def check_orthonormal(columns: np.ndarray, tol: float = _ORTHO_TOL) -> bool:
    g = columns.T @ columns
    return bool(np.max(np.abs(g - np.eye(columns.shape[1]))) <= tol * max(1.0, columns.shape[0] ** 0.5))


def _resize_axis_indices_nearest(n_in: int, n_out: int) -> np.ndarray:
    # floor(i * n_in / n_out): exact block replication at integer upscales.
    return (np.arange(n_out) * n_in) // n_out


def _resize_axis_weights_bilinear(n_in: int, n_out: int):
    # Align-corners: output sample i sits at source coordinate i*(n_in-1)/(n_out-1).
    if n_out == 1 or n_in == 1:
        lo = np.zeros(n_out, dtype=np.int64)
        return lo, lo.copy(), np.zeros(n_out)
    pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.floor(pos).astype(np.int64)
    lo = np.minimum(lo, n_in - 2)
    frac = pos - lo
    return lo, lo + 1, frac


def resize2d(t: np.ndarray, out_w: int, out_h: int, method: str = "bilinear") -> np.ndarray:
    """Resize the two trailing spatial axes of a (w, h) or (depth, w, h) tensor.

    ``nearest`` maps output index i to source index floor(i*in/out), which is
    exact block replication at integer scale factors. ``bilinear`` uses the
    align-corners convention. When the target equals the source extents the
    input is returned unchanged (identity, no copy).
    """
    t = np.asarray(t)
    if t.ndim == 2:
        return resize2d(t[None], out_w, out_h, method)[0]
    if t.ndim != 3:
        raise ValueError("resize2d expects a (w, h) or (depth, w, h) tensor")
    out_w, out_h = int(out_w), int(out_h)
    if out_w < 1 or out_h < 1:
        raise ValueError("target extents must be positive")
    d, w, h = t.shape
    if (w, h) == (out_w, out_h):
        return t
    if method == "nearest":
        ix = _resize_axis_indices_nearest(w, out_w)
        iy = _resize_axis_indices_nearest(h, out_h)
        return t[:, ix[:, None], iy[None, :]]
    if method == "bilinear":
        x0, x1, fx = _resize_axis_weights_bilinear(w, out_w)
        y0, y1, fy = _resize_axis_weights_bilinear(h, out_h)
        fx = fx[:, None]
        fy = fy[None, :]
        a = t[:, x0[:, None], y0[None, :]]
        b = t[:, x1[:, None], y0[None, :]]
        c = t[:, x0[:, None], y1[None, :]]
        e = t[:, x1[:, None], y1[None, :]]
        top = a * (1 - fx) + b * fx
        bot = c * (1 - fx) + e * fx
        return top * (1 - fy) + bot * fy
    raise ValueError(f"unknown resize method {method!r}")


def save_tensor(path, t: np.ndarray) -> None:
    """Write a tensor to the flat binary container (bit-exact round trip)."""
    t = np.ascontiguousarray(np.asarray(t, dtype=np.float64))
    header = MAGIC + struct.pack("<HH", CONTAINER_VERSION, t.ndim)
    header += struct.pack(f"<{t.ndim}Q", *t.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(t.astype("<f8", copy=False).tobytes())


def tensor_to_bytes(t: np.ndarray) -> bytes:
    t = np.ascontiguousarray(np.asarray(t, dtype=np.float64))
    return (
        MAGIC
        + struct.pack("<HH", CONTAINER_VERSION, t.ndim)
        + struct.pack(f"<{t.ndim}Q", *t.shape)
        + t.astype("<f8", copy=False).tobytes()
    )


def tensor_from_bytes(raw: bytes) -> np.ndarray:
    if raw[:4] != MAGIC:
        raise ValueError("bad magic: not a tensor container")
    version, rank = struct.unpack_from("<HH", raw, 4)
    if version != CONTAINER_VERSION:
        raise ValueError(f"unsupported container version {version}")
    shape = struct.unpack_from(f"<{rank}Q", raw, 8)
    offset = 8 + 8 * rank
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
    t = data.reshape(shape).astype(np.float64)
    if not np.all(np.isfinite(t)):
        raise NumericError("container holds non-finite values")
    return t


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())
