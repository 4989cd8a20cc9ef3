"""Latent sampling, the w-space mapping network, and PCA motion bases."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Mlp
from .tensor import Tensor


class DegenerateDataError(ValueError):
    """Samples carry no variance."""


def sample_z(rng: np.random.Generator, count: int, dim: int, dtype=np.float32) -> np.ndarray:
    if count < 1:
        raise ValueError("sample_z: count must be >= 1")
    return rng.standard_normal((count, dim)).astype(dtype)


class MappingNetwork:
    """Frozen z -> w MLP; ``depth=0`` gives the identity (z-mode generators)."""

    def __init__(self, dim: int, depth: int = 2, seed: int = 0, dtype=np.float32):
        self.dim = dim
        self.depth = depth
        if depth > 0:
            rng = np.random.default_rng([seed, 0x57])
            mlp = Mlp([dim] * (depth + 1), ["leaky_relu"] * depth, rng, dtype)
            for layer in mlp.layers:
                layer.weight.requires_grad = False
                layer.bias.requires_grad = False
            self.mlp = mlp
        else:
            self.mlp = None

    def __call__(self, z):
        return map_to_w(z, self)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {} if self.mlp is None else self.mlp.state_dict()

    def load_state_dict(self, arrays: dict[str, np.ndarray], prefix: str = "") -> None:
        if self.mlp is not None:
            self.mlp.load_state_dict(arrays, prefix)
            for p in self.mlp.parameters():
                p.requires_grad = False


def map_to_w(z, mapping: MappingNetwork):
    """Send z codes (array or Tensor, ...×d) to w space."""
    if z.shape[-1] != mapping.dim:
        raise ValueError(f"map_to_w: code dim {z.shape[-1]} != {mapping.dim}")
    if mapping.mlp is None:
        return z
    if isinstance(z, Tensor):
        return mapping.mlp(z)
    return mapping.mlp(Tensor(z)).data


@dataclass
class PcaBasis:
    V: np.ndarray  # k×d, rows are principal directions
    explained_variance: np.ndarray  # k, descending
    mean: np.ndarray  # d
    m: int

    @property
    def k(self) -> int:
        return self.V.shape[0]

    @property
    def dim(self) -> int:
        return self.V.shape[1]

    def tensors(self, prefix: str = "basis.") -> dict[str, np.ndarray]:
        return {
            f"{prefix}V": self.V,
            f"{prefix}explained_variance": self.explained_variance,
            f"{prefix}mean": self.mean,
            f"{prefix}m": np.array([self.m], dtype=np.float64),
        }

    @classmethod
    def from_tensors(cls, arrays: dict[str, np.ndarray], prefix: str = "basis.") -> "PcaBasis":
        m = arrays.get(f"{prefix}m")
        return cls(
            V=arrays[f"{prefix}V"],
            explained_variance=arrays[f"{prefix}explained_variance"],
            mean=arrays[f"{prefix}mean"],
            m=0 if m is None else int(m[0]),
        )

    def astype(self, dtype) -> "PcaBasis":
        return PcaBasis(self.V.astype(dtype), self.explained_variance, self.mean, self.m)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    for row in out:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            row *= -1
    return out


def compute_pca_basis(samples: np.ndarray, k: int) -> PcaBasis:
    """Top-``k`` eigenvectors of the mean-centred sample covariance.

    Rows are sign-normalised so their first nonzero coordinate is positive.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("compute_pca_basis: samples must be m×d")
    m, d = x.shape
    if not 1 <= k <= d:
        raise ValueError(f"compute_pca_basis: need 1 <= k <= d, got k={k}, d={d}")
    if m <= k:
        raise ValueError(f"compute_pca_basis: need more samples ({m}) than components ({k})")
    if not np.all(np.isfinite(x)):
        raise ValueError("compute_pca_basis: non-finite samples")
    mu = x.mean(axis=0)
    xc = x - mu
    cov = xc.T @ xc / (m - 1)
    if np.trace(cov) <= 0:
        raise DegenerateDataError("compute_pca_basis: samples have zero variance")
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:k]
    vals = np.clip(vals[order], 0.0, None)
    V = _fix_signs(vecs[:, order].T)
    return PcaBasis(V=V, explained_variance=vals, mean=mu, m=m)


def variance_report(basis: PcaBasis, data: np.ndarray) -> np.ndarray:
    """Cumulative fraction of ``data``'s total variance captured by the basis rows."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != basis.dim:
        raise ValueError(f"variance_report: data dim {x.shape} does not match basis dim {basis.dim}")
    xc = x - x.mean(axis=0)
    total = float((xc * xc).sum())
    if total <= 0:
        raise DegenerateDataError("variance_report: data have zero variance")
    captured = ((xc @ basis.V.T) ** 2).sum(axis=0)
    curve = np.cumsum(captured) / total
    return np.minimum(np.maximum.accumulate(curve), 1.0)


def write_variance_csv(curve: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        fh.write("component,cumulative_ratio\n")
        for i, v in enumerate(curve, start=1):
            fh.write(f"{i},{v:.10f}\n")
