"""Motion generator: LSTM encoder/decoder emitting PCA-basis residual steps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .latent import PcaBasis
from .nn import LSTMCell, Mlp, Module
from .tensor import Tensor


@dataclass
class Trajectory:
    codes: Tensor  # B×n×d
    eps: Tensor  # B×(n-1)×d
    hidden: Tensor | None  # B×(n-1)×k, None when n == 1

    @property
    def n(self) -> int:
        return self.codes.shape[1]

    def codes_array(self, index: int = 0) -> np.ndarray:
        return self.codes.data[index]


class MotionGenerator(Module):
    """Encoder LSTM on z1, decoder LSTM on the noise sequence, and the mapping H.

    ``residual=False`` switches the latent update to ``z_t = h_t·V`` (the
    no-residual ablation); ``detach_steps`` stops gradients through
    ``z_{t-1}`` in the residual chain.
    """

    def __init__(self, basis: PcaBasis, lam: float = 0.5, mapper_hidden: int | None = None,
                 seed: int = 0, dtype=np.float32, residual: bool = True, detach_steps: bool = False):
        if lam < 0:
            raise ValueError("motion: step scale must be >= 0")
        k, d = basis.V.shape
        rng = np.random.default_rng([seed, 0x6D])
        self.encoder = LSTMCell(d, k, rng, dtype)
        self.decoder = LSTMCell(d, k, rng, dtype)
        hidden = mapper_hidden or d
        self.mapper = Mlp([k, hidden, d], ["leaky_relu", "identity"], rng, dtype)
        self._V = np.asarray(basis.V, dtype=dtype)
        self._basis = basis
        self.lam = float(lam)
        self.residual = residual
        self.detach_steps = detach_steps

    @property
    def basis(self) -> PcaBasis:
        return self._basis

    @property
    def V(self) -> np.ndarray:
        return self._V

    @property
    def latent_dim(self) -> int:
        return self._V.shape[1]

    @property
    def k(self) -> int:
        return self._V.shape[0]

    def encode_initial(self, z1: Tensor) -> tuple[Tensor, Tensor]:
        return encode_initial(z1, self)

    def decode_step(self, eps_t: Tensor, state) -> tuple[Tensor, Tensor]:
        return decode_step(eps_t, state, self)

    def forward(self, z1, eps_seq) -> Trajectory:
        return generate_trajectory(z1, eps_seq, self)


def encode_initial(z1: Tensor, gm: MotionGenerator) -> tuple[Tensor, Tensor]:
    z1 = T.as_tensor(z1)
    if z1.shape[-1] != gm.latent_dim:
        raise ValueError(f"encode_initial: code dim {z1.shape[-1]} != {gm.latent_dim}")
    return gm.encoder(z1)


def decode_step(eps_t: Tensor, state, gm: MotionGenerator) -> tuple[Tensor, Tensor]:
    eps_t = T.as_tensor(eps_t)
    if eps_t.shape[-1] != gm.latent_dim:
        raise ValueError(f"decode_step: noise dim {eps_t.shape[-1]} != {gm.latent_dim}")
    return gm.decoder(eps_t, state)


def next_code(z_prev: Tensor, h_t: Tensor, V: np.ndarray, lam: float) -> Tensor:
    """z_t = z_{t-1} + lam · h_t · V."""
    z_prev = T.as_tensor(z_prev)
    h_t = T.as_tensor(h_t, like=z_prev)
    if h_t.shape[-1] != V.shape[0] or z_prev.shape[-1] != V.shape[1]:
        raise ValueError(f"next_code: dims h {h_t.shape}, V {V.shape}, z {z_prev.shape} do not chain")
    return z_prev + (h_t @ V.astype(h_t.dtype)) * lam


def generate_trajectory(z1, eps_seq, gm: MotionGenerator) -> Trajectory:
    """Roll the decoder over ``eps_seq`` ((B×)(n-1)×d) starting from ``z1`` ((B×)d).

    Unbatched inputs are treated as a batch of one; the result is always batched.
    """
    z1 = T.as_tensor(z1, like=Tensor(gm.V))
    eps_seq = T.as_tensor(eps_seq, like=z1)
    single = z1.ndim == 1
    if single:
        z1 = T.reshape(z1, (1,) + z1.shape)
        eps_seq = T.reshape(eps_seq, (1,) + eps_seq.shape)
    if eps_seq.ndim != 3 or eps_seq.shape[0] != z1.shape[0]:
        raise ValueError(f"generate_trajectory: eps shape {eps_seq.shape} does not match z1 {z1.shape}")
    steps = eps_seq.shape[1]
    codes = [z1]
    hidden = []
    if steps:
        state = encode_initial(z1, gm)
        z = z1
        for t in range(steps):
            state = decode_step(eps_seq[:, t, :], state, gm)
            h = state[0]
            hidden.append(h)
            if gm.residual:
                prev = z.detach() if gm.detach_steps else z
                z = next_code(prev, h, gm.V, gm.lam)
            else:
                z = h @ gm.V.astype(h.dtype)
            codes.append(z)
    codes_t = T.stack(codes, axis=1)
    hidden_t = T.stack(hidden, axis=1) if hidden else None
    return Trajectory(codes_t, eps_seq, hidden_t)


def mutual_info_loss(h_seq: Tensor, eps_seq, mapper: Mlp) -> Tensor:
    """Mean cosine similarity between H(h_t) and eps_t over time (and batch)."""
    eps_seq = T.as_tensor(eps_seq, like=h_seq)
    if h_seq.shape[:-1] != eps_seq.shape[:-1]:
        raise ValueError(f"mutual_info_loss: misaligned {h_seq.shape} vs {eps_seq.shape}")
    projected = mapper(h_seq)
    return T.mean(T.cosine_similarity(projected, eps_seq, axis=-1))


def save_trajectory(traj: Trajectory, path, index: int = 0) -> None:
    tensors = {"codes": traj.codes.data[index]}
    tensors["eps"] = traj.eps.data[index]
    save_checkpoint(Checkpoint(tensors), path)


def load_trajectory(path) -> tuple[np.ndarray, np.ndarray]:
    ck = load_checkpoint(path)
    return ck.tensors["codes"], ck.tensors["eps"]
