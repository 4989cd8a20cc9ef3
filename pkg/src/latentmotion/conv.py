"""3-D convolution via im2col + matmul, with a 2-D wrapper."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, _make, as_tensor, reshape


def _triple(v) -> tuple[int, int, int]:
    if isinstance(v, int):
        return (v, v, v)
    v = tuple(int(x) for x in v)
    if len(v) != 3:
        raise ValueError(f"expected 3 values, got {v}")
    return v


def conv_output_extent(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def conv3d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride=1, pad=0) -> Tensor:
    """Cross-correlate ``x`` (C×T×H×W or N×C×T×H×W) with ``kernel`` (O×C×kt×kh×kw)."""
    x = as_tensor(x)
    kernel = as_tensor(kernel, like=x)
    st, sh, sw = _triple(stride)
    pt, ph, pw = _triple(pad)
    unbatched = x.ndim == 4
    if unbatched:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 5 or kernel.ndim != 5:
        raise ValueError(f"conv3d: bad ranks input {x.shape}, kernel {kernel.shape}")
    n, c, t, h, w = x.shape
    o, ck, kt, kh, kw = kernel.shape
    if ck != c:
        raise ValueError(f"conv3d: input has {c} channels, kernel expects {ck}")
    exts = [
        conv_output_extent(t, kt, st, pt),
        conv_output_extent(h, kh, sh, ph),
        conv_output_extent(w, kw, sw, pw),
    ]
    if min(exts) < 1 or t + 2 * pt < kt or h + 2 * ph < kh or w + 2 * pw < kw:
        raise ValueError(
            f"conv3d: output extent < 1 for input {x.shape[2:]}, kernel {(kt, kh, kw)}, "
            f"stride {(st, sh, sw)}, pad {(pt, ph, pw)}"
        )
    to, ho, wo = exts
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kt, kh, kw), axis=(2, 3, 4))
    win = win[:, :, : st * (to - 1) + 1 : st, : sh * (ho - 1) + 1 : sh, : sw * (wo - 1) + 1 : sw]
    # (n, to, ho, wo, c, kt, kh, kw) -> rows per output position
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 4, 1, 5, 6, 7)).reshape(n * to * ho * wo, -1)
    wmat = kernel.data.reshape(o, -1)
    out = cols @ wmat.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(n, to, ho, wo, o).transpose(0, 4, 1, 2, 3)
    out = np.ascontiguousarray(out)

    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def back(g):
        g2 = g.transpose(0, 2, 3, 4, 1).reshape(-1, o)
        gk = (g2.T @ cols).reshape(kernel.shape) if kernel.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(n, to, ho, wo, c, kt, kh, kw)
            # one contiguous copy so each kernel offset scatters a dense block
            dcols = np.ascontiguousarray(dcols.transpose(5, 6, 7, 0, 4, 1, 2, 3))
            dxp = np.zeros_like(xp)
            for i in range(kt):
                for j in range(kh):
                    for k in range(kw):
                        dxp[
                            :, :,
                            i : i + st * (to - 1) + 1 : st,
                            j : j + sh * (ho - 1) + 1 : sh,
                            k : k + sw * (wo - 1) + 1 : sw,
                        ] += dcols[i, j, k]
            gx = dxp[:, :, pt : pt + t, ph : ph + h, pw : pw + w]
        grads = (gx, gk)
        if bias is not None:
            grads = grads + (g.sum(axis=(0, 2, 3, 4)),)
        return grads

    result = _make(out, parents, back, "conv3d")
    if unbatched:
        result = reshape(result, result.shape[1:])
    return result


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride=1, pad=0) -> Tensor:
    """2-D convolution (N×C×H×W) routed through :func:`conv3d` with a unit time axis."""
    x = as_tensor(x)
    kernel = as_tensor(kernel, like=x)
    sh, sw = (stride, stride) if isinstance(stride, int) else tuple(stride)
    ph, pw = (pad, pad) if isinstance(pad, int) else tuple(pad)
    n, c, h, w = x.shape
    o, _, kh, kw = kernel.shape
    x5 = reshape(x, (n, c, 1, h, w))
    k5 = reshape(kernel, (o, kernel.shape[1], 1, kh, kw))
    y = conv3d(x5, k5, bias, stride=(1, sh, sw), pad=(0, ph, pw))
    return reshape(y, (n, o) + y.shape[3:])

