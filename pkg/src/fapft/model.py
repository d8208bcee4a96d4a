"""A small pre-norm transformer classifier with hand-written backprop.

Per block: LayerNorm + multi-head self-attention as one residual unit, then
LayerNorm + a two-layer GELU feed-forward as the second residual unit.
Tokens are given directly as feature vectors (no patch embedding); a learned
positional embedding is added, the final LayerNorm output is mean-pooled over
the sequence, and a linear head produces logits.

All math runs in float64 numpy with a fixed reduction order, so results are
bit-deterministic. Parameters live in a plain ``name -> ndarray`` dict whose
names match the ``toy_vit`` descriptor schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidValue

__all__ = ["ModelDims", "init_params", "reinit_head", "loss_only", "loss_and_grads", "predict"]

_LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


@dataclass(frozen=True)
class ModelDims:
    depth: int
    model_dim: int
    heads: int
    ffn_dim: int
    seq_len: int
    num_classes: int

    def __post_init__(self):
        for name in ("model_dim", "heads", "ffn_dim", "seq_len", "num_classes"):
            if getattr(self, name) <= 0:
                raise InvalidValue(f"{name} must be positive")
        if self.depth < 0:
            raise InvalidValue("depth must be >= 0")
        if self.model_dim % self.heads != 0:
            raise InvalidValue("model_dim must be divisible by heads")

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "model_dim": self.model_dim,
            "heads": self.heads,
            "ffn_dim": self.ffn_dim,
            "seq_len": self.seq_len,
            "num_classes": self.num_classes,
        }


def _trunc_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """Normal(0, std) truncated at two standard deviations, by resampling."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out


def _block_names(i: int) -> list[str]:
    p = f"blocks.{i}"
    return [
        f"{p}.norm1.weight",
        f"{p}.norm1.bias",
        f"{p}.attn.qkv.weight",
        f"{p}.attn.qkv.bias",
        f"{p}.attn.proj.weight",
        f"{p}.attn.proj.bias",
        f"{p}.norm2.weight",
        f"{p}.norm2.bias",
        f"{p}.mlp.fc1.weight",
        f"{p}.mlp.fc1.bias",
        f"{p}.mlp.fc2.weight",
        f"{p}.mlp.fc2.bias",
    ]


def param_shapes(dims: ModelDims) -> dict[str, tuple[int, ...]]:
    d, f = dims.model_dim, dims.ffn_dim
    shapes: dict[str, tuple[int, ...]] = {"pos_embed": (dims.seq_len, d)}
    for i in range(dims.depth):
        p = f"blocks.{i}"
        shapes.update(
            {
                f"{p}.norm1.weight": (d,),
                f"{p}.norm1.bias": (d,),
                f"{p}.attn.qkv.weight": (3 * d, d),
                f"{p}.attn.qkv.bias": (3 * d,),
                f"{p}.attn.proj.weight": (d, d),
                f"{p}.attn.proj.bias": (d,),
                f"{p}.norm2.weight": (d,),
                f"{p}.norm2.bias": (d,),
                f"{p}.mlp.fc1.weight": (f, d),
                f"{p}.mlp.fc1.bias": (f,),
                f"{p}.mlp.fc2.weight": (d, f),
                f"{p}.mlp.fc2.bias": (d,),
            }
        )
    shapes["norm.weight"] = (d,)
    shapes["norm.bias"] = (d,)
    shapes["head.weight"] = (dims.num_classes, d)
    shapes["head.bias"] = (dims.num_classes,)
    return shapes


def init_params(dims: ModelDims, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Fresh float32 parameters drawn in a fixed name order."""
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(dims).items():
        if name.endswith(".bias"):
            arr = np.zeros(shape)
        elif name in ("norm.weight",) or name.endswith(("norm1.weight", "norm2.weight")):
            arr = np.ones(shape)
        else:
            arr = _trunc_normal(rng, shape, std=0.02)
        params[name] = arr.astype(np.float32)
    return params


def reinit_head(
    params: dict[str, np.ndarray], dims: ModelDims, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    out = dict(params)
    out["head.weight"] = _trunc_normal(
        rng, (dims.num_classes, dims.model_dim), std=0.02
    ).astype(np.float32)
    out["head.bias"] = np.zeros(dims.num_classes, dtype=np.float32)
    return out


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


def _layernorm_fwd(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv
    return xhat * gain + bias, (xhat, inv, gain)


def _layernorm_bwd(dout, cache):
    xhat, inv, gain = cache
    dgain = (dout * xhat).sum(axis=tuple(range(dout.ndim - 1)))
    dbias = dout.sum(axis=tuple(range(dout.ndim - 1)))
    dxhat = dout * gain
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgain, dbias


def _gelu_fwd(x):
    u = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(u)
    return 0.5 * x * (1.0 + t), (x, t)


def _gelu_bwd(dout, cache):
    x, t = cache
    du_dx = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return dout * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du_dx)


def _softmax(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _split_heads(x, heads):
    b, t, d = x.shape
    return x.reshape(b, t, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def _forward(params, x, dims: ModelDims, keep_cache: bool):
    h = x + params["pos_embed"]
    caches = []
    scale = 1.0 / math.sqrt(dims.model_dim // dims.heads)
    for i in range(dims.depth):
        p = f"blocks.{i}"
        n1, ln1 = _layernorm_fwd(h, params[f"{p}.norm1.weight"], params[f"{p}.norm1.bias"])
        qkv = n1 @ params[f"{p}.attn.qkv.weight"].T + params[f"{p}.attn.qkv.bias"]
        q, k, v = (
            _split_heads(part, dims.heads)
            for part in np.split(qkv, 3, axis=-1)
        )
        scores = np.einsum("bhtd,bhsd->bhts", q, k) * scale
        attn = _softmax(scores)
        mixed = np.einsum("bhts,bhsd->bhtd", attn, v)
        o = _merge_heads(mixed)
        att_out = o @ params[f"{p}.attn.proj.weight"].T + params[f"{p}.attn.proj.bias"]
        h_mid = h + att_out

        n2, ln2 = _layernorm_fwd(
            h_mid, params[f"{p}.norm2.weight"], params[f"{p}.norm2.bias"]
        )
        f1 = n2 @ params[f"{p}.mlp.fc1.weight"].T + params[f"{p}.mlp.fc1.bias"]
        g, gelu_cache = _gelu_fwd(f1)
        f2 = g @ params[f"{p}.mlp.fc2.weight"].T + params[f"{p}.mlp.fc2.bias"]
        h = h_mid + f2
        if keep_cache:
            caches.append(
                {
                    "ln1": ln1,
                    "n1": n1,
                    "q": q,
                    "k": k,
                    "v": v,
                    "attn": attn,
                    "o": o,
                    "ln2": ln2,
                    "n2": n2,
                    "gelu": gelu_cache,
                    "g": g,
                }
            )
    z, lnf = _layernorm_fwd(h, params["norm.weight"], params["norm.bias"])
    pooled = z.mean(axis=1)
    logits = pooled @ params["head.weight"].T + params["head.bias"]
    return logits, caches, lnf, pooled


def _prepare(params, x):
    p64 = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
    x64 = np.asarray(x, dtype=np.float64)
    return p64, x64


def predict(params, x, dims: ModelDims) -> np.ndarray:
    p64, x64 = _prepare(params, x)
    logits, _, _, _ = _forward(p64, x64, dims, keep_cache=False)
    return np.argmax(logits, axis=-1)


def _mean_cross_entropy(logits, y) -> float:
    probs = _softmax(logits)
    n = logits.shape[0]
    # a vanishing true-class probability legitimately yields an infinite
    # loss; the trainer reports it as divergence rather than warning here
    with np.errstate(divide="ignore"):
        return float(-np.log(probs[np.arange(n), y]).mean())


def loss_only(params, x, y, dims: ModelDims) -> float:
    p64, x64 = _prepare(params, x)
    logits, _, _, _ = _forward(p64, x64, dims, keep_cache=False)
    return _mean_cross_entropy(logits, y)


def loss_and_grads(params, x, y, dims: ModelDims):
    """Mean softmax cross-entropy and its gradient for every parameter."""
    p64, x64 = _prepare(params, x)
    y = np.asarray(y)
    logits, caches, lnf, pooled = _forward(p64, x64, dims, keep_cache=True)
    b, t = x64.shape[0], dims.seq_len
    scale = 1.0 / math.sqrt(dims.model_dim // dims.heads)

    probs = _softmax(logits)
    n = logits.shape[0]
    loss = _mean_cross_entropy(logits, y)

    grads: dict[str, np.ndarray] = {}
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    grads["head.weight"] = dlogits.T @ pooled
    grads["head.bias"] = dlogits.sum(axis=0)
    dpooled = dlogits @ p64["head.weight"]
    dz = np.repeat(dpooled[:, None, :], t, axis=1) / t
    dh, grads["norm.weight"], grads["norm.bias"] = _layernorm_bwd(dz, lnf)

    for i in reversed(range(dims.depth)):
        p = f"blocks.{i}"
        c = caches[i]
        # feed-forward residual unit
        df2 = dh
        grads[f"{p}.mlp.fc2.weight"] = np.einsum("btd,btf->df", df2, c["g"])
        grads[f"{p}.mlp.fc2.bias"] = df2.sum(axis=(0, 1))
        dg = df2 @ p64[f"{p}.mlp.fc2.weight"]
        df1 = _gelu_bwd(dg, c["gelu"])
        grads[f"{p}.mlp.fc1.weight"] = np.einsum("btf,btd->fd", df1, c["n2"])
        grads[f"{p}.mlp.fc1.bias"] = df1.sum(axis=(0, 1))
        dn2 = df1 @ p64[f"{p}.mlp.fc1.weight"]
        dmid_from_ln, grads[f"{p}.norm2.weight"], grads[f"{p}.norm2.bias"] = (
            _layernorm_bwd(dn2, c["ln2"])
        )
        dh_mid = dh + dmid_from_ln

        # attention residual unit
        datt = dh_mid
        grads[f"{p}.attn.proj.weight"] = np.einsum("btd,bte->de", datt, c["o"])
        grads[f"{p}.attn.proj.bias"] = datt.sum(axis=(0, 1))
        do = _split_heads(datt @ p64[f"{p}.attn.proj.weight"], dims.heads)
        dattn = np.einsum("bhtd,bhsd->bhts", do, c["v"])
        dv = np.einsum("bhts,bhtd->bhsd", c["attn"], do)
        a = c["attn"]
        dscores = a * (dattn - (dattn * a).sum(axis=-1, keepdims=True))
        dq = np.einsum("bhts,bhsd->bhtd", dscores, c["k"]) * scale
        dk = np.einsum("bhts,bhtd->bhsd", dscores, c["q"]) * scale
        dqkv = np.concatenate(
            [_merge_heads(dq), _merge_heads(dk), _merge_heads(dv)], axis=-1
        )
        grads[f"{p}.attn.qkv.weight"] = np.einsum("btq,btd->qd", dqkv, c["n1"])
        grads[f"{p}.attn.qkv.bias"] = dqkv.sum(axis=(0, 1))
        dn1 = dqkv @ p64[f"{p}.attn.qkv.weight"]
        dh_from_ln, grads[f"{p}.norm1.weight"], grads[f"{p}.norm1.bias"] = (
            _layernorm_bwd(dn1, c["ln1"])
        )
        dh = dh_mid + dh_from_ln

    grads["pos_embed"] = dh.sum(axis=0)
    return loss, grads
