"""Actor-critic multilayer perceptron with an exact analytic backward pass.

The network is deliberately self-contained numpy: a tanh trunk feeding an
independent-Bernoulli actor head (one logit per tracked previous-hop slot)
and a scalar value head. Parameters live in one flat float64 vector so the
whole gradient can be checked against central finite differences. A config
switch builds fully separate actor and critic stacks instead of a shared
trunk.

Checkpoint files: 8-byte magic, little-endian uint32 version, layout header,
then the parameters as little-endian float32 in layer order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"MCLPOL01"
CHECKPOINT_VERSION = 1


class ShapeMismatch(ValueError):
    """Observation or action width does not match the network header."""


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z: np.ndarray) -> np.ndarray:
    # log(1 + e^z), stable for large |z|
    return np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)


def masked_bernoulli_log_prob(logits: np.ndarray, actions: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Joint log-probability of 0/1 actions, summed over unmasked components.

    log p(a=1) = -softplus(-z) and log p(a=0) = -softplus(z).
    """
    elem = np.where(actions > 0.5, -softplus(-logits), -softplus(logits))
    return (elem * mask).sum(axis=-1)


def masked_bernoulli_entropy(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Summed entropy of the unmasked Bernoulli components, per sample."""
    p = sigmoid(logits)
    elem = p * softplus(-logits) + (1.0 - p) * softplus(logits)
    return (elem * mask).sum(axis=-1)


@dataclass(frozen=True)
class LayerShapes:
    """Network layout header carried alongside the flat parameter vector."""

    input_width: int
    hidden: tuple[int, ...] = (64, 64)
    action_width: int = 24
    separate: bool = False

    def __post_init__(self) -> None:
        if self.input_width < 1 or self.action_width < 1:
            raise ValueError("widths must be positive")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError("need at least one positive hidden width")

    def _trunk(self, prefix: str) -> list[tuple[str, tuple[int, ...]]]:
        segs: list[tuple[str, tuple[int, ...]]] = []
        fan_in = self.input_width
        for k, h in enumerate(self.hidden):
            segs.append((f"{prefix}W{k}", (fan_in, h)))
            segs.append((f"{prefix}b{k}", (h,)))
            fan_in = h
        return segs

    @staticmethod
    def _head(name: str, fan_in: int, width: int) -> list[tuple[str, tuple[int, ...]]]:
        return [(f"{name}_W", (fan_in, width)), (f"{name}_b", (width,))]

    def segments(self) -> list[tuple[str, tuple[int, ...]]]:
        top = self.hidden[-1]
        if self.separate:
            return (
                self._trunk("actor_")
                + self._head("actor_head", top, self.action_width)
                + self._trunk("critic_")
                + self._head("critic_head", top, 1)
            )
        return (
            self._trunk("")
            + self._head("actor_head", top, self.action_width)
            + self._head("critic_head", top, 1)
        )

    def param_count(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.segments())


class PolicyParams:
    """Flat parameter vector plus its layout header; shared by every agent."""

    def __init__(self, shapes: LayerShapes, theta: np.ndarray, version: int = 1):
        theta = np.asarray(theta, dtype=np.float64)
        expected = shapes.param_count()
        if theta.shape != (expected,):
            raise ShapeMismatch(f"need {expected} parameters, got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("parameters must be finite")
        self.shapes = shapes
        self.theta = theta
        self.version = version
        self._views: dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in shapes.segments():
            size = int(np.prod(shape))
            self._views[name] = theta[offset : offset + size].reshape(shape)
            offset += size

    def view(self, name: str) -> np.ndarray:
        return self._views[name]

    def copy_with(self, theta: np.ndarray) -> "PolicyParams":
        return PolicyParams(self.shapes, theta, self.version)

    def __reduce__(self):
        return (PolicyParams, (self.shapes, self.theta, self.version))


def zero_params(shapes: LayerShapes) -> PolicyParams:
    return PolicyParams(shapes, np.zeros(shapes.param_count()))


def init_params(shapes: LayerShapes, rng: np.random.Generator, scale: float = 1.0) -> PolicyParams:
    """Scaled-normal trunk weights, zero biases, zero heads.

    Zero heads start every forwarding probability at exactly 0.5 and the
    value estimate at 0, regardless of the trunk draw.
    """
    theta = np.zeros(shapes.param_count())
    params = PolicyParams(shapes, theta)
    for name, shape in shapes.segments():
        if name.endswith("_b") or "head" in name or len(shape) < 2:
            continue
        fan_in = shape[0]
        params.view(name)[:] = rng.standard_normal(shape) * (scale / np.sqrt(fan_in))
    return params


def unflatten_like(shapes: LayerShapes, flat: np.ndarray) -> dict[str, np.ndarray]:
    out = {}
    offset = 0
    for name, shape in shapes.segments():
        size = int(np.prod(shape))
        out[name] = flat[offset : offset + size].reshape(shape)
        offset += size
    return out


def _chain_forward(params: PolicyParams, prefix: str, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    h = x
    for k in range(len(params.shapes.hidden)):
        h = np.tanh(h @ params.view(f"{prefix}W{k}") + params.view(f"{prefix}b{k}"))
        acts.append(h)
    return acts


def _chain_backward(
    params: PolicyParams,
    prefix: str,
    acts: list[np.ndarray],
    d_top: np.ndarray,
    grads: dict[str, np.ndarray],
) -> None:
    dh = d_top
    for k in reversed(range(len(params.shapes.hidden))):
        hk = acts[k + 1]
        da = dh * (1.0 - hk * hk)
        grads[f"{prefix}W{k}"] += acts[k].T @ da
        grads[f"{prefix}b{k}"] += da.sum(axis=0)
        dh = da @ params.view(f"{prefix}W{k}").T


def forward_batch(params: PolicyParams, x: np.ndarray):
    """Batched forward pass; returns (logits, values, cache for backward)."""
    if x.ndim != 2 or x.shape[1] != params.shapes.input_width:
        raise ShapeMismatch(
            f"observation width {x.shape} does not match input {params.shapes.input_width}"
        )
    if params.shapes.separate:
        acts_a = _chain_forward(params, "actor_", x)
        acts_c = _chain_forward(params, "critic_", x)
        logits = acts_a[-1] @ params.view("actor_head_W") + params.view("actor_head_b")
        values = (acts_c[-1] @ params.view("critic_head_W") + params.view("critic_head_b"))[:, 0]
        return logits, values, (acts_a, acts_c)
    acts = _chain_forward(params, "", x)
    top = acts[-1]
    logits = top @ params.view("actor_head_W") + params.view("actor_head_b")
    values = (top @ params.view("critic_head_W") + params.view("critic_head_b"))[:, 0]
    return logits, values, (acts,)


def backward_batch(
    params: PolicyParams,
    cache: tuple,
    d_logits: np.ndarray,
    d_values: np.ndarray,
) -> np.ndarray:
    """Gradient of a scalar loss wrt every parameter, as one flat vector.

    `d_logits` and `d_values` are the loss gradients at the two heads.
    """
    grads = {name: np.zeros(shape) for name, shape in params.shapes.segments()}
    dv_col = d_values[:, None]
    if params.shapes.separate:
        acts_a, acts_c = cache
        grads["actor_head_W"] += acts_a[-1].T @ d_logits
        grads["actor_head_b"] += d_logits.sum(axis=0)
        _chain_backward(params, "actor_", acts_a, d_logits @ params.view("actor_head_W").T, grads)
        grads["critic_head_W"] += acts_c[-1].T @ dv_col
        grads["critic_head_b"] += dv_col.sum(axis=0)
        _chain_backward(params, "critic_", acts_c, dv_col @ params.view("critic_head_W").T, grads)
    else:
        (acts,) = cache
        top = acts[-1]
        grads["actor_head_W"] += top.T @ d_logits
        grads["actor_head_b"] += d_logits.sum(axis=0)
        grads["critic_head_W"] += top.T @ dv_col
        grads["critic_head_b"] += dv_col.sum(axis=0)
        d_top = d_logits @ params.view("actor_head_W").T + dv_col @ params.view("critic_head_W").T
        _chain_backward(params, "", acts, d_top, grads)
    return np.concatenate([grads[name].ravel() for name, _ in params.shapes.segments()])


def policy_forward(params: PolicyParams, obs: np.ndarray, mask: np.ndarray | None = None):
    """Single-observation forward pass: (per-slot probabilities, value).

    Masked components report probability exactly 0.5 and never contribute
    to log-probability sums.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 1 or obs.shape[0] != params.shapes.input_width:
        raise ShapeMismatch(
            f"observation width {obs.shape} does not match input {params.shapes.input_width}"
        )
    logits, values, _ = forward_batch(params, obs[None, :])
    probs = sigmoid(logits[0])
    if mask is not None:
        if mask.shape[0] != params.shapes.action_width:
            raise ShapeMismatch("mask width does not match action head")
        probs = np.where(mask, probs, 0.5)
    return probs, float(values[0])


def save_checkpoint(path, params: PolicyParams) -> None:
    shapes = params.shapes
    header = struct.pack(
        "<IIIII",
        CHECKPOINT_VERSION,
        1 if shapes.separate else 0,
        shapes.input_width,
        shapes.action_width,
        len(shapes.hidden),
    )
    hidden = struct.pack(f"<{len(shapes.hidden)}I", *shapes.hidden)
    body = params.theta.astype("<f4").tobytes()
    count = struct.pack("<Q", params.theta.shape[0])
    with open(path, "wb") as fh:
        fh.write(MAGIC + header + hidden + count + body)


def load_checkpoint(path) -> PolicyParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a policy checkpoint (bad magic)")
    off = len(MAGIC)
    version, separate, input_width, action_width, n_hidden = struct.unpack_from("<IIIII", blob, off)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off += 20
    hidden = struct.unpack_from(f"<{n_hidden}I", blob, off)
    off += 4 * n_hidden
    (count,) = struct.unpack_from("<Q", blob, off)
    off += 8
    theta = np.frombuffer(blob, dtype="<f4", count=count, offset=off).astype(np.float64)
    shapes = LayerShapes(
        input_width=input_width,
        hidden=tuple(int(h) for h in hidden),
        action_width=action_width,
        separate=bool(separate),
    )
    return PolicyParams(shapes, theta, version=version)
