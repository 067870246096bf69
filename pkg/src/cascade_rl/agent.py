"""Value-function approximators and TD learners, numpy only.

Two architectures share one interface:

* shallow - the candidate action value is appended to the state and a
  10-unit rectifier hidden layer scores the pair, so Q(s, a) is one scalar
  per candidate. Used with on-policy SARSA.
* deep - the state is zero-padded to a square image and pushed through two
  conv/pool blocks into a dense head with one output per candidate action.
  Used with off-policy Q-learning. A fixed sum readout over the head gives
  the scalar tracked for loss bookkeeping; learning targets always address
  the per-action head.

Updates are semi-gradient: the bootstrapped target is never differentiated.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ALPHAS",
    "Transition",
    "ValueNet",
    "action_to_alpha",
    "pad_to_square",
    "init_value_net",
    "forward",
    "backward",
    "scalar_readout",
    "epsilon_greedy",
    "sarsa_update",
    "q_update",
    "save_checkpoint",
    "load_checkpoint",
    "REWARD_SCALE",
]

# candidate flow-limit scalings; index 4 is the neutral action
ALPHAS = (0.8, 0.85, 0.9, 0.95, 1.0, 1.05, 1.1, 1.15, 1.20, 1.25)

REWARD_SCALE = 1000.0  # rewards divided by this before entering TD targets

_LAYERS = {
    "shallow": ("w1", "b1", "w2", "b2"),
    "deep": ("k1", "c1", "k2", "c2", "w", "b"),
}
_CHECKPOINT_VERSION = 1


def action_to_alpha(index: int) -> float:
    if not 0 <= index < len(ALPHAS):
        raise IndexError(f"action index {index} outside 0..{len(ALPHAS) - 1}")
    return ALPHAS[index]


def pad_to_square(state: np.ndarray) -> np.ndarray:
    """Zero-pad a flat state to the smallest square, row-major fill."""
    state = np.asarray(state, dtype=float).ravel()
    side = math.isqrt(state.size)
    if side * side < state.size:
        side += 1
    out = np.zeros(side * side)
    out[: state.size] = state
    return out.reshape(side, side)


@dataclass
class Transition:
    state: np.ndarray
    action_index: int
    reward: float  # already scaled by 1/REWARD_SCALE
    next_state: np.ndarray
    done: bool
    next_action_index: int | None = None  # SARSA only


@dataclass
class ValueNet:
    kind: str  # shallow | deep
    input_dim: int  # raw state dimension
    params: dict[str, np.ndarray]
    actions: tuple[float, ...] = ALPHAS
    padded_side: int = 0  # deep only

    @property
    def n_actions(self) -> int:
        return len(self.actions)


def init_value_net(
    kind: str,
    input_dim: int,
    rng: np.random.Generator,
    actions: tuple[float, ...] = ALPHAS,
    hidden: int = 10,
) -> ValueNet:
    """Seeded scaled-uniform (Glorot) initialization."""

    def glorot(shape, fan_in, fan_out):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=shape)

    if kind == "shallow":
        d = input_dim + 1  # state plus the candidate action value
        params = {
            "w1": glorot((hidden, d), d, hidden),
            "b1": np.zeros(hidden),
            "w2": glorot((1, hidden), hidden, 1),
            "b2": np.zeros(1),
        }
        return ValueNet("shallow", input_dim, params, tuple(actions))
    if kind == "deep":
        side = math.isqrt(input_dim)
        if side * side < input_dim:
            side += 1
        p2 = ((side - 2) // 2 - 2) // 2
        if p2 < 1:
            raise ValueError(
                f"state dim {input_dim} too small for the conv stack "
                f"(padded side {side}, need >= 10)"
            )
        flat = 16 * p2 * p2
        n_act = len(actions)
        params = {
            "k1": glorot((8, 1, 3, 3), 9, 72),
            "c1": np.zeros(8),
            "k2": glorot((16, 8, 3, 3), 72, 144),
            "c2": np.zeros(16),
            "w": glorot((n_act, flat), flat, n_act),
            "b": np.zeros(n_act),
        }
        return ValueNet("deep", input_dim, params, tuple(actions), side)
    raise ValueError(f"unknown net kind {kind!r}")


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


def _conv_valid(x: np.ndarray, k: np.ndarray, b: np.ndarray):
    """3x3 valid correlation; returns output and the im2col matrix."""
    c, h, w = x.shape
    f = k.shape[0]
    ho, wo = h - 2, w - 2
    win = np.lib.stride_tricks.sliding_window_view(x, (3, 3), axis=(1, 2))
    cols = win.transpose(0, 3, 4, 1, 2).reshape(c * 9, ho * wo)
    out = (k.reshape(f, c * 9) @ cols + b[:, None]).reshape(f, ho, wo)
    return out, cols


def _conv_backward(dout, cols, x_shape, k):
    c, h, w = x_shape
    f = k.shape[0]
    ho, wo = h - 2, w - 2
    dflat = dout.reshape(f, ho * wo)
    dk = (dflat @ cols.T).reshape(k.shape)
    db = dflat.sum(axis=1)
    dcols = (k.reshape(f, c * 9).T @ dflat).reshape(c, 3, 3, ho, wo)
    dx = np.zeros(x_shape)
    for di in range(3):
        for dj in range(3):
            dx[:, di : di + ho, dj : dj + wo] += dcols[:, di, dj]
    return dk, db, dx


def _pool2(x: np.ndarray):
    """2x2 max pool, stride 2, floor; ties route to the first element."""
    c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    v = x[:, : h2 * 2, : w2 * 2].reshape(c, h2, 2, w2, 2)
    v = v.transpose(0, 1, 3, 2, 4).reshape(c, h2, w2, 4)
    idx = v.argmax(axis=3)
    out = np.take_along_axis(v, idx[..., None], axis=3)[..., 0]
    return out, idx


def _pool2_backward(dout, idx, x_shape):
    c, h, w = x_shape
    h2, w2 = dout.shape[1], dout.shape[2]
    dv = np.zeros((c, h2, w2, 4))
    np.put_along_axis(dv, idx[..., None], dout[..., None], axis=3)
    dv = dv.reshape(c, h2, w2, 2, 2).transpose(0, 1, 3, 2, 4)
    dx = np.zeros(x_shape)
    dx[:, : h2 * 2, : w2 * 2] = dv.reshape(c, h2 * 2, w2 * 2)
    return dx


def _shallow_forward(net: ValueNet, state, action_index, want_cache=False):
    p = net.params
    x = np.concatenate([np.asarray(state, float).ravel(),
                        [net.actions[action_index]]])
    z1 = p["w1"] @ x + p["b1"]
    h = np.maximum(z1, 0.0)
    q = float(p["w2"] @ h + p["b2"])
    if want_cache:
        return q, {"x": x, "z1": z1, "h": h}
    return q


def _deep_forward(net: ValueNet, state, want_cache=False):
    p = net.params
    img = pad_to_square(np.asarray(state, float))[None, :, :]
    z1, cols1 = _conv_valid(img, p["k1"], p["c1"])
    a1 = np.maximum(z1, 0.0)
    p1, idx1 = _pool2(a1)
    z2, cols2 = _conv_valid(p1, p["k2"], p["c2"])
    a2 = np.maximum(z2, 0.0)
    p2, idx2 = _pool2(a2)
    flat = p2.ravel()
    q = p["w"] @ flat + p["b"]
    if want_cache:
        return q, {
            "img": img, "z1": z1, "cols1": cols1, "p1": p1, "idx1": idx1,
            "z2": z2, "cols2": cols2, "p2": p2, "idx2": idx2, "flat": flat,
        }
    return q


def forward(
    net: ValueNet, state: np.ndarray, action_index: int | None = None
):
    """Q-values. With an action index: that action's scalar. Without: the
    vector over the whole candidate set, in action order."""
    state = np.asarray(state, dtype=float).ravel()
    if state.size != net.input_dim:
        raise ValueError(f"state dim {state.size} != net input {net.input_dim}")
    if net.kind == "shallow":
        if action_index is not None:
            return _shallow_forward(net, state, action_index)
        return np.array(
            [_shallow_forward(net, state, a) for a in range(net.n_actions)]
        )
    q = _deep_forward(net, state)
    if action_index is not None:
        return float(q[action_index])
    return q


def scalar_readout(q: np.ndarray) -> float:
    """Fixed sum-pooling of the action head down to one bookkeeping scalar."""
    return float(np.sum(q))


def backward(
    net: ValueNet, state: np.ndarray, action_index: int, td_error: float
) -> dict[str, np.ndarray]:
    """Gradient of td_error * Q(state, action) w.r.t. every parameter."""
    state = np.asarray(state, dtype=float).ravel()
    p = net.params
    if net.kind == "shallow":
        _, cache = _shallow_forward(net, state, action_index, want_cache=True)
        mask = (cache["z1"] > 0).astype(float)
        dh = (p["w2"][0] * td_error) * mask
        return {
            "w1": np.outer(dh, cache["x"]),
            "b1": dh,
            "w2": (td_error * cache["h"])[None, :],
            "b2": np.array([td_error]),
        }

    q, cache = _deep_forward(net, state, want_cache=True)
    dq = np.zeros_like(q)
    dq[action_index] = td_error
    dw = np.outer(dq, cache["flat"])
    db = dq.copy()
    dflat = p["w"].T @ dq
    dp2 = dflat.reshape(cache["p2"].shape)
    da2 = _pool2_backward(dp2, cache["idx2"], cache["z2"].shape)
    dz2 = da2 * (cache["z2"] > 0)
    dk2, dc2, dp1 = _conv_backward(dz2, cache["cols2"], cache["p1"].shape, p["k2"])
    da1 = _pool2_backward(dp1, cache["idx1"], cache["z1"].shape)
    dz1 = da1 * (cache["z1"] > 0)
    dk1, dc1, _ = _conv_backward(dz1, cache["cols1"], cache["img"].shape, p["k1"])
    return {"k1": dk1, "c1": dc1, "k2": dk2, "c2": dc2, "w": dw, "b": db}


# ---------------------------------------------------------------------------
# policy and TD updates
# ---------------------------------------------------------------------------


def epsilon_greedy(q: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    """Argmax with probability 1-eps (lowest index on ties), else uniform."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps {eps} outside [0, 1]")
    if rng.random() < eps:
        return int(rng.integers(len(q)))
    return int(np.argmax(q))


def _apply(net: ValueNet, grads: dict[str, np.ndarray], lr: float):
    for name, g in grads.items():
        net.params[name] += lr * g
    return net


def sarsa_update(net: ValueNet, t: Transition, lr: float, gamma: float) -> ValueNet:
    """On-policy TD(0) step using the action actually taken next."""
    q_sa = forward(net, t.state, t.action_index)
    if t.done:
        target = t.reward
    else:
        if t.next_action_index is None:
            raise ValueError("SARSA transition needs next_action_index")
        target = t.reward + gamma * forward(net, t.next_state, t.next_action_index)
    td = target - q_sa
    return _apply(net, backward(net, t.state, t.action_index, td), lr)


def q_update(net: ValueNet, t: Transition, lr: float, gamma: float) -> ValueNet:
    """Off-policy TD(0) step against the greedy next-state value."""
    q_sa = forward(net, t.state, t.action_index)
    if t.done:
        target = t.reward
    else:
        target = t.reward + gamma * float(np.max(forward(net, t.next_state)))
    td = target - q_sa
    return _apply(net, backward(net, t.state, t.action_index, td), lr)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(net: ValueNet) -> str:
    """Versioned JSON container; load(save(net)) is bit-exact."""
    layers = []
    for name in _LAYERS[net.kind]:
        arr = np.ascontiguousarray(net.params[name], dtype=np.float64)
        layers.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "data": base64.b64encode(arr.tobytes()).decode("ascii"),
            }
        )
    return json.dumps(
        {
            "version": _CHECKPOINT_VERSION,
            "kind": net.kind,
            "input_dim": net.input_dim,
            "padded_side": net.padded_side,
            "actions": list(net.actions),
            "layers": layers,
        }
    )


def load_checkpoint(text: str) -> ValueNet:
    doc = json.loads(text)
    if doc.get("version") != _CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    kind = doc["kind"]
    if kind not in _LAYERS:
        raise ValueError(f"unknown checkpoint kind {kind!r}")
    params = {}
    names = [layer["name"] for layer in doc["layers"]]
    if tuple(names) != _LAYERS[kind]:
        raise ValueError(f"unexpected layer order {names}")
    for layer in doc["layers"]:
        raw = base64.b64decode(layer["data"])
        params[layer["name"]] = np.frombuffer(raw, dtype=np.float64).reshape(
            layer["shape"]
        ).copy()
    return ValueNet(
        kind=kind,
        input_dim=int(doc["input_dim"]),
        params=params,
        actions=tuple(doc["actions"]),
        padded_side=int(doc["padded_side"]),
    )
