"""Small MLP that predicts a 6-dim velocity from (state, time, condition).

Architecture: three input branches are embedded separately and fused by
concatenation, then a shared tanh trunk feeds two heads that output the
rotational (first 3) and translational (last 3) velocity components.

- time: fixed sinusoidal features, no learned parameters before the fusion
  linear map (the embedding itself is the feature vector)
- state: one linear layer
- condition: two-layer tanh MLP, standing in for a frozen image encoder
- trunk and head hidden layers: tanh; final head layers: linear

All parameters live in plain float64 numpy arrays and gradients are
computed by hand (reverse mode).  Everything is deterministic given the
initializing Generator.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NetConfig:
    """Widths of every block.  Defaults are the desk-scale setup."""

    cond_dim: int = 16
    time_embed_dim: int = 16
    state_embed_dim: int = 16
    cond_hidden_dim: int = 16
    cond_embed_dim: int = 16
    trunk_widths: tuple = (64, 64)
    head_widths: tuple = (32, 32)

    STATE_DIM = 6
    OUT_DIM = 3  # per head

    def __post_init__(self):
        object.__setattr__(self, "trunk_widths", tuple(int(w) for w in self.trunk_widths))
        object.__setattr__(self, "head_widths", tuple(int(w) for w in self.head_widths))
        for name in ("cond_dim", "time_embed_dim", "state_embed_dim",
                     "cond_hidden_dim", "cond_embed_dim"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.time_embed_dim % 2 != 0:
            raise ValueError("time_embed_dim must be even (sin/cos pairs)")
        if len(self.trunk_widths) < 1 or any(w < 1 for w in self.trunk_widths):
            raise ValueError("trunk_widths must be a nonempty tuple of positive ints")
        if any(w < 1 for w in self.head_widths):
            raise ValueError("head_widths must contain positive ints")

    @property
    def fused_dim(self) -> int:
        return self.time_embed_dim + self.state_embed_dim + self.cond_embed_dim


@dataclass(frozen=True, eq=False)
class ConditionVector:
    """Guidance feature vector the velocity field is conditioned on."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64).reshape(-1)
        if arr.size < 1:
            raise ValueError("condition vector must be nonempty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("condition vector contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass
class VectorFieldNet:
    """Parameter container.  Layers are (weight, bias) pairs, weight (out, in)."""

    config: NetConfig
    state_embed: list  # [W, b]
    cond_embed: list   # [[W, b], [W, b]]
    layers: list       # trunk: [[W, b], ...]
    head_rot: list     # [[W, b], ..., final linear]
    head_trans: list


@dataclass
class Gradients:
    """Same tree shape as VectorFieldNet's parameters."""

    state_embed: list
    cond_embed: list
    layers: list
    head_rot: list
    head_trans: list


def _named_arrays(tree):
    """Flat iteration over (name, array) in a fixed traversal order.

    Works on both VectorFieldNet and Gradients; the order defines the
    checkpoint layout and the optimizer's parameter ordering.
    """
    yield "state_embed.w", tree.state_embed[0]
    yield "state_embed.b", tree.state_embed[1]
    for i, (w, b) in enumerate(tree.cond_embed):
        yield f"cond_embed.{i}.w", w
        yield f"cond_embed.{i}.b", b
    for i, (w, b) in enumerate(tree.layers):
        yield f"trunk.{i}.w", w
        yield f"trunk.{i}.b", b
    for name, head in (("head_rot", tree.head_rot), ("head_trans", tree.head_trans)):
        for i, (w, b) in enumerate(head):
            yield f"{name}.{i}.w", w
            yield f"{name}.{i}.b", b


def parameter_count(config: NetConfig) -> int:
    net = _zero_net(config)
    return sum(arr.size for _, arr in _named_arrays(net))


def _layer_shapes(config: NetConfig):
    """(name, out_dim, in_dim) for every linear layer, traversal order."""
    c = config
    shapes = [("state_embed", c.state_embed_dim, c.STATE_DIM)]
    shapes.append(("cond_embed.0", c.cond_hidden_dim, c.cond_dim))
    shapes.append(("cond_embed.1", c.cond_embed_dim, c.cond_hidden_dim))
    prev = c.fused_dim
    for i, w in enumerate(c.trunk_widths):
        shapes.append((f"trunk.{i}", w, prev))
        prev = w
    for head in ("head_rot", "head_trans"):
        h_prev = prev
        for i, w in enumerate(c.head_widths):
            shapes.append((f"{head}.{i}", w, h_prev))
            h_prev = w
        shapes.append((f"{head}.{len(c.head_widths)}", c.OUT_DIM, h_prev))
    return shapes


def _build_tree(config: NetConfig, make):
    """Assemble the parameter tree, calling make(name, out, in) per layer."""
    state_embed = None
    cond_embed = []
    layers = []
    head_rot = []
    head_trans = []
    for name, out_dim, in_dim in _layer_shapes(config):
        pair = make(name, out_dim, in_dim)
        if name == "state_embed":
            state_embed = pair
        elif name.startswith("cond_embed"):
            cond_embed.append(pair)
        elif name.startswith("trunk"):
            layers.append(pair)
        elif name.startswith("head_rot"):
            head_rot.append(pair)
        else:
            head_trans.append(pair)
    return VectorFieldNet(config, state_embed, cond_embed, layers, head_rot, head_trans)


def _zero_net(config: NetConfig) -> VectorFieldNet:
    return _build_tree(config, lambda name, o, i: [np.zeros((o, i)), np.zeros(o)])


def zero_gradients(net: VectorFieldNet) -> Gradients:
    z = _zero_net(net.config)
    return Gradients(z.state_embed, z.cond_embed, z.layers, z.head_rot, z.head_trans)


def init_params(rng: np.random.Generator, config: NetConfig = None) -> VectorFieldNet:
    """He-style uniform fan-in init; final head layers start at exact zero.

    Weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases zero.  Zeroing the
    last layer of both heads makes the initial velocity field identically
    zero, so untrained sampling returns the reference draw unchanged.
    """
    config = config if config is not None else NetConfig()
    final = {f"head_rot.{len(config.head_widths)}", f"head_trans.{len(config.head_widths)}"}

    def make(name, out_dim, in_dim):
        if name in final:
            return [np.zeros((out_dim, in_dim)), np.zeros(out_dim)]
        bound = math.sqrt(6.0 / in_dim)
        return [rng.uniform(-bound, bound, size=(out_dim, in_dim)), np.zeros(out_dim)]

    return _build_tree(config, make)


def time_embedding(tau: float, dim: int = 16) -> np.ndarray:
    """Sinusoidal features [sin(2^j pi tau), cos(2^j pi tau)], j = 0..dim/2-1."""
    if dim % 2 != 0 or dim < 2:
        raise ValueError("time embedding dim must be a positive even number")
    if not (0.0 <= tau <= 1.0) or not math.isfinite(tau):
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    return _time_features(np.array([float(tau)]), dim)[0]


def _time_features(taus: np.ndarray, dim: int) -> np.ndarray:
    """(B,) times -> (B, dim) sinusoid matrix; no parameters involved."""
    freqs = math.pi * (2.0 ** np.arange(dim // 2))
    angles = taus[:, None] * freqs[None, :]
    out = np.empty((taus.size, dim))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


def _check_inputs(net: VectorFieldNet, state_vec: np.ndarray, tau: float,
                  cond: ConditionVector) -> None:
    if cond.dim != net.config.cond_dim:
        raise ValueError(
            f"condition dim {cond.dim} does not match network cond_dim "
            f"{net.config.cond_dim}"
        )
    if not (0.0 <= tau <= 1.0) or not math.isfinite(tau):
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if state_vec.shape[-1] != net.config.STATE_DIM:
        raise ValueError(f"state must have {net.config.STATE_DIM} components")


def forward_batch(net: VectorFieldNet, states: np.ndarray, taus: np.ndarray,
                  conds: np.ndarray, keep_cache: bool = False):
    """Batched field evaluation: (B,6), (B,), (B,k) -> (B,6) velocities.

    With keep_cache=True also returns the intermediate activations needed
    by backward_batch.
    """
    cfg = net.config
    if conds.shape[1] != cfg.cond_dim:
        raise ValueError(
            f"condition dim {conds.shape[1]} does not match network cond_dim "
            f"{cfg.cond_dim}"
        )
    zt = _time_features(taus, cfg.time_embed_dim)
    ws, bs = net.state_embed
    zs = states @ ws.T + bs
    (w1, b1), (w2, b2) = net.cond_embed
    c_hidden = np.tanh(conds @ w1.T + b1)
    zc = c_hidden @ w2.T + b2
    fused = np.concatenate([zt, zs, zc], axis=1)

    trunk_acts = [fused]
    h = fused
    for w, b in net.layers:
        h = np.tanh(h @ w.T + b)
        trunk_acts.append(h)

    def run_head(head_layers, h_in):
        acts = [h_in]
        for w, b in head_layers[:-1]:
            acts.append(np.tanh(acts[-1] @ w.T + b))
        w, b = head_layers[-1]
        return acts[-1] @ w.T + b, acts

    rot, rot_acts = run_head(net.head_rot, h)
    trans, trans_acts = run_head(net.head_trans, h)
    out = np.concatenate([rot, trans], axis=1)
    if not keep_cache:
        return out
    cache = (states, conds, c_hidden, trunk_acts, rot_acts, trans_acts)
    return out, cache


def backward_batch(net: VectorFieldNet, cache, upstream: np.ndarray) -> Gradients:
    """Exact reverse-mode gradients of sum_b <forward_b, upstream_b>.

    cache comes from forward_batch(..., keep_cache=True); upstream is (B, 6).
    """
    states, conds, c_hidden, trunk_acts, rot_acts, trans_acts = cache
    cfg = net.config

    def head_backward(head_layers, acts, d_out):
        grads = []
        w_last, _ = head_layers[-1]
        grads.append([d_out.T @ acts[-1], d_out.sum(axis=0)])
        d = d_out @ w_last
        for idx in range(len(head_layers) - 2, -1, -1):
            w, _ = head_layers[idx]
            d_pre = d * (1.0 - acts[idx + 1] ** 2)
            grads.append([d_pre.T @ acts[idx], d_pre.sum(axis=0)])
            d = d_pre @ w
        return list(reversed(grads)), d

    g_rot, d_rot = head_backward(net.head_rot, rot_acts, upstream[:, :3])
    g_trans, d_trans = head_backward(net.head_trans, trans_acts, upstream[:, 3:])

    d = d_rot + d_trans
    g_trunk = []
    for idx in range(len(net.layers) - 1, -1, -1):
        w, _ = net.layers[idx]
        d_pre = d * (1.0 - trunk_acts[idx + 1] ** 2)
        g_trunk.append([d_pre.T @ trunk_acts[idx], d_pre.sum(axis=0)])
        d = d_pre @ w
    g_trunk = list(reversed(g_trunk))

    # Split the fused-input gradient back into the three branches.
    t_dim, s_dim = cfg.time_embed_dim, cfg.state_embed_dim
    d_state = d[:, t_dim:t_dim + s_dim]
    d_cond = d[:, t_dim + s_dim:]
    g_state = [d_state.T @ states, d_state.sum(axis=0)]

    w2 = net.cond_embed[1][0]
    g_c2 = [d_cond.T @ c_hidden, d_cond.sum(axis=0)]
    d_hidden_pre = (d_cond @ w2) * (1.0 - c_hidden ** 2)
    g_c1 = [d_hidden_pre.T @ conds, d_hidden_pre.sum(axis=0)]

    return Gradients(g_state, [g_c1, g_c2], g_trunk, g_rot, g_trans)


def forward(net: VectorFieldNet, state, tau: float, cond: ConditionVector) -> np.ndarray:
    """Single-sample field evaluation; state is a MotionState or 6-vector."""
    state_vec = state.as_vector() if hasattr(state, "as_vector") else np.asarray(state, float)
    _check_inputs(net, state_vec, tau, cond)
    out = forward_batch(net, state_vec[None, :], np.array([float(tau)]),
                        cond.values[None, :])
    return out[0]


def backward(net: VectorFieldNet, state, tau: float, cond: ConditionVector,
             upstream) -> Gradients:
    """Gradient of <forward(state, tau, cond), upstream> w.r.t. all parameters.

    Recomputes the forward pass internally; upstream is a 6-vector.
    """
    state_vec = state.as_vector() if hasattr(state, "as_vector") else np.asarray(state, float)
    _check_inputs(net, state_vec, tau, cond)
    upstream = np.asarray(upstream, dtype=np.float64).reshape(6)
    _, cache = forward_batch(net, state_vec[None, :], np.array([float(tau)]),
                             cond.values[None, :], keep_cache=True)
    return backward_batch(net, cache, upstream[None, :])


# --- checkpoint format -------------------------------------------------------
#
# Plain text, self-describing.  Header lines are key=value (one per config
# field); each tensor then appears as
#     tensor <name> <rows> <cols>
# followed by <rows> lines of <cols> decimal floats.  Vectors use rows=1.
# Floats print with %.17g, which round-trips float64 exactly.

CHECKPOINT_MAGIC = "# motionflow vector field checkpoint v1"


def _format_float(x: float) -> str:
    return "%.17g" % x


def save_checkpoint(path, net: VectorFieldNet) -> None:
    cfg = net.config
    buf = io.StringIO()
    buf.write(CHECKPOINT_MAGIC + "\n")
    buf.write(f"cond_dim={cfg.cond_dim}\n")
    buf.write(f"time_embed_dim={cfg.time_embed_dim}\n")
    buf.write(f"state_embed_dim={cfg.state_embed_dim}\n")
    buf.write(f"cond_hidden_dim={cfg.cond_hidden_dim}\n")
    buf.write(f"cond_embed_dim={cfg.cond_embed_dim}\n")
    buf.write("trunk_widths=" + ",".join(str(w) for w in cfg.trunk_widths) + "\n")
    buf.write("head_widths=" + ",".join(str(w) for w in cfg.head_widths) + "\n")
    for name, arr in _named_arrays(net):
        mat = arr if arr.ndim == 2 else arr[None, :]
        buf.write(f"tensor {name} {mat.shape[0]} {mat.shape[1]}\n")
        for row in mat:
            buf.write(" ".join(_format_float(x) for x in row) + "\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> VectorFieldNet:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a vector field checkpoint")
    header = {}
    pos = 1
    while pos < len(lines) and not lines[pos].startswith("tensor "):
        line = lines[pos].strip()
        pos += 1
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{pos}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        header[key.strip()] = value.strip()
    try:
        config = NetConfig(
            cond_dim=int(header["cond_dim"]),
            time_embed_dim=int(header["time_embed_dim"]),
            state_embed_dim=int(header["state_embed_dim"]),
            cond_hidden_dim=int(header["cond_hidden_dim"]),
            cond_embed_dim=int(header["cond_embed_dim"]),
            trunk_widths=tuple(int(w) for w in header["trunk_widths"].split(",")),
            head_widths=tuple(int(w) for w in header["head_widths"].split(",")),
        )
    except KeyError as err:
        raise ValueError(f"{path}: missing header field {err}") from err
    net = _zero_net(config)
    expected = dict(_named_arrays(net))
    seen = set()
    while pos < len(lines):
        line = lines[pos].strip()
        pos += 1
        if not line:
            continue
        parts = line.split()
        if parts[0] != "tensor" or len(parts) != 4:
            raise ValueError(f"{path}:{pos}: expected tensor header, got {line!r}")
        name, rows, cols = parts[1], int(parts[2]), int(parts[3])
        if name not in expected:
            raise ValueError(f"{path}:{pos}: unknown tensor {name!r}")
        target = expected[name]
        mat = target if target.ndim == 2 else target[None, :]
        if mat.shape != (rows, cols):
            raise ValueError(
                f"{path}:{pos}: tensor {name} has shape {(rows, cols)}, "
                f"expected {mat.shape}"
            )
        for r in range(rows):
            if pos >= len(lines):
                raise ValueError(f"{path}: truncated tensor {name}")
            row = np.array(lines[pos].split(), dtype=np.float64)
            pos += 1
            if row.size != cols:
                raise ValueError(f"{path}:{pos}: row has {row.size} values, expected {cols}")
            mat[r, :] = row
        seen.add(name)
    missing = set(expected) - seen
    if missing:
        raise ValueError(f"{path}: missing tensors: {sorted(missing)}")
    return net
