"""Desk-scale training support for the temporal module.

Reverse-mode gradients cover exactly the op set the temporal module is
made of (2D/3-frame convolutions, shuffle, residual add, relu, concat,
slice) plus BCE/MSE losses. Every backward is verified against central
finite differences; the shuffle backward is the inverse permutation and
is checked for exact equality. The optimizer is classical SGD with
momentum and coupled weight decay.

Gradient checks run the graph in float64 so the finite-difference
comparison is meaningful; the overfit demo and anything deployment-facing
stay in float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .nn_ops import (_conv2d_backward_raw, _conv2d_raw, conv3d_window_backward,
                     conv3d_window_raw)
from .temporal import (PaddingPolicy, TemporalBlock, TemporalModuleWeights,
                       shuffle_frames_array, shuffle_frames_array_inverse,
                       temporal_module_forward, window_source_indices)
from .tensor import ShapeError


class TrainingDivergence(RuntimeError):
    """Training loss went non-finite."""


# ---------------------------------------------------------------------------
# reverse-mode tape


class Var:
    """Graph node: a value plus how to push gradients to its parents."""

    __slots__ = ("value", "grad", "parents", "backward_fn")

    def __init__(self, value, parents=(), backward_fn=None):
        self.value = np.asarray(value)
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.grad = None


def backward(root: Var) -> None:
    """Accumulate gradients of `root` (summed over its elements) into the graph."""
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    for v in order:
        v.grad = None
    root.grad = np.ones_like(root.value)
    for v in reversed(order):
        if v.backward_fn is None or v.grad is None:
            continue
        for p, g in zip(v.parents, v.backward_fn(v.grad)):
            if g is None:
                continue
            p.grad = g if p.grad is None else p.grad + g


class GradTape:
    """Named parameters for one training graph and their gradients."""

    def __init__(self):
        self.params: dict[str, Var] = {}

    def param(self, name: str, value: np.ndarray) -> Var:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        v = Var(value)
        self.params[name] = v
        return v

    def gradients(self, loss: Var) -> dict[str, np.ndarray]:
        backward(loss)
        return {name: (v.grad if v.grad is not None else np.zeros_like(v.value))
                for name, v in self.params.items()}


# ---------------------------------------------------------------------------
# tape ops


def v_conv2d(x: Var, kernel: Var, bias: Var, stride: int = 1, dilation: int = 1,
             padding: int | None = None) -> Var:
    """Conv2d over [C, H, W]; padding defaults to spatial-preserving."""
    kh = kernel.value.shape[2]
    pad = dilation * (kh - 1) // 2 if padding is None else padding
    out = _conv2d_raw(x.value, kernel.value, bias.value, stride, dilation, pad, pad)

    def back(dy):
        dx, dk, db = _conv2d_backward_raw(x.value, kernel.value, dy, stride, dilation, pad, pad)
        return dx, dk, db

    return Var(out, (x, kernel, bias), back)


def v_conv2d_frames(x: Var, kernel: Var, bias: Var) -> Var:
    """Shared-weight same-padded conv2d over each frame of [3, C, H, W]."""
    kh = kernel.value.shape[2]
    pad = (kh - 1) // 2
    out = np.stack([_conv2d_raw(x.value[i], kernel.value, bias.value, 1, 1, pad, pad)
                    for i in range(3)])

    def back(dy):
        dx = np.empty_like(x.value)
        dk = np.zeros_like(kernel.value)
        db = np.zeros_like(bias.value)
        for i in range(3):
            dxi, dki, dbi = _conv2d_backward_raw(x.value[i], kernel.value, dy[i], 1, 1, pad, pad)
            dx[i] = dxi
            dk += dki
            db += dbi
        return dx, dk, db

    return Var(out, (x, kernel, bias), back)


def v_conv3d_single(x: Var, kernel: Var, bias: Var) -> Var:
    """conv3d_window over one explicit window held as [3, C, H, W]."""
    out = conv3d_window_raw((x.value[0], x.value[1], x.value[2]), kernel.value, bias.value)

    def back(dy):
        dframes, dk, db = conv3d_window_backward(
            (x.value[0], x.value[1], x.value[2]), kernel.value, dy)
        return np.stack(dframes), dk, db

    return Var(out, (x, kernel, bias), back)


def v_tm_conv3d(x: Var, kernel: Var, bias: Var,
                policy: PaddingPolicy = PaddingPolicy.EQ6_LITERAL,
                layer_index: int = 1) -> Var:
    """Padded temporal convolution over a [3, C, H, W] block."""
    sources = window_source_indices(policy, layer_index)
    zero = np.zeros_like(x.value[0])
    windows = [tuple(zero if s is None else x.value[s] for s in srcs) for srcs in sources]
    out = np.stack([conv3d_window_raw(win, kernel.value, bias.value) for win in windows])

    def back(dy):
        dx = np.zeros_like(x.value)
        dk = np.zeros_like(kernel.value)
        db = np.zeros_like(bias.value)
        for i, srcs in enumerate(sources):
            dframes, dki, dbi = conv3d_window_backward(windows[i], kernel.value, dy[i])
            dk += dki
            db += dbi
            for t, s in enumerate(srcs):
                if s is not None:
                    dx[s] += dframes[t]
        return dx, dk, db

    return Var(out, (x, kernel, bias), back)


def v_shuffle(x: Var) -> Var:
    out = shuffle_frames_array(x.value)
    return Var(out, (x,), lambda dy: (shuffle_frames_array_inverse(dy),))


def v_add(a: Var, b: Var) -> Var:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"add shape mismatch: {a.value.shape} vs {b.value.shape}")
    return Var(a.value + b.value, (a, b), lambda dy: (dy, dy))


def v_relu(x: Var) -> Var:
    out = np.maximum(x.value, 0)
    return Var(out, (x,), lambda dy: (np.where(x.value > 0, dy, 0),))


def v_concat(parts: Sequence[Var], axis: int) -> Var:
    values = [p.value for p in parts]
    sizes = [v.shape[axis] for v in values]
    out = np.concatenate(values, axis=axis)

    def back(dy):
        grads = []
        start = 0
        for n in sizes:
            index = [slice(None)] * dy.ndim
            index[axis] = slice(start, start + n)
            grads.append(np.ascontiguousarray(dy[tuple(index)]))
            start += n
        return tuple(grads)

    return Var(out, tuple(parts), back)


def v_slice(x: Var, axis: int, start: int, length: int) -> Var:
    index = [slice(None)] * x.value.ndim
    index[axis] = slice(start, start + length)
    out = np.ascontiguousarray(x.value[tuple(index)])

    def back(dy):
        dx = np.zeros_like(x.value)
        dx[tuple(index)] = dy
        return (dx,)

    return Var(out, (x,), back)


def v_mse(pred: Var, target: np.ndarray) -> Var:
    diff = pred.value - target
    n = diff.size
    loss = np.asarray((diff * diff).mean(), dtype=pred.value.dtype)
    return Var(loss, (pred,), lambda dy: (dy * diff * (2.0 / n),))


BCE_CLAMP = 1e-7


def bce_loss(pred: np.ndarray, target: np.ndarray):
    """Mean binary cross-entropy and its gradient w.r.t. pred.

    pred is clamped to [1e-7, 1 - 1e-7] before the logs; the gradient is
    zero where the clamp is active.
    """
    if pred.shape != target.shape:
        raise ShapeError(f"bce shape mismatch: {pred.shape} vs {target.shape}")
    if not np.all((target == 0) | (target == 1)):
        raise ValueError("bce target must be binary (0/1 values)")
    p = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    n = p.size
    loss = float(-(target * np.log(p) + (1.0 - target) * np.log1p(-p)).mean())
    grad = (-target / p + (1.0 - target) / (1.0 - p)) / n
    grad = np.where((pred > BCE_CLAMP) & (pred < 1.0 - BCE_CLAMP), grad, 0.0)
    return loss, grad.astype(pred.dtype, copy=False)


def v_bce(pred: Var, target: np.ndarray) -> Var:
    loss, grad = bce_loss(pred.value, target)
    return Var(np.asarray(loss, dtype=pred.value.dtype), (pred,), lambda dy: (dy * grad,))


def v_tm_forward(x: Var, layers: Sequence[tuple[Var, Var, Var, Var]],
                 policy: PaddingPolicy = PaddingPolicy.EQ6_LITERAL,
                 shuffle_enabled: bool = True,
                 residual_last: bool = True) -> Var:
    """Train-path mirror of temporal_module_forward on a [3, C, H, W] Var.

    `layers` lists (conv3d kernel, conv3d bias, res2d kernel, res2d bias)
    per temporal convolution.
    """
    last = len(layers)
    for k, (k3, b3, k2, b2) in enumerate(layers, start=1):
        st = v_tm_conv3d(x, k3, b3, policy, layer_index=k)
        if k < last or residual_last:
            st = v_add(st, v_conv2d_frames(x, k2, b2))
        x = v_shuffle(st) if (shuffle_enabled and k < last) else st
    return x


# ---------------------------------------------------------------------------
# finite-difference gradient checking


@dataclass
class GradCheckReport:
    op: str
    max_rel_err: float
    max_abs_err: float
    passed: bool
    coords: int

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"gradcheck {self.op}: {status} "
                f"(max_rel={self.max_rel_err:.3e}, max_abs={self.max_abs_err:.3e}, "
                f"{self.coords} coords)")


FD_STEP = 1e-4
REL_TOL = 1e-3
ABS_TOL = 1e-6


def fd_gradcheck(op_name: str, shapes=None, seed: int = 0) -> GradCheckReport:
    """Central-difference check (float64, h=1e-4) of one op's gradients.

    A coordinate passes when its relative error is <= 1e-3 or its absolute
    error is <= 1e-6; the report carries the worst errors seen. The shuffle
    op is pure data movement and is checked for exact (zero-error) equality
    against a probed Jacobian.
    """
    rng = np.random.default_rng(seed)
    if op_name == "shuffle":
        return _gradcheck_shuffle(rng, shapes)

    builders = {
        "conv2d": _build_conv2d,
        "conv3d_window": _build_conv3d_window,
        "residual_add": _build_residual_add,
        "relu": _build_relu,
        "concat": _build_concat,
        "slice": _build_slice,
        "bce": _build_bce,
    }
    if op_name not in builders:
        raise ValueError(f"unsupported op {op_name!r}; "
                         f"known: {sorted(builders) + ['shuffle']}")
    build, tensors = builders[op_name](rng, shapes)

    tape = GradTape()
    loss = build(tape)
    analytic = tape.gradients(loss)

    def loss_fn() -> Var:
        return build(GradTape())

    max_rel = 0.0
    max_abs = 0.0
    coords = 0
    passed = True
    for name, arr in tensors.items():
        a = analytic[name]
        flat = arr.reshape(-1)
        aflat = a.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + FD_STEP
            up = float(loss_fn().value)
            flat[i] = keep - FD_STEP
            down = float(loss_fn().value)
            flat[i] = keep
            fd = (up - down) / (2.0 * FD_STEP)
            diff = abs(aflat[i] - fd)
            denom = max(abs(aflat[i]), abs(fd))
            rel = diff / denom if denom > 0 else 0.0
            if not (rel <= REL_TOL or diff <= ABS_TOL):
                passed = False
            max_rel = max(max_rel, rel)
            max_abs = max(max_abs, diff)
            coords += 1
    return GradCheckReport(op_name, max_rel, max_abs, passed, coords)


def _proj_loss(out: Var, proj: np.ndarray) -> Var:
    flat = out.value.reshape(-1)
    loss = np.asarray(np.dot(flat, proj), dtype=out.value.dtype)
    return Var(loss, (out,), lambda dy: ((dy * proj).reshape(out.value.shape),))


def _build_conv2d(rng, shapes):
    c, o, h = (2, 3, 5) if shapes is None else shapes
    x = rng.standard_normal((c, h, h))
    k = rng.standard_normal((o, c, 3, 3)) * 0.5
    b = rng.standard_normal(o) * 0.1
    proj = rng.standard_normal(o * h * h)
    tensors = {"x": x, "kernel": k, "bias": b}

    def build(tape: GradTape) -> Var:
        vx = tape.param("x", x)
        vk = tape.param("kernel", k)
        vb = tape.param("bias", b)
        return _proj_loss(v_conv2d(vx, vk, vb), proj)

    return build, tensors


def _build_conv3d_window(rng, shapes):
    c, o, h = (2, 2, 4) if shapes is None else shapes
    x = rng.standard_normal((3, c, h, h))
    k = rng.standard_normal((o, c, 3, 3, 3)) * 0.5
    b = rng.standard_normal(o) * 0.1
    proj = rng.standard_normal(o * h * h)
    tensors = {"x": x, "kernel": k, "bias": b}

    def build(tape: GradTape) -> Var:
        vx = tape.param("x", x)
        vk = tape.param("kernel", k)
        vb = tape.param("bias", b)
        return _proj_loss(v_conv3d_single(vx, vk, vb), proj)

    return build, tensors


def _build_residual_add(rng, shapes):
    c, h = (3, 4) if shapes is None else shapes
    a = rng.standard_normal((c, h, h))
    b = rng.standard_normal((c, h, h))
    proj = rng.standard_normal(c * h * h)
    tensors = {"a": a, "b": b}

    def build(tape: GradTape) -> Var:
        return _proj_loss(v_add(tape.param("a", a), tape.param("b", b)), proj)

    return build, tensors


def _build_relu(rng, shapes):
    c, h = (3, 4) if shapes is None else shapes
    x = rng.standard_normal((c, h, h))
    # keep inputs away from the kink where FD is meaningless
    x = np.where(np.abs(x) < 0.05, 0.5, x)
    proj = rng.standard_normal(c * h * h)
    tensors = {"x": x}

    def build(tape: GradTape) -> Var:
        return _proj_loss(v_relu(tape.param("x", x)), proj)

    return build, tensors


def _build_concat(rng, shapes):
    c, h = (2, 3) if shapes is None else shapes
    a = rng.standard_normal((c, h, h))
    b = rng.standard_normal((c + 1, h, h))
    proj = rng.standard_normal((2 * c + 1) * h * h)
    tensors = {"a": a, "b": b}

    def build(tape: GradTape) -> Var:
        return _proj_loss(v_concat([tape.param("a", a), tape.param("b", b)], axis=0), proj)

    return build, tensors


def _build_slice(rng, shapes):
    c, h = (4, 3) if shapes is None else shapes
    x = rng.standard_normal((c, h, h))
    proj = rng.standard_normal(2 * h * h)
    tensors = {"x": x}

    def build(tape: GradTape) -> Var:
        return _proj_loss(v_slice(tape.param("x", x), axis=0, start=1, length=2), proj)

    return build, tensors


def _build_bce(rng, shapes):
    h = 4 if shapes is None else shapes
    pred = rng.uniform(0.05, 0.95, size=(h, h))
    target = (rng.uniform(size=(h, h)) > 0.5).astype(np.float64)
    tensors = {"pred": pred}

    def build(tape: GradTape) -> Var:
        return v_bce(tape.param("pred", pred), target)

    return build, tensors


def _gradcheck_shuffle(rng, shapes) -> GradCheckReport:
    """Exact Jacobian check: the shuffle moves values without arithmetic.

    Inputs are dyadic and the step is a power of two, so x +- h and the
    probed differences are exact; both Jacobians must match bit for bit.
    """
    c, h = (4, 2) if shapes is None else shapes
    x = rng.integers(-128, 128, size=(3, c, h, h)).astype(np.float64) / 256.0
    step = 2.0 ** -12
    n = x.size
    max_abs = 0.0
    coords = 0
    flat = x.reshape(-1)
    for i in range(n):
        keep = flat[i]
        flat[i] = keep + step
        up = shuffle_frames_array(x).reshape(-1)
        flat[i] = keep - step
        down = shuffle_frames_array(x).reshape(-1)
        flat[i] = keep
        fd_col = (up - down) / (2.0 * step)
        # analytic column: forward-permute the one-hot input perturbation
        e = np.zeros_like(x)
        e.reshape(-1)[i] = 1.0
        a_col = shuffle_frames_array(e).reshape(-1)
        max_abs = max(max_abs, float(np.abs(fd_col - a_col).max()))
        coords += n
    return GradCheckReport("shuffle", max_abs, max_abs, max_abs == 0.0, coords)


# ---------------------------------------------------------------------------
# optimizer and overfit demo


@dataclass
class SgdState:
    """Classical momentum SGD with coupled weight decay."""

    learning_rate: float = 5e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")


def sgd_step(state: SgdState, params: Mapping[str, np.ndarray],
             grads: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """v <- m*v + g + wd*p; p <- p - lr*v. Returns the updated parameter map."""
    if hasattr(params, "items") and not isinstance(params, dict):
        params = dict(params.items())
    missing = set(params) - set(grads)
    extra = set(grads) - set(params)
    if missing or extra:
        raise ValueError(f"gradient name mismatch: missing {sorted(missing)}, "
                         f"unexpected {sorted(extra)}")
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape mismatch for {name!r}: {g.shape} vs {p.shape}")
        v = state.velocity.get(name)
        v = g + state.weight_decay * p if v is None else state.momentum * v + g + state.weight_decay * p
        state.velocity[name] = v
        out[name] = (p - state.learning_rate * v).astype(p.dtype, copy=False)
    return out


def _random_tm_params(rng, channels: int, num_layers: int) -> dict[str, np.ndarray]:
    params = {}
    fan3 = channels * 3 * 3 * 3
    fan2 = channels * 3 * 3
    for n in range(1, num_layers + 1):
        params[f"conv3d_{n}.kernel"] = (
            rng.standard_normal((channels, channels, 3, 3, 3)) * np.sqrt(2.0 / fan3)
        ).astype(np.float32)
        params[f"conv3d_{n}.bias"] = np.zeros(channels, dtype=np.float32)
        params[f"res2d_{n}.kernel"] = (
            rng.standard_normal((channels, channels, 3, 3)) * np.sqrt(2.0 / fan2)
        ).astype(np.float32)
        params[f"res2d_{n}.bias"] = np.zeros(channels, dtype=np.float32)
    return params


def _tm_weights_from_params(params: Mapping[str, np.ndarray],
                            num_layers: int) -> TemporalModuleWeights:
    from .nn_ops import Conv2dWeights, Conv3dWeights
    return TemporalModuleWeights(
        conv3d=tuple(Conv3dWeights(params[f"conv3d_{n}.kernel"], params[f"conv3d_{n}.bias"])
                     for n in range(1, num_layers + 1)),
        res2d=tuple(Conv2dWeights.same(params[f"res2d_{n}.kernel"], params[f"res2d_{n}.bias"])
                    for n in range(1, num_layers + 1)))


def tm_overfit_demo(seed: int, steps: int,
                    learning_rate: float = 5e-3,
                    momentum: float = 0.9,
                    weight_decay: float = 5e-4,
                    channels: int = 8,
                    size: int = 16,
                    num_layers: int = 3,
                    policy: PaddingPolicy = PaddingPolicy.EQ6_LITERAL) -> np.ndarray:
    """Train a student temporal module to match a frozen random teacher.

    One fixed input block, MSE on the teacher's outputs, SGD with the
    configured hyperparameters. Returns the per-step losses (recorded
    before each update). Seed expansion: SeedSequence(seed) spawns the
    teacher, student, and data streams in that order.
    """
    teacher_ss, student_ss, data_ss = np.random.SeedSequence(seed).spawn(3)
    teacher_params = _random_tm_params(np.random.default_rng(teacher_ss), channels, num_layers)
    student_params = _random_tm_params(np.random.default_rng(student_ss), channels, num_layers)
    x = np.random.default_rng(data_ss).standard_normal(
        (3, channels, size, size)).astype(np.float32)

    teacher = _tm_weights_from_params(teacher_params, num_layers)
    target = temporal_module_forward(TemporalBlock(x), teacher, policy=policy).data

    state = SgdState(learning_rate=learning_rate, momentum=momentum, weight_decay=weight_decay)
    losses = np.zeros(steps, dtype=np.float64)
    for step in range(steps):
        tape = GradTape()
        layer_vars = [
            (tape.param(f"conv3d_{n}.kernel", student_params[f"conv3d_{n}.kernel"]),
             tape.param(f"conv3d_{n}.bias", student_params[f"conv3d_{n}.bias"]),
             tape.param(f"res2d_{n}.kernel", student_params[f"res2d_{n}.kernel"]),
             tape.param(f"res2d_{n}.bias", student_params[f"res2d_{n}.bias"]))
            for n in range(1, num_layers + 1)]
        pred = v_tm_forward(Var(x), layer_vars, policy=policy)
        loss = v_mse(pred, target)
        value = float(loss.value)
        if not np.isfinite(value):
            raise TrainingDivergence(f"non-finite loss {value} at step {step}")
        losses[step] = value
        grads = tape.gradients(loss)
        student_params = sgd_step(state, student_params, grads)
    return losses
