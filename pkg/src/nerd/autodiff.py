"""Dense tensors with reverse-mode automatic differentiation.

The op set is exactly what the demosaicking networks need: dense linear
layers, 2-d convolution, nearest-neighbor upsampling, sine/ReLU
activations, concatenation, window gathering, reflective padding and an
MSE loss.  No broadcasting beyond bias addition, no views with shared
storage: every operation produces a fresh buffer, and backward functions
never mutate values saved during the forward pass.

Recording model: while a `Tape` is active (used as a context manager),
every operation whose inputs require gradients appends a node to the
tape.  `Tape.backward(loss)` walks the nodes once in reverse recording
order and accumulates gradients into `Tensor.grad`.  Running backward a
second time on the same tape is rejected.  With no tape active the same
functions run as plain, allocation-light forward computations, which is
the inference path.

float32 is the training/inference precision; gradient checking demands
float64 (central differences in float32 are too noisy for the 1e-4
tolerances used throughout).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import AutodiffError, DimensionError

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """N-dimensional float array with an optional gradient buffer.

    `data` is row-major and owned by the tensor.  `grad`, when present,
    always matches `data` in shape and dtype.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        if not np.isfinite(arr).all():
            raise DimensionError("tensor data contains NaN or Inf")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        # Internal fast path: trusts `arr` (no finiteness scan, no copy).
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = requires_grad
        t.grad = None
        t.name = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag}, requires_grad={self.requires_grad})"


class Node:
    """One recorded operation: inputs, output, and its backward rule."""

    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], output: Tensor,
                 backward: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward


_tape_stack: list["Tape"] = []


def _active_tape() -> "Tape | None":
    return _tape_stack[-1] if _tape_stack else None


class Tape:
    """Ordered record of operations for one forward pass.

    Nodes are appended in execution order, so every node's inputs precede
    it; the backward walk visits each node exactly once, in reverse.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _tape_stack.pop()
        assert popped is self

    def _record(self, node: Node) -> None:
        self.nodes.append(node)

    def backward(self, root: Tensor) -> None:
        """Accumulate d(root)/d(input) into `.grad` of every recorded input.

        `root` must be a scalar produced under this tape.  A second call
        is rejected: backward rules may rely on buffers the caller is free
        to release once gradients exist.
        """
        if self._consumed:
            raise AutodiffError("backward already ran on this tape; re-run the forward pass")
        self._consumed = True
        if root.size != 1:
            raise DimensionError(f"backward root must be scalar, got shape {root.shape}")
        root.grad = np.ones_like(root.data)
        for node in reversed(self.nodes):
            g_out = node.output.grad
            if g_out is None:
                continue
            grads = node.backward(g_out)
            for tensor, g in zip(node.inputs, grads):
                if g is None or not tensor.requires_grad:
                    continue
                if tensor.grad is None:
                    tensor.grad = g
                else:
                    tensor.grad = tensor.grad + g


def _check_same_dtype(*tensors: Tensor) -> np.dtype:
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise DimensionError(f"mixed dtypes {dt} and {t.data.dtype}")
    return dt


def _apply(op: str, inputs: tuple[Tensor, ...], out_data: np.ndarray,
           backward: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]) -> Tensor:
    requires = any(t.requires_grad for t in inputs)
    out = Tensor._wrap(out_data, requires)
    tape = _active_tape()
    if tape is not None and requires:
        tape._record(Node(op, inputs, out, backward))
    return out


# ---------------------------------------------------------------------------
# elementwise and shape ops

def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors (residual connections)."""
    _check_same_dtype(a, b)
    if a.shape != b.shape:
        raise DimensionError(f"add shapes differ: {a.shape} vs {b.shape}")

    def backward(g):
        return g, g

    return _apply("add", (a, b), a.data + b.data, backward)


def relu(x: Tensor) -> Tensor:
    """max(0, x); subgradient at 0 is 0."""
    data = x.data

    def backward(g):
        return (g * (data > 0),)

    return _apply("relu", (x,), np.maximum(data, 0), backward)


def sine(x: Tensor, omega: float) -> Tensor:
    """sin(omega * x) elementwise."""
    data = x.data
    omega = float(omega)

    def backward(g):
        tmp = omega * data
        np.cos(tmp, out=tmp)
        tmp *= omega
        tmp *= g
        return (tmp,)

    out = omega * data
    np.sin(out, out=out)
    return _apply("sine", (x,), out, backward)


def concat(inputs: Sequence[Tensor], axis: int) -> Tensor:
    """Concatenate along `axis`; all other axes must agree."""
    inputs = tuple(inputs)
    if not inputs:
        raise DimensionError("concat of zero tensors")
    _check_same_dtype(*inputs)
    ndim = inputs[0].data.ndim
    if not -ndim <= axis < ndim:
        raise DimensionError(f"concat axis {axis} out of range for rank {ndim}")
    axis = axis % ndim
    ref = inputs[0].shape
    for t in inputs[1:]:
        if t.data.ndim != ndim or any(s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != axis):
            raise DimensionError(f"concat shape mismatch: {t.shape} vs {ref} on axis {axis}")
    sizes = [t.shape[axis] for t in inputs]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _apply("concat", inputs, np.concatenate([t.data for t in inputs], axis=axis), backward)


def sum_all(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    shape = x.shape

    def backward(g):
        return (np.full(shape, g, dtype=x.data.dtype),)

    return _apply("sum_all", (x,), np.asarray(x.data.sum(), dtype=x.data.dtype), backward)


def take_per_row(x: Tensor, index: np.ndarray) -> Tensor:
    """out[i] = x[i, index[i]] for a 2-d tensor; used by the Bayer-only loss."""
    if x.data.ndim != 2:
        raise DimensionError(f"take_per_row expects rank 2, got {x.shape}")
    n, m = x.shape
    idx = np.asarray(index, dtype=np.intp)
    if idx.shape != (n,):
        raise DimensionError(f"index shape {idx.shape} does not match rows {n}")
    if idx.min(initial=0) < 0 or idx.max(initial=0) >= m:
        raise DimensionError("take_per_row index out of range")
    rows = np.arange(n)

    def backward(g):
        dx = np.zeros((n, m), dtype=g.dtype)
        dx[rows, idx] = g  # one pick per row, so plain assignment is exact
        return (dx,)

    return _apply("take_per_row", (x,), x.data[rows, idx], backward)


# ---------------------------------------------------------------------------
# dense and convolutional layers

def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ weight + bias for x of shape (N, Din), weight (Din, Dout), bias (Dout,)."""
    _check_same_dtype(x, weight, bias)
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise DimensionError(f"linear expects 2-d input/weight, got {x.shape}, {weight.shape}")
    if x.shape[1] != weight.shape[0]:
        raise DimensionError(f"linear shapes do not conform: {x.shape} @ {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise DimensionError(f"bias shape {bias.shape} does not match output dim {weight.shape[1]}")
    x_data, w_data = x.data, weight.data
    needs = (x.requires_grad, weight.requires_grad, bias.requires_grad)

    def backward(g):
        dx = g @ w_data.T if needs[0] else None
        dw = x_data.T @ g if needs[1] else None
        db = g.sum(axis=0) if needs[2] else None
        return dx, dw, db

    out = x_data @ w_data
    out += bias.data
    return _apply("linear", (x, weight, bias), out, backward)


def _conv_out_size(size: int, k: int, stride: int, padding: int) -> int:
    # floor semantics (trailing positions that do not fit a full window are
    # dropped): the stride-2 halving the U-Net relies on needs floor for
    # even inputs, since size + 2*padding - kernel is odd there
    span = size + 2 * padding - k
    if span < 0:
        raise DimensionError(
            f"conv2d input too small: size={size} kernel={k} stride={stride} padding={padding}")
    return span // stride + 1


def _im2col(xp: np.ndarray, k: int, s: int, ho: int, wo: int) -> np.ndarray:
    """(N,C,Hp,Wp) -> (N*Ho*Wo, C*k*k) patch matrix; row layout (c, ky, kx)."""
    n, c = xp.shape[:2]
    sn, sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp, shape=(n, ho, wo, c, k, k), strides=(sn, sh * s, sw * s, sc, sh, sw))
    return np.ascontiguousarray(windows).reshape(n * ho * wo, c * k * k)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of (N,Cin,H,W) with (Cout,Cin,k,k) plus per-channel bias.

    im2col + one BLAS matmul per direction; the patch matrix is transient
    (rebuilt in backward) so resident memory stays activation-sized.
    """
    _check_same_dtype(x, kernel, bias)
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise DimensionError(f"conv2d expects rank-4 input/kernel, got {x.shape}, {kernel.shape}")
    n, cin, h, w = x.shape
    cout, cin_k, kh, kw = kernel.shape
    if kh != kw or kh % 2 == 0:
        raise DimensionError(f"conv2d kernel must be square with odd size, got {kh}x{kw}")
    if cin_k != cin:
        raise DimensionError(f"conv2d channel mismatch: input {cin}, kernel {cin_k}")
    if bias.shape != (cout,):
        raise DimensionError(f"conv2d bias shape {bias.shape} != ({cout},)")
    k, s, p = kh, int(stride), int(padding)
    if s < 1 or p < 0:
        raise DimensionError(f"conv2d invalid stride={s} or padding={p}")
    ho = _conv_out_size(h, k, s, p)
    wo = _conv_out_size(w, k, s, p)

    x_data, k_data = x.data, kernel.data
    needs = (x.requires_grad, kernel.requires_grad, bias.requires_grad)

    def pad_input(arr):
        if p == 0:
            return arr
        return np.pad(arr, ((0, 0), (0, 0), (p, p), (p, p)))

    w_mat = k_data.reshape(cout, cin * k * k)
    cols = _im2col(pad_input(x_data), k, s, ho, wo)
    out_mat = cols @ w_mat.T
    out_mat += bias.data
    out = np.ascontiguousarray(out_mat.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))
    del cols  # transient: 9x input size, freed before returning

    def backward(g):
        g_mat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, cout)
        dk = db = dx = None
        if needs[1]:
            cols_b = _im2col(pad_input(x_data), k, s, ho, wo)
            dk = (g_mat.T @ cols_b).reshape(cout, cin, k, k)
            del cols_b
        if needs[2]:
            db = g_mat.sum(axis=0)
        if needs[0]:
            d_cols = (g_mat @ w_mat).reshape(n, ho, wo, cin, k, k)
            d_cols = np.ascontiguousarray(d_cols.transpose(0, 3, 4, 5, 1, 2))  # (N,C,k,k,Ho,Wo)
            hp, wp = h + 2 * p, w + 2 * p
            dxp = np.zeros((n, cin, hp, wp), dtype=g.dtype)
            for a in range(k):
                for b in range(k):
                    dxp[:, :, a:a + (ho - 1) * s + 1:s, b:b + (wo - 1) * s + 1:s] += d_cols[:, :, a, b]
            dx = dxp[:, :, p:p + h, p:p + w] if p > 0 else dxp
        return dx, dk, db

    return _apply("conv2d", (x, kernel, bias), out, backward)


def upsample_nearest2x(x: Tensor) -> Tensor:
    """Replicate each pixel of (N,C,H,W) into a 2x2 block."""
    if x.data.ndim != 4:
        raise DimensionError(f"upsample_nearest2x expects rank 4, got {x.shape}")
    n, c, h, w = x.shape

    def backward(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return _apply("upsample2x", (x,), x.data.repeat(2, axis=2).repeat(2, axis=3), backward)


def crop2d(x: Tensor, top: int, left: int, height: int, width: int) -> Tensor:
    """Spatial crop of a (N,C,H,W) tensor; backward zero-pads the gradient."""
    if x.data.ndim != 4:
        raise DimensionError(f"crop2d expects rank 4, got {x.shape}")
    n, c, h, w = x.shape
    if top < 0 or left < 0 or top + height > h or left + width > w:
        raise DimensionError(f"crop ({top},{left},{height},{width}) outside {h}x{w}")

    def backward(g):
        dx = np.zeros((n, c, h, w), dtype=g.dtype)
        dx[:, :, top:top + height, left:left + width] = g
        return (dx,)

    out = np.ascontiguousarray(x.data[:, :, top:top + height, left:left + width])
    return _apply("crop2d", (x,), out, backward)


def _unpad_reflect_axis(g: np.ndarray, pad: int, axis: int) -> np.ndarray:
    """Adjoint of np.pad(mode='reflect') along one axis."""
    if pad == 0:
        return g
    n = g.shape[axis] - 2 * pad

    def sl(a, b):
        idx = [slice(None)] * g.ndim
        idx[axis] = slice(a, b)
        return tuple(idx)

    core = g[sl(pad, pad + n)].copy()
    # padded index j in [0,pad) reflects source pad-j; mirrored for the tail
    core[sl(1, pad + 1)] += np.flip(g[sl(0, pad)], axis=axis)
    core[sl(n - 1 - pad, n - 1)] += np.flip(g[sl(pad + n, 2 * pad + n)], axis=axis)
    return core


def reflect_pad2d(x: Tensor, pad: int) -> Tensor:
    """Reflective (edge-excluded) padding of the two trailing spatial axes."""
    if x.data.ndim != 4:
        raise DimensionError(f"reflect_pad2d expects rank 4, got {x.shape}")
    n, c, h, w = x.shape
    pad = int(pad)
    if pad < 0 or (pad > 0 and (h < pad + 1 or w < pad + 1)):
        raise DimensionError(f"reflect pad {pad} too large for {h}x{w}")
    if pad == 0:
        def backward_id(g):
            return (g,)
        return _apply("reflect_pad2d", (x,), x.data.copy(), backward_id)

    out = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="reflect")

    def backward(g):
        return (_unpad_reflect_axis(_unpad_reflect_axis(g, pad, 2), pad, 3),)

    return _apply("reflect_pad2d", (x,), out, backward)


def gather_windows(x: Tensor, centers: np.ndarray, window: int) -> Tensor:
    """Gather square windows around pixel centers of a (N,C,H,W) tensor.

    `centers` is an integer (M,3) array of (image, row, col).  Every
    window must lie fully inside the tensor; callers pad beforehand
    (reflectively, at image borders).  The output row for a center is the
    window flattened in (row, column, channel) order, i.e. the channel
    vector of the top-left window pixel first.
    """
    if x.data.ndim != 4:
        raise DimensionError(f"gather_windows expects rank 4, got {x.shape}")
    n, c, h, w = x.shape
    if window % 2 != 1:
        raise DimensionError(f"window must be odd, got {window}")
    r = window // 2
    ctr = np.asarray(centers, dtype=np.intp)
    if ctr.ndim != 2 or ctr.shape[1] != 3:
        raise DimensionError(f"centers must be (M,3), got {ctr.shape}")
    m = ctr.shape[0]
    if m and (ctr[:, 0].min() < 0 or ctr[:, 0].max() >= n
              or ctr[:, 1].min() < r or ctr[:, 1].max() >= h - r
              or ctr[:, 2].min() < r or ctr[:, 2].max() >= w - r):
        raise DimensionError("window centers out of bounds for gather_windows")

    offs = np.arange(-r, r + 1)
    img = ctr[:, 0][:, None, None]
    ys = (ctr[:, 1][:, None] + offs)[:, :, None]
    xs = (ctr[:, 2][:, None] + offs)[:, None, :]
    xt = x.data.transpose(0, 2, 3, 1)  # (N,H,W,C) view
    out = xt[img, ys, xs].reshape(m, window * window * c)
    # flat spatial index per gathered cell, for the bincount scatter below
    flat_idx = ((img * h + ys) * w + xs).reshape(-1)

    def backward(g):
        cells = g.reshape(m * window * window, c)
        buf = np.empty((c, n * h * w), dtype=g.dtype)
        for ch in range(c):  # bincount beats np.add.at by an order of magnitude here
            buf[ch] = np.bincount(flat_idx, weights=cells[:, ch], minlength=n * h * w)
        return (np.ascontiguousarray(buf.reshape(c, n, h, w).transpose(1, 0, 2, 3)),)

    return _apply("gather_windows", (x,), out, backward)


# ---------------------------------------------------------------------------
# loss

def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean of squared elementwise differences, as a scalar tensor."""
    _check_same_dtype(pred, target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    count = diff.size
    needs = (pred.requires_grad, target.requires_grad)

    def backward(g):
        scale = g * (2.0 / count)
        dp = scale * diff if needs[0] else None
        dt = -scale * diff if needs[1] else None
        return dp, dt

    return _apply("mse_loss", (pred, target), np.asarray(np.mean(diff * diff), dtype=pred.data.dtype), backward)


# ---------------------------------------------------------------------------
# finite-difference gradient checking

class GradCheckReport:
    """Result of comparing tape gradients against central differences."""

    def __init__(self, label: str, tolerance: float):
        self.label = label
        self.tolerance = tolerance
        self.max_rel_err = 0.0
        self.per_input: list[tuple[str, float]] = []

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance

    def __repr__(self) -> str:
        state = "OK" if self.passed else "FAIL"
        return f"GradCheckReport({self.label}: max_rel_err={self.max_rel_err:.3e}, tol={self.tolerance:.0e}, {state})"


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor],
               tolerance: float = 1e-4, step: float = 1e-5,
               label: str = "fn", max_coords_per_input: int | None = None,
               sample_seed: int = 0) -> GradCheckReport:
    """Compare tape gradients of a scalar function with central differences.

    All inputs must be float64.  The relative error per coordinate is
    |ad - fd| / max(|ad|, |fd|, 1), so it degrades to an absolute error
    for small gradients instead of amplifying finite-difference noise.
    By default every coordinate of every input is perturbed; for composed
    models `max_coords_per_input` caps the work per tensor with a seeded
    random coordinate sample (each tensor is still covered).  Returns a
    report rather than raising, so callers can aggregate.
    """
    inputs = list(inputs)
    for t in inputs:
        if t.data.dtype != np.float64:
            raise AutodiffError("grad_check requires float64 inputs")
        t.zero_grad()

    with Tape() as tape:
        out = fn(*inputs)
    if out.size != 1:
        raise DimensionError("grad_check target must produce a scalar")
    tape.backward(out)

    rng = np.random.default_rng(sample_seed)
    report = GradCheckReport(label, tolerance)
    for i, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        analytic = (t.grad if t.grad is not None else np.zeros_like(t.data)).reshape(-1)
        flat = t.data.reshape(-1)
        if max_coords_per_input is None or flat.size <= max_coords_per_input:
            coords = range(flat.size)
        else:
            coords = rng.choice(flat.size, size=max_coords_per_input, replace=False)
        worst = 0.0
        for j in coords:
            orig = flat[j]
            flat[j] = orig + step
            f_plus = fn(*inputs).item()
            flat[j] = orig - step
            f_minus = fn(*inputs).item()
            flat[j] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            ad = float(analytic[j])
            err = abs(ad - fd) / max(abs(ad), abs(fd), 1.0)
            worst = max(worst, err)
        report.per_input.append((t.name or f"input{i}", worst))
        report.max_rel_err = max(report.max_rel_err, worst)
    return report
