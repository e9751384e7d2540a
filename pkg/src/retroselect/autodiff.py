"""Dense-tensor kernel with reverse-mode differentiation.

Covers exactly the operator set the encoder and the contrastive losses
need: affine maps, ReLU, batch normalization, segment sums / row gathers
over graphs, cosine similarities and a stable log-softmax pick, plus SGD
with momentum and global-norm clipping. Arrays are float32 by default;
building the parameters in float64 switches the whole tape to float64 for
gradient checking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class ShapeMismatch(ValueError):
    pass


class DegenerateBatch(ValueError):
    pass


class NumericsError(FloatingPointError):
    """A public operation produced NaN/Inf."""


_FINITE_CHECKS = True


def set_finite_checks(enabled: bool) -> bool:
    """Toggle NaN/Inf output checking; returns the previous setting."""
    global _FINITE_CHECKS
    previous = _FINITE_CHECKS
    _FINITE_CHECKS = enabled
    return previous


def _checked(data: np.ndarray, op: str) -> np.ndarray:
    if _FINITE_CHECKS and not np.isfinite(data).all():
        raise NumericsError(f"non-finite values produced by {op}")
    return data


class Tensor:
    """A node of the reverse-mode tape wrapping a numpy array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), backward=None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> np.ndarray:
        return self.data

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype)
        else:
            self.grad += grad

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def parameter(data) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True)


def constant(data, dtype=None) -> Tensor:
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    return Tensor(arr)


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss; accumulates into .grad."""
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ShapeMismatch(f"backward needs a scalar loss, got shape {loss.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# --- elementwise / affine ops ---

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"add {a.shape} vs {b.shape}")
    out = Tensor(_checked(a.data + b.data, "add"), parents=(a, b))

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)
    out._backward = _bw if out.requires_grad else None
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"sub {a.shape} vs {b.shape}")
    out = Tensor(_checked(a.data - b.data, "sub"), parents=(a, b))

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(-g)
    out._backward = _bw if out.requires_grad else None
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"mul {a.shape} vs {b.shape}")
    out = Tensor(_checked(a.data * b.data, "mul"), parents=(a, b))

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)
    out._backward = _bw if out.requires_grad else None
    return out


def scale(x: Tensor, factor: float) -> Tensor:
    out = Tensor(_checked(x.data * factor, "scale"), parents=(x,))

    def _bw(g):
        x._accumulate(g * factor)
    out._backward = _bw if out.requires_grad else None
    return out


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = x @ w (+ b broadcast over rows)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeMismatch(f"linear {x.shape} @ {w.shape}")
    y = x.data @ w.data
    parents = (x, w)
    if b is not None:
        if b.shape != (w.shape[1],):
            raise ShapeMismatch(f"bias {b.shape} vs output width {w.shape[1]}")
        y = y + b.data
        parents = (x, w, b)
    out = Tensor(_checked(y, "linear"), parents=parents)

    def _bw(g):
        if x.requires_grad:
            x._accumulate(g @ w.data.T)
        if w.requires_grad:
            w._accumulate(x.data.T @ g)
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=0))
    out._backward = _bw if out.requires_grad else None
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0), parents=(x,))

    def _bw(g):
        x._accumulate(g * (x.data > 0))
    out._backward = _bw if out.requires_grad else None
    return out


def sum_rows(x: Tensor) -> Tensor:
    """Column sums of a matrix: [m, d] -> [d]."""
    if x.data.ndim != 2:
        raise ShapeMismatch(f"sum_rows needs a matrix, got {x.shape}")
    out = Tensor(_checked(x.data.sum(axis=0), "sum_rows"), parents=(x,))

    def _bw(g):
        x._accumulate(np.broadcast_to(g, x.shape))
    out._backward = _bw if out.requires_grad else None
    return out


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(_checked(np.asarray(x.data.sum()), "sum_all"), parents=(x,))

    def _bw(g):
        x._accumulate(np.full(x.shape, g, dtype=x.dtype))
    out._backward = _bw if out.requires_grad else None
    return out


# --- graph ops ---

class Scatter:
    """Sparse 0/1 matrix mapping input rows to segments.

    ``mat`` is [n_segments, n_rows] with mat[seg[j], j] = 1, so
    ``mat @ x`` is a segment sum and ``mat_t @ y`` gathers segment rows
    back to input rows. Built once per graph and reused by every layer.
    """

    __slots__ = ("segment_ids", "n_segments", "_mats")

    def __init__(self, segment_ids: np.ndarray, n_segments: int):
        segment_ids = np.asarray(segment_ids, dtype=np.int64)
        if segment_ids.size and (segment_ids.min() < 0 or segment_ids.max() >= n_segments):
            raise ShapeMismatch("segment id out of range")
        self.segment_ids = segment_ids
        self.n_segments = n_segments
        self._mats: dict = {}

    def mats(self, dtype):
        key = np.dtype(dtype).name
        if key not in self._mats:
            n_rows = self.segment_ids.shape[0]
            ones = np.ones(n_rows, dtype=dtype)
            mat = sp.csr_matrix(
                (ones, (self.segment_ids, np.arange(n_rows))),
                shape=(self.n_segments, n_rows))
            self._mats[key] = (mat, mat.T.tocsr())
        return self._mats[key]


def segment_sum(x: Tensor, segments, num_segments: int | None = None) -> Tensor:
    """Row j of the output is the sum of input rows with segment id j.

    Passing a Scatter reuses its cached sparse matrices (the encoder builds
    one per graph batch and shares it across layers); a raw id array takes
    the plain accumulate path.
    """
    if isinstance(segments, Scatter):
        if x.data.ndim != 2 or x.shape[0] != segments.segment_ids.shape[0]:
            raise ShapeMismatch(f"segment_sum rows {x.shape} vs ids "
                                f"{segments.segment_ids.shape}")
        mat, mat_t = segments.mats(x.dtype)
        out = Tensor(_checked(mat @ x.data, "segment_sum"), parents=(x,))

        def _bw(g):
            x._accumulate(mat_t @ g)
        out._backward = _bw if out.requires_grad else None
        return out

    ids = np.asarray(segments, dtype=np.int64)
    if num_segments is None:
        num_segments = int(ids.max()) + 1 if ids.size else 0
    if x.data.ndim != 2 or x.shape[0] != ids.shape[0]:
        raise ShapeMismatch(f"segment_sum rows {x.shape} vs ids {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= num_segments):
        raise ShapeMismatch("segment id out of range")
    summed = np.zeros((num_segments, x.shape[1]), dtype=x.dtype)
    np.add.at(summed, ids, x.data)
    out = Tensor(_checked(summed, "segment_sum"), parents=(x,))

    def _bw(g):
        x._accumulate(g[ids])
    out._backward = _bw if out.requires_grad else None
    return out


def gather_rows(x: Tensor, index) -> Tensor:
    """out[j] = x[index[j]]; backward scatter-adds."""
    if isinstance(index, Scatter):
        scatter = index
        if scatter.n_segments != x.shape[0]:
            raise ShapeMismatch("gather index space does not match rows")
        mat, mat_t = scatter.mats(x.dtype)
        out = Tensor(mat_t @ x.data, parents=(x,))

        def _bw(g):
            x._accumulate(mat @ g)
        out._backward = _bw if out.requires_grad else None
        return out

    ids = np.asarray(index, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= x.shape[0]):
        raise ShapeMismatch("gather index out of range")
    out = Tensor(x.data[ids], parents=(x,))

    def _bw(g):
        buf = np.zeros_like(x.data)
        np.add.at(buf, ids, g)
        x._accumulate(buf)
    out._backward = _bw if out.requires_grad else None
    return out


def pick_row(x: Tensor, row: int) -> Tensor:
    """One row of a matrix as a vector."""
    if x.data.ndim != 2 or not 0 <= row < x.shape[0]:
        raise ShapeMismatch(f"pick_row {row} from {x.shape}")
    out = Tensor(x.data[row], parents=(x,))

    def _bw(g):
        buf = np.zeros_like(x.data)
        buf[row] = g
        x._accumulate(buf)
    out._backward = _bw if out.requires_grad else None
    return out


# --- batch normalization ---

@dataclass
class BatchNormState:
    """Trainable affine plus running statistics for one BN layer."""

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    epsilon: float = 1e-5

    @classmethod
    def create(cls, width: int, dtype=np.float32,
               momentum: float = 0.1, epsilon: float = 1e-5) -> "BatchNormState":
        return cls(parameter(np.ones(width, dtype=dtype)),
                   parameter(np.zeros(width, dtype=dtype)),
                   np.zeros(width, dtype=dtype), np.ones(width, dtype=dtype),
                   momentum, epsilon)

    @property
    def width(self) -> int:
        return self.gamma.data.shape[0]


def batchnorm(x: Tensor, state: BatchNormState, mode: str = "train",
              update_running: bool = True) -> Tensor:
    """Normalize rows of x per feature column.

    Train mode uses biased batch statistics and folds them into the running
    estimates (unbiased variance); eval mode is a per-row affine map using
    the running statistics only.
    """
    if x.data.ndim != 2 or x.shape[1] != state.width:
        raise ShapeMismatch(f"batchnorm width {x.shape} vs {state.width}")
    n = x.shape[0]
    gamma, beta = state.gamma, state.beta
    if mode == "train":
        if n < 2:
            raise DegenerateBatch(f"train-mode batchnorm needs n >= 2, got {n}")
        mean = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + state.epsilon)
        x_hat = (x.data - mean) * inv_std
        if update_running:
            m = state.momentum
            state.running_mean += m * (mean - state.running_mean)
            unbiased = var * (n / (n - 1))
            state.running_var += m * (unbiased - state.running_var)
    elif mode == "eval":
        inv_std = 1.0 / np.sqrt(state.running_var + state.epsilon)
        x_hat = (x.data - state.running_mean) * inv_std
    else:
        raise ValueError(f"unknown batchnorm mode {mode!r}")
    out = Tensor(_checked(x_hat * gamma.data + beta.data, "batchnorm"),
                 parents=(x, gamma, beta))

    def _bw(g):
        if gamma.requires_grad:
            gamma._accumulate((g * x_hat).sum(axis=0))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=0))
        if x.requires_grad:
            if mode == "train":
                g_mean = g.mean(axis=0)
                gx_mean = (g * x_hat).mean(axis=0)
                x._accumulate(gamma.data * inv_std * (g - g_mean - x_hat * gx_mean))
            else:
                x._accumulate(g * gamma.data * inv_std)
    out._backward = _bw if out.requires_grad else None
    return out


# --- similarity and classification ops ---

ZERO_NORM_EPS = 1e-12


def cosine(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity of two vectors; 0 if either norm is (near) zero."""
    if a.data.ndim != 1 or a.shape != b.shape:
        raise ShapeMismatch(f"cosine {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a.data))
    nb = float(np.linalg.norm(b.data))
    if na < ZERO_NORM_EPS or nb < ZERO_NORM_EPS:
        out = Tensor(np.zeros((), dtype=a.dtype), parents=(a, b))
        out._backward = (lambda g: None) if out.requires_grad else None
        return out
    value = float(a.data @ b.data) / (na * nb)
    out = Tensor(np.asarray(value, dtype=a.dtype), parents=(a, b))

    def _bw(g):
        g = float(g)
        if a.requires_grad:
            a._accumulate(g * (b.data / (na * nb) - value * a.data / (na * na)))
        if b.requires_grad:
            b._accumulate(g * (a.data / (na * nb) - value * b.data / (nb * nb)))
    out._backward = _bw if out.requires_grad else None
    return out


def cosine_scores(query: Tensor, keys: Tensor) -> Tensor:
    """Cosine similarity of one query vector against each key row."""
    if query.data.ndim != 1 or keys.data.ndim != 2 or keys.shape[1] != query.shape[0]:
        raise ShapeMismatch(f"cosine_scores {query.shape} vs {keys.shape}")
    qn = float(np.linalg.norm(query.data))
    kn = np.linalg.norm(keys.data, axis=1)
    live = kn >= ZERO_NORM_EPS
    if qn < ZERO_NORM_EPS:
        out = Tensor(np.zeros(keys.shape[0], dtype=query.dtype), parents=(query, keys))
        out._backward = (lambda g: None) if out.requires_grad else None
        return out
    denom = np.where(live, kn * qn, 1.0)
    raw = keys.data @ query.data
    values = np.where(live, raw / denom, 0.0).astype(query.dtype)
    out = Tensor(_checked(values, "cosine_scores"), parents=(query, keys))

    def _bw(g):
        g = g * live
        if query.requires_grad:
            dq = (g / denom) @ keys.data - float(g @ values) * query.data / (qn * qn)
            query._accumulate(dq)
        if keys.requires_grad:
            dk = np.outer(g / denom, query.data)
            dk -= (g * values / np.where(live, kn * kn, 1.0))[:, None] * keys.data
            keys._accumulate(dk)
    out._backward = _bw if out.requires_grad else None
    return out


def concat1d(parts: list[Tensor]) -> Tensor:
    """Concatenate scalars and 1-D tensors into one vector."""
    if not parts:
        raise ShapeMismatch("concat1d needs at least one part")
    arrays = [np.atleast_1d(p.data) for p in parts]
    out = Tensor(np.concatenate(arrays), parents=tuple(parts))

    def _bw(g):
        offset = 0
        for part, arr in zip(parts, arrays):
            chunk = g[offset:offset + arr.shape[0]]
            if part.requires_grad:
                part._accumulate(chunk.reshape(part.shape))
            offset += arr.shape[0]
    out._backward = _bw if out.requires_grad else None
    return out


def log_softmax_pick(scores: Tensor, target: int) -> Tensor:
    """scores[target] - logsumexp(scores), max-subtracted for stability."""
    if scores.data.ndim != 1 or scores.shape[0] < 1:
        raise ShapeMismatch(f"log_softmax_pick needs a non-empty vector, "
                            f"got {scores.shape}")
    if not 0 <= target < scores.shape[0]:
        raise ShapeMismatch(f"target {target} out of range {scores.shape[0]}")
    high = scores.data.max()
    shifted = scores.data - high
    log_z = np.log(np.exp(shifted).sum()) + high
    value = scores.data[target] - log_z
    out = Tensor(_checked(np.asarray(value, dtype=scores.dtype), "log_softmax_pick"),
                 parents=(scores,))

    def _bw(g):
        softmax = np.exp(scores.data - log_z)
        grad = -softmax * float(g)
        grad[target] += float(g)
        scores._accumulate(grad)
    out._backward = _bw if out.requires_grad else None
    return out


# --- optimizer ---

@dataclass
class SgdConfig:
    """SGD with momentum, decoupled per-parameter velocity buffers."""

    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-5
    clip_norm: float = 5.0
    velocities: dict = field(default_factory=dict)

    def __post_init__(self):
        # Zero freezes parameters; useful in tests.
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")


def global_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.square(g, dtype=np.float64).sum())
    return float(np.sqrt(total))


def clip_global_norm(grads: dict, clip_norm: float) -> dict:
    """Scale all gradients so their global L2 norm is at most clip_norm."""
    norm = global_norm(grads)
    if norm > clip_norm:
        factor = clip_norm / norm
        for name in grads:
            grads[name] = grads[name] * np.asarray(factor, dtype=grads[name].dtype)
    return grads


def sgd_step(params, grads: dict, cfg: SgdConfig) -> None:
    """v <- momentum*v + grad (+ wd*param for decayed params); param -= lr*v.

    ``params`` provides named_parameters() yielding (name, Tensor, decay).
    Parameters without a gradient entry are treated as zero-gradient.
    """
    for name, tensor, decay in params.named_parameters():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(tensor.data)
        if decay and cfg.weight_decay:
            grad = grad + cfg.weight_decay * tensor.data
        velocity = cfg.velocities.get(name)
        if velocity is None:
            velocity = np.zeros_like(tensor.data)
        velocity = cfg.momentum * velocity + grad
        cfg.velocities[name] = velocity
        tensor.data -= np.asarray(cfg.learning_rate, dtype=tensor.data.dtype) * velocity
