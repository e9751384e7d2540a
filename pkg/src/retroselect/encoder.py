"""Message-passing molecule encoder with separate query/key heads.

A shared L-layer trunk computes per-atom embeddings from atom and bond
features; three residual heads (``f`` product-query, ``g`` reactant-query,
``h`` key) sum-pool atoms into molecule vectors. Reaction-type bias rows
``u``/``v`` and the trainable halt key live alongside the network weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Scatter, Tensor
from .chem import D_ATOM, D_BOND, FeatureBundle, Molecule, PackedGraphs, featurize, pack

HEADS = ("f", "g", "h")


@dataclass(frozen=True)
class ModelDims:
    d_atom: int = D_ATOM
    d_bond: int = D_BOND
    d: int = 256
    n_layers: int = 5
    n_types: int = 10


@dataclass
class MolEmbedding:
    head: str
    vector: np.ndarray
    molecule_id: int | None = None


class ParamStore:
    """All trainable tensors plus batch-norm running statistics."""

    def __init__(self, dims: ModelDims, dtype=np.float32):
        self.dims = dims
        self.dtype = np.dtype(dtype)
        self.step = 0
        self.tensors: dict[str, Tensor] = {}
        self.bn_states: dict[str, BatchNormState] = {}
        self._no_decay: set[str] = set()

    # --- construction helpers ---

    def _add_weight(self, name: str, shape: tuple[int, ...], rng) -> None:
        fan_in = shape[0]
        bound = 1.0 / np.sqrt(fan_in)
        data = rng.uniform(-bound, bound, size=shape).astype(self.dtype)
        self.tensors[name] = ad.parameter(data)

    def _add_zeros(self, name: str, shape: tuple[int, ...], decay: bool = False) -> None:
        self.tensors[name] = ad.parameter(np.zeros(shape, dtype=self.dtype))
        if not decay:
            self._no_decay.add(name)

    def _add_bn(self, name: str) -> None:
        self.bn_states[name] = BatchNormState.create(self.dims.d, dtype=self.dtype)

    # --- parameter access ---

    def named_parameters(self):
        """Yields (name, tensor, decay) in a fixed deterministic order."""
        for name, tensor in self.tensors.items():
            yield name, tensor, name not in self._no_decay
        for bn_name, state in self.bn_states.items():
            yield f"{bn_name}.gamma", state.gamma, False
            yield f"{bn_name}.beta", state.beta, False

    def zero_grad(self) -> None:
        for _, tensor, _ in self.named_parameters():
            tensor.grad = None

    def gradients(self) -> dict[str, np.ndarray]:
        """Gradient map after a backward pass; unreached parameters are zero."""
        out = {}
        for name, tensor, _ in self.named_parameters():
            out[name] = tensor.grad if tensor.grad is not None \
                else np.zeros_like(tensor.data)
        return out

    def num_parameters(self) -> int:
        return sum(t.data.size for _, t, _ in self.named_parameters())

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Every persistent array: parameters plus BN running statistics."""
        out = {name: t.data for name, t, _ in self.named_parameters()}
        for bn_name, state in self.bn_states.items():
            out[f"{bn_name}.running_mean"] = state.running_mean
            out[f"{bn_name}.running_var"] = state.running_var
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        expected = self.state_arrays()
        unknown = set(arrays) - set(expected)
        if unknown:
            raise KeyError(f"unknown tensors in state: {sorted(unknown)[:4]}")
        missing = set(expected) - set(arrays)
        if missing:
            raise KeyError(f"missing tensors in state: {sorted(missing)[:4]}")
        for name, value in arrays.items():
            target = expected[name]
            if target.shape != value.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{target.shape} vs {value.shape}")
            target[...] = value

    def copy(self) -> "ParamStore":
        clone = ParamStore(self.dims, self.dtype)
        _populate(clone, np.random.default_rng(0))
        clone.load_state_arrays({k: v.copy() for k, v in self.state_arrays().items()})
        clone.step = self.step
        return clone


def _populate(params: ParamStore, rng) -> None:
    dims = params.dims
    d, d_atom, d_bond = dims.d, dims.d_atom, dims.d_bond
    params._add_weight("trunk.w0_atom", (d_atom, d), rng)
    params._add_zeros("trunk.b0", (d,))
    params._add_weight("trunk.w0_bond", (d_bond, d), rng)
    params._add_bn("trunk.bn0")
    for layer in range(1, dims.n_layers + 1):
        prefix = f"trunk.l{layer}"
        params._add_weight(f"{prefix}.w1", (d, d), rng)
        params._add_zeros(f"{prefix}.b1", (d,))
        params._add_weight(f"{prefix}.w_bond", (d_bond, d), rng)
        params._add_bn(f"{prefix}.bn1")
        params._add_weight(f"{prefix}.w2", (d, d), rng)
        params._add_zeros(f"{prefix}.b2", (d,))
        params._add_bn(f"{prefix}.bn2")
    params._add_weight("trunk.w_last", (d, d), rng)
    params._add_zeros("trunk.b_last", (d,))
    for head in HEADS:
        prefix = f"head.{head}"
        params._add_weight(f"{prefix}.w1", (d, d), rng)
        params._add_zeros(f"{prefix}.b1", (d,))
        params._add_bn(f"{prefix}.bn1")
        params._add_weight(f"{prefix}.w2", (d, d), rng)
        params._add_zeros(f"{prefix}.b2", (d,))
        params._add_bn(f"{prefix}.bn2")
    params._add_zeros("type.u", (dims.n_types, d))
    params._add_zeros("type.v", (dims.n_types, d))
    params._add_weight("halt_key", (d,), rng)


def init_params(seed: int, dims: ModelDims | None = None, dtype=np.float32) -> ParamStore:
    """Uniform fan-in initialized weights; biases and type biases zero."""
    dims = dims or ModelDims()
    params = ParamStore(dims, dtype)
    _populate(params, np.random.default_rng(seed))
    return params


# --- forward passes ---

class _GraphOps:
    """Cached scatter structure for one packed graph batch."""

    def __init__(self, packed: PackedGraphs):
        n = packed.atom_features.shape[0]
        self.dst = Scatter(packed.edge_dst, n)
        self.src = Scatter(packed.edge_src, n)
        self.pool = Scatter(packed.mol_ids, packed.n_mols)


def _as_packed(feats) -> PackedGraphs:
    if isinstance(feats, PackedGraphs):
        return feats
    if isinstance(feats, FeatureBundle):
        return pack([feats])
    raise TypeError(f"expected FeatureBundle or PackedGraphs, got {type(feats)}")


def embed_nodes(feats, params: ParamStore, mode: str = "eval",
                ops: _GraphOps | None = None) -> Tensor:
    """Per-atom embedding matrix [n_atoms, d] for a (packed) graph batch."""
    packed = _as_packed(feats)
    if packed.atom_features.shape[1] != params.dims.d_atom:
        raise ad.ShapeMismatch("atom feature width does not match parameters")
    if packed.bond_features.shape[1] != params.dims.d_bond:
        raise ad.ShapeMismatch("bond feature width does not match parameters")
    ops = ops or _GraphOps(packed)
    t = params.tensors
    x_atom = ad.constant(packed.atom_features, params.dtype)
    x_bond = ad.constant(packed.bond_features, params.dtype)

    bond_term = ad.segment_sum(ad.linear(x_bond, t["trunk.w0_bond"]), ops.dst)
    h = ad.relu(ad.batchnorm(
        ad.add(ad.linear(x_atom, t["trunk.w0_atom"], t["trunk.b0"]), bond_term),
        params.bn_states["trunk.bn0"], mode))
    for layer in range(1, params.dims.n_layers + 1):
        prefix = f"trunk.l{layer}"
        neighbor_sum = ad.segment_sum(ad.gather_rows(h, ops.src), ops.dst)
        bond_term = ad.segment_sum(ad.linear(x_bond, t[f"{prefix}.w_bond"]), ops.dst)
        stage1 = ad.relu(ad.batchnorm(
            ad.add(ad.linear(neighbor_sum, t[f"{prefix}.w1"], t[f"{prefix}.b1"]),
                   bond_term),
            params.bn_states[f"{prefix}.bn1"], mode))
        h = ad.relu(ad.batchnorm(
            ad.add(ad.linear(stage1, t[f"{prefix}.w2"], t[f"{prefix}.b2"]), h),
            params.bn_states[f"{prefix}.bn2"], mode))
    return ad.linear(h, t["trunk.w_last"], t["trunk.b_last"])


def head_embeddings(node_matrix: Tensor, head: str, params: ParamStore,
                    mode: str, pool: Scatter) -> Tensor:
    """Sum-pooled residual head on top of trunk node embeddings: [m, d]."""
    if head not in HEADS:
        raise ValueError(f"unknown head {head!r}")
    t = params.tensors
    prefix = f"head.{head}"
    z = ad.relu(node_matrix)
    z = ad.relu(ad.batchnorm(ad.linear(z, t[f"{prefix}.w1"], t[f"{prefix}.b1"]),
                             params.bn_states[f"{prefix}.bn1"], mode))
    z = ad.batchnorm(ad.linear(z, t[f"{prefix}.w2"], t[f"{prefix}.b2"]),
                     params.bn_states[f"{prefix}.bn2"], mode)
    return ad.segment_sum(ad.add(node_matrix, z), pool)


def embed_graphs(feats, params: ParamStore, mode: str = "eval",
                 heads=HEADS) -> dict[str, Tensor]:
    """Molecule embeddings for each requested head, rows in input order."""
    packed = _as_packed(feats)
    ops = _GraphOps(packed)
    nodes = embed_nodes(packed, params, mode, ops)
    return {head: head_embeddings(nodes, head, params, mode, ops.pool)
            for head in heads}


def embed_molecule(mol: Molecule, head: str, params: ParamStore,
                   mode: str = "eval", molecule_id: int | None = None) -> MolEmbedding:
    """Embedding vector of one molecule under one head (type bias is applied
    later, at query assembly)."""
    out = embed_graphs(featurize(mol), params, mode, heads=(head,))[head]
    return MolEmbedding(head, out.data[0].copy(), molecule_id)


def embed_matrix(mols: list[Molecule], params: ParamStore, head: str,
                 batch_size: int = 512) -> np.ndarray:
    """Raw (unnormalized) eval-mode embeddings, one row per molecule."""
    out = np.zeros((len(mols), params.dims.d), dtype=np.float32)
    for start in range(0, len(mols), batch_size):
        chunk = mols[start:start + batch_size]
        packed = pack([featurize(m) for m in chunk])
        rows = embed_graphs(packed, params, "eval", heads=(head,))[head]
        out[start:start + len(chunk)] = rows.data.astype(np.float32)
    return out


def embed_pool(mols: list[Molecule], params: ParamStore,
               batch_size: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Unit-normalized key (h-head) embeddings for a candidate pool.

    Returns (keys, zero_mask): rows in input order, zero-norm rows are left
    as zero and flagged in the mask. Eval mode only.
    """
    keys = embed_matrix(mols, params, "h", batch_size)
    norms = np.linalg.norm(keys, axis=1)
    zero_mask = norms < ad.ZERO_NORM_EPS
    scale = np.where(zero_mask, 1.0, norms).astype(np.float32)
    keys /= scale[:, None]
    return keys, zero_mask


def type_bias(params: ParamStore, table: str, rxn_type: int | None) -> np.ndarray | None:
    """Row of the u (backward) or v (forward) bias table for a 1-based type."""
    if rxn_type is None:
        return None
    if table not in ("u", "v"):
        raise ValueError(f"bias table must be 'u' or 'v', got {table!r}")
    n_types = params.dims.n_types
    if not 1 <= rxn_type <= n_types:
        raise ValueError(f"reaction type {rxn_type} outside [1, {n_types}]")
    return params.tensors[f"type.{table}"].data[rxn_type - 1]
