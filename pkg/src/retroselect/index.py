"""Exact top-K cosine retrieval over the candidate pool's key embeddings.

Selection runs a float32 matrix-vector pass with a safety margin, then
rescopes the shortlisted rows in float64 per-row dot products, so results
are exactly the float64 cosine ranking with ascending-id tie-breaks while
the scan itself stays a single fast BLAS pass.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .encoder import ParamStore, embed_pool

HALT_ID = -1

_MAGIC = b"RCLX"
_VERSION = 1
_HEADER = struct.Struct("<4sIQIB")

# Float32 scan error is far below this; used to widen the shortlist.
_REFINE_MARGIN = 1e-4


class EmptyIndex(ValueError):
    pass


@dataclass
class CandidateIndex:
    """Immutable snapshot of unit-normalized key embeddings.

    ``keys`` has one row per candidate (input order) plus, when
    ``includes_halt``, a final row for the halt key (id -1, never stored on
    disk). Rows with zero-norm embeddings stay zero and are flagged.
    """

    keys: np.ndarray                  # [N (+1), d] float32, unit (or zero) rows
    ids: np.ndarray                   # [N] int64, unique, >= 0
    includes_halt: bool = False
    build_step: int = 0
    zero_mask: np.ndarray | None = None
    _row_of: dict[int, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if len(set(self.ids.tolist())) != self.ids.shape[0]:
            raise ValueError("candidate ids must be unique")
        if np.any(self.ids < 0):
            raise ValueError("candidate ids must be non-negative")
        expected_rows = self.ids.shape[0] + (1 if self.includes_halt else 0)
        if self.keys.shape[0] != expected_rows:
            raise ValueError(f"key rows {self.keys.shape[0]} != expected {expected_rows}")
        if self.zero_mask is None:
            self.zero_mask = np.zeros(self.keys.shape[0], dtype=bool)
        self._row_of = {int(mol_id): row for row, mol_id in enumerate(self.ids)}
        if self.includes_halt:
            self._row_of[HALT_ID] = self.keys.shape[0] - 1

    @property
    def n_candidates(self) -> int:
        return self.ids.shape[0]

    @property
    def dim(self) -> int:
        return self.keys.shape[1]

    def all_ids(self) -> np.ndarray:
        if self.includes_halt:
            return np.concatenate([self.ids, [HALT_ID]])
        return self.ids

    def row_for(self, mol_id: int) -> np.ndarray:
        return self.keys[self._row_of[mol_id]]

    def has_id(self, mol_id: int) -> bool:
        return mol_id in self._row_of

    # --- construction ---

    @classmethod
    def build(cls, params: ParamStore, candidates: list, candidate_ids=None,
              include_halt: bool = False, build_step: int = 0,
              batch_size: int = 512) -> "CandidateIndex":
        """Embed and normalize all candidate molecules, input order preserved."""
        if candidate_ids is None:
            candidate_ids = np.arange(len(candidates), dtype=np.int64)
        keys, zero_mask = embed_pool(candidates, params, batch_size=batch_size)
        if include_halt:
            keys, zero_mask = _append_halt(keys, zero_mask, params)
        return cls(keys, candidate_ids, include_halt, build_step, zero_mask)

    @classmethod
    def from_raw_keys(cls, raw: np.ndarray, candidate_ids=None,
                      halt_key: np.ndarray | None = None,
                      build_step: int = 0) -> "CandidateIndex":
        """Index over already-computed raw (unnormalized) key vectors."""
        raw = np.asarray(raw, dtype=np.float32)
        if candidate_ids is None:
            candidate_ids = np.arange(raw.shape[0], dtype=np.int64)
        keys, zero_mask = _normalize_rows(raw)
        if halt_key is not None:
            hk = np.asarray(halt_key, dtype=np.float32).reshape(1, -1)
            hkeys, hzero = _normalize_rows(hk)
            keys = np.vstack([keys, hkeys])
            zero_mask = np.concatenate([zero_mask, hzero])
        return cls(keys, candidate_ids, halt_key is not None, build_step, zero_mask)

    def with_halt(self, params: ParamStore) -> "CandidateIndex":
        """Derived snapshot with the current halt key appended (for search)."""
        if self.includes_halt:
            return self
        keys, zero_mask = _append_halt(self.keys, self.zero_mask, params)
        return CandidateIndex(keys, self.ids, True, self.build_step, zero_mask)

    # --- queries ---

    def query_topk(self, query: np.ndarray, k: int,
                   exclude=()) -> list[tuple[int, float]]:
        """K highest float64 cosine scores, descending, id-ascending ties.

        Returns fewer than K pairs if the non-excluded pool is smaller.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if self.keys.shape[0] == 0:
            raise EmptyIndex("index has no rows")
        query = np.asarray(query)
        all_ids = self.all_ids()
        valid = np.ones(self.keys.shape[0], dtype=bool)
        for mol_id in exclude:
            row = self._row_of.get(int(mol_id))
            if row is not None:
                valid[row] = False
        n_valid = int(valid.sum())
        if n_valid == 0:
            return []
        query64 = query.astype(np.float64)
        qn = np.linalg.norm(query64)
        if qn < 1e-12:
            # Convention: zero query scores 0 everywhere; ids break ties.
            chosen = np.flatnonzero(valid)
            chosen = chosen[np.argsort(all_ids[chosen], kind="stable")][:k]
            return [(int(all_ids[r]), 0.0) for r in chosen]
        approx = self.keys @ (query.astype(np.float32) / np.float32(qn))
        approx = np.where(valid, approx, -np.inf)
        k_eff = min(k, n_valid)
        kth = np.partition(approx, approx.shape[0] - k_eff)[approx.shape[0] - k_eff]
        shortlist = np.flatnonzero(approx >= kth - _REFINE_MARGIN)
        exact = np.empty(shortlist.shape[0], dtype=np.float64)
        for j, row in enumerate(shortlist):
            exact[j] = _exact_cosine(self.keys[row], query64, qn)
        order = np.lexsort((all_ids[shortlist], -exact))[:k_eff]
        return [(int(all_ids[shortlist[j]]), float(exact[j])) for j in order]


def _exact_cosine(row32: np.ndarray, query64: np.ndarray, qn: float) -> float:
    row = row32.astype(np.float64)
    rn = np.linalg.norm(row)
    if rn < 1e-12:
        return 0.0
    return float(np.dot(row, query64)) / (rn * qn)


def _normalize_rows(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(raw, axis=1)
    zero_mask = norms < 1e-12
    scale = np.where(zero_mask, 1.0, norms).astype(np.float32)
    return (raw / scale[:, None]).astype(np.float32), zero_mask


def _append_halt(keys: np.ndarray, zero_mask: np.ndarray,
                 params: ParamStore) -> tuple[np.ndarray, np.ndarray]:
    halt, hzero = _normalize_rows(
        params.tensors["halt_key"].data.astype(np.float32).reshape(1, -1))
    return np.vstack([keys, halt]), np.concatenate([zero_mask, hzero])


def hard_neighbors(index: CandidateIndex, anchor_ids, k: int,
                   embed_query=None) -> set[int]:
    """Union of each anchor's top-K nearest candidate ids, anchors excluded.

    Anchors absent from the index (e.g. products outside the pool) need
    ``embed_query(anchor_id) -> vector``.
    """
    if k <= 0:
        return set()
    out: set[int] = set()
    for anchor in sorted(int(a) for a in anchor_ids):
        if index.has_id(anchor):
            query = index.row_for(anchor)
        elif embed_query is not None:
            query = embed_query(anchor)
        else:
            raise KeyError(f"anchor {anchor} not in index and no embedder given")
        for mol_id, _ in index.query_topk(query, k, exclude={anchor, HALT_ID}):
            if mol_id != HALT_ID:
                out.add(mol_id)
    return out


def refresh(index: CandidateIndex, params: ParamStore,
            candidates: list) -> CandidateIndex:
    """New snapshot from current parameters; the old one stays valid."""
    return CandidateIndex.build(
        params, candidates, candidate_ids=index.ids,
        include_halt=index.includes_halt, build_step=index.build_step + 1)


# --- on-disk cache ---

def save_index(index: CandidateIndex, path: str) -> None:
    """RCLX cache: header, ids as u64 LE, then row-major float32 LE keys."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, index.n_candidates,
                              index.dim, 1 if index.includes_halt else 0))
        fh.write(index.ids.astype("<u8").tobytes())
        fh.write(np.ascontiguousarray(index.keys, dtype="<f4").tobytes())


class CorruptIndexCache(ValueError):
    pass


def load_index(path: str) -> CandidateIndex:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise CorruptIndexCache("truncated header")
    magic, version, n, d, halt_flag = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise CorruptIndexCache(f"bad magic {magic!r}")
    if version != _VERSION:
        raise CorruptIndexCache(f"unsupported index version {version}")
    rows = n + (1 if halt_flag else 0)
    offset = _HEADER.size
    ids_bytes = 8 * n
    keys_bytes = 4 * rows * d
    if len(blob) != offset + ids_bytes + keys_bytes:
        raise CorruptIndexCache("unexpected file size")
    ids = np.frombuffer(blob, dtype="<u8", count=n, offset=offset).astype(np.int64)
    keys = np.frombuffer(blob, dtype="<f4", count=rows * d,
                         offset=offset + ids_bytes).reshape(rows, d).copy()
    return CandidateIndex(keys, ids, bool(halt_flag), 0)
