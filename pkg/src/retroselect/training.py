"""Contrastive training over per-batch candidate sets with hard negatives.

Each step embeds every molecule of the batch candidate set inside the tape
(train-mode batch norm over all node rows), evaluates the backward
selection loss and the forward synthesizability loss per reaction, and
applies one clipped SGD update. The candidate index used for hard-negative
mining is rebuilt periodically from the current parameters.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import SgdConfig, Tensor
from .chem import featurize, pack
from .data import Corpus, MetricsLog, ReactionRecord
from .encoder import ModelDims, ParamStore, embed_graphs, init_params
from .index import HALT_ID, CandidateIndex, hard_neighbors


class ReactantNotInCandidates(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-5
    batch_size: int = 64
    clip_norm: float = 5.0
    total_iters: int = 200_000
    eval_every: int = 1000
    refresh_every: int = 1000
    tau: float = 0.1
    hard_k: int = 4
    seed: int = 0
    perm_threshold: int = 5
    # Whether the halt key competes in the backward softmax at every
    # selection step ("always") or only at the final halt step ("final").
    halt_in_denominator: str = "always"
    val_cap: int = 500
    val_beam: int = 32
    val_n_max: int = 4

    def __post_init__(self):
        for name in ("batch_size", "clip_norm", "tau"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.halt_in_denominator not in ("always", "final"):
            raise ValueError("halt_in_denominator must be 'always' or 'final'")


def batch_candidates(batch: list[ReactionRecord], index: CandidateIndex,
                     k: int, embed_query=None) -> list[int]:
    """Sorted batch candidate set: every batch molecule plus its top-k
    embedding neighbors from the pool."""
    base: set[int] = set()
    for record in batch:
        base.update(record.molecule_ids())
    mined = hard_neighbors(index, sorted(base), k, embed_query) if k > 0 else set()
    return sorted(base | mined)


@dataclass
class EmbedTable:
    """Tape embeddings of the batch candidate set, one row per molecule."""

    ids: list[int]
    f: Tensor
    g: Tensor
    h: Tensor
    row_of: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.row_of:
            self.row_of = {mol_id: row for row, mol_id in enumerate(self.ids)}


def build_embed_table(candidate_ids: list[int], corpus: Corpus,
                      params: ParamStore, mode: str = "train",
                      bundle_cache: dict | None = None) -> EmbedTable:
    bundles = []
    for mol_id in candidate_ids:
        if bundle_cache is not None and mol_id in bundle_cache:
            bundles.append(bundle_cache[mol_id])
        else:
            bundle = featurize(corpus.molecule(mol_id))
            if bundle_cache is not None:
                bundle_cache[mol_id] = bundle
            bundles.append(bundle)
    embeddings = embed_graphs(pack(bundles), params, mode)
    return EmbedTable(list(candidate_ids), embeddings["f"], embeddings["g"],
                      embeddings["h"])


def _row_vector(matrix: Tensor, row: int) -> Tensor:
    return ad.pick_row(matrix, row)


def _bias_row(params: ParamStore, table: str, rxn_type: int | None) -> Tensor | None:
    if rxn_type is None:
        return None
    if not 1 <= rxn_type <= params.dims.n_types:
        raise ValueError(f"reaction type {rxn_type} outside model range")
    return _row_vector(params.tensors[f"type.{table}"], rxn_type - 1)


def _selection_order(record: ReactionRecord, table: EmbedTable,
                     params: ParamStore, tau: float, perm_threshold: int,
                     halt_mode: str, class_ids: list[int],
                     u_row: np.ndarray | None) -> tuple[int, ...]:
    """Detached argmax over selection orders of the summed step log-probs.

    Exhaustive for small sets, greedy on the step selection score beyond;
    the loss tape then follows the returned order (the active branch of the
    permutation max). Ties keep the lexicographically smallest id sequence.
    """
    reactants = record.reactant_ids
    if len(reactants) == 1:
        return reactants
    class_rows = np.array([table.row_of[i] for i in class_ids], dtype=np.int64)
    f_p = table.f.data[table.row_of[record.product_id]].astype(np.float64)
    if u_row is not None:
        f_p = f_p + u_row
    g_rows = {i: table.g.data[table.row_of[i]].astype(np.float64) for i in reactants}
    h_keys = table.h.data[class_rows].astype(np.float64)
    halt = params.tensors["halt_key"].data.astype(np.float64)
    key_norms = np.linalg.norm(h_keys, axis=1)
    halt_norm = np.linalg.norm(halt)
    class_pos = {mol_id: j for j, mol_id in enumerate(class_ids)}

    def step_logps(query: np.ndarray) -> np.ndarray:
        qn = np.linalg.norm(query)
        if qn < 1e-12:
            sims = np.zeros(h_keys.shape[0])
            halt_sim = 0.0
        else:
            denom = np.where(key_norms < 1e-12, 1.0, key_norms * qn)
            sims = np.where(key_norms < 1e-12, 0.0, (h_keys @ query) / denom)
            halt_sim = 0.0 if halt_norm < 1e-12 else float(halt @ query) / (halt_norm * qn)
        if halt_mode == "always":
            scores = np.concatenate([sims, [halt_sim]]) / tau
        else:
            scores = sims / tau
        return scores - _logsumexp(scores)

    if len(reactants) <= perm_threshold:
        best_order, best_value = None, -np.inf
        for perm in itertools.permutations(reactants):
            query = f_p.copy()
            total = 0.0
            for chosen in perm:
                total += step_logps(query)[class_pos[chosen]]
                query = query - g_rows[chosen]
            if total > best_value:
                best_value, best_order = total, perm
        return best_order
    # Greedy on the raw selection score (argmax over remaining reactants of
    # the step log-prob equals argmax of the similarity, shared denominator).
    query = f_p.copy()
    remaining = list(reactants)
    order = []
    while remaining:
        sims = step_logps(query)
        pick = max(remaining, key=lambda i: (sims[class_pos[i]], -i))
        remaining.remove(pick)
        order.append(pick)
        query = query - g_rows[pick]
    return tuple(order)


def _logsumexp(scores: np.ndarray) -> float:
    high = scores.max()
    return float(np.log(np.exp(scores - high).sum()) + high)


def backward_class_ids(candidate_ids, product_id: int) -> list[int]:
    """Reactant classes of the backward softmax: candidates minus the product."""
    return [i for i in candidate_ids if i != product_id]


def forward_class_ids(candidate_ids, reactant_ids) -> list[int]:
    """Product classes of the forward softmax: candidates minus the reactants."""
    reactant_set = set(reactant_ids)
    return [i for i in candidate_ids if i not in reactant_set]


def loss_backward(record: ReactionRecord, table: EmbedTable, params: ParamStore,
                  tau: float, perm_threshold: int = 5,
                  halt_mode: str = "always") -> Tensor:
    """Negated best-order sum of step log-probs of selecting each true
    reactant (then halt) against the candidate keys."""
    class_ids = backward_class_ids(table.ids, record.product_id)
    missing = [i for i in record.reactant_ids if i not in set(class_ids)]
    if missing:
        raise ReactantNotInCandidates(f"reactants {missing} not in candidate set")
    class_rows = np.array([table.row_of[i] for i in class_ids], dtype=np.int64)
    class_pos = {mol_id: j for j, mol_id in enumerate(class_ids)}
    u_row_np = None
    u_bias = _bias_row(params, "u", record.rxn_type)
    if u_bias is not None:
        u_row_np = u_bias.data.astype(np.float64)
    order = _selection_order(record, table, params, tau, perm_threshold,
                             halt_mode, class_ids, u_row_np)

    keys = ad.gather_rows(table.h, class_rows)
    halt_key = params.tensors["halt_key"]
    query = _row_vector(table.f, table.row_of[record.product_id])
    if u_bias is not None:
        query = ad.add(query, u_bias)
    steps: list[Tensor] = []
    n = len(order)
    for step_index, chosen in enumerate(order + (HALT_ID,)):
        final = step_index == n
        include_halt = halt_mode == "always" or final
        sims = ad.cosine_scores(query, keys)
        if include_halt:
            scores = ad.concat1d([sims, ad.cosine(query, halt_key)])
        else:
            scores = sims
        target = scores.shape[0] - 1 if final else class_pos[chosen]
        steps.append(ad.log_softmax_pick(ad.scale(scores, 1.0 / tau), target))
        if not final:
            query = ad.sub(query, _row_vector(table.g, table.row_of[chosen]))
    total = steps[0]
    for term in steps[1:]:
        total = ad.add(total, term)
    return ad.scale(total, -1.0)


def loss_forward(record: ReactionRecord, table: EmbedTable, params: ParamStore,
                 tau: float) -> Tensor:
    """Negated log-prob of the true product against candidate products,
    scored by the summed reactant queries (halt is never a product)."""
    class_ids = forward_class_ids(table.ids, record.reactant_ids)
    class_rows = np.array([table.row_of[i] for i in class_ids], dtype=np.int64)
    target = class_ids.index(record.product_id)
    reactant_rows = np.array([table.row_of[i] for i in record.reactant_ids],
                             dtype=np.int64)
    query = ad.sum_rows(ad.gather_rows(table.g, reactant_rows))
    v_bias = _bias_row(params, "v", record.rxn_type)
    if v_bias is not None:
        query = ad.add(query, v_bias)
    scores = ad.scale(ad.cosine_scores(query, ad.gather_rows(table.h, class_rows)),
                      1.0 / tau)
    return ad.scale(ad.log_softmax_pick(scores, target), -1.0)


def _anchor_queries(batch: list[ReactionRecord], index: CandidateIndex,
                    corpus: Corpus, params: ParamStore,
                    bundle_cache: dict | None):
    """Batched eval h-embeddings for anchors outside the pool (products)."""
    missing = sorted({i for r in batch for i in r.molecule_ids()
                      if not index.has_id(i)})
    if not missing:
        return None
    bundles = []
    for mol_id in missing:
        if bundle_cache is not None and mol_id in bundle_cache:
            bundles.append(bundle_cache[mol_id])
        else:
            bundle = featurize(corpus.molecule(mol_id))
            if bundle_cache is not None:
                bundle_cache[mol_id] = bundle
            bundles.append(bundle)
    rows = embed_graphs(pack(bundles), params, "eval", heads=("h",))["h"].data
    vectors = {mol_id: rows[i] for i, mol_id in enumerate(missing)}
    return vectors.__getitem__


def train_step(batch: list[ReactionRecord], index: CandidateIndex,
               params: ParamStore, cfg: TrainConfig, corpus: Corpus,
               optimizer: SgdConfig, embed_query=None,
               bundle_cache: dict | None = None) -> dict:
    """One forward/backward/clip/update cycle; returns step metrics."""
    if embed_query is None and cfg.hard_k > 0:
        embed_query = _anchor_queries(batch, index, corpus, params, bundle_cache)
    candidate_ids = batch_candidates(batch, index, cfg.hard_k, embed_query)
    table = build_embed_table(candidate_ids, corpus, params, "train", bundle_cache)
    backward_terms = []
    forward_terms = []
    for record in batch:
        backward_terms.append(loss_backward(record, table, params, cfg.tau,
                                            cfg.perm_threshold,
                                            cfg.halt_in_denominator))
        forward_terms.append(loss_forward(record, table, params, cfg.tau))
    total = backward_terms[0]
    for term in backward_terms[1:] + forward_terms:
        total = ad.add(total, term)
    mean_loss = ad.scale(total, 1.0 / len(batch))
    params.zero_grad()
    ad.backward(mean_loss)
    grads = params.gradients()
    grad_norm = ad.global_norm(grads)
    ad.clip_global_norm(grads, cfg.clip_norm)
    ad.sgd_step(params, grads, optimizer)
    params.step += 1
    return {
        "loss_b": float(np.mean([t.item() for t in backward_terms])),
        "loss_f": float(np.mean([t.item() for t in forward_terms])),
        "grad_norm": grad_norm,
    }


class _BatchSampler:
    """Seeded shuffled-epoch sampler yielding fixed-size batches."""

    def __init__(self, records: list[ReactionRecord], batch_size: int, seed: int):
        self.records = records
        self.batch_size = min(batch_size, len(records))
        self.rng = np.random.default_rng(seed)
        self.queue: list[int] = []

    def next_batch(self) -> list[ReactionRecord]:
        while len(self.queue) < self.batch_size:
            self.queue.extend(self.rng.permutation(len(self.records)).tolist())
        picks, self.queue = self.queue[:self.batch_size], self.queue[self.batch_size:]
        return [self.records[i] for i in picks]


def train(corpus: Corpus, cfg: TrainConfig, dims: ModelDims | None = None,
          metrics: MetricsLog | None = None,
          checkpoint_path: str | None = None) -> ParamStore:
    """Full training loop; returns the best-validation parameter snapshot."""
    from .data import save_checkpoint
    from .search import Predictor

    dims = dims or ModelDims(n_types=max(corpus.n_types, 1))
    params = init_params(cfg.seed, dims)
    optimizer = SgdConfig(cfg.learning_rate, cfg.momentum,
                          cfg.weight_decay, cfg.clip_norm)
    metrics = metrics or MetricsLog()
    train_records = corpus.reactions.get("train", [])
    if not train_records:
        raise ValueError("corpus has no training reactions")
    if cfg.total_iters == 0:
        return params
    val_records = corpus.reactions.get("val") or train_records
    val_records = val_records[:cfg.val_cap]

    candidates = corpus.candidates()
    candidate_ids = np.asarray(corpus.candidate_ids, dtype=np.int64)
    bundle_cache: dict = {}
    sampler = _BatchSampler(train_records, cfg.batch_size, cfg.seed)
    index = CandidateIndex.build(params, candidates, candidate_ids, build_step=0)

    best_score = -1.0
    best_params = None
    for step in range(1, cfg.total_iters + 1):
        batch = sampler.next_batch()
        step_metrics = train_step(batch, index, params, cfg, corpus,
                                  optimizer, bundle_cache=bundle_cache)
        if step % cfg.refresh_every == 0 and step < cfg.total_iters:
            index = CandidateIndex.build(params, candidates, candidate_ids,
                                         build_step=index.build_step + 1)
        if step % cfg.eval_every == 0 or step == cfg.total_iters:
            predictor = Predictor(params, candidates, candidate_ids,
                                  forms=[corpus.form(i) for i in corpus.candidate_ids],
                                  beam=cfg.val_beam, n_max=cfg.val_n_max,
                                  perm_threshold=cfg.perm_threshold)
            hits = 0
            for record in val_records:
                predicted = predictor.predict_forms(
                    corpus.molecule(record.product_id), k=1,
                    rxn_type=record.rxn_type)
                truth = frozenset(corpus.form(i) for i in record.reactant_ids)
                if predicted and frozenset(predicted[0]) == truth:
                    hits += 1
            val_top1 = hits / max(1, len(val_records))
            step_metrics["val_top1"] = val_top1
            if val_top1 > best_score:
                best_score = val_top1
                best_params = params.copy()
                if checkpoint_path:
                    save_checkpoint(best_params, checkpoint_path,
                                    tau=cfg.tau, seed=cfg.seed)
        metrics.log(step=step, **step_metrics)
    return best_params if best_params is not None else params.copy()
