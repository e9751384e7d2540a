import numpy as np
import pytest

from retroselect.chem import canonical_form, parse_smiles
from retroselect.data import (Corpus, CorpusError, CorruptCheckpoint, MetricsLog,
                              load_checkpoint, load_corpus, save_checkpoint,
                              topk_exact_match)
from retroselect.encoder import ModelDims, init_params


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_interning_dedup(tmp_path):
    train = write(tmp_path / "train.txt",
                  "CCO.CC(=O)O>>CC(=O)OCC\nOCC.CC(=O)O>>CCOC(C)=O\n")
    corpus = load_corpus({"train": train})
    # Same molecules written differently intern to the same ids, so the
    # second line is a duplicate reaction.
    assert corpus.stats["duplicates_dropped"] == 1
    assert len(corpus.reactions["train"]) == 1
    assert corpus.id_of[canonical_form(parse_smiles("CCO"))] == \
        corpus.id_of[canonical_form(parse_smiles("OCC"))]


def test_candidate_pool_modes(tmp_path):
    train = write(tmp_path / "train.txt", "CCO.CC>>CCOCC\nCC.CN>>CCNC\n")
    derived = load_corpus({"train": train})
    # Independent recount: distinct canonical reactants straight off the file.
    seen = set()
    for line in open(train, encoding="utf-8"):
        for part in line.strip().split(">>")[0].split("."):
            seen.add(canonical_form(parse_smiles(part)))
    assert len(derived.candidate_ids) == len(seen) == 3

    cand = write(tmp_path / "cands.txt", "CCO\nOCC\nCC\n# comment\nCN\nCCCC\n")
    explicit = load_corpus({"train": train}, candidates_path=cand)
    assert len(explicit.candidate_ids) == 4  # OCC deduped into CCO


def test_self_product_and_comments(tmp_path):
    train = write(tmp_path / "train.txt",
                  "# header\nCCO>>CCO\nCC.CO>>CCCO\n\n")
    corpus = load_corpus({"train": train})
    assert corpus.stats["self_product_dropped"] == 1
    assert len(corpus.reactions["train"]) == 1


def test_reaction_types_counted(tmp_path):
    train = write(tmp_path / "train.txt", "CC.CO>>CCCO\t3\nCC.CN>>CCNC\t7\n")
    corpus = load_corpus({"train": train})
    assert corpus.n_types == 7
    assert corpus.reactions["train"][0].rxn_type == 3


def test_parse_error_threshold(tmp_path):
    train = write(tmp_path / "train.txt", "CC.CO>>CCCO\nnot a reaction\n")
    with pytest.raises(CorpusError):
        load_corpus({"train": train})
    lines = "".join("CC.CO>>CCCO\t%d\n" % i for i in range(1, 200))
    ok = write(tmp_path / "ok.txt", lines + "garbage!!!\n")
    corpus = load_corpus({"train": ok})  # 1/200 = 0.5% tolerated
    assert corpus.stats["parse_errors"] == 1


def test_empty_candidate_file(tmp_path):
    train = write(tmp_path / "train.txt", "CC.CO>>CCCO\n")
    cand = write(tmp_path / "cands.txt", "# nothing\n")
    with pytest.raises(CorpusError):
        load_corpus({"train": train}, candidates_path=cand)


def test_records_exclude_product_and_sorted(tmp_path):
    train = write(tmp_path / "train.txt", "CO.CC>>CCCO\n")
    corpus = load_corpus({"train": train})
    record = corpus.reactions["train"][0]
    assert record.reactant_ids == tuple(sorted(record.reactant_ids))
    assert record.product_id not in record.reactant_ids


# --- checkpoints ---

def test_checkpoint_round_trip_bitwise(tmp_path):
    params = init_params(3, ModelDims(d=8, n_layers=2, n_types=2))
    params.step = 77
    path = tmp_path / "model.rclc"
    save_checkpoint(params, str(path), tau=0.1, seed=3)
    blob = path.read_bytes()
    assert blob[:4] == b"RCLC"
    loaded, meta = load_checkpoint(str(path))
    assert meta["step"] == 77 and meta["seed"] == 3
    assert loaded.step == 77
    for name, arr in params.state_arrays().items():
        assert np.array_equal(arr, loaded.state_arrays()[name]), name
    save_checkpoint(loaded, str(tmp_path / "again.rclc"), tau=0.1, seed=3)
    assert (tmp_path / "again.rclc").read_bytes() == blob


def test_checkpoint_shapes_match_init(tmp_path):
    dims = ModelDims(d=8, n_layers=2, n_types=2)
    params = init_params(5, dims)
    path = tmp_path / "model.rclc"
    save_checkpoint(params, str(path))
    loaded, _ = load_checkpoint(str(path))
    fresh = init_params(99, dims)
    for name, arr in fresh.state_arrays().items():
        assert loaded.state_arrays()[name].shape == arr.shape


def test_checkpoint_corruption(tmp_path):
    params = init_params(1, ModelDims(d=4, n_layers=1, n_types=1))
    path = tmp_path / "model.rclc"
    save_checkpoint(params, str(path))
    blob = path.read_bytes()
    (tmp_path / "trunc.rclc").write_bytes(blob[:-9])
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(str(tmp_path / "trunc.rclc"))
    (tmp_path / "magic.rclc").write_bytes(b"NOPE" + blob[4:])
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(str(tmp_path / "magic.rclc"))
    (tmp_path / "tail.rclc").write_bytes(blob + b"xx")
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(str(tmp_path / "tail.rclc"))


def test_load_state_rejects_unknown_tensor():
    params = init_params(0, ModelDims(d=4, n_layers=1, n_types=1))
    state = params.state_arrays()
    state["mystery"] = np.zeros(3)
    with pytest.raises(KeyError):
        params.load_state_arrays(state)


# --- evaluation ---

def test_topk_exact_match_cases():
    truth = [("CCO", "CC"), ("CN",)]
    predictions = [
        [("CC", "CCO"), ("CC",)],          # hit at rank 1 (order inside set free)
        [("CC",), ("CO",), ("CN",)],       # hit at rank 3
    ]
    table = topk_exact_match(predictions, truth, [1, 3, 5])
    assert table[1] == 0.5
    assert table[3] == 1.0
    assert table[5] == 1.0


def test_topk_no_hit_and_monotone():
    truth = [("CCO",)]
    predictions = [[("CC",), ("CN",)]]
    table = topk_exact_match(predictions, truth, [1, 3, 5, 10])
    assert all(v == 0.0 for v in table.values())
    truth = [("CCO",), ("CC",)]
    predictions = [[("CCO",)], [("X",), ("CC",)]]
    table = topk_exact_match(predictions, truth, [1, 2, 3])
    values = [table[k] for k in (1, 2, 3)]
    assert values == sorted(values)


def test_metrics_log(tmp_path):
    log = MetricsLog(str(tmp_path / "metrics.jsonl"))
    log.log(step=1, loss_b=2.0, loss_f=1.0, grad_norm=0.5)
    log.log(step=2, loss_b=1.5, loss_f=0.9, grad_norm=0.4, val_top1=0.25)
    lines = (tmp_path / "metrics.jsonl").read_text().strip().split("\n")
    assert len(lines) == 2
    import json
    record = json.loads(lines[1])
    assert record["step"] == 2 and record["val_top1"] == 0.25
