import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

import constprobe as cp

DATA = Path(os.environ.get("CONSTPROBE_DATA_DIR", Path(__file__).resolve().parents[2] / "data"))

EXAMPLE = (
    "(S (NP-SBJ (DT The) (NN luxury) (NN auto) (NN maker)) (NP-TMP (JJ last) (NN year))"
    " (VP (VBD sold) (NP (CD 1,214) (NNS cars)) (PP-LOC (IN in) (NP (DT the) (NNP U.S.)))))"
)


def fnv1a64(data: bytes) -> str:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return f"{h:016x}"


@pytest.fixture(scope="module")
def toy():
    return cp.read_treebank(str(DATA / "toy.mrg"))


def test_example_labels():
    (tree,) = cp.parse_treebank(EXAMPLE)
    assert len(tree) == 12
    assert "".join(cp.chunk_labels(tree)) == "BIIEBEBBEBBE"
    triples = cp.encode(cp.canonicalize(tree))
    assert [(l, d) for l, d, _ in triples][:4] == [("NP", "2"), ("NP", "0"), ("NP", "0"), ("S", "ROOT")]
    assert triples[-1][:2] == ("·", "·")
    assert cp.lca_label(tree, 0, 3) == "NP"


def test_codec_round_trip(toy):
    for tree in toy:
        canon = cp.canonicalize(tree)
        back = cp.decode(cp.encode(canon), canon.forms, canon.tags)
        assert str(back) == str(canon)
    canon = [cp.canonicalize(t) for t in toy]
    decoded = [cp.decode(cp.encode(t), t.forms, t.tags) for t in canon]
    assert cp.score(canon, decoded)["f1"] == 1.0


def test_sampler(toy):
    assert cp.allocate_sample([5, 100, 100], 60) == [5, 28, 27]
    f = cp.smoothed_frequencies([1, 3])
    assert f == pytest.approx([(0.25 + 0.5) / 2, (0.75 + 0.5) / 2])
    s = cp.sample_lca(toy, 200, seed=3)
    assert len(s["instances"]) == 200
    assert sum(s["counts"]) == 200
    with pytest.raises(cp.DataError, match="maximum"):
        cp.sample_lca(toy, 10**8)


def test_container_written_from_python(tmp_path, toy):
    layers, width = 3, 4
    rng = np.random.default_rng(0)
    sentences = []
    mats = []
    for k, tree in enumerate(toy):
        mat = rng.standard_normal((len(tree), layers * width)).astype("<f4")
        name = f"s{k:06d}.f32"
        raw = mat.tobytes(order="C")
        (tmp_path / name).write_bytes(raw)
        assert cp.fnv1a(raw) == fnv1a64(raw)
        sentences.append({"sentence_id": str(k), "token_count": len(tree), "file": name, "fnv1a64": fnv1a64(raw)})
        mats.append(mat)
    manifest = {
        "format": "constprobe-activations",
        "version": 1,
        "model_id": "numpy",
        "layer_count": layers,
        "width": width,
        "dtype": "float32",
        "byte_order": "little",
        "sentences": sentences,
    }
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    c = cp.Container.load(str(tmp_path))
    assert len(c) == len(toy) and c.layer_count == layers and c.width == width and c.model_id == "numpy"
    cp.check_alignment(c, toy)
    for k in (0, 7, len(toy) - 1):
        np.testing.assert_array_equal(c.matrix(k), mats[k])

    (tmp_path / "s000003.f32").write_bytes(b"\0" * len(mats[3].tobytes()))
    corrupted = cp.Container.load(str(tmp_path))
    with pytest.raises(cp.DataError, match="checksum"):
        corrupted.matrix(3)


def test_probe_on_planted_signal(toy):
    planted = [cp.chunk_labels(t) for t in toy]
    c = cp.synth_container(toy, mode="structured", width=8, layers=2, seed=4, signal_strength=20.0, planted=planted)
    rows = cp.chunk_dataset(toy)
    x = np.stack([c.matrix(s)[i] for s, i, _, _ in rows]).astype(np.float64)
    y = [label for *_, label in rows]
    probe = cp.train_matrix(x, y, epochs=30)
    assert probe.weights.shape == (len(probe.classes), 16)
    acc = np.mean(np.array(probe.predict(x)) == np.array(y))
    assert acc >= 0.99
    again = cp.train_matrix(x, y, epochs=30)
    np.testing.assert_array_equal(again.weights, probe.weights)

    ranking = cp.rank_neurons(probe)
    assert len(ranking) == 16
    assert sorted(ranking.order) == list(range(16))
    top = cp.select_subset(ranking, "top", 0.25)
    assert len(top) == 4 and top == sorted(top)
    assert cp.ranking_overlap(ranking, ranking, 0.3) == 1.0


def test_combine():
    a, b = [1.0, -3.0, 2.0], [-2.0, 1.0, 2.0]
    assert cp.combine(a, b, "max_s") == [-2.0, -3.0, 2.0]
    assert cp.combine(a, b, "avg") == [-0.5, -1.0, 2.0]
    assert cp.combine(a, b) == a + b
    assert cp.reconstruction_layers(13) == [3, 6, 9, 12]


def test_scoring():
    assert math.isclose(cp.pearson([1, 2, 3, 4, 5], [2, 4, 5, 4, 5]), 6 / math.sqrt(60), abs_tol=1e-12)
    assert cp.pearson([1, 2], [3, 3]) is None
    gold = cp.parse_treebank(EXAMPLE)
    flat = cp.parse_treebank("(S " + " ".join(f"({t} {w})" for w, t in zip(gold[0].forms, gold[0].tags)) + ")")
    s = cp.score(gold, flat)
    assert s["matched"] == 1 and s["predicted"] == 1
    with pytest.raises(cp.DataError):
        cp.score(gold, gold + gold)
    with pytest.raises(cp.DataError):
        cp.parse_treebank("(S (NP x)")
