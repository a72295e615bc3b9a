import json
import os
import pathlib

import numpy as np
import pytest

import wicl

SRC = pathlib.Path(os.environ.get("WICL_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))
TOY = SRC / "data/toy"


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    doc = json.loads((SRC / "data/configs/toy_skm.json").read_text())
    base = SRC / "data/configs"
    for key in ("model", "template", "train", "eval"):
        doc[key] = str((base / doc[key]).resolve())
    doc["tokenizer"]["vocab"] = str((base / doc["tokenizer"]["vocab"]).resolve())
    doc.update(shots=3, seeds=[0, 1], eval_cap=20)
    doc["output_dir"] = str(tmp_path_factory.mktemp("out"))
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    path.write_text(json.dumps(doc))
    return path


def test_forward_and_identity_intervention():
    model = wicl.Model.load(TOY / "manifest.json")
    tok = wicl.load_byte_tokenizer(TOY / "toy_vocab.json")
    ids = tok.encode("Sentence: fun plot Sentiment: positive\nSentence: dull")
    logits = model.forward(ids)
    assert logits.shape == (len(ids), model.config.vocab_size)
    assert logits.dtype == np.float32
    iv = wicl.Intervention("skm", [1.0, 1.0], [(0, 10), (10, 20)])
    assert np.array_equal(model.forward(ids, iv), logits)
    assert tok.decode(ids) == b"Sentence: fun plot Sentiment: positive\nSentence: dull"


def test_reweighting_primitives():
    out = wicl.apply_saw([0.6, 0.4], [(0, 1), (1, 2)], [1.2, 0.8])
    assert out == pytest.approx([0.69231, 0.30769], abs=1e-5)
    keys = np.ones((4, 2), dtype=np.float32)
    scaled = wicl.apply_skm(keys, [(1, 3)], [0.5])
    assert scaled[:, 0].tolist() == [1.0, 0.5, 0.5, 1.0]
    with pytest.raises(wicl.ConfigError):
        wicl.apply_saw([0.5, 0.5], [(0, 1)], [1.0, 1.0])


def test_search_with_python_scorer():
    target = [1.1, 0.9, 1.0]

    def score(w):
        return -sum(abs(a - b) for a, b in zip(w, target))

    beam = wicl.beam_search(score, 3, beam_size=27)
    exhaustive = wicl.brute_force(score, 3)
    assert beam["weights"] == pytest.approx(target)
    assert beam["weights"] == exhaustive["weights"]
    assert beam["scorer_calls"] <= 3 * 27 * 3
    assert len(exhaustive["trace"]) == 27


def test_pearson():
    assert wicl.pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert wicl.pearson([1, 2, 3], [1, 1, 1]) is None


def test_experiment(small_config):
    exp = wicl.Experiment(small_config)
    score, per_example = exp.msp(0, [1.0, 1.0, 1.0])
    assert len(per_example) == 3
    assert score == pytest.approx(sum(per_example) / 3)
    assert all(p <= 0 for p in per_example)
    found = exp.search(0)
    assert found["score"] >= found["msp_uniform"]
    report = json.loads(exp.run())
    assert [r["seed"] for r in report["rows"]] == [0, 1]
    assert len(report["aggregates"]["position_mean_weight"]) == 3
    assert report == wicl.run_experiment(small_config)
    samples, r = exp.correlate(5, 0)
    assert len(samples) == 5
    assert r is None or -1.0 <= r <= 1.0


def test_bad_config_raises(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"model": "x"}))
    with pytest.raises(wicl.ConfigError):
        wicl.Experiment(path)
    assert issubclass(wicl.ConfigError, wicl.Error)
