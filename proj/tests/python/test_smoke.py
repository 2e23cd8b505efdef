import math

import numpy as np
import pytest

import ngcnn


def sentinel_corpus(docs=400, n=16, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    words = ["good", "bad"] + [f"w{i}" for i in range(60)]
    table = ngcnn.EmbeddingTable(words, rng.normal(0, 0.5, (len(words), dim)).astype(np.float32))
    tokens, labels = [], []
    for d in range(docs):
        doc = [words[i] for i in rng.integers(2, len(words), n)]
        label = d % 2
        for pos in rng.integers(0, n, 2):
            doc[pos] = "good" if label else "bad"
        tokens.append(doc)
        labels.append(label)
    return table, tokens, labels


def test_clean():
    assert ngcnn.clean("The movie <br/> was GREAT :-)") == ["movie", "was", "great", ":-)"]


def test_model_shapes_and_round_trip(tmp_path):
    cfg = ngcnn.Config(variant="pyramid", n=20, d=8, filters=4, dense=6)
    model = ngcnn.Model.build(cfg, seed=3)
    layers = model.summary()
    assert layers[-1][2] == [1]
    assert sum(layer[3] for layer in layers) == model.parameter_count
    doc = np.random.default_rng(1).normal(size=(20, 8)).astype(np.float32)
    p = model.predict(doc)
    assert 0.0 < p < 1.0
    path = tmp_path / "m.ckpt"
    model.save(str(path))
    back = ngcnn.Model.load(str(path))
    assert back.config == cfg
    assert back.predict(doc) == p


def test_shape_errors(tmp_path):
    with pytest.raises(ngcnn.ShapeError):
        ngcnn.Model.build(ngcnn.Config(n=8, R=4, d=4))
    with pytest.raises(ngcnn.InputError):
        ngcnn.Model.load("/nonexistent/model.ckpt")
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NGCX")
    with pytest.raises(ngcnn.CheckpointError):
        ngcnn.Model.load(str(bad))


def test_training_learns_sentinels():
    table, tokens, labels = sentinel_corpus()
    train, dev, test = ngcnn.split(labels, seed=1)
    pick = lambda idx, xs: [xs[i] for i in idx]  # noqa: E731
    model = ngcnn.Model.build(ngcnn.Config(n=16, d=8, filters=8, dense=16), seed=2)
    history = model.train(pick(train, tokens), pick(train, labels), table, epochs=15, batch=20, lr=0.01,
                          dev_docs=pick(dev, tokens), dev_labels=pick(dev, labels))
    assert len(history["epochs"]) == 15
    assert history["epochs"][-1][1] < history["initial_loss"]
    metrics = model.evaluate(pick(test, tokens), pick(test, labels), table)
    assert metrics["accuracy"] >= 0.9
    assert metrics["tp"] + metrics["fp"] + metrics["tn"] + metrics["fn"] == len(test)


def test_gradcheck():
    for variant in ("basic", "pyramid", "fluctuating"):
        assert ngcnn.gradcheck(variant, seed=4) < 1e-4


def test_embeddings():
    table = ngcnn.EmbeddingTable(["a", "b", "c", "d"], np.array(
        [[1, 0], [0, 1], [1, 1], [2, 1]], dtype=np.float32))
    assert len(table) == 4 and table.dim == 2 and "c" in table
    assert ngcnn.cosine([1, 0], [1, 1]) == pytest.approx(1 / math.sqrt(2))
    assert table.analogy("a", "c", "b", k=1)[0][0] in {"d"}
    m = table.embed(["a", "zz"], 3)
    assert m.shape == (3, 2)
    assert list(m[2]) == [0.0, 0.0]


def test_lexicon():
    lex = ngcnn.AffectLexicon({"joy": (8.0, 7.0), "calm": (7.0, 2.0)})
    v, a, hits = lex.score(["joy", "joy", "calm", "x"])
    assert hits == 3
    assert v == pytest.approx(23 / 3) and a == pytest.approx(16 / 3)
    assert lex.quadrant(["joy"]) == "happy"
    assert lex.quadrant(["calm"]) == "relaxed"
    assert lex.quadrant(["x"]) == "unknown"
    assert lex.polarity(["calm"]) == "positive"


def test_tag_rules():
    assert ngcnn.annotate_4q([4, 0, 0, 0]) == 0
    assert ngcnn.annotate_4q([1, 1, 0, 0]) is None
    assert ngcnn.count_tags(["Happy", "sad", "rock"]) == [1, 0, 1, 0]
    audit = ngcnn.purity_audit("pn", 40)
    assert audit["overall_min_purity"] == "16/19"
