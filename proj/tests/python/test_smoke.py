import json
import math
import os
import subprocess

import pytest

import ercfuse


def test_tokenize_lowercases_and_splits():
    toks = ercfuse.tokenize("Hello, World!")
    assert "hello" in toks and "world" in toks


def test_tfidf_is_unit_norm():
    docs = [ercfuse.tokenize(s) for s in ["good day", "bad day", "good good night"]]
    vocab = ercfuse.build_vocabulary(docs, min_df=1)
    assert len(vocab) > 0
    vec = ercfuse.tfidf_vector(docs[2], vocab)
    assert math.isclose(math.sqrt(sum(v * v for v in vec)), 1.0, rel_tol=1e-9)


def test_wav_round_trip_and_mfcc(tmp_path):
    rate = 16000
    tone = [0.5 * math.sin(2 * math.pi * 440 * i / rate) for i in range(rate)]
    path = tmp_path / "tone.wav"
    ercfuse.write_wav(path, tone, rate)
    samples, got_rate = ercfuse.read_wav(path)
    assert got_rate == rate
    assert max(abs(a - b) for a, b in zip(samples, tone)) < 1e-4
    frames = ercfuse.mfcc(samples, rate)
    assert len(frames) == 98 and len(frames[0]) == 13
    assert len(ercfuse.audio_features(samples, rate)) == 26
    assert len(ercfuse.resample(samples, rate, 8000)) == 8000


def test_bad_wav_raises():
    with pytest.raises(ercfuse.ErcfuseError):
        ercfuse.decode_wav(b"RIFF")
    assert issubclass(ercfuse.ErcfuseError, ValueError)


def test_train_and_predict():
    xs = [[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]]
    ys = [0, 0, 1, 1]
    model = ercfuse.train_softmax(xs, ys, ["joy", "anger"], learning_rate=0.5, epochs=200, seed=1)
    p = model.predict_proba([1.0, 0.0])
    assert math.isclose(sum(p), 1.0, rel_tol=1e-12)
    assert p[0] > p[1]
    assert len(model.loss_trace) == 200


def test_fusion_and_metrics():
    fused = ercfuse.weighted_average([[0.6, 0.4], [0.2, 0.8]], [0.5, 0.5])
    assert fused == pytest.approx([0.4, 0.6])
    assert ercfuse.plurality_vote([[0.5, 0.4, 0.1], [0.4, 0.6, 0.0]]) == 1
    with pytest.raises(ercfuse.ErcfuseError):
        ercfuse.weighted_average([[0.5, 0.5]], [0.3])
    assert len(ercfuse.simplex_grid(2, 10)) == 11
    pred = {"a": 0, "b": 1, "c": 1}
    gold = {"a": 0, "b": 0, "c": 1}
    assert ercfuse.accuracy(pred, gold) == pytest.approx(2 / 3)
    assert ercfuse.macro_f1(pred, gold, 2) == pytest.approx(2 / 3)
    assert ercfuse.confusion_matrix(pred, gold, 2) == [[1, 1], [0, 1]]
    names = [e["name"] for e in ercfuse.reference_baselines()]
    assert names[0] == "RoBERTa" and names[-1] == "ensemble"


def test_end_to_end_run(tmp_path):
    manifest = ercfuse.write_complementary_corpus(tmp_path / "corpus", per_class=10, seed=7)
    code, summary = ercfuse.validate(manifest)
    assert code == 0, summary
    train, test = ercfuse.stratified_split(manifest, 0.8, 42)
    assert len(train) + len(test) == sum(ercfuse.label_histogram(manifest).values())
    assert not set(train) & set(test)

    config = tmp_path / "run.json"
    config.write_text(json.dumps({"manifest": str(manifest), "fusion": {"method": "weighted_average"}}))
    result = ercfuse.run(config, seed=42, out_dir=tmp_path / "out")
    assert "artifacts.json" in result["artifacts"]
    by_name = {r["model_name"]: r for r in result["reports"]}
    fused = [r for name, r in by_name.items() if name.startswith("ensemble")]
    assert len(fused) == 1
    assert fused[0]["accuracy"] >= max(r["accuracy"] for r in by_name.values())


@pytest.mark.skipif("ERCFUSE_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_validate(tmp_path):
    manifest = ercfuse.write_complementary_corpus(tmp_path / "c", per_class=4)
    proc = subprocess.run([os.environ["ERCFUSE_CLI"], "validate", "--manifest", str(manifest)], capture_output=True)
    assert proc.returncode == 0, proc.stderr
