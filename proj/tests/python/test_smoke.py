import json
import os

import numpy as np
import pytest

import ragpoison


def small_config(**overrides):
    cfg = {
        "seed": 3,
        "trials": 1,
        "queries": {"count": 3, "references_per_query": 20},
        "attack": {"N": 2, "t": 5},
        "kb": {"synth": {"num_entries": 80, "num_classes": 3, "sections_per_entry": 2}},
    }
    cfg.update(overrides)
    return cfg


def test_embeddings_are_unit_norm():
    b = ragpoison.ToyBackend()
    rng = np.random.default_rng(0)
    img = rng.random((32, 32, 3))
    for v in (b.embed_image(img), b.embed_text("red lantern harbor"), b.embed_fused(img, "red lantern")):
        assert v.shape == (128,)
        assert abs(np.linalg.norm(v) - 1.0) < 1e-9


def test_gradient_matches_finite_differences():
    b = ragpoison.ToyBackend()
    rng = np.random.default_rng(1)
    img = rng.random((16, 16, 3))
    target = b.embed_image(rng.random((16, 16, 3)))
    grad = b.image_cos_grad(img, target)
    h = 1e-4
    for idx in [(0, 0, 0), (5, 7, 1), (15, 3, 2)]:
        up, down = img.copy(), img.copy()
        up[idx] += h
        down[idx] -= h
        fd = (target @ b.embed_image(up) - target @ b.embed_image(down)) / (2 * h)
        assert abs(fd - grad[idx]) < 1e-6


def test_bad_inputs_raise_value_error():
    b = ragpoison.ToyBackend()
    with pytest.raises(ValueError):
        b.embed_image(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        b.embed_text("")
    with pytest.raises(ValueError):
        ragpoison.run_experiment({"trials": 0})
    with pytest.raises(ValueError):
        ragpoison.run_experiment({"bogus": 1})


def test_defenses():
    img = np.full((32, 32, 3), 0.5)
    out = ragpoison.preprocess(img, seed=4)
    assert out.shape == img.shape
    assert np.array_equal(out, ragpoison.preprocess(img, seed=4))
    q = "What does this symbol represent?"
    assert ragpoison.paraphrase(q, seed=1)


def test_experiment_is_deterministic_and_writes_outputs(tmp_path):
    a = ragpoison.run_experiment(small_config(), out=tmp_path / "a")
    b = ragpoison.run_experiment(small_config())
    assert 0.0 <= a["summary"]["asr"] <= 1.0
    assert _strip(a["summary"]) == _strip(b["summary"])
    assert len(a["records"]) == 3
    for f in ("report.json", "records.csv", "report.md", "attack_manifest.json"):
        assert (tmp_path / "a" / f).exists()
    saved = json.loads((tmp_path / "a" / "report.json").read_text())
    assert saved["summary"]["asr"] == a["summary"]["asr"]


def _strip(d):
    return {k: v for k, v in d.items() if not k.endswith("_seconds")}


def test_kb_craft_inject_dedup(tmp_path):
    kb = tmp_path / "kb"
    assert ragpoison.synth_kb(kb, entries=60, classes=3, sections=2, seed=2) == 3
    assert ragpoison.kb_summary(kb) == {"entries": 60, "malicious": 0, "queries": 3}
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "trials": 1,
        "queries": {"count": 3, "references_per_query": 20},
        "attack": {"N": 2, "t": 5},
        "kb": {"path": "kb"},
    }))
    n = ragpoison.craft_attack(cfg, tmp_path / "craft")
    assert n == 6
    assert (tmp_path / "craft" / "entries.jsonl").exists()
    assert ragpoison.inject(kb, tmp_path / "craft", tmp_path / "poisoned") == n
    assert ragpoison.kb_summary(tmp_path / "poisoned")["malicious"] == n
    stats = ragpoison.dedup(tmp_path / "poisoned", tmp_path / "clean")
    assert stats["malicious_sections_removed"] == 0


@pytest.mark.skipif("RAGPOISON_MOCK" not in os.environ, reason="mock backend not built")
def test_probe_against_mock():
    report = ragpoison.probe("stdio:" + os.environ["RAGPOISON_MOCK"])
    assert report["passed"]
    assert report["dim"] == 128
    assert len(report["steps"]) == 7
    bad = ragpoison.probe("stdio:" + os.environ["RAGPOISON_MOCK"] + " --bad-norm")
    assert not bad["passed"]
