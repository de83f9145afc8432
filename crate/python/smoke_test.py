"""Smoke test for the pyseqembed extension.

Build first: pip install --no-build-isolation -e crates/python
"""

import json

import numpy as np

import pyseqembed as se


def check_svd():
    rng = np.random.default_rng(0)
    for shape in [(7, 4), (3, 9)]:
        a = rng.uniform(-1, 1, shape)
        u, s, v = (np.asarray(x) for x in se.svd(a.tolist()))
        np.testing.assert_allclose(u @ np.diag(s) @ v.T, a, atol=1e-10)
        np.testing.assert_allclose(s, np.linalg.svd(a, compute_uv=False), atol=1e-10)
        np.testing.assert_allclose(u.T @ u, np.eye(u.shape[1]), atol=1e-10)
    assert se.mode_count([3.0, 1.0, 0.0], 0.9) == 1


def check_metrics():
    assert se.ari([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    assert abs(se.matched_accuracy([0, 0, 1], [1, 1, 1]) - 2 / 3) < 1e-12
    labels = se.cluster([[1.0, 0.0], [1.0, 0.1], [0.0, 1.0], [0.1, 1.0]], 2)
    assert se.ari(labels, [0, 0, 1, 1]) == 1.0


def check_train():
    seqs, labels = se.gen_corpus(2, 40, 0)
    config = {
        "model": {"input_dim": 2, "hidden_dim": 4, "encoder_steps": 10, "decoder_steps": 10, "seed": 1},
        "iterations": 30,
        "snapshot_iters": [0, 30],
    }
    out = se.train(json.dumps(config), seqs, labels)
    assert len(out["train_loss"]) == 30
    assert out["snapshot_iterations"] == [0, 30]
    assert json.loads(out["model_json"])
    try:
        se.train(json.dumps({**config, "bogus": 1}), seqs, labels)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown config key accepted")


if __name__ == "__main__":
    check_svd()
    check_metrics()
    check_train()
    print("pyseqembed smoke test passed")
