"""End-to-end smoke checks of the pybind11 module against frozen values."""

import math

import numpy as np
import pytest

import quartermap as qm


def test_softplus_frozen():
    assert qm.softplus(0.0) == pytest.approx(math.log(2.0), rel=1e-6)
    assert qm.softplus(-100.0) > 0.0


def test_zoh_frozen_example():
    a_bar, b_bar = qm.zoh_discretize(1.0, -1.0, 2.0)
    assert a_bar == pytest.approx(0.3678794, rel=1e-5)
    assert b_bar == pytest.approx(1.2642410, rel=1e-5)


def test_selective_scan_parallel_matches_sequential():
    rng = np.random.default_rng(7)
    u = rng.standard_normal((257, 3)).astype(np.float32)
    y_par = qm.selective_scan(u, n_state=8, seed=5, parallel=True)
    y_seq = qm.selective_scan(u, n_state=8, seed=5, parallel=False)
    assert y_par.shape == (257, 3)
    rel = np.abs(y_par - y_seq) / np.maximum(np.abs(y_seq), 1e-6)
    assert float(rel.max()) <= 1e-5


def test_cross_scan_frozen_and_round_trip():
    x = np.arange(1, 5, dtype=np.float32).reshape(2, 2, 1)
    seqs = qm.cross_scan(x)
    assert [s.ravel().tolist() for s in seqs] == [
        [1, 2, 3, 4],
        [4, 3, 2, 1],
        [1, 3, 2, 4],
        [4, 2, 3, 1],
    ]
    back = qm.cross_merge(seqs, 2, 2)
    assert np.array_equal(back, 4.0 * x)

    y = np.random.default_rng(3).standard_normal((5, 7, 2)).astype(np.float32)
    assert np.array_equal(qm.cross_merge(qm.cross_scan(y), 5, 7), 4.0 * y)


def test_retained_indices_and_prune_shape():
    assert qm.retained_indices(7, 2, 1) == [0, 2, 4, 6]
    x = np.zeros((9, 13, 4), dtype=np.float32)
    pruned = qm.prune(x, m=4, n=1)
    assert pruned.shape == (3, 4, 4)  # ceil(9/4), ceil(13/4), D


def test_upsample_identity_and_modes():
    x = np.random.default_rng(11).standard_normal((4, 5, 2)).astype(np.float32)
    for mode in ("nearest", "bilinear", "bicubic"):
        assert np.array_equal(qm.upsample(x, 4, 5, mode=mode), x)
    up = qm.upsample(x, 8, 10, mode="nearest")
    assert up.shape == (8, 10, 2)
    with pytest.raises(ValueError):
        qm.upsample(x, 2, 5, mode="nearest")


def test_quartermap_ss2d_preserves_shape():
    x = np.random.default_rng(13).standard_normal((8, 8, 3)).astype(np.float32)
    y = qm.quartermap_ss2d(x, m=2, n=1, upsample="bilinear", n_state=4, seed=9)
    assert y.shape == (8, 8, 3)
    assert np.isfinite(y).all()
    # m=1 keeps every token: identical to the plain block.
    same = qm.quartermap_ss2d(x, m=1, n=1, n_state=4, seed=9)
    plain = qm.ss2d_forward(x, n_state=4, seed=9)
    assert np.array_equal(same, plain)


def test_should_prune_frozen_set():
    depths = [2, 2, 8, 2]
    pruned = []
    g = 0
    for layer in range(1, 5):
        for b in range(depths[layer - 1]):
            if qm.should_prune(g, layer, b, depths[0], k=3):
                pruned.append(g)
            g += 1
    assert pruned == [4, 7, 10, 13]


def test_forward_features_shapes():
    rng = np.random.default_rng(17)
    batch = [rng.standard_normal((64, 64, 3)).astype(np.float32) for _ in range(2)]
    out = qm.forward_features("micro", batch, seed=1)
    assert len(out) == 2
    for y in out:
        assert y.shape == (2, 2, 64)
        assert np.isfinite(y).all()

    qm_out = qm.forward_features(
        "micro",
        batch,
        seed=1,
        use_qm=True,
        k=1,
        m=2,
        n=1,
        skip_policy="first-two",
    )
    assert len(qm_out) == 2
    assert qm_out[0].shape == (2, 2, 64)
    # m=1 retains everything: bit-identical to the unpruned forward.
    ident = qm.forward_features("micro", batch, seed=1, use_qm=True, m=1, n=1)
    assert all(np.array_equal(a, b) for a, b in zip(ident, out))


def test_run_validation_clean():
    checks = qm.run_validation(seed=3)
    assert len(checks) == 5
    assert all(c["passed"] for c in checks)
    suites = {c["suite"] for c in checks}
    assert suites == {
        "scan_equivalence",
        "round_trip",
        "idempotence",
        "shape_law",
        "flop_consistency",
    }


def test_run_validation_injection_fails_named_suite():
    checks = qm.run_validation(seed=3, inject="prune-phase")
    failed = [c for c in checks if not c["passed"]]
    assert len(failed) == 1
    assert failed[0]["suite"] == "idempotence"
    assert failed[0]["module"] == "quartermap"
