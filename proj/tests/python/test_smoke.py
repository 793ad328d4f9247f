"""End-to-end smoke tests for the python bindings."""

import math

import pytest

import hiercp

TREE = """\
Windows\t
Linux\t
Android\t
Windows 10\tWindows
Windows 11\tWindows
Windows 7\tWindows
Ubuntu\tLinux
Android 11\tAndroid
Android 12\tAndroid
Windows 10 22H2\tWindows 10
Windows 11 23H2\tWindows 11
Ubuntu 22.04\tUbuntu
Android 12L\tAndroid 12
"""


@pytest.fixture(scope="module")
def tree():
    return hiercp.Taxonomy.parse(TREE)


def test_taxonomy_structure(tree):
    assert tree.depth == 3
    assert tree.node_count == 13
    leaves = tree.leaves()
    assert "Windows 7" in leaves  # branch terminating early is a leaf
    assert "Windows 10 22H2" in leaves
    assert tree.ancestor_at_level("Windows 10 22H2", 1) == "Windows"
    assert tree.ancestor_at_level("Windows 7", 3) is None
    assert tree.parent_of("Windows") is None
    assert set(tree.leaf_descendants("Windows")) == {
        "Windows 10 22H2",
        "Windows 11 23H2",
        "Windows 7",
    }


def test_taxonomy_errors():
    with pytest.raises(ValueError):
        hiercp.Taxonomy.parse("")
    with pytest.raises(ValueError):
        hiercp.Taxonomy.parse("A\tB\nB\tA\n")


def test_calibrate_threshold():
    q, n_cal = hiercp.calibrate_threshold([0.1, 0.2, 0.3, 0.4], 0.5)
    assert q == pytest.approx(0.3)
    assert n_cal == 4
    q, _ = hiercp.calibrate_threshold([0.1, 0.2, 0.3, 0.4], 0.0)
    assert math.isinf(q)
    assert hiercp.nonconformity(0.7) == pytest.approx(0.3)


def test_projection_is_nested(tree):
    leaves = tree.leaves()
    row = [1.0 / len(leaves)] * len(leaves)
    sets = hiercp.pcp_predict(tree, [row], leaf_q_hat=1.0)
    sample = sets[0]
    assert set(sample["leaf"]) == set(leaves)
    for name in sample["2"]:
        assert tree.parent_of(name) in sample["1"]
    for name in sample["3"]:
        assert tree.parent_of(name) in sample["2"]


def test_train_and_predict(tree):
    features, labels = hiercp.generate_synthetic(
        tree, n_samples=300, zipf_s=0.5, noise_sigma=0.4, feature_dim=4, seed=3
    )
    assert len(features) == 300
    assert len(labels) == 300
    train_idx, cal_idx, test_idx = hiercp.stratified_split(tree, labels, seed=5)
    assert len(train_idx) + len(cal_idx) + len(test_idx) == 300

    model = hiercp.train_softmax(tree, 1, features, labels, epochs=15, seed=9)
    probs = model.predict_proba(features[:10])
    for row in probs:
        assert all(p >= 0.0 for p in row)
        assert sum(row) == pytest.approx(1.0, abs=1e-9)


def test_sweep_smoke(tree, tmp_path):
    features, labels = hiercp.generate_synthetic(
        tree, n_samples=400, zipf_s=0.8, noise_sigma=0.5, feature_dim=4, seed=11
    )
    rows = hiercp.run_sweep(
        tree,
        features,
        labels,
        {"alphas": [0.0, 0.1], "n_iterations": 2, "master_seed": 4, "epochs": 10},
        str(tmp_path / "out"),
    )
    assert (tmp_path / "out" / "metrics_report.csv").exists()
    assert (tmp_path / "out" / "sweep_long.csv").exists()

    def pick(method, alpha, level, metric):
        return [
            r
            for r in rows
            if r["method"] == method
            and r["alpha"] == pytest.approx(alpha)
            and r["level"] == level
            and r["metric"] == metric
        ]

    # Projection keeps the hierarchy consistent at every alpha.
    for alpha in (0.0, 0.1):
        (hir_row,) = pick("P-CP", alpha, "global", "hir")
        assert hir_row["mean"] == 0.0
        assert hir_row["std"] == 0.0

    # Alpha zero saturates the sets, so coverage is exact.
    for method in ("L-CP", "P-CP"):
        for level in ("1", "2", "3", "leaf"):
            (cov,) = pick(method, 0.0, level, "coverage")
            assert cov["mean"] == 1.0

    # Both methods share the leaf table and threshold.
    for metric in ("coverage", "mean_set_size", "empty_rate", "singleton_rate"):
        (lcp_row,) = pick("L-CP", 0.1, "leaf", metric)
        (pcp_row,) = pick("P-CP", 0.1, "leaf", metric)
        assert lcp_row["mean"] == pcp_row["mean"]
