import math

import numpy as np
import pytest

import mambahash as mh


def test_zoh_scalar():
    a_bar, b_bar = mh.discretize_zoh(-1.0, 1.0, math.log(2.0))
    assert abs(a_bar - 0.5) < 1e-12
    assert abs(b_bar - 0.5) < 1e-12


def test_selective_scan_recurrence():
    x = np.ones((1, 3, 1))
    delta = np.full((1, 3, 1), math.log(2.0))
    y = mh.selective_scan(x, delta, np.ones((1, 3, 1)), np.ones((1, 3, 1)), np.array([[-1.0]]))
    np.testing.assert_allclose(y.ravel(), [0.5, 0.75, 0.875], atol=1e-12)


def test_selective_scan_matches_numpy_loop():
    rng = np.random.default_rng(0)
    B, L, D, N = 2, 9, 3, 4
    x = rng.uniform(-1, 1, (B, L, D))
    dt = rng.uniform(1e-3, 0.4, (B, L, D))
    b = rng.uniform(-1, 1, (B, L, N))
    c = rng.uniform(-1, 1, (B, L, N))
    a = rng.uniform(-3, -0.1, (D, N))
    ref = np.zeros((B, L, D))
    for i in range(B):
        h = np.zeros((D, N))
        for t in range(L):
            a_bar = np.exp(dt[i, t][:, None] * a)
            b_bar = (a_bar - 1.0) / a * b[i, t][None, :]
            h = a_bar * h + b_bar * x[i, t][:, None]
            ref[i, t] = h @ c[i, t]
    np.testing.assert_allclose(mh.selective_scan(x, dt, b, c, a), ref, atol=1e-10)


def test_ratio_and_losses():
    assert [mh.enhancement_ratio(k) for k in (16, 32, 48, 64)] == [2.0, 4.0, 8.0, 16.0]
    assert mh.pair_nll(0.0, True) == math.log(2.0)
    assert abs(mh.pair_nll(8.0, True) - 3.3540e-4) < 1e-8
    assert mh.quantization_loss(np.array([[-0.25, 0.75]])) == 0.625
    parts = mh.total_loss(np.array([[1.0, -1.0], [-1.0, 1.0]]), [[0], [1]], 0.05)
    assert parts["quant"] == 0.0
    assert parts["total"] == parts["nll"]


def test_packing_and_hamming():
    words = mh.pack_codes(np.array([[0.5, -0.5, 0.0]]))
    assert words.shape == (1, 1)
    assert int(words[0, 0]) == 5
    rng = np.random.default_rng(1)
    for k in (16, 32, 48, 64):
        q = rng.choice([-1.0, 1.0], (20, k))
        d = rng.choice([-1.0, 1.0], (30, k))
        np.testing.assert_array_equal(mh.hamming_distances(q, d), (k - q @ d.T) / 2)


def test_search_and_map():
    db = np.array([[-1, -1, 1, 1], [1, 1, 1, 1], [1, 1, 1, -1]], dtype=float)
    hits = mh.search_topk(np.ones((1, 4)), db, 3)
    assert [i for i, _ in hits] == [1, 2, 0]
    q = np.ones((1, 4))
    ranked = np.array([[1, 1, 1, 1], [1, 1, 1, -1], [1, 1, -1, -1]], dtype=float)
    assert abs(mh.mean_average_precision(q, [[0]], ranked, [[0], [1], [0]]) - 5 / 6) < 1e-12


def test_network_forward_and_checkpoint(tmp_path):
    cfg = mh.ModelConfig.tiny(16)
    net = mh.MambaHashNet(cfg, 3)
    rng = np.random.default_rng(2)
    img = rng.integers(0, 256, (1, 32, 32, 3), dtype=np.uint8)
    h = net.forward(np.concatenate([img, img]))
    assert h.shape == (2, 16)
    assert np.all(np.abs(h) < 1.0)
    np.testing.assert_array_equal(h[0], h[1])
    path = str(tmp_path / "m.bin")
    net.save(path)
    back = mh.MambaHashNet.load(path)
    assert back.config == cfg
    np.testing.assert_array_equal(back.forward(img), net.forward(img))


def test_errors_map_to_exceptions(tmp_path):
    with pytest.raises(mh.IoError):
        mh.MambaHashNet.load(str(tmp_path / "missing.bin"))
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOPE" + b"\0" * 16)
    with pytest.raises(mh.FormatError):
        mh.MambaHashNet.load(str(bad))
    cfg = mh.ModelConfig.tiny(16)
    cfg.ciam_kernel = 4
    with pytest.raises(mh.ConfigError):
        cfg.validate()
    assert issubclass(mh.FormatError, mh.Error)


def test_cli_in_process(tmp_path):
    data = str(tmp_path / "data")
    code, out, err = mh.run_command(
        ["--metrics-out", str(tmp_path / "m.txt"), "synth-data", "--out", data, "--side", "16",
         "--train-per-class", "2", "--query-per-class", "1", "--database-per-class", "2"])
    assert code == 0, err
    assert "records=10" in out
    code, _, err = mh.run_command(["--metrics-out", str(tmp_path / "m.txt"), "nonsense"])
    assert code == 2
    assert err.count("\n") == 1
