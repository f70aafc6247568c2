"""Acceptance suite: one test group per criterion, each printing PASS/FAIL.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-check lines as
they happen; the summary is printed at the end of any pytest run regardless.
"""

import re
from pathlib import Path

import numpy as np
import pytest

from helpers import central_diff, mlp_arrays, np_mlp, rel_error
from provq.cli import main, run_compare, thread_cap
from provq.config import ExperimentConfig
from provq.curriculum import Schedule, alpha_at, omega_at
from provq.diffcore import Mlp, Tape, Tensor, add, mse, scale, total
from provq.quantizer import (
    Codebook, blend, commit_loss, kmeans, quantize_ste, vq_loss,
)
from provq.trainer import load_checkpoint, run_experiment, save_checkpoint

SEEDS = list(range(5))


# -- 1. gradient correctness -------------------------------------------------


def random_setup(seed):
    rng = np.random.default_rng(1000 + seed)
    d_in = int(rng.integers(1, 5))
    d_lat = int(rng.integers(1, 5))
    enc_w = [d_in, *map(int, rng.integers(1, 9, size=rng.integers(0, 3))), d_lat]
    dec_w = [d_lat, *map(int, rng.integers(1, 9, size=rng.integers(0, 3))), d_in]
    enc, dec = Mlp(enc_w, rng, name="enc"), Mlp(dec_w, rng, name="dec")
    K = int(rng.integers(2, 7))
    book = Codebook(rng.normal(size=(K, d_lat)))
    x = rng.normal(size=(int(rng.integers(1, 5)), d_in))
    alpha, omega, beta = (float(v) for v in rng.uniform(0, 1, size=3))
    return enc, dec, book, x, alpha, omega, beta


def tape_objective(enc, dec, book, x, alpha, omega, beta):
    xt = Tensor(x)
    z = enc(xt)
    z_q, idx = quantize_ste(z, book)
    recon = mse(dec(blend(z, z_q, alpha)), xt)
    vq, commit = vq_loss(z, book, idx), commit_loss(z, book, idx)
    return recon, vq, commit, z, z_q, idx


def surrogate(enc, dec, book, x, alpha, omega, beta, idx, z0, e0):
    """Plain-numpy loss whose true derivative is what the stop-gradients prescribe.

    The STE output is ``z + (e0 - z0)`` with the offset frozen; the VQ term
    sees a frozen ``z0``; the commitment term sees frozen codes ``e0``.
    """
    z = np_mlp(mlp_arrays(enc), x)
    z_q = z + (e0 - z0)
    recon = np.mean((np_mlp(mlp_arrays(dec), alpha * z + (1 - alpha) * z_q) - x) ** 2)
    vq = np.mean((z0 - book.values[idx]) ** 2)
    commit = np.mean((z - e0) ** 2)
    return recon + omega * (vq + beta * commit)


@pytest.mark.parametrize("seed", range(24))
def test_c1_gradients_match_finite_differences(seed, criterion):
    with criterion(1, f"gradient check config {seed}"):
        enc, dec, book, x, alpha, omega, beta = random_setup(seed)
        with Tape() as tape:
            recon, vq, commit, z, z_q, idx = tape_objective(enc, dec, book, x, alpha, omega, beta)
            loss = add(recon, scale(add(vq, scale(commit, beta)), omega))
        tape.backward(loss)

        # value pass-through of the straight-through path
        assert z_q.values.tobytes() == book.values[idx].tobytes()

        z0, e0 = z.values.copy(), book.values[idx].copy()
        f = lambda: surrogate(enc, dec, book, x, alpha, omega, beta, idx, z0, e0)
        assert f() == pytest.approx(loss.item(), rel=1e-12, abs=1e-15)
        for p in enc.params + dec.params + [book.codes]:
            err = rel_error(p.grad, central_diff(f, p.values))
            assert err < 1e-4, f"{p.name}: rel err {err:.2e}"


@pytest.mark.parametrize("seed", range(20))
def test_c1_ste_routing(seed, criterion):
    with criterion(1, f"STE routing config {seed}"):
        enc, _, book, x, *_ = random_setup(seed)
        with Tape() as tape:
            z = enc(Tensor(x))
            z_q, _ = quantize_ste(z, book)
            loss = total(z_q)
        tape.backward(loss)
        assert not book.codes.grad.any()
        via_ste = [p.grad.copy() for p in enc.params]
        for p in enc.params:
            p.zero_grad()
        with Tape() as tape:
            loss = total(enc(Tensor(x)))
        tape.backward(loss)
        for a, p in zip(via_ste, enc.params):
            assert a.tobytes() == p.grad.tobytes()


# -- 2. scheduler exactness --------------------------------------------------


@pytest.mark.parametrize("t_trans", [2, 10, 150, 1000])
def test_c2_scheduler(t_trans, criterion):
    with criterion(2, f"schedules T_trans={t_trans}"):
        cos = Schedule(t_trans=t_trans)
        assert abs(alpha_at(0, cos) - 1.0) <= 1e-12
        assert abs(alpha_at(t_trans // 2, cos) - 0.5) <= 1e-12
        for t in (t_trans, t_trans + 1, 10 * t_trans):
            assert abs(alpha_at(t, cos)) <= 1e-12
        hard = Schedule(t_trans=t_trans, kind="hard")
        assert all(alpha_at(t, hard) == 1.0 for t in range(t_trans))
        assert all(alpha_at(t, hard) == 0.0 for t in range(t_trans, 2 * t_trans + 2))
        for lam in (0.0, 0.25, 0.5, 0.9, 1.0):
            assert abs(omega_at(1.0, lam) - lam) <= 1e-12
            assert abs(omega_at(0.0, lam) - 1.0) <= 1e-12


# -- 3, 4, 5. default-config diagnostic sweep --------------------------------


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    report = run_compare(ExperimentConfig(), ["vanilla_vq", "soft_only", "provq"], SEEDS, out,
                         workers=thread_cap())
    assert not report.failures, report.failures
    return report


@pytest.mark.slow
def test_c3_vanilla_gap(sweep, criterion):
    with criterion(3, "vanilla triangle > disk") as note:
        tri = sweep.raw["vanilla_vq"]["mse_hard_tri"]
        disk = sweep.raw["vanilla_vq"]["mse_hard_disk"]
        wins = sum(t > d for t, d in zip(tri, disk))
        note(f"{wins}/5 seeds; mean tri {np.mean(tri):.4f} vs disk {np.mean(disk):.4f}")
        assert wins >= 4


@pytest.mark.slow
def test_c4_curriculum_benefit(sweep, criterion):
    with criterion(4, "triangle ordering and improvement") as note:
        m = {v: sweep.mean(v, "mse_hard_tri") for v in sweep.variants}
        pv, ps = sweep.improvement("provq", "mse_hard_tri"), sweep.improvement("soft_only", "mse_hard_tri")
        note(f"tri means provq {m['provq']:.4f} soft {m['soft_only']:.4f} vanilla {m['vanilla_vq']:.4f}")
        note(f"improvement provq {pv:+.1f}% soft {ps:+.1f}%")
        assert m["provq"] < m["soft_only"] < m["vanilla_vq"]
        assert pv >= 15.0
        assert ps >= 5.0


@pytest.mark.slow
def test_c5_codebook_health(sweep, criterion):
    with criterion(5, "codebook health") as note:
        for metric in ("pairdist", "utilization"):
            pv, vv = sweep.mean("provq", metric), sweep.mean("vanilla_vq", metric)
            note(f"{metric} provq {pv:.3f} vanilla {vv:.3f}")
            assert pv >= vv
        K = ExperimentConfig().quantizer.K
        for v in sweep.variants:
            for p in sweep.raw[v]["perplexity"]:
                assert 1.0 <= p <= K
            for q in sweep.raw[v]["norm_perplexity"]:
                assert 0.0 < q <= 1.0


def test_c5_metric_ranges_along_trajectories(criterion):
    with criterion(5, "perplexity ranges at every eval point"):
        for variant in ("vanilla_vq", "provq"):
            res = run_experiment(ExperimentConfig(variant=variant, total_steps=300,
                                                  snapshot_steps=(), eval_every=25))
            for row in res.series:
                assert 1.0 <= row["perplexity"] <= 64
                assert 0.0 < row["norm_perplexity"] <= 1.0


# -- 6. k-means oracle -------------------------------------------------------


def test_c6_four_point_instance(criterion):
    with criterion(6, "4-point brute force"):
        x = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
        best, best_sse = None, np.inf
        for mask in range(1, 2 ** 4 - 1):
            lab = np.array([(mask >> i) & 1 for i in range(4)])
            cents = np.array([x[lab == k].mean(axis=0) for k in (0, 1)])
            sse = float(np.sum((x - cents[lab]) ** 2))
            if sse < best_sse:
                best, best_sse = cents, sse
        for seed in range(10):
            res = kmeans(x, 2, np.random.default_rng(seed))
            got = res.centroids[np.argsort(res.centroids[:, 0])]
            np.testing.assert_allclose(got, best[np.argsort(best[:, 0])], atol=1e-12)
            np.testing.assert_allclose(got, [[0, 0.5], [10, 0.5]], atol=1e-12)
            assert res.inertia[-1] == pytest.approx(best_sse)


def test_c6_inertia_non_increasing(criterion):
    with criterion(6, "inertia monotone on 50 instances") as note:
        iters = []
        for seed in range(50):
            rng = np.random.default_rng(seed)
            n, d = int(rng.integers(5, 200)), int(rng.integers(1, 5))
            x = rng.normal(size=(n, d)) * rng.uniform(0.1, 5, size=d)
            res = kmeans(x, int(rng.integers(2, min(n, 12) + 1)), rng)
            diffs = np.diff(res.inertia)
            assert np.all(diffs <= 1e-12 * max(res.inertia[0], 1.0)), res.inertia
            iters.append(res.n_iter)
        note(f"{min(iters)}-{max(iters)} iterations")


# -- 7. determinism and resume -----------------------------------------------


def test_c7_byte_identical_csv(tmp_path, criterion):
    with criterion(7, "byte-identical metrics CSV"):
        for name in ("a", "b"):
            assert main(["train", "--out", str(tmp_path / name), "--seed", "7",
                         "--set", "run.snapshot_steps=500"]) == 0
        assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()


@pytest.mark.parametrize("batch, stop", [(None, 250), (None, 100), (128, 137)])
def test_c7_resume_exact(tmp_path, batch, stop, criterion):
    with criterion(7, f"resume at {stop} (batch={batch or 'full'})"):
        cfg = ExperimentConfig(batch_size=batch, snapshot_steps=())
        full = run_experiment(cfg)
        first = run_experiment(cfg, stop_step=stop)
        save_checkpoint(first.state, cfg, tmp_path / "ck.json")
        state, cfg2 = load_checkpoint(tmp_path / "ck.json")
        rest = run_experiment(cfg2, state=state)
        assert first.losses + rest.losses == full.losses
        assert rest.final["codebook"] == full.final["codebook"]


# -- 8. figure pipeline ------------------------------------------------------


def test_c8_train_then_plot(tmp_path, criterion):
    with criterion(8, "train + plot") as note:
        run = tmp_path / "run"
        assert main(["train", "--out", str(run), "--set", "run.snapshot_steps=0,300,500"]) == 0
        snaps = sorted((run / "snapshots").glob("*.json"))
        assert [p.name for p in snaps] == ["step_000000.json", "step_000300.json", "step_000500.json"]
        assert main(["plot", *map(str, snaps), "--out", str(tmp_path / "plots")]) == 0
        svgs = sorted(Path(tmp_path / "plots").glob("*.svg"))
        assert len(svgs) == 3
        texts = [p.read_text() for p in svgs]
        viewboxes = {re.search(r'viewBox="([^"]+)"', t).group(1) for t in texts}
        frames = {re.search(r'data-bounds="([^"]+)"', t).group(1) for t in texts}
        assert len(viewboxes) == 1 and len(frames) == 1
        for t in texts:
            assert t.count('<path class="code"') == 64
            assert t.count('class="data"') == 675
            assert t.count('class="embedding') == 675
        note(f"viewBox {viewboxes.pop()}")
