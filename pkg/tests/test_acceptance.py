"""Acceptance gate. Every test records one PASS/FAIL line (shown in the terminal summary).

The four end-to-end criteria train 8 trials of the default configuration
each, which takes several minutes on one CPU core.
"""

import json
import math
import time

import numpy as np
import pytest
from conftest import affine_net, record_acceptance
from test_nnet import MAPS, finite_difference_grad
from test_spsg import ising_spsg_oracle

from p2sn.artifacts import read_csv
from p2sn.config import ExperimentConfig
from p2sn.evaluation import cournot_aggregate_oracle, dist_ising_fixed_point, trapezoid_aggregate
from p2sn.experiment import run_experiment
from p2sn.games import IsingGame
from p2sn.measures import (
    TruncGauss,
    derive_stream,
    roberts_generator,
    roberts_sequence,
    trunc_gauss_mass,
    trunc_gauss_sample,
)
from p2sn.nnet import grad_params, init_p2sn, load_checkpoint
from p2sn.spsg import batch_gradient, smoothed_action_grad

TRIALS = 8

pytestmark = pytest.mark.acceptance


def check(number, title, ok, detail):
    record_acceptance(number, title, ok, detail)
    assert ok, detail


def test_criterion_01_gradient_exactness():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        d_I = 1 + seed % 2
        om = MAPS[seed % len(MAPS)]
        net = init_p2sn(d_I, 8, [8, 8], seed % 3, om, seed=1000 + seed)
        x = rng.random((2, d_I))
        z = rng.standard_normal((2, net.noise_dim))
        up = rng.standard_normal((2, om.action_dim))
        exact = grad_params(net, x, z, up).flat()
        fd = finite_difference_grad(net, x, z, up)
        worst = max(worst, np.linalg.norm(exact - fd) / np.linalg.norm(fd))
    elapsed = time.perf_counter() - t0
    check(1, "gradient exactness", worst <= 1e-4 and elapsed < 5.0, f"max rel err {worst:.2e}, {elapsed:.2f}s")


def test_criterion_02_pseudo_gradient_unbiased():
    n = 100_000
    lin = smoothed_action_grad(lambda x: 3 * x[:, 0], np.zeros((n, 1)), 0.1, derive_stream(20, "lin")).mean()
    sq = smoothed_action_grad(lambda x: x[:, 0] ** 2, np.ones((n, 1)), 0.1, derive_stream(20, "sq")).mean()
    ok = abs(lin - 3.0) <= 0.05 and abs(sq - 2.0) <= 0.05
    check(2, "smoothed gradient", ok, f"f=3x -> {lin:.4f}, f=x^2 at 1 -> {sq:.4f}")


def test_criterion_03_trunc_gauss():
    mass = trunc_gauss_mass(TruncGauss((0.0,), 0.1))
    mean = trunc_gauss_sample(TruncGauss((0.5,), 0.1), derive_stream(30, "s"), n=100_000).mean()
    ok = abs(mass - 0.5) <= 1e-9 and abs(mean - 0.5) <= 0.002
    check(3, "truncated Gaussian", ok, f"mass {mass:.12f}, sample mean {mean:.5f}")


def test_criterion_04_roberts():
    first = roberts_sequence(1, 1)[0, 0]
    gen = roberts_generator(2)
    ok = abs(first - 0.6180339887) <= 1e-8 and np.all(np.abs(gen - [0.7548776662, 0.5698402910]) <= 1e-8)
    check(4, "Roberts sequence", bool(ok), f"d=1 {first:.10f}, d=2 ({gen[0]:.10f}, {gen[1]:.10f})")


def test_criterion_05_spsg_unbiased():
    B, w, c = 3.0, 0.8, 0.1
    net = affine_net(B, w, c)
    game = IsingGame(1)
    # 100 chunks x 1000 samples = 1e5 single-sample gradients; the chunk means give the standard error
    chunks = np.array([batch_gradient(net, game, 1000, derive_stream(50, k)).flat() for k in range(100)])
    mean = chunks.mean(0)
    se = chunks.std(0, ddof=1) / math.sqrt(len(chunks))
    oracle = ising_spsg_oracle(B, w, c)
    z = np.abs(mean - oracle) / se
    check(5, "SPSG unbiasedness", bool(np.all(z <= 3)), f"|z| per component {np.round(z, 2).tolist()}")


def _run(game, tmp_path_factory, **over):
    cfg = ExperimentConfig(game=game, trials=TRIALS, seed=0, **over)
    out = tmp_path_factory.mktemp(game)
    t0 = time.perf_counter()
    arts = run_experiment(cfg, out)
    return cfg, arts, time.perf_counter() - t0


def _curve(out, t):
    _, rows = read_csv(out / f"trial_{t}_curve.csv")
    return [(int(r[0]), float(r[2])) for r in rows]


def _trial_ok(arts, t):
    return arts.manifest["trials"][t]["status"] == "ok"


@pytest.fixture(scope="module")
def dist_ising_run(tmp_path_factory):
    return _run("dist_ising1d", tmp_path_factory)


@pytest.fixture(scope="module")
def cournot_run(tmp_path_factory):
    return _run("cournot", tmp_path_factory)


@pytest.fixture(scope="module")
def ising_run(tmp_path_factory):
    return _run("ising1d", tmp_path_factory)


@pytest.fixture(scope="module")
def crowding_run(tmp_path_factory):
    return _run("crowding", tmp_path_factory)


def test_criterion_06_dist_ising(dist_ising_run):
    cfg, arts, elapsed = dist_ising_run
    game = cfg.build_game()
    oracle = dist_ising_fixed_point(game, 201)
    x = oracle.grid[:, None]
    passed, details = 0, []
    for t in range(TRIALS):
        if not _trial_ok(arts, t):
            details.append("aborted")
            continue
        net = load_checkpoint(arts.out_dir / f"trial_{t}.ckpt")
        mae = float(np.mean(np.abs(net(x)[:, 0] - oracle.actions)))
        final = _curve(arts.out_dir, t)[-1][1]
        wall = arts.manifest["trials"][t]["wall_time_s"]
        ok = mae <= 0.05 and final <= 0.01 and wall <= 300
        passed += ok
        details.append(f"mae={mae:.3f} regret={final:.4f}")
    check(6, "distance-Ising end-to-end", passed >= 7, f"{passed}/{TRIALS} trials ({'; '.join(details)})")


def test_criterion_07_cournot(cournot_run):
    cfg, arts, _ = cournot_run
    q_star = cournot_aggregate_oracle(cfg.build_game())
    passed, details = 0, []
    for t in range(TRIALS):
        if not _trial_ok(arts, t):
            details.append("aborted")
            continue
        net = load_checkpoint(arts.out_dir / f"trial_{t}.ckpt")
        Q = trapezoid_aggregate(net, 1024)
        final = _curve(arts.out_dir, t)[-1][1]
        ok = abs(Q - q_star) <= 0.05 and final <= 0.02
        passed += ok
        details.append(f"Q={Q:.3f} regret={final:.4f}")
    check(7, "Cournot end-to-end", passed >= 7, f"Q*={q_star:.4f}; {passed}/{TRIALS} trials ({'; '.join(details)})")


def test_criterion_08_ising(ising_run):
    cfg, arts, _ = ising_run
    passed, details = 0, []
    for t in range(TRIALS):
        if not _trial_ok(arts, t):
            details.append("aborted")
            continue
        curve = _curve(arts.out_dir, t)
        ratio = curve[-1][1] / curve[0][1]
        _, rows = read_csv(arts.out_dir / f"trial_{t}_profile.csv")
        acts = np.array([float(r[-1]) for r in rows])
        frac = float(np.mean(np.abs(acts) >= 0.9))
        ok = ratio <= 0.2 and frac >= 0.9 and len(acts) == cfg.eval.n_players
        passed += ok
        details.append(f"ratio={ratio:.3f} bang={frac:.2f}")
    check(8, "Ising end-to-end", passed >= 6, f"{passed}/{TRIALS} trials ({'; '.join(details)})")


def test_criterion_09_crowding(crowding_run):
    cfg, arts, _ = crowding_run
    assert cfg.noise_dim == 2
    passed, details = 0, []
    for t in range(TRIALS):
        if not _trial_ok(arts, t):
            details.append("aborted")
            continue
        curve = _curve(arts.out_dir, t)
        ratio = curve[-1][1] / curve[0][1]
        _, rows = read_csv(arts.out_dir / f"trial_{t}_histogram.csv")
        total = sum(int(r[2]) for r in rows)
        drawn = arts.manifest["trials"][t]["histogram_samples"]
        ok = ratio <= 0.5 and total == drawn == cfg.eval.n_players * cfg.eval.profile_samples and len(rows) == 64 * 64
        passed += ok
        details.append(f"ratio={ratio:.3f} hist={total}/{drawn}")
    check(9, "crowding end-to-end", passed >= 6, f"{passed}/{TRIALS} trials ({'; '.join(details)})")


def test_criterion_10_reproducibility(tmp_path):
    mismatches = []
    for game in ("dist_ising1d", "cournot", "ising1d", "crowding"):
        cfg = ExperimentConfig.model_validate(
            {
                "game": game,
                "trials": 3,
                "seed": 7,
                "train": {"steps": 40, "batch_size": 64},
                "eval": {"every": 20, "n_players": 32, "n_action_grid": 21, "n_samples": 20},
            }
        )
        runs = []
        for tag, workers in (("a", 1), ("b", 1), ("c", 2)):
            out = tmp_path / f"{game}_{tag}"
            run_experiment(cfg, out, workers=workers)
            runs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
        if not (runs[0] == runs[1] == runs[2]) or not runs[0]:
            mismatches.append(game)
    ok = not mismatches
    check(10, "reproducibility", ok, "byte-identical CSVs across reruns and 1 vs 2 workers" if ok else f"differ: {mismatches}")


def test_acceptance_configs_are_defaults(dist_ising_run):
    cfg = dist_ising_run[0]
    assert cfg.train.optimizer == "adam" and cfg.train.alpha == 1e-3 and cfg.train.batch_size == 256
    assert cfg.train.steps <= 20_000
    json.loads(cfg.canonical_json())
