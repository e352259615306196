"""Multi-trial experiment runner and artifact emission."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .artifacts import write_csv, write_svg_heatmap, write_svg_lines
from .config import ExperimentConfig, serialize_config
from .evaluation import RegretReport, regret_report
from .games import sample_noise
from .measures import derive_stream, player_grid
from .nnet import init_p2sn, save_checkpoint
from .spsg import IterationLog, NonFiniteError, train

log = logging.getLogger(__name__)

CURVE_HEADER = ["iteration", "grad_norm", "mean_regret", "max_regret"]
SUMMARY_HEADER = ["iteration", "mean_regret_mean", "mean_regret_sem", "max_regret_mean", "max_regret_sem"]


@dataclass
class TrialResult:
    trial: int
    history: List[IterationLog]
    final_report: Optional[RegretReport]
    net_arrays: list
    profile_rows: list
    histogram: Optional[np.ndarray]
    histogram_samples: int
    wall_time_s: float
    error: Optional[str] = None


@dataclass
class RunArtifacts:
    out_dir: Path
    paths: List[Path] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.manifest.get("status") == "ok"


def build_net(cfg: ExperimentConfig, game, trial: int):
    return init_p2sn(
        game.d_I,
        cfg.net.fourier_features,
        cfg.net.hidden_sizes,
        cfg.noise_dim,
        game.action_set,
        seed=derive_stream(cfg.seed, "trial", trial, "init"),
        fourier_scale=cfg.net.fourier_scale,
    )


def evaluate(cfg: ExperimentConfig, game, net) -> RegretReport:
    # One evaluation stream shared by all trials and iterations: common random numbers.
    return regret_report(
        game,
        net,
        cfg.eval.n_players,
        cfg.eval.n_action_grid,
        cfg.eval.n_samples,
        derive_stream(cfg.seed, "eval"),
    )


def run_trial(cfg: ExperimentConfig, trial: int) -> TrialResult:
    t0 = time.perf_counter()
    game = cfg.build_game()
    net = build_net(cfg, game, trial)
    reports = {}

    def eval_fn(n, it):
        reports[it] = evaluate(cfg, game, n)
        return reports[it].mean_regret, reports[it].max_regret

    error = None
    try:
        state, history = train(
            net,
            game,
            cfg.train.to_train_config(cfg.seed),
            stream=derive_stream(cfg.seed, "trial", trial, "train"),
            eval_fn=eval_fn,
            eval_every=cfg.eval.every,
        )
        net = state.net
    except NonFiniteError as exc:
        error = str(exc)
        history = exc.history
        if exc.state is not None:
            net = exc.state.net

    final_report = reports[max(reports)] if reports else None

    players = player_grid(cfg.eval.n_players, game.d_I)
    rng = derive_stream(cfg.seed, "trial", trial, "profile").generator()
    n_draws = cfg.eval.profile_samples if net.noise_dim else 1
    profile_rows = []
    for k in range(n_draws):
        acts = net(players, sample_noise(len(players), net.noise_dim, rng))
        for p, a in zip(players, acts):
            profile_rows.append([*p, k, *a])

    histogram, hist_n = None, 0
    if game.d_A == 2:
        g = derive_stream(cfg.seed, "trial", trial, "histogram").generator()
        hist_n = cfg.eval.n_players * cfg.eval.profile_samples
        acts = net(game.sample_players(hist_n, g), sample_noise(hist_n, net.noise_dim, g))
        lo, hi = game.action_set.lo, game.action_set.hi
        bins = cfg.eval.histogram_bins
        histogram, _, _ = np.histogram2d(acts[:, 0], acts[:, 1], bins=bins, range=[[lo, hi], [lo, hi]])
        histogram = histogram.astype(np.int64)

    return TrialResult(
        trial,
        history,
        final_report,
        [a.copy() for a in net.arrays()],
        profile_rows,
        histogram,
        hist_n,
        time.perf_counter() - t0,
        error,
    )


def _trial_star(args):
    return run_trial(*args)


def summarize(curves: List[List[IterationLog]]):
    """Cross-trial mean and standard error per evaluation iteration (iterations common to all trials)."""
    by_iter = [{r.iteration: r for r in h if r.mean_regret is not None} for h in curves]
    common = sorted(set.intersection(*(set(d) for d in by_iter))) if by_iter else []
    rows = []
    n = len(curves)
    for it in common:
        mean_r = np.array([d[it].mean_regret for d in by_iter])
        max_r = np.array([d[it].max_regret for d in by_iter])
        sem = (lambda x: float(np.std(x, ddof=1) / np.sqrt(n)) if n > 1 else 0.0)
        rows.append([it, float(mean_r.mean()), sem(mean_r), float(max_r.mean()), sem(max_r)])
    return rows


def _write_trial(out: Path, game, res: TrialResult, paths: List[Path]) -> dict:
    t = res.trial
    rows = [
        [r.iteration, r.grad_norm, r.mean_regret, r.max_regret] for r in res.history if r.mean_regret is not None
    ]
    paths.append(write_csv(out / f"trial_{t}_curve.csv", CURVE_HEADER, rows))
    files = [paths[-1].name]
    if res.final_report is not None:
        rep = res.final_report
        header = [f"player_{k}" for k in range(rep.player_points.shape[1])] + ["regret"]
        paths.append(
            write_csv(out / f"trial_{t}_regrets.csv", header, ([*p, r] for p, r in zip(rep.player_points, rep.regrets)))
        )
        files.append(paths[-1].name)
    header = [f"player_{k}" for k in range(game.d_I)] + ["sample"] + [f"action_{k}" for k in range(game.d_A)]
    paths.append(write_csv(out / f"trial_{t}_profile.csv", header, res.profile_rows))
    files.append(paths[-1].name)
    if res.histogram is not None:
        h = res.histogram
        rows = ([ix, iy, int(h[ix, iy])] for ix in range(h.shape[0]) for iy in range(h.shape[1]))
        paths.append(write_csv(out / f"trial_{t}_histogram.csv", ["bin_x", "bin_y", "count"], rows))
        files.append(paths[-1].name)
    return {
        "trial": t,
        "status": "ok" if res.error is None else "aborted",
        "error": res.error,
        "wall_time_s": res.wall_time_s,
        "histogram_samples": res.histogram_samples,
        "files": files,
    }


def _plots(out: Path, cfg: ExperimentConfig, game, summary_rows, first: TrialResult, paths: List[Path]):
    if summary_rows:
        s = np.array(summary_rows, dtype=np.float64)
        paths.append(
            write_svg_lines(
                [
                    {"x": s[:, 0], "y": s[:, 1], "band": (s[:, 1] - s[:, 2], s[:, 1] + s[:, 2]), "label": "mean regret"},
                    {"x": s[:, 0], "y": s[:, 3], "band": (s[:, 3] - s[:, 4], s[:, 3] + s[:, 4]), "label": "max regret"},
                ],
                out / "regret_curve.svg",
                title=f"{cfg.game}: regret over training ({cfg.trials} trials, mean +/- s.e.m.)",
                xlabel="iteration",
                ylabel="regret",
            )
        )
    net = build_net(cfg, game, first.trial).with_arrays(first.net_arrays)
    if game.d_I == 1 and game.d_A == 1:
        x = np.linspace(0.0, 1.0, 512)
        y = net(x[:, None], np.zeros((512, net.noise_dim)))[:, 0]
        paths.append(
            write_svg_lines(
                [{"x": x, "y": y, "label": "action"}],
                out / "profile.svg",
                title=f"{cfg.game}: learned profile (trial {first.trial})",
                xlabel="player",
                ylabel="action",
            )
        )
    elif game.d_I == 2:
        n = 64
        c = (np.arange(n) + 0.5) / n
        pts = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1).reshape(-1, 2)
        a = net(pts, np.zeros((len(pts), net.noise_dim)))[:, 0].reshape(n, n)
        paths.append(
            write_svg_heatmap(
                a,
                out / "profile.svg",
                title=f"{cfg.game}: learned profile, action[0] (trial {first.trial})",
                xlabel="player x",
                ylabel="player y",
            )
        )
    if first.histogram is not None:
        lo, hi = game.action_set.lo, game.action_set.hi
        paths.append(
            write_svg_heatmap(
                first.histogram,
                out / "histogram.svg",
                title=f"{cfg.game}: action histogram (trial {first.trial})",
                xlabel="action 0",
                ylabel="action 1",
                extent=(lo, hi, lo, hi),
            )
        )


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int = 1) -> RunArtifacts:
    """Train ``cfg.trials`` independent trials and write CSV/SVG artifacts plus manifest.json.

    Output bytes of every CSV depend only on (config, seed), not on ``workers``.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    game = cfg.build_game()
    jobs = [(cfg, t) for t in range(cfg.trials)]
    if workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_star, jobs))
    else:
        results = [run_trial(*j) for j in jobs]

    paths: List[Path] = []
    trials_meta = [_write_trial(out, game, res, paths) for res in results]
    for res in results:
        if res.error is None:
            save_checkpoint(build_net(cfg, game, res.trial).with_arrays(res.net_arrays), out / f"trial_{res.trial}.ckpt")
            paths.append(out / f"trial_{res.trial}.ckpt")

    summary_rows = summarize([r.history for r in results])
    paths.append(write_csv(out / "summary.csv", SUMMARY_HEADER, summary_rows))
    _plots(out, cfg, game, summary_rows, results[0], paths)
    (out / "config.json").write_text(serialize_config(cfg))
    paths.append(out / "config.json")

    aborted = [m["trial"] for m in trials_meta if m["status"] != "ok"]
    manifest = {
        "status": "ok" if not aborted else "aborted",
        "aborted_trials": aborted,
        "partial": bool(aborted),
        "config_hash": cfg.config_hash(),
        "code_version": __version__,
        "game": cfg.game,
        "trials": trials_meta,
        "files": sorted(p.name for p in paths),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    paths.append(out / "manifest.json")
    return RunArtifacts(out, paths, manifest)
