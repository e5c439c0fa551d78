"""Experiment runners that write CSV tables for each experiment."""
from __future__ import annotations

import hashlib
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channel import (
    ChannelRealization,
    SystemConfig,
    direct_rows,
    effective_channels,
    sample_scatterers,
)
from .codebook import (
    OfflineCodebook,
    build_reflection_codebook,
    preselect_modes,
    preselect_top_k,
    write_codebook_csv,
)
from .geometry import IncidentAngle, ReflectionAngle
from .io import format_result_row, results_header, write_pattern_csv
from .optimizer import (
    InfeasibleError,
    OptimizationResult,
    alternating_optimization,
    benchmark,
    greedy,
    solve_p2,
)
from .sdp import SDPError
from .tile import (
    PhaseQuantizer,
    SteeringTarget,
    TileGeometry,
    beamwidth,
    continuous_response,
    discrete_from_slopes,
    discrete_response,
    to_db,
)

SCENARIOS = ("tile-pattern", "codebook-beams", "mode-reduction", "convergence-ao",
             "greedy-trace", "power-cdf", "power-vs-distance", "power-vs-codebook")
BENCHMARKS = ("no_irs_optimal", "no_irs_zf", "irs_random_phase", "irs_specular_tiles")


@dataclass
class ExperimentSpec:
    scenario: str
    config: SystemConfig = field(default_factory=SystemConfig)
    realizations: int = 200
    seed: int = 0
    out_dir: Path = Path("out")
    sweep: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.realizations < 1:
            raise ValueError("need at least one realization")
        for name, grid in self.sweep.items():
            if len(grid) == 0:
                raise ValueError(f"sweep grid {name!r} is empty")
        self.out_dir = Path(self.out_dir)


@dataclass
class RunManifest:
    scenario: str
    config_hash: str
    seed: int
    version: str
    files: list
    wall_time_s: float
    infeasible: int = 0

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(f"scenario={self.scenario}\n")
            fh.write(f"config_hash={self.config_hash}\n")
            fh.write(f"seed={self.seed}\n")
            fh.write(f"version={self.version}\n")
            fh.write(f"infeasible_results={self.infeasible}\n")
            fh.write(f"wall_time_s={self.wall_time_s:.3f}\n")
            for f in self.files:
                digest = hashlib.sha256(Path(f).read_bytes()).hexdigest()[:16]
                fh.write(f"file={Path(f).name} sha256={digest}\n")


def realization_seed(seed, i, stream=0):
    """Independent stream for realization ``i`` derived from one master seed."""
    return np.random.SeedSequence(seed, spawn_key=(i, stream))


def _parallel_map(fn, args, workers):
    if workers <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args))


# ------------------------------------------------------------ channels

def build_realization(config: SystemConfig, scatterers, codebook=None, seed=None):
    cb = codebook or config.codebook()
    return ChannelRealization(direct_rows(scatterers, config), effective_channels(scatterers, config, cb),
                              config.sigma2, config.gamma, np.arange(cb.size), seed, config.digest(),
                              scatterers, config)


def select_modes(real: ChannelRealization, config: SystemConfig, codebook=None):
    """Restrict a realization to the online mode set."""
    cb = codebook or config.codebook()
    if config.preselection == "topk":
        cols = preselect_top_k(real.tiles, config.modes_per_user, cb)
    else:
        cols = preselect_modes(real.tiles, 10 ** (config.delta_db / 20))
    return real.restrict(cols)


def _failed(scheme, K):
    return OptimizationResult(np.inf, np.zeros(0, int), np.zeros((0, K)), status="infeasible", scheme=scheme)


def proposed(real: ChannelRealization, config: SystemConfig):
    """Greedy configuration refined by alternating optimization."""
    g = greedy(real)
    a = alternating_optimization(real, g.selection, g.Q, config.ao_iterations, config.ao_tol)
    return g, a


def solve_table_schemes(args):
    """All schemes for one realization at several IRS sizes."""
    config, seed, i, tiles, benchmarks = args
    rng = np.random.default_rng(realization_seed(seed, i))
    sc = sample_scatterers(config, rng)
    rows = []
    K = config.n_users
    base = None
    for N in tiles:
        cfg = config.replace(n_tiles=N)
        real = build_realization(cfg, sc, seed=i)
        if base is None:
            base = real
        if N == 0:
            try:
                rows.append(("no_irs_optimal", benchmark("no_irs_optimal", real)))
            except (InfeasibleError, SDPError):
                rows.append(("no_irs_optimal", _failed("no_irs_optimal", K)))
            continue
        try:
            g, a = proposed(select_modes(real, cfg), cfg)
            rows.append((f"greedy_N{N}", g))
            rows.append((f"ao_N{N}", a))
        except (InfeasibleError, SDPError):
            rows.append((f"greedy_N{N}", _failed("greedy", K)))
            rows.append((f"ao_N{N}", _failed("ao", K)))
    if benchmarks:
        cfg = config.replace(n_tiles=max(tiles))
        real = build_realization(cfg, sc, seed=i)
        for kind in benchmarks:
            if kind == "no_irs_optimal" and 0 in tiles:
                continue
            try:
                res = benchmark(kind, real, rng=realization_seed(seed, i, 1))
            except (InfeasibleError, SDPError):
                res = _failed(kind, K)
            rows.append((kind, res))
    return i, rows


def _write_results(path, rows_by_realization, K):
    n_bad = 0
    with open(path, "w", newline="") as fh:
        fh.write(results_header(K) + "\n")
        for i, rows in rows_by_realization:
            for scheme, res in rows:
                n_bad += res.status != "ok"
                fh.write(format_result_row(i, scheme, res, K) + "\n")
    return n_bad


def empirical_cdf(values):
    v = np.sort(np.asarray(values, dtype=float))
    return v, np.arange(1, len(v) + 1) / len(v)


def _write_cdf(path, rows_by_realization):
    per_scheme = {}
    for _, rows in rows_by_realization:
        for scheme, res in rows:
            per_scheme.setdefault(scheme, []).append(res.p_dbm)
    with open(path, "w", newline="") as fh:
        fh.write("scheme,p_dbm,cdf\n")
        for scheme, vals in per_scheme.items():
            x, F = empirical_cdf(vals)
            for a, b in zip(x, F):
                fh.write(f"{scheme},{a:.6f},{b:.6f}\n")
    return per_scheme


def _write_summary(path, per_scheme):
    with open(path, "w", newline="") as fh:
        fh.write("scheme,median_p_dbm,mean_p_dbm,count\n")
        for scheme, vals in per_scheme.items():
            v = np.asarray(vals)
            finite = v[np.isfinite(v)]
            mean = finite.mean() if finite.size else np.inf
            fh.write(f"{scheme},{np.median(v):.6f},{mean:.6f},{len(v)}\n")


# ------------------------------------------------------------ scenarios

def _grid(job, name, default):
    return tuple(job.sweep.get(name, default))


def run_tile_pattern(job: ExperimentSpec):
    out = job.out_dir
    files = []
    theta = np.round(np.arange(0.0, 90.0 + 1e-9, 0.01), 6)
    summary = []
    # continuous tiles, oblique incidence with specular and anomalous targets
    psi_t = IncidentAngle.from_degrees(15, 225, 22.5)
    psi_r = ReflectionAngle.from_degrees(theta, 45)
    for label, tr in (("specular", 15.0), ("anomalous", 45.0)):
        target = SteeringTarget(IncidentAngle.from_degrees(15, 225), ReflectionAngle.from_degrees(tr, 45))
        for L in _grid(job, "tile_sizes", (5.0, 10.0, 20.0)):
            g = continuous_response(TileGeometry(L, L), target, psi_t, psi_r, 0.8)
            f = out / f"pattern_{label}_L{L:g}.csv"
            write_pattern_csv(f, theta, 45.0, g)
            files.append(f)
            db = to_db(g)
            summary.append((f.name, beamwidth(theta, db, 10.0), theta[np.argmax(db)]))
    # continuous vs discrete tiles, normal incidence, anomalous target
    psi_t = IncidentAngle.from_degrees(0, 0, 22.5)
    target = SteeringTarget(IncidentAngle.from_degrees(0, 0), ReflectionAngle.from_degrees(30, 45))
    curves = [("continuous", lambda: continuous_response(TileGeometry(10, 10), target, psi_t, psi_r, 0.8))]
    for d in (0.5, 0.25, 0.125):
        geom = TileGeometry(10, 10, d, d, d)
        curves.append((f"discrete_d{d:g}", lambda geom=geom: discrete_response(geom, target, psi_t, psi_r, 0.8)))
    for bits in (1, 3):
        geom = TileGeometry(10, 10, 0.5, 0.5, 0.5)
        q = PhaseQuantizer(bits)
        curves.append((f"discrete_d0.5_{bits}bit",
                       lambda geom=geom, q=q: discrete_response(geom, target, psi_t, psi_r, 0.8, q)))
    for label, fn in curves:
        g = fn()
        f = out / f"pattern_normal_{label}.csv"
        write_pattern_csv(f, theta, 45.0, g)
        files.append(f)
        db = to_db(g)
        summary.append((f.name, beamwidth(theta, db, 10.0), theta[np.argmax(db)]))
    f = out / "beam_summary.csv"
    with open(f, "w", newline="") as fh:
        fh.write("file,beamwidth_10db_deg,peak_theta_deg\n")
        for name, bw, pk in summary:
            fh.write(f"{name},{bw:.6f},{pk:.6f}\n")
    return files + [f], 0


def demo_beam_codebook():
    bx = build_reflection_codebook(9, -np.sqrt(2) / 4, np.sqrt(2) / 4, 0.5)
    by = build_reflection_codebook(9, -np.sqrt(6) / 8, np.sqrt(6) / 8, 0.5)
    return OfflineCodebook(tuple(bx), tuple(by), (0.0,))


def run_codebook_beams(job: ExperimentSpec):
    out = job.out_dir
    cb = demo_beam_codebook()
    files = [out / "codebook.csv"]
    write_codebook_csv(cb, files[0])
    geom = TileGeometry(10, 10, 0.5, 0.5, 0.5)
    theta = np.round(np.arange(0.0, 90.0 + 1e-9, 0.05), 6)
    psi_t = IncidentAngle(0.0, 0.0, 0.0)
    psi_r = ReflectionAngle(np.deg2rad(theta), np.pi)
    for bx in [b for b in cb.b_x if b >= -1e-12]:
        g = discrete_from_slopes(geom, -bx / geom.d_x, 0.0, 0.0, psi_t, psi_r, 0.8)
        f = out / f"beam_bx{bx:.4f}.csv"
        write_pattern_csv(f, theta, 180.0, g)
        files.append(f)
    return files, 0


def mode_reduction_gains(rng, geom=None, codebook=None, distance=1000.0, tau=0.8):
    """|h_{m,k}|^2 for one tile, a single-antenna transmitter and two receivers.

    Two paths per link, free-space magnitudes with uniformly random phases,
    angles drawn from the ranges the reflection codebook was designed for.
    Returns an (M, 2) array.
    """
    geom = geom or TileGeometry(10, 10, 0.5, 0.5, 0.5)
    cb = codebook or demo_beam_codebook()
    tt = rng.uniform(0, np.pi / 4, 2)
    tp = rng.uniform(0, np.pi / 3, 2)
    pol = rng.uniform(0, 2 * np.pi, 2)
    rt = rng.uniform(0, np.pi / 4, (2, 2))
    rp = rng.uniform(np.pi, np.pi + np.pi / 3, (2, 2))
    amp = 1 / (4 * np.pi * distance)
    gt = amp * np.exp(1j * rng.uniform(0, 2 * np.pi, 2))
    gr = amp * np.exp(1j * rng.uniform(0, 2 * np.pi, (2, 2)))
    psi_t = IncidentAngle(tt[:, None, None], tp[:, None, None], pol[:, None, None])
    psi_r = ReflectionAngle(rt[None], rp[None])
    bx, by = cb.reflection_slopes()
    shape = (-1, 1, 1, 1)
    g = discrete_from_slopes(geom, (-bx / geom.d_x).reshape(shape), (-by / geom.d_y).reshape(shape),
                             0.0, psi_t, psi_r, tau)
    h = np.einsum("mtkr,t,kr->mk", np.sqrt(4 * np.pi) * g, gt, gr)
    return np.abs(h) ** 2


def count_selected_modes(gains, drop_db=20.0):
    """Size of the threshold-selected mode set with threshold = peak - drop_db."""
    amp = np.sqrt(gains)
    delta = np.sqrt(gains.max() * 10 ** (-drop_db / 10))
    return len(preselect_modes(amp[None, :, :, None], delta))


def run_mode_reduction(job: ExperimentSpec):
    out = job.out_dir
    f1 = out / "mode_counts.csv"
    f2 = out / "mode_gains_realization0.csv"
    with open(f1, "w", newline="") as fh:
        fh.write("realization_id,peak_db,n_selected\n")
        for i in range(job.realizations):
            gains = mode_reduction_gains(np.random.default_rng(realization_seed(job.seed, i)))
            fh.write(f"{i},{10 * np.log10(gains.max()):.6f},{count_selected_modes(gains)}\n")
            if i == 0:
                with open(f2, "w", newline="") as gh:
                    gh.write("index,gain_db_user_1,gain_db_user_2\n")
                    for m, (a, b) in enumerate(10 * np.log10(gains)):
                        gh.write(f"{m},{a:.6f},{b:.6f}\n")
    return [f1, f2], 0


def ao_traces(args):
    config, seed, i = args
    rng = np.random.default_rng(realization_seed(seed, i))
    real = select_modes(build_realization(config, sample_scatterers(config, rng), seed=i), config)
    out = []
    g, a = proposed(real, config)
    out.append(("greedy_init", a))
    init_rng = np.random.default_rng(realization_seed(seed, i, 2))
    for _ in range(20):
        sel = init_rng.integers(0, real.n_modes, real.n_tiles)
        try:
            p, Q = solve_p2(sel, real)
        except (InfeasibleError, SDPError):
            continue
        out.append(("random_init", alternating_optimization(real, sel, Q, config.ao_iterations, config.ao_tol)))
        break
    return i, g, out


def run_convergence_ao(job: ExperimentSpec):
    out = job.out_dir
    args = [(job.config, job.seed, i) for i in range(job.realizations)]
    res = _parallel_map(ao_traces, args, job.workers)
    f1 = out / "ao_trace.csv"
    f2 = out / "ao_summary.csv"
    with open(f1, "w", newline="") as fh, open(f2, "w", newline="") as gh:
        fh.write("realization_id,init,step,p_dbm\n")
        gh.write("realization_id,init,iterations,converged,p_dbm,greedy_p_dbm\n")
        for i, g, runs in res:
            for init, r in runs:
                for step, p in enumerate(r.trace):
                    fh.write(f"{i},{init},{step},{10 * np.log10(p):.9f}\n")
                gh.write(f"{i},{init},{r.iterations},{int(r.converged)},{r.p_dbm:.6f},{g.p_dbm:.6f}\n")
    return [f1, f2], 0


def run_greedy_trace(job: ExperimentSpec):
    out = job.out_dir
    cfg = job.config
    args = [(cfg, job.seed, i, (0, cfg.n_tiles), BENCHMARKS) for i in range(job.realizations)]
    res = _parallel_map(solve_table_schemes, args, job.workers)
    f1 = out / "results.csv"
    bad = _write_results(f1, res, cfg.n_users)
    f2 = out / "greedy_trace.csv"
    with open(f2, "w", newline="") as fh:
        fh.write("realization_id,scheme,step,p_dbm\n")
        for i, rows in res:
            for scheme, r in rows:
                for step, p in enumerate(r.trace):
                    fh.write(f"{i},{scheme},{step},{10 * np.log10(p):.6f}\n")
    return [f1, f2], bad


def run_power_cdf(job: ExperimentSpec):
    out = job.out_dir
    tiles = tuple(int(n) for n in _grid(job, "tiles", (0, 2, 4, 6, 9)))
    args = [(job.config, job.seed, i, tiles, BENCHMARKS) for i in range(job.realizations)]
    res = _parallel_map(solve_table_schemes, args, job.workers)
    files = [out / "results.csv", out / "cdf.csv", out / "summary.csv"]
    bad = _write_results(files[0], res, job.config.n_users)
    _write_summary(files[2], _write_cdf(files[1], res))
    return files, bad


def _sweep_point(args):
    config, seed, i = args
    rng = np.random.default_rng(realization_seed(seed, i))
    sc = sample_scatterers(config, rng)
    real = build_realization(config, sc, seed=i)
    try:
        no_irs = benchmark("no_irs_optimal", real).p_dbm
    except (InfeasibleError, SDPError):
        no_irs = np.inf
    try:
        _, a = proposed(select_modes(real, config), config)
        p = a.p_dbm
    except (InfeasibleError, SDPError):
        p = np.inf
    return no_irs, p


def _run_sweep(job, points, header, label_fn, name):
    f = job.out_dir / name
    bad = 0
    with open(f, "w", newline="") as fh:
        fh.write(header + ",scheme,median_p_dbm,mean_p_dbm\n")
        for cfg in points:
            res = _parallel_map(_sweep_point, [(cfg, job.seed, i) for i in range(job.realizations)], job.workers)
            arr = np.array(res)
            bad += int(np.sum(~np.isfinite(arr)))
            for col, scheme in ((0, "no_irs_optimal"), (1, "proposed")):
                v = arr[:, col]
                finite = v[np.isfinite(v)]
                fh.write(f"{label_fn(cfg)},{scheme},{np.median(v):.6f},{finite.mean() if finite.size else np.inf:.6f}\n")
    return [f], bad


def run_power_vs_distance(job: ExperimentSpec):
    cfg = job.config
    ratios = _grid(job, "rho_t_ratio", (0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95))
    shadows = _grid(job, "shadow_d_db", (-40.0, -20.0, 0.0))
    points = [cfg.replace(rho_t=r * cfg.rho_d, rho_r=(1 - r) * cfg.rho_d, shadow_d_db=float(s))
              for s in shadows for r in ratios]
    return _run_sweep(job, points, "shadow_d_db,rho_t_ratio",
                      lambda c: f"{c.shadow_d_db:g},{c.rho_t / c.rho_d:.4f}", "power_vs_distance.csv")


def run_power_vs_codebook(job: ExperimentSpec):
    cfg = job.config
    sizes = _grid(job, "codebook_size", (4, 6, 8, 10, 14, 20))
    per_user = _grid(job, "modes_per_user", (2, 4, 8))
    b0 = _grid(job, "codebook_0", (4, 8))
    points = [cfg.replace(codebook_x=int(s), codebook_y=int(s), modes_per_user=int(k), codebook_0=int(z))
              for z in b0 for k in per_user for s in sizes]
    return _run_sweep(job, points, "codebook_size,modes_per_user,codebook_0",
                      lambda c: f"{c.codebook_x},{c.modes_per_user},{c.codebook_0}", "power_vs_codebook.csv")


_RUNNERS = {
    "tile-pattern": run_tile_pattern,
    "codebook-beams": run_codebook_beams,
    "mode-reduction": run_mode_reduction,
    "convergence-ao": run_convergence_ao,
    "greedy-trace": run_greedy_trace,
    "power-cdf": run_power_cdf,
    "power-vs-distance": run_power_vs_distance,
    "power-vs-codebook": run_power_vs_codebook,
}


def run(job: ExperimentSpec) -> RunManifest:
    os.makedirs(job.out_dir, exist_ok=True)
    t0 = time.perf_counter()
    files, bad = _RUNNERS[job.scenario](job)
    manifest = RunManifest(job.scenario, job.config.digest(), job.seed, __version__,
                           [str(f) for f in files], time.perf_counter() - t0, bad)
    manifest.write(job.out_dir / "manifest.txt")
    return manifest
