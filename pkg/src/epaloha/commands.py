"""
Experiment commands. Each one turns a sweep (or a preset) into a Table of
CSV-ready rows; the CLI only parses arguments and writes the table.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from . import analytic
from .exceptions import DomainError, UsageError
from .mac import Scheme
from .model import SystemConfig, TrafficConfig
from .phy import detection_trials, pool_for, collision_stats
from .simulate import simulate_fast_retrial, simulate_single_shot
from .sweep import SweepSpec, run_points, write_csv

logger = logging.getLogger(__name__)

TRAFFIC_KEYS = ("lambda", "lambda0", "K", "alpha", "alpha0", "delta")
DELAY_THRESHOLDS = (1, 2, 3)
DEFAULT_DELTA = 0.01
DEFAULT_DETECTION_K = 2

Columns = List[Tuple[str, Any]]


@dataclass
class Table:
    header: Tuple[str, ...]
    rows: List[Tuple[Any, ...]] = field(default_factory=list)

    @classmethod
    def from_records(cls, records: Sequence[Columns]) -> 'Table':
        header = tuple(name for name, _ in records[0])
        table = cls(header)
        for record in records:
            names = tuple(name for name, _ in record)
            if names != header:
                raise ValueError(f"inconsistent columns {names} vs {header}")
            table.rows.append(tuple(value for _, value in record))
        return table

    def column(self, name: str) -> List[Any]:
        i = self.header.index(name)
        return [row[i] for row in self.rows]

    def write(self, out: TextIO) -> int:
        return write_csv(out, self.header, self.rows)


def split_overrides(pairs: Dict[str, str]) -> Tuple[Dict[str, str], Dict[str, float]]:
    """Separate SystemConfig overrides from traffic values (lambda, K, ...)."""
    system, traffic = {}, {}
    for key, value in pairs.items():
        if key in TRAFFIC_KEYS:
            try:
                traffic[key] = int(value) if key == "K" else float(value)
            except ValueError:
                raise UsageError(f"{key} needs a number, got {value!r}")
        else:
            system[key] = value
    return system, traffic


def resolve_point(spec: SweepSpec, x: float, config: SystemConfig) -> Tuple[SystemConfig, Dict[str, float]]:
    """Config and traffic values at one grid point; the swept variable wins over fixed ones."""
    point = {k: v for k, v in spec.overrides.items() if k in TRAFFIC_KEYS}
    if spec.variable == "M":
        config = config.replace(M=int(x))
    else:
        point[spec.variable] = x
    M = config.M
    for total, norm in (("lambda", "alpha"), ("lambda0", "alpha0")):
        if spec.variable == norm or (norm in point and total not in point):
            point[total] = point[norm] * M
        elif total in point:
            point[norm] = point[total] / M
    return config, point


def _need(point: Dict[str, float], key: str, what: str) -> float:
    if key not in point:
        raise UsageError(f"{what} needs {key} (sweep it or fix it with --set {key}=...)")
    return point[key]


def _guard(fn: Callable[[], float]) -> Optional[float]:
    try:
        return fn()
    except DomainError:
        return None


def _lead(spec: SweepSpec, M: int, x: float) -> Columns:
    if spec.variable == "M":
        return [("M", M)]
    return [("M", M), (spec.variable, x)]


# analytic formulas

def _f_psi(config, p):
    alpha = _need(p, "alpha", "psi")
    return [("alpha", alpha), ("psi", analytic.psi(alpha)),
            ("psi_second_derivative", analytic.psi_second_derivative(alpha)),
            ("q_ep", analytic.q_ep_asymptotic(alpha)), ("q_ma", analytic.q_ma(alpha, 1))]


def _f_ratio(config, p):
    alpha_star, psi_star = analytic.psi_max()
    ma_max, ep_max = analytic.normalized_maxima()
    return [("ratio", analytic.max_throughput_ratio()), ("ma_max", ma_max), ("ep_max", ep_max),
            ("psi_argmax", alpha_star), ("psi_max", psi_star), ("psi_ratio", psi_star / analytic.E_INV)]


def _f_eta_sa(config, p):
    K = int(_need(p, "K", "eta_sa"))
    return [("K", K), ("eta_known", analytic.eta_sa_known(K)),
            ("eta_blind_max", analytic.eta_sa_blind_max(K)), ("e_inv", analytic.E_INV)]


def _f_ep(config, p):
    lam = _need(p, "lambda", "ep")
    M = config.M
    return [("lambda", lam), ("alpha", lam / M), ("n_ma", analytic.n_ma_poisson(lam, M)),
            ("n_ep_lower", analytic.n_ep_lower_poisson(lam, M)),
            ("n_ep_approx", analytic.n_ep_approx(lam, M)),
            ("gap_lower", analytic.n_ep_gap_lower_poisson(lam, M)), ("q_ma", analytic.q_ma(lam, M))]


def _f_ep_k(config, p):
    K = int(_need(p, "K", "ep_k"))
    M = config.M
    return [("K", K), ("n_ma", analytic.n_ma(K, M)), ("s_bar", analytic.s_bar(K, M)),
            ("n_ep_upper", analytic.n_ep_upper(K, M))]


def _f_oracle(config, p):
    K = int(_need(p, "K", "oracle"))
    M = config.M
    return [("K", K), ("n_ep_oracle", analytic.n_ep_oracle(K, M)), ("n_ma", analytic.n_ma(K, M)),
            ("n_ep_upper", analytic.n_ep_upper(K, M))]


def _f_fixed_point(config, p):
    lambda0 = _need(p, "lambda0", "fixed_point")
    M = config.M
    ma = analytic.solve_lambda_ma(lambda0, M)
    ep = analytic.solve_lambda_ep(lambda0, M)
    q_ma = analytic.q_ma(ma.lam, M) if ma.stable else None
    q_ep = analytic.q_ep_fixed_point(lambda0, M)
    alpha0 = lambda0 / M
    cols = [("lambda0", lambda0), ("alpha0", alpha0),
            ("lambda_ma", ma.lam), ("lambda_ep", ep.lam), ("q_ma", q_ma), ("q_ep", q_ep)]
    for D in DELAY_THRESHOLDS:
        cols.append((f"outage_ma_{D}", None if q_ma is None else analytic.delay_outage(q_ma, D)))
        cols.append((f"outage_ep_{D}", None if q_ep is None else analytic.delay_outage(q_ep, D)))
    # large-M limit in normalized units
    alpha_ma = analytic.alpha_from_alpha0_ma(alpha0)
    alpha_ep = analytic.alpha_from_alpha0_ep(alpha0)
    cols += [("alpha_ma", alpha_ma), ("alpha_ep", alpha_ep),
             ("q_ma_asymptotic", None if alpha_ma is None else analytic.q_ma(alpha_ma, 1)),
             ("q_ep_asymptotic", None if alpha_ep is None else analytic.q_ep_asymptotic(alpha_ep))]
    cols += [("status_ma", "ok" if ma.stable else "unstable"),
             ("status_ep", "ok" if ep.stable else "unstable")]
    return cols


def _f_overhead(config, p):
    lam = _need(p, "lambda", "overhead")
    M = config.M
    kappa = analytic.overhead_factor(config.t_p, config.t_d, config.t_f)
    n_ma = analytic.n_ma_poisson(lam, M)
    n_ep = analytic.n_ep_approx(lam, M)
    return [("lambda", lam), ("kappa", kappa), ("feedback_bits", analytic.feedback_bits(M, config.w_max)),
            ("n_ma", n_ma), ("n_ep", n_ep), ("n_ep_effective", analytic.effective_throughput(n_ep, kappa)),
            ("beneficial", analytic.exploration_beneficial(n_ep, n_ma, kappa))]


def _f_collision(config, p):
    lam = _need(p, "lambda", "collision")
    delta = p.get("delta", DEFAULT_DELTA)
    exact, approx = analytic.no_collision_mixture(lam, config.M, config.pool_size)
    return [("lambda", lam), ("pool_size", config.pool_size), ("no_collision_exact", exact),
            ("no_collision_approx", approx), ("delta", delta),
            ("min_pool_size", analytic.min_pool_size(lam, config.M, delta))]


FORMULAS: Dict[str, Callable[[SystemConfig, Dict[str, float]], Columns]] = {
    "psi": _f_psi,
    "ratio": _f_ratio,
    "eta_sa": _f_eta_sa,
    "ep": _f_ep,
    "ep_k": _f_ep_k,
    "oracle": _f_oracle,
    "fixed_point": _f_fixed_point,
    "overhead": _f_overhead,
    "collision": _f_collision,
}


def cmd_analytic(spec: SweepSpec, which: str, config: SystemConfig) -> Table:
    """One row per grid point with the columns of the named formula family."""
    try:
        formula = FORMULAS[which]
    except KeyError:
        raise UsageError(f"unknown formula {which!r}; choose from {', '.join(sorted(FORMULAS))}")
    records = []
    for x in spec.grid():
        cfg, point = resolve_point(spec, x, config)
        cols = [(name, v) for name, v in formula(cfg, point) if name not in (spec.variable, "M")]
        records.append([*_lead(spec, cfg.M, x), *cols])
    return Table.from_records(records)


# simulation

@dataclass(frozen=True)
class SimTask:
    scheme: Scheme
    config: SystemConfig
    point: Tuple[Tuple[str, float], ...]
    trials: int
    slots: int
    warmup: int
    seed: int
    stream: int


def run_sim_task(task: SimTask) -> Columns:
    """Single-shot frames for K / lambda points, a fast-retrial chain for lambda0 points."""
    point = dict(task.point)
    M = task.config.M
    logger.info("simulating %s at %s (M=%d)", task.scheme.value, point, M)
    if "lambda0" in point:
        lambda0 = point["lambda0"]
        stats = simulate_fast_retrial(task.scheme, task.config, lambda0, task.slots + task.warmup,
                                      task.warmup, task.seed, DELAY_THRESHOLDS, task.stream)
        if task.scheme is Scheme.CONVENTIONAL:
            fp = analytic.solve_lambda_ma(lambda0, M)
        else:
            fp = analytic.solve_lambda_ep(lambda0, M)
        cols = [("scheme", task.scheme.value), ("slots", stats.slots), ("lambda", stats.empirical_lambda),
                ("q", stats.empirical_q), ("throughput", stats.throughput),
                ("mean_backlog", stats.mean_backlog), ("mean_delay", stats.mean_delay()),
                ("mean_sojourn", stats.mean_sojourn)]
        cols += [(f"outage_{D}", stats.outage[D]) for D in DELAY_THRESHOLDS]
        cols += [("lambda_fixed_point", fp.lam), ("fallback_frames", stats.fallback_frames),
                 ("status", "diverged" if stats.diverged else "ok")]
        return cols

    if "K" in point:
        traffic = TrafficConfig(fixed_k=int(point["K"]))
    elif "lambda" in point:
        traffic = TrafficConfig(lam=point["lambda"])
    else:
        raise UsageError("simulation needs K, lambda/alpha or lambda0/alpha0")
    summary = simulate_single_shot(task.scheme, task.config, traffic, task.trials, task.seed, task.stream)
    return [("scheme", task.scheme.value), ("trials", summary.trials), ("mean", summary.mean),
            ("stderr", summary.stderr), ("normalized", summary.mean / M),
            ("group1", summary.group1_mean), ("group2", summary.group2_mean),
            ("q", summary.collision_fraction), ("fallback_frames", summary.fallback_frames),
            ("status", "ok")]


def _tasks(spec: SweepSpec, config: SystemConfig, schemes: Sequence[Scheme],
           points: Sequence[float]) -> Tuple[List[Tuple[SystemConfig, Dict[str, float]]], List[SimTask]]:
    resolved = [resolve_point(spec, x, config) for x in points]
    tasks = []
    for i, (cfg, point) in enumerate(resolved):
        for scheme in schemes:
            tasks.append(SimTask(scheme, cfg, tuple(sorted(point.items())), spec.trials, spec.slots,
                                 spec.warmup, spec.seed, i))
    return resolved, tasks


def cmd_simulate(schemes: Sequence[Scheme], spec: SweepSpec, config: SystemConfig) -> Table:
    """One row per (grid point, scheme), in grid order."""
    points = spec.grid()
    resolved, tasks = _tasks(spec, config, schemes, points)
    results = run_points(run_sim_task, tasks, spec.workers)
    records = []
    for task, cols in zip(tasks, results):
        cfg, _ = resolved[task.stream]
        records.append([*_lead(spec, cfg.M, points[task.stream]), *cols])
    return Table.from_records(records)


# physical layer

def cmd_phy(spec: SweepSpec, config: SystemConfig, dump: Optional[TextIO] = None) -> Table:
    """
    Detection accuracy of matching pursuit against SNR (snr_db) or user count (K),
    with the pool's coherence and the preamble collision probabilities.

    The pool is the first min(pool_size, t_p**2) Alltop sequences. `dump`
    receives (snr_db, k, k_hat, count) confusion rows.
    """
    if spec.variable not in ("snr_db", "K"):
        raise UsageError("phy sweeps snr_db or K")
    size = min(config.pool_size, config.t_p ** 2)
    try:
        pool = pool_for(config.t_p, size)
    except DomainError as e:
        raise UsageError(str(e))

    confusion = []
    records = []
    for i, x in enumerate(spec.grid()):
        _, point = resolve_point(spec, x, config)
        k = int(point.get("K", DEFAULT_DETECTION_K))
        snr_db = point.get("snr_db", 10.0 * math.log10(config.target_snr))
        snr = 10.0 ** (snr_db / 10.0)
        k_hat = detection_trials(k, pool, snr, config.noise_power, config.max_k, config.stop_factor,
                                 spec.trials, spec.seed, stream=i)
        values, counts = np.unique(k_hat, return_counts=True)
        confusion += [(snr_db, k, int(v), int(c)) for v, c in zip(values, counts)]

        cols = [("t_p", pool.t_p), ("pool_size", pool.pool_size),
                ("coherence", pool.coherence), ("recovery_bound", pool.recovery_bound),
                ("snr_db", snr_db), ("k", k), ("trials", spec.trials),
                ("accuracy", float(np.mean(k_hat == k))), ("overcount", float(np.mean(k_hat > k))),
                ("undercount", float(np.mean(k_hat < k)))]
        if "lambda" in point:
            stats = collision_stats(point["lambda"], config.M, pool.pool_size, spec.trials, spec.seed, stream=i)
            cols += [("lambda", point["lambda"]), ("no_collision", stats.empirical),
                     ("no_collision_stderr", stats.stderr), ("no_collision_exact", stats.exact),
                     ("no_collision_approx", stats.approx)]
        records.append([*_lead(spec, config.M, x), *(c for c in cols if c[0] != spec.variable)])

    if dump is not None:
        write_csv(dump, ("snr_db", "k", "k_hat", "count"), confusion)
    return Table.from_records(records)


# figure presets

@dataclass(frozen=True)
class Preset:
    variable: str
    points: Tuple[float, ...]
    overrides: Dict[str, Any]
    help: str


def _arange(start: float, stop: float, step: float) -> Tuple[float, ...]:
    return tuple(SweepSpec("lambda", start, stop, step).grid())


PRESETS: Dict[str, Preset] = {
    "figure1": Preset("K", tuple(range(1, 21)), {}, "single-channel throughput with known K against 1/e"),
    "figure3": Preset("alpha", _arange(0.05, 1.0, 0.05), {"M": 100},
                      "normalized throughput against alpha at M = 100"),
    "figure4": Preset("M", tuple(range(10, 101, 5)), {"lambda": 20.0},
                      "total throughput against M at lambda = 20"),
    "figure5": Preset("M", (50, 100, 200, 400), {"alpha": 0.8},
                      "throughput gap against M at alpha = 0.8"),
    "figure6": Preset("lambda0", _arange(2.0, 36.0, 2.0), {"M": 100},
                      "fast-retrial lambda and q against lambda0 at M = 100"),
}


def preset_spec(name: str, trials: int, slots: int, warmup: int, seed: int, workers: int,
                grid: Optional[Tuple[float, float, float]] = None) -> Tuple[SweepSpec, Tuple[float, ...]]:
    """The preset's sweep and grid; `grid` = (start, stop, step) replaces the preset points."""
    try:
        preset = PRESETS[name]
    except KeyError:
        raise UsageError(f"unknown figure {name!r}; choose from {', '.join(PRESETS)}")
    traffic = {k: v for k, v in preset.overrides.items() if k in TRAFFIC_KEYS}
    if grid is not None:
        spec = SweepSpec(preset.variable, *grid, overrides=traffic, trials=trials, slots=slots,
                         warmup=warmup, seed=seed, workers=workers)
        return spec, tuple(spec.grid())
    points = preset.points
    spec = SweepSpec(preset.variable, points[0], points[-1], overrides=traffic, trials=trials,
                     slots=slots, warmup=warmup, seed=seed, workers=workers)
    return spec, points


def _scheme_pairs(spec, config, points):
    schemes = (Scheme.CONVENTIONAL, Scheme.EXPLORATION)
    resolved, tasks = _tasks(spec, config, schemes, points)
    results = [dict(cols) for cols in run_points(run_sim_task, tasks, spec.workers)]
    return resolved, list(zip(results[0::2], results[1::2]))


def cmd_figure(name: str, config: SystemConfig, trials: int = 10_000, slots: int = 100_000,
               warmup: int = 1_000, seed: int = 0, workers: int = 1,
               grid: Optional[Tuple[float, float, float]] = None) -> Table:
    spec, points = preset_spec(name, trials, slots, warmup, seed, workers, grid)
    system = {k: v for k, v in PRESETS[name].overrides.items() if k not in TRAFFIC_KEYS}
    if system:
        config = config.replace(**system)
    logger.info("%s: %s over %d points", name, PRESETS[name].help, len(points))

    if name == "figure1":
        return cmd_analytic(SweepSpec("K", points[0], points[-1], 1.0), "eta_sa", config)

    resolved, pairs = _scheme_pairs(spec, config, points)
    records = []
    for x, (cfg, point), (ma, ep) in zip(points, resolved, pairs):
        M = cfg.M
        if name == "figure3":
            alpha, lam = point["alpha"], point["lambda"]
            records.append([
                ("alpha", x), ("lambda", lam), ("ma", ma["normalized"]), ("ma_stderr", ma["stderr"] / M),
                ("ep", ep["normalized"]), ("ep_stderr", ep["stderr"] / M),
                ("ma_analytic", analytic.n_ma_poisson(lam, M) / M),
                ("ep_lower", analytic.n_ep_lower_poisson(lam, M) / M),
                ("ep_approx", analytic.n_ep_approx(lam, M) / M),
                ("psi", _guard(lambda: analytic.psi(alpha)))])
        elif name == "figure4":
            lam = point["lambda"]
            records.append([
                ("M", M), ("lambda", lam), ("ma", ma["mean"]), ("ma_stderr", ma["stderr"]),
                ("ep", ep["mean"]), ("ep_stderr", ep["stderr"]),
                ("ma_analytic", analytic.n_ma_poisson(lam, M)),
                ("ep_lower", analytic.n_ep_lower_poisson(lam, M)),
                ("ep_approx", analytic.n_ep_approx(lam, M))])
        elif name == "figure5":
            alpha, lam = point["alpha"], point["lambda"]
            records.append([
                ("M", M), ("lambda", lam), ("ma", ma["mean"]), ("ep", ep["mean"]),
                ("gap", ep["mean"] - ma["mean"]), ("gap_stderr", math.hypot(ma["stderr"], ep["stderr"])),
                ("gap_lower", analytic.n_ep_gap_lower(alpha, M)),
                ("gap_lower_poisson", analytic.n_ep_gap_lower_poisson(lam, M))])
        else:
            lambda0 = point["lambda0"]
            q_fp = analytic.q_ep_fixed_point(lambda0, M)
            fp_ma = ma["lambda_fixed_point"]
            records.append([
                ("lambda0", x), ("alpha0", point["alpha0"]),
                ("lambda_ma", ma["lambda"]), ("q_ma", ma["q"]), ("status_ma", ma["status"]),
                ("lambda_ma_fixed_point", fp_ma),
                ("q_ma_fixed_point", None if fp_ma is None else analytic.q_ma(fp_ma, M)),
                ("lambda_ep", ep["lambda"]), ("q_ep", ep["q"]), ("status_ep", ep["status"]),
                ("lambda_ep_fixed_point", ep["lambda_fixed_point"]), ("q_ep_fixed_point", q_fp)])
    if name == "figure5" and len(points) > 1:
        Ms = np.array([r[0][1] for r in records], dtype=float)
        gaps = np.array([r[4][1] for r in records], dtype=float)
        logger.info("figure5: least-squares gap slope %.6g per channel", np.polyfit(Ms, gaps, 1)[0])
    return Table.from_records(records)
