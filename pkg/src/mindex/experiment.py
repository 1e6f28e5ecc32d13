"""End-to-end experiment orchestration, persistence and the figure studies.

A run is fully described by an ExperimentConfig (JSON on disk, environment
overrides via MIL_<KEY>). Per (d, seed) the pipeline is

    init -> stage-1 SGD -> lambda selection -> ridge refit -> test error,

and artifacts are: run.json (config echo + all records + aggregates),
traj_<d>_<seed>.csv (diagnostics), summary.csv (one row per run) and one
plot-data CSV per figure of the simulation study (fig1_left/fig1_right for
the recovery-scaling panels, fig2_left/fig2_right for the higher-order
necessity panels). Reruns with the same config produce byte-identical files.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng
from .gradients import population_loss
from .hermite import link_from_config
from .model import InitConfig, LearnerModel, TargetModel, init_network, make_directions
from .ridge import RidgeConfig, eval_test_error, select_lambda
from .sgd import DegenerateStepError, TrainConfig, Trajectory, train_stage1

SCHEMA_VERSION = 1
ENV_PREFIX = "MIL_"

# acceptance band for consecutive median stop-step ratios in the scaling study
RATIO_BAND = (1.4, 2.8)
SHARE_DRIFT_TOLERANCE = 0.20


@dataclass(frozen=True)
class ExperimentConfig:
    d_list: tuple
    P: int
    link: dict
    seeds: tuple
    eta_c: float
    T_max: int
    m: int | None = None
    c_m: float = 2.0
    a0: float = 1e-4
    theta_rec: float = 0.95
    ema_decay: float = 0.99
    diag_stride: int = 1000
    teacher: str = "canonical"
    ridge: RidgeConfig = field(default_factory=RidgeConfig)
    out_dir: str = "out"
    teacher_copy_debug: bool = False
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if not self.d_list or any(d < 1 for d in self.d_list):
            raise ValueError("d_list must be nonempty with positive entries")
        if self.P < 1 or any(self.P > d for d in self.d_list):
            raise ValueError("need 1 <= P <= min(d_list)")
        if self.teacher not in ("canonical", "random_orthonormal"):
            raise ValueError(f"unknown teacher mode {self.teacher!r}")

    @property
    def width(self) -> int:
        return self.m if self.m is not None else int(round(self.c_m * self.P**2))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["d_list"] = list(self.d_list)
        out["seeds"] = list(self.seeds)
        out["ridge"] = dict(asdict(self.ridge), lambda_grid=list(self.ridge.lambda_grid))
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        version = raw.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported config schema version {version}")
        ridge_raw = raw.pop("ridge", {})
        ridge = RidgeConfig(**dict(ridge_raw, lambda_grid=tuple(ridge_raw.get(
            "lambda_grid", RidgeConfig().lambda_grid))))
        return cls(
            d_list=tuple(raw.pop("d_list")),
            seeds=tuple(raw.pop("seeds")),
            ridge=ridge,
            **raw,
        )


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        raw = json.load(fh)
    return ExperimentConfig.from_dict(apply_env_overrides(raw))


def save_config(cfg: ExperimentConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


_LIST_KEYS = {"d_list", "seeds"}
_INT_KEYS = {"P", "m", "T_max", "diag_stride"}
_FLOAT_KEYS = {"eta_c", "a0", "theta_rec", "ema_decay", "c_m"}


def apply_env_overrides(raw: dict, env: dict | None = None) -> dict:
    """MIL_<KEY> environment variables override top-level config keys."""
    env = os.environ if env is None else env
    out = dict(raw)
    for key in list(out) + ["out_dir", "teacher"]:
        name = ENV_PREFIX + key.upper()
        if name not in env:
            continue
        value = env[name]
        if key in _LIST_KEYS:
            out[key] = [int(v) for v in value.split(",") if v]
        elif key in _INT_KEYS:
            out[key] = int(value)
        elif key in _FLOAT_KEYS:
            out[key] = float(value)
        else:
            out[key] = value
    return out


@dataclass
class RunRecord:
    d: int
    seed: int
    status: str = "ok"            # "ok" | "failed"
    error: str = ""
    stop_step: int | None = None
    recovered: bool = False
    final_ema: list = field(default_factory=list)
    fitted_a: list = field(default_factory=list)
    lambda_star: float | None = None
    val_loss: float | None = None
    test_mse: float | None = None
    test_mse_se: float | None = None
    test_l1: float | None = None
    final_population_loss: float | None = None


def _make_target(cfg: ExperimentConfig, d: int, seed: int) -> TargetModel:
    link = link_from_config(cfg.link)
    directions = make_directions(d, cfg.P, cfg.teacher, seed)
    return TargetModel(d=d, P=cfg.P, link=link, directions=directions)


def run_single(cfg: ExperimentConfig, d: int, seed: int) -> tuple[RunRecord, Trajectory | None]:
    """One full pipeline run; failures are recorded, not raised."""
    record = RunRecord(d=d, seed=seed)
    target = _make_target(cfg, d, seed)
    learner = init_network(d, cfg.width, InitConfig(a0=cfg.a0, seed=seed))
    train_cfg = TrainConfig(
        T_max=cfg.T_max,
        a0=cfg.a0,
        eta_c=cfg.eta_c,
        theta_rec=cfg.theta_rec,
        ema_decay=cfg.ema_decay,
        diag_stride=cfg.diag_stride,
        seed=seed,
    )
    trajectory = None
    try:
        if cfg.teacher_copy_debug:
            V = learner.V.copy()
            V[: cfg.P] = target.directions.T
            trained = LearnerModel(a=learner.a.copy(), V=V)
            stop = 0
        else:
            trained, trajectory, stop = train_stage1(learner, target, train_cfg)
        record.stop_step = stop
        record.recovered = stop is not None
        if trajectory is not None and len(trajectory):
            record.final_ema = [float(v) for v in trajectory.ema_corr[-1]]

        a, lam, val = select_lambda(trained.V, target.link, target, cfg.ridge, seed)
        final = LearnerModel(a=a, V=trained.V)
        record.fitted_a = [float(v) for v in a]
        record.lambda_star = float(lam)
        record.val_loss = float(val)
        res = eval_test_error(
            final, target, cfg.ridge.N_test, rng.substream(seed, rng.TEST_ERROR)
        )
        record.test_mse = res.mse
        record.test_mse_se = res.mse_se
        record.test_l1 = res.l1
        record.final_population_loss = population_loss(final, target).total
    except DegenerateStepError as exc:
        record.status = "failed"
        record.error = str(exc)
    return record, trajectory


@dataclass
class StudyReport:
    config: ExperimentConfig
    records: list
    trajectories: dict            # (d, seed) -> Trajectory
    medians: dict = field(default_factory=dict)    # d -> median stop step
    ratios: list = field(default_factory=list)     # consecutive-d ratios
    success_rate: dict = field(default_factory=dict)

    def record_for(self, d: int, seed: int) -> RunRecord:
        for rec in self.records:
            if rec.d == d and rec.seed == seed:
                return rec
        raise KeyError((d, seed))


def run_study(cfg: ExperimentConfig, threads: int = 1) -> StudyReport:
    """All (d, seed) runs of the config, optionally in a thread pool."""
    jobs = [(d, seed) for d in cfg.d_list for seed in cfg.seeds]
    results = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {key: pool.submit(run_single, cfg, *key) for key in jobs}
            for key, fut in futures.items():
                results[key] = fut.result()
    else:
        for key in jobs:
            results[key] = run_single(cfg, *key)

    records = [results[key][0] for key in jobs]
    trajectories = {key: results[key][1] for key in jobs if results[key][1] is not None}
    report = StudyReport(config=cfg, records=records, trajectories=trajectories)

    for d in cfg.d_list:
        recs = [r for r in records if r.d == d]
        ok = [r for r in recs if r.status == "ok"]
        report.success_rate[d] = len(ok) / len(recs)
        stops = [r.stop_step for r in ok if r.stop_step is not None]
        report.medians[d] = float(np.median(stops)) if stops else None
    for d1, d2 in zip(cfg.d_list, cfg.d_list[1:]):
        usable = (
            report.success_rate[d1] >= 0.8
            and report.success_rate[d2] >= 0.8
            and report.medians[d1]
            and report.medians[d2]
        )
        report.ratios.append(report.medians[d2] / report.medians[d1] if usable else None)
    return report


def scaling_gates(report: StudyReport, band: tuple = RATIO_BAND) -> list:
    """Human-readable gate violations for the scaling study (empty = pass)."""
    problems = []
    for rec in report.records:
        if rec.status != "ok":
            problems.append(f"d={rec.d} seed={rec.seed}: run failed ({rec.error})")
        elif not rec.recovered:
            problems.append(f"d={rec.d} seed={rec.seed}: no recovery before T_max")
    for (d1, d2), ratio in zip(zip(report.config.d_list, report.config.d_list[1:]), report.ratios):
        if ratio is None:
            problems.append(f"ratio {d1}->{d2}: not computable")
        elif not band[0] <= ratio <= band[1]:
            problems.append(f"ratio {d1}->{d2}: {ratio:.2f} outside [{band[0]}, {band[1]}]")
    return problems


@dataclass
class AblationReport:
    config: ExperimentConfig
    records: list                  # per-seed dicts (h2-only runs)
    trajectories: dict             # seed -> Trajectory (h2-only runs)
    companion: dict                # seed -> (stop_step, Trajectory) with h2+h2L
    gates: list = field(default_factory=list)


def ablation_h2_only(
    cfg: ExperimentConfig, companion_cfg: ExperimentConfig | None = None
) -> AblationReport:
    """The higher-order-necessity study: h2-only runs must recover the
    subspace (median norm ratio crossing 1) with no direction reaching
    theta_rec and per-direction shares max_i v_{i,p}^2/||v_{i,<=P}||^2
    drifting at most 20% from their initial values.

    companion_cfg, when given, reruns its seeds with the h2+h2L link from the
    same initializations (recovery resumes there; it also feeds the left
    figure panel). The pair link needs its own step-size/horizon budget, so
    the companion carries a full config instead of reusing cfg's.
    """
    if cfg.link.get("kind") != "h2_only":
        raise ValueError("ablation requires link kind 'h2_only'")
    d = cfg.d_list[0]
    records = []
    trajectories = {}
    companion = {}
    for seed in cfg.seeds:
        target = _make_target(cfg, d, seed)
        learner = init_network(d, cfg.width, InitConfig(a0=cfg.a0, seed=seed))
        train_cfg = TrainConfig(
            T_max=cfg.T_max, a0=cfg.a0, eta_c=cfg.eta_c, theta_rec=cfg.theta_rec,
            ema_decay=cfg.ema_decay, diag_stride=cfg.diag_stride, seed=seed,
        )
        _, traj, stop = train_stage1(learner, target, train_cfg)
        trajectories[seed] = traj

        med = np.median(traj.norm_ratio, axis=1)
        subspace = bool(np.any(med >= 1.0))
        max_corr = float(traj.ema_corr.max())
        drift = float(
            np.max(np.abs(traj.share - traj.share[0][None, :]) / traj.share[0][None, :])
        )
        records.append(
            {
                "seed": seed,
                "stop_step": stop,
                "subspace_recovered": subspace,
                "max_ema_corr": max_corr,
                "max_share_drift": drift,
            }
        )

    if companion_cfg is not None:
        if companion_cfg.link.get("kind") != "h2_h2L":
            raise ValueError("companion config must use the h2_h2L link")
        for seed in companion_cfg.seeds:
            pair_target = _make_target(companion_cfg, d, seed)
            learner = init_network(
                d, companion_cfg.width, InitConfig(a0=companion_cfg.a0, seed=seed)
            )
            pair_train = TrainConfig(
                T_max=companion_cfg.T_max, a0=companion_cfg.a0,
                eta_c=companion_cfg.eta_c, theta_rec=companion_cfg.theta_rec,
                ema_decay=companion_cfg.ema_decay,
                diag_stride=companion_cfg.diag_stride, seed=seed,
            )
            _, pair_traj, pair_stop = train_stage1(learner, pair_target, pair_train)
            companion[seed] = (pair_stop, pair_traj)

    report = AblationReport(
        config=cfg, records=records, trajectories=trajectories, companion=companion
    )
    for rec in records:
        seed = rec["seed"]
        if rec["stop_step"] is not None or rec["max_ema_corr"] >= cfg.theta_rec:
            report.gates.append(f"seed={seed}: h2-only run recovered a direction")
        if not rec["subspace_recovered"]:
            report.gates.append(f"seed={seed}: norm ratio never crossed 1")
        if rec["max_share_drift"] > SHARE_DRIFT_TOLERANCE:
            report.gates.append(
                f"seed={seed}: share drift {rec['max_share_drift']:.3f} > {SHARE_DRIFT_TOLERANCE}"
            )
    for seed, (pair_stop, _) in companion.items():
        if pair_stop is None:
            report.gates.append(f"seed={seed}: pair-link companion did not recover")
    return report


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: str, header: list, rows: list) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _trajectory_rows(traj: Trajectory) -> tuple[list, list]:
    P = traj.max_corr.shape[1]
    header = ["t", "norm_ratio_min", "norm_ratio_med", "norm_ratio_max"]
    header += [f"max_corr_{p + 1}" for p in range(P)]
    header += [f"ema_corr_{p + 1}" for p in range(P)]
    rows = []
    with np.errstate(invalid="ignore"):
        for k in range(len(traj)):
            nr = traj.norm_ratio[k]
            finite = nr[np.isfinite(nr)]
            med = float(np.median(finite)) if finite.size else float("inf")
            row = [int(traj.t[k]), float(np.min(nr)), med, float(np.max(nr))]
            row += [float(v) for v in traj.max_corr[k]]
            row += [float(v) for v in traj.ema_corr[k]]
            rows.append(row)
    return header, rows


def _records_json(records: list) -> list:
    return [dict(rec.__dict__) for rec in records]


def emit_outputs(report: StudyReport, out_dir: str, figure: str | None = None) -> list:
    """Write run.json, per-run trajectory CSVs, summary.csv and (optionally)
    the figure plot-data file. Returns the created paths."""
    cfg = report.config
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    blob = {
        "config": cfg.to_dict(),
        "records": _records_json(report.records),
        "medians": {str(d): report.medians[d] for d in cfg.d_list},
        "ratios": report.ratios,
        "success_rate": {str(d): report.success_rate[d] for d in cfg.d_list},
    }
    run_path = os.path.join(out_dir, "run.json")
    with open(run_path, "w") as fh:
        json.dump(blob, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(run_path)

    for (d, seed), traj in sorted(report.trajectories.items()):
        header, rows = _trajectory_rows(traj)
        path = os.path.join(out_dir, f"traj_{d}_{seed}.csv")
        _write_csv(path, header, rows)
        paths.append(path)

    summary_path = os.path.join(out_dir, "summary.csv")
    rows = [
        [rec.d, rec.seed, rec.stop_step, rec.recovered, rec.test_mse, rec.lambda_star]
        for rec in report.records
    ]
    _write_csv(
        summary_path, ["d", "seed", "stop_step", "recovered", "test_mse", "lambda_star"], rows
    )
    paths.append(summary_path)

    if figure is not None:
        fig_rows = []
        first_seed = report.config.seeds[0]
        for d in cfg.d_list:
            traj = report.trajectories.get((d, first_seed))
            if traj is None:
                continue
            for p in range(cfg.P):
                series = f"d={d},p={p + 1}"
                for k in range(len(traj)):
                    fig_rows.append([series, int(traj.t[k]), float(traj.max_corr[k, p])])
        fig_path = os.path.join(out_dir, f"{figure}.csv")
        _write_csv(fig_path, ["series", "t", "value"], fig_rows)
        paths.append(fig_path)
    return paths


def emit_ablation_outputs(report: AblationReport, out_dir: str) -> list:
    """fig2_left (max correlations, h2-only vs pair companion) and fig2_right
    (per-direction shares of the h2-only run), plus the JSON report."""
    cfg = report.config
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    blob = {
        "config": cfg.to_dict(),
        "records": report.records,
        "gates": report.gates,
    }
    path = os.path.join(out_dir, "ablation.json")
    with open(path, "w") as fh:
        json.dump(blob, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(path)

    seed = cfg.seeds[0]
    rows = []
    traj = report.trajectories[seed]
    for p in range(cfg.P):
        for k in range(len(traj)):
            rows.append([f"h2,p={p + 1}", int(traj.t[k]), float(traj.max_corr[k, p])])
    if seed in report.companion:
        pair_traj = report.companion[seed][1]
        for p in range(cfg.P):
            for k in range(len(pair_traj)):
                rows.append(
                    [f"h2+h2L,p={p + 1}", int(pair_traj.t[k]), float(pair_traj.max_corr[k, p])]
                )
    left = os.path.join(out_dir, "fig2_left.csv")
    _write_csv(left, ["series", "t", "value"], rows)
    paths.append(left)

    rows = []
    for p in range(cfg.P):
        for k in range(len(traj)):
            rows.append([f"p={p + 1}", int(traj.t[k]), float(traj.share[k, p])])
    right = os.path.join(out_dir, "fig2_right.csv")
    _write_csv(right, ["series", "t", "value"], rows)
    paths.append(right)
    return paths


def figure_name_for_link(link: dict) -> str | None:
    if link.get("kind") == "h2_h2L":
        return "fig1_left"
    if link.get("kind") == "abs":
        return "fig1_right"
    return None
