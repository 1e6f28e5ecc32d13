import json
import os

import pytest

from mindex import cli, experiment
from mindex.experiment import (
    ExperimentConfig,
    apply_env_overrides,
    emit_outputs,
    figure_name_for_link,
    load_config,
    run_single,
    run_study,
    save_config,
    scaling_gates,
)
from mindex.ridge import RidgeConfig

FAST_RIDGE = RidgeConfig(N=800, lambda_grid=(1e-6, 1e-4, 1e-2), N_val=400, N_test=5000)


def _fast_config(**kw):
    base = dict(
        d_list=(16,),
        P=2,
        link={"kind": "h2_h2L", "L": 2},
        seeds=(1, 2),
        eta_c=1e-3,
        T_max=150_000,
        m=12,
        a0=1e-4,
        diag_stride=500,
        ridge=FAST_RIDGE,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        _fast_config(seeds=())
    with pytest.raises(ValueError):
        _fast_config(d_list=())
    with pytest.raises(ValueError):
        _fast_config(P=20)  # P > d
    with pytest.raises(ValueError):
        _fast_config(teacher="rotated")


def test_width_rule():
    assert _fast_config(m=None, c_m=2.0, P=5, d_list=(32,)).width == 50
    assert _fast_config(m=7).width == 7


def test_config_round_trip(tmp_path):
    cfg = _fast_config()
    path = str(tmp_path / "config.json")
    save_config(cfg, path)
    assert load_config(path) == cfg


def test_env_overrides():
    raw = _fast_config().to_dict()
    env = {
        "MIL_SEEDS": "7,8,9",
        "MIL_T_MAX": "123",
        "MIL_ETA_C": "0.5",
        "MIL_OUT_DIR": "elsewhere",
        "MIL_TEACHER": "random_orthonormal",
    }
    out = apply_env_overrides(raw, env)
    assert out["seeds"] == [7, 8, 9]
    assert out["T_max"] == 123
    assert out["eta_c"] == 0.5
    assert out["out_dir"] == "elsewhere"
    assert out["teacher"] == "random_orthonormal"


def test_run_single_recovers_small_problem():
    # loose quality gate here: the tight 2.5%-of-null gate lives in the
    # acceptance suite, with a finer stage-1 stop; at theta_rec = 0.95 the
    # recovered directions carry eps_v ~ 0.05 of transverse mass
    cfg = _fast_config()
    record, traj = run_single(cfg, 16, 1)
    assert record.status == "ok"
    assert record.recovered and record.stop_step is not None
    assert record.test_mse is not None and record.test_mse < 0.25 * 2 * cfg.P
    assert record.lambda_star in FAST_RIDGE.lambda_grid
    assert len(record.final_ema) == cfg.P
    assert traj is not None and len(traj) >= 1


def test_run_single_teacher_copy_debug():
    cfg = _fast_config(teacher_copy_debug=True)
    record, traj = run_single(cfg, 16, 3)
    assert record.status == "ok"
    assert record.stop_step == 0
    assert record.test_mse < 1e-6


def test_run_single_unreachable_threshold_reports_none():
    cfg = _fast_config(T_max=300, link={"kind": "h2_only"})
    record, traj = run_single(cfg, 16, 1)
    assert record.status == "ok"
    assert record.stop_step is None and not record.recovered
    assert record.test_mse is not None  # report still complete


def test_run_study_medians_and_single_d_ratios():
    cfg = _fast_config()
    report = run_study(cfg)
    assert report.ratios == []
    assert report.medians[16] is not None
    assert report.success_rate[16] == 1.0
    assert not scaling_gates(report)


def test_run_study_threads_match_serial():
    cfg = _fast_config()
    serial = run_study(cfg, threads=1)
    parallel = run_study(cfg, threads=2)
    for rec_s, rec_p in zip(serial.records, parallel.records):
        assert rec_s.__dict__ == rec_p.__dict__


def test_emit_outputs_files_and_determinism(tmp_path):
    cfg = _fast_config(out_dir=str(tmp_path / "a"))
    report = run_study(cfg)
    paths = emit_outputs(report, cfg.out_dir, figure=figure_name_for_link(cfg.link))
    names = {os.path.basename(p) for p in paths}
    assert {"run.json", "summary.csv", "fig1_left.csv", "traj_16_1.csv", "traj_16_2.csv"} <= names

    with open(os.path.join(cfg.out_dir, "summary.csv")) as fh:
        header = fh.readline().strip()
    assert header == "d,seed,stop_step,recovered,test_mse,lambda_star"

    report2 = run_study(cfg)
    out_b = str(tmp_path / "b")
    emit_outputs(report2, out_b, figure=figure_name_for_link(cfg.link))
    for name in sorted(names):
        with open(os.path.join(cfg.out_dir, name), "rb") as fh:
            first = fh.read()
        with open(os.path.join(out_b, name), "rb") as fh:
            second = fh.read()
        assert first == second, f"{name} not byte-identical"


def test_run_json_contents(tmp_path):
    cfg = _fast_config(out_dir=str(tmp_path))
    report = run_study(cfg)
    emit_outputs(report, cfg.out_dir)
    with open(os.path.join(cfg.out_dir, "run.json")) as fh:
        blob = json.load(fh)
    assert blob["config"]["P"] == cfg.P
    assert len(blob["records"]) == len(cfg.seeds)
    assert all(rec["lambda_star"] is not None for rec in blob["records"])
    assert all(len(rec["fitted_a"]) == cfg.width for rec in blob["records"])


def test_ablation_small_scale_with_companion(tmp_path):
    # desk-size version of the necessity study: h2-only recovers the
    # subspace but no direction; switching the link on the same seed resumes
    # direction recovery
    cfg = _fast_config(
        d_list=(24,), P=3, m=18, link={"kind": "h2_only"}, seeds=(1, 2),
        eta_c=1e-3, T_max=25_000, diag_stride=250, out_dir=str(tmp_path),
    )
    companion = experiment.ExperimentConfig(
        **dict(cfg.to_dict(), link={"kind": "h2_h2L", "L": 2}, seeds=[1],
               eta_c=3e-4, T_max=250_000)
    )
    report = experiment.ablation_h2_only(cfg, companion_cfg=companion)
    assert report.gates == []
    assert all(rec["subspace_recovered"] for rec in report.records)
    assert all(rec["stop_step"] is None for rec in report.records)
    assert report.companion[1][0] is not None  # pair link recovers

    paths = experiment.emit_ablation_outputs(report, cfg.out_dir)
    names = {os.path.basename(p) for p in paths}
    assert {"ablation.json", "fig2_left.csv", "fig2_right.csv"} <= names
    with open(os.path.join(cfg.out_dir, "fig2_left.csv")) as fh:
        body = fh.read()
    assert "h2,p=1" in body and "h2+h2L,p=1" in body


def test_ablation_requires_h2_only_link():
    cfg = _fast_config()
    with pytest.raises(ValueError):
        experiment.ablation_h2_only(cfg)


def test_figure_name_mapping():
    assert figure_name_for_link({"kind": "h2_h2L", "L": 2}) == "fig1_left"
    assert figure_name_for_link({"kind": "abs"}) == "fig1_right"
    assert figure_name_for_link({"kind": "h2_only"}) is None


def test_cli_gf_oracle(tmp_path, capsys):
    code = cli.main(
        ["gf-oracle", "--d", "32", "--P", "4", "--L", "2", "--tau-max", "2.0",
         "--dt", "0.001", "--out", str(tmp_path)]
    )
    assert code == 0
    path = tmp_path / "gf_trajectory.csv"
    assert path.exists()
    header = path.read_text().splitlines()[0].split(",")
    assert header[0] == "tau" and header[-1] == "norm_ratio"
    assert len(header) == 2 + 16


def test_cli_init_stats_small(tmp_path):
    code = cli.main(["init-stats", "--trials", "800", "--seed", "3", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "init_stats.json").exists()


def test_cli_gronwall_small(tmp_path):
    code = cli.main(["gronwall-verify", "--trials", "400", "--seed", "3", "--out", str(tmp_path)])
    assert code == 0
    blob = json.loads((tmp_path / "gronwall.json").read_text())
    assert set(blob) == {"linear", "zero_drift", "polynomial"}
    assert all(entry["passed"] for entry in blob.values())


def test_cli_run_and_exit_codes(tmp_path):
    cfg = _fast_config(out_dir=str(tmp_path / "ignored"))
    cfg_path = str(tmp_path / "cfg.json")
    save_config(cfg, cfg_path)
    out = str(tmp_path / "runout")
    code = cli.main(["run", "--config", cfg_path, "--out", out, "--seeds", "1"])
    assert code == 0
    assert os.path.exists(os.path.join(out, "summary.csv"))
    assert os.path.exists(os.path.join(out, "traj_16_1.csv"))
    assert not os.path.exists(os.path.join(out, "traj_16_2.csv"))  # seeds override

    code = cli.main(["run", "--config", str(tmp_path / "missing.json"), "--out", out])
    assert code == 1


def test_cli_scaling_exit_codes(tmp_path):
    # recovering single-d config: no gate violations -> 0
    cfg = _fast_config(seeds=(1,), out_dir=str(tmp_path / "ok"))
    ok_path = str(tmp_path / "ok.json")
    save_config(cfg, ok_path)
    assert cli.main(["scaling", "--config", ok_path]) == 0

    # h2-only config cannot reach theta_rec -> acceptance-threshold exit 2
    bad = _fast_config(
        seeds=(1,), link={"kind": "h2_only"}, T_max=2000, out_dir=str(tmp_path / "bad")
    )
    bad_path = str(tmp_path / "bad.json")
    save_config(bad, bad_path)
    assert cli.main(["scaling", "--config", bad_path]) == 2


def test_cli_ablation_small(tmp_path):
    cfg = _fast_config(
        d_list=(24,), P=3, m=18, link={"kind": "h2_only"}, seeds=(1,),
        eta_c=1e-3, T_max=25_000, diag_stride=250, out_dir=str(tmp_path),
    )
    cfg_path = str(tmp_path / "ablation.json")
    save_config(cfg, cfg_path)
    code = cli.main(
        ["ablation", "--config", cfg_path, "--companion-eta-c", "0.0003",
         "--companion-t-max", "250000"]
    )
    assert code == 0
    assert (tmp_path / "fig2_left.csv").exists()
    assert (tmp_path / "fig2_right.csv").exists()


def test_cli_rejects_unknown_command():
    with pytest.raises(SystemExit):
        cli.main(["nope"])


def test_trajectory_csv_schema(tmp_path):
    cfg = _fast_config(out_dir=str(tmp_path))
    report = run_study(cfg)
    emit_outputs(report, cfg.out_dir)
    path = os.path.join(cfg.out_dir, "traj_16_1.csv")
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    assert header == [
        "t", "norm_ratio_min", "norm_ratio_med", "norm_ratio_max",
        "max_corr_1", "max_corr_2", "ema_corr_1", "ema_corr_2",
    ]
