r"""Tests for config parsing, presets, artifact emission and the entry point."""

import pytest

from muskat.cli import (
    ExperimentConfig,
    main,
    parse_config,
    run_experiment,
    run_preset,
    verify_norms,
    verify_velocity,
)
from muskat.initial_data import CornerSpec


def _write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def test_parse_minimal_config(tmp_path):
    cfg = parse_config(_write(tmp_path, """
        grid.n_points = 256
        corner.1.location = 8.0
    """))
    assert cfg.n_points == 256
    assert cfg.period == 16.0          # default
    assert cfg.epsilon == 0.05         # default
    assert cfg.times == (0.05, 0.1, 0.2)
    assert len(cfg.corners) == 1
    assert cfg.corners[0].location == 8.0
    assert cfg.corners[0].amplitude_left == 1.0


def test_parse_full_config(tmp_path):
    cfg = parse_config(_write(tmp_path, """
        # a comment line
        grid.n_points = 512
        grid.period = 16.0
        epsilon = 0.025
        seed = 7
        times = 0.05, 0.1
        solver.T = 0.15
        solver.n_max = 1
        solver.max_iter = 3
        solver.tol_factor = 1e-5
        quadrature.outer_periods = 2
        quadrature.grading = uniform
        output.reports = snapshots, norms
        corner.1.location = 4.0
        corner.1.amplitude_left = 1.6
        corner.1.amplitude_right = 0.4
        corner.2.location = 10.0
        corner.2.profile = mollified_sign
        corner.2.width = 0.5
    """))
    assert cfg.epsilon == 0.025 and cfg.seed == 7
    assert cfg.solver_n_max == 1 and cfg.solver_max_iter == 3
    assert cfg.quad_grading == "uniform"
    assert cfg.reports == ("snapshots", "norms")
    assert cfg.corners[1].profile == "mollified_sign"


def test_unknown_key_rejected_with_line(tmp_path):
    path = _write(tmp_path, "grid.n_points = 256\nbogus.key = 1\n"
                            "corner.1.location = 8.0\n")
    with pytest.raises(ValueError, match="line 2.*bogus.key"):
        parse_config(path)


def test_bad_value_reports_line(tmp_path):
    path = _write(tmp_path, "grid.n_points = many\ncorner.1.location = 8.0\n")
    with pytest.raises(ValueError, match="line 1"):
        parse_config(path)


def test_corners_too_close_names_both(tmp_path):
    path = _write(tmp_path, """
        corner.1.location = 8.0
        corner.2.location = 8.1
    """)
    with pytest.raises(ValueError, match="corner.1 and corner.2"):
        parse_config(path)


def test_n_points_power_of_two_required(tmp_path):
    path = _write(tmp_path, "grid.n_points = 300\ncorner.1.location = 8.0\n")
    with pytest.raises(ValueError, match="power of two"):
        parse_config(path)


def test_unknown_profile_rejected(tmp_path):
    path = _write(tmp_path, "corner.1.location = 8.0\n"
                            "corner.1.profile = wavelet\n")
    with pytest.raises(ValueError, match="profile"):
        parse_config(path)


def test_missing_corner_location(tmp_path):
    path = _write(tmp_path, "corner.1.amplitude_left = 1.0\n")
    with pytest.raises(ValueError, match="corner.1.*location"):
        parse_config(path)


def test_times_beyond_horizon_rejected():
    cfg = ExperimentConfig(corners=[CornerSpec(8.0, 1.0, 1.0)],
                           times=(0.5,), solver_T=0.2)
    with pytest.raises(ValueError, match="solver.T"):
        cfg.validate()


def test_unknown_report_rejected():
    cfg = ExperimentConfig(corners=[CornerSpec(8.0, 1.0, 1.0)],
                           reports=("snapshots", "movies"))
    with pytest.raises(ValueError, match="movies"):
        cfg.validate()


# ---------------------------------------------------------------------------
# experiment runs
# ---------------------------------------------------------------------------

def test_zero_amplitude_trivial_run(tmp_path):
    cfg = ExperimentConfig(n_points=128, epsilon=0.0,
                           corners=[CornerSpec(8.0, 1.0, 1.0)])
    failures = run_experiment(cfg, tmp_path)
    assert failures == 0
    summary = (tmp_path / "summary.txt").read_text()
    assert "PASS zero-data-norms" in summary
    assert "FAIL" not in summary


def test_run_emits_artifacts(tmp_path):
    cfg = ExperimentConfig(n_points=128,
                           corners=[CornerSpec(8.0, 1.0, 1.0)],
                           reports=("snapshots", "norms", "contraction"))
    failures = run_experiment(cfg, tmp_path)
    assert failures == 0
    for name in ("snapshot_t0.05.csv", "snapshot_t0.1.csv",
                 "snapshot_t0.2.csv", "norms.csv", "contraction.csv",
                 "summary.txt", "snapshots.png", "norms_z2.png",
                 "contraction.png"):
        assert (tmp_path / name).exists(), name
    lines = (tmp_path / "snapshot_t0.05.csv").read_text().splitlines()
    assert lines[0].startswith("#")           # units comment
    assert lines[1] == "x,h,g_1,q"            # header row
    norm_lines = (tmp_path / "norms.csv").read_text().splitlines()
    assert norm_lines[1] == "kind,t,k,weighted_l2,weighted_sup"


def test_run_deterministic(tmp_path):
    cfg = ExperimentConfig(n_points=128,
                           corners=[CornerSpec(8.0, 1.0, 1.0)],
                           reports=("snapshots", "norms"))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    run_experiment(cfg, out_a)
    run_experiment(cfg, out_b)
    for name in ("snapshot_t0.1.csv", "norms.csv", "summary.txt"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def test_unknown_preset_lists_available(tmp_path):
    with pytest.raises(ValueError, match="single-symmetric"):
        run_preset("nope", tmp_path)


def test_preset_single_symmetric(tmp_path):
    failures = run_preset("single-symmetric", tmp_path)
    assert failures == 0
    summary = (tmp_path / "summary.txt").read_text()
    assert "PASS contraction-ratio" in summary
    assert "PASS self-similar-collapse" in summary
    assert "FAIL" not in summary


def test_preset_asymmetric_pair(tmp_path):
    failures = run_preset("asymmetric-pair", tmp_path)
    assert failures == 0
    track = (tmp_path / "corner_track.csv").read_text().splitlines()
    assert track[1] == "t,corner,position,displacement"
    summary = (tmp_path / "summary.txt").read_text()
    assert "PASS displacement-monotone" in summary


def test_preset_contraction_study(tmp_path):
    failures = run_preset("contraction-study", tmp_path)
    assert failures == 0
    summary = (tmp_path / "summary.txt").read_text()
    assert "PASS contraction-ratio-eps-0.05" in summary
    assert "PASS contraction-ratio-eps-0.025" in summary


# ---------------------------------------------------------------------------
# verification commands
# ---------------------------------------------------------------------------

def test_verify_velocity(tmp_path):
    failures = verify_velocity(tmp_path, n_points=512)
    assert failures == 0
    lines = (tmp_path / "velocity.csv").read_text().splitlines()
    assert lines[1] == "t,y,V,V1,V2,bound_rhs"
    summary = (tmp_path / "summary.txt").read_text()
    assert "PASS symmetric-cancellation" in summary
    assert "PASS v1-log-growth" in summary


def test_verify_norms(tmp_path):
    failures = verify_norms(tmp_path, n_points=512)
    assert failures == 0
    summary = (tmp_path / "summary.txt").read_text()
    assert "PASS z1-bounded" in summary
    assert "PASS z2-divergence-control" in summary


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def test_main_run_config(tmp_path):
    cfg = _write(tmp_path, """
        grid.n_points = 128
        corner.1.location = 8.0
        output.reports = snapshots, norms
    """)
    rc = main(["run", str(cfg), "--out", str(tmp_path / "out"), "--seed", "3"])
    assert rc == 0
    summary = (tmp_path / "out" / "summary.txt").read_text()
    assert "# seed: 3" in summary


def test_main_epsilon_override(tmp_path):
    cfg = _write(tmp_path, """
        grid.n_points = 128
        corner.1.location = 8.0
        output.reports = norms
    """)
    rc = main(["run", str(cfg), "--out", str(tmp_path / "out"),
               "--epsilon", "0"])
    assert rc == 0
    assert "zero-data-norms" in (tmp_path / "out" / "summary.txt").read_text()


def test_main_unknown_preset_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["preset", "nope", "--out", str(tmp_path)])
    assert exc.value.code == 2
