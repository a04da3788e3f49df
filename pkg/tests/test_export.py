"""Tests for CSV export and run manifests."""
from io import StringIO

import numpy as np
import pandas as pd

from models.analysis import MomentEstimate, fit_loglog
from models.schemes import Trajectory
from utils.config_parser import ExperimentConfig, parse_config
from utils.export_csv import (
    generate_identity_csv,
    generate_moments_csv,
    generate_rate_csv,
    generate_trajectory_csv,
    get_output_filename,
    write_text,
)
from utils.manifest import RunManifest, read_manifest, render_manifest, write_manifest


def test_trajectory_csv():
    trajectory = Trajectory(times=np.array([0.0, 0.5]), states=np.array([[0.0, 1.0], [-0.1, 1.0 / 3.0]]))
    text = generate_trajectory_csv(trajectory)
    lines = text.splitlines()
    assert lines[0] == "t,x1,x2"
    assert len(lines) == 3
    assert "\r" not in text
    frame = pd.read_csv(StringIO(text), float_precision="round_trip")
    assert frame["x2"].iloc[1] == 1.0 / 3.0


def test_rate_csv():
    fit = fit_loglog([16, 32, 64], [0.1, 0.05, 0.025], [0.01, 0.005, 0.002])
    lines = generate_rate_csv(fit).splitlines()
    assert lines[0] == "n,mse,stderr"
    assert lines[1].startswith("16,0.10000000000000001,")


def test_moments_csv():
    estimates = [
        MomentEstimate(value=1.0, std_error=0.0, n_paths=10, functional="gap[0,1]^-p", p_or_q=0.0, t=1.0),
        MomentEstimate(value=2.5, std_error=0.1, n_paths=10, functional="|X|^2q", p_or_q=1.0, t=1.0,
                       overflow_count=2, flags=["overflow=2", "outside-guarantee"]),
    ]
    frame = pd.read_csv(StringIO(generate_moments_csv(estimates)))
    assert list(frame.columns) == ["functional", "p_or_q", "t", "value", "stderr", "n_paths", "flags"]
    assert frame["flags"].tolist() == ["ok", "overflow=2;outside-guarantee"]
    assert frame["value"].iloc[0] == 1.0
    assert frame["stderr"].iloc[0] == 0.0


def test_identity_csv():
    lines = generate_identity_csv([2.0], [0.0], [0.0]).splitlines()
    assert lines == ["sample,max_term,residual,relative", "0,2,0,0"]


def test_output_filename():
    assert get_output_filename("moments", 3) == "moments_seed3.csv"
    assert get_output_filename("identity-check", 0) == "identity-check_seed0.csv"


def test_write_text_creates_directories(tmp_path):
    path = write_text(tmp_path / "a" / "b.csv", "x\n")
    assert path.read_text() == "x\n"


def test_manifest_round_trip(tmp_path):
    config = parse_config(text="model.d=3\nrun.seed=9\n")
    manifest = RunManifest(
        command="simulate",
        config=config,
        version="1.0.0",
        duration_seconds=1.23456,
        exit_code=0,
        outputs={"trajectory": "runs/simulate_seed9.csv"},
        flags={"overflow": 0},
    )
    path = write_manifest(manifest, tmp_path)
    assert path.name == "simulate.manifest"
    values = read_manifest(path)
    assert values["toolkit.version"] == "1.0.0"
    assert values["run.command"] == "simulate"
    assert values["run.duration_seconds"] == "1.235"
    assert values["config.model.d"] == "3"
    assert values["config.run.seed"] == "9"
    assert values["config.model.v"] == ""
    assert values["output.trajectory"] == "runs/simulate_seed9.csv"
    assert values["flags.overflow"] == "0"


def test_manifest_records_every_config_key():
    text = render_manifest(RunManifest(command="validate", config=ExperimentConfig(), version="1.0.0"))
    assert "config.model.lambda=1.0" in text
    assert "config.run.out=runs" in text
    assert "# [config.model]" in text
