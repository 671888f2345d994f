import json

import numpy as np
import pytest

from weakkam.cli import main
from weakkam.geometry import Configuration, save_configuration
from weakkam.models import cosine_potential, free_model, mechanical_model, write_model_file


def write_config(path, **kv):
    with open(path, "w") as fh:
        for k, v in kv.items():
            fh.write(f"{k} = {v}\n")
    return path


@pytest.fixture
def cosine_model_file(tmp_path):
    model = mechanical_model(1, external=cosine_potential(1), c=0.0)
    path = tmp_path / "cosine.model"
    write_model_file(path, model)
    return path


@pytest.fixture
def free_model_file(tmp_path):
    path = tmp_path / "free.model"
    write_model_file(path, free_model(1, c=1.0))
    return path


def test_oracle_hbar_mode(tmp_path, free_model_file, capsys):
    cfg = write_config(tmp_path / "run.cfg", mode="oracle-hbar",
                       model=free_model_file, c=1.0)
    rc = main(["--config", str(cfg), "--output", str(tmp_path / "out")])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith("hbar = 0.5")
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["mode"] == "oracle-hbar"
    assert manifest["result"]["hbar"] == pytest.approx(0.5, abs=1e-9)


def test_missing_model_file_is_io_error(tmp_path):
    cfg = write_config(tmp_path / "run.cfg", mode="oracle-hbar",
                       model="nowhere.model", c=1.0)
    assert main(["--config", str(cfg), "--output", str(tmp_path)]) == 4


def test_missing_config_is_io_error(tmp_path):
    assert main(["--config", str(tmp_path / "none.cfg")]) == 4


def test_bad_mode_is_validation_error(tmp_path):
    cfg = write_config(tmp_path / "run.cfg", mode="fly")
    assert main(["--config", str(cfg), "--output", str(tmp_path)]) == 2


def test_discounted_validation_error(tmp_path, cosine_model_file):
    m0 = tmp_path / "m0.csv"
    save_configuration(m0, Configuration([[0.3]]))
    cfg = write_config(tmp_path / "run.cfg", mode="discounted",
                       model=cosine_model_file, m0=m0, eps_list="-0.1, 0.2, 0.3")
    assert main(["--config", str(cfg), "--output", str(tmp_path / "out")]) == 2


def test_cell_nonconvergence_exit_code(tmp_path, cosine_model_file):
    model = mechanical_model(1, external=cosine_potential(1), c=2.0)
    path = tmp_path / "c2.model"
    write_model_file(path, model)
    cfg = write_config(tmp_path / "run.cfg", mode="cell", model=path,
                       grid_nodes=64, h=0.05, tol="1e-9", max_iters=3)
    assert main(["--config", str(cfg), "--output", str(tmp_path / "out")]) == 3


def test_distweak_mode(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    save_configuration(a, Configuration([[0.0], [0.5]]))
    save_configuration(b, Configuration([[0.45], [0.95]]))
    cfg = write_config(tmp_path / "run.cfg", mode="distweak", a=a, b=b)
    rc = main(["--config", str(cfg), "--output", str(tmp_path / "out")])
    assert rc == 0
    assert "dist_weak = 0.05" in capsys.readouterr().out


def test_flow_mode_writes_trajectory(tmp_path, cosine_model_file):
    start, mom = tmp_path / "start.csv", tmp_path / "mom.csv"
    save_configuration(start, Configuration([[0.3]]))
    save_configuration(mom, Configuration([[0.1]]))
    cfg = write_config(tmp_path / "run.cfg", mode="flow", model=cosine_model_file,
                       start=start, momentum=mom, t_span=1.0, h=0.01)
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "--output", str(out)]) == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,particle,x0,p0"
    assert len(lines) == 102


def test_cell_and_downstream_modes(tmp_path, cosine_model_file, capsys):
    out_cell = tmp_path / "cell"
    cfg_cell = write_config(tmp_path / "cell.cfg", mode="cell",
                            model=cosine_model_file, grid_nodes=200, h=0.01,
                            tol="1e-7", max_iters=20000)
    assert main(["--config", str(cfg_cell), "--output", str(out_cell)]) == 0
    field_path = out_cell / "field.csv"
    assert field_path.exists()

    out_cal = tmp_path / "cal"
    cfg_cal = write_config(tmp_path / "cal.cfg", mode="calibrate",
                           model=cosine_model_file, field=field_path,
                           n_seeds=3, t_forward=0.5, t_backward=0.5, h="1e-3")
    assert main(["--config", str(cfg_cal), "--output", str(out_cal), "--seed", "7"]) == 0
    summaries = json.loads((out_cal / "curves.json").read_text())
    assert len(summaries) == 3
    assert all(s["residual_per_unit_time"] < 5e-2 for s in summaries)

    out_meas = tmp_path / "meas"
    cfg_meas = write_config(tmp_path / "meas.cfg", mode="measure",
                            model=cosine_model_file, field=field_path,
                            n_seeds=2, t_relax=4.0, t_total=50.0, h="2e-3",
                            thin=25)
    assert main(["--config", str(cfg_meas), "--output", str(out_meas), "--seed", "7"]) == 0
    report = json.loads((out_meas / "measure_report.json").read_text())
    assert report["minimizing_gap"] < 1e-2
    assert (out_meas / "measure.csv").exists()


def test_audit_mode(tmp_path, cosine_model_file):
    cfg = write_config(tmp_path / "run.cfg", mode="audit", model=cosine_model_file,
                       n_probes=500, radius=2.0)
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "--output", str(out), "--seed", "3"]) == 0
    payload = json.loads((out / "audit.json").read_text())
    assert payload["gamma_lower"] == 0.5
    assert payload["violations"] == []


def test_runs_are_reproducible(tmp_path, cosine_model_file):
    cfg = write_config(tmp_path / "run.cfg", mode="audit", model=cosine_model_file,
                       n_probes=200, radius=1.5)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["--config", str(cfg), "--output", str(out1), "--seed", "42"]) == 0
    assert main(["--config", str(cfg), "--output", str(out2), "--seed", "42"]) == 0
    assert (out1 / "audit.json").read_bytes() == (out2 / "audit.json").read_bytes()


def test_discounted_mode_free_sweep(tmp_path, free_model_file, capsys):
    m0 = tmp_path / "m0.csv"
    save_configuration(m0, Configuration([[0.2], [0.6]]))
    cfg = write_config(tmp_path / "run.cfg", mode="discounted",
                       model=free_model_file, m0=m0, eps_list="0.4, 0.2, 0.1",
                       value_tol="1e-3", h=0.05, tol_grad="1e-8")
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "--output", str(out)]) == 0
    sweep = (out / "sweep.csv").read_text().splitlines()
    assert sweep[0].startswith("epsilon,value,eps_times_value")
    assert len(sweep) == 4
    stdout = capsys.readouterr().out
    hbar = float(stdout.split("=")[1])
    assert hbar == pytest.approx(0.5, abs=5e-3)
