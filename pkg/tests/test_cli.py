import json

import numpy as np
import pytest

from uhdspike.cli import main

MODEL = {"n": 100, "p": 1000,
         "spectrum": {"atoms": [{"value": 2.0, "mult": 500}, {"value": 1.0, "mult": 500}]},
         "spikes": [30.0, 12.0]}


def write_cfg(tmp_path, **extra):
    cfg = {"model": MODEL, "seed": 3, **extra}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def body(path):
    return [line for line in path.read_text().splitlines() if not line.startswith("#")]


def test_mp_check_passes(capsys):
    assert main(["mp-check", "--phi", "4"]) == 0
    assert "OK" in capsys.readouterr().out


def test_predict_outputs(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["predict", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "predictions.json").read_text())
    assert doc["meta"]["seed"] == 3 and len(doc["meta"]["config_sha256"]) == 64
    assert [s["i"] for s in doc["spikes"]] == [1, 2]
    assert doc["spikes"][0]["a"] > doc["edges"]["gamma_plus"]
    rows = body(tmp_path / "o" / "quantiles.csv")
    assert rows[0] == "i,gamma_i" and len(rows) == 101


def test_predict_with_weights(tmp_path):
    w = tmp_path / "w.csv"
    w.write_text("ell\n" + "\n".join(["1.0"] * 1000) + "\n")
    cfg = write_cfg(tmp_path, weights=str(w))
    assert main(["predict", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "predictions.json").read_text())
    s = doc["spikes"][0]
    assert s["projection_sum"] == pytest.approx(1 - s["b"], abs=1e-9)


def test_inadmissible_spike_warns(tmp_path, capsys):
    cfg = {"model": {**MODEL, "spikes": [1e6]}, "seed": 0}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["predict", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    assert "admissible window" in capsys.readouterr().err


def test_density_outputs(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["density", "--config", cfg, "--out", str(tmp_path), "--grid", "64"]) == 0
    rows = body(tmp_path / "density.csv")
    assert rows[0] == "E,rho" and len(rows) == 65
    E, rho = np.array([r.split(",") for r in rows[1:]], dtype=float).T
    assert np.all(rho > 0) and np.all(np.diff(E) > 0)
    assert all(c == format(float(c), ".17g") for r in rows[1:] for c in r.split(","))
    edges = json.loads((tmp_path / "edges.json").read_text())
    assert set(edges) >= {"gamma_minus", "gamma_plus", "c1", "c2", "m1"}
    assert "# mass=" in (tmp_path / "density.csv").read_text()


def test_quantiles_command(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["quantiles", "--config", cfg, "--out", str(tmp_path), "--n", "10"]) == 0
    vals = [float(r.split(",")[1]) for r in body(tmp_path / "quantiles.csv")[1:]]
    assert len(vals) == 10 and vals == sorted(vals, reverse=True)


@pytest.mark.parametrize("argv_extra", [["--grid", "0"], ["--grid", "-3"]])
def test_bad_grid_exits_2_without_output(tmp_path, argv_extra):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "o"
    assert main(["density", "--config", cfg, "--out", str(out), *argv_extra]) == 2
    assert not out.exists()


def test_schema_error_exits_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"model": MODEL, "extra": 1}))
    assert main(["predict", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    path.write_text("{not json")
    assert main(["predict", "--config", str(path)]) == 2


def test_short_grid_exits_2(tmp_path):
    cfg = write_cfg(tmp_path, sweep={"n_grid": [16, 32], "reps": 4})
    out = tmp_path / "o"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 2
    assert not out.exists()


def test_split_support_exits_3(tmp_path):
    cfg = {"model": {"n": 100, "p": 110, "spectrum": {"atoms": [
        {"value": 100.0, "mult": 55}, {"value": 1.0, "mult": 55}]}}}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["density", "--config", str(path), "--out", str(tmp_path / "o")]) == 3


def test_simulate_is_reproducible(tmp_path):
    sweep = {"alpha": 1.3, "n_grid": [16, 24, 32], "reps": 4,
             "quantities": ["outlier_location", "edge_sticking"]}
    cfg = write_cfg(tmp_path, sweep=sweep)
    for name, threads in (("a", "1"), ("b", "2")):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / name),
                     "--threads", threads]) == 0
    for f in ("trials.csv", "ratefit.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    head = body(tmp_path / "a" / "trials.csv")[0]
    assert head == "n,p,quantity,median_err,q25,q75,reps"


def mp_cfg(tmp_path, spikes=(4.0,)):
    cfg = {"model": {"n": 250, "p": 1000, "spectrum": {"atoms": [{"value": 1.0, "mult": 1000}]},
                     "spikes": list(spikes)}}
    path = tmp_path / "mp.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_mp_edges_and_predictions(tmp_path):
    cfg = mp_cfg(tmp_path)
    assert main(["density", "--config", cfg, "--out", str(tmp_path), "--grid", "50"]) == 0
    e = json.loads((tmp_path / "edges.json").read_text())
    for k, v in {"gamma_minus": 0.5, "gamma_plus": 4.5, "c1": -2 / 3, "c2": 2.0, "m1": 1.0}.items():
        assert e[k] == pytest.approx(v, abs=1e-12)
    mass = [l for l in (tmp_path / "density.csv").read_text().splitlines() if l.startswith("# mass=")]
    assert abs(float(mass[0].split("=")[1]) - 1) < 1e-6
    assert main(["predict", "--config", cfg, "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "predictions.json").read_text())["spikes"][0]
    assert s["a"] == pytest.approx(5.0, abs=1e-10) and s["b"] == pytest.approx(0.375, abs=1e-10)


def test_subcritical_only_reports(tmp_path):
    cfg = mp_cfg(tmp_path, spikes=(0.5,))
    assert main(["predict", "--config", cfg, "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "predictions.json").read_text())["spikes"][0]
    assert s["admissible"] is False and s["a"] is None


def test_config_file_untouched(tmp_path):
    cfg = mp_cfg(tmp_path)
    before = open(cfg, "rb").read()
    main(["predict", "--config", cfg, "--out", str(tmp_path)])
    assert open(cfg, "rb").read() == before
