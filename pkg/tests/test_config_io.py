import json

import numpy as np
import pytest

from sgflow import io
from sgflow.config import load_config, parse_config
from sgflow.errors import ConfigError
from sgflow.optimizer import Ball, Box
from sgflow.spectral import NORMALIZATION, SpectralField, random_field
from sgflow.state import Trajectory

MINIMAL = {"nu": 0.1, "alpha": 0.5, "T": 1, "K": 4, "dt": 1e-3}


def cfg(**extra):
    return {**MINIMAL, **extra}


# ---------------------------------------------------------------- schema


def test_minimal_config():
    pb = load_config(cfg())
    assert pb.cfg.N == 1000 and pb.cfg.scheme == "RK4" and pb.cfg.lam == 0.0
    assert pb.y0 is None and pb.rhos == [0.1, 0.01, 0.001]
    assert pb.echo["lambda"] == 0.0


@pytest.mark.parametrize("patch, field", [
    ({"alpha": -1}, "alpha"),
    ({"nu": 0}, "nu"),
    ({"K": 0}, "K"),
    ({"scheme": "Euler"}, "scheme"),
    ({"dt": 2.0}, "dt"),
    ({"lambda": -1e-3}, "lambda"),
    ({"y0": [{"k": 0, "m": 1, "c": 1.0}]}, "y0"),
    ({"bogus": 1}, "bogus"),
    ({"admissible": {"kind": "ball"}}, "admissible"),
    ({"admissible": {"kind": "box", "lo": 1, "hi": -1}}, "admissible"),
    ({"u": {"modes": [], "random": 1.0}}, "u"),
])
def test_rejections_name_the_field(patch, field):
    with pytest.raises(ConfigError) as info:
        load_config(cfg(**patch))
    assert str(info.value).startswith(field)


def test_mode_outside_truncation():
    with pytest.raises(ConfigError, match=r"y0\.0: mode \(5,1\)"):
        load_config(cfg(y0=[{"k": 5, "m": 1, "c": 1.0}]))


def test_control_intervals_must_divide_steps():
    with pytest.raises(ConfigError, match="^u: "):
        load_config(cfg(n_intervals=3, u={"random": 1.0}))


def test_fields_and_controls_resolve():
    pb = load_config(cfg(
        y0=[{"k": 1, "m": 1, "c": 1.0}, {"k": 2, "m": 3, "c": -0.5}],
        u={"values": [[{"k": 1, "m": 2, "c": 1.0}], [{"k": 2, "m": 2, "c": 2.0}]]},
        w={"modes": [{"k": 1, "m": 1, "c": 3.0}], "intervals": 4},
    ))
    assert pb.y0.coeff[0, 0] == 1.0 and pb.y0.coeff[1, 2] == -0.5
    assert pb.u.n_intervals == 2 and pb.u.values[1, 1, 1] == 2.0
    assert pb.w.n_intervals == 4 and np.all(pb.w.values[:, 0, 0] == 3.0)


def test_random_fields_are_seeded_per_item():
    a = load_config(cfg(y0={"random": 1.0}, y_d={"random": 1.0}), seed=3)
    b = load_config(cfg(y0={"random": 1.0}), seed=3)
    c = load_config(cfg(y0={"random": 1.0}), seed=4)
    assert np.array_equal(a.y0.coeff, b.y0.coeff)
    assert not np.array_equal(a.y0.coeff, a.y_d.coeff)
    assert not np.array_equal(b.y0.coeff, c.y0.coeff)


def test_target_from_control_and_relative_radius():
    pb = load_config(cfg(dt=1e-2, y0={"random": 1.0}, y_d={"from_control": {"random": 2.0, "intervals": 4}},
                         admissible={"kind": "ball", "R_over_target": 2.0}))
    assert isinstance(pb.y_d, Trajectory) and pb.y_d.N == 100
    assert isinstance(pb.admissible, Ball) and pb.admissible.R > 0


def test_relative_radius_needs_control_target():
    with pytest.raises(ConfigError, match="R_over_target"):
        load_config(cfg(y_d={"random": 1.0}, admissible={"kind": "ball", "R_over_target": 2.0}))


def test_box_admissible():
    pb = load_config(cfg(admissible={"kind": "box", "lo": -1, "hi": 2}))
    assert isinstance(pb.admissible, Box)


def test_file_references(tmp_path, rng):
    f = random_field(4, rng)
    io.write_field_csv(tmp_path / "y0.csv", f, 0.5)
    io.write_field_csv(tmp_path / "u0.csv", f * 2.0, 0.5)
    (tmp_path / "run.json").write_text(json.dumps(cfg(y0={"file": "y0.csv"}, u={"files": ["u0.csv", "y0.csv"]})))
    pb = parse_config(tmp_path / "run.json")
    assert np.array_equal(pb.y0.coeff, f.coeff)
    assert np.array_equal(pb.u.values[0], 2 * f.coeff)
    with pytest.raises(ConfigError, match="not found"):
        load_config(cfg(y0={"file": "missing.csv"}), tmp_path)


def test_parse_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "none.json")
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_config(tmp_path / "bad.json")
    (tmp_path / "list.json").write_text("[1, 2]")
    with pytest.raises(ConfigError, match="JSON object"):
        parse_config(tmp_path / "list.json")
    (tmp_path / "latin.json").write_bytes(b'{"nu": "\xe9"}')
    with pytest.raises(ConfigError, match="UTF-8"):
        parse_config(tmp_path / "latin.json")


def test_require():
    pb = load_config(cfg())
    with pytest.raises(ConfigError, match="^y0: required"):
        pb.require("y0")


# ---------------------------------------------------------------- files


def test_field_csv_roundtrip(tmp_path, rng):
    f = random_field(5, rng)
    paths = io.write_field_csv(tmp_path / "f.csv", f, 0.25)
    back = io.read_field_csv(paths[0])
    assert back.K == 5 and np.array_equal(back.coeff, f.coeff)
    meta = json.loads(paths[1].read_text())
    assert meta == {"K": 5, "alpha": 0.25, "normalization": NORMALIZATION}
    assert paths[0].read_text().splitlines()[0] == "k,m,coeff"


def test_field_csv_rejects(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("a,b,c\n1,1,1.0\n")
    with pytest.raises(ConfigError, match="header"):
        io.read_field_csv(p)
    p.write_text("k,m,coeff\n1,x,1.0\n")
    with pytest.raises(ConfigError, match="malformed"):
        io.read_field_csv(p)
    p.write_text("k,m,coeff\n3,1,1.0\n")
    with pytest.raises(ConfigError, match="outside"):
        io.read_field_csv(p, K=2)


def test_snapshots_include_final(tmp_path):
    N = 10
    traj = Trajectory(np.linspace(0, 1, N + 1), np.ones((N + 1, 2, 2)))
    io.write_snapshots(tmp_path / "s.csv", traj, 4)
    times = sorted({float(line.split(",")[0]) for line in (tmp_path / "s.csv").read_text().splitlines()[1:]})
    assert times == [0.0, 0.4, 0.8, 1.0]


def test_non_finite_json_values(tmp_path):
    p = io.write_json(tmp_path / "x.json", {"a": float("inf"), "b": np.float64(1.5), "c": np.bool_(True)})
    assert json.loads(p.read_text()) == {"a": "inf", "b": 1.5, "c": True}


def test_manifest_digests(tmp_path):
    man = io.RunManifest(tmp_path, "simulate", {"nu": 0.1}, 7).begin()
    assert json.loads((tmp_path / "manifest.json").read_text())["status"] == "running"
    man.add(io.write_field_csv(tmp_path / "f.csv", SpectralField.mode(2, 1, 1), 0.0))
    man.finalize("ok", 0)
    data = json.loads((tmp_path / "manifest.json").read_text())
    assert data["status"] == "ok" and data["exitCode"] == 0 and data["seed"] == 7
    assert data["artifactVersion"] == io.ARTIFACT_VERSION
    listed = {o["file"]: o["sha256"] for o in data["outputs"]}
    assert set(listed) == {"f.csv", "f.json"}
    for name, digest in listed.items():
        assert io.sha256(tmp_path / name) == digest
