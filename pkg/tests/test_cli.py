import csv
import json
from collections import defaultdict

import numpy as np
import pytest

from rispsc.cli import SweepSpec, main, rate_map, run_sweep, summarize_sweep
from rispsc.scenario import ValidationError, load_scenario

from helpers import config


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(config()))
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_solve_writes_solution(cfg_path, tmp_path, capsys):
    out = tmp_path / "sol.json"
    assert main(["solve", "-c", str(cfg_path), "-o", str(out)]) == 0
    data = json.loads(out.read_text())
    assert {"association", "rho", "power_w", "phases_rad", "trace", "scenario"} <= set(data)
    assert "sum semantic-aware rate" in capsys.readouterr().out


def test_solve_missing_file_exits_2(tmp_path):
    assert main(["solve", "-c", str(tmp_path / "nope.json"), "-o", str(tmp_path / "o.json")]) == 2


def test_solve_seed_is_reproducible(cfg_path, tmp_path):
    a, b, c = (tmp_path / n for n in ("a.json", "b.json", "c.json"))
    for out, seed in ((a, "7"), (b, "7"), (c, "8")):
        assert main(["solve", "-c", str(cfg_path), "-o", str(out), "--seed", seed, "-q"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_unknown_config_key_exits_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(config(rf={"antennas": 3})))
    assert main(["solve", "-c", str(path), "-o", str(tmp_path / "o.json"), "-q"]) == 2


def test_usage_error_exits_2(cfg_path):
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "-c", str(cfg_path), "--var", "colour", "--values", "1", "-o", "x.csv"])
    assert exc.value.code == 2


def test_power_sweep_rows_and_monotone(cfg_path, tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "-c", str(cfg_path), "--var", "power", "--values", "0.1,1",
                 "--schemes", "ssd,td", "--trials", "1", "-o", str(out), "-q"]) == 0
    rows = _rows(out)
    assert rows[0] == ["value", "scheme", "deployment", "trial", "objective_bps", "iterations",
                       "wall_ms"]
    assert len(rows) == 5 and all(len(r) == 7 for r in rows)
    groups = defaultdict(list)
    for r in rows[1:]:
        groups[(r[1], r[2], r[3])].append((float(r[0]), float(r[4])))
    for pts in groups.values():
        objs = [o for _, o in sorted(pts)]
        assert all(b >= a for a, b in zip(objs, objs[1:]))
    mean = _rows(tmp_path / "sweep_mean.csv")
    assert len(mean) == 5 and len({len(r) for r in mean}) == 1


def test_sweep_empty_values_exit_2(cfg_path, tmp_path):
    assert main(["sweep", "-c", str(cfg_path), "--var", "power", "--values", "",
                 "-o", str(tmp_path / "s.csv"), "-q"]) == 2
    with pytest.raises(ValidationError):
        SweepSpec("power", ())


def test_sweep_over_users_and_deployments():
    spec = SweepSpec("users", (2, 3), schemes=("noma",), deployments=("central", "distributed2"),
                     trials=2, seed=5)
    rows = run_sweep(config(), spec)
    assert len(rows) == 8
    assert [r.sort_key() for r in rows] == sorted(r.sort_key() for r in rows)
    summary = summarize_sweep(rows)
    assert len(summary) == 4 and all(s["trials"] == 2 for s in summary)


def test_ratemap_rows_and_reproducible(cfg_path, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["ratemap", "-c", str(cfg_path), "--grid", "2x2", "--deployment", "central",
                     "-o", str(out)]) == 0
    rows = _rows(a)
    assert rows[0] == ["x", "y", "rate_bps"] and len(rows) == 5
    assert all(len(r) == 3 for r in rows)
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("grid", ["1x4", "4", "axb"])
def test_ratemap_bad_grid_exits_2(cfg_path, tmp_path, grid):
    assert main(["ratemap", "-c", str(cfg_path), "--grid", grid, "-o", str(tmp_path / "m.csv")]) == 2


def test_probe_next_to_ris_beats_median():
    sc = load_scenario(json.dumps(config(
        rf={"L": 1}, geometry={"ris_positions": [[37.5, 62.5, 10.0]]})))
    rows = rate_map(sc, 4, 4)
    xy = np.array([(x, y) for x, y, _ in rows])
    rate = np.array([r for *_, r in rows])
    nearest = int(np.argmin(np.hypot(xy[:, 0] - 37.5, xy[:, 1] - 62.5)))
    assert rate[nearest] > np.median(rate)
