import json
import math
import pathlib
import random

import pytest

import nrpa_gd

DATA = pathlib.Path(__file__).resolve().parents[2] / "data"


def test_softmax_sums_to_one_and_is_shift_invariant():
    rng = random.Random(1)
    for _ in range(50):
        w = [rng.uniform(-30, 30) for _ in range(rng.randint(2, 9))]
        p = nrpa_gd.softmax(w)
        q = nrpa_gd.softmax([x + 12.5 for x in w])
        assert math.isclose(sum(p), 1.0, abs_tol=1e-12)
        assert all(math.isclose(a, b, abs_tol=1e-12) for a, b in zip(p, q))


def test_reward_values():
    assert nrpa_gd.reward("Solved", 3) == pytest.approx(0.997)
    assert nrpa_gd.reward("Failed", 4) == pytest.approx(-0.004)
    assert nrpa_gd.reward("Solved", 2, turn_penalty=0.01) == pytest.approx(0.98)
    with pytest.raises(ValueError):
        nrpa_gd.reward("Sideways", 1)


def test_compute_sl():
    assert nrpa_gd.compute_sl(12, 15, 10) == pytest.approx(0.6)
    assert nrpa_gd.compute_sl(None, 15, 10) == 0.0


def test_tally_and_win_rate():
    assert nrpa_gd.tally_votes(3, 2, 0) == "A"
    assert nrpa_gd.tally_votes(1, 1, 3) == "Tie"
    wr = nrpa_gd.win_rate(["A", "A", "A", "A", "A", "A", "A", "B", "Tie"], 3)
    assert wr["win_rate"] == pytest.approx(7 / 9)
    with pytest.raises(ValueError):
        nrpa_gd.win_rate(["maybe"], 1)


def test_episode_seeds_are_distinct():
    seeds = {nrpa_gd.episode_seed(7, i) for i in range(100)}
    assert len(seeds) == 100


def test_plan_on_oracle_script():
    out = nrpa_gd.plan(DATA / "scripted" / "oracle_g3.json", {"level": 2, "iterations": 10, "rng_seed": 3})
    assert out["act"] == out["best_sequence"][0]
    assert out["stats"]["playouts_executed"] >= 1
    again = nrpa_gd.plan(DATA / "scripted" / "oracle_g3.json", {"level": 2, "iterations": 10, "rng_seed": 3})
    assert again == out


def test_run_and_summarize(tmp_path):
    out = nrpa_gd.run(DATA / "configs" / "scripted_smoke.json", tmp_path)
    run_dir = pathlib.Path(out["run_dir"])
    assert run_dir.parent == tmp_path
    assert out["summary"]["SR"] == pytest.approx(1.0)
    assert nrpa_gd.summarize(run_dir / "episodes.jsonl") == out["summary"]
    assert json.loads((run_dir / "summary.json").read_text())["n_episodes"] == 12


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(ValueError):
        nrpa_gd.run(tmp_path / "absent.json")
    with pytest.raises(ValueError):
        nrpa_gd.plan(DATA / "scripted" / "oracle_g3.json", {"level": 0})
