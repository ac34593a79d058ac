import json

import numpy as np
import pytest

import pickorder


def test_generate_scene_is_deterministic():
    a = pickorder.generate_scene(3, "easy")
    assert a == pickorder.generate_scene(3, "easy")
    assert len(json.loads(a)["objects"]) > 0


def test_sph_order_is_a_permutation_of_the_scene():
    scene = pickorder.generate_scene(5, "moderate")
    ids = sorted(o["id"] for o in json.loads(scene)["objects"])
    assert sorted(pickorder.sph_order(scene)) == ids


def test_flags_cover_every_object():
    scene = pickorder.generate_scene(6, "hard")
    flags = pickorder.compute_flags(scene)
    assert len(flags) == len(json.loads(scene)["objects"])
    assert any(f["topmost"] for f in flags.values())


def test_assignment_matches_example():
    cost = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
    rows, total = pickorder.solve_assignment(cost)
    assert total == pytest.approx(5.0)
    assert sorted(rows) == [0, 1, 2]


def test_rank_metrics():
    assert pickorder.kendall_tau([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert pickorder.kendall_tau([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert pickorder.levenshtein([1, 2, 3], [2, 3]) == 1


def test_plackett_luce_recovers_identical_rankings():
    assert pickorder.plackett_luce_aggregate([[4, 2, 9]] * 3) == [4, 2, 9]


def test_label_scene_without_noise_is_stable():
    scene = pickorder.generate_scene(8, "moderate")
    assert pickorder.label_scene(scene, seed=1) == pickorder.label_scene(scene, seed=1)


def test_gradients_agree_with_finite_differences():
    assert pickorder.grad_check(1, 5, 8) < 1e-4


def test_episode_conserves_objects():
    scene = pickorder.generate_scene(11, "moderate")
    r = pickorder.run_episode(scene, "sph", 1, 0.01, 4)
    assert r["successes"] + r["skipped"] + r["residual_count"] == r["initial_count"]
    assert r == pickorder.run_episode(scene, "sph", 1, 0.01, 4)


def test_learned_policy_needs_a_checkpoint():
    with pytest.raises(pickorder.Error):
        pickorder.run_episode(pickorder.generate_scene(1, "easy"), "learned")


def test_cli_reports_validation_errors():
    code, _, err = pickorder.run_cli(["generate", "--count", "-1"])
    assert code == 1
    assert err
