import json

import numpy as np
import pytest

import bellext.seesaw as seesaw_mod
from bellext.quantum import SX, SZ, DensityMatrix, embed_state, family_matrix, kron
from bellext.seesaw import (
    CorrelatorGame,
    SeesawConfig,
    SeesawError,
    bell_operator,
    check_soundness,
    chsh_game,
    evaluate_game,
    game_from_inequality,
    positive_subspace_update,
    random_projective,
    reduced_operators,
    run_game,
    run_seesaw,
    seed_rng,
    state_update,
)

TSIRELSON = 2 * np.sqrt(2)
PHI_PLUS = np.array([1, 0, 0, 1]) / np.sqrt(2)
B_OPT = ((SZ + SX) / np.sqrt(2), (SZ - SX) / np.sqrt(2))


def rand_obs(rng, m):
    return [random_projective(2, rng).matrix for _ in range(m)]


def stacked(observables):
    """Single-seed (1, m + 1, 2, 2) layout for the batched helpers."""
    return np.stack([np.eye(2)] + list(observables)).astype(complex)[None]


# --------------------------------------------------------------------------
# reduced operators


def test_chsh_reduced_operators():
    rho = np.outer(PHI_PLUS, PHI_PLUS)
    ops = reduced_operators(rho, [[SZ, SX], None], chsh_game(), target=1)
    for y in range(2):
        delta = ops[(y, 1)] - ops[(y, -1)]
        assert np.allclose(np.linalg.eigvalsh(delta / 2), [-np.sqrt(2) / 2, np.sqrt(2) / 2])
    bob = [positive_subspace_update(ops[(y, 1)] - ops[(y, -1)]).matrix for y in range(2)]
    assert evaluate_game(rho, [[SZ, SX], bob], chsh_game()) == pytest.approx(TSIRELSON, abs=1e-12)


def test_reduced_operators_reproduce_value(table_by_id):
    rng = np.random.default_rng(12)
    for row in (15, 13, 18):
        game = game_from_inequality(table_by_id[row])
        for _ in range(5):
            v = rng.standard_normal(8) + 1j * rng.standard_normal(8)
            v /= np.linalg.norm(v)
            rho = np.outer(v, v.conj())
            obs = [rand_obs(rng, m) for m in game.settings]
            value = evaluate_game(rho, obs, game)
            for target in range(3):
                ops = reduced_operators(rho, obs, game, target)
                total = 0.0
                for y, o in enumerate(obs[target]):
                    q_plus = (np.eye(2) + o) / 2
                    total += np.trace(ops[(y, 1)] @ q_plus).real
                    total += np.trace(ops[(y, -1)] @ (np.eye(2) - q_plus)).real
                    assert np.allclose(ops[(y, 1)], ops[(y, 1)].conj().T, atol=1e-12)
                assert total == pytest.approx(value, abs=1e-12)


def test_zero_game_gives_zero_operators():
    rng = np.random.default_rng(13)
    game = CorrelatorGame(np.zeros((3, 3, 3)))
    obs = [rand_obs(rng, 2) for _ in range(3)]
    ops = reduced_operators(np.eye(8) / 8, obs, game, 1)
    assert all(np.allclose(v, 0) for v in ops.values())


def test_game_from_inequality_matches_correlators(table_by_id):
    """Game value equals the inequality evaluated on the extracted behavior."""
    res = run_seesaw(table_by_id[7], cfg=SeesawConfig(seeds=3, master_seed=2, max_sweeps=3))
    obs = [list(o[1:]) for o in res.best_observables]
    assert evaluate_game(res.best_state, obs, res.game) == pytest.approx(res.best_value, abs=1e-12)
    assert check_soundness(res, table_by_id[7]) < 1e-9


# --------------------------------------------------------------------------
# single-step updates


def test_positive_subspace_examples():
    assert np.allclose(positive_subspace_update(np.diag([1.0, -1.0])).plus, np.diag([1, 0]))
    neg = positive_subspace_update(-np.eye(2))
    assert np.allclose(neg.plus, 0)
    assert np.allclose(neg.matrix, -np.eye(2))
    plus = np.array([1, 1]) / np.sqrt(2)
    assert np.allclose(positive_subspace_update(SX).plus, np.outer(plus, plus))


def test_zero_eigenvalues_excluded():
    assert np.allclose(positive_subspace_update(np.diag([1.0, 0.0])).plus, np.diag([1, 0]))
    assert np.allclose(positive_subspace_update(np.diag([1.0, 5e-13])).plus, np.diag([1, 0]))


def test_positive_subspace_is_optimal():
    rng = np.random.default_rng(14)
    for _ in range(50):
        h = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        h = h + h.conj().T
        best = np.trace(h @ positive_subspace_update(h).plus).real
        assert best == pytest.approx(np.clip(np.linalg.eigvalsh(h), 0, None).sum())
        for _ in range(5):
            p = random_projective(2, rng).plus
            assert np.trace(h[:2, :2] @ p).real <= np.trace(
                h[:2, :2] @ positive_subspace_update(h[:2, :2]).plus).real + 1e-12


def test_state_update_chsh():
    obs = [stacked([SZ, SX]), stacked(B_OPT)]
    state, value = state_update(bell_operator(obs, chsh_game())[0])
    assert value == pytest.approx(TSIRELSON, abs=1e-12)
    assert state.dims == (2, 2)
    assert np.trace(state.matrix @ bell_operator(obs, chsh_game())[0]).real == pytest.approx(TSIRELSON)


def test_state_update_degenerate_is_deterministic():
    t = np.zeros((3, 3))
    t[0, 0] = 3.0
    b = bell_operator([stacked([SZ, SX]), stacked(B_OPT)], CorrelatorGame(t))[0]
    s1, v1 = state_update(b)
    s2, v2 = state_update(b.copy())
    assert v1 == pytest.approx(3.0)
    assert np.array_equal(s1.matrix, s2.matrix)


def test_state_update_on_inequality_optimum(table_by_id):
    res = run_seesaw(table_by_id[15], cfg=SeesawConfig(seeds=20, master_seed=5))
    _, value = state_update(bell_operator([o[None] for o in res.best_observables], res.game)[0])
    assert value == pytest.approx(4 * np.sqrt(2) - 2, abs=1e-9)


def test_random_projective():
    rng = np.random.default_rng(15)
    draws = [random_projective(2, rng) for _ in range(10_000)]
    for o in draws[:100]:
        assert np.allclose(o.matrix @ o.matrix, np.eye(2), atol=1e-12)
        assert np.trace(o.plus).real == pytest.approx(1)
    mean = np.mean([o.plus[0, 0].real for o in draws])
    assert abs(mean - 0.5) < 0.02
    a = random_projective(2, np.random.default_rng(99)).matrix
    b = random_projective(2, np.random.default_rng(99)).matrix
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        random_projective(4, rng)


def test_seed_streams_independent_of_count():
    a = seed_rng(7, 3).standard_normal(4)
    b = seed_rng(7, 3).standard_normal(4)
    c = seed_rng(7, 4).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


# --------------------------------------------------------------------------
# full runs


def test_chsh_reaches_tsirelson():
    res = run_game(chsh_game(), SeesawConfig(seeds=20, master_seed=1))
    assert res.best_value == pytest.approx(TSIRELSON, abs=1e-6)
    assert res.best_value == res.seed_values.max()


def test_inequality_15_maximum(table_by_id):
    q = table_by_id[15]
    res = run_seesaw(q, cfg=SeesawConfig(seeds=50, master_seed=0))
    assert res.best_value >= 4 * np.sqrt(2) - 2 - 1e-4
    assert res.best_value <= q.quantum_bound_ref + 5e-4 + 5e-4
    assert check_soundness(res, q) < 1e-9
    assert res.model().max_commutator() < 1e-12


def test_fixed_state_below_threshold_no_violation(table_by_id):
    state = embed_state(DensityMatrix(family_matrix("rho", 0.8, 0.5), (2, 2)))
    res = run_seesaw(table_by_id[15], state, SeesawConfig(seeds=100, master_seed=3))
    assert res.best_value <= 2 + 1e-7


def test_fixed_state_is_unitarily_rotated_per_seed(table_by_id):
    state = embed_state(DensityMatrix(family_matrix("rho", 0.8, 0.95), (2, 2)))
    res = run_seesaw(table_by_id[15], state, SeesawConfig(seeds=30, master_seed=3))
    ev = np.linalg.eigvalsh(res.best_state)
    assert np.allclose(np.sort(ev), np.sort(np.linalg.eigvalsh(state.matrix)), atol=1e-12)
    assert res.best_value > 2


def test_determinism(table_by_id):
    cfg = SeesawConfig(seeds=30, master_seed=123)
    r1 = run_seesaw(table_by_id[13], cfg=cfg)
    r2 = run_seesaw(table_by_id[13], cfg=cfg)
    assert np.array_equal(r1.seed_values, r2.seed_values)
    assert r1.best_value == r2.best_value
    assert r1.dumps() == r2.dumps()
    r3 = run_seesaw(table_by_id[13], cfg=SeesawConfig(seeds=30, master_seed=124))
    assert not np.array_equal(r1.seed_values, r3.seed_values)


def test_seed_values_do_not_depend_on_seed_count(table_by_id):
    q = table_by_id[2]
    few = run_seesaw(q, cfg=SeesawConfig(seeds=10, master_seed=8, batch_size=10))
    many = run_seesaw(q, cfg=SeesawConfig(seeds=30, master_seed=8, batch_size=10))
    assert np.array_equal(few.seed_values, many.seed_values[:10])


def test_monotone_runs(table):
    for q in table[::5]:
        res = run_seesaw(q, cfg=SeesawConfig(seeds=20, master_seed=4))
        assert res.max_decrease <= seesaw_mod.MONOTONE_SLACK


def test_monotonicity_check_fires(monkeypatch, table_by_id):
    real = seesaw_mod._positive_part

    def wrong(h):
        q, w = real(h)
        return np.eye(2) - q, w  # the worst projector instead of the best

    monkeypatch.setattr(seesaw_mod, "_positive_part", wrong)
    with pytest.raises(SeesawError):
        run_seesaw(table_by_id[15], cfg=SeesawConfig(seeds=5, master_seed=0))


def test_frame_mode(table_by_id):
    state = embed_state(DensityMatrix(family_matrix("sigma", 0.8, 0.85), (2, 2)))
    cfg = SeesawConfig(seeds=20, master_seed=6, optimize_frame=True)
    res = run_seesaw(table_by_id[15], state, cfg)
    assert res.max_decrease <= seesaw_mod.MONOTONE_SLACK
    assert np.allclose(np.sort(np.linalg.eigvalsh(res.best_state)),
                       np.sort(np.linalg.eigvalsh(state.matrix)), atol=1e-10)
    assert check_soundness(res, table_by_id[15]) < 1e-9


def test_stop_above(table_by_id):
    cfg = SeesawConfig(seeds=300, master_seed=1, batch_size=50)
    res = run_seesaw(table_by_id[15], cfg=cfg, stop_above=3.0)
    assert res.stopped_early
    assert len(res.seed_values) == 50


def test_result_dump(table_by_id):
    res = run_seesaw(table_by_id[26], cfg=SeesawConfig(seeds=4, master_seed=9))
    d = json.loads(res.dumps())
    assert d["best_value"] == res.best_value
    assert d["master_seed"] == 9
    assert len(d["seed_values"]) == 4
    assert d["config"]["seeds"] == 4


@pytest.mark.parametrize("kwargs", [{"seeds": 0}, {"convergence_tol": 0.0}, {"max_sweeps": 0}])
def test_bad_config(kwargs):
    with pytest.raises(ValueError):
        SeesawConfig(**kwargs)


def test_bad_state_and_mode(table_by_id):
    with pytest.raises(ValueError):
        run_seesaw(table_by_id[15], np.eye(4) / 4)
    with pytest.raises(ValueError):
        run_seesaw(table_by_id[15], cfg=SeesawConfig(optimize_state=False))


def test_model_only_for_cycle_games():
    res = run_game(chsh_game(), SeesawConfig(seeds=2))
    with pytest.raises(ValueError):
        res.model()


def test_evaluate_game_matches_kron():
    rng = np.random.default_rng(16)
    a, b = rand_obs(rng, 2), rand_obs(rng, 2)
    rho = np.outer(PHI_PLUS, PHI_PLUS)
    direct = sum(
        s * np.trace(rho @ kron(a[i], b[j])).real
        for (i, j), s in {(0, 0): 1, (0, 1): 1, (1, 0): 1, (1, 1): -1}.items()
    )
    assert evaluate_game(rho, [a, b], chsh_game()) == pytest.approx(direct, abs=1e-12)
