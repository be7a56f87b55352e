import numpy as np
import pytest

from conftest import exact_problem, noisy_problem
from oracles import classic_dm_step, indicator_admm_step
from proxpty import engines, model
from proxpty import estimators as est
from proxpty.engines import EngineConfig

G = est.NoiseModel(est.GAUSSIAN)
P = est.NoiseModel(est.POISSON)


def project_g(positions, inner=1):
    def pg(v, probe, obj):
        return model.project_translation(v, probe, obj, positions, inner)
    return pg


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_config_validation_and_defaults():
    cfg = EngineConfig("mADMM")
    assert cfg.algorithm == "madmm" and (cfg.beta, cfg.delta) == (0.7, 1e-5)
    assert (EngineConfig("apg").beta, EngineConfig("apg").delta) == (0.5, 0.1)
    for kw in ({"algorithm": "gs"}, {"beta": 1.0}, {"delta": 0.0}, {"lambda0": 0.0},
               {"t_max": -1}, {"inner_iters": 0}, {"max_backtracks": -1}):
        with pytest.raises(ValueError):
            EngineConfig(**kw)


def test_init_state_defaults():
    data, _, _ = exact_problem()
    cfg = EngineConfig("pm", lambda0=2.5)
    s = engines.init_state(data, cfg)
    np.testing.assert_array_equal(s.obj, np.ones(data.positions.object_shape))
    assert not np.any(s.u)
    np.testing.assert_array_equal(s.z, s.x)
    np.testing.assert_array_equal(s.x_prev, s.x)
    assert s.lambda_t == 2.5 and s.t == 0 and s.trace == []
    energy = np.sum(data.amplitudes ** 2) / len(data.positions)
    assert np.sum(np.abs(s.probe) ** 2) == pytest.approx(energy, rel=1e-12)
    n = data.positions.probe_shape[0]
    support = np.abs(s.probe) > 0
    assert support[n // 2, n // 2] and not support[0, 0]
    assert np.all(np.angle(s.probe[support]) == 0)


def test_er_fixed_point_with_truth():
    data, probe, obj = exact_problem()
    s = engines.init_state(data, EngineConfig("er"), probe, obj)
    x0 = s.x.copy()
    engines.step_er(s, EngineConfig("er"))
    assert rel(s.x, x0) <= 1e-10


def test_er_with_consistent_modulus_is_pure_projection():
    data, probe, obj = exact_problem()
    s = engines.init_state(data, EngineConfig("er"), probe * 0.5, np.ones_like(obj))
    data.amplitudes = np.abs(s.x)
    s.y = data.amplitudes
    x = s.x.copy()
    engines.step_er(s, EngineConfig("er"))
    np.testing.assert_array_equal(s.z, x)


def test_pm_large_lambda_matches_er():
    data, _, _ = noisy_problem()
    er, _ = engines.run(data, EngineConfig("er", t_max=5))
    pm, _ = engines.run(data, EngineConfig("pm", noise_model=G, lambda0=1e12, t_max=5))
    assert rel(pm.x, er.x) <= 1e-6 and rel(pm.obj, er.obj) <= 1e-6


def test_pm_zero_limit_keeps_translation_consistency():
    data, _, _ = noisy_problem()
    cfg = EngineConfig("pm", noise_model=G, lambda0=1e-300, t_max=1)
    s = engines.init_state(data, cfg)
    engines.step_pm(s, cfg)
    np.testing.assert_allclose(s.z, engines.init_state(data, cfg).x, atol=1e-12)


def test_dm_matches_classic_difference_map():
    data, _, _ = noisy_problem(3)
    cfg = EngineConfig("dm")
    s = engines.init_state(data, cfg)
    ref = {"w": s.z.copy(), "pg": s.z.copy(), "probe": s.probe.copy(), "obj": s.obj.copy()}
    pg = project_g(data.positions)
    for _ in range(10):
        engines.step_dm(s, cfg)
        ref = classic_dm_step(ref, data.amplitudes, pg)
        assert rel(s.z + s.u, ref["w"]) <= 1e-10
        assert rel(s.obj, ref["obj"]) <= 1e-10


def test_dm_fixed_point():
    data, probe, obj = exact_problem()
    cfg = EngineConfig("dm")
    s = engines.init_state(data, cfg, probe, obj)
    w = s.z + s.u
    engines.step_dm(s, cfg)
    assert rel(s.z + s.u, w) <= 1e-10


def test_madmm_large_lambda_matches_indicator_admm():
    data, _, _ = noisy_problem(4)
    cfg = EngineConfig("madmm", noise_model=G, lambda0=1e12)
    s = engines.init_state(data, cfg)
    ref = indicator_admm_step({"z": s.z, "u": s.u, "probe": s.probe, "obj": s.obj},
                              data.amplitudes, project_g(data.positions))
    engines.step_madmm(s, cfg)
    assert rel(s.z, ref["z"]) <= 1e-6 and rel(s.x, ref["x"]) <= 1e-6


def test_madmm_dual_update_and_schedule():
    data, _, _ = noisy_problem(5)
    cfg = EngineConfig("madmm", t_max=60, delta=0.05)
    s = engines.init_state(data, cfg)
    lams = []
    for _ in range(cfg.t_max):
        u = s.u.copy()
        engines.step_madmm(s, cfg)
        assert rel(s.u - u, s.x - s.z) <= 1e-12
        rec = s.trace[-1]
        assert rec.dual_residual is not None
        lams.append(rec.lambda_t)
    lams.append(s.lambda_t)
    for a, b in zip(lams, lams[1:]):
        assert b == a or b == pytest.approx(a * cfg.beta, rel=1e-15)
    assert lams[-1] < lams[0]


def test_madmm_zero_dual_triggers_shrink():
    from types import SimpleNamespace

    pos = model.ScanPositions((1, 1), (1, 1), [[0, 0]])
    data = SimpleNamespace(positions=pos, amplitudes=np.ones((1, 1, 1)))
    cfg = EngineConfig("madmm", noise_model=G)
    s = engines.init_state(data, cfg, np.ones((1, 1)), np.ones((1, 1)))
    engines.step_madmm(s, cfg)
    assert not np.any(s.u) and s.trace[-1].dual_residual == 0.0
    assert s.lambda_t == cfg.beta


def test_momentum_weights():
    assert [engines.momentum_weight(t) for t in range(4)] == [0, 0.25, 0.4, 0.5]


@pytest.mark.parametrize("model_", [G, P], ids=["gaussian", "poisson"])
def test_apg_accepted_steps_satisfy_majoriser(model_):
    data, _, _ = noisy_problem(6)
    cfg = EngineConfig("apg", noise_model=model_, momentum=False, t_max=30)
    s = engines.init_state(data, cfg)
    for _ in range(cfg.t_max):
        w = s.x.copy()
        engines.step_apg(s, cfg)
        rec = s.trace[-1]
        if not rec.exhausted:
            assert est.nll(s.y, s.x, model_) <= est.q_upper_bound(s.x, w, rec.lambda_t, s.y, model_)
    nlls = [r.nll for r in s.trace]
    assert all(b <= a for a, b in zip(nlls, nlls[1:]))


def test_apg_backtracking_and_reset():
    data, _, _ = noisy_problem(7)
    cfg = EngineConfig("apg", lambda0=50.0, beta=0.5, delta=2.0, max_backtracks=20, t_max=12)
    s = engines.init_state(data, cfg)
    for _ in range(cfg.t_max):
        carried = s.lambda_t
        engines.step_apg(s, cfg)
        rec = s.trace[-1]
        assert rec.lambda_t == carried * cfg.beta ** rec.backtracks
        if rec.lambda_t < cfg.delta:
            assert s.lambda_t == cfg.lambda0
        else:
            assert s.lambda_t == rec.lambda_t
    assert any(r.backtracks > 0 for r in s.trace)


def test_apg_exhausted_flag():
    data, _, _ = noisy_problem(8)
    cfg = EngineConfig("apg", noise_model=P, lambda0=1e9, max_backtracks=0, t_max=2)
    _, trace = engines.run(data, cfg)
    assert trace[0].exhausted and trace[0].backtracks == 0


def test_run_zero_iterations_returns_initial_state():
    data, _, _ = noisy_problem()
    state, trace = engines.run(data, EngineConfig("apg", t_max=0))
    init = engines.init_state(data, EngineConfig("apg"))
    assert trace == [] and state.t == 0
    np.testing.assert_array_equal(state.x, init.x)


@pytest.mark.parametrize("algo", engines.ALGORITHMS)
def test_run_deterministic_and_finite(algo):
    data, _, obj = noisy_problem(9)
    cfg = EngineConfig(algo, t_max=25)
    a_state, a = engines.run(data, cfg, ground_truth=obj)
    b_state, b = engines.run(data, cfg, ground_truth=obj)
    strip = [(r.t, r.nll, r.lambda_t, r.rmse, r.dual_residual, r.backtracks) for r in a]
    assert strip == [(r.t, r.nll, r.lambda_t, r.rmse, r.dual_residual, r.backtracks) for r in b]
    assert a_state.obj.tobytes() == b_state.obj.tobytes()
    assert all(np.isfinite(r.nll) and r.rmse is not None for r in a)
    assert np.all(np.isfinite(a_state.x)) and len(a) == 25
    assert [r.t for r in a] == list(range(1, 26))


@pytest.mark.parametrize("algo", engines.ALGORITHMS)
def test_scalar_ambiguity_invariance(algo):
    data, _, obj = noisy_problem(10)
    cfg = EngineConfig(algo, t_max=8)
    base = engines.init_state(data, cfg)
    c = 0.3 - 1.7j
    s1, t1 = engines.run(data, cfg, base.probe, base.obj, ground_truth=obj)
    s2, t2 = engines.run(data, cfg, base.probe * c, base.obj / c, ground_truth=obj)
    assert rel(s2.x, s1.x) <= 1e-10
    assert t2[-1].rmse == pytest.approx(t1[-1].rmse, abs=1e-10)


def test_best_iterate_tracking():
    data, _, _ = noisy_problem(11)
    state, trace = engines.run(data, EngineConfig("dm", t_max=15))
    best = min(r.nll for r in trace)
    assert state.best_nll == best and state.best_obj is not None


def test_non_finite_state_aborts(monkeypatch):
    data, _, _ = noisy_problem()

    def broken(state, config):
        state.obj = state.obj * np.nan
        state.t += 1
        return state

    monkeypatch.setitem(engines.STEPS, "er", broken)
    with pytest.raises(engines.NonFiniteStateError, match="iteration 1"):
        engines.run(data, EngineConfig("er", t_max=3))


def test_probe_update_start_holds_probe():
    data, probe, _ = noisy_problem(12)
    state, _ = engines.run(data, EngineConfig("er", t_max=5, probe_update_start=5), probe_init=probe)
    np.testing.assert_array_equal(state.probe, probe)
    state, _ = engines.run(data, EngineConfig("er", t_max=5, probe_update_start=3), probe_init=probe)
    assert not np.array_equal(state.probe, probe)


def test_callback_sees_every_iteration():
    data, _, _ = noisy_problem()
    seen = []
    engines.run(data, EngineConfig("pm", t_max=4), callback=lambda s: seen.append(s.t))
    assert seen == [1, 2, 3, 4]
