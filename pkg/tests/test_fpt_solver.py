"""
停止時間の求積のテスト

平均到達時間 τ(n0) を後退方程式の残差、CIRの閉形式、比較原理で確認する。
"""
import math
import sys
from pathlib import Path

# プロジェクトルートをパスに追加
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np

from core.cir import laplace_fpt_mean
from core.diffusion import hitting_time_samples
from core.errors import DomainError
from core.fpt_solver import (
    backward_residual,
    boundary_flux_ratio,
    comparison_mfpt,
    inner_integral,
    log_psi,
    mean_fpt,
    moment_fpt,
    psi,
    sweep_u,
)
from core.rates import drift
from models.params import CirParams, ModelParams


GENERAL = ModelParams(u=1.0, gamma=0.5, c=1.0, r=0.6, d=0.7, alpha=0.8, a=0.1)


def test_tau_vanishes_at_target():
    """τ(n*) = 0"""
    assert mean_fpt(GENERAL.n_star, GENERAL) == 0.0
    assert mean_fpt(0.0, GENERAL) > mean_fpt(1.0, GENERAL) > 0


def test_constant_rates_match_cir():
    """α = 0 では CIR の平均到達時間（x = u/γ）と一致する"""
    p = GENERAL.with_(alpha=0.0)
    q = CirParams.from_model(p)
    for n0 in (0.0, 0.5):
        tau = mean_fpt(n0, p)
        exact = laplace_fpt_mean(n0, p.n_star, q)
        assert math.isclose(tau, exact, rel_tol=1e-6), f"n0={n0}: {tau} vs {exact}"


def test_small_noise_close_to_ode_time():
    """ノイズが小さいと τ(0) は ODE の到達時間 ∫dn/F に近い"""
    p = GENERAL.with_(alpha=0.0, a=0.01)
    ode_time = math.log(p.c / (p.c + (p.r - p.d) * p.n_star)) / (p.d - p.r)
    assert abs(mean_fpt(0.0, p) - ode_time) < 0.05 * ode_time


def test_backward_residual():
    """求積解は後退方程式を満たす"""
    residual = backward_residual(GENERAL)
    assert residual < 1e-4, f"残差 {residual}"
    absolute = backward_residual(GENERAL, relative=False)
    assert absolute < 1e-4, f"絶対残差 {absolute}"
    assert absolute >= residual
    try:
        backward_residual(GENERAL, nodes=np.array([GENERAL.n_star]))
        assert False, "DomainError が出るべき"
    except DomainError:
        pass


def test_reflecting_boundary():
    """Ψτ' は n → 0 で0に近づく"""
    assert boundary_flux_ratio(GENERAL) < 1e-6
    assert inner_integral(1.0, GENERAL) > 0


def test_psi():
    """d(log Ψ)/dn0 = 2b/σ²、α → 0 では CIR のスケール関数、大きな値では log を使う"""
    h = 1e-6
    for n0 in (0.3, 1.0, 1.8):
        numeric = (log_psi(n0 + h, 0.1, GENERAL) - log_psi(n0 - h, 0.1, GENERAL)) / (2 * h)
        exact = drift(n0, GENERAL) / (GENERAL.a * n0)
        assert math.isclose(numeric, exact, rel_tol=1e-6), f"n0={n0}: {numeric} vs {exact}"
    p = GENERAL.with_(alpha=0.0)
    expected = (1.0 / 0.1) ** (p.c / p.a) * math.exp((p.r - p.d) / p.a)
    assert math.isclose(psi(1.0, 0.1, p), expected, rel_tol=1e-12)
    assert math.isclose(psi(1.0, 0.5, GENERAL, log=True), log_psi(1.0, 0.5, GENERAL))
    p = GENERAL.with_(a=1e-4)
    try:
        psi(2.0, 1e-300, p)
        assert False, "DomainError が出るべき"
    except DomainError:
        pass
    assert math.isfinite(psi(2.0, 1e-300, p, log=True))


def test_comparison_sandwich():
    """τ(d) ≤ τ(一般) ≤ τ(d·e^{αu})"""
    low, general, high = comparison_mfpt(GENERAL)
    assert low <= general <= high, f"{low} ≤ {general} ≤ {high}"
    assert math.isclose(general, mean_fpt(0.0, GENERAL))


def test_sweep_u_monotone():
    """u が大きいほど τ は大きく、γ が大きいほど小さい"""
    u_values = [0.25, 0.5, 1.0]
    small_gamma = sweep_u(u_values, GENERAL)
    large_gamma = sweep_u(u_values, GENERAL.with_(gamma=1.0))
    assert all(point.ok for point in small_gamma + large_gamma)
    taus = [point.tau for point in small_gamma]
    assert taus[0] < taus[1] < taus[2], f"τ = {taus}"
    assert [point.n_star for point in small_gamma] == [0.5, 1.0, 2.0]
    for slow, fast in zip(small_gamma, large_gamma):
        assert fast.tau < slow.tau, f"u={slow.u}: γ=1 で {fast.tau}, γ=0.5 で {slow.tau}"


def test_noise_sensitivity():
    """a を大きくすると τ(0) は短くなるが、小さな a では単調でない"""
    taus = {a: mean_fpt(0.0, GENERAL.with_(a=a)) for a in (0.05, 0.1, 0.2)}
    assert taus[0.2] < taus[0.1], f"τ = {taus}"
    assert taus[0.05] < taus[0.1], f"τ = {taus}"


def test_sweep_u_invalid():
    """u は正で狭義単調増加"""
    for values in ([0.0, 1.0], [1.0, 1.0], [2.0, 1.0]):
        try:
            sweep_u(values, GENERAL)
            assert False, f"{values}: DomainError が出るべき"
        except DomainError:
            pass


def test_not_solvable():
    """a = 0 や c = 0 では定義されない"""
    for p in (GENERAL.with_(a=0.0), GENERAL.with_(c=0.0)):
        try:
            mean_fpt(0.0, p)
            assert False, f"{p}: DomainError が出るべき"
        except DomainError:
            pass
    try:
        mean_fpt(3.0, GENERAL)
        assert False, "n0 > n* で DomainError が出るべき"
    except DomainError:
        pass


def test_second_moment():
    """E[T²] ≥ E[T]²"""
    tau = mean_fpt(0.0, GENERAL)
    second = moment_fpt(2, 0.0, GENERAL)
    assert second >= tau ** 2, f"E[T²]={second}, τ²={tau ** 2}"
    assert moment_fpt(1, 0.0, GENERAL) == tau
    try:
        moment_fpt(0, 0.0, GENERAL)
        assert False, "DomainError が出るべき"
    except DomainError:
        pass


def test_moments_match_monte_carlo():
    """τ(0) と E[T²] はオイラー法の到達時間（dt = 1e-3）と一致する"""
    result = hitting_time_samples(GENERAL, 0.0, GENERAL.n_star, dt=1e-3, n_paths=4000, master_seed=2024)
    assert result.n_censored == 0
    times = result.observed
    tau = mean_fpt(0.0, GENERAL)
    assert abs(times.mean() - tau) < 0.05 * tau, f"MC {times.mean():.4f} vs 求積 {tau:.4f}"
    second = moment_fpt(2, 0.0, GENERAL)
    mc_second = float(np.mean(times ** 2))
    stderr = float(np.std(times ** 2, ddof=1)) / math.sqrt(times.size)
    assert abs(mc_second - second) <= max(4 * stderr, 0.05 * second), f"MC {mc_second:.4f} vs 求積 {second:.4f}"


def run_tests():
    """全テストを実行"""
    tests = [
        test_tau_vanishes_at_target,
        test_constant_rates_match_cir,
        test_small_noise_close_to_ode_time,
        test_backward_residual,
        test_reflecting_boundary,
        test_psi,
        test_comparison_sandwich,
        test_sweep_u_monotone,
        test_noise_sensitivity,
        test_sweep_u_invalid,
        test_not_solvable,
        test_second_moment,
        test_moments_match_monte_carlo,
    ]

    passed = 0
    failed = 0

    for test in tests:
        try:
            test()
            print(f"[PASS] {test.__name__}")
            passed += 1
        except AssertionError as e:
            print(f"[FAIL] {test.__name__}: {e}")
            failed += 1
        except Exception as e:
            print(f"[FAIL] {test.__name__}: unexpected error - {e}")
            failed += 1

    print(f"\nResult: {passed}/{len(tests)} tests passed")

    return failed == 0


if __name__ == "__main__":
    success = run_tests()
    sys.exit(0 if success else 1)
