"""
レート計算とモデルパラメータのテスト

生成率・解離率・ドリフト・拡散係数と、パラメータの検証をテストする。
"""
import math
import sys
from pathlib import Path

# プロジェクトルートをパスに追加
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np

from core.errors import DomainError, ParameterError
from core.rates import (
    birth_rate,
    comparison_models,
    death_coefficient,
    death_rate,
    diffusion_coeff,
    drift,
    drift_array,
    linear_bounds,
    velocity,
)
from models.params import CirParams, ModelParams, RegimeKind, ScalingRegime


CREATION_OFF = ModelParams(u=10.0, u_star=5.0, gamma=0.3, alpha=0.1, c=4.0, r=5.0, d=3.0)


def test_velocity_and_n_star():
    """速度は n* = u/γ で0になり、その先も0"""
    p = ModelParams(u=1.0, gamma=0.5, c=1.0, r=0.6, d=0.7, alpha=0.8)
    assert p.n_star == 2.0
    test_cases = [(0.0, 1.0), (1.0, 0.5), (2.0, 0.0), (5.0, 0.0)]
    for n, expected in test_cases:
        assert math.isclose(velocity(n, p), expected), f"n={n}: 期待値{expected}, 実際{velocity(n, p)}"


def test_rates_at_zero():
    """μ(0) = 0, λ(0) = c·[u ≤ u*]"""
    p = ModelParams(u=1.0, gamma=0.5, c=1.0, r=0.6, d=0.7, alpha=0.8)
    assert death_rate(0, p) == 0.0
    assert birth_rate(0, p) == 1.0
    # u > u* では生成がオフ
    assert birth_rate(0, CREATION_OFF) == 0.0
    assert not CREATION_OFF.creation_on


def test_death_rate_formula():
    """μ(n) = n·d·e^{α(u−γn)}（n ≤ n*）、n > n* では n·d"""
    p = ModelParams(u=1.0, gamma=0.5, c=1.0, r=0.6, d=0.7, alpha=0.8)
    assert math.isclose(death_rate(1, p), 0.7 * math.exp(0.8 * 0.5))
    assert math.isclose(death_rate(3, p), 3 * 0.7)
    assert math.isclose(death_coefficient(0, p), 0.7 * math.exp(0.8))


def test_drift_matches_rates():
    """b(n) = λ(n) − μ(n)、配列版も同じ値"""
    p = ModelParams(u=1.0, gamma=0.5, c=1.0, r=0.6, d=0.7, alpha=0.8, a=0.1)
    grid = np.linspace(0.0, 4.0, 17)
    for n in grid:
        assert math.isclose(drift(n, p), birth_rate(n, p) - death_rate(n, p), abs_tol=1e-14)
    assert np.allclose(drift_array(grid, p), [drift(n, p) for n in grid], atol=1e-14)


def test_constant_rates_drift():
    """α = 0 では b(n) = c + (r−d)n"""
    p = ModelParams(u=1.0, gamma=1.0, c=4.0, r=3.0, d=5.0, alpha=0.0)
    assert drift(2.0, p) == 0.0
    assert math.isclose(drift(0.5, p), 3.0)


def test_diffusion_coeff():
    """σ(n) = √(2an)、n < 0 は DomainError"""
    p = ModelParams(u=1.0, gamma=1.0, c=4.0, r=3.0, d=5.0, alpha=0.0, a=0.5)
    assert diffusion_coeff(0.0, p) == 0.0
    assert math.isclose(diffusion_coeff(4.0, p), 2.0)
    try:
        diffusion_coeff(-1.0, p)
        assert False, "DomainError が出るべき"
    except DomainError:
        pass


def test_linear_bounds_and_comparison_models():
    """比較モデルは解離率 d と d·e^{αu} の定数レート"""
    p = ModelParams(u=1.0, gamma=0.5, c=1.0, r=0.6, d=0.7, alpha=0.8, a=0.1)
    c, r, d_max = linear_bounds(p)
    assert (c, r) == (1.0, 0.6)
    assert math.isclose(d_max, 0.7 * math.exp(0.8))
    low, general, high = comparison_models(p)
    assert general is p
    assert low.alpha == 0.0 and low.d == 0.7
    assert high.alpha == 0.0 and math.isclose(high.d, d_max)
    # 解離率の大小
    for n in (0.0, 0.5, 1.5):
        assert death_coefficient(n, low) <= death_coefficient(n, p) <= death_coefficient(n, high)


def test_model_params_validation():
    """不正なパラメータは ParameterError"""
    base = dict(u=1.0, gamma=0.5, c=1.0, r=0.6, d=0.7, alpha=0.8)
    invalid_cases = [
        {"gamma": 0.0},
        {"d": 0.0},
        {"c": -1.0},
        {"u": math.nan},
        {"alpha": -0.1},
        {"u_star": -1.0},
        {"a": -0.5},
        {"r": math.inf},
    ]
    for change in invalid_cases:
        try:
            ModelParams(**{**base, **change})
            assert False, f"{change}: ParameterError が出るべき"
        except ParameterError:
            pass


def test_model_params_dict_roundtrip():
    """u_star = +∞ は辞書では None"""
    p = ModelParams(u=1.0, gamma=0.5, c=1.0, r=0.6, d=0.7, alpha=0.8)
    data = p.to_dict()
    assert data["u_star"] is None
    assert ModelParams.from_dict(data) == p
    assert ModelParams.from_dict(CREATION_OFF.to_dict()) == CREATION_OFF


def test_scaling_regime():
    """スケーリング後のレート"""
    p = ModelParams(u=1.0, gamma=0.5, c=2.0, r=0.6, d=0.7, alpha=0.8, a=0.3)
    assert ScalingRegime(RegimeKind.ACCELERATED_CREATION, K=10).scaled_rates(p) == (20.0, 0.6, 0.0)
    assert ScalingRegime(RegimeKind.NON_ACCELERATED, K=10).scaled_rates(p) == (2.0, 0.6, 0.0)
    c_k, r_k, boost = ScalingRegime(RegimeKind.ACCELERATED_DEMOGRAPHY, K=100, eta=0.5).scaled_rates(p)
    assert c_k == 200.0
    assert math.isclose(boost, 3.0)
    assert math.isclose(r_k, 3.6)
    for kwargs in ({"K": 0}, {"K": 2.5}, {"kind": RegimeKind.ACCELERATED_DEMOGRAPHY}):
        try:
            ScalingRegime(**{"kind": RegimeKind.ACCELERATED_CREATION, "K": 10, **kwargs})
            assert False, f"{kwargs}: ParameterError が出るべき"
        except ParameterError:
            pass
    regime = ScalingRegime(RegimeKind.ACCELERATED_DEMOGRAPHY, K=100, eta=0.5)
    assert ScalingRegime.from_dict(regime.to_dict()) == regime


def test_cir_params():
    """CIRパラメータの導出量"""
    q = CirParams(c=0.45, a=0.5, r=0.2, d=1.0)
    assert math.isclose(q.delta, 1.8)
    assert math.isclose(q.kappa, 0.4)
    assert math.isclose(q.nu, -0.1)
    assert math.isclose(q.scaled_level(1.0), 1.6)
    assert q.has_stationary_law
    for kwargs in ({"c": 0.0}, {"a": 0.0}, {"r": -1.0}):
        try:
            CirParams(**{"c": 0.45, "a": 0.5, "r": 0.2, "d": 1.0, **kwargs})
            assert False, f"{kwargs}: ParameterError が出るべき"
        except ParameterError:
            pass


def run_tests():
    """全テストを実行"""
    tests = [
        test_velocity_and_n_star,
        test_rates_at_zero,
        test_death_rate_formula,
        test_drift_matches_rates,
        test_constant_rates_drift,
        test_diffusion_coeff,
        test_linear_bounds_and_comparison_models,
        test_model_params_validation,
        test_model_params_dict_roundtrip,
        test_scaling_regime,
        test_cir_params,
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
