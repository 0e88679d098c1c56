"""
CIR過程の解析のテスト

モーメント、遷移密度、定常密度、ラプラス変換、スペクトル展開をテストする。
"""
import logging
import math
import sys
from pathlib import Path

# プロジェクトルートをパスに追加
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
from scipy import integrate, stats

from core.cir import (
    default_n_terms,
    fpt_cdf_eval,
    fpt_density_eval,
    fpt_survival_eval,
    laplace_fpt,
    laplace_fpt_mean,
    laplace_fpt_whittaker,
    mean_var,
    spectral_fpt,
    spectral_laplace,
    spectral_mean,
    stationary_density,
    stationary_potential,
    transition_density,
    transition_law,
    truncation_bound,
    zero_hit_class,
)
import core.cir as cir_module
from core.diffusion import hitting_time_samples
from core.errors import DomainError, SpectralRootError
from models.params import CirParams, ModelParams
from models.results import SpectralExpansion, SpectralMode, ZeroHitClass


DENSITY = CirParams(c=1.0, a=2.0, r=0.0, d=1.0)
SMOOTH = CirParams(c=5.0, a=2.0, r=0.0, d=1.0)
FPT = CirParams(c=0.45, a=0.5, r=0.2, d=1.0)


def test_mean_var_matches_law():
    """閉形式のモーメントは非心χ²分布のモーメントと一致する"""
    for q in (DENSITY, SMOOTH, FPT):
        for t, n0 in [(0.5, 1.0), (2.0, 0.3), (1.0, 0.0)]:
            mean, variance = mean_var(t, n0, q)
            law = transition_law(t, n0, q)
            assert math.isclose(mean, law.mean(), rel_tol=1e-10), f"{q}, t={t}"
            assert math.isclose(variance, law.var(), rel_tol=1e-10), f"{q}, t={t}"
    assert mean_var(0.0, 2.0, FPT) == (2.0, 0.0)


def test_mean_var_critical_limit():
    """r = d では n0 + ct と 2a·n0·t + a·c·t² に連続につながる"""
    q = CirParams(c=1.0, a=0.5, r=1.0, d=1.0)
    near = CirParams(c=1.0, a=0.5, r=1.0, d=1.0 + 1e-7)
    mean, variance = mean_var(2.0, 1.0, q)
    assert (mean, variance) == (3.0, 4.0)
    near_mean, near_variance = mean_var(2.0, 1.0, near)
    assert math.isclose(mean, near_mean, rel_tol=1e-5)
    assert math.isclose(variance, near_variance, rel_tol=1e-5)


def test_transition_density_matches_law():
    """遷移密度は scipy の非心χ²の密度と一致し、積分は1"""
    for q in (DENSITY, SMOOTH):
        law = transition_law(1.0, 0.8, q)
        for n in (0.05, 0.5, 1.0, 3.0):
            assert math.isclose(transition_density(n, 1.0, 0.8, q), law.pdf(n), rel_tol=1e-8), f"{q}, n={n}"
    total, _ = integrate.quad(lambda n: transition_density(n, 1.0, 0.8, SMOOTH), 0.0, np.inf)
    assert abs(total - 1) < 1e-6, f"積分 {total}"


def test_transition_density_critical():
    """r = d でも κ_t の極限で評価でき、積分は1"""
    q = CirParams(c=3.0, a=1.0, r=1.0, d=1.0)
    total, _ = integrate.quad(lambda n: transition_density(n, 0.5, 1.0, q), 0.0, np.inf)
    assert abs(total - 1) < 1e-6


def test_transition_density_invalid():
    """n, t, n0 のいずれかが0以下なら DomainError"""
    for args in ((0.0, 1.0, 1.0), (1.0, 0.0, 1.0), (1.0, 1.0, 0.0)):
        try:
            transition_density(*args, DENSITY)
            assert False, f"{args}: DomainError が出るべき"
        except DomainError:
            pass


def test_stationary_density():
    """c < a では0で発散、c > a では0で0になるガンマ密度"""
    assert stationary_density(0.0, DENSITY) == math.inf
    assert stationary_density(0.0, SMOOTH) == 0.0
    gamma_law = stats.gamma(a=2.5, scale=2.0)
    for n in (0.1, 1.0, 4.0):
        assert math.isclose(stationary_density(n, SMOOTH), gamma_law.pdf(n), rel_tol=1e-12)
    total, _ = integrate.quad(lambda n: stationary_density(n, SMOOTH), 0.0, np.inf)
    assert abs(total - 1) < 1e-8
    # 長時間後の遷移密度は定常密度に近づく
    assert math.isclose(transition_density(2.0, 40.0, 1.0, SMOOTH), stationary_density(2.0, SMOOTH), rel_tol=1e-8)


def test_stationary_requires_subcritical():
    """r ≥ d では定常分布はない"""
    try:
        stationary_density(1.0, CirParams(c=1.0, a=1.0, r=1.0, d=1.0))
        assert False, "DomainError が出るべき"
    except DomainError:
        pass


def test_stationary_potential():
    """p∞ ∝ e^{−φ}"""
    ratio = stationary_density(1.0, SMOOTH) / stationary_density(3.0, SMOOTH)
    assert math.isclose(ratio, math.exp(stationary_potential(3.0, SMOOTH) - stationary_potential(1.0, SMOOTH)))


def test_zero_hit_class():
    """0への到達の分類"""
    test_cases = [
        (CirParams(c=1.0, a=2.0, r=0.0, d=1.0), ZeroHitClass.CERTAIN),
        (CirParams(c=1.0, a=2.0, r=1.0, d=1.0), ZeroHitClass.CERTAIN),
        (CirParams(c=1.0, a=2.0, r=2.0, d=1.0), ZeroHitClass.POSITIVE_PROBABILITY),
        (CirParams(c=2.0, a=2.0, r=0.0, d=1.0), ZeroHitClass.NEVER),
        (CirParams(c=5.0, a=2.0, r=3.0, d=1.0), ZeroHitClass.NEVER),
    ]
    for q, expected in test_cases:
        assert zero_hit_class(q) is expected, f"{q}: 期待値{expected}"


def test_laplace_basic_values():
    """α = 0 と y = x では1、α が大きいほど小さい"""
    assert laplace_fpt(0.0, 0.01, 1.0, FPT) == 1.0
    assert laplace_fpt(2.0, 1.0, 1.0, FPT) == 1.0
    values = [laplace_fpt(alpha, 0.01, 1.0, FPT) for alpha in (0.5, 1.0, 2.0)]
    assert 1 > values[0] > values[1] > values[2] > 0
    for bad in ((-1.0, 0.0, 1.0), (1.0, 2.0, 1.0)):
        try:
            laplace_fpt(bad[0], bad[1], bad[2], FPT)
            assert False, f"{bad}: DomainError が出るべき"
        except DomainError:
            pass


def test_laplace_whittaker_form():
    """0から出発するときクンマー比とホイッタカー形は一致する"""
    for alpha in (0.3, 1.0, 4.0):
        kummer = laplace_fpt(alpha, 0.0, 1.0, FPT)
        whittaker = laplace_fpt_whittaker(alpha, 1.0, FPT)
        assert math.isclose(kummer, whittaker, rel_tol=1e-9), f"α={alpha}: {kummer} vs {whittaker}"


def test_laplace_mean_matches_derivative():
    """平均到達時間は α = 0 での微分"""
    h = 1e-6
    numeric = (1 - laplace_fpt(h, 0.01, 1.0, FPT)) / h
    assert math.isclose(laplace_fpt_mean(0.01, 1.0, FPT), numeric, rel_tol=1e-4)


def test_spectral_density_integrates_to_one():
    """50項の厳密根展開で ∫_{t0}^∞ f = P(T > t0) ≈ 1（t0 = 0.01）"""
    expansion = spectral_fpt(0.01, 1.0, FPT, n_terms=50)
    assert expansion.n_terms == 50 and expansion.exact_count == 50
    assert np.all(np.diff(expansion.eigenvalues) > 0)
    t0 = 0.01
    tail, _ = integrate.quad(lambda t: fpt_density_eval(expansion, t), t0, np.inf, limit=200)
    assert math.isclose(tail, fpt_survival_eval(expansion, t0), rel_tol=1e-6)
    assert abs(tail - 1) < 0.01, f"積分 {tail}"
    assert math.isclose(fpt_cdf_eval(expansion, 5.0), 1 - fpt_survival_eval(expansion, 5.0))


def test_spectral_matches_laplace():
    """展開のラプラス変換は閉形式と 1e-3 以内で一致する"""
    expansion = spectral_fpt(0.01, 1.0, FPT, n_terms=50)
    for alpha in (0.5, 1.0, 2.0):
        exact = laplace_fpt(alpha, 0.01, 1.0, FPT)
        approx = spectral_laplace(expansion, alpha)
        assert abs(approx - exact) < 1e-3, f"α={alpha}: {approx} vs {exact}"


def test_spectral_mean():
    """Σ o_n/λ_n は閉形式の平均と一致する"""
    expansion = spectral_fpt(0.01, 1.0, FPT, n_terms=50)
    assert math.isclose(spectral_mean(expansion), laplace_fpt_mean(0.01, 1.0, FPT), rel_tol=1e-3)


def test_spectral_cdf_matches_monte_carlo():
    """展開の分布関数とオイラー法の到達時間の KS 距離は小さい"""
    expansion = spectral_fpt(0.01, 1.0, FPT, n_terms=50)
    model = ModelParams(u=1.0, gamma=1.0, c=FPT.c, r=FPT.r, d=FPT.d, alpha=0.0, a=FPT.a)
    result = hitting_time_samples(model, 0.01, 1.0, dt=1e-3, n_paths=3000, master_seed=8)
    assert result.n_censored == 0
    statistic = stats.kstest(result.observed, lambda t: np.clip(fpt_cdf_eval(expansion, t), 0.0, 1.0)).statistic
    assert statistic < 0.05, f"KS {statistic}"


def test_spectral_modes():
    """hybrid の先頭は厳密根と同じで、残りは近似式"""
    exact = spectral_fpt(0.01, 1.0, FPT, n_terms=20)
    hybrid = spectral_fpt(0.01, 1.0, FPT, n_terms=20, mode=SpectralMode.HYBRID)
    asymptotic = spectral_fpt(0.01, 1.0, FPT, n_terms=20, mode=SpectralMode.ASYMPTOTIC)
    assert hybrid.exact_count == 5 and asymptotic.exact_count == 0
    assert np.array_equal(hybrid.eigenvalues[:5], exact.eigenvalues[:5])
    # 大きな n では近似式の固有値は厳密根に近い
    assert math.isclose(asymptotic.eigenvalues[-1], exact.eigenvalues[-1], rel_tol=1e-2)


def test_spectral_invalid():
    """y = x や r ≥ d はエラー"""
    for args in ((1.0, 1.0, FPT), (0.01, 1.0, CirParams(c=0.45, a=0.5, r=1.0, d=1.0))):
        try:
            spectral_fpt(*args)
            assert False, f"{args}: DomainError が出るべき"
        except DomainError:
            pass


def test_spectral_root_without_sign_change():
    """囲い込んだ区間で符号が変わらなければ根の番号つきの SpectralRootError"""
    original = cir_module.kummer_phi
    cir_module.kummer_phi = lambda s, b, z, control=None: math.nan
    try:
        spectral_fpt(0.01, 1.0, FPT, n_terms=3)
        assert False, "SpectralRootError が出るべき"
    except SpectralRootError as e:
        assert e.index == 1
    finally:
        cir_module.kummer_phi = original


def test_negative_density_warned_in_every_mode():
    """密度が負になればモードによらず警告を出す"""
    records = []
    handler = logging.Handler()
    handler.emit = records.append
    logger = logging.getLogger(cir_module.__name__)
    logger.addHandler(handler)
    try:
        for mode in SpectralMode:
            records.clear()
            # f(0.1) = e^{-0.1} - 2 e^{-0.2} < 0
            expansion = SpectralExpansion(eigenvalues=np.array([1.0, 2.0]), coefficients=np.array([1.0, -1.0]),
                                          mode=mode, y=0.01, x=1.0)
            assert fpt_density_eval(expansion, 0.1) < 0
            assert any(r.levelno == logging.WARNING and mode.value in r.getMessage() for r in records), mode
            records.clear()
            assert fpt_density_eval(expansion, 5.0) > 0
            assert not records
    finally:
        logger.removeHandler(handler)


def test_truncation():
    """打ち切りの見積もりは N が大きいと小さくなり、既定の項数でしきい値を下回る"""
    t0 = 0.01
    assert truncation_bound(60, t0, FPT, 1.0, 0.01) < truncation_bound(30, t0, FPT, 1.0, 0.01)
    N = default_n_terms(t0, FPT, 1.0, 0.01, tol=1e-8)
    assert truncation_bound(N, t0, FPT, 1.0, 0.01) < 1e-8
    assert truncation_bound(N - 1, t0, FPT, 1.0, 0.01) >= 1e-8


def run_tests():
    """全テストを実行"""
    tests = [
        test_mean_var_matches_law,
        test_mean_var_critical_limit,
        test_transition_density_matches_law,
        test_transition_density_critical,
        test_transition_density_invalid,
        test_stationary_density,
        test_stationary_requires_subcritical,
        test_stationary_potential,
        test_zero_hit_class,
        test_laplace_basic_values,
        test_laplace_whittaker_form,
        test_laplace_mean_matches_derivative,
        test_spectral_density_integrates_to_one,
        test_spectral_matches_laplace,
        test_spectral_mean,
        test_spectral_cdf_matches_monte_carlo,
        test_spectral_modes,
        test_spectral_invalid,
        test_spectral_root_without_sign_change,
        test_negative_density_warned_in_every_mode,
        test_truncation,
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
