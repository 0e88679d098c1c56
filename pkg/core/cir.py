"""
CIR過程の解析

定数レート（α = 0）では極限SDEは CIR 過程 dN = (c + (r−d)N)dt + √(2aN)dB になる。
モーメント、遷移密度、定常密度、0への到達の分類、初到達時間のラプラス変換と
スペクトル展開 f(t) = Σ o_n λ_n e^{−λ_n t} を計算する。

水準 x は x̄ = (d−r)x/a に写して扱う。ラプラス変換と固有値はクンマー関数
Φ(·; c/a; ·) で表され、固有値 λ_n = (d−r)|s_n| は Φ(s; c/a; x̄) の負の根 s_n から得る。
"""
import logging
import math
from typing import Optional, Union

import numpy as np
from scipy import optimize, stats

from config import Config
from core.errors import DomainError, SpectralRootError
from core.specfun import kummer_phi, kummer_phi_ds, log_bessel_i, log_gamma, whittaker_m
from models.params import CirParams
from models.results import SpectralExpansion, SpectralMode, ZeroHitClass

logger = logging.getLogger(__name__)

ROOT_XTOL = 1e-12
# hybrid モードで厳密根を使う項数
HYBRID_EXACT_TERMS = 5
# 根の間隔が予測のこの倍率を超えたら細かく探し直す
GAP_FACTOR = 1.75
BRACKET_ATTEMPTS = 4


# --- モーメントと密度 ---

def mean_var(t: float, n0: float, q: CirParams) -> tuple[float, float]:
    """
    E[N_t | n0] と Var(N_t | n0)

    r = d（|r−d| < 1e-12）では極限 (n0 + ct, 2a·n0·t + a·c·t²)。
    """
    if t < 0:
        raise DomainError(f"t は0以上である必要があります: {t}")
    k = q.r - q.d
    if abs(k) < 1e-12:
        return n0 + q.c * t, 2 * q.a * n0 * t + q.a * q.c * t * t
    growth = math.exp(k * t)
    em1 = math.expm1(k * t)
    mean = n0 * growth + q.c * em1 / k
    variance = n0 * 2 * q.a * growth * em1 / k + q.a * q.c * (em1 / k) ** 2
    return mean, variance


def _kappa_t(t: float, q: CirParams) -> float:
    """κ_t = (d−r) / ((1 − e^{(r−d)t}) a)、r = d では 1/(a t)"""
    k = q.r - q.d
    if abs(k) < 1e-12:
        return 1 / (q.a * t)
    return k / (math.expm1(k * t) * q.a)


def transition_density(n: float, t: float, n0: float, q: CirParams) -> float:
    """
    遷移密度 p(n, t | n0)

    u = κ_t n0 e^{(r−d)t}, v = κ_t n として
    p = κ_t e^{−u−v} (v/u)^{(c/a−1)/2} I_{c/a−1}(2√(uv))。
    対数で評価してからexpする。r = d では κ_t の極限 1/(at) を使う。

    Args:
        n: 評価点 (>0)
        t: 経過時間 (>0)
        n0: 初期値 (>0)
    """
    if n <= 0 or t <= 0 or n0 <= 0:
        raise DomainError(f"n, t, n0 は正である必要があります: n={n}, t={t}, n0={n0}")
    kt = _kappa_t(t, q)
    u = kt * n0 * math.exp((q.r - q.d) * t)
    v = kt * n
    log_p = (math.log(kt) - u - v + (q.nu / 2) * (math.log(v) - math.log(u))
             + log_bessel_i(q.nu, 2 * math.sqrt(u * v)))
    return math.exp(log_p)


def transition_law(t: float, n0: float, q: CirParams):
    """
    時刻 t の周辺分布（スケールした非心χ²分布）

    自由度 2c/a、非心度 2κ_t n0 e^{(r−d)t}、スケール 1/(2κ_t) の scipy.stats の凍結分布。
    """
    if t <= 0 or n0 < 0:
        raise DomainError(f"t > 0, n0 ≥ 0 である必要があります: t={t}, n0={n0}")
    kt = _kappa_t(t, q)
    return stats.ncx2(df=q.delta, nc=2 * kt * n0 * math.exp((q.r - q.d) * t), scale=1 / (2 * kt))


def _require_stationary(q: CirParams) -> None:
    if not q.has_stationary_law:
        raise DomainError(f"定常分布は r < d のときのみ存在します: r={q.r}, d={q.d}")


def stationary_density(n: float, q: CirParams) -> float:
    """
    定常密度（ガンマ分布）

    p∞(n) = ((d−r)/a)^{c/a} n^{c/a−1} e^{(r−d)n/a} / Γ(c/a)

    Raises:
        DomainError: r ≥ d または n < 0 の場合
    """
    _require_stationary(q)
    if n < 0:
        raise DomainError(f"n は0以上である必要があります: {n}")
    shape = q.c / q.a
    rate = (q.d - q.r) / q.a
    if n == 0:
        if shape < 1:
            return math.inf
        return rate if shape == 1 else 0.0
    log_p = shape * math.log(rate) + (shape - 1) * math.log(n) - rate * n - log_gamma(shape)
    return math.exp(log_p)


def stationary_potential(n: float, q: CirParams) -> float:
    """ポテンシャル φ(n) = (1 − c/a) ln n + (d−r)n/a（p∞ ∝ e^{−φ}）"""
    if n <= 0:
        raise DomainError(f"n は正である必要があります: {n}")
    return (1 - q.c / q.a) * math.log(n) + (q.d - q.r) * n / q.a


def zero_hit_class(q: CirParams) -> ZeroHitClass:
    """
    有限時間で0に到達する確率の分類

    c < a かつ r−d ≤ 0 → 確実、c < a かつ r−d > 0 → 正の確率、c ≥ a → 到達しない
    """
    if q.c >= q.a:
        return ZeroHitClass.NEVER
    if q.r - q.d <= 0:
        return ZeroHitClass.CERTAIN
    return ZeroHitClass.POSITIVE_PROBABILITY


# --- 初到達時間のラプラス変換 ---

def _check_levels(y: float, x: float, q: CirParams) -> None:
    _require_stationary(q)
    if not 0 <= y <= x or x <= 0:
        raise DomainError(f"0 ≤ y ≤ x かつ x > 0 である必要があります: y={y}, x={x}")


def laplace_fpt(alpha: float, y: float, x: float, q: CirParams) -> float:
    """
    E_y[e^{−α T_x}] = Φ(α/(d−r), c/a; ȳ) / Φ(α/(d−r), c/a; x̄)

    y = 0 では分子は1。上向きの通過 y < x のみ扱う。

    Args:
        alpha: 変換変数 (≥0)
        y: 出発水準
        x: 目標水準
        q: CIRパラメータ（r < d）
    """
    _check_levels(y, x, q)
    if alpha < 0:
        raise DomainError(f"alpha は0以上である必要があります: {alpha}")
    xbar = q.scaled_level(x)
    if y == x or alpha == 0:
        return 1.0
    s = alpha / (q.d - q.r)
    b = q.c / q.a
    numerator = 1.0 if y == 0 else kummer_phi(s, b, q.scaled_level(y))
    return numerator / kummer_phi(s, b, xbar)


def laplace_fpt_whittaker(alpha: float, x: float, q: CirParams) -> float:
    """
    0から出発したときのラプラス変換をホイッタカー関数で表した形

    E_0[e^{−αT_x}] = x̄^{b/2} e^{−x̄/2} / M_{b/2 − s, (b−1)/2}(x̄)、b = c/a, s = α/(d−r)
    """
    _check_levels(0.0, x, q)
    b = q.c / q.a
    s = alpha / (q.d - q.r)
    xbar = q.scaled_level(x)
    return xbar ** (b / 2) * math.exp(-xbar / 2) / whittaker_m(b / 2 - s, (b - 1) / 2, xbar)


def laplace_fpt_mean(y: float, x: float, q: CirParams) -> float:
    """
    平均到達時間 E_y[T_x] = −d/dα E_y[e^{−αT_x}] |_{α=0}

    Φ(0; ·; ·) = 1 なので (∂sΦ(0; c/a; x̄) − ∂sΦ(0; c/a; ȳ)) / (d−r)。
    """
    _check_levels(y, x, q)
    b = q.c / q.a
    upper = kummer_phi_ds(0.0, b, q.scaled_level(x))
    lower = kummer_phi_ds(0.0, b, q.scaled_level(y)) if y > 0 else 0.0
    return (upper - lower) / (q.d - q.r)


# --- スペクトル展開 ---

def _shift(q: CirParams, n: int) -> float:
    """n + c/(2a) − 3/4"""
    return n + q.c / (2 * q.a) - 0.75


def asymptotic_eigenvalue(n: int, x: float, q: CirParams) -> float:
    """λ_n の大きな n での近似 (d−r)π²/(4x̄)(n + c/(2a) − 3/4)² + (d−r)c/(2a)"""
    dr = q.d - q.r
    xbar = q.scaled_level(x)
    return dr * math.pi ** 2 / (4 * xbar) * _shift(q, n) ** 2 + dr * q.c / (2 * q.a)


def asymptotic_coefficient(n: int, y: float, x: float, q: CirParams) -> float:
    """o_n の大きな n での近似（y > 0 が必要）"""
    if y <= 0:
        raise DomainError(f"o_n の漸近形は y > 0 でのみ使えます: {y}")
    xbar, ybar = q.scaled_level(x), q.scaled_level(y)
    nu = _shift(q, n)
    b = q.c / q.a
    head = (-1) ** (n + 1) * 2 * math.pi * nu / (math.pi ** 2 * nu ** 2 - 2 * b * xbar)
    ratio = ybar / xbar
    tail = math.exp((ybar - xbar) / 2) * ratio ** (0.25 - b / 2)
    return head * tail * math.cos(math.pi * nu * math.sqrt(ratio) - math.pi * b / 2 + math.pi / 4)


def _root_spacing(n: int, xbar: float, q: CirParams) -> float:
    """s 単位での根 n と n+1 の予測間隔"""
    return math.pi ** 2 / (4 * xbar) * (2 * _shift(q, n) + 1)


def _sign(value: float) -> int:
    return 1 if value > 0 else (-1 if value < 0 else 0)


def _bracketed_root(phi, s_lo: float, s_up: float, index: int) -> float:
    """符号変化を確かめてから brentq で根を求める"""
    f_lo, f_up = phi(s_lo), phi(s_up)
    if f_lo == 0:
        return s_lo
    if f_up == 0:
        return s_up
    if not math.isfinite(f_lo * f_up) or f_lo * f_up > 0:
        raise SpectralRootError(
            f"根{index}の区間 [{s_lo:.6g}, {s_up:.6g}] で符号が変わりません: {f_lo:.3g}, {f_up:.3g}",
            index=index,
        )
    return optimize.brentq(phi, s_lo, s_up, xtol=ROOT_XTOL)


def _scan(phi, s_hi: float, sign_hi: int, step: float, limit: float):
    """
    s_hi から下へ step ずつ進み、limit までに最初の符号変化を囲い込む

    Returns:
        (s_lo, s_hi) または None
    """
    while s_hi > limit:
        s_lo = max(s_hi - step, limit)
        sign_lo = _sign(phi(s_lo))
        if sign_lo == 0 or sign_lo != sign_hi:
            return s_lo, s_hi
        s_hi = s_lo
    return None


def _find_roots(n_terms: int, b: float, xbar: float, q: CirParams) -> np.ndarray:
    """Φ(s; b; x̄) の負の根を大きい順に n_terms 個"""
    def phi(s: float) -> float:
        return kummer_phi(s, b, xbar)

    roots: list[float] = []
    s_hi, sign_hi = 0.0, 1  # Φ(0) = 1
    while len(roots) < n_terms:
        n = len(roots) + 1
        spacing = _root_spacing(n, xbar, q)
        step = spacing / 8
        predicted = -(math.pi ** 2 / (4 * xbar) * _shift(q, n) ** 2 + b / 2)
        window = max(s_hi - predicted, 0.0) + spacing
        bracket = None
        for attempt in range(BRACKET_ATTEMPTS):
            bracket = _scan(phi, s_hi, sign_hi, step, s_hi - window * 2 ** attempt)
            if bracket is not None:
                break
            logger.debug(f"根{n}の囲い込みを拡大します (試行{attempt + 1})")
        if bracket is None:
            raise SpectralRootError(f"クンマー関数の根{n}を囲い込めません", index=n)
        s_lo, s_up = bracket
        root = _bracketed_root(phi, s_lo, s_up, n)

        if roots:
            gap = roots[-1] - root
            expected = _root_spacing(n - 1, xbar, q)
            if gap > GAP_FACTOR * expected:
                # 粗い刻みで偶数個の根を飛ばしていないか細かく確認する
                missed = _refine_gap(phi, root, roots[-1], sign_hi, step / 64, n)
                if missed:
                    logger.info(f"根{n}付近で{len(missed)}個の根を補完しました")
                    roots.extend(missed)
        roots.append(root)
        s_hi, sign_hi = root, -sign_hi
    return np.array(roots[:n_terms])


def _refine_gap(phi, lower: float, upper: float, sign_upper: int, step: float, index: int) -> list[float]:
    """(lower, upper) 内の根を細かい刻みで探す（upper 直下の符号は sign_upper）"""
    found = []
    s_hi, sign_hi = upper, sign_upper
    margin = step / 4
    while True:
        bracket = _scan(phi, s_hi, sign_hi, step, lower + margin)
        if bracket is None:
            return found
        root = _bracketed_root(phi, bracket[0], bracket[1], index + len(found))
        found.append(root)
        s_hi, sign_hi = root, -sign_hi


def spectral_fpt(y: float, x: float, q: CirParams, n_terms: Optional[int] = None,
                 mode: SpectralMode = SpectralMode.EXACT_ROOTS) -> SpectralExpansion:
    """
    初到達時間 T_{y→x} の密度のスペクトル展開

    - exact_roots: Φ(s; c/a; x̄) の負の根 s_n を求め、λ_n = (d−r)|s_n|,
      o_n = −Φ(s_n; c/a; ȳ) / (s_n ∂sΦ(s_n; c/a; x̄))
    - asymptotic: λ_n, o_n の大きな n での近似式
    - hybrid: 先頭5項は厳密根、それ以降は近似式

    Args:
        y: 出発水準 (≥0)
        x: 目標水準 (>y)
        q: CIRパラメータ（r < d）
        n_terms: 項数（既定 Config.SPECTRAL_TERMS）
        mode: 展開の作り方

    Raises:
        SpectralRootError: 根を囲い込めなかった場合（番号付き）
    """
    _check_levels(y, x, q)
    if y == x:
        raise DomainError("y < x である必要があります")
    n_terms = Config.SPECTRAL_TERMS if n_terms is None else n_terms
    if n_terms < 1:
        raise DomainError(f"n_terms は1以上である必要があります: {n_terms}")
    b = q.c / q.a
    xbar, ybar = q.scaled_level(x), q.scaled_level(y)
    dr = q.d - q.r

    if mode is SpectralMode.EXACT_ROOTS:
        n_exact = n_terms
    elif mode is SpectralMode.HYBRID:
        n_exact = min(HYBRID_EXACT_TERMS, n_terms)
    else:
        n_exact = 0

    eigenvalues, coefficients = [], []
    if n_exact:
        for s in _find_roots(n_exact, b, xbar, q):
            numerator = 1.0 if ybar == 0 else kummer_phi(s, b, ybar)
            eigenvalues.append(dr * -s)
            coefficients.append(-numerator / (s * kummer_phi_ds(s, b, xbar)))
    for n in range(n_exact + 1, n_terms + 1):
        eigenvalues.append(asymptotic_eigenvalue(n, x, q))
        coefficients.append(asymptotic_coefficient(n, y, x, q))
    return SpectralExpansion(
        eigenvalues=np.array(eigenvalues),
        coefficients=np.array(coefficients),
        mode=mode,
        y=y,
        x=x,
        exact_count=n_exact,
    )


TimeLike = Union[float, np.ndarray]


def _check_times(t: TimeLike) -> np.ndarray:
    times = np.asarray(t, dtype=float)
    if np.any(times <= 0):
        raise DomainError("t は正である必要があります")
    return times


def fpt_density_eval(exp: SpectralExpansion, t: TimeLike) -> TimeLike:
    """f(t) = Σ o_n λ_n e^{−λ_n t}"""
    times = _check_times(t)
    lam, coef = exp.eigenvalues, exp.coefficients
    values = np.exp(-np.multiply.outer(times, lam)) @ (coef * lam)
    if np.any(values < 0):
        logger.warning(f"{exp.mode.value} モードで密度が負になりました: 最小値 {float(np.min(values)):.3g}")
    return float(values) if np.ndim(t) == 0 else values


def fpt_survival_eval(exp: SpectralExpansion, t: TimeLike) -> TimeLike:
    """P(T > t) = Σ o_n e^{−λ_n t}"""
    times = _check_times(t)
    values = np.exp(-np.multiply.outer(times, exp.eigenvalues)) @ exp.coefficients
    return float(values) if np.ndim(t) == 0 else values


def fpt_cdf_eval(exp: SpectralExpansion, t: TimeLike) -> TimeLike:
    """P(T ≤ t)"""
    return 1 - fpt_survival_eval(exp, t)


def spectral_laplace(exp: SpectralExpansion, alpha: float) -> float:
    """
    展開のラプラス変換 Σ o_n λ_n/(α+λ_n)

    Σ o_n = 1 を使って 1 − α Σ o_n/(α+λ_n) の形で計算する（尾部の収束が速い）。
    """
    if alpha < 0:
        raise DomainError(f"alpha は0以上である必要があります: {alpha}")
    return 1 - alpha * math.fsum(exp.coefficients / (alpha + exp.eigenvalues))


def spectral_mean(exp: SpectralExpansion) -> float:
    """E[T] = Σ o_n/λ_n"""
    return math.fsum(exp.coefficients / exp.eigenvalues)


# --- 打ち切り誤差 ---

def truncation_constants(x: float, y: float, q: CirParams) -> tuple[float, float]:
    """
    |o_N λ_N e^{−λ_N t0}| ~ A·N·e^{−B N² t0} の定数 (A, B)

    A = (2aπ/(4x)) e^{(ȳ−x̄)/2} (x/y)^{1/4 − c/(2a)}, B = aπ²/(4x)
    """
    if y <= 0 or x <= 0:
        raise DomainError(f"x, y は正である必要があります: x={x}, y={y}")
    xbar, ybar = q.scaled_level(x), q.scaled_level(y)
    A = (2 * q.a * math.pi / (4 * x)) * math.exp((ybar - xbar) / 2) * (x / y) ** (0.25 - q.c / (2 * q.a))
    B = q.a * math.pi ** 2 / (4 * x)
    return A, B


def truncation_bound(N: int, t0: float, q: CirParams, x: float, y: float) -> float:
    """N 項目の大きさの見積もり A·N·e^{−B N² t0}"""
    if t0 <= 0:
        raise DomainError(f"t0 は正である必要があります: {t0}")
    A, B = truncation_constants(x, y, q)
    return A * N * math.exp(-B * N * N * t0)


def default_n_terms(t0: float, q: CirParams, x: float, y: float, tol: float = 1e-8) -> int:
    """見積もりが最大値を過ぎてから tol を下回る最小の N"""
    _, B = truncation_constants(x, y, q)
    N = max(1, math.ceil(1 / math.sqrt(2 * B * t0)))
    while truncation_bound(N, t0, q, x, y) >= tol:
        N += 1
    return N
