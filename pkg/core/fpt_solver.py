"""
停止時間の求積

一般モデル（速度に依存する解離）の n* への平均到達時間 τ(n0) と高次モーメントを、
後退方程式 b τ' + (1/2)σ² τ'' = −1, τ(n*) = 0 の求積解から計算する。

    τ(n0) = ∫_{n0}^{n*} I(y) dy,  I(y) = (1/a) ∫_0^y (Ψ(z)/Ψ(y)) z^{−1} dz

Ψ の比は下端 ε によらないので、被積分関数は ε を含まない形で実装する。
z^{c/a−1} の特異性は z = y·v^{1/p}（p = min(c/a, 1)）で除く。
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import Chebyshev
from scipy import integrate

from config import Config
from core.errors import AdhesionModelError, DomainError
from core.rates import comparison_models, drift
from models.params import ModelParams
from models.results import SweepPoint

logger = logging.getLogger(__name__)

# 内側積分の分点（v 空間）。y が大きいと被積分関数は v=0 付近に鋭く集中する
_V_BREAKS = tuple(10.0 ** -k for k in range(1, 11))


@dataclass(frozen=True)
class QuadControl:
    """適応求積の許容誤差"""
    abs_tol: float = 1e-8
    rel_tol: float = 1e-9
    limit: int = 200

    @classmethod
    def default(cls) -> "QuadControl":
        return cls(abs_tol=Config.QUAD_ABS_TOL, rel_tol=Config.QUAD_REL_TOL, limit=Config.QUAD_LIMIT)


def log_psi(n0: float, eps: float, p: ModelParams) -> float:
    """
    log Ψ(n0) = (c/a) ln(n0/ε) + (r/a) n0 − (d e^{αu}/a)(1 − e^{−αγ n0})/(αγ)

    α → 0 では最後の項は (d/a)·n0。
    """
    if not p.a > 0:
        raise DomainError(f"Ψ は a > 0 でのみ定義されます: {p.a}")
    if not 0 < eps <= n0:
        raise DomainError(f"0 < eps ≤ n0 である必要があります: eps={eps}, n0={n0}")
    ag = p.alpha * p.gamma
    saturation = n0 if ag == 0 else -math.expm1(-ag * n0) / ag
    return (p.effective_c / p.a) * math.log(n0 / eps) + (p.r / p.a) * n0 \
        - (p.d * math.exp(p.alpha * p.u) / p.a) * saturation


def psi(n0: float, eps: float, p: ModelParams, log: bool = False) -> float:
    """
    スケール関数 Ψ(n0) = exp(∫_ε^{n0} 2b/σ²)

    Args:
        log: True なら log Ψ を返す

    Raises:
        DomainError: オーバーフローする場合（log=True を使う）
    """
    value = log_psi(n0, eps, p)
    if log:
        return value
    try:
        return math.exp(value)
    except OverflowError:
        raise DomainError(f"Ψ がオーバーフローします (log Ψ = {value:.6g})。log=True を使ってください")


def _h(z: float, y: float, p: ModelParams) -> float:
    """log(Ψ(z)/Ψ(y)) からべき乗部分を除いたもの（z について凸）"""
    ag = p.alpha * p.gamma
    if ag == 0:
        spread = y - z
    else:
        spread = math.exp(-ag * y) * math.expm1(ag * (y - z)) / ag
    return (p.r / p.a) * (z - y) + (p.d * math.exp(p.alpha * p.u) / p.a) * spread


def _check_solvable(p: ModelParams) -> None:
    if not p.a > 0:
        raise DomainError("ノイズがない (a = 0) ため停止時間の求積は定義されません")
    if not p.effective_c > 0:
        raise DomainError("c > 0（かつ u ≤ u*）が必要です。c = 0 では内側積分が発散します")


def _inner_scaled(y: float, p: ModelParams, quad: QuadControl,
                  weight: Optional[Callable] = None) -> tuple[float, float]:
    """
    内側積分を (m, J) で返す（I(y) = e^m·J）

    h は z について凸なので最大値は端点 z=0 か z=y（h=0）にあり、m = max(h(0, y), 0)。
    """
    ratio = p.effective_c / p.a
    power = min(ratio, 1.0)
    exponent = ratio / power - 1
    m = max(_h(0.0, y, p), 0.0)

    def integrand(v: float) -> float:
        z = y * v ** (1 / power)
        value = v ** exponent * math.exp(_h(z, y, p) - m)
        if weight is not None:
            value *= float(weight(z))
        return value

    J, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=quad.rel_tol,
                          limit=quad.limit, points=_V_BREAKS)
    return m, J / (p.a * power)


def inner_integral(y: float, p: ModelParams, quad: Optional[QuadControl] = None) -> float:
    """
    I(y) = (1/a) ∫_0^y (z/y)^{c/a} z^{−1} e^{(r/a)(z−y)} exp((d e^{αu}/(aαγ))(e^{−αγz} − e^{−αγy})) dz

    τ'(y) = −I(y)。
    """
    _check_solvable(p)
    if y <= 0:
        raise DomainError(f"y は正である必要があります: {y}")
    m, J = _inner_scaled(y, p, quad or QuadControl.default())
    return math.exp(m) * J


def _tau(n0: float, p: ModelParams, quad: QuadControl, k: int) -> float:
    """k 次モーメントの外側積分"""
    if n0 >= p.n_star:
        return 0.0
    weight = None if k == 1 else _moment_interpolant(k - 1, p, quad)

    def outer(y: float) -> float:
        m, J = _inner_scaled(y, p, quad, weight)
        return k * math.exp(m) * J

    value, _ = integrate.quad(outer, n0, p.n_star, epsabs=quad.abs_tol, epsrel=quad.rel_tol, limit=quad.limit)
    return value


@lru_cache(maxsize=32)
def _moment_interpolant(k: int, p: ModelParams, quad: QuadControl) -> Chebyshev:
    """τ_k を [0, n*] のチェビシェフ点で補間したもの"""
    def values(nodes: np.ndarray) -> np.ndarray:
        return np.array([_tau(float(z), p, quad, k) for z in nodes])

    return Chebyshev.interpolate(values, Config.CHEBYSHEV_NODES - 1, domain=[0.0, p.n_star])


def _check_start(n0: float, p: ModelParams) -> None:
    _check_solvable(p)
    if not 0 <= n0 <= p.n_star:
        raise DomainError(f"0 ≤ n0 ≤ n* である必要があります: n0={n0}, n*={p.n_star}")


def mean_fpt(n0: float, p: ModelParams, quad: Optional[QuadControl] = None) -> float:
    """
    速度0（n*）への平均到達時間 τ(n0)

    Args:
        n0: 初期結合密度（0 ≤ n0 ≤ n*）
        p: モデルパラメータ（a > 0, c > 0）
        quad: 求積の許容誤差（省略時は Config の既定値）

    Raises:
        DomainError: a = 0 または c = 0 の場合
    """
    _check_start(n0, p)
    return _tau(n0, p, quad or QuadControl.default(), 1)


def moment_fpt(k: int, n0: float, p: ModelParams, quad: Optional[QuadControl] = None) -> float:
    """
    k 次モーメント τ_k(n0) = E[T^k]

    τ_k = 2k ∫_{n0}^{n*} Ψ(y)^{−1} ∫_0^y Ψ(z) τ_{k−1}(z)/σ²(z) dz dy, τ_0 ≡ 1。
    τ_{k−1} はチェビシェフ補間をキャッシュして使う。
    """
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise DomainError(f"k は1以上の整数である必要があります: {k}")
    _check_start(n0, p)
    return _tau(n0, p, quad or QuadControl.default(), int(k))


def backward_residual(p: ModelParams, nodes: Optional[np.ndarray] = None,
                      quad: Optional[QuadControl] = None, relative: bool = True) -> float:
    """
    後退方程式の残差 max |b τ' + a n τ'' + 1| / (1 + |b τ'|)

    relative=False なら正規化しない絶対残差 max |b τ' + a n τ'' + 1| を返す。

    τ' = −I は求積で、τ'' は τ' の中心差分で求める。既定の点は (0, n*) 内部の
    16次チェビシェフ点。
    """
    _check_solvable(p)
    quad = quad or QuadControl.default()
    if nodes is None:
        j = np.arange(1, 16)
        nodes = p.n_star / 2 * (1 - np.cos(np.pi * j / 16))
    h = 1e-3 * p.n_star
    worst = 0.0
    for n in np.asarray(nodes, dtype=float):
        if not 0 < n < p.n_star:
            raise DomainError(f"残差は (0, n*) の内部で評価します: {n}")
        step = min(h, n / 2, (p.n_star - n) / 2)
        d1 = -inner_integral(n, p, quad)
        d2 = -(inner_integral(n + step, p, quad) - inner_integral(n - step, p, quad)) / (2 * step)
        b = drift(n, p)
        residual = abs(b * d1 + p.a * n * d2 + 1)
        worst = max(worst, residual / (1 + abs(b * d1)) if relative else residual)
    return worst


def boundary_flux_ratio(p: ModelParams, n_small: Optional[float] = None,
                        quad: Optional[QuadControl] = None) -> float:
    """
    反射境界の確認 |Ψ(n_small)τ'(n_small)| / |Ψ(n*/2)τ'(n*/2)|

    Ψτ' = −∫_0^n Ψ(z)/(az) dz は n → 0 で0に近づく。
    """
    _check_solvable(p)
    quad = quad or QuadControl.default()
    n_small = 1e-4 * p.n_star if n_small is None else n_small
    mid = p.n_star / 2
    eps = min(n_small, mid)

    def log_flux(n: float) -> float:
        m, J = _inner_scaled(n, p, quad)
        return log_psi(n, eps, p) + m + math.log(J)

    return math.exp(log_flux(n_small) - log_flux(mid))


def comparison_mfpt(p: ModelParams, n0: float = 0.0,
                    quad: Optional[QuadControl] = None) -> tuple[float, float, float]:
    """
    比較原理による平均到達時間の挟み込み

    Returns:
        (解離率 d 一定の τ, 一般モデルの τ, 解離率 d·e^{αu} 一定の τ)。
        τ(d) ≤ τ(一般) ≤ τ(d·e^{αu}) となる。
    """
    return tuple(mean_fpt(n0, model, quad) for model in comparison_models(p))


def sweep_u(u_values, p_template: ModelParams, n0: float = 0.0,
            quad: Optional[QuadControl] = None) -> list[SweepPoint]:
    """
    流速 u ごとに τ(n0) を計算する（n* = u/γ はその都度計算し直す）

    失敗した点はエラー内容を記録して続行する。
    """
    values = [float(u) for u in u_values]
    if any(u <= 0 for u in values):
        raise DomainError("u はすべて正である必要があります")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise DomainError("u_values は狭義単調増加である必要があります")
    quad = quad or QuadControl.default()
    points = []
    for u in values:
        p = p_template.with_(u=u)
        try:
            tau = mean_fpt(n0, p, quad)
            if not math.isfinite(tau):
                raise ArithmeticError(f"τ が有限ではありません: {tau}")
            points.append(SweepPoint(u=u, n_star=p.n_star, tau=tau))
        except (AdhesionModelError, ArithmeticError) as e:
            logger.warning(f"u={u} で計算に失敗しました: {e}")
            points.append(SweepPoint(u=u, n_star=p.n_star, tau=math.nan, error=str(e)))
    return points
