"""
スケーリング極限

再正規化過程 X^K = N^K/K の3つのスケーリング則でのシミュレーションと、
決定論的極限 n' = F(n) の積分・定常状態の分類を行う。

F(n) = c·[u≤u*] + (r − d·e^{α(u−γn)})·n
F'(n) = r + d(αγn − 1)·e^{α(u−γn)}
F''(n) = αγd(2 − αγn)·e^{α(u−γn)}

分類は上の閉形式（指数を切り詰めない形）で行う。ODEの積分はモデルのドリフト
（n > n* で指数を0に切り詰めた形）を使い、n ≤ n* では両者は一致する。
"""
import logging
import math
from typing import Optional

import numpy as np
from scipy import optimize

from core.ensemble import map_paths, path_rng
from core.errors import DomainError
from core.rates import death_coefficient
from core.ssa import gillespie_path
from models.params import ModelParams, RegimeKind, ScalingRegime
from models.results import (
    Equilibrium,
    EquilibriumReport,
    Stability,
    StopReason,
    SummaryStats,
    Trajectory,
)

logger = logging.getLogger(__name__)

# 接点（重根）とみなす |F(n̄)| の許容幅（1+c に対する相対値）
TANGENCY_TOL = 1e-12
NBAR_XTOL = 1e-12
ROOT_XTOL = 1e-13


def F_eval(n: float, p: ModelParams) -> tuple[float, float, float]:
    """
    (F(n), F'(n), F''(n)) を閉形式で返す

    Args:
        n: 結合密度 (≥0)
        p: モデルパラメータ
    """
    if n < 0:
        raise DomainError(f"n は0以上である必要があります: {n}")
    ag = p.alpha * p.gamma
    e = math.exp(p.alpha * (p.u - p.gamma * n))
    F = p.effective_c + (p.r - p.d * e) * n
    dF = p.r + p.d * (ag * n - 1) * e
    d2F = ag * p.d * (2 - ag * n) * e
    return F, dF, d2F


def _F(n: float, p: ModelParams) -> float:
    return F_eval(n, p)[0]


def _dF(n: float, p: ModelParams) -> float:
    return F_eval(n, p)[1]


def _stability(n: float, p: ModelParams) -> Stability:
    slope = _dF(n, p)
    if slope < 0:
        return Stability.STABLE
    if slope > 0:
        return Stability.UNSTABLE
    return Stability.SEMISTABLE


def _with_divergence(equilibria: list[Equilibrium]) -> list[Equilibrium]:
    """有限の安定平衡点がなければ +∞ の目印を末尾に加える"""
    if not any(e.stability is Stability.STABLE for e in equilibria):
        equilibria.append(Equilibrium(math.inf, Stability.STABLE))
    return equilibria


def _classify_linear(p: ModelParams) -> EquilibriumReport:
    # α=0: F(n) = c + (r−d)n
    c, k = p.effective_c, p.r - p.d
    if k < 0:
        return EquilibriumReport([Equilibrium(c / (p.d - p.r), Stability.STABLE)], "linear_stable")
    if k > 0:
        equilibria = [] if c > 0 else [Equilibrium(0.0, Stability.UNSTABLE)]
        return EquilibriumReport(_with_divergence(equilibria), "linear_divergent")
    if c > 0:
        return EquilibriumReport(_with_divergence([]), "linear_drifting")
    # F ≡ 0: すべての点が平衡点
    return EquilibriumReport([Equilibrium(0.0, Stability.SEMISTABLE)], "linear_neutral")


def _classify_without_creation(p: ModelParams) -> EquilibriumReport:
    # F(n) = (r − d e^{α(u−γn)}) n、0 は常に根
    ag = p.alpha * p.gamma
    if p.r > 0 and p.u > math.log(p.r / p.d) / p.alpha:
        n2 = p.u / p.gamma - math.log(p.r / p.d) / ag
        return EquilibriumReport(
            [Equilibrium(0.0, _stability(0.0, p)), Equilibrium(n2, _stability(n2, p))],
            "creation_off_bistable",
        )
    return EquilibriumReport(
        _with_divergence([Equilibrium(0.0, _stability(0.0, p))]),
        "creation_off_zero_only",
    )


def _upper_bracket(p: ModelParams, start: float) -> float:
    """F > 0 となる点を倍々に探す"""
    n_hi = max(p.n_star, 4 / (p.alpha * p.gamma), start)
    for _ in range(200):
        if _F(n_hi, p) > 0:
            return n_hi
        n_hi *= 2
    raise DomainError(f"F の上側の根を囲い込めません: {p}")


def classify_equilibria(p: ModelParams) -> EquilibriumReport:
    """
    極限ODEの定常状態を分類する

    - α = 0: F が一次関数になる場合の分類
    - 生成がオフ（u > u* または c = 0）: 0 と u/γ − ln(r/d)/(αγ)
    - 生成がオン: F' の (0, 2/(αγ)) 内の根 n̄ での F(n̄) の符号で場合分け

    有限の安定平衡点がないときは +∞ の目印を加える。
    """
    if p.alpha == 0:
        return _classify_linear(p)
    if p.effective_c == 0:
        return _classify_without_creation(p)

    ag = p.alpha * p.gamma
    if _dF(0.0, p) >= 0:
        # F は単調増加で F(0) = c > 0
        return EquilibriumReport(_with_divergence([]), "creation_divergent")

    nbar = optimize.bisect(_dF, 0.0, 2 / ag, args=(p,), xtol=NBAR_XTOL)
    F_bar = _F(nbar, p)
    if abs(F_bar) <= TANGENCY_TOL * (1 + p.effective_c):
        return EquilibriumReport(
            _with_divergence([Equilibrium(nbar, Stability.SEMISTABLE)]),
            "creation_tangent", nbar=nbar, F_at_nbar=F_bar,
        )
    if F_bar > 0:
        return EquilibriumReport(_with_divergence([]), "creation_divergent_above_nbar",
                                 nbar=nbar, F_at_nbar=F_bar)

    n1 = optimize.brentq(_F, 0.0, nbar, args=(p,), xtol=ROOT_XTOL)
    n2 = optimize.brentq(_F, nbar, _upper_bracket(p, nbar), args=(p,), xtol=ROOT_XTOL)
    return EquilibriumReport(
        [Equilibrium(n1, _stability(n1, p)), Equilibrium(n2, _stability(n2, p))],
        "creation_bistable", nbar=nbar, F_at_nbar=F_bar,
    )


def ode_integrate(p: ModelParams, n0: float, horizon: float, dt: float,
                  include_creation: bool = True) -> Trajectory:
    """
    n' = F(n) を固定刻みの4次ルンゲ＝クッタ法で積分する

    include_creation=False なら生成項を落とした n' = (r − d(n))n を積分する。
    負への逸脱は0に丸めて回数を clipped_steps に記録する。

    Args:
        p: モデルパラメータ
        n0: 初期密度 (≥0)
        horizon: 終了時刻 (>0)
        dt: 刻み幅 (>0)
        include_creation: 生成項を含めるか
    """
    if n0 < 0:
        raise DomainError(f"n0 は0以上である必要があります: {n0}")
    if not dt > 0 or not horizon > 0:
        raise DomainError(f"dt と horizon は正である必要があります: dt={dt}, horizon={horizon}")
    c = p.effective_c if include_creation else 0.0

    def rhs(n: float) -> float:
        return c + (p.r - death_coefficient(n, p)) * n

    n_steps = max(1, int(math.ceil(horizon / dt - 1e-9)))
    times = np.empty(n_steps + 1)
    states = np.empty(n_steps + 1)
    times[0], states[0] = 0.0, n0
    n, t = float(n0), 0.0
    clipped = 0
    last = n_steps
    for k in range(1, n_steps + 1):
        h = min(dt, horizon - t)
        k1 = rhs(n)
        k2 = rhs(max(n + h * k1 / 2, 0.0))
        k3 = rhs(max(n + h * k2 / 2, 0.0))
        k4 = rhs(max(n + h * k3, 0.0))
        n = n + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        if n < 0:
            n = 0.0
            clipped += 1
        t = horizon if k == n_steps else k * dt
        times[k], states[k] = t, n
        if not math.isfinite(n):
            logger.warning(f"ODE解が発散しました (t={t:.6g})")
            last = k
            break
    if clipped:
        logger.warning(f"ODE: 負への逸脱を{clipped}回0に丸めました")
    return Trajectory(times[:last + 1], states[:last + 1], StopReason.HORIZON,
                      end_time=float(times[last]), clipped_steps=clipped)


def _lattice_start(x0: float, K: int) -> int:
    if x0 < 0:
        raise DomainError(f"x0 は0以上である必要があります: {x0}")
    m0 = int(round(K * x0))
    if abs(K * x0 - m0) > 1e-9:
        logger.info(f"K·x0 = {K * x0} を格子点 {m0} に丸めました")
    return m0


def _renormalized_path(p: ModelParams, regime: ScalingRegime, x0: float, horizon: float,
                       rng: np.random.Generator, event_cap: Optional[int] = None) -> Trajectory:
    K = regime.K
    c_k, r_k, boost = regime.scaled_rates(p)

    def birth(m: int) -> float:
        return c_k + r_k * m

    def death(m: int) -> float:
        if m == 0:
            return 0.0
        return m * (death_coefficient(m / K, p) + boost)

    return gillespie_path(birth, death, _lattice_start(x0, K), horizon, rng,
                          event_cap=event_cap, scale=K)


def simulate_renormalized(p: ModelParams, regime: ScalingRegime, x0: float, horizon: float,
                          seed: int = 0, event_cap: Optional[int] = None) -> Trajectory:
    """
    再正規化過程 X^K を格子 (1/K)ℕ 上で厳密にシミュレーションする

    - accelerated_creation: (K·c, r, d(x))
    - non_accelerated: (c, r, d(x))
    - accelerated_demography: (K·c, r + K^η·a, d(x) + K^η·a)

    K·x0 が整数でなければ最も近い格子点に丸める。
    """
    if not horizon > 0:
        raise DomainError(f"horizon は正である必要があります: {horizon}")
    return _renormalized_path(p, regime, x0, horizon, path_rng(seed, 0), event_cap)


def quadratic_variation_rate(x: float, p: ModelParams, regime: ScalingRegime) -> float:
    """
    再正規化マルチンゲールの二次変分の密度 (λ_K + μ_K)/K²

    accelerated_demography (η=1) では K→∞ で 2a·x（極限SDEの σ²）に近づく。
    """
    K = regime.K
    c_k, r_k, boost = regime.scaled_rates(p)
    m = K * x
    return (c_k + r_k * m + m * (death_coefficient(x, p) + boost)) / K ** 2


def _renormalized_worker(p: ModelParams, regime: ScalingRegime, x0: float, t_grid: np.ndarray,
                         master_seed: int, index: int) -> np.ndarray:
    traj = _renormalized_path(p, regime, x0, float(t_grid[-1]) + 1e-12, path_rng(master_seed, index))
    return traj.sample(t_grid)


def renormalized_samples(p: ModelParams, regime: ScalingRegime, x0: float, t_grid, n_paths: int,
                         master_seed: int, threads: Optional[int] = None) -> np.ndarray:
    """X^K の時刻グリッド上のサンプル（形状 n_paths × len(t_grid)）"""
    grid = np.asarray(t_grid, dtype=float)
    args = [(p, regime, x0, grid, master_seed, i) for i in range(n_paths)]
    return np.array(map_paths(_renormalized_worker, args, threads)).reshape(n_paths, grid.size)


def ensemble_means(p: ModelParams, regime: ScalingRegime, x0: float, t_grid, n_paths: int,
                   master_seed: int, threads: Optional[int] = None) -> list[SummaryStats]:
    """X^K の各時刻の要約統計"""
    if n_paths < 2:
        raise DomainError(f"n_paths は2以上である必要があります: {n_paths}")
    samples = renormalized_samples(p, regime, x0, t_grid, n_paths, master_seed, threads)
    return [SummaryStats.from_samples(samples[:, j]) for j in range(samples.shape[1])]


def _sup_distance_worker(p: ModelParams, regime: ScalingRegime, x0: float, ode_times: np.ndarray,
                         ode_states: np.ndarray, master_seed: int, index: int) -> float:
    traj = _renormalized_path(p, regime, x0, float(ode_times[-1]) + 1e-12, path_rng(master_seed, index))
    return float(np.max(np.abs(traj.sample(ode_times) - ode_states)))


def sup_distance_ensemble(p: ModelParams, K_values, x0: float, horizon: float, n_paths: int,
                          master_seed: int, dt: float = 1e-3, kind: RegimeKind = RegimeKind.ACCELERATED_CREATION,
                          threads: Optional[int] = None) -> list[SummaryStats]:
    """
    各 K について sup_{[0,T]} |X^K − n(t)| の平均を推定する

    比較するODEは accelerated_creation なら生成項あり、non_accelerated なら生成項なし。
    sup は ODE の時刻グリッド上で評価する。
    """
    if kind is RegimeKind.ACCELERATED_DEMOGRAPHY:
        raise DomainError("accelerated_demography の極限はSDEなので sup 距離は定義しません")
    ode = ode_integrate(p, x0, horizon, dt, include_creation=kind is RegimeKind.ACCELERATED_CREATION)
    results = []
    for K in K_values:
        regime = ScalingRegime(kind=kind, K=int(K))
        args = [(p, regime, x0, ode.times, ode.states, master_seed, i) for i in range(n_paths)]
        distances = map_paths(_sup_distance_worker, args, threads)
        stats = SummaryStats.from_samples(distances)
        logger.info(f"K={K}: 平均sup距離 {stats.mean:.4g} ± {stats.stderr:.2g}")
        results.append(stats)
    return results
