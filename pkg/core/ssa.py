"""
確率シミュレーション（Gillespie法）

結合数 N_t の出生死滅過程を厳密にシミュレーションする。
次のイベントまでの時間は Exponential(λ(n)+μ(n))、出生は確率 λ/(λ+μ) で選ぶ。

定数レートの平均の閉形式、定常平均、補償過程（マルチンゲール）の検査もここに置く。
"""
import logging
import math
from typing import Callable, Optional

import numpy as np

from config import Config
from core.ensemble import map_paths, path_rng
from core.errors import DomainError
from core.rates import birth_rate, death_rate
from models.params import ModelParams
from models.results import (
    HittingTimeResult,
    MartingaleSummary,
    StopReason,
    SummaryStats,
    Trajectory,
)

logger = logging.getLogger(__name__)

# 乱数をまとめて引く個数
_DRAW_BLOCK = 1024


def gillespie_path(
    birth: Callable[[int], float],
    death: Callable[[int], float],
    m0: int,
    horizon: float,
    rng: np.random.Generator,
    target: Optional[int] = None,
    event_cap: Optional[int] = None,
    scale: float = 1.0,
) -> Trajectory:
    """
    整数格子上の出生死滅過程を1本シミュレーションする

    Args:
        birth: 格子点 m での出生率
        death: 格子点 m での死滅率
        m0: 初期格子点
        horizon: 終了時刻（math.inf 可）
        rng: 乱数生成器
        target: この格子点以上に達したら停止（None なら停止しない）
        event_cap: イベント数の上限（None なら Config.SSA_EVENT_CAP）
        scale: 状態を m/scale として記録する（再正規化過程用）

    Returns:
        Trajectory: 状態は m/scale
    """
    event_cap = Config.SSA_EVENT_CAP if event_cap is None else event_cap
    m = int(m0)
    t = 0.0
    times = [0.0]
    counts = [m]

    if target is not None and m >= target:
        return Trajectory(np.array(times), np.array(counts) / scale,
                          StopReason.REACHED_TARGET, end_time=0.0, hit_time=0.0)

    waits = rng.standard_exponential(_DRAW_BLOCK)
    picks = rng.random(_DRAW_BLOCK)
    k = 0
    events = 0
    while True:
        lam = birth(m)
        mu = death(m)
        total = lam + mu
        if total <= 0:
            # 吸収状態：ホライズンまで凍結
            reason, end_time = StopReason.HORIZON, horizon
            break
        if k == _DRAW_BLOCK:
            waits = rng.standard_exponential(_DRAW_BLOCK)
            picks = rng.random(_DRAW_BLOCK)
            k = 0
        t_next = t + waits[k] / total
        if t_next >= horizon:
            reason, end_time = StopReason.HORIZON, horizon
            break
        if events >= event_cap:
            logger.warning(f"イベント上限 {event_cap} に達したため経路を打ち切りました (t={t:.6g})")
            reason, end_time = StopReason.EVENT_CAP, t
            break
        m += 1 if picks[k] * total < lam else -1
        k += 1
        events += 1
        t = t_next
        times.append(t)
        counts.append(m)
        if target is not None and m >= target:
            return Trajectory(np.array(times), np.array(counts) / scale,
                              StopReason.REACHED_TARGET, end_time=t, hit_time=t)

    return Trajectory(np.array(times), np.array(counts) / scale, reason, end_time=end_time)


def stopping_target(p: ModelParams) -> int:
    """速度0に対応する格子上の停止点 ⌈n*⌉"""
    return int(math.ceil(p.n_star))


def _simulate_with_rng(p: ModelParams, n0: int, horizon: float, stop_at_n_star: bool,
                       rng: np.random.Generator, event_cap: Optional[int] = None) -> Trajectory:
    target = stopping_target(p) if stop_at_n_star else None
    return gillespie_path(
        lambda m: birth_rate(m, p),
        lambda m: death_rate(m, p),
        n0, horizon, rng, target=target, event_cap=event_cap,
    )


def simulate_ssa(p: ModelParams, n0: int, horizon: float, stop_at_n_star: bool = False,
                 seed: int = 0, event_cap: Optional[int] = None) -> Trajectory:
    """
    結合数過程の厳密な経路を1本生成する

    乱数ストリームはアンサンブルの経路番号0と同じなので、
    ensemble_stats(master_seed=seed) の最初の経路と一致する。

    Args:
        p: モデルパラメータ
        n0: 初期結合数（0以上の整数）
        horizon: 終了時刻 (>0)
        stop_at_n_star: ⌈n*⌉ に達したら停止するか
        seed: 64ビットのシード

    Raises:
        DomainError: n0 が負または非整数、horizon ≤ 0 の場合
    """
    _check_start(n0, horizon)
    return _simulate_with_rng(p, int(n0), horizon, stop_at_n_star, path_rng(seed, 0), event_cap)


def _check_start(n0, horizon: float) -> None:
    if n0 < 0 or not float(n0).is_integer():
        raise DomainError(f"初期結合数は0以上の整数である必要があります: {n0}")
    if not horizon > 0:
        raise DomainError(f"horizon は正である必要があります: {horizon}")


def mean_exact_constant_rates(n0: float, c: float, r: float, d: float, t: float) -> float:
    """
    定数レートでの平均 E[N_t] = n0·e^{(r−d)t} + c/(r−d)·(e^{(r−d)t} − 1)

    r ≈ d（|r−d| < 1e-12）では2次までの展開 n0·e^{kt} + ct(1 + kt/2) を使う。
    """
    if t < 0:
        raise DomainError(f"t は0以上である必要があります: {t}")
    k = r - d
    if abs(k) < 1e-12:
        return n0 * math.exp(k * t) + c * t * (1 + k * t / 2)
    return n0 * math.exp(k * t) + c * math.expm1(k * t) / k


def steady_mean(c: float, r: float, d: float) -> float:
    """定常平均 c/(d−r)（r ≥ d なら +∞）"""
    if r < d:
        return c / (d - r)
    return math.inf


# --- アンサンブル ---

def _grid_worker(p: ModelParams, n0: int, t_grid: np.ndarray, master_seed: int, index: int) -> np.ndarray:
    traj = _simulate_with_rng(p, n0, float(t_grid[-1]) + 1e-12, False, path_rng(master_seed, index))
    if traj.stopped_reason is StopReason.EVENT_CAP:
        logger.warning(f"経路{index}がイベント上限で打ち切られました")
    return traj.sample(t_grid)


def ensemble_stats(p: ModelParams, n0: int, t_grid, n_paths: int, master_seed: int,
                   threads: Optional[int] = None) -> list[SummaryStats]:
    """
    時刻グリッド上の状態の要約統計を n_paths 本の独立な経路から計算する

    Returns:
        list[SummaryStats]: t_grid と同じ順
    """
    if n_paths < 2:
        raise DomainError(f"n_paths は2以上である必要があります: {n_paths}")
    grid = np.asarray(t_grid, dtype=float)
    if grid.size == 0 or np.any(grid < 0) or np.any(np.diff(grid) < 0):
        raise DomainError("t_grid は0以上の昇順である必要があります")
    _check_start(n0, max(float(grid[-1]), 1.0))
    samples = np.array(map_paths(_grid_worker, [(p, int(n0), grid, master_seed, i) for i in range(n_paths)], threads))
    return [SummaryStats.from_samples(samples[:, j]) for j in range(grid.size)]


def holding_times(traj: Trajectory, state: float) -> np.ndarray:
    """状態 state に滞在した時間のうち、離脱まで観測されたもの"""
    stay = np.flatnonzero(traj.states[:-1] == state)
    return traj.times[stay + 1] - traj.times[stay]


def compensator_integrals(traj: Trajectory, p: ModelParams, t: float) -> tuple[float, float]:
    """
    (∫₀ᵗ (λ−μ)(N_s) ds, ∫₀ᵗ (λ+μ)(N_s) ds) を区分定数経路から計算する
    """
    edges = np.append(traj.times, max(t, traj.end_time))
    drift_sum, qv_sum = [], []
    for i, n in enumerate(traj.states):
        start = edges[i]
        if start >= t:
            break
        width = min(edges[i + 1], t) - start
        lam = birth_rate(n, p)
        mu = death_rate(n, p)
        drift_sum.append((lam - mu) * width)
        qv_sum.append((lam + mu) * width)
    return math.fsum(drift_sum), math.fsum(qv_sum)


def _martingale_worker(p: ModelParams, n0: int, t: float, master_seed: int, index: int) -> tuple[float, float]:
    traj = _simulate_with_rng(p, n0, t, False, path_rng(master_seed, index))
    compensator, quadratic = compensator_integrals(traj, p, t)
    return traj.state_at(t) - n0 - compensator, quadratic


def martingale_check(p: ModelParams, n0: int, t: float, n_paths: int, master_seed: int,
                     threads: Optional[int] = None) -> MartingaleSummary:
    """補償過程 M_t の平均・分散と二次変分の平均をアンサンブルで推定する"""
    if n_paths < 2:
        raise DomainError(f"n_paths は2以上である必要があります: {n_paths}")
    _check_start(n0, t)
    pairs = np.array(map_paths(_martingale_worker, [(p, int(n0), t, master_seed, i) for i in range(n_paths)], threads))
    stats = SummaryStats.from_samples(pairs[:, 0])
    return MartingaleSummary(
        t=t,
        mean=stats.mean,
        stderr=stats.stderr,
        variance=stats.variance,
        quadratic_variation_mean=float(np.mean(pairs[:, 1])),
        n_samples=n_paths,
    )


def _stopping_worker(p: ModelParams, n0: int, horizon: float, master_seed: int, index: int) -> float:
    traj = _simulate_with_rng(p, n0, horizon, True, path_rng(master_seed, index))
    return math.nan if traj.hit_time is None else traj.hit_time


def stopping_times(p: ModelParams, n0: int, horizon: float, n_paths: int, master_seed: int,
                   threads: Optional[int] = None) -> HittingTimeResult:
    """
    ⌈n*⌉ への到達時刻（細胞の停止時刻）を SSA でサンプリングする

    horizon までに到達しない経路は打ち切りとして NaN で記録する。
    """
    _check_start(n0, horizon)
    times = np.array(map_paths(_stopping_worker, [(p, int(n0), horizon, master_seed, i) for i in range(n_paths)], threads),
                     dtype=float)
    n_censored = int(np.isnan(times).sum())
    if n_censored:
        logger.info(f"停止時刻: {n_censored}/{n_paths} 経路が打ち切り (horizon={horizon})")
    observed = times[~np.isnan(times)]
    stats = SummaryStats.from_samples(observed) if observed.size else None
    return HittingTimeResult(times=times, n_censored=n_censored, horizon=horizon, stats=stats)
