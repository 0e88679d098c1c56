"""
拡散極限のシミュレーション

極限SDE dN = b(N)dt + √(2aN)dB を対称化オイラー法
N_{k+1} = |N_k + b(N_k)dt + √(2a·dt·N_k)·Z| で離散化する（絶対値で正値性を保つ）。

到達時間のモンテカルロ、比較原理の経路、二乗OU過程による表現もここで扱う。
乱数は経路ごとに Config.EULER_BLOCK 個ずつ正規乱数を引くので、
何本まとめて計算しても各経路の結果は同一になる。
"""
import logging
import math
from typing import Optional

import numpy as np

from config import Config
from core.ensemble import map_paths, path_rng
from core.errors import DomainError
from core.rates import comparison_models, drift_array
from models.params import CirParams, ModelParams
from models.results import (
    BerkaouiCheck,
    HittingTimeResult,
    StopReason,
    SummaryStats,
    Trajectory,
    WeakConvergenceCheck,
)

logger = logging.getLogger(__name__)

# Berkaoui条件の境界付近とみなす相対幅
NEAR_THRESHOLD = 0.1


def _step_sizes(dt: float, horizon: float) -> tuple[int, float]:
    """(ステップ数, 最後のステップ幅)"""
    n_steps = max(1, int(math.ceil(horizon / dt - 1e-9)))
    return n_steps, horizon - (n_steps - 1) * dt


def _euler_batch(p: ModelParams, n0: float, dt: float, horizon: float, rngs: list,
                 target: Optional[float] = None, record: bool = False):
    """
    複数経路の対称化オイラー法

    Returns:
        (終状態, 到達時刻(未到達は NaN), 記録した経路 or None)
        記録は形状 (ステップ数+1, 経路数)。
    """
    block = Config.EULER_BLOCK
    n_paths = len(rngs)
    n_steps, last_h = _step_sizes(dt, horizon)
    state = np.full(n_paths, float(n0))
    hit = np.full(n_paths, math.nan)
    active = np.ones(n_paths, dtype=bool)
    if target is not None and n0 >= target:
        hit[:] = 0.0
        active[:] = False
    history = [state.copy()] if record else None
    normals = np.empty((n_paths, block))
    t = 0.0
    for k in range(n_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        j = k % block
        if j == 0:
            for i in idx:
                normals[i] = rngs[i].standard_normal(block)
        h = last_h if k == n_steps - 1 else dt
        n_old = state[idx]
        n_new = np.abs(n_old + drift_array(n_old, p) * h + np.sqrt(2 * p.a * h * n_old) * normals[idx, j])
        if target is not None:
            crossed = n_new >= target
            if np.any(crossed):
                lo, hi = n_old[crossed], n_new[crossed]
                hit[idx[crossed]] = t + h * (target - lo) / (hi - lo)
                active[idx[crossed]] = False
        state[idx] = n_new
        t += h
        if record:
            history.append(state.copy())
    return state, hit, (np.array(history) if record else None)


def _path_from_history(history: np.ndarray, column: int, dt: float, horizon: float,
                       target: Optional[float], hit_time: float) -> Trajectory:
    states = history[:, column]
    n_steps, _ = _step_sizes(dt, horizon)
    times = np.arange(states.size) * dt
    if states.size == n_steps + 1:
        times[-1] = horizon
    if math.isnan(hit_time):
        return Trajectory(times, states, StopReason.HORIZON, end_time=float(times[-1]))
    # 到達したステップまでを残し、補間した到達点を終点にする
    keep = int(np.searchsorted(times, hit_time, side="left"))
    times = np.append(times[:keep], hit_time)
    states = np.append(states[:keep], target)
    return Trajectory(times, states, StopReason.REACHED_TARGET, end_time=hit_time, hit_time=hit_time)


def euler_symmetrized(p: ModelParams, n0: float, dt: float, horizon: float,
                      target: Optional[float] = None, seed: int = 0) -> Trajectory:
    """
    対称化オイラー法で極限SDEの経路を1本生成する

    target を与えると最初にそれを越えた時点で停止し、到達時刻は
    越えたステップ内の線形補間で求める。乱数はアンサンブルの経路番号0と同じ。

    Args:
        p: モデルパラメータ（a を使用）
        n0: 初期密度 (≥0)
        dt: 刻み幅 (>0)
        horizon: 終了時刻 (>0)
        target: 停止水準（任意）
        seed: 64ビットのシード
    """
    _check_euler(n0, dt, horizon)
    _, hit, history = _euler_batch(p, n0, dt, horizon, [path_rng(seed, 0)], target, record=True)
    return _path_from_history(history, 0, dt, horizon, target, float(hit[0]))


def _check_euler(n0: float, dt: float, horizon: float) -> None:
    if n0 < 0:
        raise DomainError(f"n0 は0以上である必要があります: {n0}")
    if not dt > 0 or not horizon > 0:
        raise DomainError(f"dt と horizon は正である必要があります: dt={dt}, horizon={horizon}")


def _chunks(n_paths: int, threads: Optional[int]) -> list[range]:
    threads = threads or Config.DEFAULT_THREADS
    size = max(1, math.ceil(n_paths / max(1, threads * 4)))
    return [range(start, min(start + size, n_paths)) for start in range(0, n_paths, size)]


def _marginal_chunk(p: ModelParams, n0: float, dt: float, t: float, master_seed: int,
                    indices: range) -> np.ndarray:
    state, _, _ = _euler_batch(p, n0, dt, t, [path_rng(master_seed, i) for i in indices])
    return state


def euler_ensemble_marginal(p: ModelParams, n0: float, dt: float, t: float, n_paths: int,
                            master_seed: int, threads: Optional[int] = None) -> np.ndarray:
    """時刻 t の周辺分布のサンプル（経路番号順）"""
    _check_euler(n0, dt, t)
    args = [(p, n0, dt, t, master_seed, chunk) for chunk in _chunks(n_paths, threads)]
    return np.concatenate(map_paths(_marginal_chunk, args, threads))


def _hitting_chunk(p: ModelParams, n0: float, target: float, dt: float, horizon: float,
                   master_seed: int, indices: range) -> np.ndarray:
    _, hit, _ = _euler_batch(p, n0, dt, horizon, [path_rng(master_seed, i) for i in indices], target)
    return hit


def hitting_time_samples(p: ModelParams, n0: float, target: float, dt: Optional[float] = None,
                         n_paths: int = 1000, master_seed: int = 0, horizon: Optional[float] = None,
                         threads: Optional[int] = None) -> HittingTimeResult:
    """
    target への初到達時刻をモンテカルロでサンプリングする

    horizon（既定 Config.CENSOR_HORIZON）までに到達しない経路は打ち切り。
    すべて打ち切りなら stats は None。

    Args:
        p: モデルパラメータ
        n0: 出発点（0 ≤ n0 ≤ target）
        target: 目標水準
        dt: 刻み幅（既定 Config.HITTING_DT）
        n_paths: 経路数
        master_seed: 64ビットのシード
    """
    dt = Config.HITTING_DT if dt is None else dt
    horizon = Config.CENSOR_HORIZON if horizon is None else horizon
    if not 0 <= n0 <= target:
        raise DomainError(f"0 ≤ n0 ≤ target である必要があります: n0={n0}, target={target}")
    _check_euler(n0, dt, horizon)
    args = [(p, n0, target, dt, horizon, master_seed, chunk) for chunk in _chunks(n_paths, threads)]
    times = np.concatenate(map_paths(_hitting_chunk, args, threads))
    n_censored = int(np.isnan(times).sum())
    if n_censored:
        logger.info(f"到達時間: {n_censored}/{n_paths} 経路が打ち切り (horizon={horizon})")
    observed = times[~np.isnan(times)]
    if observed.size == 0:
        logger.warning("すべての経路が打ち切られたため平均は報告しません")
        return HittingTimeResult(times=times, n_censored=n_censored, horizon=horizon)
    return HittingTimeResult(times=times, n_censored=n_censored, horizon=horizon,
                             stats=SummaryStats.from_samples(observed))


def comparison_paths(p: ModelParams, n0: float, dt: float, horizon: float,
                     seed: int = 0) -> tuple[Trajectory, Trajectory, Trajectory]:
    """
    同じ乱数で駆動した比較原理の3経路（n* で停止）

    Returns:
        (d 一定の経路, 一般モデルの経路, d·e^{αu} 一定の経路)
    """
    return tuple(euler_symmetrized(model, n0, dt, horizon, target=p.n_star, seed=seed)
                 for model in comparison_models(p))


def weak_convergence_check(p: ModelParams, n0: float, t: float, dt: float, n_paths: int,
                           master_seed: int, threads: Optional[int] = None) -> WeakConvergenceCheck:
    """dt, dt/2, dt/4 での時刻 t の平均を比べる"""
    dts = (dt, dt / 2, dt / 4)
    stats = [SummaryStats.from_samples(euler_ensemble_marginal(p, n0, h, t, n_paths, master_seed, threads))
             for h in dts]
    return WeakConvergenceCheck(
        dts=dts,
        means=tuple(s.mean for s in stats),
        stderrs=tuple(s.stderr for s in stats),
    )


def berkaoui_valid(c: float, a: float, P: float, dt: float) -> BerkaouiCheck:
    """
    対称化オイラー法の強 L¹ 収束条件

    (a/4)(c/a − 1)² > max(3P, 8a) かつ dt ≤ 1/(2P)

    Args:
        c: 生成率（b(0)）
        a: ノイズ強度 (>0)
        P: ドリフトの傾きの上界 (≥|r−d|, >0)
        dt: 刻み幅
    """
    if not a > 0 or not P > 0:
        raise DomainError(f"a と P は正である必要があります: a={a}, P={P}")
    lhs = (a / 4) * (c / a - 1) ** 2
    threshold = max(3 * P, 8 * a)
    dt_margin = 1 / (2 * P) - dt
    valid = lhs > threshold and dt_margin >= 0
    near = abs(lhs - threshold) <= NEAR_THRESHOLD * threshold
    if near:
        logger.warning(f"Berkaoui条件の境界付近です: {lhs:.4g} vs {threshold:.4g}")
    return BerkaouiCheck(
        valid=valid,
        lhs=lhs,
        threshold=threshold,
        lhs_margin=lhs - threshold,
        dt_margin=dt_margin,
        near_threshold=near,
    )


# --- 二乗OU過程による表現 ---

def ou_parameters_for(q: CirParams) -> tuple[int, float, float]:
    """
    CIR過程を D 個のOU過程の二乗ノルムとして表すパラメータ (D, β, σ_ou)

    D = 2c/a（整数であること）, β = d − r, σ_ou = √(2a)。このとき R ≡ N。
    """
    D = q.delta
    if abs(D - round(D)) > 1e-9 or round(D) < 1:
        raise DomainError(f"2c/a が正の整数ではありません: {D}")
    if not q.d > q.r:
        raise DomainError(f"β = d − r は正である必要があります: r={q.r}, d={q.d}")
    return int(round(D)), q.d - q.r, math.sqrt(2 * q.a)


def _check_ou(D: int, beta: float) -> None:
    if isinstance(D, bool) or int(D) != D or D < 1:
        raise DomainError(f"D は1以上の整数である必要があります: {D}")
    if not beta > 0:
        raise DomainError(f"beta は正である必要があります: {beta}")


def _ou_start(D: int, r0: float) -> np.ndarray:
    x = np.zeros(int(D))
    x[0] = math.sqrt(r0)
    return x


def simulate_squared_ou(D: int, beta: float, sigma_ou: float, r0: float, dt: float,
                        horizon: float, seed: int = 0) -> Trajectory:
    """
    D 個の独立なOU過程 dX = −(β/2)X dt + (σ_ou/2) dB の二乗ノルムの経路

    各成分はガウス遷移（平均 e^{−β·dt/2}X、分散 σ²/(4β)(1 − e^{−β·dt})）で厳密に進める。
    初期値は第1成分だけ √r0、他は0。
    """
    _check_ou(D, beta)
    if r0 < 0:
        raise DomainError(f"r0 は0以上である必要があります: {r0}")
    _check_euler(r0, dt, horizon)
    rng = path_rng(seed, 0)
    n_steps, last_h = _step_sizes(dt, horizon)
    x = _ou_start(D, r0)
    times = np.empty(n_steps + 1)
    norms = np.empty(n_steps + 1)
    times[0], norms[0] = 0.0, float(x @ x)
    t = 0.0
    for k in range(1, n_steps + 1):
        h = last_h if k == n_steps else dt
        scale = math.sqrt(sigma_ou ** 2 / (4 * beta) * -math.expm1(-beta * h))
        x = math.exp(-beta * h / 2) * x + scale * rng.standard_normal(int(D))
        t = horizon if k == n_steps else t + h
        times[k], norms[k] = t, float(x @ x)
    return Trajectory(times, norms, StopReason.HORIZON, end_time=horizon)


def _ou_marginal_chunk(D: int, beta: float, sigma_ou: float, r0: float, t: float,
                       master_seed: int, indices: range) -> np.ndarray:
    shrink = math.exp(-beta * t / 2)
    scale = math.sqrt(sigma_ou ** 2 / (4 * beta) * -math.expm1(-beta * t))
    start = _ou_start(D, r0)
    out = np.empty(len(indices))
    for k, i in enumerate(indices):
        x = shrink * start + scale * path_rng(master_seed, i).standard_normal(int(D))
        out[k] = x @ x
    return out


def squared_ou_marginal(D: int, beta: float, sigma_ou: float, r0: float, t: float, n_paths: int,
                        master_seed: int, threads: Optional[int] = None) -> np.ndarray:
    """時刻 t の二乗ノルムを厳密な遷移で1ステップでサンプリングする"""
    _check_ou(D, beta)
    if not t > 0:
        raise DomainError(f"t は正である必要があります: {t}")
    args = [(D, beta, sigma_ou, r0, t, master_seed, chunk) for chunk in _chunks(n_paths, threads)]
    return np.concatenate(map_paths(_ou_marginal_chunk, args, threads))
