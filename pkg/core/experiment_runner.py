"""
実験ランナー

ExperimentConfig を受け取り、実験の種類ごとの run_* 関数に振り分けて
CSV の行と JSON サマリーの中身（導出量・結果・失敗）を組み立てる。
ファイルへの書き出しは integrations.result_writer が担当する。
"""
import logging
import math
from typing import Callable, Optional

import numpy as np
from scipy import stats

from config import Config
from core.cir import (
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
    zero_hit_class,
)
from core.diffusion import (
    berkaoui_valid,
    euler_ensemble_marginal,
    euler_symmetrized,
    hitting_time_samples,
    ou_parameters_for,
    squared_ou_marginal,
    weak_convergence_check,
)
from core.errors import AdhesionModelError
from core.fpt_solver import (
    QuadControl,
    backward_residual,
    boundary_flux_ratio,
    comparison_mfpt,
    mean_fpt,
    moment_fpt,
    sweep_u,
)
from core.limits import (
    F_eval,
    classify_equilibria,
    ensemble_means,
    ode_integrate,
    renormalized_samples,
    simulate_renormalized,
    sup_distance_ensemble,
)
from core.rates import linear_bounds, velocity
from core.ssa import ensemble_stats, mean_exact_constant_rates, simulate_ssa, steady_mean
from models.experiment import ExperimentConfig, ExperimentKind, ExperimentResult
from models.params import CirParams, ModelParams, RegimeKind, ScalingRegime
from models.results import SpectralMode, Stability, Trajectory

logger = logging.getLogger(__name__)


def _t_grid(config: ExperimentConfig) -> np.ndarray:
    return np.linspace(0.0, config.numerics.horizon, config.numerics.n_grid)


def _quad(config: ExperimentConfig) -> QuadControl:
    return QuadControl(abs_tol=config.numerics.abs_tol, rel_tol=config.numerics.rel_tol, limit=Config.QUAD_LIMIT)


def _path_rows(traj: Trajectory, p: ModelParams) -> list[list]:
    """経路を (t, N, V) の行にする"""
    speeds = traj.velocities(p.u, p.gamma)
    return [[float(t), float(n), float(v)] for t, n, v in zip(traj.times, traj.states, speeds)]


def _drift_slope_bound(p: ModelParams) -> float:
    """比較モデル（解離率 d と d·e^{αu}）のドリフトの傾きの大きい方"""
    _, r, d_max = linear_bounds(p)
    return max(abs(r - p.d), abs(r - d_max))


def derived_quantities(config: ExperimentConfig) -> dict:
    """
    JSON サマリーに載せる導出量

    n* は常に、δ・κ・ν と Berkaoui 条件の余裕は a > 0 かつ c > 0 のときのみ。
    """
    p = config.model
    derived = {"n_star": p.n_star, "creation_on": p.creation_on}
    if p.a > 0 and p.effective_c > 0:
        q = CirParams.from_model(p)
        derived.update({"delta": q.delta, "kappa": q.kappa, "nu": q.nu})
        P = _drift_slope_bound(p)
        if P > 0:
            derived["berkaoui"] = berkaoui_valid(p.effective_c, p.a, P, config.numerics.dt).to_dict()
    return derived


# --- 実験ごとの処理 ---

def run_ssa(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """
    SSA。n_paths = 1 なら事象ごとの (t, N, V)、それ以外は時刻グリッド上のアンサンブル統計

    α = 0 では定数レートの平均の閉形式を exact_mean 列に並べる。
    """
    p, numerics, inputs = config.model, config.numerics, config.inputs
    n0 = inputs["n0"]
    if numerics.n_paths == 1:
        traj = simulate_ssa(p, n0, numerics.horizon, inputs["stop_at_n_star"], seed=config.seed)
        return ExperimentResult(
            columns=["t", "N", "V"],
            rows=_path_rows(traj, p),
            results={
                "stopped_reason": traj.stopped_reason.value,
                "end_time": traj.end_time,
                "hit_time": traj.hit_time,
                "n_events": len(traj) - 1,
            },
        )

    grid = _t_grid(config)
    summaries = ensemble_stats(p, n0, grid, numerics.n_paths, config.seed, threads)
    constant = p.alpha == 0
    rows = []
    for t, s in zip(grid, summaries):
        exact = mean_exact_constant_rates(n0, p.effective_c, p.r, p.d, float(t)) if constant else math.nan
        rows.append([float(t), s.mean, s.variance, s.stderr, exact])
    results = {"n_paths": numerics.n_paths}
    if constant:
        results["steady_mean"] = steady_mean(p.effective_c, p.r, p.d)
    return ExperimentResult(columns=["t", "mean", "variance", "stderr", "exact_mean"], rows=rows, results=results)


def run_renorm(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """
    再正規化過程 X^K。n_paths = 1 なら経路、それ以外は平均と決定論的極限（ODE）

    K_values があれば K ごとの sup 距離の平均も計算する。
    """
    p, numerics, inputs = config.model, config.numerics, config.inputs
    kind = RegimeKind(inputs["regime"])
    regime = ScalingRegime(kind=kind, K=inputs["K"], eta=inputs["eta"])
    x0 = inputs["x0"]
    if numerics.n_paths == 1:
        traj = simulate_renormalized(p, regime, x0, numerics.horizon, seed=config.seed)
        return ExperimentResult(columns=["t", "X", "V"], rows=_path_rows(traj, p),
                                results={"regime": regime.to_dict(), "stopped_reason": traj.stopped_reason.value})

    grid = _t_grid(config)
    summaries = ensemble_means(p, regime, x0, grid, numerics.n_paths, config.seed, threads)
    if kind is RegimeKind.ACCELERATED_DEMOGRAPHY:
        limit = np.full(grid.size, math.nan)
    else:
        ode = ode_integrate(p, x0, numerics.horizon, numerics.dt,
                            include_creation=kind is RegimeKind.ACCELERATED_CREATION)
        limit = ode.sample(grid)
    rows = [[float(t), s.mean, s.variance, s.stderr, float(n)] for t, s, n in zip(grid, summaries, limit)]
    results = {"regime": regime.to_dict(), "n_paths": numerics.n_paths}
    if inputs["K_values"]:
        distances = sup_distance_ensemble(p, inputs["K_values"], x0, numerics.horizon, numerics.n_paths,
                                          config.seed, dt=numerics.dt, kind=kind, threads=threads)
        results["sup_distance"] = [{"K": K, **s.to_dict()} for K, s in zip(inputs["K_values"], distances)]
    return ExperimentResult(columns=["t", "mean", "variance", "stderr", "limit"], rows=rows, results=results)


def run_ode(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """極限ODEの解 (t, n, V)"""
    p, numerics, inputs = config.model, config.numerics, config.inputs
    traj = ode_integrate(p, inputs["n0"], numerics.horizon, numerics.dt, inputs["include_creation"])
    return ExperimentResult(
        columns=["t", "n", "V"],
        rows=_path_rows(traj, p),
        results={"clipped_steps": traj.clipped_steps, "final_state": traj.final_state},
    )


def run_equilibria(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """平衡点の分類。+∞ の目印は value=inf, F=nan の行になる"""
    p = config.model
    report = classify_equilibria(p)
    rows = []
    for e in report.equilibria:
        if e.is_infinite:
            rows.append([math.inf, e.stability.value, math.nan, math.nan])
        else:
            F, dF, _ = F_eval(e.value, p)
            rows.append([e.value, e.stability.value, F, dF])
    stable = [e.value for e in report.equilibria if e.stability is Stability.STABLE and not e.is_infinite]
    logger.info(f"平衡点の分類: {report.case_label} (安定な有限平衡点 {len(stable)}個)")
    return ExperimentResult(columns=["value", "stability", "F", "dF"], rows=rows, results=report.to_dict())


def run_sde(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """対称化オイラー法。n_paths = 1 なら経路、それ以外は時刻 horizon の周辺分布のサンプル"""
    p, numerics, inputs = config.model, config.numerics, config.inputs
    n0 = inputs["n0"]
    if numerics.n_paths == 1:
        target = p.n_star if inputs["stop_at_n_star"] else None
        traj = euler_symmetrized(p, n0, numerics.dt, numerics.horizon, target=target, seed=config.seed)
        return ExperimentResult(
            columns=["t", "N", "V"],
            rows=_path_rows(traj, p),
            results={"stopped_reason": traj.stopped_reason.value, "hit_time": traj.hit_time},
        )
    samples = euler_ensemble_marginal(p, n0, numerics.dt, numerics.horizon, numerics.n_paths, config.seed, threads)
    rows = [[i, float(n), velocity(float(n), p)] for i, n in enumerate(samples)]
    summary = {"mean": float(np.mean(samples)), "variance": float(np.var(samples, ddof=1)),
               "n_samples": int(samples.size)}
    return ExperimentResult(columns=["path", "N", "V"], rows=rows, results={"marginal": summary})


def run_cir_density(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """時刻 t の遷移密度（r < d なら定常密度も並べる）"""
    p, numerics, inputs = config.model, config.numerics, config.inputs
    q = CirParams.from_model(p)
    n0, t, n_max = inputs["n0"], inputs["t"], inputs["n_max"]
    law = transition_law(t, n0, q)
    rows = []
    for n in np.linspace(n_max / numerics.n_grid, n_max, numerics.n_grid):
        n = float(n)
        density = transition_density(n, t, n0, q) if n0 > 0 else float(law.pdf(n))
        stationary = stationary_density(n, q) if q.has_stationary_law else math.nan
        rows.append([n, density, stationary])
    mean, variance = mean_var(t, n0, q)
    return ExperimentResult(
        columns=["n", "density", "stationary"],
        rows=rows,
        results={"mean": mean, "variance": variance, "zero_hit_class": zero_hit_class(q).value},
    )


def run_cir_stationary(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """
    定常密度とポテンシャル

    burn_in があれば、時刻 burn_in のオイラー法サンプル（n_paths 本）と定常分布の KS 距離も計算する。
    """
    p, numerics, inputs = config.model, config.numerics, config.inputs
    q = CirParams.from_model(p)
    n_max = inputs["n_max"]
    rows = []
    for n in np.linspace(n_max / numerics.n_grid, n_max, numerics.n_grid):
        n = float(n)
        rows.append([n, stationary_density(n, q), stationary_potential(n, q)])
    results = {"zero_hit_class": zero_hit_class(q).value, "mean": q.c / (q.d - q.r)}
    if inputs["burn_in"] is not None:
        start = q.c / (q.d - q.r)
        samples = euler_ensemble_marginal(p, start, numerics.dt, inputs["burn_in"], numerics.n_paths,
                                          config.seed, threads)
        law = stats.gamma(a=q.c / q.a, scale=q.a / (q.d - q.r))
        ks = stats.kstest(samples, law.cdf)
        results["ks_stat"] = float(ks.statistic)
        results["ks_pvalue"] = float(ks.pvalue)
        logger.info(f"定常分布とのKS距離: {ks.statistic:.4f}")
    return ExperimentResult(columns=["n", "density", "potential"], rows=rows, results=results)


def run_fpt_spectral(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """初到達時間密度のスペクトル展開を対数等間隔の時刻で評価する"""
    p, numerics, inputs = config.model, config.numerics, config.inputs
    q = CirParams.from_model(p)
    y, x = inputs["y"], inputs["x"]
    expansion = spectral_fpt(y, x, q, numerics.n_terms, SpectralMode(inputs["mode"]))
    times = np.geomspace(inputs["t_min"], inputs["t_max"], numerics.n_grid)
    density = fpt_density_eval(expansion, times)
    cdf = fpt_cdf_eval(expansion, times)
    rows = [[float(t), float(f), float(F)] for t, f, F in zip(times, density, cdf)]
    results = {
        "expansion": expansion.to_dict(),
        "mass_above_t_min": fpt_survival_eval(expansion, inputs["t_min"]),
        "spectral_mean": spectral_mean(expansion),
        "laplace_mean": laplace_fpt_mean(y, x, q),
    }
    negative = density[density < 0]
    results["negative_density"] = {
        "count": int(negative.size),
        "min": float(negative.min()) if negative.size else None,
    }
    if inputs["monte_carlo"]:
        hits = hitting_time_samples(p, y, x, numerics.dt, numerics.n_paths, config.seed, threads=threads)
        results["monte_carlo"] = hits.to_dict()
        observed = hits.observed[hits.observed > 0]
        if observed.size:
            ks = stats.kstest(observed, lambda t: fpt_cdf_eval(expansion, t))
            results["monte_carlo"]["ks_stat"] = float(ks.statistic)
    return ExperimentResult(columns=["t", "density", "cdf"], rows=rows, results=results)


def run_laplace_check(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """クンマー比の閉形式と厳密根スペクトル展開のラプラス変換を比べる"""
    p, numerics, inputs = config.model, config.numerics, config.inputs
    q = CirParams.from_model(p)
    y, x = inputs["y"], inputs["x"]
    expansion = spectral_fpt(y, x, q, numerics.n_terms, SpectralMode.EXACT_ROOTS)
    result = ExperimentResult(columns=["alpha", "kummer", "spectral", "whittaker", "rel_error"], rows=[])
    worst = 0.0
    for alpha in inputs["alphas"]:
        try:
            exact = laplace_fpt(alpha, y, x, q)
            approx = spectral_laplace(expansion, alpha)
            whittaker = laplace_fpt_whittaker(alpha, x, q) if y == 0 else math.nan
        except (AdhesionModelError, ArithmeticError) as e:
            logger.warning(f"alpha={alpha} のラプラス変換に失敗しました: {e}")
            result.add_failure(f"alpha={alpha!r}", e)
            result.rows.append([alpha, math.nan, math.nan, math.nan, math.nan])
            continue
        rel = abs(approx - exact) / abs(exact)
        worst = max(worst, rel)
        result.rows.append([alpha, exact, approx, whittaker, rel])
    mean_exact = laplace_fpt_mean(y, x, q)
    result.results = {
        "max_rel_error": worst,
        "mean_closed_form": mean_exact,
        "mean_spectral": spectral_mean(expansion),
        "n_terms": expansion.n_terms,
    }
    return result


def run_mfpt(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """
    平均到達時間 τ(n) を [0, n*] のグリッドで求積する

    あわせて n0 での高次モーメント、後退方程式の残差、反射境界の確認、比較原理の挟み込み、
    （monte_carlo が真なら）オイラー法による到達時間と比べる。
    """
    p, numerics, inputs = config.model, config.numerics, config.inputs
    quad = _quad(config)
    n0 = inputs["n0"]
    result = ExperimentResult(columns=["n", "tau"], rows=[])
    for n in np.linspace(0.0, p.n_star, numerics.n_grid):
        n = float(n)
        try:
            result.rows.append([n, mean_fpt(n, p, quad)])
        except (AdhesionModelError, ArithmeticError) as e:
            logger.warning(f"n={n} の求積に失敗しました: {e}")
            result.add_failure(f"n={n!r}", e)
            result.rows.append([n, math.nan])

    checks: dict[str, Callable] = {
        "moments": lambda: [moment_fpt(k, n0, p, quad) for k in range(1, inputs["moments"] + 1)],
        "backward_residual": lambda: backward_residual(p, quad=quad),
        "backward_residual_abs": lambda: backward_residual(p, quad=quad, relative=False),
        "boundary_flux_ratio": lambda: boundary_flux_ratio(p, quad=quad),
        "comparison": lambda: list(comparison_mfpt(p, n0, quad)),
    }
    results = {"n0": n0}
    for name, check in checks.items():
        try:
            results[name] = check()
        except (AdhesionModelError, ArithmeticError) as e:
            logger.warning(f"{name} の計算に失敗しました: {e}")
            result.add_failure(name, e)
            results[name] = None
    if inputs["monte_carlo"]:
        hits = hitting_time_samples(p, n0, p.n_star, numerics.dt, numerics.n_paths, config.seed, threads=threads)
        results["monte_carlo"] = hits.to_dict()
        tau = results["moments"][0] if results["moments"] else None
        if hits.stats is not None and tau:
            results["monte_carlo"]["rel_gap"] = abs(hits.stats.mean - tau) / tau
    result.results = results
    return result


def run_sweep_u(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """流速 u（と摩擦係数 γ）を変えて τ(n0) を求める"""
    p, inputs = config.model, config.inputs
    quad = _quad(config)
    gammas = inputs["gammas"] or [p.gamma]
    result = ExperimentResult(columns=["u", "gamma", "n_star", "tau"], rows=[])
    monotone = {}
    for gamma in gammas:
        points = sweep_u(inputs["u_values"], p.with_(gamma=gamma), inputs["n0"], quad)
        for point in points:
            result.rows.append([point.u, gamma, point.n_star, point.tau])
            if not point.ok:
                result.failures.append({"where": f"u={point.u!r}, gamma={gamma!r}",
                                        "error": "SweepPointError", "message": point.error})
        taus = [point.tau for point in points if point.ok]
        monotone[repr(gamma)] = all(b >= a for a, b in zip(taus, taus[1:]))
    result.results = {"nondecreasing_in_u": monotone}
    return result


def run_convergence(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """
    オイラー法の弱収束（dt, dt/2, dt/4）

    K があれば、時刻 t の再正規化過程（accelerated_demography）とオイラー法の周辺分布の2標本KS距離も求める。
    """
    p, numerics, inputs = config.model, config.numerics, config.inputs
    n0, t = inputs["n0"], inputs["t"]
    check = weak_convergence_check(p, n0, t, numerics.dt, numerics.n_paths, config.seed, threads)
    rows = [[h, m, s] for h, m, s in zip(check.dts, check.means, check.stderrs)]
    results = {"weak": check.to_dict()}
    if inputs["K"] is not None:
        regime = ScalingRegime(kind=RegimeKind.ACCELERATED_DEMOGRAPHY, K=inputs["K"], eta=inputs["eta"])
        jumps = renormalized_samples(p, regime, n0, [0.0, t], numerics.n_paths, config.seed, threads)[:, -1]
        euler = euler_ensemble_marginal(p, n0, numerics.dt, t, numerics.n_paths, config.seed, threads)
        ks = stats.ks_2samp(jumps, euler)
        results["renormalized_ks"] = {"K": inputs["K"], "eta": inputs["eta"], "statistic": float(ks.statistic),
                                      "pvalue": float(ks.pvalue)}
    return ExperimentResult(columns=["dt", "mean", "stderr"], rows=rows, results=results)


def run_ou_repr(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """CIR過程の周辺分布と D 次元OU過程の二乗ノルムの周辺分布を比べる"""
    p, numerics, inputs = config.model, config.numerics, config.inputs
    q = CirParams.from_model(p)
    D, beta, sigma_ou = ou_parameters_for(q)
    n0, t = inputs["n0"], inputs["t"]
    cir = euler_ensemble_marginal(p, n0, numerics.dt, t, numerics.n_paths, config.seed, threads)
    ou = squared_ou_marginal(D, beta, sigma_ou, n0, t, numerics.n_paths, (config.seed + 1) % 2 ** 64, threads)
    ks = stats.ks_2samp(cir, ou)
    mean, _ = mean_var(t, n0, q)
    rows = [[i, float(a), float(b)] for i, (a, b) in enumerate(zip(cir, ou))]
    return ExperimentResult(
        columns=["sample", "cir", "squared_ou"],
        rows=rows,
        results={
            "D": D, "beta": beta, "sigma_ou": sigma_ou,
            "ks_stat": float(ks.statistic), "ks_pvalue": float(ks.pvalue),
            "mean_exact": mean, "mean_cir": float(np.mean(cir)), "mean_squared_ou": float(np.mean(ou)),
        },
    )


RUNNERS: dict[ExperimentKind, Callable[[ExperimentConfig, Optional[int]], ExperimentResult]] = {
    ExperimentKind.SSA: run_ssa,
    ExperimentKind.RENORM: run_renorm,
    ExperimentKind.ODE: run_ode,
    ExperimentKind.EQUILIBRIA: run_equilibria,
    ExperimentKind.SDE: run_sde,
    ExperimentKind.CIR_DENSITY: run_cir_density,
    ExperimentKind.CIR_STATIONARY: run_cir_stationary,
    ExperimentKind.FPT_SPECTRAL: run_fpt_spectral,
    ExperimentKind.LAPLACE_CHECK: run_laplace_check,
    ExperimentKind.MFPT: run_mfpt,
    ExperimentKind.SWEEP_U: run_sweep_u,
    ExperimentKind.CONVERGENCE: run_convergence,
    ExperimentKind.OU_REPR: run_ou_repr,
}


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """
    実験を1回実行する

    Args:
        config: 検証済みの実験設定
        threads: 並列プロセス数（省略時は Config.DEFAULT_THREADS）

    Returns:
        ExperimentResult: CSV の行と JSON サマリーの中身（derived は常に埋める）
    """
    logger.info(f"実験 {config.experiment.value} を開始します (seed={config.seed})")
    result = RUNNERS[config.experiment](config, threads)
    result.derived = derived_quantities(config)
    if result.failures:
        logger.warning(f"{len(result.failures)}件の数値計算が失敗しました")
    return result
