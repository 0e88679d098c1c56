"""
特殊関数

CIR解析に必要なガンマ関数、ディガンマ関数、第1種変形ベッセル関数 I_ν、
クンマー合流型超幾何関数 Φ(s, b; z) とその第1パラメータ微分、ホイッタカー関数 M を計算する。

Φ は倍精度の級数（補償和）が基本経路。大きな負の s では項が桁落ちするため、
最大項/和 の比が Config.KUMMER_CANCELLATION_LIMIT を超えたら、最大項の桁数から決めた精度で
mpmath により再計算する。
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import mpmath
from scipy.special import logsumexp

from config import Config
from core.errors import ConvergenceError, DomainError

logger = logging.getLogger(__name__)

# Lanczos近似 (g=7, 9項)
_LANCZOS_G = 7
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)
# 拡張精度の余裕桁と、精度を倍にする回数の上限
MP_GUARD_DIGITS = 20
MP_MAX_DOUBLINGS = 4


@dataclass(frozen=True)
class SeriesControl:
    """級数の打ち切り設定"""
    rel_tol: float = 1e-14
    max_terms: int = 10_000

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError(f"rel_tol は正である必要があります: {self.rel_tol}")
        if self.max_terms < 1:
            raise DomainError(f"max_terms は1以上である必要があります: {self.max_terms}")

    @classmethod
    def default(cls) -> "SeriesControl":
        """Config の既定値で生成"""
        return cls(rel_tol=Config.SERIES_REL_TOL, max_terms=Config.SERIES_MAX_TERMS)


def _is_nonpositive_integer(x: float) -> bool:
    return x <= 0 and float(x).is_integer()


def _lanczos_sum(x: float) -> tuple[float, float]:
    """Γ(x+1) 用の (t, A) を返す（x は1を引いた後の値）"""
    acc = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[i] / (x + i)
    return x + _LANCZOS_G + 0.5, acc


def gamma_fn(x: float) -> float:
    """
    ガンマ関数 Γ(x)

    正の整数（171以下）は階乗で厳密に、それ以外はLanczos近似で計算する。
    x < 0.5 は反射公式を使う。

    Raises:
        DomainError: x が0以下の整数（極）またはオーバーフローする場合
    """
    if _is_nonpositive_integer(x):
        raise DomainError(f"ガンマ関数の極です: {x}")
    if x > 171.6:
        raise DomainError(f"ガンマ関数がオーバーフローします: {x}")
    if float(x).is_integer():
        return float(math.factorial(int(x) - 1))
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1 - x))
    t, acc = _lanczos_sum(x - 1)
    # t^(x-0.5) を2回に分けてオーバーフローを避ける
    half_power = t ** ((x - 0.5) / 2)
    return math.sqrt(2 * math.pi) * half_power * math.exp(-t) * half_power * acc


def log_gamma(x: float) -> float:
    """log Γ(x)（x > 0）"""
    if x <= 0:
        raise DomainError(f"log_gamma は x > 0 でのみ定義されます: {x}")
    if x < 0.5:
        return math.log(math.pi / math.sin(math.pi * x)) - log_gamma(1 - x)
    t, acc = _lanczos_sum(x - 1)
    return _HALF_LOG_2PI + (x - 0.5) * math.log(t) - t + math.log(acc)


def digamma(x: float) -> float:
    """
    ディガンマ関数 ψ(x) = Γ'(x)/Γ(x)

    反射公式 → 漸化式で x ≥ 10 まで持ち上げ → 漸近展開。

    Raises:
        DomainError: x が0以下の整数（極）の場合
    """
    if _is_nonpositive_integer(x):
        raise DomainError(f"ディガンマ関数の極です: {x}")
    if x < 0:
        return digamma(1 - x) - math.pi / math.tan(math.pi * x)
    result = 0.0
    while x < 10:
        result -= 1 / x
        x += 1
    inv2 = 1 / (x * x)
    series = inv2 * (1 / 12 - inv2 * (1 / 120 - inv2 * (1 / 252 - inv2 * (1 / 240 - inv2 * (1 / 132)))))
    return result + math.log(x) - 0.5 / x - series


def log_bessel_i(nu: float, x: float, control: Optional[SeriesControl] = None) -> float:
    """
    log I_ν(x)

    級数の各項を対数で持ち、logsumexp で合計する。大きな x でもオーバーフローしない。

    Args:
        nu: 次数 (≥ −1)
        x: 引数 (> 0)
    """
    control = control or SeriesControl.default()
    if x <= 0:
        raise DomainError(f"log_bessel_i は x > 0 でのみ定義されます: {x}")
    if nu < -1:
        raise DomainError(f"次数は −1 以上である必要があります: {nu}")
    if nu < 0 and float(nu).is_integer():
        nu = -nu  # I_{-n} = I_n
    log_half = math.log(x / 2)
    log_term = nu * log_half - log_gamma(nu + 1)
    log_terms = [log_term]
    peak = log_term
    log_tol = math.log(control.rel_tol)
    for m in range(1, control.max_terms + 1):
        log_term += 2 * log_half - math.log(m) - math.log(m + nu)
        log_terms.append(log_term)
        peak = max(peak, log_term)
        if m > x / 2 and log_term < peak + log_tol:
            return float(logsumexp(log_terms))
    raise ConvergenceError(
        f"ベッセル級数が収束しません: nu={nu}, x={x}",
        partial_value=float(logsumexp(log_terms)),
        n_terms=control.max_terms,
    )


def bessel_i(nu: float, x: float, control: Optional[SeriesControl] = None) -> float:
    """
    第1種変形ベッセル関数 I_ν(x) = Σ_m (x/2)^{2m+ν} / (m! Γ(m+ν+1))

    Args:
        nu: 次数 (≥ −1)
        x: 引数 (≥ 0)

    Returns:
        float: I_ν(x)
    """
    if x < 0:
        raise DomainError(f"bessel_i は x ≥ 0 でのみ定義されます: {x}")
    if nu < -1:
        raise DomainError(f"次数は −1 以上である必要があります: {nu}")
    if x == 0:
        if nu == 0:
            return 1.0
        if nu > 0 or float(nu).is_integer():
            return 0.0
        return math.inf
    return math.exp(log_bessel_i(nu, x, control))


def _kummer_series(s: float, b: float, z: float, control: SeriesControl, derivative: bool):
    """
    倍精度の級数。(値, 最大項の絶対値, 項数) を返す。

    derivative=True なら ∂Φ/∂s の級数を返す。
    項の漸化式 t_j = t_{j-1}(s+j-1)z/((b+j-1)j) を s で微分すると
    dt_j = (dt_{j-1}(s+j-1) + t_{j-1}) z/((b+j-1)j) となり、ディガンマ差 ψ(s+j)−ψ(s) を
    展開した形なので s+j が極をまたいでも特異にならない。
    """
    t, dt = 1.0, 0.0
    terms = [1.0]
    dterms = [0.0]
    total, dtotal = 1.0, 0.0
    peak = 1.0
    for j in range(1, control.max_terms + 1):
        factor = z / ((b + j - 1) * j)
        if derivative:
            dt = (dt * (s + j - 1) + t) * factor
            dterms.append(dt)
            dtotal += dt
            peak = max(peak, abs(dt))
        t = t * (s + j - 1) * factor
        terms.append(t)
        total += t
        if not derivative:
            peak = max(peak, abs(t))
            if t == 0.0:
                return math.fsum(terms), peak, j
        next_ratio = abs((s + j) * z / ((b + j) * (j + 1)))
        if next_ratio < 0.5:
            if derivative:
                done = abs(dt) <= control.rel_tol * abs(dtotal) and abs(t) <= control.rel_tol * max(abs(dtotal), 1e-300)
            else:
                done = abs(t) <= control.rel_tol * abs(total)
            if done:
                return math.fsum(dterms if derivative else terms), peak, j
    partial = math.fsum(dterms if derivative else terms)
    raise ConvergenceError(
        f"クンマー級数が収束しません: s={s}, b={b}, z={z}",
        partial_value=partial,
        n_terms=control.max_terms,
    )


def _kummer_sum_mp(s: float, b: float, z: float, control: SeriesControl, derivative: bool, dps: int):
    """dps 桁で級数を足し上げる。収束しなければ None"""
    with mpmath.workdps(dps):
        s_m, b_m, z_m = mpmath.mpf(s), mpmath.mpf(b), mpmath.mpf(z)
        eps = mpmath.mpf(control.rel_tol) / 100
        t, dt = mpmath.mpf(1), mpmath.mpf(0)
        total, dtotal = mpmath.mpf(1), mpmath.mpf(0)
        for j in range(1, control.max_terms + 1):
            factor = z_m / ((b_m + j - 1) * j)
            dt = (dt * (s_m + j - 1) + t) * factor
            t = t * (s_m + j - 1) * factor
            total += t
            dtotal += dt
            next_ratio = abs((s_m + j) * z_m / ((b_m + j) * (j + 1)))
            if next_ratio < 0.5:
                if derivative:
                    done = abs(dt) <= eps * abs(dtotal) and abs(t) <= eps * abs(dtotal)
                else:
                    done = abs(t) <= eps * abs(total)
                if done:
                    return float(dtotal if derivative else total)
    return None


def _kummer_series_mp(s: float, b: float, z: float, control: SeriesControl,
                      derivative: bool, peak: float) -> float:
    """
    mpmath で級数を再計算する

    精度は最大項の桁数に倍精度の17桁と余裕20桁を足したもの。
    dps と dps+20 の2回の結果が倍精度で一致するまで dps を倍にする。
    """
    dps = MP_GUARD_DIGITS + 17 + int(math.ceil(math.log10(max(peak, 10.0))))
    previous = None
    for _ in range(MP_MAX_DOUBLINGS):
        logger.debug(f"クンマー級数を拡張精度で再計算: s={s}, b={b}, z={z}, dps={dps}")
        value = _kummer_sum_mp(s, b, z, control, derivative, dps)
        check = _kummer_sum_mp(s, b, z, control, derivative, dps + MP_GUARD_DIGITS)
        if value is not None and check is not None and abs(value - check) <= 4e-16 * max(abs(check), 1e-300):
            return check
        previous = check
        dps *= 2
    raise ConvergenceError(
        f"クンマー級数（拡張精度）が収束しません: s={s}, b={b}, z={z}",
        partial_value=math.nan if previous is None else previous,
        n_terms=control.max_terms,
    )


def _kummer_eval(s: float, b: float, z: float, control: SeriesControl, derivative: bool) -> float:
    value, peak, _ = _kummer_series(s, b, z, control, derivative)
    # 倍精度の和は桁落ちで壊れている可能性がある。精度は最大項だけから決める
    if value == 0 or peak / abs(value) > Config.KUMMER_CANCELLATION_LIMIT:
        return _kummer_series_mp(s, b, z, control, derivative, peak)
    return value


def kummer_phi(s: float, b: float, z: float, control: Optional[SeriesControl] = None) -> float:
    """
    クンマー合流型超幾何関数 Φ(s, b; z) = Σ_j (s)_j/(b)_j · z^j/j!

    z < 0 はクンマー変換 Φ(s, b; z) = e^z Φ(b−s, b; −z) で正の引数に直す。

    Args:
        s: 第1パラメータ
        b: 第2パラメータ（0以下の整数は不可）
        z: 引数
        control: 級数の打ち切り設定（省略時は Config の既定値）

    Raises:
        DomainError: b が0以下の整数の場合
        ConvergenceError: 項数上限に達した場合（部分和を保持）
    """
    if _is_nonpositive_integer(b):
        raise DomainError(f"b は0以下の整数であってはいけません: {b}")
    if z == 0:
        return 1.0
    control = control or SeriesControl.default()
    if z < 0:
        return math.exp(z) * _kummer_eval(b - s, b, -z, control, derivative=False)
    return _kummer_eval(s, b, z, control, derivative=False)


def kummer_phi_ds(s: float, b: float, z: float, control: Optional[SeriesControl] = None) -> float:
    """
    ∂Φ(s, b; z)/∂s

    項ごとに微分した級数で計算する（Pochhammer記号の微分はディガンマ差を展開した漸化式）。
    """
    if _is_nonpositive_integer(b):
        raise DomainError(f"b は0以下の整数であってはいけません: {b}")
    if z == 0:
        return 0.0
    control = control or SeriesControl.default()
    if z < 0:
        return -math.exp(z) * _kummer_eval(b - s, b, -z, control, derivative=True)
    return _kummer_eval(s, b, z, control, derivative=True)


def whittaker_m(k: float, mu: float, z: float, control: Optional[SeriesControl] = None) -> float:
    """ホイッタカー関数 M_{k,μ}(z) = z^{μ+1/2} e^{−z/2} Φ(μ−k+1/2, 2μ+1; z)"""
    if z <= 0:
        raise DomainError(f"whittaker_m は z > 0 でのみ定義されます: {z}")
    if _is_nonpositive_integer(2 * mu + 1):
        raise DomainError(f"2μ+1 は0以下の整数であってはいけません: mu={mu}")
    return z ** (mu + 0.5) * math.exp(-z / 2) * kummer_phi(mu - k + 0.5, 2 * mu + 1, z, control)


# テスト用
if __name__ == "__main__":
    print(f"Γ(0.9) = {gamma_fn(0.9)}")
    print(f"I_0.5(1) = {bessel_i(0.5, 1.0)}")
    print(f"Φ(1,1;1) = {kummer_phi(1, 1, 1)}")
    print(f"∂sΦ(1,1;1) = {kummer_phi_ds(1, 1, 1)}")
