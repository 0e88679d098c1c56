"""
実験設定・実験結果データモデル

JSON設定ファイル1つが1つの実験に対応する。読み込みは厳格で、未知のキーや
範囲外の値は ConfigValidationError（違反したフィールド名つき）で拒否する。
"""
import math
from dataclasses import dataclass, field, asdict, replace
from enum import Enum
from typing import Any, Optional

from config import Config
from core.errors import ConfigValidationError, ParameterError
from models.params import ModelParams, RegimeKind
from models.results import SpectralMode


SEED_LIMIT = 2 ** 64


class ExperimentKind(Enum):
    """実験の種類（CLIのサブコマンド名と同じ）"""
    SSA = "ssa"
    RENORM = "renorm"
    ODE = "ode"
    EQUILIBRIA = "equilibria"
    SDE = "sde"
    CIR_DENSITY = "cir_density"
    CIR_STATIONARY = "cir_stationary"
    FPT_SPECTRAL = "fpt_spectral"
    LAPLACE_CHECK = "laplace_check"
    MFPT = "mfpt"
    SWEEP_U = "sweep_u"
    CONVERGENCE = "convergence"
    OU_REPR = "ou_repr"


# CIR過程（α=0, a>0, c>0）を前提とする実験
CIR_EXPERIMENTS = {
    ExperimentKind.CIR_DENSITY,
    ExperimentKind.CIR_STATIONARY,
    ExperimentKind.FPT_SPECTRAL,
    ExperimentKind.LAPLACE_CHECK,
    ExperimentKind.OU_REPR,
}

# 定常分布（r < d）が必要な実験
STATIONARY_EXPERIMENTS = CIR_EXPERIMENTS - {ExperimentKind.CIR_DENSITY}

# ノイズ a > 0 が必要な実験
NOISY_EXPERIMENTS = CIR_EXPERIMENTS | {
    ExperimentKind.SDE,
    ExperimentKind.MFPT,
    ExperimentKind.SWEEP_U,
    ExperimentKind.CONVERGENCE,
}


@dataclass(frozen=True)
class InputField:
    """実験固有の入力項目の型と既定値"""
    kind: str                          # float / int / bool / str / float_list / int_list
    default: Any = None
    required: bool = False
    choices: Optional[tuple] = None


_REGIMES = tuple(k.value for k in RegimeKind)
_MODES = tuple(m.value for m in SpectralMode)

INPUT_FIELDS: dict[ExperimentKind, dict[str, InputField]] = {
    ExperimentKind.SSA: {
        "n0": InputField("int", 0),
        "stop_at_n_star": InputField("bool", False),
    },
    ExperimentKind.RENORM: {
        "x0": InputField("float", required=True),
        "regime": InputField("str", RegimeKind.ACCELERATED_CREATION.value, choices=_REGIMES),
        "K": InputField("int", 100),
        "eta": InputField("float"),
        "K_values": InputField("int_list"),
    },
    ExperimentKind.ODE: {
        "n0": InputField("float", required=True),
        "include_creation": InputField("bool", True),
    },
    ExperimentKind.EQUILIBRIA: {},
    ExperimentKind.SDE: {
        "n0": InputField("float", required=True),
        "stop_at_n_star": InputField("bool", False),
    },
    ExperimentKind.CIR_DENSITY: {
        "n0": InputField("float", required=True),
        "t": InputField("float", required=True),
        "n_max": InputField("float", required=True),
    },
    ExperimentKind.CIR_STATIONARY: {
        "n_max": InputField("float", required=True),
        "burn_in": InputField("float"),
    },
    ExperimentKind.FPT_SPECTRAL: {
        "y": InputField("float", required=True),
        "x": InputField("float", required=True),
        "mode": InputField("str", SpectralMode.EXACT_ROOTS.value, choices=_MODES),
        "t_min": InputField("float", 1e-4),
        "t_max": InputField("float", 10.0),
        "monte_carlo": InputField("bool", False),
    },
    ExperimentKind.LAPLACE_CHECK: {
        "y": InputField("float", required=True),
        "x": InputField("float", required=True),
        "alphas": InputField("float_list", [0.5, 1.0, 2.0]),
    },
    ExperimentKind.MFPT: {
        "n0": InputField("float", 0.0),
        "moments": InputField("int", 1),
        "monte_carlo": InputField("bool", False),
    },
    ExperimentKind.SWEEP_U: {
        "u_values": InputField("float_list", required=True),
        "gammas": InputField("float_list"),
        "n0": InputField("float", 0.0),
    },
    ExperimentKind.CONVERGENCE: {
        "n0": InputField("float", required=True),
        "t": InputField("float", required=True),
        "K": InputField("int"),
        "eta": InputField("float", 1.0),
    },
    ExperimentKind.OU_REPR: {
        "n0": InputField("float", required=True),
        "t": InputField("float", required=True),
    },
}


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _coerce(name: str, spec: InputField, value):
    """入力値を型どおりに変換する（不正なら ConfigValidationError）"""
    if value is None:
        if spec.required:
            raise ConfigValidationError(f"{name} は必須です", field=name)
        return None
    if spec.kind == "float":
        if not _is_number(value):
            raise ConfigValidationError(f"{name} は有限の数値である必要があります: {value!r}", field=name)
        return float(value)
    if spec.kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigValidationError(f"{name} は整数である必要があります: {value!r}", field=name)
        return value
    if spec.kind == "bool":
        if not isinstance(value, bool):
            raise ConfigValidationError(f"{name} は true/false である必要があります: {value!r}", field=name)
        return value
    if spec.kind == "str":
        if not isinstance(value, str) or (spec.choices and value not in spec.choices):
            raise ConfigValidationError(f"{name} は {spec.choices} のいずれかです: {value!r}", field=name)
        return value
    if not isinstance(value, list) or not value:
        raise ConfigValidationError(f"{name} は空でない配列である必要があります: {value!r}", field=name)
    if spec.kind == "int_list":
        if any(isinstance(v, bool) or not isinstance(v, int) for v in value):
            raise ConfigValidationError(f"{name} の要素は整数である必要があります", field=name)
        return list(value)
    if not all(_is_number(v) for v in value):
        raise ConfigValidationError(f"{name} の要素は有限の数値である必要があります", field=name)
    return [float(v) for v in value]


def _reject_unknown(data: dict, allowed, prefix: str = "") -> None:
    for key in data:
        if key not in allowed:
            raise ConfigValidationError(f"未知のキーです: {prefix}{key}", field=f"{prefix}{key}")


def _require_mapping(value, name: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigValidationError(f"{name} はオブジェクトである必要があります", field=name)
    return value


@dataclass(frozen=True)
class Numerics:
    """
    数値計算の設定

    既定値は Config（環境変数）から取る。
    """
    dt: float = field(default_factory=lambda: Config.HITTING_DT)
    horizon: float = 10.0
    n_paths: int = 1
    n_terms: Optional[int] = None          # スペクトル展開の項数（None なら Config.SPECTRAL_TERMS）
    rel_tol: float = field(default_factory=lambda: Config.QUAD_REL_TOL)
    abs_tol: float = field(default_factory=lambda: Config.QUAD_ABS_TOL)
    n_grid: int = 101                      # 出力グリッドの点数

    def __post_init__(self):
        if not (_is_number(self.dt) and self.dt > 0):
            raise ConfigValidationError(f"dt は正である必要があります: {self.dt}", field="numerics.dt")
        if not (_is_number(self.horizon) and self.horizon > 0):
            raise ConfigValidationError(f"horizon は正である必要があります: {self.horizon}", field="numerics.horizon")
        if isinstance(self.n_paths, bool) or not isinstance(self.n_paths, int) or self.n_paths < 1:
            raise ConfigValidationError(f"n_paths は1以上の整数です: {self.n_paths}", field="numerics.n_paths")
        if self.n_terms is not None and (isinstance(self.n_terms, bool) or not isinstance(self.n_terms, int)
                                         or self.n_terms < 1):
            raise ConfigValidationError(f"n_terms は1以上の整数です: {self.n_terms}", field="numerics.n_terms")
        if not (_is_number(self.rel_tol) and 0 < self.rel_tol < 1):
            raise ConfigValidationError(f"rel_tol は (0, 1) にある必要があります: {self.rel_tol}",
                                        field="numerics.rel_tol")
        if not (_is_number(self.abs_tol) and self.abs_tol >= 0):
            raise ConfigValidationError(f"abs_tol は0以上である必要があります: {self.abs_tol}",
                                        field="numerics.abs_tol")
        if isinstance(self.n_grid, bool) or not isinstance(self.n_grid, int) or self.n_grid < 2:
            raise ConfigValidationError(f"n_grid は2以上の整数です: {self.n_grid}", field="numerics.n_grid")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Numerics":
        data = _require_mapping(data, "numerics")
        _reject_unknown(data, cls.__dataclass_fields__, "numerics.")
        values = {k: (float(v) if k in ("dt", "horizon", "rel_tol", "abs_tol") and _is_number(v) else v)
                  for k, v in data.items()}
        return cls(**values)


@dataclass(frozen=True)
class ExperimentConfig:
    """実験1回分の設定"""
    experiment: ExperimentKind
    model: ModelParams
    numerics: Numerics = field(default_factory=Numerics)
    inputs: dict = field(default_factory=dict)
    seed: int = 0
    output: str = ""

    def with_overrides(self, seed: Optional[int] = None, output: Optional[str] = None) -> "ExperimentConfig":
        """CLIフラグで seed / output を上書きする"""
        changes = {}
        if seed is not None:
            _check_seed(seed)
            changes["seed"] = seed
        if output is not None:
            changes["output"] = output
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment.value,
            "model": self.model.to_dict(),
            "numerics": self.numerics.to_dict(),
            "inputs": dict(self.inputs),
            "seed": self.seed,
            "output": self.output,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        """
        辞書から厳格に生成する

        モデルパラメータは u_star と a 以外すべて必須。inputs は実験ごとに決まった項目のみ受け付ける。

        Raises:
            ConfigValidationError: 未知のキー、型・範囲の違反、実験とモデルの組み合わせの不整合
        """
        data = _require_mapping(data, "config")
        _reject_unknown(data, ("experiment", "model", "numerics", "inputs", "seed", "output"))

        try:
            kind = ExperimentKind(data.get("experiment"))
        except ValueError:
            raise ConfigValidationError(f"無効な実験名です: {data.get('experiment')!r}", field="experiment")

        model_data = _require_mapping(data.get("model"), "model")
        _reject_unknown(model_data, ModelParams.__dataclass_fields__, "model.")
        for name in ("u", "gamma", "c", "r", "d", "alpha"):
            if name not in model_data:
                raise ConfigValidationError(f"model.{name} は必須です", field=f"model.{name}")
        try:
            model = ModelParams.from_dict(model_data)
        except (ParameterError, TypeError) as e:
            raise ConfigValidationError(f"モデルパラメータが不正です: {e}", field="model")

        numerics = Numerics.from_dict(data.get("numerics", {}))

        raw_inputs = _require_mapping(data.get("inputs", {}), "inputs")
        fields = INPUT_FIELDS[kind]
        _reject_unknown(raw_inputs, fields, "inputs.")
        inputs = {}
        for name, spec in fields.items():
            value = raw_inputs.get(name, spec.default)
            inputs[name] = _coerce(f"inputs.{name}", spec, list(value) if isinstance(value, list) else value)

        seed = data.get("seed", 0)
        _check_seed(seed)
        output = data.get("output", f"results/{kind.value}")
        if not isinstance(output, str) or not output:
            raise ConfigValidationError(f"output は空でない文字列です: {output!r}", field="output")

        config = cls(experiment=kind, model=model, numerics=numerics, inputs=inputs, seed=seed, output=output)
        _check_combination(config)
        return config


def _check_seed(seed) -> None:
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < SEED_LIMIT:
        raise ConfigValidationError(f"seed は0以上2^64未満の整数です: {seed!r}", field="seed")


def _check_combination(config: ExperimentConfig) -> None:
    """実験の種類とモデル・入力の組み合わせを検査する"""
    kind, p, inputs = config.experiment, config.model, config.inputs
    if kind in NOISY_EXPERIMENTS and not p.a > 0:
        raise ConfigValidationError(f"{kind.value} には a > 0 が必要です", field="model.a")
    if kind in CIR_EXPERIMENTS:
        if p.alpha != 0:
            raise ConfigValidationError(f"{kind.value} はCIR過程（alpha = 0）専用です", field="model.alpha")
        if not p.effective_c > 0:
            raise ConfigValidationError(f"{kind.value} には c > 0 が必要です", field="model.c")
    if kind in STATIONARY_EXPERIMENTS and not p.r < p.d:
        raise ConfigValidationError(f"{kind.value} には r < d が必要です", field="model.r")

    for name in ("n0", "x0", "y", "t", "n_max", "burn_in"):
        value = inputs.get(name)
        if value is not None and value < 0:
            raise ConfigValidationError(f"inputs.{name} は0以上である必要があります: {value}",
                                        field=f"inputs.{name}")
    if kind is ExperimentKind.SSA and inputs["stop_at_n_star"] and not p.n_star > 0:
        raise ConfigValidationError("n* = 0 では停止できません", field="model.u")
    if kind is ExperimentKind.RENORM:
        if inputs["K"] < 1 or any(K < 1 for K in inputs["K_values"] or []):
            raise ConfigValidationError("K は1以上である必要があります", field="inputs.K")
        if inputs["regime"] == RegimeKind.ACCELERATED_DEMOGRAPHY.value:
            if inputs["eta"] is None or not 0 < inputs["eta"] <= 1:
                raise ConfigValidationError("accelerated_demography には eta ∈ (0, 1] が必要です",
                                            field="inputs.eta")
            if inputs["K_values"]:
                raise ConfigValidationError("accelerated_demography では K_values は使えません",
                                            field="inputs.K_values")
    if kind in (ExperimentKind.FPT_SPECTRAL, ExperimentKind.LAPLACE_CHECK):
        if not inputs["x"] > inputs["y"]:
            raise ConfigValidationError("0 ≤ y < x である必要があります", field="inputs.x")
    if kind is ExperimentKind.FPT_SPECTRAL:
        if not 0 < inputs["t_min"] < inputs["t_max"]:
            raise ConfigValidationError("0 < t_min < t_max である必要があります", field="inputs.t_min")
    if kind is ExperimentKind.LAPLACE_CHECK and any(a <= 0 for a in inputs["alphas"]):
        raise ConfigValidationError("alphas は正である必要があります", field="inputs.alphas")
    if kind in (ExperimentKind.CIR_DENSITY, ExperimentKind.CONVERGENCE, ExperimentKind.OU_REPR):
        if not inputs["t"] > 0:
            raise ConfigValidationError("t は正である必要があります", field="inputs.t")
    if kind is ExperimentKind.CIR_DENSITY or kind is ExperimentKind.CIR_STATIONARY:
        if not inputs["n_max"] > 0:
            raise ConfigValidationError("n_max は正である必要があります", field="inputs.n_max")
    if kind is ExperimentKind.MFPT:
        if not p.effective_c > 0:
            raise ConfigValidationError("mfpt には c > 0（u ≤ u*）が必要です", field="model.c")
        if not inputs["n0"] <= p.n_star:
            raise ConfigValidationError("n0 ≤ n* である必要があります", field="inputs.n0")
        if inputs["moments"] < 1:
            raise ConfigValidationError("moments は1以上である必要があります", field="inputs.moments")
    if kind is ExperimentKind.SWEEP_U:
        us = inputs["u_values"]
        if any(u <= 0 for u in us) or any(b <= a for a, b in zip(us, us[1:])):
            raise ConfigValidationError("u_values は正で狭義単調増加である必要があります", field="inputs.u_values")
        if inputs["gammas"] and any(g <= 0 for g in inputs["gammas"]):
            raise ConfigValidationError("gammas は正である必要があります", field="inputs.gammas")
    if kind is ExperimentKind.CONVERGENCE and inputs["K"] is not None:
        if inputs["K"] < 1 or not 0 < inputs["eta"] <= 1:
            raise ConfigValidationError("K ≥ 1 かつ eta ∈ (0, 1] である必要があります", field="inputs.K")


@dataclass
class ExperimentResult:
    """
    実験1回分の出力

    rows は columns と同じ順序の値のリスト。failures は点ごとの数値計算の失敗。
    """
    columns: list[str]
    rows: list[list]
    derived: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def add_failure(self, where: str, error: Exception) -> None:
        self.failures.append({"where": where, "error": type(error).__name__, "message": str(error)})
