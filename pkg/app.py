"""
細胞接着モデル 数値実験ツールキット - コマンドラインエントリポイント

実験の種類ごとのサブコマンドで JSON 設定ファイルを受け取り、実験を実行して
<out>.csv と <out>.json を書き出す。

使用法:
    python app.py equilibria --config docs/configs/equilibria_creation_off.json
    python app.py sweep_u --config docs/configs/sweep_u.json --out results/sweep --threads 4

終了コード:
    0 成功 / 2 設定の検証エラー / 3 数値計算の失敗（部分的な結果は書き出す）
"""
import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Optional

# プロジェクトルートをパスに追加
sys.path.insert(0, str(Path(__file__).parent))

from config import Config
from core.errors import AdhesionModelError, ConfigValidationError, ParameterError
from core.experiment_runner import run_experiment
from integrations.config_loader import load_config
from integrations.result_writer import ResultWriter
from models.experiment import ExperimentConfig, ExperimentKind

logger = logging.getLogger("app")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def setup_logging() -> None:
    """ルートロガーを標準エラーに [LEVEL] 形式で設定する"""
    logging.basicConfig(
        level=Config.LOG_LEVEL.upper(),
        format="[%(levelname)s] %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    """実験の種類ごとのサブコマンドを持つパーサーを作る"""
    parser = argparse.ArgumentParser(prog="app.py", description="細胞接着モデルの数値実験を実行する")
    subparsers = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for kind in ExperimentKind:
        sub = subparsers.add_parser(kind.value, help=f"{kind.value} 実験")
        sub.add_argument("--config", required=True, help="JSON設定ファイルのパス")
        sub.add_argument("--seed", type=int, default=None, help="マスターシード（設定ファイルより優先）")
        sub.add_argument("--out", default=None, help="出力ファイルの接頭辞（設定ファイルより優先）")
        sub.add_argument("--threads", type=int, default=None, help="並列プロセス数")
    return parser


def prepare_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    設定ファイルを読み込み、CLIフラグで上書きする

    Raises:
        ConfigValidationError: 設定が不正、またはサブコマンドと設定の実験名が一致しない場合
    """
    config = load_config(args.config)
    if config.experiment.value != args.experiment:
        raise ConfigValidationError(
            f"サブコマンド {args.experiment} と設定の実験名 {config.experiment.value} が一致しません",
            field="experiment",
        )
    if args.threads is not None and args.threads < 1:
        raise ConfigValidationError(f"--threads は1以上である必要があります: {args.threads}", field="threads")
    return config.with_overrides(seed=args.seed, output=args.out)


def execute(config: ExperimentConfig, threads: Optional[int] = None) -> int:
    """
    実験を実行して結果を書き出し、終了コードを返す

    点ごとの失敗があっても CSV は書き出し、終了コード3を返す。
    """
    writer = ResultWriter(config.output)
    started = time.perf_counter()
    try:
        result = run_experiment(config, threads)
    except ParameterError as e:
        logger.error(f"パラメータが不正です: {e}")
        return EXIT_VALIDATION
    except (AdhesionModelError, ArithmeticError, ValueError) as e:
        logger.error(f"数値計算に失敗しました: {e}")
        failure = {"where": "run", "error": type(e).__name__, "message": str(e)}
        writer.write(config, None, time.perf_counter() - started, failures=[failure])
        return EXIT_NUMERICAL

    writer.write(config, result, time.perf_counter() - started)
    if not result.ok:
        return EXIT_NUMERICAL
    logger.info(f"実験 {config.experiment.value} が完了しました")
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    """コマンドラインのエントリポイント"""
    args = build_parser().parse_args(argv)
    setup_logging()

    errors = Config.validate()
    if errors:
        logger.error(f"環境変数の設定が範囲外です: {', '.join(errors)}")
        return EXIT_VALIDATION

    try:
        config = prepare_config(args)
    except ConfigValidationError as e:
        where = f" ({e.field})" if e.field else ""
        logger.error(f"設定の検証に失敗しました{where}: {e}")
        return EXIT_VALIDATION

    return execute(config, args.threads)


if __name__ == "__main__":
    sys.exit(main())
