"""
アンサンブル実行の共通部品

経路ごとの乱数ストリームは (master_seed, 経路番号) だけで決まる。
並列実行しても結果は経路番号順に集めるので、ワーカー数によらず同一になる。
"""
import logging
from multiprocessing import Pool
from typing import Callable, Optional, Sequence

import numpy as np

from config import Config
from core.errors import DomainError

logger = logging.getLogger(__name__)

_SEED_LIMIT = 2 ** 64


def check_seed(seed: int) -> int:
    """64ビットの非負整数シードか検査する"""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not (0 <= seed < _SEED_LIMIT):
        raise DomainError(f"シードは0以上2^64未満の整数である必要があります: {seed}")
    return int(seed)


def path_rng(master_seed: int, path_index: int) -> np.random.Generator:
    """経路番号 path_index 用の独立な乱数生成器"""
    return np.random.default_rng(np.random.SeedSequence([check_seed(master_seed), int(path_index)]))


def map_paths(worker: Callable, args: Sequence[tuple], threads: Optional[int] = None) -> list:
    """
    worker(*arg) を各引数に適用し、入力順に結果を返す

    threads > 1 ならプロセスプールで並列に実行する。worker はモジュールの
    トップレベル関数である必要がある（pickle可能であること）。
    """
    threads = threads or Config.DEFAULT_THREADS
    if threads <= 1 or len(args) <= 1:
        return [worker(*arg) for arg in args]
    logger.debug(f"{len(args)}件を{threads}プロセスで実行")
    chunksize = max(1, len(args) // (4 * threads))
    with Pool(processes=threads) as pool:
        return pool.starmap(worker, args, chunksize=chunksize)
