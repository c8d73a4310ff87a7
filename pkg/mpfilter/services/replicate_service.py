from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, TypeVar

from mpfilter.config import settings
from mpfilter.logging_config import get_logger

logger = get_logger()

R = TypeVar("R")


def run_replicates(
    fn: Callable[[int], R], count: int, workers: Optional[int] = None
) -> List[R]:
    """Evaluate fn(0..count-1), in a thread pool when workers > 1.

    Each replicate derives its own random streams from its index, so the result
    list is identical for any worker count.
    """
    workers = settings.workers if workers is None else workers
    if workers <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    logger.debug("replicates_dispatched", count=count, workers=workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))
