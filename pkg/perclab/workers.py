import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def map_tasks(func: Callable[[T], R], tasks: Iterable[T], jobs: int = 1) -> List[R]:
    """
    Runs independent tasks, possibly in a pool of worker processes. Results are returned in task
    order, so any aggregation over them is independent of the number of workers and of the order
    in which tasks complete.

    :param func: A picklable module-level callable taking one task.

    :param tasks: The tasks, each one carrying its own derived seed.

    :param jobs: Number of worker processes, ``1`` runs every task inline.

    :returns: The list of results, in task order.
    """
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]

    workers = min(jobs, len(tasks))
    logger.debug("Running %d tasks on %d workers", len(tasks), workers)
    chunksize = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, tasks, chunksize=chunksize))
