"""Index-ordered task execution over a process pool."""

from concurrent.futures import ProcessPoolExecutor


def run_tasks(fn, tasks, workers=1):
    """``[fn(t) for t in tasks]``, optionally in worker processes; order is preserved."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
