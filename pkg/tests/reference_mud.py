"""Plain-list reference of the ratio-dropping queue logic.

Kept deliberately naive (explicit loops, no arrays) so it can serve as an
independent oracle for the array-backed policy implementation.  Also counts
how many queue elements each arrival examines, to witness the one-pass
bound.
"""


def deadline_key(job):
    return (job.expiry, -job.reward, job.id)


def arrival(queue, job, now, residual):
    """Insert ``job`` into ``queue`` (deadline order) and apply the drop rule.

    Returns (new_queue, dropped_job_or_None, examinations).
    """
    examinations = 0
    new_queue = list(queue)
    pos = 0
    while pos < len(new_queue):
        examinations += 1
        if deadline_key(job) < deadline_key(new_queue[pos]):
            break
        pos += 1
    new_queue.insert(pos, job)

    base = now + residual
    ahead = 0.0
    first_miss = None
    for i, queued in enumerate(new_queue):
        examinations += 1
        if queued.expiry < base + ahead:
            first_miss = i
            break
        ahead += queued.service
    if first_miss is None:
        return new_queue, None, examinations

    best = None
    for queued in new_queue[: first_miss + 1]:
        examinations += 1
        key = (queued.reward / queued.service, queued.expiry, queued.id)
        if best is None or key < best[0]:
            best = (key, queued)
    dropped = best[1]
    new_queue.remove(dropped)
    return new_queue, dropped, examinations


def select(queue, now, head_swap=True):
    """Returns (kind, job, new_queue) for a free server."""
    if not queue:
        return "idle", None, queue
    head = queue[0]
    if head.expiry < now:
        return "drop", head, queue[1:]
    if head_swap and len(queue) >= 2:
        second = queue[1]
        if (head.expiry >= now + second.service
                and head.reward / head.service < second.reward / second.service):
            return "serve", second, [head] + queue[2:]
    return "serve", head, queue[1:]
