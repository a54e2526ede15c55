from typing import List, Sequence

from rconvmk.errors import PartitionError


def partition_channels(c_s: int, ratio: Sequence[int]) -> List[int]:
    """
    Split ``c_s`` channels into len(ratio) groups proportional to ``ratio``.

    Largest-remainder rounding in exact integer arithmetic; remainder ties go
    to the lower (lower-frequency) index. Any group left at 0 takes one channel
    from the current largest group.

    >>> partition_channels(100, [1, 3, 2])
    [17, 50, 33]
    """
    m = len(ratio)
    if m == 0:
        raise PartitionError("ratio must have at least one entry")
    if any(int(r) <= 0 for r in ratio):
        raise PartitionError(f"ratio entries must be positive, got {list(ratio)}")
    if c_s < m:
        raise PartitionError(f"cannot split {c_s} channels into {m} non-empty groups")

    total = sum(int(r) for r in ratio)
    counts = [c_s * int(r) // total for r in ratio]
    remainders = [c_s * int(r) % total for r in ratio]
    leftover = c_s - sum(counts)
    for j in sorted(range(m), key=lambda j: (-remainders[j], j))[:leftover]:
        counts[j] += 1

    for j in range(m):
        if counts[j] == 0:
            donor = max(range(m), key=lambda i: (counts[i], -i))
            counts[donor] -= 1
            counts[j] += 1
    return counts


def group_slices(counts: Sequence[int]) -> List[slice]:
    """Consecutive channel slices for the given group sizes."""
    slices, start = [], 0
    for c in counts:
        slices.append(slice(start, start + c))
        start += c
    return slices
