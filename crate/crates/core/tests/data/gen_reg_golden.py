"""Shift-and-or oracle for the 105-bit register packing.

Writes reg_golden.txt. Independent of the Rust codec: it only knows the
field order and widths.
"""
import random

FIELDS = [("req", 1), ("eop", 1), ("addr", 32), ("data", 32), ("be", 4),
          ("r_req", 1), ("r_data", 32), ("r_opc", 2)]
WIDTH = sum(w for _, w in FIELDS)
assert WIDTH == 105


def pack(vals):
    acc = 0
    for (_, w), v in zip(FIELDS, vals):
        assert 0 <= v < (1 << w)
        acc = (acc << w) | v
    return acc


def line(vals):
    lhs = ",".join(format(v, "08x" if w == 32 else "x") for (_, w), v in zip(FIELDS, vals))
    return f"{lhs} -> {pack(vals):027x}"


rng = random.Random(20240611)
cases = [
    [0] * 8,
    [(1 << w) - 1 for _, w in FIELDS],
]
for i, _ in enumerate(FIELDS):
    cases.append([(1 << w) - 1 if j == i else 0 for j, (_, w) in enumerate(FIELDS)])
    if FIELDS[i][1] > 1:
        cases.append([1 if j == i else 0 for j, _ in enumerate(FIELDS)])
cases.append([1, 1, 0x100, 0xDEADBEEF, 0xF, 0, 0, 0])
cases.append([1, 1, 0x104, 0, 0, 1, 0x12345678, 1])
while len(cases) < 64:
    cases.append([rng.getrandbits(w) for _, w in FIELDS])

with open("reg_golden.txt", "w") as f:
    for c in cases:
        f.write(line(c) + "\n")
