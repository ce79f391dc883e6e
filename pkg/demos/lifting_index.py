"""Recommended weight limit and lifting index for three reference lifts.

Each lift starts at floor level in front of the feet and ends on a shelf;
the payload grows with shelf height.  Run with ``python demos/lifting_index.py``.
"""
from liftrisk import rnle

# payload kg, origin (H, V) cm, end (H, V) cm, travel D cm
LIFTS = {
    "low shelf": (3.0, (47, 8), (63, 68), 60),
    "mid shelf": (7.0, (47, 8), (63, 80), 72),
    "high shelf": (10.0, (47, 8), (63, 92), 83),
}


def main():
    print(f"{'lift':<11} {'where':<7} {'HM':>5} {'VM':>5} {'DM':>5} {'RWL kg':>7} {'LI':>5}")
    for name, (payload, origin, end, D) in LIFTS.items():
        for where, (H, V) in (("origin", origin), ("end", end)):
            res = rnle.rwl(rnle.NioshInput(H, V, D, payload=payload), rounding="table-parity")
            print(f"{name:<11} {where:<7} {res.HM:5.2f} {res.VM:5.2f} {res.DM:5.2f} "
                  f"{res.RWL:7.2f} {res.LI:5.2f}")
    # the horizontal limit: beyond 63 cm the lift is not recommended at any weight
    far = rnle.rwl(rnle.NioshInput(64, 80, 72, payload=7.0))
    print(f"\nhands 64 cm out: RWL {far.RWL:.2f} kg, LI {far.LI}")


if __name__ == "__main__":
    main()
