"""Scalar goldens for the box-similarity and loss tests.

Everything is recomputed from the closed-form definitions with mpmath at 50
digits; the background sampler is re-implemented on top of the pure-Python
MT19937-64 so seeded samples can be checked without the C++ code.
"""

import math

import mpmath as mp

from mt64 import SeededRng

mp.mp.dps = 50


def parts(b):
    return [mp.mpf(v) for v in b]


def area(b):
    return (b[2] - b[0]) * (b[3] - b[1])


def inter(a, b):
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    return iw * ih if iw > 0 and ih > 0 else mp.mpf(0)


def iou(a, b):
    a, b = parts(a), parts(b)
    u = area(a) + area(b) - inter(a, b)
    return inter(a, b) / u if u > 0 else mp.mpf(0)


def dist(a, b):
    a, b = parts(a), parts(b)
    rho2 = ((a[0] + a[2]) / 2 - (b[0] + b[2]) / 2) ** 2 + ((a[1] + a[3]) / 2 - (b[1] + b[3]) / 2) ** 2
    if rho2 == 0:
        return mp.mpf(0)
    cw = max(a[2], b[2]) - min(a[0], b[0])
    ch = max(a[3], b[3]) - min(a[1], b[1])
    return rho2 / (cw * cw + ch * ch)


def ciou(a, b, beta=None):
    pa, pb = parts(a), parts(b)
    i = iou(a, b)
    v = 4 / mp.pi**2 * (mp.atan((pb[2] - pb[0]) / (pb[3] - pb[1])) - mp.atan((pa[2] - pa[0]) / (pa[3] - pa[1]))) ** 2
    aspect = mp.mpf(0) if v == 0 else v * v / ((1 - i) + (v if beta is None else beta))
    return i - dist(a, b) - aspect


def sample_backgrounds(gt, fw, fh, k, seed):
    gx1, gx2 = min(max(gt[0], 0.0), fw), min(max(gt[2], 0.0), fw)
    gy1, gy2 = min(max(gt[1], 0.0), fh), min(max(gt[3], 0.0), fh)
    regions = [(0.0, 0.0, fw, gy1), (0.0, gy2, fw, fh), (0.0, gy1, gx1, gy2), (gx2, gy1, fw, gy2)]
    areas = [(r[2] - r[0]) * (r[3] - r[1]) for r in regions]
    cum, total = [], 0.0
    for a in areas:
        total += a
        cum.append(total)
    q = 2.0**-24
    gcx, gcy = 0.5 * (gt[0] + gt[2]), 0.5 * (gt[1] + gt[3])
    rng, out = SeededRng(seed), []
    while len(out) < k:
        pick = rng.uniform() * total
        chosen = [i for i in range(4) if areas[i] > 0 and pick < cum[i]]
        idx = chosen[0] if chosen else max(i for i in range(4) if areas[i] > 0)
        r = regions[idx]
        cx, cy = rng.uniform(r[0], r[2]), rng.uniform(r[1], r[3])
        tx, ty = math.floor((cx - gcx) / q) * q, math.floor((cy - gcy) / q) * q
        b = (gt[0] + tx, gt[1] + ty, gt[2] + tx, gt[3] + ty)
        bcx, bcy = 0.5 * (b[0] + b[2]), 0.5 * (b[1] + b[3])
        if gt[0] < bcx < gt[2] and gt[1] < bcy < gt[3]:
            continue
        out.append(b)
    return out


def raiou(pred, backgrounds, beta=None):
    return -sum(ciou(pred, b, beta) for b in backgrounds) / len(backgrounds)


def show(name, v):
    print(f"{name} = {mp.nstr(v, 17)}")


def main():
    show("iou (0,0,2,2)/(1,1,3,3)", iou((0, 0, 2, 2), (1, 1, 3, 3)))
    show("ciou touching (0,0,2,2)/(2,0,4,2)", ciou((0, 0, 2, 2), (2, 0, 4, 2)))
    show("ciou_loss (0,0,2,2)/(1,1,3,3)", 1 - ciou((0, 0, 2, 2), (1, 1, 3, 3)))
    show("ciou aspect (0,0,4,2)/(1,0,3,3)", ciou((0, 0, 4, 2), (1, 0, 3, 3)))
    show("ciou aspect beta=0.5 (0,0,4,2)/(1,0,3,3)", ciou((0, 0, 4, 2), (1, 0, 3, 3), mp.mpf("0.5")))
    show("ciou disjoint (0,0,1,3)/(5,5,9,6)", ciou((0, 0, 1, 3), (5, 5, 9, 6)))

    gt = (40.0, 40.0, 60.0, 60.0)
    print("sampler seed 7, k=4:")
    for b in sample_backgrounds(gt, 100.0, 100.0, 4, 7):
        print("  {%r, %r, %r, %r}" % b)
    bgs = sample_backgrounds(gt, 100.0, 100.0, 8, 42)
    show("raiou pred=gt seed 42 k=8", raiou(gt, bgs))
    pred = (42.0, 38.0, 63.0, 61.0)
    show("raiou pred=(42,38,63,61) seed 42 k=8", raiou(pred, bgs))
    show("combined sigma=0.5 pred=(42,38,63,61)", (1 - ciou(pred, gt)) + mp.mpf("0.5") * raiou(pred, bgs))


if __name__ == "__main__":
    main()
