"""Reference outputs for the dense blocks, computed with torch in float64.

Inputs and weights are drawn from the same seeded stream the C++ helpers use
(FeatureMap::random, ConvParams::random_same, SEParams::random,
Csp2Params::random), so the C++ test can rebuild them from the seed alone.
Writes tests/fixtures/nn_oracle.json.
"""

import json
import os

import torch
import torch.nn.functional as F

from mt64 import SeededRng

torch.set_default_dtype(torch.float64)


def draw(rng, count, lo=-0.5, hi=0.5):
    return [rng.uniform(lo, hi) for _ in range(count)]


def feature(rng, n, c, h, w):
    return torch.tensor(draw(rng, n * c * h * w)).reshape(n, c, h, w)


def conv_random_same(rng, c_out, c_in, k, dilation):
    w = torch.tensor(draw(rng, c_out * c_in * k * k)).reshape(c_out, c_in, k, k)
    b = torch.tensor(draw(rng, c_out))
    return w, b, dilation * (k - 1) // 2, dilation


def conv(x, p):
    w, b, pad, dil = p
    return F.conv2d(x, w, b, stride=1, padding=pad, dilation=dil)


def csp_stage(x, reduce, spatial):
    half = x.shape[1] // 2
    shallow, deep = x[:, :half], x[:, half:]
    mid = F.leaky_relu(conv(deep, reduce), 0.1)
    deep_out = conv(mid, spatial)
    return torch.cat([shallow, deep_out], 1), deep_out


def flat(t):
    return [float(v) for v in t.flatten()]


def main():
    out = {}

    rng = SeededRng(11)
    x = feature(rng, 1, 3, 9, 8)
    p = conv_random_same(rng, 2, 3, 3, 2)
    out["dilated_same"] = {"seed": 11, "input": [1, 3, 9, 8], "c_out": 2, "k": 3, "dilation": 2,
                           "output_shape": list(conv(x, p).shape), "output": flat(conv(x, p))}

    # Strided, unevenly padded variant: weights drawn after the input, no bias.
    rng = SeededRng(21)
    x = feature(rng, 2, 2, 11, 10)
    w = torch.tensor(draw(rng, 3 * 2 * 3 * 3)).reshape(3, 2, 3, 3)
    y = F.conv2d(x, w, None, stride=2, padding=1, dilation=3)
    out["dilated_strided"] = {"seed": 21, "input": [2, 2, 11, 10], "c_out": 3, "k": 3, "dilation": 3,
                              "stride": 2, "padding": 1, "output_shape": list(y.shape), "output": flat(y)}

    rng = SeededRng(12)
    x = feature(rng, 2, 8, 5, 4)
    c, r = 8, 4
    w1 = torch.tensor(draw(rng, c * (c // r))).reshape(c // r, c)
    w2 = torch.tensor(draw(rng, c * (c // r))).reshape(c, c // r)
    z = x.mean(dim=(2, 3))
    gate = torch.sigmoid(torch.relu(z @ w1.T) @ w2.T)
    y = x * gate[:, :, None, None]
    out["se"] = {"seed": 12, "input": [2, 8, 5, 4], "reduction_ratio": r, "gates": flat(gate),
                 "output_shape": list(y.shape), "output": flat(y)}

    rng = SeededRng(13)
    x = feature(rng, 1, 8, 6, 6)
    s1r = conv_random_same(rng, 3, 4, 1, 1)
    s1s = conv_random_same(rng, 4, 3, 3, 1)
    s2r = conv_random_same(rng, 4, 4, 1, 1)
    s2s = conv_random_same(rng, 2, 4, 3, 1)
    o1, d1 = csp_stage(x, s1r, s1s)
    o2, _ = csp_stage(o1, s2r, s2s)
    y = torch.cat([o2, d1], 1)
    out["csp2"] = {"seed": 13, "input": [1, 8, 6, 6], "mid1": 3, "deep1": 4, "mid2": 4, "deep2": 2,
                   "output_shape": list(y.shape), "output": flat(y)}

    here = os.path.dirname(os.path.abspath(__file__))
    path = os.path.join(here, "..", "fixtures", "nn_oracle.json")
    with open(path, "w") as f:
        json.dump(out, f, indent=1)
        f.write("\n")
    print("wrote", os.path.normpath(path))


if __name__ == "__main__":
    main()
