#!/usr/bin/env python3
"""Regenerates the CLI golden fixture with exact arithmetic.

Writes `textured_48x32.pgm` and one `*.golden.csv` per feature setting. The
feature values are computed independently of the Rust code: means and powers
as exact rationals, roots and logarithms in 60-digit decimals.

    python3 make_golden.py          # from this directory
"""

from decimal import Decimal, getcontext
from fractions import Fraction
from pathlib import Path

getcontext().prec = 60
HERE = Path(__file__).resolve().parent
W, H = 48, 32


def levels():
    # small LCG so the fixture is reproducible without numpy
    state = 12345
    px = []
    for y in range(H):
        for x in range(W):
            state = (1103515245 * state + 12345) % (1 << 31)
            noise = (state >> 16) % 41
            base = (3 * x + 5 * y + (x * y) % 17) % 200
            px.append(min(255, base + noise))
    # keep every 2x2 block sum off 2 (mod 4): such block means sit exactly on
    # a histogram rounding boundary, where float summation order decides
    for by in range(H // 2):
        for bx in range(W // 2):
            idx = [(2 * by + dy) * W + 2 * bx + dx for dy in (0, 1) for dx in (0, 1)]
            if sum(px[i] for i in idx) % 4 == 2:
                i = idx[0]
                px[i] = px[i] + 1 if px[i] < 255 else px[i] - 1
    return px


def downsample(vals, w, h, m):
    ow, oh = w // m, h // m
    out = []
    for by in range(oh):
        for bx in range(ow):
            s = sum(vals[(by * m + dy) * w + bx * m + dx] for dy in range(m) for dx in range(m))
            out.append(s / (m * m))
    return out


def dec(fr):
    return Decimal(fr.numerator) / Decimal(fr.denominator)


def deviation(vals, rho):
    n = len(vals)
    mean = sum(vals) / n
    acc = sum(abs(v - mean) ** rho for v in vals) / n
    if acc == 0:
        return Decimal(0)
    return dec(acc) ** (Decimal(1) / rho)


def mdm(vals, rho, q):
    return deviation([v ** q for v in vals], rho) ** (Decimal(1) / 4)


def entropy(vals):
    hist = {}
    for v in vals:
        t = v * 255
        level = int(t + Fraction(1, 2))  # round half up; ties excluded above
        hist[level] = hist.get(level, 0) + 1
    n = len(vals)
    ln2 = Decimal(2).ln()
    h = Decimal(0)
    for c in hist.values():
        p = Decimal(c) / n
        h -= p * p.ln() / ln2
    return h


def features(px, rho, q, down):
    vals = [Fraction(l, 255) for l in px]
    if down:
        vals = downsample(vals, W, H, 2)
    comp = [1 - v for v in vals]
    return mdm(vals, rho, q), mdm(comp, rho, q), entropy(vals)


def main():
    px = levels()
    header = f"P5\n{W} {H}\n255\n".encode()
    (HERE / "textured_48x32.pgm").write_bytes(header + bytes(px))
    cases = {
        "default": (64, 8, True),
        "no_downsample": (64, 8, False),
        "rho16_q2": (16, 2, True),
    }
    for name, (rho, q, down) in cases.items():
        d, dc, e = features(px, rho, q, down)
        text = f"mdm_d,{d:.25e}\nmdm_dc,{dc:.25e}\nentropy,{e:.25e}\n"
        (HERE / f"textured_48x32.{name}.golden.csv").write_text(text)


if __name__ == "__main__":
    main()
