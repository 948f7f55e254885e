"""
Change points with ChangeFinder
===============================

Two SDAR passes turn a series into change scores: the first scores each point
by how surprising it is under an online autoregressive model, the second runs
the same model on the smoothed first-stage scores.  A peak above the threshold
is a change point.
"""

import numpy as np

from switchssm import changefinder as cf

rng = np.random.default_rng(1)
x = rng.standard_normal(5000)
x[2500:] += 5.0

scores = cf.change_scores(x, T=25)
cps = cf.extract_change_points(scores)
thr = cf.threshold_value(scores.change)
print(f"mean shift of 5 sigma at t=2500: argmax {int(np.argmax(scores.change))}, "
      f"change points {cps}, threshold {thr:.2f}")

# each stage, around the shift
for name in ("outlier", "smoothed", "change"):
    s = getattr(scores, name)
    print(f"{name:>9}: before {s[2000:2400].mean():7.3f}  at shift {s[2500:2550].max():7.3f}")

# a variance change is caught the same way
y = rng.standard_normal(5000)
y[3000:] *= 4.0
print("variance x4 at t=3000:", cf.extract_change_points(cf.change_scores(y)))

# and pure noise usually gives nothing
quiet = sum(not cf.extract_change_points(cf.change_scores(rng.standard_normal(5000)))
            for _ in range(10))
print(f"no alarm on {quiet}/10 i.i.d. series")

# smaller discount = longer memory; the default for both stages is 0.005
fast = cf.SdarConfig(order=2, discount=0.02)
sc_fast = cf.change_scores(x, stage1=fast, stage2=fast)
print("discount 0.02:", cf.extract_change_points(sc_fast))
