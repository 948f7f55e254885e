"""
Segmenting a switching dynamical system
=======================================

The rotation SLDS has two modes that turn the latent state in opposite
directions.  Given the true model, exact forward-backward over the modes
recovers them almost perfectly.  Starting from a data-driven initialization
and a few epochs of ELBO training, a fitted model gets most of the way there.
"""

import numpy as np

from switchssm.metrics import segmentation_accuracy
from switchssm.snlds import (FitConfig, elbo, fit, generate, init_from_data, pinv_encoder,
                             rotation_model, segment)

model = rotation_model()
x, z, s = generate(model, 400, seed=50)
print(f"{len(x)} steps, {int(np.sum(s[1:] != s[:-1]))} mode switches")

labels, gamma = segment(model, pinv_encoder(model), x)
print(f"true model: accuracy {segmentation_accuracy(labels, s):.3f}")

train = [generate(model, 200, seed=k)[0] for k in range(3)]
m0, e0 = init_from_data(train, 2, 2)
print(f"initialization: accuracy {segmentation_accuracy(segment(m0, e0, x)[0], s):.3f}")

res = fit(m0, e0, train, FitConfig(epochs=20))
for row in res.trace[::5] + res.trace[-1:]:
    print(f"  epoch {row['epoch']:2d}  eta {row['eta']:6.1f}  elbo {row['elbo']:10.2f}")
labels_fit, gamma_fit = segment(res.model, res.encoder, x)
print(f"fitted model: accuracy {segmentation_accuracy(labels_fit, s):.3f}")

rep = elbo(res.model, res.encoder, x, num_samples=200, seed=0)
print(f"test ELBO {rep.elbo:.2f} +- {rep.stderr:.2f}")

# posterior mode probabilities around the first switch
t = int(np.argmax(s[1:] != s[:-1])) + 1
print("gamma around the first switch:\n", np.round(gamma_fit[t - 3:t + 4], 3))
