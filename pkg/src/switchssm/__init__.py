"""Structured state-space models for switching time series.

Submodules: ``ssm`` (initializations, discretization, kernels), ``fftconv``
(causal FFT convolution and chunked state passing), ``changefinder``
(two-stage SDAR change-point scores), ``segmentation`` (segment grouping and
the masked-horizon readout), ``snlds`` (switching dynamics with an SSM
encoder), ``datagen``, ``metrics`` and ``cli``.
"""

__version__ = "0.1.0"
