"""djpegdet: single vs. double JPEG compression detection toolkit.

Parses quantized DCT coefficients and quantization matrices straight from
baseline JPEG bitstreams, models single/double quantization analytically,
and classifies per-frequency coefficient histograms paired with their
q-factors using a from-scratch residual BiLSTM network.
"""

__version__ = "0.1.0"
