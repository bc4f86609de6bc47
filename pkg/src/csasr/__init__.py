"""Desk-scale lab for code-switching ASR trained on monolingual data only.

A hybrid CTC/attention encoder-decoder plus two constraints that pull the
per-language output-token embedding distributions together: a closed-form
divergence between Gaussian fits and a cosine distance between centroids.
Everything runs on a small numpy autodiff engine so gradients are cheap to
verify against finite differences.
"""

__version__ = "0.1.0"
