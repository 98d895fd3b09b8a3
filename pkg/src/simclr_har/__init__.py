"""Contrastive self-supervised pretraining for tri-axial activity recognition.

Pure numpy: hand-written forward/backward kernels (``numcore``), signal
transformations (``augment``), windowing and MotionSense ingestion
(``data``), the 1-D conv encoder and heads (``model``), pretraining and
evaluation protocols (``train``), weighted F1 (``metrics``), the
transformation-pair grid (``sweep``) and the ``simclr-har`` command (``cli``).
"""

__version__ = "0.1.0"
