"""Graph attention variants on synthetic star-graph selection tasks.

Submodules: ``autodiff`` (reverse-mode engine), ``graphs``, ``dataset``,
``models``, ``gradients`` (analytic gradients and sign analysis),
``training``, ``metrics``, ``report`` and ``cli``.
"""

__version__ = "0.1.0"
