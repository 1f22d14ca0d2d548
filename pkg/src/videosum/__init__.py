"""videosum: generative video summarization as a numpy library.

Subpackage map:

- :mod:`videosum.autodiff` -- minimal reverse-mode AD tensor kernel
- :mod:`videosum.data` -- dataset model, JSON serialization, synthetic generator
- :mod:`videosum.diffusion` -- noise schedules, forward/reverse processes, guidance
- :mod:`videosum.denoiser` -- conditional score denoiser and its training loop
- :mod:`videosum.segmentation` -- kernel temporal segmentation and clip values
- :mod:`videosum.knapsack` -- exact 0/1 knapsack, optima enumeration, studies
- :mod:`videosum.metrics` -- rank correlation, MAP/F1, sensitivity certificates
- :mod:`videosum.cli` -- thin command-line front end over the library
"""

__version__ = "0.1.0"
