"""memsim: a simulator for memristive in-memory computing.

Analog device models, differential crossbar arrays, and the algorithm
families that run on top of them: analog matrix-vector multiplication,
compressed-sensing recovery, mixed-precision training, spiking networks,
probabilistic spiking networks, and reservoir computing.
"""

__version__ = "0.1.0"
