"""Synthesis toolchain for spiking neural networks on crossbar neuromorphic hardware.

The pipeline turns a spike-annotated SNN workload into a running schedule on a
tile-based hardware model:

    workload -> decompose -> cluster -> sdfg -> maxplus analysis
             -> mapping exploration -> static order -> self-timed simulation

Each stage is a pure function over immutable values; the ``cli`` module chains
them and writes intermediate artifacts.
"""

__version__ = "0.1.0"
