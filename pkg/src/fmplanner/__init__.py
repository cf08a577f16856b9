"""Flow-matching trajectory planner, desk scale: scene encoding, segment
tokenization, guided generation, training loop, and a closed-loop synthetic
driving harness."""

__version__ = "0.1.0"
