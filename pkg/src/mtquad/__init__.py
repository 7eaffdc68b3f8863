"""Multi-task reinforcement learning for agile quadrotor control.

A self-contained simulator plus training and evaluation stack for learning
a single policy that races through gates, stabilizes from high speed, and
tracks random velocity profiles with a shared dynamics encoder, per-task
encoders, and one critic per task.
"""

__version__ = "0.1.0"
