"""Quadruped locomotion on elastic tiled terrain.

Modules, bottom-up: ``geom`` (frames, Bezier curves), ``robot`` (morphology, FK/IK),
``terrain`` (spring-loaded tiles), ``sim`` (articulated dynamics with penalty contact),
``gait`` (27-D action to per-tick joint targets), ``env`` (observation, rewards,
termination), ``learn`` (PPO from scratch) and ``harness`` (config, metrics, CLI).
"""
__version__ = "0.1.0"
