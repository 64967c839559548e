"""Simulation, compilation and exact auditing of multi-server DP protocols."""
