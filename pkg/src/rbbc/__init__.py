"""Simulator for a leaderless superblock BFT blockchain and a leader-based baseline."""
