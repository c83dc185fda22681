"""Learned Gaussian overbounds."""
