"""Utility modules: config, logging, threading."""
