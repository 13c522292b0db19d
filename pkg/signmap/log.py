"""Logging configuration."""
import logging
import os

# Name the logger after the package.
logger = logging.getLogger(__package__)

def setup_logging():
    """Root handler for the command line; SIGNMAP_DEBUG turns on debug"""
    logging.basicConfig(
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
            level=logging.DEBUG if os.getenv("SIGNMAP_DEBUG") else logging.INFO)
