#!/usr/bin/env python3
# Copyright 2024 The bicausal authors.
# See LICENSE file for licensing details.
import logging
import os

logger = logging.getLogger("bicausal")
# diagnostics only: the level never influences computed values
logger.setLevel(os.getenv("BICAUSAL_LOGGING", "WARNING"))
