#!/usr/bin/env python3
# Copyright 2024 The bicausal authors.
# See LICENSE file for licensing details.
import sys

from bicausal.cli import main

sys.exit(main())
