# Copyright 2026 The omnihybrid Authors
# SPDX-License-Identifier: Apache-2.0
"""Mixed-modality post-training with a variance-gated SFT/GRPO hybrid."""

from omnihybrid._core import *  # noqa: F401,F403
from omnihybrid._core import __version__  # noqa: F401
