# Copyright 2026 The histpanel Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""County panels from scanned statistical tables.

Thin wrapper over the C++ core; see ``run`` for the full pipeline.
"""

try:
    from ._histpanel import *  # noqa: F401,F403
    from ._histpanel import __doc__ as _core_doc  # noqa: F401
except ImportError:  # in-tree build: module sits next to the build outputs
    from _histpanel import *  # noqa: F401,F403

__all__ = [
    "Error",
    "ConfigError",
    "StageOrderError",
    "ProviderUnavailable",
    "EmptyEvaluation",
    "SampleError",
    "normalize_cell",
    "validate_structure",
    "ensemble_cell",
    "evaluate",
    "fe_ols",
    "t_test_p_value",
    "run",
    "write_corpus",
]
