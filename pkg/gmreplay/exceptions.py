# -*- coding: utf-8 -*-
# License: GPL-2.0+ <http://spdx.org/licenses/GPL-2.0+>
# See the LICENSE file for more details on Licensing

"""
Exceptions used with gmreplay
"""


class GmreplayException(Exception):
    """Common ancestor for all gmreplay exceptions"""

    pass


class GmreplayDataError(GmreplayException):
    """Exception for errors having to do with dataset files, splits and batching"""

    pass


class GmreplayConfigError(GmreplayException):
    """Exception for errors in experiment configuration files or overrides"""

    pass


class GmreplayModelError(GmreplayException):
    """Exception for numerical failures during training or sampling.

    :param message: human readable description
    :param batch_index: index of the mini-batch being processed, if known
    """

    def __init__(self, message, batch_index=None):
        self.batch_index = batch_index
        if batch_index is not None:
            message = "{} (batch {})".format(message, batch_index)
        super().__init__(message)


class GmreplayReplayError(GmreplayException):
    """Exception for a generator that cannot produce usable replay samples"""

    pass


class RunNotFoundError(GmreplayException):
    """Exception to raise if the queried run can't be found in the registry."""

    def __init__(self, run_id):
        self.value = "Could not find run {} in the registry, was it recorded?".format(run_id)
        super().__init__(self.value)

    def __str__(self):
        return repr(self.value)
