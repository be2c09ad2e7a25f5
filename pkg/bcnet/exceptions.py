"""Exceptions raised by bcnet"""

# Copyright (C) 2026  bcnet developers
#
# This library is free software; you can redistribute it and/or
# modify it under the terms of the GNU Lesser General Public
# License as published by the Free Software Foundation; either
# version 2.1 of the License, or (at your option) any later version.
#
# This library is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the GNU
# Lesser General Public License for more details.
#
# You should have received a copy of the GNU Lesser General Public
# License along with this library; if not, write to the Free Software
# Foundation, Inc., 51 Franklin Street, Fifth Floor, Boston, MA  02110-1301
# USA

from __future__ import absolute_import

# process exit statuses used by the command line
EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_PARTIAL = 4


class BCError(Exception):
    """Base class of every error raised by bcnet"""
    faultCode = 3000
    exit_code = EXIT_INPUT


class BCInputError(BCError):
    """Raised when input data or a command line value is malformed"""
    faultCode = 3001

    def __init__(self, msg, row=None, column=None):
        if row is not None and column is not None:
            msg = "row %d, column %d: %s" % (row, column, msg)
        elif row is not None:
            msg = "row %d: %s" % (row, msg)
        super(BCInputError, self).__init__(msg)
        self.row = row
        self.column = column


class BCConfigError(BCError):
    """Raised when a configuration does not match its schema"""
    faultCode = 3002

    def __init__(self, msg, path=None):
        if path:
            msg = "%s: %s" % ('/'.join(str(part) for part in path), msg)
        super(BCConfigError, self).__init__(msg)
        self.path = list(path or [])


class DimensionError(BCError):
    """Raised when array dimensions do not agree"""
    faultCode = 3003


class InvalidSpinError(BCError):
    """Raised when a spin value is outside {-1, 0, +1}"""
    faultCode = 3004


class EnumerationCapError(BCError):
    """Raised when exhaustive enumeration is asked for too many nodes"""
    faultCode = 3005


class DataDegeneracyError(BCError):
    """Raised when pseudo-likelihood estimates diverge"""
    faultCode = 3101
    exit_code = EXIT_NUMERICAL

    def __init__(self, msg, node=None):
        if node is not None:
            msg = "node %d: %s" % (node, msg)
        super(DataDegeneracyError, self).__init__(msg)
        self.node = node


class SingularMatrixError(BCError):
    """Raised when a symmetric factorization fails"""
    faultCode = 3102
    exit_code = EXIT_NUMERICAL

    def __init__(self, msg, node=None):
        if node is not None:
            msg = "node %d: %s" % (node, msg)
        super(SingularMatrixError, self).__init__(msg)
        self.node = node


class MeanFieldError(BCError):
    """Raised when a mean-field quantity is undefined"""
    faultCode = 3103
    exit_code = EXIT_NUMERICAL
